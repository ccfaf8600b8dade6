//! Specification testing for balanced linear panel-data models.
//!
//! The crate provides pooled OLS, fixed-effects (within) and feasible-GLS
//! random-effects estimators, a weighted likelihood fixed-effects estimator
//! that downweights observations the normal error model does not explain,
//! the Hausman test and its weighted counterpart, and a Monte Carlo harness
//! for studying their size and power under vertical outliers.
//!
//! ```no_run
//! use panelspec::*;
//!
//! let schema = ColumnSchema::new("country", "year", "gdp", ["capital", "labour"]);
//! let ds = load_long_csv("data.csv", &schema)?;
//! let fe = fit_fixed_effects(&ds)?;
//! let re = fit_random_effects(&ds)?;
//! let wfe = fit_weighted_fixed_effects(&ds, &WleConfig::default())?;
//! println!("m_H  = {:.4}", hausman_test(&fe, &re)?.statistic);
//! println!("m_Hw = {:.4}", weighted_hausman_test(&wfe, &re)?.statistic);
//! # Ok::<(), panelspec::Error>(())
//! ```

pub mod cli;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod linalg;
pub mod mcstudy;
pub mod panel;
pub mod transforms;
pub mod wle;

pub use error::{Error, Result};
pub use estimators::{
    estimate_variance_components, fit_fixed_effects, fit_pooled_ols, fit_random_effects,
    fit_random_effects_with, VarianceComponents,
};
pub use inference::{
    chi_square_sf, fit_statistics, hausman_test, weighted_hausman_test, TestKind, TestResult,
};
pub use mcstudy::{
    contaminate, contaminate_concentrated, contaminate_random, generate_alternative,
    generate_dataset, generate_null, run_study, Contamination, ContaminationConfig, DgpConfig,
    Hypothesis, RngStream, StudyResult, StudyScenario,
};
pub use panel::{load_long_csv, read_long_csv, ColumnSchema, EstimateResult, Method, PanelDataset};
pub use transforms::{compute_theta, quasi_demean, within_transform, TransformKind, TransformedPanel};
pub use wle::{
    fit_weighted_fixed_effects, kernel_density_at, pearson_residuals, raf_hellinger,
    smoothed_model_density, weight_function, Raf, WeightLevel, WeightState, WleConfig,
};
