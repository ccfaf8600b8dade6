//! Weighted likelihood fixed-effects estimation.
//!
//! Each observation's within residual is compared against the assumed normal
//! error model through a Pearson residual
//!
//! ```text
//! delta_i = f*(r_i) / m*(r_i) - 1
//! ```
//!
//! where `f*` is a normal-kernel density estimate of the residuals and `m*`
//! the normal model smoothed with the same kernel. A residual adjustment
//! function turns `delta` into a weight in `[0, 1]`, and the slopes are
//! re-estimated by weighted least squares on the demeaned data until they
//! stop moving.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{residual_matrix, tss_about_mean};
use crate::linalg::{least_squares, weighted_least_squares};
use crate::panel::{EstimateResult, Method, PanelDataset};
use crate::transforms::within_transform;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Residual adjustment function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Raf {
    /// `A(delta) = 2 (sqrt(delta + 1) - 1)`.
    #[default]
    Hellinger,
    /// `A(delta) = delta`: every weight is one and the fit reduces to the
    /// ordinary within estimator.
    Identity,
}

impl Raf {
    pub fn adjust(self, delta: f64) -> Result<f64> {
        match self {
            Raf::Hellinger => raf_hellinger(delta),
            Raf::Identity => {
                check_delta(delta)?;
                Ok(delta)
            }
        }
    }
}

/// Granularity at which weights are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightLevel {
    /// One weight per (unit, period) cell.
    #[default]
    Observation,
    /// Cell weights averaged within each unit.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WleConfig {
    /// Bandwidth constant: `h = kappa * sigma_nu`.
    pub kappa: f64,
    pub max_iterations: usize,
    /// Relative sup-norm change in the slopes that counts as converged.
    pub tolerance: f64,
    pub raf: Raf,
    pub level: WeightLevel,
}

impl Default for WleConfig {
    fn default() -> Self {
        Self {
            kappa: 0.5,
            max_iterations: 50,
            tolerance: 1e-6,
            raf: Raf::Hellinger,
            level: WeightLevel::Observation,
        }
    }
}

impl WleConfig {
    pub fn with_kappa(kappa: f64) -> Self {
        Self {
            kappa,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Residuals, scale, Pearson residuals and weights from one reweighting step.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub residuals: Vec<f64>,
    pub sigma_nu: f64,
    pub pearson: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Normal-kernel density estimate of `points` evaluated at each of `eval`.
pub fn kernel_density_at(points: &[f64], eval: &[f64], h: f64) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::EmptySample(0));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::NonpositiveBandwidth(h));
    }
    let inv_h = 1.0 / h;
    let norm = INV_SQRT_2PI * inv_h / points.len() as f64;
    Ok(eval
        .iter()
        .map(|&e| {
            let s: f64 = points
                .iter()
                .map(|&r| {
                    let z = (e - r) * inv_h;
                    (-0.5 * z * z).exp()
                })
                .sum();
            s * norm
        })
        .collect())
}

/// `N(0, sigma_nu^2)` convolved with a normal kernel of bandwidth `h`, which
/// is the `N(0, sigma_nu^2 + h^2)` density. `h = 0` gives the unsmoothed model.
pub fn smoothed_model_density(eval: &[f64], sigma_nu: f64, h: f64) -> Result<Vec<f64>> {
    if !(sigma_nu > 0.0 && sigma_nu.is_finite()) {
        return Err(Error::NonpositiveScale(sigma_nu));
    }
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::NonpositiveBandwidth(h));
    }
    let var = sigma_nu * sigma_nu + h * h;
    let norm = 1.0 / (2.0 * PI * var).sqrt();
    Ok(eval.iter().map(|&e| norm * (-0.5 * e * e / var).exp()).collect())
}

/// Pearson residuals of `residuals` against the smoothed `N(0, sigma_nu^2)`
/// model with bandwidth `kappa * sigma_nu`.
///
/// May return `+inf` where the model density underflows.
pub fn pearson_residuals(residuals: &[f64], sigma_nu: f64, cfg: &WleConfig) -> Result<Vec<f64>> {
    if residuals.len() < 2 {
        return Err(Error::EmptySample(residuals.len()));
    }
    let h = cfg.kappa * sigma_nu;
    let model = smoothed_model_density(residuals, sigma_nu, h)?;
    let data = kernel_density_at(residuals, residuals, h)?;
    Ok(data
        .iter()
        .zip(&model)
        .map(|(f, m)| if *m > 0.0 { f / m - 1.0 } else { f64::INFINITY })
        .collect())
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > -1.0 {
        Ok(())
    } else {
        Err(Error::DeltaOutOfRange(delta))
    }
}

/// Hellinger residual adjustment function `2 (sqrt(delta + 1) - 1)`.
pub fn raf_hellinger(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(2.0 * ((delta + 1.0).sqrt() - 1.0))
}

/// `min{1, [A(delta) + 1]^+ / (delta + 1)}`.
pub fn weight_function(delta: f64, raf: Raf) -> Result<f64> {
    check_delta(delta)?;
    if delta.is_infinite() {
        // limit of the ratio as delta grows without bound
        return Ok(match raf {
            Raf::Hellinger => 0.0,
            Raf::Identity => 1.0,
        });
    }
    let a = raf.adjust(delta)?;
    Ok(((a + 1.0).max(0.0) / (delta + 1.0)).min(1.0))
}

/// Pearson residuals and weights for the current residuals.
pub fn weight_state(
    residuals: &[f64],
    sigma_nu: f64,
    n_periods: usize,
    cfg: &WleConfig,
) -> Result<WeightState> {
    let pearson = pearson_residuals(residuals, sigma_nu, cfg)?;
    let mut weights = pearson
        .iter()
        .map(|&d| weight_function(d, cfg.raf))
        .collect::<Result<Vec<f64>>>()?;
    if cfg.level == WeightLevel::Unit && n_periods > 0 {
        for unit in weights.chunks_mut(n_periods) {
            let mean = unit.iter().sum::<f64>() / unit.len() as f64;
            unit.iter_mut().for_each(|w| *w = mean);
        }
    }
    Ok(WeightState {
        residuals: residuals.to_vec(),
        sigma_nu,
        pearson,
        weights,
    })
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Weighted likelihood fixed-effects estimator.
///
/// Starts from the within estimator and alternates weight updates with
/// weighted least squares on the demeaned data. The residual scale is
/// updated as
///
/// ```text
/// sigma_nu^2 = sum w r^2 / (sum w - K sum w / n)
/// ```
///
/// and the reported `sigma2_eps`, which scales the covariance, rescales the
/// same weighted sum by the within degrees of freedom:
/// `sum w r^2 / ((sum w / n) (N(T-1) - K))`. With unit weights both the
/// slopes and the covariance coincide with [`crate::fit_fixed_effects`].
///
/// Hitting `max_iterations` is not an error; the result reports
/// `converged = false`.
pub fn fit_weighted_fixed_effects(ds: &PanelDataset, cfg: &WleConfig) -> Result<EstimateResult> {
    cfg.validate()?;
    let (n_units, t, k) = (ds.n_units(), ds.n_periods(), ds.n_regressors());
    let n = n_units * t;
    let within_dof = (n_units * (t - 1) - k) as f64;
    let w = within_transform(ds);

    let start = least_squares(&w.x, &w.y)?;
    let mut beta = start.beta;
    let mut residuals = start.residuals;
    let mut gram_inverse = start.gram_inverse;
    let mut weights = vec![1.0; n];
    let mut weighted_rss = residuals.norm_squared();
    let mut total = n as f64;
    let mut sigma2_nu = weighted_rss / (n - k) as f64;
    let mut converged = false;
    let mut iterations = 0;

    // a perfect fit leaves nothing to reweight
    if sigma2_nu > 0.0 {
        while iterations < cfg.max_iterations {
            iterations += 1;
            let state = weight_state(residuals.as_slice(), sigma2_nu.sqrt(), t, cfg)?;
            let sum_w: f64 = state.weights.iter().sum();
            if !(sum_w > k as f64) {
                return Err(Error::DegenerateWeights { total: sum_w, k });
            }
            let fit = weighted_least_squares(&w.x, &w.y, &state.weights)?;
            let change = sup_norm(&(&fit.beta - &beta)) / sup_norm(&beta).max(1.0);

            beta = fit.beta;
            residuals = fit.residuals;
            gram_inverse = fit.gram_inverse;
            weights = state.weights;
            total = sum_w;
            weighted_rss = weights
                .iter()
                .zip(residuals.iter())
                .map(|(w, r)| w * r * r)
                .sum();
            sigma2_nu = weighted_rss / (total - k as f64 * total / n as f64);

            if change < cfg.tolerance {
                converged = true;
                break;
            }
            if !(sigma2_nu > 0.0) {
                break;
            }
        }
    } else {
        converged = true;
    }

    let sigma2_eps = weighted_rss / (total / n as f64 * within_dof);
    let rss = residuals.norm_squared();
    let tss = tss_about_mean(&w.y);
    Ok(EstimateResult {
        method: Method::WeightedFixedEffects,
        cov_beta: &gram_inverse * sigma2_eps,
        beta,
        sigma2_eps,
        sigma2_alpha: 0.0,
        residuals: residual_matrix(&residuals, n_units, t),
        rss,
        tss,
        r_squared: 1.0 - rss / tss,
        weights: Some(DMatrix::from_fn(n_units, t, |i, s| weights[i * t + s])),
        variance_components: None,
        converged,
        iterations,
    })
}

/// Weighted score `sum_it w_it x''_it r_it` of a weighted fit, evaluated with
/// its final weights and residuals. Zero (up to rounding) at a fixed point.
pub fn wlee_score(ds: &PanelDataset, fit: &EstimateResult) -> DVector<f64> {
    let w = within_transform(ds);
    let t = ds.n_periods();
    let k = ds.n_regressors();
    let mut score = DVector::zeros(k);
    for row in 0..ds.n_obs() {
        let (i, s) = (row / t, row % t);
        let weight = fit.weights.as_ref().map_or(1.0, |m| m[(i, s)]);
        let r = fit.residuals[(i, s)];
        for c in 0..k {
            score[c] += weight * w.x[(row, c)] * r;
        }
    }
    score
}
