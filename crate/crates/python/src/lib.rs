//! Python bindings for `panelspec`.
//!
//! Matrices cross the boundary as lists of rows.

use ::panelspec as core;
use core::{ColumnSchema, ContaminationConfig, DgpConfig, Raf, WleConfig};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn wle_config(kappa: f64, max_iter: usize, tol: f64, raf: &str) -> PyResult<WleConfig> {
    let raf = match raf {
        "hellinger" => Raf::Hellinger,
        "identity" => Raf::Identity,
        other => return Err(PyValueError::new_err(format!("unknown raf '{other}'"))),
    };
    Ok(WleConfig {
        kappa,
        max_iterations: max_iter,
        tolerance: tol,
        raf,
        ..WleConfig::default()
    })
}

/// A balanced panel of `n_units x n_periods` observations.
#[pyclass(name = "PanelDataset", frozen)]
struct PyPanel(core::PanelDataset);

#[pymethods]
impl PyPanel {
    /// Reads a long-format CSV with one row per (unit, time) pair.
    #[staticmethod]
    fn load(path: &str, unit: &str, time: &str, y: &str, x: Vec<String>) -> PyResult<Self> {
        let schema = ColumnSchema::new(unit, time, y, x);
        core::load_long_csv(path, &schema).map(Self).map_err(to_py_err)
    }

    /// Builds a panel from unit-major stacked data (`row = i * T + t`).
    #[staticmethod]
    fn from_stacked(n_units: usize, n_periods: usize, y: Vec<f64>, x: Vec<Vec<f64>>) -> PyResult<Self> {
        let k = x.first().map_or(0, Vec::len);
        if x.iter().any(|r| r.len() != k) {
            return Err(PyValueError::new_err("x rows must have equal length"));
        }
        let flat: Vec<f64> = x.into_iter().flatten().collect();
        let xm = DMatrix::from_row_slice(flat.len() / k.max(1), k, &flat);
        core::PanelDataset::from_stacked_unlabeled(n_units, n_periods, DVector::from_vec(y), xm)
            .map(Self)
            .map_err(to_py_err)
    }

    #[getter]
    fn n_units(&self) -> usize {
        self.0.n_units()
    }

    #[getter]
    fn n_periods(&self) -> usize {
        self.0.n_periods()
    }

    #[getter]
    fn regressors(&self) -> Vec<String> {
        self.0.regressor_names().to_vec()
    }

    #[getter]
    fn unit_ids(&self) -> Vec<String> {
        self.0.unit_ids().to_vec()
    }

    #[getter]
    fn time_ids(&self) -> Vec<String> {
        self.0.time_ids().to_vec()
    }

    /// Stacked response and regressor rows.
    fn to_stacked(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (y, x) = self.0.to_stacked();
        (y.iter().copied().collect(), rows(&x))
    }

    fn __repr__(&self) -> String {
        format!(
            "PanelDataset(n_units={}, n_periods={}, regressors={:?})",
            self.0.n_units(),
            self.0.n_periods(),
            self.0.regressor_names()
        )
    }
}

#[pyclass(name = "EstimateResult", frozen)]
struct PyEstimate(core::EstimateResult);

#[pymethods]
impl PyEstimate {
    #[getter]
    fn method(&self) -> String {
        self.0.method.to_string()
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.0.beta.iter().copied().collect()
    }

    #[getter]
    fn std_errors(&self) -> Vec<f64> {
        self.0.std_errors().iter().copied().collect()
    }

    #[getter]
    fn cov_beta(&self) -> Vec<Vec<f64>> {
        rows(&self.0.cov_beta)
    }

    #[getter]
    fn sigma2_eps(&self) -> f64 {
        self.0.sigma2_eps
    }

    #[getter]
    fn sigma2_alpha(&self) -> f64 {
        self.0.sigma2_alpha
    }

    #[getter]
    fn theta(&self) -> Option<f64> {
        self.0.variance_components.as_ref().map(|v| v.theta)
    }

    #[getter]
    fn rss(&self) -> f64 {
        self.0.rss
    }

    #[getter]
    fn r_squared(&self) -> f64 {
        self.0.r_squared
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    /// `N x T` weights for weighted fits, otherwise `None`.
    #[getter]
    fn weights(&self) -> Option<Vec<Vec<f64>>> {
        self.0.weights.as_ref().map(rows)
    }

    #[getter]
    fn residuals(&self) -> Vec<Vec<f64>> {
        rows(&self.0.residuals)
    }

    fn __repr__(&self) -> String {
        format!("EstimateResult(method='{}', beta={:?})", self.0.method, self.beta())
    }
}

#[pyclass(name = "TestResult", frozen)]
struct PyTest(core::TestResult);

#[pymethods]
impl PyTest {
    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind {
            core::TestKind::Hausman => "hausman",
            core::TestKind::WeightedHausman => "weighted_hausman",
        }
    }

    #[getter]
    fn statistic(&self) -> f64 {
        self.0.statistic
    }

    #[getter]
    fn df(&self) -> usize {
        self.0.df
    }

    #[getter]
    fn p_value(&self) -> f64 {
        self.0.p_value
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.0.q.iter().copied().collect()
    }

    #[getter]
    fn m_matrix(&self) -> Vec<Vec<f64>> {
        rows(&self.0.m_matrix)
    }

    #[getter]
    fn repaired(&self) -> bool {
        self.0.repaired
    }

    fn __repr__(&self) -> String {
        format!(
            "TestResult(kind='{}', statistic={}, df={}, p_value={})",
            self.kind(),
            self.0.statistic,
            self.0.df,
            self.0.p_value
        )
    }
}

/// Fits `method` (`pooled`, `fe`, `re` or `wfe`) to `data`.
#[pyfunction]
#[pyo3(signature = (data, method, kappa=0.5, max_iter=50, tol=1e-6, raf="hellinger", theta=None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    data: &PyPanel,
    method: &str,
    kappa: f64,
    max_iter: usize,
    tol: f64,
    raf: &str,
    theta: Option<f64>,
) -> PyResult<PyEstimate> {
    let ds = &data.0;
    let res = match method {
        "pooled" => py.detach(|| core::fit_pooled_ols(ds)),
        "fe" => py.detach(|| core::fit_fixed_effects(ds)),
        "re" => py.detach(|| core::fit_random_effects_with(ds, theta)),
        "wfe" => {
            let cfg = wle_config(kappa, max_iter, tol, raf)?;
            py.detach(|| core::fit_weighted_fixed_effects(ds, &cfg))
        }
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    };
    res.map(PyEstimate).map_err(to_py_err)
}

/// Classical test comparing a fixed-effects fit with a random-effects fit.
#[pyfunction]
fn hausman_test(fe: &PyEstimate, re: &PyEstimate) -> PyResult<PyTest> {
    core::hausman_test(&fe.0, &re.0).map(PyTest).map_err(to_py_err)
}

/// Weighted test comparing a weighted fixed-effects fit with a random-effects fit.
#[pyfunction]
fn weighted_hausman_test(wfe: &PyEstimate, re: &PyEstimate) -> PyResult<PyTest> {
    core::weighted_hausman_test(&wfe.0, &re.0).map(PyTest).map_err(to_py_err)
}

#[pyfunction]
fn chi_square_sf(x: f64, df: usize) -> PyResult<f64> {
    core::chi_square_sf(x, df).map_err(to_py_err)
}

fn design(
    hypothesis: &str,
    n: usize,
    t: usize,
    seed: u64,
    contamination: &str,
    m: usize,
) -> PyResult<(DgpConfig, ContaminationConfig)> {
    let dgp = match hypothesis {
        "null" => DgpConfig::null(n, t, seed),
        "alt" => DgpConfig::alternative(n, t, seed),
        other => return Err(PyValueError::new_err(format!("unknown hypothesis '{other}'"))),
    };
    let cc = match contamination {
        "none" => ContaminationConfig::none(),
        "random" => ContaminationConfig::random(m),
        "concentrated" => ContaminationConfig::concentrated(m),
        other => return Err(PyValueError::new_err(format!("unknown contamination '{other}'"))),
    };
    Ok((dgp, cc))
}

/// Draws one simulated panel.
#[pyfunction]
#[pyo3(signature = (n, t, hypothesis="null", contamination="none", m=0, seed=1))]
fn generate(n: usize, t: usize, hypothesis: &str, contamination: &str, m: usize, seed: u64) -> PyResult<PyPanel> {
    let (dgp, cc) = design(hypothesis, n, t, seed, contamination, m)?;
    let mut stream = core::RngStream::substream(seed, 0);
    let clean = core::generate_dataset(&dgp, &mut stream).map_err(to_py_err)?;
    core::contaminate(&clean, &cc, &mut stream).map(PyPanel).map_err(to_py_err)
}

/// Runs a Monte Carlo study and returns rejection rates keyed by test.
#[pyfunction]
#[pyo3(signature = (n, t, s, gammas, hypothesis="null", contamination="none", m=0, seed=1, kappa=0.5))]
#[allow(clippy::too_many_arguments)]
fn run_study<'py>(
    py: Python<'py>,
    n: usize,
    t: usize,
    s: usize,
    gammas: Vec<f64>,
    hypothesis: &str,
    contamination: &str,
    m: usize,
    seed: u64,
    kappa: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (dgp, cc) = design(hypothesis, n, t, seed, contamination, m)?;
    let cfg = WleConfig::with_kappa(kappa);
    let res = py
        .detach(|| core::run_study(&dgp, &cc, s, &gammas, &cfg))
        .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("gamma_grid", res.gamma_grid.clone())?;
    out.set_item("s_replications", res.s_replications)?;
    out.set_item("failures", res.failures)?;
    for series in &res.tests {
        let key = match series.test {
            core::TestKind::Hausman => "hausman",
            core::TestKind::WeightedHausman => "weighted_hausman",
        };
        let d = PyDict::new(py);
        d.set_item("rejection_rates", series.rejection_rates.clone())?;
        d.set_item("statistics", series.statistics.clone())?;
        d.set_item("p_values", series.p_values.clone())?;
        out.set_item(key, d)?;
    }
    Ok(out)
}

#[pymodule(name = "panelspec")]
fn panelspec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyTest>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(hausman_test, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_hausman_test, m)?)?;
    m.add_function(wrap_pyfunction!(chi_square_sf, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
