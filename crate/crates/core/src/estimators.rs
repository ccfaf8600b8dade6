//! Pooled OLS, within (fixed effects) and feasible-GLS random effects
//! estimators, plus the within/between variance-components estimator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, LeastSquaresFit};
use crate::panel::{EstimateResult, Method, PanelDataset};
use crate::transforms::{compute_theta, quasi_demean, unit_means, within_transform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma2_eps: f64,
    /// Clamped at zero.
    pub sigma2_alpha: f64,
    pub theta: f64,
}

pub(crate) fn tss_about_mean(y: &DVector<f64>) -> f64 {
    let mean = y.mean();
    y.iter().map(|v| (v - mean) * (v - mean)).sum()
}

pub(crate) fn residual_matrix(r: &DVector<f64>, n: usize, t: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, t, |i, s| r[i * t + s])
}

fn build_result(
    method: Method,
    fit: LeastSquaresFit,
    y: &DVector<f64>,
    sigma2_eps: f64,
    n: usize,
    t: usize,
) -> EstimateResult {
    let rss = fit.residuals.norm_squared();
    let tss = tss_about_mean(y);
    EstimateResult {
        method,
        cov_beta: &fit.gram_inverse * sigma2_eps,
        beta: fit.beta,
        sigma2_eps,
        sigma2_alpha: 0.0,
        residuals: residual_matrix(&fit.residuals, n, t),
        rss,
        tss,
        r_squared: 1.0 - rss / tss,
        weights: None,
        variance_components: None,
        converged: true,
        iterations: 0,
    }
}

/// OLS on the stacked data, ignoring the panel structure.
pub fn fit_pooled_ols(ds: &PanelDataset) -> Result<EstimateResult> {
    let (n, t, k) = (ds.n_units(), ds.n_periods(), ds.n_regressors());
    let (y, x) = (ds.y_stacked(), ds.x_stacked());
    let fit = least_squares(x, y)?;
    let dof = n * t - k;
    let sigma2 = fit.residuals.norm_squared() / dof as f64;
    Ok(build_result(Method::PooledOls, fit, y, sigma2, n, t))
}

/// OLS on within-transformed data. Any regressor that is constant within
/// every unit makes the design rank deficient.
pub fn fit_fixed_effects(ds: &PanelDataset) -> Result<EstimateResult> {
    let (n, t, k) = (ds.n_units(), ds.n_periods(), ds.n_regressors());
    let w = within_transform(ds);
    let fit = least_squares(&w.x, &w.y)?;
    let sigma2 = fit.residuals.norm_squared() / (n * (t - 1) - k) as f64;
    Ok(build_result(Method::FixedEffects, fit, &w.y, sigma2, n, t))
}

/// Within/between moment estimator of the error components.
///
/// `sigma2_eps` comes from the within residuals with `N(T-1) - K` degrees of
/// freedom; `sigma2_alpha` from a between regression of unit means on an
/// intercept and regressor means, minus `sigma2_eps / T`, clamped at zero.
pub fn estimate_variance_components(ds: &PanelDataset) -> Result<VarianceComponents> {
    let (n, t, k) = (ds.n_units(), ds.n_periods(), ds.n_regressors());
    if n * (t - 1) <= k {
        return Err(Error::InsufficientDegreesOfFreedom(format!(
            "within regression needs N(T-1) > K, got {} <= {k}",
            n * (t - 1)
        )));
    }
    if n <= k + 1 {
        return Err(Error::InsufficientDegreesOfFreedom(format!(
            "between regression needs N > K + 1, got N={n}, K={k}"
        )));
    }
    let w = within_transform(ds);
    let within = least_squares(&w.x, &w.y)?;
    let sigma2_eps = within.residuals.norm_squared() / (n * (t - 1) - k) as f64;

    let (ybar, xbar) = unit_means(ds);
    let design = DMatrix::from_fn(n, k + 1, |i, c| if c == 0 { 1.0 } else { xbar[(i, c - 1)] });
    let between = least_squares(&design, &ybar)?;
    let between_var = between.residuals.norm_squared() / (n - k - 1) as f64;
    let sigma2_alpha = (between_var - sigma2_eps / t as f64).max(0.0);
    let theta = compute_theta(sigma2_eps, sigma2_alpha, t)?;
    Ok(VarianceComponents {
        sigma2_eps,
        sigma2_alpha,
        theta,
    })
}

/// Feasible GLS random-effects estimator: OLS on data quasi-demeaned with
/// the estimated `theta`.
pub fn fit_random_effects(ds: &PanelDataset) -> Result<EstimateResult> {
    fit_random_effects_with(ds, None)
}

/// Random effects with an optional fixed `theta` in place of the estimated
/// one. The variance components are still estimated and reported.
pub fn fit_random_effects_with(ds: &PanelDataset, theta: Option<f64>) -> Result<EstimateResult> {
    let (n, t) = (ds.n_units(), ds.n_periods());
    let mut vc = estimate_variance_components(ds)?;
    if let Some(theta) = theta {
        vc.theta = theta;
    }
    let q = quasi_demean(ds, vc.theta)?;
    let fit = least_squares(&q.x, &q.y)?;
    let mut res = build_result(Method::RandomEffects, fit, &q.y, vc.sigma2_eps, n, t);
    res.sigma2_alpha = vc.sigma2_alpha;
    res.variance_components = Some(vc);
    Ok(res)
}
