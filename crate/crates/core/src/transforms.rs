//! Within (demeaning) and quasi-demeaning transformations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformKind {
    Within,
    QuasiDemeaned { theta: f64 },
}

/// Transformed response and regressors, stacked unit-major like the source
/// dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPanel {
    pub n_units: usize,
    pub n_periods: usize,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub kind: TransformKind,
}

impl TransformedPanel {
    pub fn y_matrix(&self) -> DMatrix<f64> {
        let t = self.n_periods;
        DMatrix::from_fn(self.n_units, t, |i, s| self.y[i * t + s])
    }
}

/// Per-unit time averages of the response (length N) and regressors (N x K).
pub fn unit_means(ds: &PanelDataset) -> (DVector<f64>, DMatrix<f64>) {
    let (n, t, k) = (ds.n_units(), ds.n_periods(), ds.n_regressors());
    let tf = t as f64;
    let y = DVector::from_fn(n, |i, _| (0..t).map(|s| ds.y(i, s)).sum::<f64>() / tf);
    let x = DMatrix::from_fn(n, k, |i, c| (0..t).map(|s| ds.x(i, s, c)).sum::<f64>() / tf);
    (y, x)
}

fn subtract_scaled_means(ds: &PanelDataset, theta: f64) -> (DVector<f64>, DMatrix<f64>) {
    let (n, t, k) = (ds.n_units(), ds.n_periods(), ds.n_regressors());
    let (ybar, xbar) = unit_means(ds);
    let y = DVector::from_fn(n * t, |row, _| ds.y(row / t, row % t) - theta * ybar[row / t]);
    let x = DMatrix::from_fn(n * t, k, |row, c| {
        ds.x(row / t, row % t, c) - theta * xbar[(row / t, c)]
    });
    (y, x)
}

/// Subtracts each unit's time average from its observations.
pub fn within_transform(ds: &PanelDataset) -> TransformedPanel {
    let (y, x) = subtract_scaled_means(ds, 1.0);
    TransformedPanel {
        n_units: ds.n_units(),
        n_periods: ds.n_periods(),
        y,
        x,
        kind: TransformKind::Within,
    }
}

/// Subtracts `theta` times each unit's time average.
pub fn quasi_demean(ds: &PanelDataset, theta: f64) -> Result<TransformedPanel> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::ThetaOutOfRange(theta));
    }
    let (y, x) = subtract_scaled_means(ds, theta);
    Ok(TransformedPanel {
        n_units: ds.n_units(),
        n_periods: ds.n_periods(),
        y,
        x,
        kind: TransformKind::QuasiDemeaned { theta },
    })
}

/// GLS quasi-demeaning weight `1 - sqrt(s_eps / (s_eps + T s_alpha))`.
pub fn compute_theta(sigma2_eps: f64, sigma2_alpha: f64, t: usize) -> Result<f64> {
    if !(sigma2_eps > 0.0) {
        return Err(Error::ZeroIdiosyncraticVariance(sigma2_eps));
    }
    let sigma2_alpha = sigma2_alpha.max(0.0);
    Ok(1.0 - (sigma2_eps / (sigma2_eps + t as f64 * sigma2_alpha)).sqrt())
}
