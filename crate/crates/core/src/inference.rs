//! Hausman-type specification tests, fit statistics and the chi-square tail.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::panel::{EstimateResult, Method};

/// Eigenvalues of the covariance difference below this fraction of the
/// largest one are raised to it before inversion.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Hausman,
    WeightedHausman,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Coefficient difference (consistent minus efficient).
    pub q: DVector<f64>,
    /// Covariance difference actually inverted.
    pub m_matrix: DMatrix<f64>,
    /// Whether any eigenvalue of the covariance difference had to be raised.
    pub repaired: bool,
}

/// Upper tail `P(X > x)` of a chi-square variable with `df` degrees of
/// freedom, via the regularized upper incomplete gamma function.
pub fn chi_square_sf(x: f64, df: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::NegativeArgument(x));
    }
    if df == 0 {
        return Err(Error::InvalidConfig("chi-square needs df >= 1".into()));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}

/// `q' M^- q` with the eigenvalue floor applied to the symmetrized `M`.
///
/// Returns the statistic, the matrix actually inverted and whether the
/// floor fired.
pub fn quadratic_form(q: &DVector<f64>, m: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>, bool)> {
    let k = q.len();
    if m.nrows() != k || m.ncols() != k {
        return Err(Error::DimensionMismatch(k, m.nrows()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = EIGEN_FLOOR * if max > 0.0 { max } else { 1.0 };
    let mut repaired = false;
    let values: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l < floor {
                repaired = true;
                floor
            } else {
                l
            }
        })
        .collect();
    let proj = eig.eigenvectors.transpose() * q;
    let statistic: f64 = proj.iter().zip(&values).map(|(p, l)| p * p / l).sum();
    let used = if repaired {
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(values));
        &eig.eigenvectors * lambda * eig.eigenvectors.transpose()
    } else {
        sym
    };
    Ok((statistic.max(0.0), used, repaired))
}

fn compare(
    kind: TestKind,
    consistent: &EstimateResult,
    efficient: &EstimateResult,
) -> Result<TestResult> {
    let k = consistent.k();
    if efficient.k() != k {
        return Err(Error::DimensionMismatch(k, efficient.k()));
    }
    let q = &consistent.beta - &efficient.beta;
    let m = &consistent.cov_beta - &efficient.cov_beta;
    let (statistic, m_matrix, repaired) = quadratic_form(&q, &m)?;
    Ok(TestResult {
        kind,
        statistic,
        df: k,
        p_value: chi_square_sf(statistic, k)?,
        q,
        m_matrix,
        repaired,
    })
}

fn expect_method(res: &EstimateResult, method: Method) -> Result<()> {
    if res.method == method {
        Ok(())
    } else {
        Err(Error::MethodMismatch {
            expected: method.to_string(),
            got: res.method.to_string(),
        })
    }
}

/// Classical Hausman test of fixed against random effects.
pub fn hausman_test(fe: &EstimateResult, re: &EstimateResult) -> Result<TestResult> {
    expect_method(fe, Method::FixedEffects)?;
    expect_method(re, Method::RandomEffects)?;
    compare(TestKind::Hausman, fe, re)
}

/// Hausman test with the weighted likelihood fixed-effects estimator in place
/// of the within estimator.
pub fn weighted_hausman_test(wfe: &EstimateResult, re: &EstimateResult) -> Result<TestResult> {
    expect_method(wfe, Method::WeightedFixedEffects)?;
    expect_method(re, Method::RandomEffects)?;
    compare(TestKind::WeightedHausman, wfe, re)
}

/// Residual sum of squares and R-squared of a fit, on the scale it was fit.
pub fn fit_statistics(res: &EstimateResult) -> Result<(f64, f64)> {
    let rss: f64 = res.residuals.iter().map(|e| e * e).sum();
    if !(res.tss > 0.0) {
        return Err(Error::ZeroTotalVariation);
    }
    Ok((rss, 1.0 - rss / res.tss))
}
