//! Least-squares solves through a Householder QR with column pivoting.
//!
//! Columns are pivoted by remaining norm, so the diagonal of `R` is
//! nonincreasing in magnitude and the rank test is a single comparison
//! against the leading diagonal entry.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on `|R_jj| / |R_00|` below which a design is declared
/// rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub beta: DVector<f64>,
    /// `(X'X)^-1`, or `(X'WX)^-1` for weighted fits.
    pub gram_inverse: DMatrix<f64>,
    /// Unweighted residuals `y - X beta`.
    pub residuals: DVector<f64>,
}

/// Ordinary least squares of `y` on the columns of `x`.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquaresFit> {
    solve(x.clone(), y.clone(), x, y)
}

/// Minimizes `sum_i w_i (y_i - x_i' beta)^2` for nonnegative weights.
pub fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &[f64],
) -> Result<LeastSquaresFit> {
    if weights.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} observations",
            weights.len(),
            y.len()
        )));
    }
    let mut xw = x.clone();
    let mut yw = y.clone();
    for (row, &w) in weights.iter().enumerate() {
        let s = w.max(0.0).sqrt();
        if s != 1.0 {
            xw.row_mut(row).scale_mut(s);
            yw[row] *= s;
        }
    }
    solve(xw, yw, x, y)
}

fn solve(
    mut a: DMatrix<f64>,
    mut b: DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<LeastSquaresFit> {
    let (n, k) = a.shape();
    if n < k || k == 0 {
        return Err(Error::RankDeficientDesign { rank: n.min(k), cols: k });
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut diag = vec![0.0; k];

    for j in 0..k {
        let pivot = (j..k)
            .max_by(|&p, &q| {
                let np = a.view((j, p), (n - j, 1)).norm_squared();
                let nq = a.view((j, q), (n - j, 1)).norm_squared();
                np.partial_cmp(&nq).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(j);
        if pivot != j {
            a.swap_columns(j, pivot);
            perm.swap(j, pivot);
        }

        let norm = a.view((j, j), (n - j, 1)).norm();
        if norm == 0.0 {
            diag[j] = 0.0;
            continue;
        }
        let alpha = if a[(j, j)] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|r| a[(r, j)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|e| e * e).sum();
        if vnorm2 > 0.0 {
            for c in j..k {
                let s: f64 = v.iter().enumerate().map(|(o, vi)| vi * a[(j + o, c)]).sum();
                let f = 2.0 * s / vnorm2;
                for (o, vi) in v.iter().enumerate() {
                    a[(j + o, c)] -= f * vi;
                }
            }
            let s: f64 = v.iter().enumerate().map(|(o, vi)| vi * b[j + o]).sum();
            let f = 2.0 * s / vnorm2;
            for (o, vi) in v.iter().enumerate() {
                b[j + o] -= f * vi;
            }
        }
        diag[j] = a[(j, j)];
    }

    let lead = diag[0].abs();
    if let Some(rank) = diag.iter().position(|d| !(d.abs() > RANK_TOLERANCE * lead)) {
        return Err(Error::RankDeficientDesign { rank, cols: k });
    }

    // back substitution for R z = (Q'b)[..k] and for R^-1
    let r = a.view((0, 0), (k, k)).upper_triangle();
    let mut z = DVector::zeros(k);
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|c| r[(i, c)] * z[c]).sum();
        z[i] = (b[i] - s) / r[(i, i)];
    }
    let mut r_inv = DMatrix::zeros(k, k);
    for col in 0..k {
        for i in (0..=col).rev() {
            let rhs = if i == col { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..=col).map(|c| r[(i, c)] * r_inv[(c, col)]).sum();
            r_inv[(i, col)] = (rhs - s) / r[(i, i)];
        }
    }
    let g = &r_inv * r_inv.transpose();

    let mut beta = DVector::zeros(k);
    let mut gram_inverse = DMatrix::zeros(k, k);
    for p in 0..k {
        beta[perm[p]] = z[p];
        for q in 0..k {
            gram_inverse[(perm[p], perm[q])] = g[(p, q)];
        }
    }
    let gram_inverse = (&gram_inverse + gram_inverse.transpose()) * 0.5;
    let residuals = y - x * &beta;
    Ok(LeastSquaresFit {
        beta,
        gram_inverse,
        residuals,
    })
}
