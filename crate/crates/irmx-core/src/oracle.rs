//! Independent verification paths.
//!
//! Everything here deliberately avoids sharing code with the production
//! implementations it checks: finite differences probe analytic gradients,
//! vertex enumeration solves the worst-case weight LP that `c_mm` answers in
//! closed form, and a direct normal-equations solve provides the fixed point
//! that gradient-descent training must reach. None of these are called by
//! production paths.

use crate::data::EnvDataset;
use crate::matrix::dot;
use crate::model::LinearModel;
use crate::{CoreError, Result};
use alloc::vec;
use alloc::vec::Vec;

/// Central-difference gradient of `f` at `theta`:
/// `(f(theta + s e_k) - f(theta - s e_k)) / (2 s)` per coordinate.
pub fn finite_diff_grad<F>(f: F, theta: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(CoreError::InvalidArgument("finite-difference step must be positive"));
    }
    let mut grad = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for k in 0..theta.len() {
        probe[k] = theta[k] + step;
        let plus = f(&probe)?;
        probe[k] = theta[k] - step;
        let minus = f(&probe)?;
        probe[k] = theta[k];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(CoreError::OracleNonFinite);
        }
        grad[k] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Maximizes `sum_e alpha_e J_e` over the weight polytope
/// `{sum alpha = 1, alpha_e >= alpha_min}` by enumerating its vertices.
///
/// The polytope is a simplex translated by `alpha_min` per coordinate and
/// rescaled: substituting `beta_e = alpha_e - alpha_min >= 0` gives
/// `sum beta = 1 - alpha_min m`, a scaled standard simplex whose vertices
/// put the whole remaining mass `1 - alpha_min m` on a single coordinate.
/// A linear functional attains its maximum at a vertex, so checking the
/// `m` vertices is exhaustive. Ties keep the first (lowest-index) vertex.
pub fn lp_vertex_max(j: &[f64], alpha_min: f64) -> Result<(f64, Vec<f64>)> {
    let m = j.len();
    if m == 0 {
        return Err(CoreError::InvalidArgument("need at least one environment"));
    }
    if alpha_min > 1.0 / m as f64 {
        return Err(CoreError::InfeasibleAlphaMin { alpha_min, n_envs: m });
    }
    let bulk = 1.0 - alpha_min * m as f64;
    let mut best_value = f64::NEG_INFINITY;
    let mut best_vertex = vec![alpha_min; m];
    for k in 0..m {
        let mut vertex = vec![alpha_min; m];
        vertex[k] += bulk;
        let value = dot(&vertex, j);
        if value > best_value {
            best_value = value;
            best_vertex = vertex;
        }
    }
    Ok((best_value, best_vertex))
}

/// Exact pooled ordinary-least-squares fit (through the origin) over the
/// concatenation of all environments, via normal equations and Gaussian
/// elimination with partial pivoting.
pub fn least_squares_fit(envs: &[EnvDataset]) -> Result<LinearModel> {
    let d = match envs.first() {
        Some(env) => env.x.cols(),
        None => return Err(CoreError::InvalidArgument("need at least one environment")),
    };
    // accumulate X^T X and X^T y over the pooled rows
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    for env in envs {
        if env.x.cols() != d {
            return Err(CoreError::DimensionMismatch { expected: d, got: env.x.cols() });
        }
        for i in 0..env.n() {
            let row = env.x.row(i);
            for p in 0..d {
                b[p] += row[p] * env.y[i];
                for q in 0..d {
                    a[p * d + q] += row[p] * row[q];
                }
            }
        }
    }

    let scale = a.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())).max(1.0);
    let tol = 1e-10 * scale;

    // Gaussian elimination with partial pivoting on [A | b]
    for col in 0..d {
        let mut pivot_row = col;
        for r in col + 1..d {
            if a[r * d + col].abs() > a[pivot_row * d + col].abs() {
                pivot_row = r;
            }
        }
        if a[pivot_row * d + col].abs() <= tol {
            return Err(CoreError::RankDeficient);
        }
        if pivot_row != col {
            for q in 0..d {
                a.swap(col * d + q, pivot_row * d + q);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * d + col];
        for r in col + 1..d {
            let factor = a[r * d + col] / pivot;
            if factor != 0.0 {
                for q in col..d {
                    a[r * d + q] -= factor * a[col * d + q];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    let mut w = vec![0.0; d];
    for col in (0..d).rev() {
        let mut acc = b[col];
        for q in col + 1..d {
            acc -= a[col * d + q] * w[q];
        }
        w[col] = acc / a[col * d + col];
    }
    Ok(LinearModel { w, bias: 0.0, bias_enabled: false })
}
