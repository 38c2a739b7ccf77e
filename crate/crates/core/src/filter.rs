//! Polynomial graph filters over a shift operator.
//!
//! Powers of the shift are never formed; every filter is a chain of
//! matrix-vector products.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::GraphShift;

/// Taps `h[0..=K]` on the reward plus the bias tap `h[K+1]` on the incoming values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FilterCoeffs {
    h: Vec<f64>,
}

impl FilterCoeffs {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.len() < 2 {
            return Err(Error::arg(format!("filter needs at least 2 taps, got {}", h.len())));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("filter taps must be finite"));
        }
        Ok(Self { h })
    }

    /// `h_j = gamma^j` for `j = 0..=K+1`: `K + 1` steps of policy evaluation.
    pub fn classical(gamma: f64, order: usize) -> Self {
        Self {
            h: (0..order + 2).map(|j| gamma.powi(j as i32)).collect(),
        }
    }

    /// Filter order `K`.
    pub fn order(&self) -> usize {
        self.h.len() - 2
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.h
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.h
    }

    /// Reward taps `h[0..=K]`.
    pub fn reward_taps(&self) -> &[f64] {
        &self.h[..self.h.len() - 1]
    }

    pub fn bias(&self) -> f64 {
        self.h[self.h.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for FilterCoeffs {
    type Error = Error;

    fn try_from(h: Vec<f64>) -> Result<Self> {
        FilterCoeffs::new(h)
    }
}

impl From<FilterCoeffs> for Vec<f64> {
    fn from(c: FilterCoeffs) -> Self {
        c.h
    }
}

/// `sum_j h[j] A^j x`.
pub fn apply_filter(shift: &impl GraphShift, h: &[f64], x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != shift.dim() {
        return Err(Error::arg(format!(
            "signal length {} does not match shift dimension {}",
            x.len(),
            shift.dim()
        )));
    }
    let Some((&h0, rest)) = h.split_first() else {
        return Err(Error::arg("empty filter"));
    };
    let mut out = x * h0;
    let mut hop = x.clone();
    for &hj in rest {
        hop = shift.apply(&hop);
        out.axpy(hj, &hop, 1.0);
    }
    Ok(out)
}

/// Horner stages of the biased filter, from innermost to outermost:
/// `u[K+1] = h[K+1] q0`, then `u[j] = h[j] r + A u[j+1]` down to `u[0]`,
/// returned as `[u[K+1], u[K], .., u[0]]`. The last entry is the filter output.
pub(crate) fn horner_stages(
    shift: &impl GraphShift,
    coeffs: &FilterCoeffs,
    r: &DVector<f64>,
    q0: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let h = coeffs.as_slice();
    let mut stages = Vec::with_capacity(h.len());
    stages.push(q0 * coeffs.bias());
    for &hj in coeffs.reward_taps().iter().rev() {
        let mut next = shift.apply(stages.last().unwrap());
        next.axpy(hj, r, 1.0);
        stages.push(next);
    }
    stages
}

/// `sum_{j<=K} h_j A^j r + h_{K+1} A^{K+1} q0`.
///
/// With `h_j = gamma^j` this is exactly `K + 1` Bellman backups from `q0`.
pub fn filtered_evaluation(
    shift: &impl GraphShift,
    r: &DVector<f64>,
    q0: &DVector<f64>,
    coeffs: &FilterCoeffs,
) -> Result<DVector<f64>> {
    let n = shift.dim();
    if r.len() != n || q0.len() != n {
        return Err(Error::arg(format!(
            "filtered_evaluation: shift dimension {n}, r length {}, q0 length {}",
            r.len(),
            q0.len()
        )));
    }
    Ok(horner_stages(shift, coeffs, r, q0).pop().unwrap())
}

/// Least-squares fit of `target` by `sum_{j<=K} h_j A^j r`.
#[derive(Debug, Clone)]
pub struct FilterFit {
    /// Fitted taps with a zero bias tap appended.
    pub coeffs: FilterCoeffs,
    /// `|| K h - target ||_2`.
    pub residual: f64,
    /// Numerical rank of the Krylov matrix.
    pub rank: usize,
}

/// Relative singular-value cutoff for the Krylov solve.
const KRYLOV_RCOND: f64 = 1e-12;

/// Builds the Krylov matrix `[r, A r, .., A^K r]`.
pub fn krylov_matrix(shift: &impl GraphShift, r: &DVector<f64>, order: usize) -> Result<DMatrix<f64>> {
    let n = shift.dim();
    if r.len() != n {
        return Err(Error::arg(format!("r length {} does not match shift dimension {n}", r.len())));
    }
    let mut krylov = DMatrix::zeros(n, order + 1);
    let mut col = r.clone();
    krylov.set_column(0, &col);
    for j in 1..=order {
        col = shift.apply(&col);
        krylov.set_column(j, &col);
    }
    Ok(krylov)
}

/// Minimal-order filter fit. Rank-deficient Krylov matrices are handled by
/// the minimum-norm solution.
pub fn fit_minimal_filter(
    shift: &impl GraphShift,
    r: &DVector<f64>,
    target: &DVector<f64>,
    order: usize,
) -> Result<FilterFit> {
    if target.len() != shift.dim() {
        return Err(Error::arg(format!(
            "target length {} does not match shift dimension {}",
            target.len(),
            shift.dim()
        )));
    }
    let krylov = krylov_matrix(shift, r, order)?;
    let svd = krylov.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * KRYLOV_RCOND;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let taps = if smax == 0.0 {
        DVector::zeros(order + 1)
    } else {
        svd.solve(target, cutoff).map_err(|e| Error::Numeric(e.to_string()))?
    };
    let residual = (&krylov * &taps - target).norm();
    let mut h: Vec<f64> = taps.iter().copied().collect();
    h.push(0.0);
    Ok(FilterFit {
        coeffs: FilterCoeffs::new(h)?,
        residual,
        rank,
    })
}
