//! Interaction model built from SPQE output.
//!
//! The covariance of per-permutation marginals around their means stands in
//! for the pairwise loss interactions; diagonal shrinkage damps the noisy
//! off-diagonal entries, and the linear sensitivities are what remains of the
//! Shapley estimates once the interaction share is removed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::doc::Artifact;
use crate::error::{Error, Result};
use crate::linalg;
use crate::spqe::{MarginalMatrix, ShapleyEstimate};

/// Default diagonal shrinkage.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionModel {
    #[serde(with = "linalg::rows")]
    pub covariance: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub interactions: DMatrix<f64>,
    pub sensitivities: Vec<f64>,
    pub alpha: f64,
    pub source_samples: usize,
}

impl Artifact for InteractionModel {
    const KIND: &'static str = "interaction_model";
}

impl InteractionModel {
    pub fn build(matrix: &MarginalMatrix, estimate: &ShapleyEstimate, alpha: f64) -> Result<Self> {
        let covariance = covariance(matrix, estimate)?;
        let interactions = shrink(&covariance, alpha)?;
        let sensitivities = extract_sensitivities(estimate, &interactions)?;
        Ok(Self {
            covariance,
            interactions,
            sensitivities,
            alpha,
            source_samples: matrix.sample_count,
        })
    }
}

/// `C = (1/M) · Dᵀ D` with `D[m][i] = marginals[m][i] − phi_hat[i]`.
pub fn covariance(matrix: &MarginalMatrix, estimate: &ShapleyEstimate) -> Result<DMatrix<f64>> {
    matrix.validate()?;
    let (m, l) = (matrix.sample_count, matrix.layer_count);
    if estimate.phi_hat.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "estimate over {} layers, matrix over {l}",
            estimate.phi_hat.len()
        )));
    }
    let deviations = DMatrix::from_fn(m, l, |r, c| matrix.rows[r][c] - estimate.phi_hat[c]);
    let mut c = deviations.tr_mul(&deviations) / m as f64;
    // Dᵀ D is symmetric in exact arithmetic; mirror the lower triangle so it is bitwise.
    for i in 0..l {
        for j in 0..i {
            c[(j, i)] = c[(i, j)];
        }
    }
    Ok(c)
}

/// `K = (1 − α)·C + α·diag(C)`; the diagonal is copied through unchanged.
pub fn shrink(c: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if !c.is_square() {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    Ok(DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
        if i == j {
            c[(i, i)]
        } else {
            (1.0 - alpha) * c[(i, j)]
        }
    }))
}

/// `a[i] = phi_hat[i] − Σ_{j≠i} K[i][j]`.
pub fn extract_sensitivities(estimate: &ShapleyEstimate, k: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = estimate.phi_hat.len();
    if k.shape() != (l, l) {
        return Err(Error::DimensionMismatch(format!(
            "K is {:?}, expected ({l}, {l})",
            k.shape()
        )));
    }
    Ok((0..l)
        .map(|i| {
            let off: f64 = (0..l).filter(|&j| j != i).map(|j| k[(i, j)]).sum();
            estimate.phi_hat[i] - off
        })
        .collect())
}

/// Whether every eigenvalue is at least `−tol · max(λ_max, 0)`.
pub fn is_positive_semidefinite(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    min >= -tol * max.max(0.0)
}
