//! Per-objective BFGS curvature models.
//!
//! Every objective keeps its own approximation `B_j`, initialized to the
//! identity and updated with the classical BFGS formula from the shared step
//! `s = x_{k+1} - x_k` and its own gradient difference `y_j`.  A pair is used
//! only if it carries meaningful positive curvature; otherwise the update is
//! skipped and `B_j` is left untouched.  After every applied update the matrix
//! is pushed back onto the SPD cone by an eigenvalue floor, so downstream
//! subproblems always see uniformly positive definite curvature.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Whether a secant pair was applied or rejected by the curvature test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Updated,
    Skipped,
}

/// Eigenvalue floor: clamps the spectrum of a symmetric `B` at `floor`.
///
/// Uses a full symmetric eigendecomposition.  When no eigenvalue is below the
/// floor the input is returned bit-identically; otherwise the matrix is
/// rebuilt from the clamped spectrum and re-symmetrized.
pub fn spd_floor_project(b: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eigen = b.clone().symmetric_eigen();
    if eigen.eigenvalues.iter().all(|&l| l >= floor) {
        return b.clone();
    }
    let clamped = eigen.eigenvalues.map(|l| l.max(floor));
    let rebuilt = &eigen.eigenvectors
        * DMatrix::from_diagonal(&clamped)
        * eigen.eigenvectors.transpose();
    let rebuilt_t = rebuilt.transpose();
    (rebuilt + rebuilt_t) * 0.5
}

/// One BFGS update of `b` from the pair `(s, y)`.
///
/// The pair is applied only when `s'y > curvature_eps * ||s|| * ||y||`, or
/// under the literal `s'y > 0` test when `raw_curvature` is set.  An applied
/// update returns `B - (B s s' B) / (s' B s) + (y y') / (s' y)` passed through
/// [`spd_floor_project`]; a rejected pair returns `b` unchanged.
pub fn bfgs_update(
    b: &DMatrix<f64>,
    s: &DVector<f64>,
    y: &DVector<f64>,
    curvature_eps: f64,
    raw_curvature: bool,
    floor: f64,
) -> Result<(DMatrix<f64>, UpdateOutcome)> {
    if s.norm() == 0.0 {
        return Err(Error::ZeroStep);
    }
    let sy = s.dot(y);
    let threshold = if raw_curvature {
        0.0
    } else {
        curvature_eps * s.norm() * y.norm()
    };
    if !(sy > threshold) {
        return Ok((b.clone(), UpdateOutcome::Skipped));
    }
    let bs = b * s;
    let sbs = s.dot(&bs);
    let updated = b - (&bs * bs.transpose()) / sbs + (y * y.transpose()) / sy;
    Ok((spd_floor_project(&updated, floor), UpdateOutcome::Updated))
}

/// The family `B_1, ..., B_m` maintained by the quasi-Newton solvers.
#[derive(Debug, Clone)]
pub struct HessianApprox {
    matrices: Vec<DMatrix<f64>>,
}

impl HessianApprox {
    /// All-identity initialization.
    pub fn identity(m: usize, n: usize) -> Self {
        Self {
            matrices: (0..m).map(|_| DMatrix::identity(n, n)).collect(),
        }
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn matrix(&self, j: usize) -> &DMatrix<f64> {
        &self.matrices[j]
    }

    /// Updates every objective's matrix from the shared step `s` and the
    /// per-objective gradient differences `ys`; returns one outcome per
    /// objective.
    pub fn update_all(
        &mut self,
        s: &DVector<f64>,
        ys: &[DVector<f64>],
        curvature_eps: f64,
        raw_curvature: bool,
        floor: f64,
    ) -> Result<Vec<UpdateOutcome>> {
        if ys.len() != self.matrices.len() {
            return Err(Error::DimensionMismatch {
                expected: self.matrices.len(),
                got: ys.len(),
            });
        }
        let mut outcomes = Vec::with_capacity(ys.len());
        for (b, y) in self.matrices.iter_mut().zip(ys) {
            let (next, outcome) = bfgs_update(b, s, y, curvature_eps, raw_curvature, floor)?;
            *b = next;
            outcomes.push(outcome);
        }
        Ok(outcomes)
    }
}
