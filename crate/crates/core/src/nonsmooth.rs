//! Polyhedral nonsmooth terms.
//!
//! Each composite objective carries a term `g(y) = max { y'z : z in Z }` with
//! `Z = { z : -delta e <= G z <= delta e }` for a nonsingular `G`.  Writing
//! `u = G^{-T} y`, the support value has the closed form `delta * ||u||_1` and
//! `delta * G^{-1} sign(u)` is a maximizing-vertex subgradient.  The closed
//! form is the production path; [`PolyhedralTerm::support_oracle_vertices`]
//! enumerates all `2^n` vertices of `Z` and exists purely as an independent
//! cross-check for tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Largest dimension accepted by the vertex-enumeration oracle.
pub const VERTEX_ORACLE_MAX_DIM: usize = 12;

const GENERATE_COND_LIMIT: f64 = 1e6;
const GENERATE_MAX_ATTEMPTS: usize = 100;

/// One polyhedral support-function term.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralTerm {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    delta: f64,
    is_zero: bool,
}

impl PolyhedralTerm {
    /// Builds a term from a nonsingular `G` and a scale `delta >= 0`.
    pub fn new(g: DMatrix<f64>, delta: f64) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(Error::DimensionMismatch {
                expected: g.nrows(),
                got: g.ncols(),
            });
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "term scale must be a nonnegative finite number, got {delta}"
            )));
        }
        let g_inv = g
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("nonsmooth matrix is singular".into()))?;
        Ok(Self {
            g,
            g_inv,
            is_zero: delta == 0.0,
            delta,
        })
    }

    /// The identically-zero term (`delta = 0`, `G = I`).
    pub fn zero(n: usize) -> Self {
        Self {
            g: DMatrix::identity(n, n),
            g_inv: DMatrix::identity(n, n),
            delta: 0.0,
            is_zero: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_zero(&self) -> bool {
        self.is_zero
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// `G^{-T} y`.
    pub fn apply_inv_t(&self, y: &DVector<f64>) -> DVector<f64> {
        self.g_inv.tr_mul(y)
    }

    /// `G^{-1} u`.
    pub fn apply_inv(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.g_inv * u
    }

    /// 2-norm condition estimate of `G`.
    pub fn condition_estimate(&self) -> f64 {
        let sv = self.g.clone().singular_values();
        let (max, min) = (sv.max(), sv.min());
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Support value `g(y) = delta * ||G^{-T} y||_1` (closed form).
    pub fn eval_support(&self, y: &DVector<f64>) -> f64 {
        if self.is_zero {
            return 0.0;
        }
        self.delta * self.apply_inv_t(y).iter().map(|u| u.abs()).sum::<f64>()
    }

    /// Maximizing-vertex subgradient `delta * G^{-1} sign(G^{-T} y)`.
    ///
    /// `sign(0)` is taken as 0, so on a kink this returns the centroid of the
    /// maximizing face rather than one of its vertices.
    pub fn support_subgradient(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.is_zero {
            return DVector::zeros(self.dim());
        }
        let u = self.apply_inv_t(y);
        let s = u.map(|ui| {
            if ui > 0.0 {
                1.0
            } else if ui < 0.0 {
                -1.0
            } else {
                0.0
            }
        });
        self.delta * self.apply_inv(&s)
    }

    /// Exact support value by enumerating all `2^n` vertices of `Z`.
    ///
    /// Test-only cross-check for [`Self::eval_support`]; refuses dimensions
    /// above [`VERTEX_ORACLE_MAX_DIM`].
    pub fn support_oracle_vertices(&self, y: &DVector<f64>) -> Result<f64> {
        let n = self.dim();
        if n > VERTEX_ORACLE_MAX_DIM {
            return Err(Error::DimensionTooLarge {
                n,
                max: VERTEX_ORACLE_MAX_DIM,
            });
        }
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1u32 << n) {
            let u = DVector::from_fn(n, |i, _| {
                if mask & (1 << i) != 0 {
                    self.delta
                } else {
                    -self.delta
                }
            });
            let z = self.apply_inv(&u);
            best = best.max(y.dot(&z));
        }
        Ok(best)
    }
}

/// Samples a random term for objective anchoring.
///
/// `G` entries are drawn uniformly from `[0, 1]` (row by row) and the draw is
/// repeated, up to [`GENERATE_MAX_ATTEMPTS`] times, until the condition
/// estimate falls below 1e6.  The scale is `delta = delta_bar * ||anchor||_2`
/// with `delta_bar` uniform in `[0.02, 0.10]`, drawn after `G`; a zero anchor
/// therefore yields the zero term.
pub fn generate_random_term(
    n: usize,
    anchor: &DVector<f64>,
    rng: &mut SplitMix64,
) -> Result<PolyhedralTerm> {
    if anchor.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: anchor.len(),
        });
    }
    let mut g = None;
    for _ in 0..GENERATE_MAX_ATTEMPTS {
        // Fill row by row; DMatrix::from_fn would consume the stream in
        // column-major order, which is not the documented layout.
        let mut candidate = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                candidate[(r, c)] = rng.next_f64();
            }
        }
        let sv = candidate.clone().singular_values();
        if sv.min() > 0.0 && sv.max() / sv.min() < GENERATE_COND_LIMIT {
            g = Some(candidate);
            break;
        }
    }
    let g = g.ok_or(Error::ResampleLimit {
        attempts: GENERATE_MAX_ATTEMPTS,
    })?;
    let delta_bar = rng.uniform(0.02, 0.10);
    PolyhedralTerm::new(g, delta_bar * anchor.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn diag21() -> PolyhedralTerm {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        PolyhedralTerm::new(g, 1.0).unwrap()
    }

    #[test]
    fn support_value_closed_form() {
        let y = DVector::from_vec(vec![2.0, 3.0]);
        assert_relative_eq!(diag21().eval_support(&y), 4.0);
    }

    #[test]
    fn subgradient_at_smooth_point() {
        let y = DVector::from_vec(vec![2.0, 3.0]);
        let xi = diag21().support_subgradient(&y);
        assert_relative_eq!(xi[0], 0.5);
        assert_relative_eq!(xi[1], 1.0);
    }

    #[test]
    fn subgradient_on_kink_uses_sign_zero() {
        let y = DVector::from_vec(vec![0.0, 3.0]);
        let xi = diag21().support_subgradient(&y);
        assert_eq!(xi[0], 0.0);
        assert_relative_eq!(xi[1], 1.0);
    }

    #[test]
    fn positive_homogeneity() {
        let term = diag21();
        let y = DVector::from_vec(vec![-1.5, 0.7]);
        assert_relative_eq!(term.eval_support(&(2.0 * &y)), 2.0 * term.eval_support(&y));
    }

    #[test]
    fn zero_term_evaluates_to_zero() {
        let term = PolyhedralTerm::zero(3);
        let y = DVector::from_vec(vec![1.0, -2.0, 5.0]);
        assert_eq!(term.eval_support(&y), 0.0);
        assert_eq!(term.support_subgradient(&y), DVector::zeros(3));
        assert!(term.is_zero());
    }

    #[test]
    fn vertex_oracle_matches_closed_form_on_diagonal_case() {
        let term = diag21();
        let y = DVector::from_vec(vec![2.0, 3.0]);
        let exact = term.support_oracle_vertices(&y).unwrap();
        assert_relative_eq!(exact, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn vertex_oracle_rejects_large_dimension() {
        let term = PolyhedralTerm::zero(13);
        let y = DVector::zeros(13);
        assert!(matches!(
            term.support_oracle_vertices(&y),
            Err(Error::DimensionTooLarge { n: 13, max: 12 })
        ));
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(PolyhedralTerm::new(g, 1.0).is_err());
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let anchor = DVector::from_vec(vec![1.0, 2.0]);
        let a = generate_random_term(2, &anchor, &mut SplitMix64::new(99)).unwrap();
        let b = generate_random_term(2, &anchor, &mut SplitMix64::new(99)).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_zero());
        assert!(a.condition_estimate() < 1e6);
    }

    #[test]
    fn generation_scale_tracks_anchor_norm() {
        let anchor = DVector::from_vec(vec![3.0, 4.0]);
        let term = generate_random_term(2, &anchor, &mut SplitMix64::new(5)).unwrap();
        let ratio = term.delta() / anchor.norm();
        assert!((0.02..0.10).contains(&ratio), "delta_bar = {ratio}");
    }

    #[test]
    fn zero_anchor_yields_zero_term() {
        let term = generate_random_term(2, &DVector::zeros(2), &mut SplitMix64::new(1)).unwrap();
        assert!(term.is_zero());
        assert_eq!(term.delta(), 0.0);
    }

    fn seeded_term(seed: u64, n: usize) -> PolyhedralTerm {
        let anchor = DVector::from_element(n, 1.0);
        generate_random_term(n, &anchor, &mut SplitMix64::new(seed)).unwrap()
    }

    proptest! {
        #[test]
        fn prop_oracle_agrees_with_closed_form(seed in any::<u64>(), n in 1usize..5) {
            let term = seeded_term(seed, n);
            let mut rng = SplitMix64::substream(seed, 17);
            let y = DVector::from_fn(n, |_, _| rng.uniform(-5.0, 5.0));
            let exact = term.support_oracle_vertices(&y).unwrap();
            let closed = term.eval_support(&y);
            let scale = f64::max(1.0, exact.abs());
            prop_assert!((exact - closed).abs() / scale <= 1e-10);
        }

        #[test]
        fn prop_subadditivity(seed in any::<u64>(), n in 1usize..5) {
            let term = seeded_term(seed, n);
            let mut rng = SplitMix64::substream(seed, 23);
            let a = DVector::from_fn(n, |_, _| rng.uniform(-5.0, 5.0));
            let b = DVector::from_fn(n, |_, _| rng.uniform(-5.0, 5.0));
            let lhs = term.eval_support(&(&a + &b));
            let rhs = term.eval_support(&a) + term.eval_support(&b);
            prop_assert!(lhs <= rhs + 1e-10 * f64::max(1.0, rhs.abs()));
        }

        #[test]
        fn prop_subgradient_inequality(seed in any::<u64>(), n in 1usize..5) {
            let term = seeded_term(seed, n);
            let mut rng = SplitMix64::substream(seed, 29);
            let y = DVector::from_fn(n, |_, _| rng.uniform(-5.0, 5.0));
            let z = DVector::from_fn(n, |_, _| rng.uniform(-5.0, 5.0));
            let xi = term.support_subgradient(&y);
            let lhs = term.eval_support(&z);
            let rhs = term.eval_support(&y) + xi.dot(&(&z - &y));
            prop_assert!(lhs >= rhs - 1e-10 * f64::max(1.0, lhs.abs()));
        }

        #[test]
        fn prop_homogeneity(seed in any::<u64>(), n in 1usize..5, lambda in 0.0f64..10.0) {
            let term = seeded_term(seed, n);
            let mut rng = SplitMix64::substream(seed, 31);
            let y = DVector::from_fn(n, |_, _| rng.uniform(-5.0, 5.0));
            let lhs = term.eval_support(&(lambda * &y));
            let rhs = lambda * term.eval_support(&y);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * f64::max(1.0, rhs.abs()));
        }
    }
}
