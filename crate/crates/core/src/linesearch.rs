//! Backtracking line searches over all objectives at once.
//!
//! The nonmonotone search follows the average-type scheme: each objective
//! keeps a running average `C_j` of its history, built from the weight `eta`
//! and the normalizer `q`, and a trial step is accepted when every objective
//! drops below its average by the usual fraction of the model value `theta`.
//! With `eta = 0` the memory collapses to the last accepted value and the
//! search becomes the plain monotone Armijo rule used by the baselines.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{evaluate_objectives, ProblemSpec, SolverConfig};

/// Average-type history `(q_k, C^k)` of the nonmonotone search.
#[derive(Debug, Clone, PartialEq)]
pub struct NonmonotoneMemory {
    q: f64,
    c: DVector<f64>,
    eta: f64,
}

impl NonmonotoneMemory {
    /// Starts the history at `q_0 = 1`, `C^0 = F(x^0)`.
    pub fn new(f0: DVector<f64>, eta: f64) -> Self {
        Self { q: 1.0, c: f0, eta }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Folds the next accepted values into the average:
    /// `q_{k+1} = eta q_k + 1`, `C^{k+1} = (eta q_k C^k + F(x^{k+1})) / q_{k+1}`.
    pub fn update(&self, f_new: &DVector<f64>) -> Self {
        let q_next = self.eta * self.q + 1.0;
        let c_next = (self.eta * self.q * &self.c + f_new) / q_next;
        Self {
            q: q_next,
            c: c_next,
            eta: self.eta,
        }
    }
}

/// Sufficient-decrease test against a reference vector `c_ref`:
/// `F_j(trial) <= c_ref_j + tau * alpha * theta` for every `j`.
pub fn accept_test(f_trial: &DVector<f64>, c_ref: &DVector<f64>, tau: f64, alpha: f64, theta: f64) -> bool {
    f_trial
        .iter()
        .zip(c_ref.iter())
        .all(|(&ft, &c)| ft <= c + tau * alpha * theta)
}

/// Outcome of a successful backtracking search.
#[derive(Debug, Clone)]
pub struct LineSearchResult {
    /// Accepted step `alpha = mu * rho^backtracks`.
    pub alpha: f64,
    /// Number of rejected trials before acceptance.
    pub backtracks: usize,
    /// Objective values at the accepted point.
    pub f_new: DVector<f64>,
    /// Total trial evaluations spent (`backtracks + 1`).
    pub trials: usize,
}

fn search(
    problem: &ProblemSpec,
    x: &DVector<f64>,
    d: &DVector<f64>,
    theta: f64,
    c_ref: &DVector<f64>,
    config: &SolverConfig,
) -> Result<LineSearchResult> {
    if !(theta < 0.0) {
        return Err(Error::NonnegativeTheta { theta });
    }
    for h in 0..config.max_backtracks {
        let alpha = config.mu * config.rho.powi(h as i32);
        let trial = x + alpha * d;
        let f_trial = evaluate_objectives(problem, &trial)?;
        if accept_test(&f_trial, c_ref, config.tau, alpha, theta) {
            return Ok(LineSearchResult {
                alpha,
                backtracks: h,
                f_new: f_trial,
                trials: h + 1,
            });
        }
    }
    Err(Error::LineSearchFailed {
        backtracks: config.max_backtracks,
    })
}

/// Nonmonotone backtracking: accepts the first `alpha = mu * rho^h` whose
/// trial point drops below the memory averages `C^k`.
pub fn backtrack(
    problem: &ProblemSpec,
    x: &DVector<f64>,
    d: &DVector<f64>,
    theta: f64,
    memory: &NonmonotoneMemory,
    config: &SolverConfig,
) -> Result<LineSearchResult> {
    search(problem, x, d, theta, memory.c(), config)
}

/// Monotone Armijo rule: the same loop with `C^k` replaced by `F(x^k)`.
pub fn monotone_armijo(
    problem: &ProblemSpec,
    x: &DVector<f64>,
    d: &DVector<f64>,
    theta: f64,
    f_x: &DVector<f64>,
    config: &SolverConfig,
) -> Result<LineSearchResult> {
    search(problem, x, d, theta, f_x, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bounds, SmoothObjective};
    use approx::assert_relative_eq;

    fn half_sq_problem() -> ProblemSpec {
        let f = SmoothObjective::new(
            |x: &DVector<f64>| 0.5 * x.norm_squared(),
            |x: &DVector<f64>| x.clone(),
        );
        ProblemSpec::smooth("half-sq", vec![f], Bounds::uniform(1, -10.0, 10.0).unwrap()).unwrap()
    }

    #[test]
    fn memory_update_matches_hand_computation() {
        let memory = NonmonotoneMemory::new(DVector::from_vec(vec![8.5]), 0.85);
        let next = memory.update(&DVector::from_vec(vec![8.0]));
        assert_relative_eq!(next.q(), 1.85);
        // (0.85 * 1 * 8.5 + 8.0) / 1.85
        assert_relative_eq!(next.c()[0], 8.229_729_729_729_73, epsilon = 1e-12);
    }

    #[test]
    fn memory_with_zero_eta_tracks_last_value_exactly() {
        let memory = NonmonotoneMemory::new(DVector::from_vec(vec![3.0, 4.0]), 0.0);
        let f_new = DVector::from_vec(vec![1.25, 2.5]);
        let next = memory.update(&f_new);
        assert_eq!(next.q(), 1.0);
        assert_eq!(next.c(), &f_new);
    }

    #[test]
    fn q_stays_below_its_geometric_limit() {
        let eta = 0.85;
        let mut memory = NonmonotoneMemory::new(DVector::from_vec(vec![1.0]), eta);
        let bound = 1.0 / (1.0 - eta);
        for _ in 0..200 {
            memory = memory.update(&DVector::from_vec(vec![0.5]));
            assert!(memory.q() >= 1.0);
            assert!(memory.q() <= bound + 1e-12, "q = {}", memory.q());
        }
    }

    #[test]
    fn accept_test_boundary_cases() {
        let c = DVector::from_vec(vec![1.0]);
        // bound = 1 + 1e-4 * 0.5 * (-2) = 0.9999
        assert!(accept_test(&DVector::from_vec(vec![0.99]), &c, 1e-4, 0.5, -2.0));
        assert!(!accept_test(&DVector::from_vec(vec![1.0]), &c, 1e-4, 0.5, -2.0));
    }

    #[test]
    fn full_step_accepted_on_quadratic() {
        let problem = half_sq_problem();
        let x = DVector::from_vec(vec![1.0]);
        let d = DVector::from_vec(vec![-1.0]);
        let f0 = evaluate_objectives(&problem, &x).unwrap();
        let memory = NonmonotoneMemory::new(f0, 0.85);
        let config = SolverConfig::default();
        let result = backtrack(&problem, &x, &d, -0.5, &memory, &config).unwrap();
        assert_eq!(result.alpha, 1.0);
        assert_eq!(result.backtracks, 0);
        assert_eq!(result.trials, 1);
        assert_relative_eq!(result.f_new[0], 0.0);
    }

    #[test]
    fn nonnegative_theta_is_rejected() {
        let problem = half_sq_problem();
        let x = DVector::from_vec(vec![1.0]);
        let d = DVector::from_vec(vec![-1.0]);
        let f0 = evaluate_objectives(&problem, &x).unwrap();
        let memory = NonmonotoneMemory::new(f0, 0.85);
        let config = SolverConfig::default();
        let err = backtrack(&problem, &x, &d, 0.0, &memory, &config);
        assert!(matches!(err, Err(Error::NonnegativeTheta { .. })));
    }

    #[test]
    fn ascent_direction_exhausts_backtracks() {
        // Linear objective with an uphill direction and a lying model value:
        // no step length can satisfy the decrease test.
        let f = SmoothObjective::new(
            |x: &DVector<f64>| x[0],
            |x: &DVector<f64>| DVector::from_element(x.len(), 1.0),
        );
        let problem =
            ProblemSpec::smooth("linear", vec![f], Bounds::uniform(1, -10.0, 10.0).unwrap())
                .unwrap();
        let x = DVector::from_vec(vec![0.0]);
        let d = DVector::from_vec(vec![1.0]);
        let f0 = evaluate_objectives(&problem, &x).unwrap();
        let config = SolverConfig {
            max_backtracks: 10,
            ..SolverConfig::default()
        };
        let err = monotone_armijo(&problem, &x, &d, -1.0, &f0, &config);
        assert!(matches!(err, Err(Error::LineSearchFailed { backtracks: 10 })));
    }

    #[test]
    fn backtracks_halve_the_step() {
        // Steep quartic where alpha = 1 overshoots: force at least one halving.
        let f = SmoothObjective::new(
            |x: &DVector<f64>| x[0].powi(4),
            |x: &DVector<f64>| DVector::from_vec(vec![4.0 * x[0].powi(3)]),
        );
        let problem =
            ProblemSpec::smooth("quartic", vec![f], Bounds::uniform(1, -10.0, 10.0).unwrap())
                .unwrap();
        let x = DVector::from_vec(vec![1.0]);
        // Quasi-Newton style direction much longer than the quartic likes.
        let d = DVector::from_vec(vec![-2.5]);
        let f0 = evaluate_objectives(&problem, &x).unwrap();
        let memory = NonmonotoneMemory::new(f0.clone(), 0.0);
        let config = SolverConfig::default();
        let result = backtrack(&problem, &x, &d, -1.0, &memory, &config).unwrap();
        assert!(result.backtracks >= 1);
        assert_relative_eq!(result.alpha, config.mu * config.rho.powi(result.backtracks as i32));
        assert!(result.f_new[0] < f0[0]);
    }
}
