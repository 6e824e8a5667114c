//! The three line-search solvers over the shared direction subproblem.
//!
//! One driver implements all variants; they differ only in where curvature
//! comes from, whether the subproblem rows carry an extra regularization, and
//! which reference the sufficient-decrease test uses:
//!
//! * **NPQNA** - per-objective BFGS matrices, no regularization, nonmonotone
//!   average-type acceptance with weight `eta`;
//! * **PQNA** - the same BFGS matrices, `pqna_reg * I` added to every
//!   quadratic row, monotone Armijo acceptance;
//! * **NPGA** - floored true Hessians recomputed at every iterate, monotone
//!   Armijo acceptance.
//!
//! The monotone variants keep the nonmonotone memory with `eta = 0`, which
//! collapses it to the last accepted values bit for bit; with `eta = 0` and
//! `pqna_reg = 0` the NPQNA and PQNA paths therefore produce identical runs.
//!
//! Stopping is checked after every subproblem solve, in this order:
//! `||d|| <= d_tol`, then `|theta| < epsilon_theta`, then the iteration cap.
//! A run that exhausts its backtracking budget terminates with
//! [`TerminationReason::LineSearchFail`] and keeps its partial trace.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linesearch::{backtrack, monotone_armijo, NonmonotoneMemory};
use crate::model::{
    evaluate_objectives, Algorithm, Counters, IterateRecord, ProblemSpec, RunReport, SolverConfig,
    StepDiagnostics, TerminationReason,
};
use crate::quasi_newton::{spd_floor_project, HessianApprox};
use crate::subproblem::{solve_subproblem, SubproblemInput};

/// Runs one solver from `x0` and records the full trace.
///
/// `function_evaluations` counts the initial point plus one evaluation per
/// accepted iterate, so completed runs always report `iterations + 1`; the
/// individual line-search trials are tallied in `trial_evaluations`.
pub fn run(
    problem: &ProblemSpec,
    algorithm: Algorithm,
    x0: &DVector<f64>,
    config: &SolverConfig,
) -> Result<RunReport> {
    config.validate()?;
    let (m, n) = (problem.m(), problem.n());
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    if algorithm == Algorithm::Npga {
        if let Some(j) = problem.objectives().iter().position(|o| !o.has_hessian()) {
            return Err(Error::MissingHessian { objective: j });
        }
    }

    let eta = match algorithm {
        Algorithm::Npqna => config.eta,
        Algorithm::Pqna | Algorithm::Npga => 0.0,
    };
    let reg = if algorithm == Algorithm::Pqna {
        config.pqna_reg
    } else {
        0.0
    };

    let start = Instant::now();
    let mut counters = Counters::default();
    let mut x = x0.clone();
    let mut f = evaluate_objectives(problem, &x)?;
    counters.function_evaluations = 1;
    let mut grads = problem.gradients(&x);
    counters.gradient_evaluations = m;
    let mut memory = NonmonotoneMemory::new(f.clone(), eta);
    // NPGA recomputes curvature from the Hessian oracles instead.
    let mut approx = (algorithm != Algorithm::Npga).then(|| HessianApprox::identity(m, n));

    let mut trace: Vec<IterateRecord> = Vec::new();
    let termination;
    loop {
        let k = counters.iterations;
        let curvatures: Vec<DMatrix<f64>> = match &approx {
            Some(a) => a.matrices().to_vec(),
            None => problem
                .objectives()
                .iter()
                .map(|o| {
                    let h = o.hessian(&x).expect("availability checked above");
                    spd_floor_project(&h, config.spd_floor)
                })
                .collect(),
        };
        let input = SubproblemInput {
            x: &x,
            grads: &grads,
            curvatures: &curvatures,
            terms: problem.terms(),
            bounds: config.box_rows.then_some(problem.bounds()),
            reg,
        };
        let sol = solve_subproblem(&input, config)?;
        counters.subproblem_solves += 1;
        let curvature_d = curvatures.iter().map(|b| b * &sol.d).collect();
        trace.push(IterateRecord {
            k,
            x: x.clone(),
            f: f.clone(),
            theta: sol.theta,
            d_norm: sol.d.norm(),
            alpha: None,
            backtracks: None,
            q: memory.q(),
            c: memory.c().clone(),
            curvature_d,
        });

        if sol.d.norm() <= config.d_tol {
            termination = TerminationReason::DirectionTol;
            break;
        }
        if sol.theta.abs() < config.epsilon_theta {
            termination = TerminationReason::ThetaTol;
            break;
        }
        if k == config.max_iter {
            termination = TerminationReason::IterCap;
            break;
        }

        let search = match algorithm {
            Algorithm::Npqna => backtrack(problem, &x, &sol.d, sol.theta, &memory, config),
            Algorithm::Pqna | Algorithm::Npga => {
                monotone_armijo(problem, &x, &sol.d, sol.theta, &f, config)
            }
        };
        let step = match search {
            Ok(step) => step,
            Err(Error::LineSearchFailed { .. }) => {
                counters.trial_evaluations += config.max_backtracks;
                termination = TerminationReason::LineSearchFail;
                break;
            }
            Err(e) => return Err(e),
        };
        counters.trial_evaluations += step.trials;
        let record = trace.last_mut().expect("record pushed this iteration");
        record.alpha = Some(step.alpha);
        record.backtracks = Some(step.backtracks);

        let x_new = &x + step.alpha * &sol.d;
        let grads_new = problem.gradients(&x_new);
        counters.gradient_evaluations += m;
        if let Some(approx) = approx.as_mut() {
            let s = &x_new - &x;
            // A step that rounds to zero carries no secant information.
            if s.iter().any(|&v| v != 0.0) {
                let ys: Vec<DVector<f64>> =
                    grads_new.iter().zip(&grads).map(|(gn, g)| gn - g).collect();
                approx.update_all(
                    &s,
                    &ys,
                    config.curvature_eps,
                    config.raw_curvature,
                    config.spd_floor,
                )?;
            }
        }
        memory = memory.update(&step.f_new);
        x = x_new;
        f = step.f_new;
        grads = grads_new;
        counters.iterations += 1;
        counters.function_evaluations += 1;
    }
    let cpu_seconds = start.elapsed().as_secs_f64();

    let diagnostics = build_diagnostics(problem, &trace, &x);
    Ok(RunReport {
        problem: problem.name().to_string(),
        algorithm,
        x0: x0.clone(),
        final_x: x,
        final_f: f,
        counters,
        termination,
        trace,
        diagnostics,
        cpu_seconds,
    })
}

/// Per-step diagnostics computed after the run against the final iterate:
/// the curvature-model error `||(H_j(x_ref) - B_j) d_k|| / ||d_k||` (when
/// Hessian oracles exist) and the step ratio
/// `||x_{k+1} - x_k|| / ||x_k - x_ref||`.
fn build_diagnostics(
    problem: &ProblemSpec,
    trace: &[IterateRecord],
    x_ref: &DVector<f64>,
) -> Vec<StepDiagnostics> {
    let hessians_at_ref: Option<Vec<DMatrix<f64>>> = problem.all_hessians_available().then(|| {
        problem
            .objectives()
            .iter()
            .map(|o| o.hessian(x_ref).expect("availability just checked"))
            .collect()
    });
    let mut out = Vec::new();
    for w in trace.windows(2) {
        let (rec, next) = (&w[0], &w[1]);
        let Some(alpha) = rec.alpha else { continue };
        let d = (&next.x - &rec.x) / alpha;
        if d.norm() == 0.0 {
            continue;
        }
        let dennis_more = match &hessians_at_ref {
            Some(hs) => hs
                .iter()
                .zip(&rec.curvature_d)
                .map(|(h, bd)| (h * &d - bd).norm() / d.norm())
                .collect(),
            None => Vec::new(),
        };
        let denom = (&rec.x - x_ref).norm();
        let step_ratio = (denom > 0.0).then(|| (&next.x - &rec.x).norm() / denom);
        out.push(StepDiagnostics {
            k: rec.k,
            dennis_more,
            step_ratio,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bounds, SmoothObjective};
    use crate::nonsmooth::PolyhedralTerm;
    use approx::assert_relative_eq;

    fn half_sq(n: usize) -> ProblemSpec {
        let f = SmoothObjective::new(
            |x: &DVector<f64>| 0.5 * x.norm_squared(),
            |x: &DVector<f64>| x.clone(),
        )
        .with_hessian(|x: &DVector<f64>| DMatrix::identity(x.len(), x.len()));
        ProblemSpec::smooth("half-sq", vec![f], Bounds::uniform(n, -5.0, 5.0).unwrap()).unwrap()
    }

    fn quadratic_pair() -> ProblemSpec {
        let n = 2;
        let f1 = SmoothObjective::new(
            move |x: &DVector<f64>| x.norm_squared() / n as f64,
            move |x: &DVector<f64>| x * (2.0 / n as f64),
        )
        .with_hessian(move |x: &DVector<f64>| {
            DMatrix::identity(x.len(), x.len()) * (2.0 / n as f64)
        });
        let f2 = SmoothObjective::new(
            move |x: &DVector<f64>| x.iter().map(|xi| (xi - 2.0).powi(2)).sum::<f64>() / n as f64,
            move |x: &DVector<f64>| DVector::from_fn(x.len(), |i, _| 2.0 * (x[i] - 2.0) / n as f64),
        )
        .with_hessian(move |x: &DVector<f64>| {
            DMatrix::identity(x.len(), x.len()) * (2.0 / n as f64)
        });
        ProblemSpec::smooth(
            "quadratic-pair",
            vec![f1, f2],
            Bounds::uniform(2, -5.0, 5.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn npqna_solves_half_norm_squared_in_two_steps() {
        let problem = half_sq(2);
        let x0 = DVector::from_vec(vec![2.0, -1.0]);
        let report = run(&problem, Algorithm::Npqna, &x0, &SolverConfig::default()).unwrap();
        assert!(report.termination.converged(), "{:?}", report.termination);
        assert!(report.counters.iterations <= 2, "{}", report.counters.iterations);
        assert!(report.final_x.norm() <= 1e-6);
        assert_eq!(
            report.counters.function_evaluations,
            report.counters.iterations + 1
        );
    }

    #[test]
    fn npga_converges_fast_on_quadratic_pair() {
        let problem = quadratic_pair();
        for x0 in [
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![-3.0, 4.0]),
            DVector::from_vec(vec![4.9, -4.9]),
        ] {
            let report = run(&problem, Algorithm::Npga, &x0, &SolverConfig::default()).unwrap();
            assert!(report.termination.converged());
            assert!(
                report.counters.iterations <= 3,
                "{} iterations from {x0:?}",
                report.counters.iterations
            );
            // A critical point of the pair: the gradients oppose each other,
            // which on this geometry pins every coordinate into [0, 2].
            for i in 0..2 {
                assert!(report.final_x[i] >= -1e-6 && report.final_x[i] <= 2.0 + 1e-6);
            }
        }
    }

    #[test]
    fn l1_shrinkage_reaches_the_soft_threshold_point() {
        // 1/2 ||x - c||^2 + 0.25 ||x||_1 has minimizer (0.75, 0).
        let c = DVector::from_vec(vec![1.0, -0.1]);
        let cc = c.clone();
        let f = SmoothObjective::new(
            move |x: &DVector<f64>| 0.5 * (x - &cc).norm_squared(),
            {
                let cg = c.clone();
                move |x: &DVector<f64>| x - &cg
            },
        )
        .with_hessian(|x: &DVector<f64>| DMatrix::identity(x.len(), x.len()));
        let term = PolyhedralTerm::new(DMatrix::identity(2, 2), 0.25).unwrap();
        let problem = ProblemSpec::new(
            "shrinkage",
            vec![f],
            vec![term],
            Bounds::uniform(2, -4.0, 4.0).unwrap(),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![3.0, 2.0]);
        let report = run(&problem, Algorithm::Npqna, &x0, &SolverConfig::default()).unwrap();
        assert!(report.termination.converged());
        assert_relative_eq!(report.final_x[0], 0.75, epsilon = 1e-5);
        assert!(report.final_x[1].abs() <= 1e-5, "x1 = {}", report.final_x[1]);
    }

    #[test]
    fn zero_memory_and_zero_reg_collapse_to_the_same_run() {
        let problem = quadratic_pair();
        let x0 = DVector::from_vec(vec![-2.5, 3.5]);
        let cfg = SolverConfig {
            eta: 0.0,
            pqna_reg: 0.0,
            ..SolverConfig::default()
        };
        let a = run(&problem, Algorithm::Npqna, &x0, &cfg).unwrap();
        let b = run(&problem, Algorithm::Pqna, &x0, &cfg).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(ra.x, rb.x);
            assert_eq!(ra.f, rb.f);
            assert_eq!(ra.theta, rb.theta);
            assert_eq!(ra.alpha, rb.alpha);
            assert_eq!(ra.c, rb.c);
        }
        assert_eq!(a.final_x, b.final_x);
    }

    #[test]
    fn memory_stays_above_objectives_on_nonmonotone_runs() {
        let problem = quadratic_pair();
        let x0 = DVector::from_vec(vec![4.0, -3.0]);
        let report = run(&problem, Algorithm::Npqna, &x0, &SolverConfig::default()).unwrap();
        let eta = SolverConfig::default().eta;
        for rec in &report.trace {
            for j in 0..2 {
                assert!(rec.c[j] >= rec.f[j] - 1e-12);
            }
            assert!(rec.q >= 1.0 && rec.q <= 1.0 / (1.0 - eta) + 1e-12);
        }
    }

    #[test]
    fn trace_marks_only_the_terminal_record_stepless() {
        let problem = quadratic_pair();
        let x0 = DVector::from_vec(vec![3.0, 3.0]);
        let report = run(&problem, Algorithm::Pqna, &x0, &SolverConfig::default()).unwrap();
        let (last, steps) = report.trace.split_last().unwrap();
        assert!(last.alpha.is_none());
        for rec in steps {
            assert!(rec.alpha.is_some());
            assert!(rec.backtracks.is_some());
        }
        assert_eq!(report.trace.len(), report.counters.iterations + 1);
    }

    #[test]
    fn exhausted_backtracking_is_reported_not_raised() {
        // A steep quartic with a one-trial budget: alpha = 1 overshoots.
        let f = SmoothObjective::new(
            |x: &DVector<f64>| (10.0 * x[0]).powi(4),
            |x: &DVector<f64>| DVector::from_vec(vec![4e4 * x[0].powi(3)]),
        );
        let problem =
            ProblemSpec::smooth("steep", vec![f], Bounds::uniform(1, -5.0, 5.0).unwrap()).unwrap();
        let x0 = DVector::from_vec(vec![4.0]);
        let cfg = SolverConfig {
            max_backtracks: 1,
            ..SolverConfig::default()
        };
        let report = run(&problem, Algorithm::Npqna, &x0, &cfg).unwrap();
        assert_eq!(report.termination, TerminationReason::LineSearchFail);
        assert_eq!(report.counters.iterations, 0);
        assert_eq!(report.trace.len(), 1);
        assert_eq!(report.final_x, x0);
    }

    #[test]
    fn npga_requires_hessian_oracles() {
        let f = SmoothObjective::new(
            |x: &DVector<f64>| x.norm_squared(),
            |x: &DVector<f64>| 2.0 * x,
        );
        let problem =
            ProblemSpec::smooth("nohess", vec![f], Bounds::uniform(2, -1.0, 1.0).unwrap()).unwrap();
        let err = run(
            &problem,
            Algorithm::Npga,
            &DVector::zeros(2),
            &SolverConfig::default(),
        );
        assert!(matches!(err, Err(Error::MissingHessian { objective: 0 })));
    }

    #[test]
    fn out_of_box_start_is_rejected() {
        let problem = half_sq(2);
        let err = run(
            &problem,
            Algorithm::Npqna,
            &DVector::from_vec(vec![6.0, 0.0]),
            &SolverConfig::default(),
        );
        assert!(matches!(err, Err(Error::OutOfDomain { index: 0, .. })));
    }

    #[test]
    fn diagnostics_cover_every_accepted_step() {
        let problem = quadratic_pair();
        let x0 = DVector::from_vec(vec![-4.0, 1.0]);
        let report = run(&problem, Algorithm::Npqna, &x0, &SolverConfig::default()).unwrap();
        assert_eq!(report.diagnostics.len(), report.counters.iterations);
        for diag in &report.diagnostics {
            assert_eq!(diag.dennis_more.len(), 2);
            for v in &diag.dennis_more {
                assert!(v.is_finite());
            }
        }
    }
}
