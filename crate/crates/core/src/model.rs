//! Problem and solver data model.
//!
//! A problem instance is a vector of composite objectives `F_j = f_j + g_j`
//! over a box: the smooth parts `f_j` come in as closures with analytic
//! gradients (and optionally Hessians), the nonsmooth parts `g_j` are
//! polyhedral support functions from [`crate::nonsmooth`].  Everything here is
//! immutable once built and shareable across threads, which is what lets the
//! batch harness fan runs out with plain `rayon` joins.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nonsmooth::PolyhedralTerm;

/// Box membership tolerance used when evaluating objectives.
pub const DOMAIN_TOL: f64 = 1e-12;

/// Closed box `[lb, ub]` with strictly ordered bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lb: DVector<f64>,
    ub: DVector<f64>,
}

impl Bounds {
    pub fn new(lb: DVector<f64>, ub: DVector<f64>) -> Result<Self> {
        if lb.len() != ub.len() {
            return Err(Error::DimensionMismatch {
                expected: lb.len(),
                got: ub.len(),
            });
        }
        for i in 0..lb.len() {
            if !(lb[i] < ub[i]) || !lb[i].is_finite() || !ub[i].is_finite() {
                return Err(Error::InvalidBounds {
                    index: i,
                    lb: lb[i],
                    ub: ub[i],
                });
            }
        }
        Ok(Self { lb, ub })
    }

    /// Uniform box `[lo, hi]^n`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(n, lo),
            DVector::from_element(n, hi),
        )
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn lb(&self) -> &DVector<f64> {
        &self.lb
    }

    pub fn ub(&self) -> &DVector<f64> {
        &self.ub
    }

    pub fn width(&self) -> DVector<f64> {
        &self.ub - &self.lb
    }

    pub fn midpoint(&self) -> DVector<f64> {
        (&self.lb + &self.ub) * 0.5
    }

    /// Checks `lb - tol <= x <= ub + tol` componentwise.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim()
            && (0..x.len()).all(|i| x[i] >= self.lb[i] - tol && x[i] <= self.ub[i] + tol)
    }

    /// First coordinate violating the box beyond `tol`, if any.
    pub fn violation(&self, x: &DVector<f64>, tol: f64) -> Option<(usize, f64)> {
        (0..x.len()).find_map(|i| {
            (x[i] < self.lb[i] - tol || x[i] > self.ub[i] + tol).then_some((i, x[i]))
        })
    }

    /// Clamps `x` into the box shrunk by `rel_margin * (ub - lb)` per side.
    pub fn clamp_interior(&self, x: &DVector<f64>, rel_margin: f64) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| {
            let m = rel_margin * (self.ub[i] - self.lb[i]);
            x[i].clamp(self.lb[i] + m, self.ub[i] - m)
        })
    }
}

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type HessFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Smooth part of one composite objective.
///
/// Oracles are pure closures on all of `R^n`; box membership is enforced by
/// [`evaluate_objectives`], not here, so finite-difference probes near the
/// boundary stay well-defined.
#[derive(Clone)]
pub struct SmoothObjective {
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
    hessian: Option<Arc<HessFn>>,
    convex: bool,
}

impl SmoothObjective {
    pub fn new(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: None,
            convex: true,
        }
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(hessian));
        self
    }

    /// Marks the objective as not convex (curvature may need flooring).
    pub fn nonconvex(mut self) -> Self {
        self.convex = false;
        self
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(x))
    }
}

impl fmt::Debug for SmoothObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothObjective")
            .field("hessian", &self.hessian.is_some())
            .field("convex", &self.convex)
            .finish()
    }
}

/// Full problem instance: `min (F_1, ..., F_m)` over the box.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    name: String,
    objectives: Vec<SmoothObjective>,
    terms: Vec<PolyhedralTerm>,
    bounds: Bounds,
    term_seed: Option<u64>,
}

impl ProblemSpec {
    /// Builds a problem with all-zero nonsmooth terms.
    pub fn smooth(name: impl Into<String>, objectives: Vec<SmoothObjective>, bounds: Bounds) -> Result<Self> {
        let terms = (0..objectives.len())
            .map(|_| PolyhedralTerm::zero(bounds.dim()))
            .collect();
        Self::new(name, objectives, terms, bounds)
    }

    pub fn new(
        name: impl Into<String>,
        objectives: Vec<SmoothObjective>,
        terms: Vec<PolyhedralTerm>,
        bounds: Bounds,
    ) -> Result<Self> {
        if objectives.is_empty() {
            return Err(Error::InvalidConfig("a problem needs at least one objective".into()));
        }
        if terms.len() != objectives.len() {
            return Err(Error::DimensionMismatch {
                expected: objectives.len(),
                got: terms.len(),
            });
        }
        for t in &terms {
            if t.dim() != bounds.dim() {
                return Err(Error::DimensionMismatch {
                    expected: bounds.dim(),
                    got: t.dim(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            objectives,
            terms,
            bounds,
            term_seed: None,
        })
    }

    /// Replaces all nonsmooth terms (used when attaching generated terms).
    pub fn with_terms(mut self, terms: Vec<PolyhedralTerm>) -> Result<Self> {
        if terms.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: terms.len(),
            });
        }
        for t in &terms {
            if t.dim() != self.n() {
                return Err(Error::DimensionMismatch {
                    expected: self.n(),
                    got: t.dim(),
                });
            }
        }
        self.terms = terms;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Master seed the nonsmooth terms were generated from, when they were.
    pub fn term_seed(&self) -> Option<u64> {
        self.term_seed
    }

    pub(crate) fn set_term_seed(&mut self, seed: u64) {
        self.term_seed = Some(seed);
    }

    /// Number of objectives.
    pub fn m(&self) -> usize {
        self.objectives.len()
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.bounds.dim()
    }

    pub fn objectives(&self) -> &[SmoothObjective] {
        &self.objectives
    }

    pub fn terms(&self) -> &[PolyhedralTerm] {
        &self.terms
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Smooth gradients of all objectives at `x`.
    pub fn gradients(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        self.objectives.iter().map(|o| o.gradient(x)).collect()
    }

    pub fn all_hessians_available(&self) -> bool {
        self.objectives.iter().all(|o| o.has_hessian())
    }
}

/// Composite values `F_j(x) = f_j(x) + g_j(x)` for all objectives.
///
/// Fails with [`Error::OutOfDomain`] if `x` violates the box beyond
/// [`DOMAIN_TOL`].  Pure; callers are responsible for evaluation counting.
pub fn evaluate_objectives(problem: &ProblemSpec, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != problem.n() {
        return Err(Error::DimensionMismatch {
            expected: problem.n(),
            got: x.len(),
        });
    }
    if let Some((index, value)) = problem.bounds.violation(x, DOMAIN_TOL) {
        return Err(Error::OutOfDomain {
            index,
            value,
            lb: problem.bounds.lb()[index],
            ub: problem.bounds.ub()[index],
        });
    }
    Ok(DVector::from_fn(problem.m(), |j, _| {
        problem.objectives[j].value(x) + problem.terms[j].eval_support(x)
    }))
}

/// Which solver variant drives an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Nonmonotone proximal quasi-Newton (BFGS curvature, average-type memory).
    Npqna,
    /// Monotone proximal quasi-Newton with quadratic regularization.
    Pqna,
    /// Proximal Newton-type method on floored true Hessians, monotone search.
    Npga,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Npqna, Algorithm::Pqna, Algorithm::Npga];

    /// Lowercase key used by the CLI and file names.
    pub fn key(self) -> &'static str {
        match self {
            Algorithm::Npqna => "npqna",
            Algorithm::Pqna => "pqna",
            Algorithm::Npga => "npga",
        }
    }

    /// Uppercase label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Npqna => "NPQNA",
            Algorithm::Pqna => "PQNA",
            Algorithm::Npga => "NPGA",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Why a run stopped.  Checked in this order after each subproblem solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    /// `||d|| <= d_tol` (primary stop).
    DirectionTol,
    /// `|theta| < epsilon_theta`.
    ThetaTol,
    /// Iteration cap reached.
    IterCap,
    /// Backtracking exhausted without an acceptable step.
    LineSearchFail,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TerminationReason::DirectionTol => "direction-tol",
            TerminationReason::ThetaTol => "theta-tol",
            TerminationReason::IterCap => "iter-cap",
            TerminationReason::LineSearchFail => "line-search-fail",
        };
        f.write_str(s)
    }
}

impl TerminationReason {
    /// True for the two tolerance-based stops.
    pub fn converged(self) -> bool {
        matches!(self, TerminationReason::DirectionTol | TerminationReason::ThetaTol)
    }
}

/// Solver parameters.  Defaults reproduce the benchmark configuration except
/// for `eta`, which defaults to the textbook memory weight; use
/// [`SolverConfig::bench_preset`] for the experiment setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Backtracking contraction factor in (0, 1).
    pub rho: f64,
    /// Sufficient-decrease coefficient in (0, 1).
    pub tau: f64,
    /// Initial trial step.
    pub mu: f64,
    /// Nonmonotone memory weight in [0, 1); 0 recovers the monotone search.
    pub eta: f64,
    /// Stop when `|theta| < epsilon_theta`.
    pub epsilon_theta: f64,
    /// Stop when `||d|| <= d_tol`.
    pub d_tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Backtracking cap per line search.
    pub max_backtracks: usize,
    /// Eigenvalue floor applied to every curvature matrix.
    pub spd_floor: f64,
    /// Extra `reg * I` added to each quadratic row by the PQNA variant.
    pub pqna_reg: f64,
    /// Target for subproblem KKT residuals.
    pub subproblem_tol: f64,
    /// Master seed recorded with every run.
    pub seed: u64,
    /// Relative curvature threshold for accepting a secant pair.
    pub curvature_eps: f64,
    /// Replicate the literal `s'y > 0` curvature test instead of the relative one.
    pub raw_curvature: bool,
    /// Enforce `lb <= x + d <= ub` inside the subproblem (disable to replicate
    /// the unconstrained formulation literally).
    pub box_rows: bool,
    /// Final barrier weight of the subproblem interior-point solve.
    pub barrier_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            tau: 1e-4,
            mu: 1.0,
            eta: 0.85,
            epsilon_theta: 1e-10,
            d_tol: 1e-6,
            max_iter: 300,
            max_backtracks: 50,
            spd_floor: 1e-8,
            pqna_reg: 1e-3,
            subproblem_tol: 1e-8,
            seed: 0,
            curvature_eps: 1e-12,
            raw_curvature: false,
            box_rows: true,
            barrier_floor: 1e-12,
        }
    }
}

impl SolverConfig {
    /// Configuration used by the benchmark tables (`eta = 1e-4`).
    pub fn bench_preset() -> Self {
        Self {
            eta: 1e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            ok.then_some(())
                .ok_or_else(|| Error::InvalidConfig(msg.into()))
        };
        check(self.rho > 0.0 && self.rho < 1.0, "rho must lie in (0, 1)")?;
        check(self.tau > 0.0 && self.tau < 1.0, "tau must lie in (0, 1)")?;
        check(self.mu > 0.0, "mu must be positive")?;
        check(self.eta >= 0.0 && self.eta < 1.0, "eta must lie in [0, 1)")?;
        check(self.epsilon_theta > 0.0, "epsilon_theta must be positive")?;
        check(self.d_tol > 0.0, "d_tol must be positive")?;
        check(self.max_iter > 0, "max_iter must be positive")?;
        check(self.max_backtracks > 0, "max_backtracks must be positive")?;
        check(self.spd_floor > 0.0, "spd_floor must be positive")?;
        check(self.pqna_reg >= 0.0, "pqna_reg must be nonnegative")?;
        check(self.subproblem_tol > 0.0, "subproblem_tol must be positive")?;
        check(self.curvature_eps >= 0.0, "curvature_eps must be nonnegative")?;
        check(
            self.barrier_floor > 0.0 && self.barrier_floor < 1.0,
            "barrier_floor must lie in (0, 1)",
        )?;
        Ok(())
    }
}

/// Evaluation and solve counters for one run.
///
/// `function_evaluations` uses the benchmark counting convention: the initial
/// point plus one evaluation per accepted iterate, so it always equals
/// `iterations + 1` for completed runs.  Every individual trial evaluation in
/// the line search is tallied separately in `trial_evaluations`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    pub iterations: usize,
    pub function_evaluations: usize,
    pub trial_evaluations: usize,
    pub gradient_evaluations: usize,
    pub subproblem_solves: usize,
}

/// One entry of the iterate trace.
#[derive(Debug, Clone)]
pub struct IterateRecord {
    pub k: usize,
    pub x: DVector<f64>,
    /// Composite objective values at `x`.
    pub f: DVector<f64>,
    /// Subproblem optimal value at `x`.
    pub theta: f64,
    pub d_norm: f64,
    /// Accepted step size; `None` on the terminal record.
    pub alpha: Option<f64>,
    /// Backtracks spent by the line search; `None` on the terminal record.
    pub backtracks: Option<usize>,
    /// Nonmonotone memory state (q_k, C_j^k) at this iterate.
    pub q: f64,
    pub c: DVector<f64>,
    /// Products `B_j d` stored for post-hoc curvature diagnostics.
    pub curvature_d: Vec<DVector<f64>>,
}

/// Post-hoc diagnostics for one accepted step.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub k: usize,
    /// `||(H_j(x_ref) - B_j) d|| / ||d||` per objective; empty when the
    /// problem has no Hessian oracles.
    pub dennis_more: Vec<f64>,
    /// `||x_{k+1} - x_k|| / ||x_k - x_ref||`; `None` when the denominator
    /// vanishes.
    pub step_ratio: Option<f64>,
}

/// Everything recorded about one solver run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub problem: String,
    pub algorithm: Algorithm,
    pub x0: DVector<f64>,
    pub final_x: DVector<f64>,
    pub final_f: DVector<f64>,
    pub counters: Counters,
    pub termination: TerminationReason,
    pub trace: Vec<IterateRecord>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Wall time of the solve call itself.
    pub cpu_seconds: f64,
}

/// One inconsistency found by [`validate_problem`].
#[derive(Debug, Clone)]
pub struct Violation {
    pub objective: usize,
    pub kind: ViolationKind,
    pub at: Option<DVector<f64>>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Gradient,
    Hessian,
    TermConditioning,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::Gradient => write!(
                f,
                "objective {}: gradient mismatch, relative error {:.3e}",
                self.objective, self.magnitude
            ),
            ViolationKind::Hessian => write!(
                f,
                "objective {}: Hessian mismatch, relative error {:.3e}",
                self.objective, self.magnitude
            ),
            ViolationKind::TermConditioning => write!(
                f,
                "term {}: condition estimate {:.3e} exceeds 1e8",
                self.objective, self.magnitude
            ),
        }
    }
}

const VALIDATE_SEED: u64 = 0x5641_4C31;
const VALIDATE_POINTS: usize = 10;
const FD_REL_TOL: f64 = 1e-5;
const TERM_COND_LIMIT: f64 = 1e8;

/// Cross-checks oracle consistency; an empty list means the problem passed.
///
/// Gradients and Hessians are compared against central differences at
/// [`VALIDATE_POINTS`] seeded points in the box shrunk by 10% per side, with
/// relative tolerance [`FD_REL_TOL`]; the nonsmooth matrices must have
/// 2-norm condition estimates below 1e8.
pub fn validate_problem(problem: &ProblemSpec) -> Vec<Violation> {
    let mut violations = Vec::new();
    let n = problem.n();
    let mut rng = crate::rng::SplitMix64::substream(VALIDATE_SEED, 0);
    let (lb, ub) = (problem.bounds.lb(), problem.bounds.ub());

    let points: Vec<DVector<f64>> = (0..VALIDATE_POINTS)
        .map(|_| {
            DVector::from_fn(n, |i, _| {
                let w = ub[i] - lb[i];
                lb[i] + w * (0.1 + 0.8 * rng.next_f64())
            })
        })
        .collect();

    for (j, obj) in problem.objectives().iter().enumerate() {
        for x in &points {
            let ga = obj.gradient(x);
            let gfd = fd_gradient(obj, x);
            let scale = 1.0f64.max(ga.amax()).max(gfd.amax());
            let err = (&ga - &gfd).amax() / scale;
            if err > FD_REL_TOL {
                violations.push(Violation {
                    objective: j,
                    kind: ViolationKind::Gradient,
                    at: Some(x.clone()),
                    magnitude: err,
                });
                break;
            }
        }
        if obj.has_hessian() {
            for x in &points {
                let ha = obj.hessian(x).expect("hessian present");
                let hfd = fd_hessian(obj, x);
                let scale = 1.0f64.max(ha.amax()).max(hfd.amax());
                let err = (&ha - &hfd).amax() / scale;
                if err > FD_REL_TOL {
                    violations.push(Violation {
                        objective: j,
                        kind: ViolationKind::Hessian,
                        at: Some(x.clone()),
                        magnitude: err,
                    });
                    break;
                }
            }
        }
    }

    for (j, term) in problem.terms().iter().enumerate() {
        if term.is_zero() {
            continue;
        }
        let cond = term.condition_estimate();
        if !(cond < TERM_COND_LIMIT) {
            violations.push(Violation {
                objective: j,
                kind: ViolationKind::TermConditioning,
                at: None,
                magnitude: cond,
            });
        }
    }

    violations
}

fn fd_step(xi: f64) -> f64 {
    6e-6 * f64::max(1.0, xi.abs())
}

fn fd_gradient(obj: &SmoothObjective, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let h = fd_step(x[i]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (obj.value(&xp) - obj.value(&xm)) / (2.0 * h)
    })
}

fn fd_hessian(obj: &SmoothObjective, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let step = fd_step(x[i]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        let col = (obj.gradient(&xp) - obj.gradient(&xm)) / (2.0 * step);
        h.set_column(i, &col);
    }
    // Symmetrize: central differences of an exact gradient are already close.
    let ht = h.transpose();
    (h + ht) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sphere() -> SmoothObjective {
        SmoothObjective::new(
            |x: &DVector<f64>| x.norm_squared(),
            |x: &DVector<f64>| 2.0 * x,
        )
        .with_hessian(|x: &DVector<f64>| DMatrix::identity(x.len(), x.len()) * 2.0)
    }

    fn sphere_problem(n: usize) -> ProblemSpec {
        ProblemSpec::smooth(
            "sphere",
            vec![sphere()],
            Bounds::uniform(n, -5.0, 5.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn bounds_reject_inverted_intervals() {
        let err = Bounds::new(DVector::from_vec(vec![0.0]), DVector::from_vec(vec![0.0]));
        assert!(matches!(err, Err(Error::InvalidBounds { .. })));
    }

    #[test]
    fn bounds_midpoint_and_width() {
        let b = Bounds::uniform(2, -3.0, 7.0).unwrap();
        assert_eq!(b.midpoint(), DVector::from_vec(vec![2.0, 2.0]));
        assert_eq!(b.width(), DVector::from_vec(vec![10.0, 10.0]));
    }

    #[test]
    fn contains_honours_tolerance() {
        let b = Bounds::uniform(1, 0.0, 1.0).unwrap();
        assert!(b.contains(&DVector::from_vec(vec![1.0 + 1e-13]), 1e-12));
        assert!(!b.contains(&DVector::from_vec(vec![1.0 + 1e-11]), 1e-12));
    }

    #[test]
    fn evaluate_composite_values() {
        // Scaled quadratic pair: F at the origin is (0, 4).
        let n = 2;
        let f1 = SmoothObjective::new(
            move |x: &DVector<f64>| x.norm_squared() / n as f64,
            move |x: &DVector<f64>| x * (2.0 / n as f64),
        );
        let f2 = SmoothObjective::new(
            move |x: &DVector<f64>| {
                x.iter().map(|xi| (xi - 2.0).powi(2)).sum::<f64>() / n as f64
            },
            move |x: &DVector<f64>| {
                DVector::from_fn(x.len(), |i, _| 2.0 * (x[i] - 2.0) / n as f64)
            },
        );
        let p = ProblemSpec::smooth(
            "pair",
            vec![f1, f2],
            Bounds::uniform(2, -5.0, 5.0).unwrap(),
        )
        .unwrap();
        let f = evaluate_objectives(&p, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(f[0], 0.0);
        assert_relative_eq!(f[1], 4.0);
    }

    #[test]
    fn evaluate_rejects_points_outside_the_box() {
        let p = sphere_problem(2);
        let err = evaluate_objectives(&p, &DVector::from_vec(vec![5.1, 0.0]));
        assert!(matches!(err, Err(Error::OutOfDomain { index: 0, .. })));
    }

    #[test]
    fn evaluate_accepts_boundary_within_tolerance() {
        let p = sphere_problem(2);
        let x = DVector::from_vec(vec![5.0 + 1e-13, 0.0]);
        assert!(evaluate_objectives(&p, &x).is_ok());
    }

    #[test]
    fn validate_passes_consistent_problem() {
        assert!(validate_problem(&sphere_problem(3)).is_empty());
    }

    #[test]
    fn validate_flags_wrong_gradient() {
        // ||x||^2 with gradient reported as x instead of 2x: the worst
        // relative error over the probe points is about 0.5.
        let bad = SmoothObjective::new(|x: &DVector<f64>| x.norm_squared(), |x: &DVector<f64>| {
            x.clone()
        });
        let p = ProblemSpec::smooth(
            "bad",
            vec![bad],
            Bounds::uniform(4, 0.5, 2.0).unwrap(),
        )
        .unwrap();
        let violations = validate_problem(&p);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].kind, ViolationKind::Gradient);
        assert!((violations[0].magnitude - 0.5).abs() < 0.05, "magnitude {}", violations[0].magnitude);
    }

    #[test]
    fn validate_flags_wrong_hessian() {
        let bad = SmoothObjective::new(
            |x: &DVector<f64>| x.norm_squared(),
            |x: &DVector<f64>| 2.0 * x,
        )
        .with_hessian(|x: &DVector<f64>| DMatrix::identity(x.len(), x.len()) * 3.0);
        let p = ProblemSpec::smooth(
            "badh",
            vec![bad],
            Bounds::uniform(2, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let violations = validate_problem(&p);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].kind, ViolationKind::Hessian);
    }

    #[test]
    fn config_default_round_trips_validation() {
        SolverConfig::default().validate().unwrap();
        SolverConfig::bench_preset().validate().unwrap();
    }

    #[test]
    fn config_rejects_bad_eta() {
        let cfg = SolverConfig {
            eta: 1.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn termination_converged_classification() {
        assert!(TerminationReason::DirectionTol.converged());
        assert!(TerminationReason::ThetaTol.converged());
        assert!(!TerminationReason::IterCap.converged());
        assert!(!TerminationReason::LineSearchFail.converged());
    }
}
