//! Solvers for unconstrained multiobjective composite optimization.
//!
//! The library minimizes vectors of composite objectives `F_j = f_j + g_j`,
//! with smooth `f_j` and polyhedral support-function terms `g_j`, over a box.
//! Three line-search methods share one direction subproblem:
//!
//! * **NPQNA**: per-objective BFGS curvature with an average-type nonmonotone
//!   acceptance rule;
//! * **PQNA**: the same curvature models with a quadratic regularization term
//!   and a monotone Armijo rule;
//! * **NPGA**: floored true Hessians with a monotone Armijo rule.
//!
//! The direction subproblem - minimize the worst quadratic model plus the
//! nonsmooth change - is solved by an embedded log-barrier interior-point
//! method after dualizing the support functions ([`subproblem`]).
//!
//! [`problems`] ships a 23-entry registry of benchmark instances and
//! [`harness`] runs the multi-start experiment pipeline (shared starts and
//! terms across algorithms, nondominated filtering, CSV/SVG export).

pub mod error;
pub mod harness;
pub mod linesearch;
pub mod model;
pub mod nonsmooth;
pub mod problems;
pub mod quasi_newton;
pub mod rng;
pub mod solver;
pub mod subproblem;

pub use nalgebra;

pub use error::{Error, Result};
pub use harness::{
    export_front, export_table, nondominated_filter, run_multistart, BenchmarkRow, Front,
    FrontFormat, FrontPoint, MultistartOutcome, RunOutcome,
};
pub use model::{
    evaluate_objectives, validate_problem, Algorithm, Bounds, Counters, IterateRecord,
    ProblemSpec, RunReport, SmoothObjective, SolverConfig, StepDiagnostics, TerminationReason,
};
pub use nonsmooth::{generate_random_term, PolyhedralTerm};
pub use problems::{attach_nonsmooth, get_problem, registry, uniform_starts, ProblemEntry};
pub use solver::run;
pub use subproblem::{
    kkt_residual, solve_subproblem, strictly_feasible_start, KktResiduals, SubproblemInput,
    SubproblemSolution,
};
