//! The per-iteration direction subproblem.
//!
//! At an iterate `x` the solvers minimize over `d` the worst-case model
//!
//! ```text
//! max_j  Q_j(x, d) = grad_j' d + 1/2 d' M_j d + g_j(x + d) - g_j(x)
//! ```
//!
//! optionally subject to `lb <= x + d <= ub`.  The nonsmooth values are
//! eliminated through their dual description: `g_j(x + d)` is the optimal
//! value of `min b_j' w_j` over `A_j' w_j = x + d, w_j >= 0` with
//! `A_j = [G_j; -G_j]` and `b_j = delta_j e`, which turns the min-max into a
//! smooth quadratically constrained program in the epigraph variable `t`:
//!
//! ```text
//! min  t
//! s.t. grad_j' d + 1/2 d' M_j d + b_j' w_j - g_j(x) - t <= 0
//!      A_j' w_j = x + d,  w_j >= 0          (objectives with a nonzero term)
//!      lb <= x + d <= ub                    (when box rows are enabled)
//! ```
//!
//! The backend is a self-contained log-barrier interior-point solve.  Every
//! inequality row carries an explicit slack variable, and damped Newton
//! iterates on the barrier-KKT system - equality constraints and their
//! multipliers explicit, barrier optimality written as scaled complementarity
//! rows `s * y_s = bw` - warm-started across an outer continuation that
//! multiplies the barrier weight by 0.1 from 1 down to the configured floor.
//! Both choices are load-bearing in f64: near the floor the active slacks are
//! of size `bw` while `t`, `d`, `w` are O(1), so a slack derived by
//! subtraction would quantize the multipliers at `ulp / bw`, and the
//! equivalent `y_s = bw / s` form of the centering rows produces wildly
//! overshooting Newton directions from off-center points.  Objectives with a
//! zero term simply drop their `w` block, so purely smooth instances stay
//! small.
//!
//! The reported `theta` is the primal value `max_j Q_j(x, d)` of the returned
//! direction, evaluated with the closed-form support values, and the simplex
//! weights `lambda` are the multipliers of the epigraph rows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Bounds, SolverConfig};
use crate::nonsmooth::PolyhedralTerm;

/// Multipliers below this are treated as exactly zero when extracting lambda.
const LAMBDA_CUTOFF: f64 = 1e-12;
/// Quadratic rows with slack below `1e-8 * max(1, |theta|)` count as active.
const ACTIVE_TOL: f64 = 1e-8;
/// Relative margin used to nudge boundary base points inward.
const BOUNDARY_NUDGE: f64 = 1e-9;

const MAX_NEWTON_PER_STAGE: usize = 60;
const MAX_STEP_HALVINGS: usize = 60;

/// Error-free sum: returns `(s, e)` with `s + e == a + b` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let ap = s - b;
    let bp = s - ap;
    (s, (a - ap) + (b - bp))
}

/// Error-free product via FMA: returns `(p, e)` with `p + e == a * b` exactly.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Compensated (Neumaier-style) accumulator for the epigraph-row defining
/// constraints, whose residuals pin slacks of size `bw` against O(1) terms.
#[derive(Default)]
struct CompSum {
    hi: f64,
    lo: f64,
}

impl CompSum {
    fn add(&mut self, v: f64) {
        let (s, e) = two_sum(self.hi, v);
        self.hi = s;
        self.lo += e;
    }

    fn add_prod(&mut self, a: f64, b: f64) {
        let (p, e) = two_prod(a, b);
        self.add(p);
        self.lo += e;
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// One subproblem instance.  `curvatures` must already be SPD (floored by the
/// caller); `reg >= 0` adds `reg * I` to every quadratic row, which is how the
/// regularized variant is expressed.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemInput<'a> {
    pub x: &'a DVector<f64>,
    pub grads: &'a [DVector<f64>],
    pub curvatures: &'a [DMatrix<f64>],
    pub terms: &'a [PolyhedralTerm],
    pub bounds: Option<&'a Bounds>,
    pub reg: f64,
}

impl<'a> SubproblemInput<'a> {
    fn validate(&self) -> Result<()> {
        let m = self.grads.len();
        let n = self.x.len();
        if m == 0 {
            return Err(Error::InvalidConfig("subproblem needs at least one objective".into()));
        }
        if self.curvatures.len() != m || self.terms.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.curvatures.len().max(self.terms.len()),
            });
        }
        for g in self.grads {
            if g.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: g.len() });
            }
        }
        for h in self.curvatures {
            if h.nrows() != n || h.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, got: h.nrows() });
            }
        }
        for t in self.terms {
            if t.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: t.dim() });
            }
        }
        if let Some(b) = self.bounds {
            if b.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: b.dim() });
            }
        }
        if !(self.reg >= 0.0) {
            return Err(Error::InvalidConfig("reg must be nonnegative".into()));
        }
        Ok(())
    }
}

/// KKT residual record of a candidate solution, evaluated with the returned
/// multipliers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Weighted stationarity in the infinity norm.
    pub stationarity: f64,
    /// `max_j max(0, Q_j - theta)`.
    pub feasibility: f64,
    /// `max_j |lambda_j (Q_j - theta)|`.
    pub complementarity: f64,
    /// `|sum_j lambda_j - 1|`.
    pub simplex: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.complementarity)
            .max(self.simplex)
    }
}

/// Solution of one subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub d: DVector<f64>,
    /// Primal optimal value `max_j Q_j(x, d)`.
    pub theta: f64,
    /// Simplex weights (normalized; entries below 1e-12 are exactly zero).
    pub lambda: DVector<f64>,
    /// `Q_j(x, d)` per objective.
    pub row_values: DVector<f64>,
    /// Subgradients of the nonsmooth terms at `x + d` recovered from the
    /// equality multipliers (vertex subgradients for zero-weight objectives).
    pub xi: Vec<DVector<f64>>,
    /// Box-row multipliers when box rows were present.
    pub lower_multipliers: Option<DVector<f64>>,
    pub upper_multipliers: Option<DVector<f64>>,
    /// Quadratic rows active at the solution.
    pub active: Vec<bool>,
    pub kkt: KktResiduals,
    /// `|sum_j lambda_j - 1|` before normalization: how well the final stage
    /// was centered.  Informational.
    pub centering_gap: f64,
    /// Barrier weight of the last continuation stage.
    pub barrier_weight: f64,
    /// Total Newton iterations across all stages.
    pub newton_iterations: usize,
}

/// Strictly feasible start for the barrier solve at base point `x`.
#[derive(Debug, Clone)]
pub struct FeasibleStart {
    pub d: DVector<f64>,
    /// One `w_j >= 0` block per objective; `None` for zero terms.
    pub w: Vec<Option<DVector<f64>>>,
    pub t: f64,
}

/// Builds the canonical strictly feasible start: `d = 0`,
/// `w_j = (max(v, 0) + 1, max(-v, 0) + 1)` with `v = G_j^{-T} x`, and `t` one
/// above the worst row.  Fails with [`Error::BoundaryStart`] when `x` touches
/// the box boundary; callers are expected to nudge inward and shift `d`.
pub fn strictly_feasible_start(
    x: &DVector<f64>,
    terms: &[PolyhedralTerm],
    bounds: Option<&Bounds>,
) -> Result<FeasibleStart> {
    if let Some(b) = bounds {
        for i in 0..x.len() {
            if x[i] <= b.lb()[i] || x[i] >= b.ub()[i] {
                return Err(Error::BoundaryStart);
            }
        }
    }
    let d = DVector::zeros(x.len());
    let (w, bases) = start_blocks(x, &d, terms);
    let t = bases.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) + 1.0;
    Ok(FeasibleStart { d, w, t })
}

/// The `w` blocks for a start whose equality base point is `x + d`, together
/// with each row's value at that start excluding the quadratic part and `t`.
fn start_blocks(
    x: &DVector<f64>,
    d: &DVector<f64>,
    terms: &[PolyhedralTerm],
) -> (Vec<Option<DVector<f64>>>, Vec<f64>) {
    let target = x + d;
    let mut bases = Vec::with_capacity(terms.len());
    let mut blocks = Vec::with_capacity(terms.len());
    for term in terms {
        if term.is_zero() {
            blocks.push(None);
            bases.push(0.0);
            continue;
        }
        let n = term.dim();
        let v = term.apply_inv_t(&target);
        let mut w = DVector::zeros(2 * n);
        for i in 0..n {
            w[i] = v[i].max(0.0) + 1.0;
            w[n + i] = (-v[i]).max(0.0) + 1.0;
        }
        bases.push(term.delta() * w.sum() - term.eval_support(x));
        blocks.push(Some(w));
    }
    (blocks, bases)
}

/// Offsets into the stacked primal variable `z = (t, d, q, l, u, w...)` and
/// the multiplier vector `y = (yq, yl, yu, yw...)`.  `q` are the epigraph-row
/// slacks, `l`/`u` the box slacks (present iff bounds are), and each nonzero
/// term contributes a `w` block of `2n` nonnegative variables plus an
/// equality block of `n` multipliers.
#[derive(Debug, Clone)]
struct Layout {
    n: usize,
    m: usize,
    q_off: usize,
    box_off: Option<usize>,
    w_offset: Vec<Option<usize>>,
    dim_z: usize,
    ybox_off: Option<usize>,
    yw_offset: Vec<Option<usize>>,
    dim_y: usize,
}

impl Layout {
    fn new(input: &SubproblemInput) -> Self {
        let n = input.x.len();
        let m = input.grads.len();
        let q_off = 1 + n;
        let mut dim_z = q_off + m;
        let box_off = input.bounds.map(|_| {
            let o = dim_z;
            dim_z += 2 * n;
            o
        });
        let mut w_offset = Vec::with_capacity(m);
        for term in input.terms {
            if term.is_zero() {
                w_offset.push(None);
            } else {
                w_offset.push(Some(dim_z));
                dim_z += 2 * n;
            }
        }
        let mut dim_y = m;
        let ybox_off = input.bounds.map(|_| {
            let o = dim_y;
            dim_y += 2 * n;
            o
        });
        let mut yw_offset = Vec::with_capacity(m);
        for term in input.terms {
            if term.is_zero() {
                yw_offset.push(None);
            } else {
                yw_offset.push(Some(dim_y));
                dim_y += n;
            }
        }
        Self {
            n,
            m,
            q_off,
            box_off,
            w_offset,
            dim_z,
            ybox_off,
            yw_offset,
            dim_y,
        }
    }
}

struct Qcqp<'a> {
    input: SubproblemInput<'a>,
    lay: Layout,
    /// `M_j = H_j + reg I` per objective.
    m_mats: Vec<DMatrix<f64>>,
    /// `g_j(x)` per objective.
    g_at_x: Vec<f64>,
}

impl<'a> Qcqp<'a> {
    fn new(input: SubproblemInput<'a>) -> Self {
        let lay = Layout::new(&input);
        let n = lay.n;
        let m_mats = input
            .curvatures
            .iter()
            .map(|h| {
                if input.reg == 0.0 {
                    h.clone()
                } else {
                    h + DMatrix::identity(n, n) * input.reg
                }
            })
            .collect();
        let g_at_x = input.terms.iter().map(|t| t.eval_support(input.x)).collect();
        Self { input, lay, m_mats, g_at_x }
    }

    fn d_of(&self, z: &DVector<f64>) -> DVector<f64> {
        z.rows(1, self.lay.n).into_owned()
    }

    /// Residual of defining row `j`: `q_j - t + SQ_j(d) + delta_j 1'w_j -
    /// g_j(x)`, evaluated with error-free transforms (`0.5 * m` is exact).
    fn quad_constraint(&self, j: usize, z: &DVector<f64>) -> f64 {
        let n = self.lay.n;
        let mut acc = CompSum::default();
        acc.add(z[self.lay.q_off + j]);
        acc.add(-z[0]);
        acc.add(-self.g_at_x[j]);
        for i in 0..n {
            acc.add_prod(self.input.grads[j][i], z[1 + i]);
        }
        for r in 0..n {
            for c in 0..n {
                let (p, e) = two_prod(0.5 * self.m_mats[j][(r, c)], z[1 + r]);
                acc.add_prod(p, z[1 + c]);
                acc.add(e * z[1 + c]);
            }
        }
        if let Some(off) = self.lay.w_offset[j] {
            let delta = self.input.terms[j].delta();
            for r in 0..2 * n {
                acc.add_prod(delta, z[off + r]);
            }
        }
        acc.value()
    }

    /// Residuals at `(z, y)`: `rz` holds the dual-feasibility rows for `t`
    /// and `d` plus one scaled complementarity row `s * y_s - bw` per
    /// positive variable, `c` the equality constraints.  The complementarity
    /// form (rather than `y_s - bw / s`) is what keeps Newton steps sane far
    /// from the central path.
    fn residuals(&self, z: &DVector<f64>, y: &DVector<f64>, bw: f64) -> (DVector<f64>, DVector<f64>) {
        let lay = &self.lay;
        let n = lay.n;
        let d = self.d_of(z);
        let mut rz = DVector::zeros(lay.dim_z);
        let mut c = DVector::zeros(lay.dim_y);

        rz[0] = 1.0 - y.rows(0, lay.m).sum();
        for j in 0..lay.m {
            let gd = &self.input.grads[j] + &self.m_mats[j] * &d;
            for i in 0..n {
                rz[1 + i] += y[j] * gd[i];
            }
            rz[lay.q_off + j] = z[lay.q_off + j] * y[j] - bw;
            c[j] = self.quad_constraint(j, z);
        }
        if let (Some(zo), Some(yo)) = (lay.box_off, lay.ybox_off) {
            let b = self.input.bounds.expect("box offsets imply bounds");
            for i in 0..n {
                rz[1 + i] += -y[yo + i] + y[yo + n + i];
                rz[zo + i] = z[zo + i] * y[yo + i] - bw;
                rz[zo + n + i] = z[zo + n + i] * y[yo + n + i] - bw;
                c[yo + i] = z[zo + i] - (self.input.x[i] + d[i] - b.lb()[i]);
                c[yo + n + i] = z[zo + n + i] + self.input.x[i] + d[i] - b.ub()[i];
            }
        }
        for j in 0..lay.m {
            let (Some(off), Some(yo)) = (lay.w_offset[j], lay.yw_offset[j]) else {
                continue;
            };
            let term = &self.input.terms[j];
            let delta = term.delta();
            let g = term.matrix();
            for i in 0..n {
                rz[1 + i] -= y[yo + i];
            }
            for r in 0..n {
                let mut a_yw = 0.0;
                for i in 0..n {
                    a_yw += g[(r, i)] * y[yo + i];
                }
                rz[off + r] = z[off + r] * (delta * y[j] + a_yw) - bw;
                rz[off + n + r] = z[off + n + r] * (delta * y[j] - a_yw) - bw;
            }
            for i in 0..n {
                let mut s = 0.0;
                for cc in 0..n {
                    s += g[(cc, i)] * (z[off + cc] - z[off + n + cc]);
                }
                c[yo + i] = s - d[i] - self.input.x[i];
            }
        }
        (rz, c)
    }

    /// Exact Jacobian of the full residual system `(r_z, c)` in the stacked
    /// unknown `(z, y)`.  The complementarity rows make it unsymmetric, which
    /// the LU-based solve does not mind.
    fn kkt_matrix(&self, z: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        let lay = &self.lay;
        let n = lay.n;
        let nz = lay.dim_z;
        let d = self.d_of(z);
        let mut k = DMatrix::zeros(nz + lay.dim_y, nz + lay.dim_y);

        for j in 0..lay.m {
            let gd = &self.input.grads[j] + &self.m_mats[j] * &d;
            // t row and the defining equality of row j share the structure
            // "t versus the row value"; the d rows carry the weighted models.
            k[(0, nz + j)] = -1.0;
            k[(nz + j, 0)] = -1.0;
            for i in 0..n {
                for cc in 0..n {
                    k[(1 + i, 1 + cc)] += y[j] * self.m_mats[j][(i, cc)];
                }
                k[(1 + i, nz + j)] = gd[i];
                k[(nz + j, 1 + i)] = gd[i];
            }
            let qc = lay.q_off + j;
            k[(qc, qc)] = y[j];
            k[(qc, nz + j)] = z[qc];
            k[(nz + j, qc)] = 1.0;
            if let Some(off) = lay.w_offset[j] {
                let delta = self.input.terms[j].delta();
                for r in 0..2 * n {
                    k[(nz + j, off + r)] = delta;
                }
            }
        }
        if let (Some(zo), Some(yo)) = (lay.box_off, lay.ybox_off) {
            for i in 0..2 * n {
                k[(zo + i, zo + i)] = y[yo + i];
                k[(zo + i, nz + yo + i)] = z[zo + i];
                k[(nz + yo + i, zo + i)] = 1.0;
            }
            for i in 0..n {
                k[(1 + i, nz + yo + i)] = -1.0;
                k[(1 + i, nz + yo + n + i)] = 1.0;
                k[(nz + yo + i, 1 + i)] = -1.0;
                k[(nz + yo + n + i, 1 + i)] = 1.0;
            }
        }
        for j in 0..lay.m {
            let (Some(off), Some(yo)) = (lay.w_offset[j], lay.yw_offset[j]) else {
                continue;
            };
            let term = &self.input.terms[j];
            let delta = term.delta();
            let g = term.matrix();
            for i in 0..n {
                k[(1 + i, nz + yo + i)] = -1.0;
                k[(nz + yo + i, 1 + i)] = -1.0;
                for cc in 0..n {
                    k[(nz + yo + i, off + cc)] = g[(cc, i)];
                    k[(nz + yo + i, off + n + cc)] = -g[(cc, i)];
                }
            }
            for r in 0..n {
                let mut a_yw = 0.0;
                for i in 0..n {
                    a_yw += g[(r, i)] * y[yo + i];
                }
                k[(off + r, off + r)] = delta * y[j] + a_yw;
                k[(off + n + r, off + n + r)] = delta * y[j] - a_yw;
                k[(off + r, nz + j)] = delta * z[off + r];
                k[(off + n + r, nz + j)] = delta * z[off + n + r];
                for i in 0..n {
                    k[(off + r, nz + yo + i)] = z[off + r] * g[(r, i)];
                    k[(off + n + r, nz + yo + i)] = -z[off + n + r] * g[(r, i)];
                }
            }
        }
        k
    }

    /// Largest primal and dual steps keeping every positive variable (slacks,
    /// `w` blocks, and their multipliers) strictly positive, with a 0.995
    /// margin.  The two blocks get separate lengths: tying them together lets
    /// a collapsing multiplier on one side strangle the primal move that
    /// off-center Newton directions need.
    ///
    /// The dual cap also covers the reduced costs of the `w` blocks.  Their
    /// complementarity partner is not a multiplier entry but the combination
    /// `delta_j yq_j + (A_j yw_j)_r`, which starts positive and must stay so:
    /// once it crosses zero with `w` already at the boundary, the linearised
    /// complementarity row can only push `w` outward and Newton deadlocks.
    fn step_caps(
        &self,
        z: &DVector<f64>,
        y: &DVector<f64>,
        dz: &DVector<f64>,
        dy: &DVector<f64>,
    ) -> (f64, f64) {
        let lay = &self.lay;
        let cap = |alpha: &mut f64, value: f64, slope: f64| {
            if slope < 0.0 && value > 0.0 {
                *alpha = alpha.min(0.995 * value / -slope);
            }
        };
        let mut az = 1.0f64;
        let mut ay = 1.0f64;
        for j in 0..lay.m {
            cap(&mut az, z[lay.q_off + j], dz[lay.q_off + j]);
            cap(&mut ay, y[j], dy[j]);
        }
        if let (Some(zo), Some(yo)) = (lay.box_off, lay.ybox_off) {
            for i in 0..2 * lay.n {
                cap(&mut az, z[zo + i], dz[zo + i]);
                cap(&mut ay, y[yo + i], dy[yo + i]);
            }
        }
        for j in 0..lay.m {
            let (Some(off), Some(yo)) = (lay.w_offset[j], lay.yw_offset[j]) else {
                continue;
            };
            let term = &self.input.terms[j];
            let gm = term.matrix();
            let delta = term.delta();
            for r in 0..2 * lay.n {
                cap(&mut az, z[off + r], dz[off + r]);
                let (row, sign) = if r < lay.n {
                    (r, 1.0)
                } else {
                    (r - lay.n, -1.0)
                };
                let mut reduced = delta * y[j];
                let mut slope = delta * dy[j];
                for i in 0..lay.n {
                    reduced += sign * gm[(row, i)] * y[yo + i];
                    slope += sign * gm[(row, i)] * dy[yo + i];
                }
                cap(&mut ay, reduced, slope);
            }
        }
        (az, ay)
    }

    /// Damped Newton on the barrier KKT system for one continuation stage.
    /// Returns the Newton iteration count.
    fn newton_stage(
        &self,
        z: &mut DVector<f64>,
        y: &mut DVector<f64>,
        bw: f64,
        tol: f64,
    ) -> Result<usize> {
        let mut iters = 0;
        let mut best_res = f64::INFINITY;
        let mut stalled = 0;

        'newton: for _ in 0..MAX_NEWTON_PER_STAGE {
            let (rz, c) = self.residuals(z, y, bw);
            let res_norm = rz.amax().max(c.amax());
            if std::env::var_os("MCOPT_IPM_TRACE").is_some() {
                eprintln!("bw={bw:.1e} iter={iters} res={res_norm:.3e}");
            }
            if std::env::var_os("MCOPT_IPM_TRACE3").is_some() {
                let lay = &self.lay;
                let block = |v: &DVector<f64>, a: usize, b: usize| {
                    v.rows(a, b - a).amax()
                };
                let rd = block(&rz, 1, 1 + lay.n);
                let cq = block(&rz, lay.q_off, lay.q_off + lay.m);
                let (cl, cu) = if let Some(o) = lay.box_off {
                    (block(&rz, o, o + lay.n), block(&rz, o + lay.n, o + 2 * lay.n))
                } else {
                    (0.0, 0.0)
                };
                let eq_q = block(&c, 0, lay.m);
                let eq_box = if let Some(o) = lay.ybox_off {
                    block(&c, o, o + 2 * lay.n)
                } else {
                    0.0
                };
                eprintln!(
                    "    rt={:.2e} rd={rd:.2e} compq={cq:.2e} compl={cl:.2e} compu={cu:.2e} eqq={eq_q:.2e} eqbox={eq_box:.2e}",
                    rz[0].abs()
                );
            }
            if !res_norm.is_finite() {
                return Err(Error::Subproblem("barrier iterate left the interior".into()));
            }
            if res_norm <= tol {
                break;
            }
            // Stall guard: once Newton stops making measurable progress the
            // stage is as centered as f64 allows; keep the iterate, move on,
            // and let the final gate judge the result.
            if res_norm < 0.5 * best_res {
                best_res = res_norm;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 6 {
                    break;
                }
            }

            let step = self.solve_kkt(z, y, &rz, &c)?;
            let dz = step.rows(0, self.lay.dim_z).into_owned();
            let dy = step.rows(self.lay.dim_z, self.lay.dim_y).into_owned();

            // Cap the step at a 0.995 fraction to the boundary of the
            // positive variables, primal and dual separately: the split step
            // is what lets badly off-center instances move their primal block
            // while a multiplier collapses.  If it fails to reduce the
            // residual, fall back to damping the plain Newton step, which is
            // a guaranteed descent direction for the residual norm.
            let (az, ay) = self.step_caps(z, y, &dz, &dy);
            if std::env::var_os("MCOPT_IPM_TRACE2").is_some() {
                let mut zi = usize::MAX;
                let mut zb = f64::INFINITY;
                for i in self.lay.q_off..self.lay.dim_z {
                    if dz[i] < 0.0 && z[i] > 0.0 {
                        let a = z[i] / -dz[i];
                        if a < zb {
                            zb = a;
                            zi = i;
                        }
                    }
                }
                let mut yi = usize::MAX;
                let mut yb = f64::INFINITY;
                for i in 0..self.lay.dim_y {
                    if dy[i] < 0.0 && y[i] > 0.0 {
                        let a = y[i] / -dy[i];
                        if a < yb {
                            yb = a;
                            yi = i;
                        }
                    }
                }
                eprintln!(
                    "  az={az:.3e} argz={zi} z={:.3e} dz={:.3e}  ay={ay:.3e} argy={yi}  |dz|={:.3e} |dy|={:.3e}",
                    if zi < self.lay.dim_z { z[zi] } else { f64::NAN },
                    if zi < self.lay.dim_z { dz[zi] } else { f64::NAN },
                    dz.amax(),
                    dy.amax()
                );
            }
            let mut accepted = self.try_step(z, y, &dz, &dy, az, ay, az.min(ay), bw, res_norm);
            if !accepted {
                let mut alpha = az.min(ay);
                for _ in 0..MAX_STEP_HALVINGS {
                    if self.try_step(z, y, &dz, &dy, alpha, alpha, alpha, bw, res_norm) {
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            if !accepted {
                break 'newton;
            }
            iters += 1;
        }
        Ok(iters)
    }

    /// Evaluates the candidate `(z + az dz, y + ay dy)` and commits it when
    /// its residual norm clears the sufficient-decrease bar keyed to
    /// `floor_factor`.
    #[allow(clippy::too_many_arguments)]
    fn try_step(
        &self,
        z: &mut DVector<f64>,
        y: &mut DVector<f64>,
        dz: &DVector<f64>,
        dy: &DVector<f64>,
        az: f64,
        ay: f64,
        floor_factor: f64,
        bw: f64,
        res_norm: f64,
    ) -> bool {
        let zt = &*z + az * dz;
        let yt = &*y + ay * dy;
        let (rzt, ct) = self.residuals(&zt, &yt, bw);
        let rt = rzt.amax().max(ct.amax());
        if rt <= (1.0 - 1e-4 * floor_factor) * res_norm {
            *z = zt;
            *y = yt;
            true
        } else {
            false
        }
    }

    /// Solves the (regularized on retry) Newton system `K [dz; dy] = [-r_z; -c]`.
    fn solve_kkt(
        &self,
        z: &DVector<f64>,
        y: &DVector<f64>,
        rz: &DVector<f64>,
        c: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let nz = self.lay.dim_z;
        let ny = self.lay.dim_y;
        let total = nz + ny;
        let k = self.kkt_matrix(z, y);
        let mut rhs = DVector::zeros(total);
        for i in 0..nz {
            rhs[i] = -rz[i];
        }
        for i in 0..ny {
            rhs[nz + i] = -c[i];
        }

        // Symmetric Jacobi equilibration: the barrier diagonal spans
        // ~bw..1/bw across the continuation, and factoring the raw matrix
        // loses the small step components the late stages depend on.
        let scale = DVector::from_fn(total, |i, _| {
            let r = k.row(i).amax();
            if r > 0.0 {
                1.0 / r.sqrt()
            } else {
                1.0
            }
        });
        let mut ks = k.clone();
        for r in 0..total {
            for cc in 0..total {
                ks[(r, cc)] *= scale[r] * scale[cc];
            }
        }

        for attempt in 0..4 {
            let mut kk = ks.clone();
            if attempt > 0 {
                let tikhonov = 10f64.powi(-14 + 2 * attempt);
                for i in 0..total {
                    kk[(i, i)] += tikhonov;
                }
            }
            let lu = kk.lu();
            let solve_scaled = |r: &DVector<f64>| {
                let rs = DVector::from_fn(total, |i, _| r[i] * scale[i]);
                lu.solve(&rs).map(|sol| DVector::from_fn(total, |i, _| sol[i] * scale[i]))
            };
            if let Some(mut sol) = solve_scaled(&rhs) {
                // Iterative refinement against the unscaled, unregularized
                // matrix.  The residual is accumulated with error-free
                // transforms: flat curvature directions (floored Hessian
                // eigenvalues) push the condition number to ~1/spd_floor, and
                // a plain f64 residual would leave the forward error at
                // kappa * eps — far above what the late barrier stages need.
                for _ in 0..4 {
                    let resid = DVector::from_fn(total, |i, _| {
                        let mut acc = CompSum::default();
                        acc.add(rhs[i]);
                        for jj in 0..total {
                            acc.add_prod(-k[(i, jj)], sol[jj]);
                        }
                        acc.value()
                    });
                    let Some(corr) = solve_scaled(&resid) else { break };
                    let progress = corr.amax();
                    sol += corr;
                    if progress <= 1e-15 * sol.amax().max(1.0) {
                        break;
                    }
                }
                if sol.iter().all(|v| v.is_finite()) {
                    return Ok(sol);
                }
            }
        }
        Err(Error::Subproblem("KKT system is numerically singular".into()))
    }

    /// Unbarriered KKT residual norm, the yardstick for the crossover step.
    fn res_norm0(&self, z: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let (rz, c) = self.residuals(z, y, 0.0);
        rz.amax().max(c.amax())
    }

    /// Sign pattern of each nonzero term's `w` block (`+1` where the
    /// positive-part row dominates), used to eliminate the block during the
    /// crossover.
    fn term_signs(&self, z: &DVector<f64>) -> Vec<Option<DVector<f64>>> {
        let lay = &self.lay;
        (0..lay.m)
            .map(|j| {
                lay.w_offset[j].map(|off| {
                    DVector::from_fn(lay.n, |r, _| {
                        if z[off + r] >= z[off + lay.n + r] {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                })
            })
            .collect()
    }

    /// Active-set crossover run after the barrier continuation.
    ///
    /// Curvature rows floored at `spd_floor` leave the central path nearly
    /// flat in some directions; the staged barrier Newton then levels off
    /// with complementarity residuals orders of magnitude above the gate,
    /// because every step's second-order error in the epigraph rows re-seeds
    /// the residual it just removed.  The crossover sidesteps the limit
    /// cycle: classify each complementarity pair by its dominant side, pin
    /// active slacks and inactive multipliers to zero, eliminate the `w`
    /// blocks through their sign patterns, and solve the remaining equality
    /// KKT system with plain Newton.  The candidate replaces the barrier
    /// iterate only when it strictly improves the unbarriered residual, so a
    /// wrong classification never makes the answer worse.
    fn polish(&self, z: &mut DVector<f64>, y: &mut DVector<f64>) {
        let trace = std::env::var_os("MCOPT_IPM_TRACE4").is_some();
        let before = self.res_norm0(z, y);
        let mut signs = self.term_signs(z);
        // A second pass picks up sign flips exposed by the first solve.
        for pass in 0..2 {
            let Some((zc, yc)) = self.polish_candidate(z, y, &signs) else {
                if trace {
                    eprintln!("polish pass {pass}: candidate failed (before={before:.3e})");
                }
                return;
            };
            let after = self.res_norm0(&zc, &yc);
            if trace {
                eprintln!("polish pass {pass}: before={before:.3e} after={after:.3e}");
            }
            if after < before {
                *z = zc;
                *y = yc;
                return;
            }
            let next = self.term_signs(&zc);
            if next == signs {
                return;
            }
            signs = next;
        }
    }

    fn polish_candidate(
        &self,
        z: &DVector<f64>,
        y: &DVector<f64>,
        signs: &[Option<DVector<f64>>],
    ) -> Option<(DVector<f64>, DVector<f64>)> {
        let lay = &self.lay;
        let n = lay.n;
        let trace = std::env::var_os("MCOPT_IPM_TRACE4").is_some();

        // Ratio classification seeds the working sets: the side of each
        // complementarity pair closer to zero is taken as binding.
        let mut active: Vec<usize> = (0..lay.m)
            .filter(|&j| y[j] > z[lay.q_off + j])
            .collect();
        if active.is_empty() {
            let top = (0..lay.m).max_by(|&a, &b| y[a].total_cmp(&y[b]))?;
            active.push(top);
        }
        let (mut lo_set, mut up_set) = (Vec::new(), Vec::new());
        if let (Some(zo), Some(yo)) = (lay.box_off, lay.ybox_off) {
            for i in 0..n {
                let lower = y[yo + i] > z[zo + i];
                let upper = y[yo + n + i] > z[zo + n + i];
                if lower && upper {
                    return None;
                }
                if lower {
                    lo_set.push(i);
                }
                if upper {
                    up_set.push(i);
                }
            }
        }

        // Constant subgradient of each eliminated `w` block under its sign
        // pattern: `xi_j = delta_j G^{-1} s_j`.
        let xi: Vec<Option<DVector<f64>>> = (0..lay.m)
            .map(|j| {
                signs[j]
                    .as_ref()
                    .map(|s| self.input.terms[j].apply_inv(s) * self.input.terms[j].delta())
            })
            .collect();

        // Primal-dual working-set correction: solve the equality system on
        // the current sets, then repair the worst violation the candidate
        // exposes, until a clean candidate emerges or the budget runs out.
        // Each pass warm-starts from the previous candidate, so a solve that
        // slid along a flat valley repositions the next one near the right
        // root instead of the one closest to the barrier iterate.
        let mut zw = z.clone();
        let mut yw = y.clone();
        let budget = 4 + lay.m + 2 * n;
        for _ in 0..budget {
            let p = self.solve_reduced(&zw, &yw, &active, &lo_set, &up_set, &xi)?;
            let out = self.assemble_candidate(&p, &active, &lo_set, &up_set);
            match self.audit_candidate(&p, &active, &lo_set, &up_set) {
                None => return Some(out),
                Some(Correction::AddActive(j)) => {
                    active.push(j);
                    active.sort_unstable();
                }
                Some(Correction::DropActive(j)) => {
                    if active.len() == 1 {
                        return None;
                    }
                    active.retain(|&k| k != j);
                }
                Some(Correction::AddLower(i)) => {
                    if up_set.contains(&i) {
                        return None;
                    }
                    lo_set.push(i);
                    lo_set.sort_unstable();
                }
                Some(Correction::AddUpper(i)) => {
                    if lo_set.contains(&i) {
                        return None;
                    }
                    up_set.push(i);
                    up_set.sort_unstable();
                }
                Some(Correction::DropLower(i)) => lo_set.retain(|&k| k != i),
                Some(Correction::DropUpper(i)) => up_set.retain(|&k| k != i),
            }
            (zw, yw) = out;
            if trace {
                eprintln!("  polish sets a={active:?} lo={lo_set:?} up={up_set:?}");
            }
        }
        None
    }

    /// Newton on the reduced equality system in `(t, d, yq_A, yl_L, yu_U)`
    /// for fixed working sets; `xi` carries the eliminated `w`-block
    /// subgradients.  Returns the converged unknown vector.
    fn solve_reduced(
        &self,
        z: &DVector<f64>,
        y: &DVector<f64>,
        active: &[usize],
        lo_set: &[usize],
        up_set: &[usize],
        xi: &[Option<DVector<f64>>],
    ) -> Option<DVector<f64>> {
        let lay = &self.lay;
        let n = lay.n;
        let x = self.input.x;
        let a = active.len();
        let dim = 1 + n + a + lo_set.len() + up_set.len();
        let yq_off = 1 + n;
        let yl_off = yq_off + a;
        let yu_off = yl_off + lo_set.len();

        let mut p = DVector::zeros(dim);
        p[0] = z[0];
        for i in 0..n {
            p[1 + i] = z[1 + i];
        }
        for (k, &j) in active.iter().enumerate() {
            p[yq_off + k] = y[j];
        }
        if let Some(yo) = lay.ybox_off {
            for (k, &i) in lo_set.iter().enumerate() {
                p[yl_off + k] = y[yo + i];
            }
            for (k, &i) in up_set.iter().enumerate() {
                p[yu_off + k] = y[yo + n + i];
            }
        }

        let bounds = self.input.bounds;
        let scale = p[0].abs().max(1.0);
        let trace = std::env::var_os("MCOPT_IPM_TRACE4").is_some();
        let mut last_res = f64::INFINITY;
        // Weakly active constraints make the root double and Newton linear
        // (rate 1/4 in the residual), so the budget is sized for that case
        // rather than for the quadratic one.
        for _ in 0..60 {
            let d = p.rows(1, n).into_owned();
            let greds: Vec<DVector<f64>> = active
                .iter()
                .map(|&j| {
                    let mut g = &self.input.grads[j] + &self.m_mats[j] * &d;
                    if let Some(xi_j) = &xi[j] {
                        g += xi_j;
                    }
                    g
                })
                .collect();

            let mut r = DVector::zeros(dim);
            {
                let mut acc = CompSum::default();
                acc.add(-1.0);
                for k in 0..a {
                    acc.add(p[yq_off + k]);
                }
                r[0] = acc.value();
            }
            for i in 0..n {
                let mut acc = CompSum::default();
                for k in 0..a {
                    acc.add_prod(p[yq_off + k], greds[k][i]);
                }
                for (k, &li) in lo_set.iter().enumerate() {
                    if li == i {
                        acc.add(-p[yl_off + k]);
                    }
                }
                for (k, &ui) in up_set.iter().enumerate() {
                    if ui == i {
                        acc.add(p[yu_off + k]);
                    }
                }
                r[1 + i] = acc.value();
            }
            for (k, &j) in active.iter().enumerate() {
                let mut acc = CompSum::default();
                acc.add(-p[0]);
                acc.add(-self.g_at_x[j]);
                for i in 0..n {
                    acc.add_prod(self.input.grads[j][i], p[1 + i]);
                }
                for rr in 0..n {
                    for cc in 0..n {
                        let (pr, e) = two_prod(0.5 * self.m_mats[j][(rr, cc)], p[1 + rr]);
                        acc.add_prod(pr, p[1 + cc]);
                        acc.add(e * p[1 + cc]);
                    }
                }
                if let Some(xi_j) = &xi[j] {
                    for i in 0..n {
                        acc.add_prod(xi_j[i], x[i] + p[1 + i]);
                    }
                }
                r[yq_off + k] = acc.value();
            }
            if let Some(b) = bounds {
                for (k, &i) in lo_set.iter().enumerate() {
                    r[yl_off + k] = p[1 + i] - (b.lb()[i] - x[i]);
                }
                for (k, &i) in up_set.iter().enumerate() {
                    r[yu_off + k] = p[1 + i] - (b.ub()[i] - x[i]);
                }
            }

            last_res = r.amax();
            if trace {
                let imax = (0..dim).max_by(|&i, &j| r[i].abs().total_cmp(&r[j].abs())).unwrap();
                eprintln!("    rn res={last_res:.3e} at row {imax} t={} d3={}", p[0], p[dim.min(4) - 1]);
            }
            if last_res <= 1e-13 * scale {
                return Some(p);
            }

            let mut jm = DMatrix::zeros(dim, dim);
            for k in 0..a {
                jm[(0, yq_off + k)] = 1.0;
            }
            for i in 0..n {
                for cc in 0..n {
                    let mut sum = 0.0;
                    for (k, &j) in active.iter().enumerate() {
                        sum += p[yq_off + k] * self.m_mats[j][(i, cc)];
                    }
                    jm[(1 + i, 1 + cc)] = sum;
                }
                for k in 0..a {
                    jm[(1 + i, yq_off + k)] = greds[k][i];
                }
                for (k, &li) in lo_set.iter().enumerate() {
                    if li == i {
                        jm[(1 + i, yl_off + k)] = -1.0;
                    }
                }
                for (k, &ui) in up_set.iter().enumerate() {
                    if ui == i {
                        jm[(1 + i, yu_off + k)] = 1.0;
                    }
                }
            }
            for k in 0..a {
                jm[(yq_off + k, 0)] = -1.0;
                for i in 0..n {
                    jm[(yq_off + k, 1 + i)] = greds[k][i];
                }
            }
            for (k, &i) in lo_set.iter().enumerate() {
                jm[(yl_off + k, 1 + i)] = 1.0;
            }
            for (k, &i) in up_set.iter().enumerate() {
                jm[(yu_off + k, 1 + i)] = 1.0;
            }

            let Some(step) = jm.lu().solve(&(-&r)) else {
                if trace {
                    eprintln!("  reduced newton: singular jacobian (res={last_res:.3e})");
                }
                return None;
            };
            if !step.iter().all(|v| v.is_finite()) {
                if trace {
                    eprintln!("  reduced newton: non-finite step (res={last_res:.3e})");
                }
                return None;
            }
            p += step;
        }
        if trace {
            eprintln!("  reduced newton: no convergence (res={last_res:.3e})");
        }
        None
    }

    /// Checks a reduced solution against everything the working sets fixed.
    /// The first violation found (worst of its kind) comes back as a set
    /// correction; a clean candidate comes back assembled.
    fn audit_candidate(
        &self,
        p: &DVector<f64>,
        active: &[usize],
        lo_set: &[usize],
        up_set: &[usize],
    ) -> Option<Correction> {
        let lay = &self.lay;
        let n = lay.n;
        let x = self.input.x;
        let a = active.len();
        let yq_off = 1 + n;
        let yl_off = yq_off + a;
        let yu_off = yl_off + lo_set.len();
        let t = p[0];
        let d = p.rows(1, n).into_owned();
        let tol = 1e-9 * t.abs().max(1.0);

        // Dual feasibility first: drop the most negative multiplier.
        let mut worst = -tol;
        let mut verdict = None;
        for (k, &j) in active.iter().enumerate() {
            if p[yq_off + k] < worst {
                worst = p[yq_off + k];
                verdict = Some(Correction::DropActive(j));
            }
        }
        for (k, &i) in lo_set.iter().enumerate() {
            if p[yl_off + k] < worst {
                worst = p[yl_off + k];
                verdict = Some(Correction::DropLower(i));
            }
        }
        for (k, &i) in up_set.iter().enumerate() {
            if p[yu_off + k] < worst {
                worst = p[yu_off + k];
                verdict = Some(Correction::DropUpper(i));
            }
        }
        if verdict.is_some() {
            return verdict;
        }

        // Primal feasibility next: activate the most violated constraint.
        let v = x + &d;
        let mut worst = -tol;
        for j in 0..lay.m {
            if active.contains(&j) {
                continue;
            }
            let row = self.input.grads[j].dot(&d)
                + 0.5 * d.dot(&(&self.m_mats[j] * &d))
                + self.input.terms[j].eval_support(&v)
                - self.g_at_x[j];
            if t - row < worst {
                worst = t - row;
                verdict = Some(Correction::AddActive(j));
            }
        }
        if let Some(b) = self.input.bounds {
            for i in 0..n {
                let l = x[i] + d[i] - b.lb()[i];
                let u = b.ub()[i] - x[i] - d[i];
                if !lo_set.contains(&i) && l < worst {
                    worst = l;
                    verdict = Some(Correction::AddLower(i));
                }
                if !up_set.contains(&i) && u < worst {
                    worst = u;
                    verdict = Some(Correction::AddUpper(i));
                }
            }
        }
        verdict
    }

    /// Expands a reduced solution back to the full complementarity iterate,
    /// writing exact zeros on the working-set side of each pair and clamping
    /// roundoff-negative slacks and multipliers.
    fn assemble_candidate(
        &self,
        p: &DVector<f64>,
        active: &[usize],
        lo_set: &[usize],
        up_set: &[usize],
    ) -> (DVector<f64>, DVector<f64>) {
        let lay = &self.lay;
        let n = lay.n;
        let x = self.input.x;
        let a = active.len();
        let yq_off = 1 + n;
        let yl_off = yq_off + a;
        let yu_off = yl_off + lo_set.len();
        let t = p[0];
        let d = p.rows(1, n).into_owned();
        let v = x + &d;

        let mut z2 = DVector::zeros(lay.dim_z);
        let mut y2 = DVector::zeros(lay.dim_y);
        z2[0] = t;
        for i in 0..n {
            z2[1 + i] = d[i];
        }
        for j in 0..lay.m {
            if active.contains(&j) {
                z2[lay.q_off + j] = 0.0;
            } else {
                let row = self.input.grads[j].dot(&d)
                    + 0.5 * d.dot(&(&self.m_mats[j] * &d))
                    + self.input.terms[j].eval_support(&v)
                    - self.g_at_x[j];
                z2[lay.q_off + j] = (t - row).max(0.0);
            }
            y2[j] = match active.iter().position(|&aj| aj == j) {
                Some(k) => p[yq_off + k].max(0.0),
                None => 0.0,
            };
        }
        if let (Some(zo), Some(yo), Some(b)) = (lay.box_off, lay.ybox_off, self.input.bounds) {
            for i in 0..n {
                z2[zo + i] = (x[i] + d[i] - b.lb()[i]).max(0.0);
                z2[zo + n + i] = (b.ub()[i] - x[i] - d[i]).max(0.0);
            }
            for (k, &i) in lo_set.iter().enumerate() {
                z2[zo + i] = 0.0;
                y2[yo + i] = p[yl_off + k].max(0.0);
            }
            for (k, &i) in up_set.iter().enumerate() {
                z2[zo + n + i] = 0.0;
                y2[yo + n + i] = p[yu_off + k].max(0.0);
            }
        }
        for j in 0..lay.m {
            let (Some(off), Some(yo)) = (lay.w_offset[j], lay.yw_offset[j]) else {
                continue;
            };
            let term = &self.input.terms[j];
            let vh = term.apply_inv_t(&v);
            let s = DVector::from_fn(n, |r, _| if vh[r] >= 0.0 { 1.0 } else { -1.0 });
            let yw = term.apply_inv(&s) * (-term.delta() * y2[j]);
            for r in 0..n {
                z2[off + r] = vh[r].max(0.0);
                z2[off + n + r] = (-vh[r]).max(0.0);
                y2[yo + r] = yw[r];
            }
        }
        (z2, y2)
    }
}

/// Working-set repair chosen after auditing one reduced-system solution.
enum Correction {
    AddActive(usize),
    DropActive(usize),
    AddLower(usize),
    AddUpper(usize),
    DropLower(usize),
    DropUpper(usize),
}

/// Solves the direction subproblem at `input.x`.
///
/// Base points sitting on (or within `1e-9 * (ub - lb)` of) the box boundary
/// are shifted inward to seed the interior-point solve; the subproblem itself
/// is unchanged.  Fails with [`Error::SolverStall`] if the KKT residuals of
/// the computed solution exceed `config.subproblem_tol`.
pub fn solve_subproblem(
    input: &SubproblemInput,
    config: &SolverConfig,
) -> Result<SubproblemSolution> {
    input.validate()?;
    let qcqp = Qcqp::new(*input);
    let lay = qcqp.lay.clone();
    for (j, m) in qcqp.m_mats.iter().enumerate() {
        if m.clone().cholesky().is_none() {
            return Err(Error::NonConvexRow { objective: j });
        }
    }

    // Start point, nudged off the boundary if necessary.
    let d0 = match input.bounds {
        Some(b) => {
            let inner = b.clamp_interior(input.x, BOUNDARY_NUDGE);
            &inner - input.x
        }
        None => DVector::zeros(lay.n),
    };
    let (w0, bases) = start_blocks(input.x, &d0, input.terms);
    // Level: one above the worst full row at (d0, w0).
    let mut rows0 = Vec::with_capacity(lay.m);
    let mut worst = f64::NEG_INFINITY;
    for j in 0..lay.m {
        let v = bases[j] + input.grads[j].dot(&d0) + 0.5 * d0.dot(&(&qcqp.m_mats[j] * &d0));
        worst = worst.max(v);
        rows0.push(v);
    }
    let t0 = worst + 1.0;

    let mut z = DVector::zeros(lay.dim_z);
    let mut y = DVector::zeros(lay.dim_y);
    z[0] = t0;
    for i in 0..lay.n {
        z[1 + i] = d0[i];
    }
    for j in 0..lay.m {
        let q = t0 - rows0[j];
        z[lay.q_off + j] = q;
        y[j] = 1.0 / q;
    }
    if let (Some(zo), Some(yo)) = (lay.box_off, lay.ybox_off) {
        let b = input.bounds.expect("box offsets imply bounds");
        for i in 0..lay.n {
            // Slack starts are clamped away from zero: the constraint rows
            // are linear, so Newton restores them in one step, while a slack
            // of (say) 1e-9 would put 1/l^2 ~ 1e18 on the barrier diagonal
            // and wreck the first stage.
            let l = (input.x[i] + d0[i] - b.lb()[i]).max(1.0);
            let u = (b.ub()[i] - input.x[i] - d0[i]).max(1.0);
            z[zo + i] = l;
            z[zo + lay.n + i] = u;
            y[yo + i] = 1.0 / l;
            y[yo + lay.n + i] = 1.0 / u;
        }
    }
    for j in 0..lay.m {
        if let (Some(off), Some(w)) = (lay.w_offset[j], &w0[j]) {
            for r in 0..2 * lay.n {
                z[off + r] = w[r];
            }
        }
    }

    let mut bw = 1.0;
    let mut total_iters = 0;
    loop {
        let tol = if bw <= config.barrier_floor * 1.5 {
            1e-12
        } else {
            (1e-3 * bw).max(1e-12)
        };
        total_iters += qcqp.newton_stage(&mut z, &mut y, bw, tol)?;
        if bw <= config.barrier_floor * 1.5 {
            break;
        }
        bw *= 0.1;
    }
    qcqp.polish(&mut z, &mut y);

    extract_solution(&qcqp, &z, &y, bw, total_iters, config)
}

fn extract_solution(
    qcqp: &Qcqp,
    z: &DVector<f64>,
    y: &DVector<f64>,
    bw: f64,
    newton_iterations: usize,
    config: &SolverConfig,
) -> Result<SubproblemSolution> {
    let lay = &qcqp.lay;
    let input = &qcqp.input;
    let d = qcqp.d_of(z);

    // Primal row values and theta from the closed-form support values.
    let target = input.x + &d;
    let row_values = DVector::from_fn(lay.m, |j, _| {
        input.grads[j].dot(&d)
            + 0.5 * d.dot(&(&qcqp.m_mats[j] * &d))
            + input.terms[j].eval_support(&target)
            - qcqp.g_at_x[j]
    });
    let theta = row_values.max();

    // Epigraph-row multipliers from the final barrier stage.
    let lambda_raw = DVector::from_fn(lay.m, |j, _| y[j]);
    let centering_gap = (lambda_raw.sum() - 1.0).abs();
    let kept: Vec<f64> = lambda_raw
        .iter()
        .map(|&l| if l < LAMBDA_CUTOFF { 0.0 } else { l })
        .collect();
    let norm: f64 = kept.iter().sum();
    if !(norm > 0.0) {
        return Err(Error::Subproblem("all simplex weights vanished".into()));
    }
    let lambda = DVector::from_iterator(lay.m, kept.iter().map(|&l| l / norm));

    // Subgradients: equality multipliers give -yw_j / lambda_j for weighted
    // objectives; zero-weight or zero-term objectives fall back to the vertex
    // subgradient at x + d (reporting only).
    let mut xi = Vec::with_capacity(lay.m);
    for j in 0..lay.m {
        match lay.yw_offset[j] {
            Some(yo) if lambda_raw[j] >= LAMBDA_CUTOFF => {
                let block = y.rows(yo, lay.n).into_owned();
                xi.push(-block / lambda_raw[j]);
            }
            Some(_) => xi.push(input.terms[j].support_subgradient(&target)),
            None => xi.push(DVector::zeros(lay.n)),
        }
    }

    // Box multipliers (normalized alongside lambda).
    let (lower_multipliers, upper_multipliers) = match lay.ybox_off {
        Some(yo) => {
            let lo = DVector::from_fn(lay.n, |i, _| y[yo + i] / norm);
            let up = DVector::from_fn(lay.n, |i, _| y[yo + lay.n + i] / norm);
            (Some(lo), Some(up))
        }
        None => (None, None),
    };

    // Stationarity of the full KKT system with the recovered subgradients.
    let mut stat = DVector::zeros(lay.n);
    for j in 0..lay.m {
        if lambda[j] > 0.0 {
            let gd = &input.grads[j] + &qcqp.m_mats[j] * &d;
            stat.axpy(lambda[j], &(gd + &xi[j]), 1.0);
        }
    }
    if let (Some(lo), Some(up)) = (&lower_multipliers, &upper_multipliers) {
        stat += up - lo;
    }
    let stationarity = stat.amax();

    let feasibility = row_values
        .iter()
        .map(|&q| (q - theta).max(0.0))
        .fold(0.0, f64::max);
    let complementarity = (0..lay.m)
        .map(|j| (lambda[j] * (row_values[j] - theta)).abs())
        .fold(0.0, f64::max);

    let kkt = KktResiduals {
        stationarity,
        feasibility,
        complementarity,
        simplex: (lambda.sum() - 1.0).abs(),
    };
    if !(kkt.max() <= config.subproblem_tol) {
        if std::env::var_os("MCOPT_IPM_TRACE5").is_some() {
            eprintln!("gate dump: theta={theta:.9e}");
            eprintln!("  d = {:?}", d.as_slice());
            eprintln!("  rows - theta = {:?}", row_values.iter().map(|q| q - theta).collect::<Vec<_>>());
            eprintln!("  lambda_raw = {:?}", lambda_raw.as_slice());
            eprintln!("  lambda = {:?}", lambda.as_slice());
            eprintln!("  grads = {:?}", input.grads.iter().map(|g| g.as_slice()).collect::<Vec<_>>());
            eprintln!("  m_diag = {:?}", qcqp.m_mats.iter().map(|mm| (0..lay.n).map(|i| mm[(i, i)]).collect::<Vec<_>>()).collect::<Vec<_>>());
            eprintln!("  terms zero = {:?}", input.terms.iter().map(|t| t.is_zero()).collect::<Vec<_>>());
            eprintln!("  x = {:?}", input.x.as_slice());
            eprintln!("  stat={stationarity:.3e} comp={complementarity:.3e}");
        }
        return Err(Error::SolverStall(format!(
            "KKT residuals {:?} exceed tolerance {}",
            kkt, config.subproblem_tol
        )));
    }

    let active = (0..lay.m)
        .map(|j| z[lay.q_off + j] <= ACTIVE_TOL * f64::max(1.0, theta.abs()))
        .collect();

    Ok(SubproblemSolution {
        d,
        theta,
        lambda,
        row_values,
        xi,
        lower_multipliers,
        upper_multipliers,
        active,
        kkt,
        centering_gap,
        barrier_weight: bw,
        newton_iterations,
    })
}

/// Reference optimality residuals in the unconstrained composite form: the
/// stationarity term uses the maximizing-vertex subgradients of the terms at
/// `x + d` and ignores box rows.  At kinks or with active box rows this
/// measures the gap of that particular subgradient choice, not solution
/// quality; [`SubproblemSolution::kkt`] is the authoritative record.
pub fn kkt_residual(
    x: &DVector<f64>,
    d: &DVector<f64>,
    lambda: &DVector<f64>,
    grads: &[DVector<f64>],
    curvatures: &[DMatrix<f64>],
    terms: &[PolyhedralTerm],
    theta: f64,
) -> KktResiduals {
    let target = x + d;
    let m = grads.len();
    let mut stat = DVector::zeros(x.len());
    let mut feasibility = 0.0f64;
    let mut complementarity = 0.0f64;
    for j in 0..m {
        let q = grads[j].dot(d) + 0.5 * d.dot(&(&curvatures[j] * d))
            + terms[j].eval_support(&target)
            - terms[j].eval_support(x);
        feasibility = feasibility.max((q - theta).max(0.0));
        complementarity = complementarity.max((lambda[j] * (q - theta)).abs());
        let xi = terms[j].support_subgradient(&target);
        stat.axpy(lambda[j], &(&grads[j] + &curvatures[j] * d + xi), 1.0);
    }
    KktResiduals {
        stationarity: stat.amax(),
        feasibility,
        complementarity,
        simplex: (lambda.sum() - 1.0).abs(),
    }
}
