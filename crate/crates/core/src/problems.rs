//! The benchmark suite: 23 box-constrained instances with analytic oracles.
//!
//! Every entry carries its objective count `m`, variable count `n`, a cubic
//! box, and a provenance string naming where the formulas come from.  A few
//! instances appear twice at different dimensions; the higher-dimensional
//! variants of natively planar problems add `x3^2` to every objective so the
//! extra coordinate is genuinely optimized rather than dangling (the padding
//! is noted in the provenance string).
//!
//! Smooth parts ship analytic gradients *and* Hessians, cross-checked against
//! central differences by [`validate_problem`](crate::validate_problem) in the
//! test suite.  Nonsmooth parts are attached separately by
//! [`attach_nonsmooth`], which draws one random support-function term per
//! objective from a per-objective substream of a master seed, anchored at the
//! box midpoint; problems with a centered box therefore get zero terms (the
//! term scale is proportional to the anchor norm).

use crate::error::{Error, Result};
use crate::model::{Bounds, ProblemSpec, SmoothObjective};
use crate::nonsmooth::generate_random_term;
use crate::rng::SplitMix64;
use nalgebra::{DMatrix, DVector};

/// One registry row: identity, sizes, box, and formula provenance.
///
/// All boxes in the suite are cubes, so a single scalar per side suffices.
#[derive(Debug, Clone)]
pub struct ProblemEntry {
    pub id: usize,
    pub name: &'static str,
    pub m: usize,
    pub n: usize,
    pub lb: f64,
    pub ub: f64,
    pub source: &'static str,
}

impl ProblemEntry {
    pub fn bounds(&self) -> Bounds {
        Bounds::uniform(self.n, self.lb, self.ub).expect("registry boxes are well-formed")
    }

    /// Display name carrying the sizes, e.g. `FDS(3,5)`.
    pub fn label(&self) -> String {
        format!("{}({},{})", self.name, self.m, self.n)
    }

    /// Filesystem-friendly identifier, unique across the registry.
    pub fn slug(&self) -> String {
        format!("{}_n{}", self.name.to_lowercase(), self.n)
    }

    /// Builds the smooth problem (zero nonsmooth terms, box per the entry).
    pub fn spec(&self) -> ProblemSpec {
        let objectives = build_objectives(self.name, self.n);
        ProblemSpec::smooth(self.label(), objectives, self.bounds())
            .expect("registry entries are well-formed")
    }
}

static REGISTRY: [ProblemEntry; 23] = [
    ProblemEntry { id: 1, name: "AN1", m: 2, n: 2, lb: -3.0, ub: 7.0, source: "Ansary & Panda (2015)" },
    ProblemEntry { id: 2, name: "AP2", m: 2, n: 2, lb: -5.0, ub: 5.0, source: "reconstruction: anisotropic convex quadratic pair" },
    ProblemEntry { id: 3, name: "BK1", m: 2, n: 2, lb: -3.0, ub: 5.0, source: "Binh & Korn (1997)" },
    ProblemEntry { id: 4, name: "FDS", m: 3, n: 3, lb: -2.0, ub: 4.0, source: "Fliege, Grana Drummond & Svaiter (2009)" },
    ProblemEntry { id: 5, name: "FDS", m: 3, n: 5, lb: -2.0, ub: 2.0, source: "Fliege, Grana Drummond & Svaiter (2009)" },
    ProblemEntry { id: 6, name: "IKK1", m: 3, n: 2, lb: -2.0, ub: 3.0, source: "collection of Coello, Lamont & Van Veldhuizen (2007)" },
    ProblemEntry { id: 7, name: "IKK1", m: 3, n: 3, lb: -2.0, ub: 2.0, source: "collection of Coello, Lamont & Van Veldhuizen (2007); padded with x3^2" },
    ProblemEntry { id: 8, name: "JOS1", m: 2, n: 2, lb: -5.0, ub: 5.0, source: "Jin, Olhofer & Sendhoff (2001)" },
    ProblemEntry { id: 9, name: "LOVISON1", m: 2, n: 2, lb: -3.0, ub: 5.0, source: "Lovison (2011)" },
    ProblemEntry { id: 10, name: "LRS1", m: 2, n: 2, lb: -50.0, ub: 50.0, source: "collection of Coello, Lamont & Van Veldhuizen (2007)" },
    ProblemEntry { id: 11, name: "MHHM2", m: 3, n: 3, lb: -4.0, ub: 4.0, source: "collection of Coello, Lamont & Van Veldhuizen (2007); padded with x3^2" },
    ProblemEntry { id: 12, name: "MHHM2", m: 3, n: 2, lb: -4.0, ub: 4.0, source: "collection of Coello, Lamont & Van Veldhuizen (2007)" },
    ProblemEntry { id: 13, name: "MOP1", m: 2, n: 1, lb: -100.0, ub: 100.0, source: "Schaffer (1985)" },
    ProblemEntry { id: 14, name: "MOP7", m: 3, n: 3, lb: -4.0, ub: 4.0, source: "Viennet, Fonteix & Marc (1996); padded with x3^2" },
    ProblemEntry { id: 15, name: "MOP7", m: 3, n: 2, lb: -4.0, ub: 4.0, source: "Viennet, Fonteix & Marc (1996)" },
    ProblemEntry { id: 16, name: "MS1", m: 2, n: 2, lb: -2.0, ub: 2.0, source: "reconstruction: convex quadratic pair" },
    ProblemEntry { id: 17, name: "MS2", m: 2, n: 4, lb: -2.0, ub: 2.0, source: "reconstruction: sphere vs pairwise-difference quadratic" },
    ProblemEntry { id: 18, name: "SDD1", m: 3, n: 3, lb: -2.0, ub: 2.0, source: "reconstruction: cyclic convex quadratic triple" },
    ProblemEntry { id: 19, name: "SP1", m: 2, n: 2, lb: -1.0, ub: 5.0, source: "collection of Coello, Lamont & Van Veldhuizen (2007)" },
    ProblemEntry { id: 20, name: "VFM1", m: 3, n: 2, lb: -2.0, ub: 4.0, source: "collection of Coello, Lamont & Van Veldhuizen (2007)" },
    ProblemEntry { id: 21, name: "VFM1", m: 3, n: 3, lb: -2.0, ub: 4.0, source: "collection of Coello, Lamont & Van Veldhuizen (2007); padded with x3^2" },
    ProblemEntry { id: 22, name: "VU1", m: 2, n: 2, lb: -3.0, ub: 3.0, source: "collection of Coello, Lamont & Van Veldhuizen (2007)" },
    ProblemEntry { id: 23, name: "ZLT1", m: 3, n: 3, lb: -3.0, ub: 3.0, source: "collection of Coello, Lamont & Van Veldhuizen (2007)" },
];

/// The full suite in table order.
pub fn registry() -> &'static [ProblemEntry] {
    &REGISTRY
}

/// Looks a problem up by name (case-insensitive), optionally pinning the
/// dimension for names registered at several sizes.  Without an override the
/// first registered row wins.
pub fn get_problem(name: &str, n_override: Option<usize>) -> Result<ProblemSpec> {
    let upper = name.to_uppercase();
    let rows: Vec<&ProblemEntry> = REGISTRY.iter().filter(|e| e.name == upper).collect();
    if rows.is_empty() {
        return Err(Error::UnknownProblem(name.to_string()));
    }
    match n_override {
        None => Ok(rows[0].spec()),
        Some(n) => rows
            .iter()
            .find(|e| e.n == n)
            .map(|e| e.spec())
            .ok_or_else(|| {
                let dims: Vec<String> = rows.iter().map(|e| e.n.to_string()).collect();
                Error::UnknownProblem(format!(
                    "{upper} with n={n} (registered dimensions: {})",
                    dims.join(", ")
                ))
            }),
    }
}

/// Replaces the problem's nonsmooth terms with freshly generated ones, one
/// per objective, each from its own substream of `master_seed`.  The anchor
/// is the box midpoint, so the construction is deterministic in
/// `(problem name, n, master_seed)`; the seed is recorded on the result.
pub fn attach_nonsmooth(problem: &ProblemSpec, master_seed: u64) -> Result<ProblemSpec> {
    let anchor = problem.bounds().midpoint();
    let mut terms = Vec::with_capacity(problem.m());
    for j in 0..problem.m() {
        let tag = term_tag(problem.name(), j);
        let mut rng = SplitMix64::substream(master_seed, tag);
        terms.push(generate_random_term(problem.n(), &anchor, &mut rng)?);
    }
    let mut attached = problem.clone().with_terms(terms)?;
    attached.set_term_seed(master_seed);
    Ok(attached)
}

const STARTS_TAG: u64 = 0x5354_4152_5453;

/// `count` points with coordinates uniform over the box, from a fixed
/// substream of `master_seed`; bit-reproducible across platforms.
pub fn uniform_starts(bounds: &Bounds, count: usize, master_seed: u64) -> Vec<DVector<f64>> {
    let mut rng = SplitMix64::substream(master_seed, STARTS_TAG);
    let n = bounds.dim();
    (0..count)
        .map(|_| DVector::from_fn(n, |i, _| rng.uniform(bounds.lb()[i], bounds.ub()[i])))
        .collect()
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes
        .into_iter()
        .fold(0xCBF2_9CE4_8422_2325, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
        })
}

fn term_tag(label: &str, objective: usize) -> u64 {
    fnv1a(label.bytes().chain([b'#', objective as u8]))
}

/// `sum_i w_i (x_i - c_i)^2 + offset` with its diagonal Hessian.
fn diag_quadratic(weights: &[f64], centers: &[f64], offset: f64) -> SmoothObjective {
    let (wv, cv) = (weights.to_vec(), centers.to_vec());
    let (wg, cg) = (wv.clone(), cv.clone());
    let hess = DMatrix::from_diagonal(&DVector::from_iterator(
        wv.len(),
        wv.iter().map(|&w| 2.0 * w),
    ));
    SmoothObjective::new(
        move |x| {
            wv.iter()
                .zip(&cv)
                .zip(x.iter())
                .map(|((w, c), xi)| w * (xi - c).powi(2))
                .sum::<f64>()
                + offset
        },
        move |x| {
            DVector::from_iterator(
                x.len(),
                wg.iter().zip(&cg).zip(x.iter()).map(|((w, c), xi)| 2.0 * w * (xi - c)),
            )
        },
    )
    .with_hessian(move |_| hess.clone())
}

/// `sum_k w_k (a_k . x - s_k)^2 + offset` for squares of affine forms; covers
/// the cross-term quadratics in the suite.
fn affine_squares(n: usize, squares: &[(f64, &[f64], f64)], offset: f64) -> SmoothObjective {
    let terms: Vec<(f64, DVector<f64>, f64)> = squares
        .iter()
        .map(|(w, a, s)| (*w, DVector::from_column_slice(a), *s))
        .collect();
    let mut hess = DMatrix::zeros(n, n);
    for (w, a, _) in &terms {
        hess += (a * a.transpose()) * (2.0 * *w);
    }
    let tv = terms.clone();
    let tg = terms;
    SmoothObjective::new(
        move |x| {
            tv.iter().map(|(w, a, s)| w * (a.dot(x) - s).powi(2)).sum::<f64>() + offset
        },
        move |x| {
            tg.iter().fold(DVector::zeros(x.len()), |acc, (w, a, s)| {
                acc + 2.0 * *w * (a.dot(x) - s) * a
            })
        },
    )
    .with_hessian(move |_| hess.clone())
}

fn build_objectives(name: &str, n: usize) -> Vec<SmoothObjective> {
    match (name, n) {
        ("AN1", _) => an1(),
        ("AP2", _) => vec![
            diag_quadratic(&[0.25, 1.0], &[0.0, 0.0], 0.0),
            diag_quadratic(&[1.0, 0.25], &[2.0, 2.0], 0.0),
        ],
        ("BK1", _) => vec![
            diag_quadratic(&[1.0, 1.0], &[0.0, 0.0], 0.0),
            diag_quadratic(&[1.0, 1.0], &[5.0, 5.0], 0.0),
        ],
        ("FDS", _) => fds(n),
        ("IKK1", 2) => vec![
            diag_quadratic(&[1.0, 0.0], &[0.0, 0.0], 0.0),
            diag_quadratic(&[1.0, 0.0], &[20.0, 0.0], 0.0),
            diag_quadratic(&[0.0, 1.0], &[0.0, 0.0], 0.0),
        ],
        ("IKK1", _) => vec![
            diag_quadratic(&[1.0, 0.0, 1.0], &[0.0, 0.0, 0.0], 0.0),
            diag_quadratic(&[1.0, 0.0, 1.0], &[20.0, 0.0, 0.0], 0.0),
            diag_quadratic(&[0.0, 1.0, 1.0], &[0.0, 0.0, 0.0], 0.0),
        ],
        ("JOS1", _) => {
            let w = 1.0 / n as f64;
            vec![
                diag_quadratic(&vec![w; n], &vec![0.0; n], 0.0),
                diag_quadratic(&vec![w; n], &vec![2.0; n], 0.0),
            ]
        }
        ("LOVISON1", _) => vec![
            diag_quadratic(&[1.05, 0.98], &[0.0, 0.0], 0.0),
            diag_quadratic(&[0.99, 1.03], &[3.0, 2.5], 0.0),
        ],
        ("LRS1", _) => vec![
            diag_quadratic(&[1.0, 1.0], &[0.0, 0.0], 0.0),
            diag_quadratic(&[1.0, 1.0], &[-2.0, 0.0], 0.0),
        ],
        ("MHHM2", 2) => vec![
            diag_quadratic(&[1.0, 1.0], &[0.8, 0.6], 0.0),
            diag_quadratic(&[1.0, 1.0], &[0.85, 0.7], 0.0),
            diag_quadratic(&[1.0, 1.0], &[0.9, 0.6], 0.0),
        ],
        ("MHHM2", _) => vec![
            diag_quadratic(&[1.0, 1.0, 1.0], &[0.8, 0.6, 0.0], 0.0),
            diag_quadratic(&[1.0, 1.0, 1.0], &[0.85, 0.7, 0.0], 0.0),
            diag_quadratic(&[1.0, 1.0, 1.0], &[0.9, 0.6, 0.0], 0.0),
        ],
        ("MOP1", _) => vec![
            diag_quadratic(&[1.0], &[0.0], 0.0),
            diag_quadratic(&[1.0], &[2.0], 0.0),
        ],
        ("MOP7", 2) => mop7(false),
        ("MOP7", _) => mop7(true),
        ("MS1", _) => vec![
            diag_quadratic(&[1.0, 2.0], &[0.0, 1.0], 0.0),
            diag_quadratic(&[2.0, 1.0], &[1.0, 0.0], 0.0),
        ],
        ("MS2", _) => vec![
            diag_quadratic(&[1.0; 4], &[0.0; 4], 0.0),
            affine_squares(
                4,
                &[(0.5, &[1.0, -1.0, 0.0, 0.0], 0.0), (0.5, &[0.0, 0.0, 1.0, -1.0], 0.0)],
                0.0,
            ),
        ],
        ("SDD1", _) => vec![
            diag_quadratic(&[1.0, 2.0, 3.0], &[1.0, 0.0, 0.0], 0.0),
            diag_quadratic(&[3.0, 1.0, 2.0], &[0.0, 1.0, 0.0], 0.0),
            diag_quadratic(&[2.0, 3.0, 1.0], &[0.0, 0.0, 1.0], 0.0),
        ],
        ("SP1", _) => vec![
            affine_squares(2, &[(1.0, &[1.0, 0.0], 1.0), (1.0, &[1.0, -1.0], 0.0)], 0.0),
            affine_squares(2, &[(1.0, &[0.0, 1.0], 3.0), (1.0, &[1.0, -1.0], 0.0)], 0.0),
        ],
        ("VFM1", 2) => vec![
            diag_quadratic(&[1.0, 1.0], &[0.0, 1.0], 0.0),
            diag_quadratic(&[1.0, 1.0], &[0.0, -1.0], 1.0),
            diag_quadratic(&[1.0, 1.0], &[1.0, 0.0], 2.0),
        ],
        ("VFM1", _) => vec![
            diag_quadratic(&[1.0, 1.0, 1.0], &[0.0, 1.0, 0.0], 0.0),
            diag_quadratic(&[1.0, 1.0, 1.0], &[0.0, -1.0, 0.0], 1.0),
            diag_quadratic(&[1.0, 1.0, 1.0], &[1.0, 0.0, 0.0], 2.0),
        ],
        ("VU1", _) => vu1(),
        ("ZLT1", _) => vec![
            diag_quadratic(&[1.0, 1.0, 1.0], &[1.0, 0.0, 0.0], 0.0),
            diag_quadratic(&[1.0, 1.0, 1.0], &[0.0, 1.0, 0.0], 0.0),
            diag_quadratic(&[1.0, 1.0, 1.0], &[0.0, 0.0, 1.0], 0.0),
        ],
        _ => unreachable!("registry names are exhausted above"),
    }
}

fn an1() -> Vec<SmoothObjective> {
    let f1 = SmoothObjective::new(
        |x| 0.25 * ((x[0] - 1.0).powi(4) + 2.0 * (x[1] - 2.0).powi(4)),
        |x| DVector::from_column_slice(&[(x[0] - 1.0).powi(3), 2.0 * (x[1] - 2.0).powi(3)]),
    )
    .with_hessian(|x| {
        DMatrix::from_diagonal(&DVector::from_column_slice(&[
            3.0 * (x[0] - 1.0).powi(2),
            6.0 * (x[1] - 2.0).powi(2),
        ]))
    });
    let f2 = SmoothObjective::new(
        |x| ((x[0] + x[1]) / 2.0).exp() + x[0].powi(2) + x[1].powi(2),
        |x| {
            let e = ((x[0] + x[1]) / 2.0).exp() / 2.0;
            DVector::from_column_slice(&[e + 2.0 * x[0], e + 2.0 * x[1]])
        },
    )
    .with_hessian(|x| {
        let q = ((x[0] + x[1]) / 2.0).exp() / 4.0;
        DMatrix::from_column_slice(2, 2, &[q + 2.0, q, q, q + 2.0])
    });
    vec![f1, f2]
}

fn fds(n: usize) -> Vec<SmoothObjective> {
    let nf = n as f64;
    let f1 = {
        let nf2 = nf * nf;
        SmoothObjective::new(
            move |x| {
                x.iter()
                    .enumerate()
                    .map(|(i, &xi)| (i + 1) as f64 * (xi - (i + 1) as f64).powi(4))
                    .sum::<f64>()
                    / nf2
            },
            move |x| {
                DVector::from_iterator(
                    x.len(),
                    x.iter()
                        .enumerate()
                        .map(|(i, &xi)| 4.0 * (i + 1) as f64 * (xi - (i + 1) as f64).powi(3) / nf2),
                )
            },
        )
        .with_hessian(move |x| {
            DMatrix::from_diagonal(&DVector::from_iterator(
                x.len(),
                x.iter()
                    .enumerate()
                    .map(|(i, &xi)| 12.0 * (i + 1) as f64 * (xi - (i + 1) as f64).powi(2) / nf2),
            ))
        })
    };
    let f2 = SmoothObjective::new(
        move |x| (x.sum() / nf).exp() + x.norm_squared(),
        move |x| {
            let e = (x.sum() / nf).exp() / nf;
            DVector::from_fn(x.len(), |i, _| e + 2.0 * x[i])
        },
    )
    .with_hessian(move |x| {
        let e = (x.sum() / nf).exp() / (nf * nf);
        DMatrix::from_fn(x.len(), x.len(), |i, k| e + if i == k { 2.0 } else { 0.0 })
    });
    let f3 = {
        let denom = nf * (nf + 1.0);
        SmoothObjective::new(
            move |x| {
                x.iter()
                    .enumerate()
                    .map(|(i, &xi)| (i + 1) as f64 * (nf - i as f64) * (-xi).exp())
                    .sum::<f64>()
                    / denom
            },
            move |x| {
                DVector::from_iterator(
                    x.len(),
                    x.iter()
                        .enumerate()
                        .map(|(i, &xi)| -((i + 1) as f64) * (nf - i as f64) * (-xi).exp() / denom),
                )
            },
        )
        .with_hessian(move |x| {
            DMatrix::from_diagonal(&DVector::from_iterator(
                x.len(),
                x.iter()
                    .enumerate()
                    .map(|(i, &xi)| (i + 1) as f64 * (nf - i as f64) * (-xi).exp() / denom),
            ))
        })
    };
    vec![f1, f2, f3]
}

fn mop7(padded: bool) -> Vec<SmoothObjective> {
    if padded {
        vec![
            affine_squares(
                3,
                &[
                    (0.5, &[1.0, 0.0, 0.0], 2.0),
                    (1.0 / 13.0, &[0.0, 1.0, 0.0], -1.0),
                    (1.0, &[0.0, 0.0, 1.0], 0.0),
                ],
                3.0,
            ),
            affine_squares(
                3,
                &[
                    (1.0 / 36.0, &[1.0, 1.0, 0.0], 3.0),
                    (1.0 / 8.0, &[-1.0, 1.0, 0.0], -2.0),
                    (1.0, &[0.0, 0.0, 1.0], 0.0),
                ],
                -17.0,
            ),
            affine_squares(
                3,
                &[
                    (1.0 / 175.0, &[1.0, 2.0, 0.0], 1.0),
                    (1.0 / 17.0, &[-1.0, 2.0, 0.0], 0.0),
                    (1.0, &[0.0, 0.0, 1.0], 0.0),
                ],
                -13.0,
            ),
        ]
    } else {
        vec![
            affine_squares(
                2,
                &[(0.5, &[1.0, 0.0], 2.0), (1.0 / 13.0, &[0.0, 1.0], -1.0)],
                3.0,
            ),
            affine_squares(
                2,
                &[(1.0 / 36.0, &[1.0, 1.0], 3.0), (1.0 / 8.0, &[-1.0, 1.0], -2.0)],
                -17.0,
            ),
            affine_squares(
                2,
                &[(1.0 / 175.0, &[1.0, 2.0], 1.0), (1.0 / 17.0, &[-1.0, 2.0], 0.0)],
                -13.0,
            ),
        ]
    }
}

fn vu1() -> Vec<SmoothObjective> {
    let f1 = SmoothObjective::new(
        |x| 1.0 / (x[0].powi(2) + x[1].powi(2) + 1.0),
        |x| {
            let r = x[0].powi(2) + x[1].powi(2) + 1.0;
            (-2.0 / (r * r)) * x
        },
    )
    .with_hessian(|x| {
        let r = x[0].powi(2) + x[1].powi(2) + 1.0;
        let mut h = (x * x.transpose()) * (8.0 / (r * r * r));
        h[(0, 0)] -= 2.0 / (r * r);
        h[(1, 1)] -= 2.0 / (r * r);
        h
    })
    .nonconvex();
    let f2 = diag_quadratic(&[1.0, 3.0], &[0.0, 0.0], 1.0);
    vec![f1, f2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate_objectives, validate_problem};
    use std::collections::HashSet;

    #[test]
    fn registry_matches_the_published_rows() {
        assert_eq!(registry().len(), 23);
        for (i, e) in registry().iter().enumerate() {
            assert_eq!(e.id, i + 1);
            assert!(e.lb < e.ub);
        }
        let bk1 = &registry()[2];
        assert_eq!((bk1.name, bk1.m, bk1.n, bk1.lb, bk1.ub), ("BK1", 2, 2, -3.0, 5.0));
        let fds5 = &registry()[4];
        assert_eq!((fds5.name, fds5.m, fds5.n, fds5.lb, fds5.ub), ("FDS", 3, 5, -2.0, 2.0));
        let mop1 = &registry()[12];
        assert_eq!((mop1.name, mop1.m, mop1.n, mop1.lb, mop1.ub), ("MOP1", 2, 1, -100.0, 100.0));
        let slugs: HashSet<String> = registry().iter().map(|e| e.slug()).collect();
        assert_eq!(slugs.len(), 23);
    }

    #[test]
    fn every_entry_validates_cleanly() {
        for e in registry() {
            let p = e.spec();
            assert_eq!((p.m(), p.n()), (e.m, e.n), "{}", e.label());
            assert!(p.all_hessians_available(), "{}", e.label());
            let violations = validate_problem(&p);
            assert!(
                violations.is_empty(),
                "{}: {:?}",
                e.label(),
                violations.iter().map(|v| v.to_string()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn jos1_values_at_the_origin() {
        let p = get_problem("JOS1", None).unwrap();
        let f = evaluate_objectives(&p, &DVector::zeros(2)).unwrap();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 4.0);
        let g = p.gradients(&DVector::zeros(2));
        assert_eq!(g[1], DVector::from_column_slice(&[-2.0, -2.0]));
    }

    #[test]
    fn lookup_is_case_insensitive_and_dimension_aware() {
        assert_eq!(get_problem("bk1", None).unwrap().n(), 2);
        assert_eq!(get_problem("FDS", None).unwrap().n(), 3);
        assert_eq!(get_problem("FDS", Some(5)).unwrap().n(), 5);
        assert!(matches!(
            get_problem("FDS", Some(4)),
            Err(Error::UnknownProblem(_))
        ));
        assert!(matches!(
            get_problem("NOPE", None),
            Err(Error::UnknownProblem(_))
        ));
    }

    #[test]
    fn padded_rows_extend_their_planar_core() {
        for name in ["IKK1", "MHHM2", "MOP7", "VFM1"] {
            let core = get_problem(name, Some(2)).unwrap();
            let padded = get_problem(name, Some(3)).unwrap();
            for (a, b, t) in [(0.3, -0.9, 0.0), (-1.1, 0.4, 0.7), (0.0, 1.3, -1.2)] {
                let xc = DVector::from_column_slice(&[a, b]);
                let xp = DVector::from_column_slice(&[a, b, t]);
                for j in 0..core.m() {
                    let vc = core.objectives()[j].value(&xc);
                    let vp = padded.objectives()[j].value(&xp);
                    let err = (vp - (vc + t * t)).abs();
                    assert!(err <= 1e-12 * vc.abs().max(1.0), "{name} objective {j}");
                    let gp = padded.objectives()[j].gradient(&xp);
                    assert!((gp[2] - 2.0 * t).abs() <= 1e-12, "{name} objective {j}");
                }
            }
        }
    }

    #[test]
    fn attachment_is_deterministic_and_anchored_at_the_midpoint() {
        let p = get_problem("BK1", None).unwrap();
        let a = attach_nonsmooth(&p, 7).unwrap();
        let b = attach_nonsmooth(&p, 7).unwrap();
        assert_eq!(a.term_seed(), Some(7));
        let anchor_norm = 2.0f64.sqrt();
        for j in 0..p.m() {
            let (ta, tb) = (&a.terms()[j], &b.terms()[j]);
            assert!(!ta.is_zero());
            assert_eq!(ta.delta().to_bits(), tb.delta().to_bits());
            assert_eq!(ta.matrix(), tb.matrix());
            let ratio = ta.delta() / anchor_norm;
            assert!((0.02..0.10).contains(&ratio), "delta ratio {ratio}");
        }
        assert_ne!(
            a.terms()[0].delta().to_bits(),
            a.terms()[1].delta().to_bits(),
            "objectives draw from distinct substreams"
        );
        let c = attach_nonsmooth(&p, 8).unwrap();
        assert_ne!(a.terms()[0].delta().to_bits(), c.terms()[0].delta().to_bits());
    }

    #[test]
    fn centered_boxes_get_zero_terms() {
        let p = get_problem("JOS1", None).unwrap();
        let attached = attach_nonsmooth(&p, 99).unwrap();
        assert!(attached.terms().iter().all(|t| t.is_zero()));
    }

    #[test]
    fn starts_are_reproducible_and_inside_the_box() {
        let bounds = get_problem("LRS1", None).unwrap().bounds().clone();
        let a = uniform_starts(&bounds, 100, 424242);
        let b = uniform_starts(&bounds, 100, 424242);
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        assert!(a.iter().all(|x| bounds.contains(x, 0.0)));
        let c = uniform_starts(&bounds, 100, 424243);
        assert_ne!(a[0], c[0]);
    }

    #[test]
    fn vu1_is_the_only_nonconvex_entry() {
        let mut nonconvex = Vec::new();
        for e in registry() {
            for (j, obj) in e.spec().objectives().iter().enumerate() {
                if !obj.is_convex() {
                    nonconvex.push((e.label(), j));
                }
            }
        }
        assert_eq!(nonconvex, vec![("VU1(2,2)".to_string(), 0)]);
    }
}
