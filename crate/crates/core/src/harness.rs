//! Multi-start benchmark pipeline: fair shared-start execution across
//! algorithms, table aggregation, Pareto-front assembly, and CSV/SVG export.
//!
//! Fairness contract: for a given `(problem, master_seed)` every algorithm
//! sees the identical start points and the identical nonsmooth terms, so the
//! comparison isolates the line-search and curvature-model differences.  Runs
//! execute on a thread pool, but every run is deterministic from its inputs
//! and results are collected in job order, so everything exported is
//! byte-stable across repeats and thread counts — except wall-clock columns.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Algorithm, ProblemSpec, RunReport, SolverConfig};
use crate::problems::{attach_nonsmooth, registry, uniform_starts};
use crate::solver::run;

/// Aggregated multi-start statistics for one `(problem, algorithm)` pair.
///
/// `mean_function_evals` equals `mean_iterations + 1` by construction: the
/// solver evaluates once at the start and once per accepted step, and the
/// aggregation asserts the per-run identity rather than re-deriving it.
#[derive(Debug, Clone)]
pub struct BenchmarkRow {
    pub problem: String,
    /// Registry id when the problem is a registered instance, else 0.
    pub problem_id: usize,
    pub algorithm: Algorithm,
    pub mean_iterations: f64,
    pub mean_function_evals: f64,
    pub mean_cpu_seconds: f64,
    /// Number of runs that produced a report (failed runs are excluded).
    pub runs: usize,
    /// Fraction of reporting runs that stopped at a criticality tolerance.
    pub tol_reached_fraction: f64,
}

/// Final objective vector of one run plus its dominance flag.
#[derive(Debug, Clone)]
pub struct FrontPoint {
    pub f: DVector<f64>,
    pub dominated: bool,
}

/// All final iterates of one algorithm on one problem, dominance-flagged but
/// unfiltered (plots show every run; the flag supports optional filtering).
#[derive(Debug, Clone)]
pub struct Front {
    pub problem: String,
    pub algorithm: Algorithm,
    pub m: usize,
    pub points: Vec<FrontPoint>,
}

/// One run's result; errors are recorded, never raised out of the batch.
#[derive(Debug)]
pub struct RunOutcome {
    pub algorithm: Algorithm,
    pub start_index: usize,
    pub report: Result<RunReport>,
}

#[derive(Debug)]
pub struct MultistartOutcome {
    /// The problem as actually solved, nonsmooth terms attached.
    pub problem: ProblemSpec,
    pub starts: Vec<DVector<f64>>,
    /// All runs, algorithm-major in start order.
    pub reports: Vec<RunOutcome>,
    pub rows: Vec<BenchmarkRow>,
    pub fronts: Vec<Front>,
}

/// Runs `starts` solves per algorithm from shared random starts with shared
/// generated nonsmooth terms, and aggregates rows and fronts per algorithm.
pub fn run_multistart(
    problem: &ProblemSpec,
    algorithms: &[Algorithm],
    starts: usize,
    master_seed: u64,
    config: &SolverConfig,
) -> Result<MultistartOutcome> {
    if algorithms.is_empty() {
        return Err(Error::InvalidConfig("no algorithms selected".into()));
    }
    if starts == 0 {
        return Err(Error::InvalidConfig("need at least one start point".into()));
    }
    config.validate()?;

    let attached = attach_nonsmooth(problem, master_seed)?;
    let start_points = uniform_starts(attached.bounds(), starts, master_seed);

    let jobs: Vec<(Algorithm, usize)> = algorithms
        .iter()
        .flat_map(|&a| (0..starts).map(move |s| (a, s)))
        .collect();
    let reports: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(algorithm, start_index)| RunOutcome {
            algorithm,
            start_index,
            report: run(&attached, algorithm, &start_points[start_index], config),
        })
        .collect();

    let problem_id = registry()
        .iter()
        .find(|e| e.label() == attached.name())
        .map(|e| e.id)
        .unwrap_or(0);
    let rows = algorithms
        .iter()
        .map(|&a| aggregate(&attached, problem_id, a, &reports))
        .collect();
    let fronts = algorithms
        .iter()
        .map(|&a| assemble_front(&attached, a, &reports))
        .collect();

    Ok(MultistartOutcome {
        problem: attached,
        starts: start_points,
        reports,
        rows,
        fronts,
    })
}

fn aggregate(
    problem: &ProblemSpec,
    problem_id: usize,
    algorithm: Algorithm,
    outcomes: &[RunOutcome],
) -> BenchmarkRow {
    let ok: Vec<&RunReport> = outcomes
        .iter()
        .filter(|o| o.algorithm == algorithm)
        .filter_map(|o| o.report.as_ref().ok())
        .collect();
    let mut row = BenchmarkRow {
        problem: problem.name().to_string(),
        problem_id,
        algorithm,
        mean_iterations: 0.0,
        mean_function_evals: 0.0,
        mean_cpu_seconds: 0.0,
        runs: ok.len(),
        tol_reached_fraction: 0.0,
    };
    if ok.is_empty() {
        return row;
    }
    let rf = ok.len() as f64;
    let iter_sum: u64 = ok
        .iter()
        .map(|r| {
            debug_assert_eq!(
                r.counters.function_evaluations,
                r.counters.iterations + 1,
                "one evaluation at the start plus one per accepted step"
            );
            r.counters.iterations as u64
        })
        .sum();
    row.mean_iterations = iter_sum as f64 / rf;
    row.mean_function_evals = row.mean_iterations + 1.0;
    row.mean_cpu_seconds = ok.iter().map(|r| r.cpu_seconds).sum::<f64>() / rf;
    row.tol_reached_fraction =
        ok.iter().filter(|r| r.termination.converged()).count() as f64 / rf;
    row
}

fn assemble_front(problem: &ProblemSpec, algorithm: Algorithm, outcomes: &[RunOutcome]) -> Front {
    let fs: Vec<DVector<f64>> = outcomes
        .iter()
        .filter(|o| o.algorithm == algorithm)
        .filter_map(|o| o.report.as_ref().ok())
        .map(|r| r.final_f.clone())
        .collect();
    let flags = nondominated_filter(&fs);
    Front {
        problem: problem.name().to_string(),
        algorithm,
        m: problem.m(),
        points: fs
            .into_iter()
            .zip(flags)
            .map(|(f, dominated)| FrontPoint { f, dominated })
            .collect(),
    }
}

/// Marks each point dominated iff some other point is no worse in every
/// component and strictly better in at least one; equal points do not
/// dominate each other.  Plain O(N^2) pairwise scan.
pub fn nondominated_filter(points: &[DVector<f64>]) -> Vec<bool> {
    let n = points.len();
    let mut dominated = vec![false; n];
    for i in 0..n {
        'others: for k in 0..n {
            if k == i {
                continue;
            }
            let (a, b) = (&points[k], &points[i]);
            let mut strict = false;
            for c in 0..a.len() {
                if a[c] > b[c] {
                    continue 'others;
                }
                if a[c] < b[c] {
                    strict = true;
                }
            }
            if strict {
                dominated[i] = true;
                break;
            }
        }
    }
    dominated
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontFormat {
    Csv,
    Svg,
}

/// Writes a front as CSV (`f1,...,fm,dominated`, 17 significant digits) or as
/// a self-contained 800x600 SVG scatter (three pairwise panels when m = 3).
pub fn export_front(front: &Front, path: &Path, format: FrontFormat) -> Result<()> {
    match format {
        FrontFormat::Csv => write_front_csv(front, path),
        FrontFormat::Svg => write_front_svg(front, path),
    }
}

fn write_front_csv(front: &Front, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let names: Vec<String> = (1..=front.m).map(|i| format!("f{i}")).collect();
    writeln!(w, "{},dominated", names.join(","))?;
    for p in &front.points {
        let vals: Vec<String> = p.f.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{},{}", vals.join(","), p.dominated as u8)?;
    }
    w.flush()?;
    Ok(())
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 600.0;

fn write_front_svg(front: &Front, path: &Path) -> Result<()> {
    let pairs: Vec<(usize, usize)> = if front.m >= 3 {
        vec![(0, 1), (0, 2), (1, 2)]
    } else {
        vec![(0, 1.min(front.m.saturating_sub(1)))]
    };
    let mut s = String::new();
    s.push_str(&format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"##
    ));
    s.push('\n');
    s.push_str(r##"<rect width="800" height="600" fill="#ffffff"/>"##);
    s.push('\n');
    s.push_str(&format!(
        r##"<text x="400" y="22" text-anchor="middle" font-family="sans-serif" font-size="16">{} — {}</text>"##,
        front.problem,
        front.algorithm.label()
    ));
    s.push('\n');
    let pw = SVG_W / pairs.len() as f64;
    for (p, &(cx, cy)) in pairs.iter().enumerate() {
        draw_panel(&mut s, front, p as f64 * pw, pw, cx, cy);
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)?;
    Ok(())
}

fn draw_panel(s: &mut String, front: &Front, x0: f64, pw: f64, cx: usize, cy: usize) {
    let (ml, mr, mt, mb) = (60.0, 18.0, 45.0, 52.0);
    let (px, py) = (x0 + ml, mt);
    let (w, h) = (pw - ml - mr, SVG_H - mt - mb);
    let (xl, xh) = axis_range(front.points.iter().map(|p| p.f[cx]));
    let (yl, yh) = axis_range(front.points.iter().map(|p| p.f[cy]));
    s.push_str("<g class=\"panel\">\n");
    s.push_str(&format!(
        r##"<rect x="{px:.2}" y="{py:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#444444"/>"##
    ));
    s.push('\n');
    // axis names and end-of-range tick labels
    s.push_str(&format!(
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13">f{}</text>"##,
        px + w / 2.0,
        py + h + 38.0,
        cx + 1
    ));
    s.push('\n');
    s.push_str(&format!(
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 {:.2} {:.2})">f{}</text>"##,
        x0 + 14.0,
        py + h / 2.0,
        x0 + 14.0,
        py + h / 2.0,
        cy + 1
    ));
    s.push('\n');
    for (v, tx, ty, anchor) in [
        (xl, px, py + h + 16.0, "middle"),
        (xh, px + w, py + h + 16.0, "middle"),
        (yl, px - 6.0, py + h, "end"),
        (yh, px - 6.0, py + 10.0, "end"),
    ] {
        s.push_str(&format!(
            r##"<text x="{tx:.2}" y="{ty:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"##,
            tick_label(v)
        ));
        s.push('\n');
    }
    for p in &front.points {
        let sx = px + (p.f[cx] - xl) / (xh - xl) * w;
        let sy = py + h - (p.f[cy] - yl) / (yh - yl) * h;
        let fill = if p.dominated { "#b8b8b8" } else { "#1a6faf" };
        s.push_str(&format!(
            r##"<circle cx="{sx:.2}" cy="{sy:.2}" r="3" fill="{fill}" fill-opacity="0.8"/>"##
        ));
        s.push('\n');
    }
    s.push_str("</g>\n");
}

fn axis_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 1000.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.1e}")
    }
}

/// Writes aggregated rows as CSV with the fixed column order
/// `problem,algorithm,it,f,cpu,tol_fraction`; `it`, `f`, `cpu`, and
/// `tol_fraction` are rendered to two decimals.  The problem column carries
/// the registry id for registered instances and the raw name otherwise.
pub fn export_table(rows: &[BenchmarkRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "problem,algorithm,it,f,cpu,tol_fraction")?;
    for r in rows {
        let problem = if r.problem_id != 0 {
            r.problem_id.to_string()
        } else {
            r.problem.replace(',', ";")
        };
        writeln!(
            w,
            "{},{},{:.2},{:.2},{:.2},{:.2}",
            problem,
            r.algorithm.label(),
            r.mean_iterations,
            r.mean_function_evals,
            r.mean_cpu_seconds,
            r.tol_reached_fraction
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bounds, SmoothObjective};
    use crate::problems::get_problem;
    use proptest::prelude::*;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_column_slice(&[a, b])
    }

    #[test]
    fn incomparable_points_are_both_kept() {
        let flags = nondominated_filter(&[v2(1.0, 2.0), v2(2.0, 1.0)]);
        assert_eq!(flags, vec![false, false]);
    }

    #[test]
    fn strictly_worse_point_is_dominated() {
        let flags = nondominated_filter(&[v2(1.0, 1.0), v2(2.0, 2.0), v2(1.0, 3.0)]);
        assert_eq!(flags, vec![false, true, true]);
    }

    #[test]
    fn equal_points_do_not_dominate_each_other() {
        let flags = nondominated_filter(&[v2(1.0, 2.0), v2(1.0, 2.0)]);
        assert_eq!(flags, vec![false, false]);
    }

    proptest! {
        #[test]
        fn filter_matches_a_brute_force_check(
            pts in (2usize..=3).prop_flat_map(|m| {
                proptest::collection::vec(
                    proptest::collection::vec((-3i8..=3).prop_map(|v| v as f64 / 2.0), m..=m),
                    0..=50,
                )
            })
        ) {
            let points: Vec<DVector<f64>> =
                pts.iter().map(|p| DVector::from_column_slice(p)).collect();
            let got = nondominated_filter(&points);
            // independent re-derivation with the operand order reversed
            let expect: Vec<bool> = (0..points.len())
                .map(|i| {
                    (0..points.len()).any(|k| {
                        k != i
                            && points[i].iter().zip(points[k].iter()).all(|(bi, ak)| ak <= bi)
                            && points[k] != points[i]
                    })
                })
                .collect();
            prop_assert_eq!(got, expect);
        }
    }

    #[test]
    fn multistart_is_fair_and_deterministic() {
        let problem = get_problem("BK1", None).unwrap();
        let algorithms = Algorithm::ALL;
        let config = SolverConfig::bench_preset();
        let a = run_multistart(&problem, &algorithms, 5, 11, &config).unwrap();
        let b = run_multistart(&problem, &algorithms, 5, 11, &config).unwrap();

        assert_eq!(a.reports.len(), 15);
        assert_eq!(a.rows.len(), 3);
        assert_eq!(a.fronts.len(), 3);
        assert!(a.problem.terms().iter().all(|t| !t.is_zero()));
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.problem_id, 3);
            assert_eq!(ra.runs, 5);
            assert_eq!(ra.mean_iterations.to_bits(), rb.mean_iterations.to_bits());
            assert_eq!(
                ra.mean_function_evals.to_bits(),
                rb.mean_function_evals.to_bits()
            );
            assert_eq!(ra.mean_function_evals, ra.mean_iterations + 1.0);
            assert_eq!(ra.tol_reached_fraction, rb.tol_reached_fraction);
        }
        for (fa, fb) in a.fronts.iter().zip(&b.fronts) {
            assert_eq!(fa.points.len(), 5);
            for (pa, pb) in fa.points.iter().zip(&fb.points) {
                assert_eq!(pa.f, pb.f);
                assert_eq!(pa.dominated, pb.dominated);
            }
        }
    }

    #[test]
    fn failed_runs_are_recorded_not_raised() {
        let objectives = vec![
            SmoothObjective::new(
                |x: &DVector<f64>| x[0] * x[0],
                |x| DVector::from_column_slice(&[2.0 * x[0]]),
            ),
            SmoothObjective::new(
                |x: &DVector<f64>| (x[0] - 1.0) * (x[0] - 1.0),
                |x| DVector::from_column_slice(&[2.0 * (x[0] - 1.0)]),
            ),
        ];
        let problem = ProblemSpec::smooth(
            "NOHESS",
            objectives,
            Bounds::uniform(1, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let out =
            run_multistart(&problem, &[Algorithm::Npga], 3, 5, &SolverConfig::default()).unwrap();
        assert_eq!(out.reports.len(), 3);
        assert!(out
            .reports
            .iter()
            .all(|o| matches!(o.report, Err(Error::MissingHessian { .. }))));
        assert_eq!(out.rows[0].runs, 0);
        assert!(out.fronts[0].points.is_empty());
    }

    #[test]
    fn front_csv_is_byte_exact() {
        let front = Front {
            problem: "T".into(),
            algorithm: Algorithm::Npqna,
            m: 2,
            points: vec![
                FrontPoint { f: v2(1.0, 2.5), dominated: false },
                FrontPoint { f: v2(0.125, 4.0), dominated: true },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("front.csv");
        export_front(&front, &path, FrontFormat::Csv).unwrap();
        let got = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            got,
            "f1,f2,dominated\n\
             1.0000000000000000e0,2.5000000000000000e0,0\n\
             1.2500000000000000e-1,4.0000000000000000e0,1\n"
        );
    }

    #[test]
    fn tri_objective_svg_has_three_panels() {
        let front = Front {
            problem: "T".into(),
            algorithm: Algorithm::Npga,
            m: 3,
            points: vec![FrontPoint {
                f: DVector::from_column_slice(&[1.0, 2.0, 3.0]),
                dominated: false,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("front.svg");
        export_front(&front, &path, FrontFormat::Svg).unwrap();
        let got = std::fs::read_to_string(&path).unwrap();
        assert!(got.starts_with("<svg"));
        assert!(got.ends_with("</svg>\n"));
        assert_eq!(got.matches("<g class=\"panel\">").count(), 3);
        assert_eq!(got.matches("<circle").count(), 3);
    }

    #[test]
    fn empty_front_exports_cleanly() {
        let front = Front {
            problem: "T".into(),
            algorithm: Algorithm::Pqna,
            m: 2,
            points: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("empty.csv");
        let svg = dir.path().join("empty.svg");
        export_front(&front, &csv, FrontFormat::Csv).unwrap();
        export_front(&front, &svg, FrontFormat::Svg).unwrap();
        assert_eq!(std::fs::read_to_string(&csv).unwrap(), "f1,f2,dominated\n");
        let s = std::fs::read_to_string(&svg).unwrap();
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<circle").count(), 0);
    }

    #[test]
    fn table_rows_render_to_two_decimals() {
        let row = BenchmarkRow {
            problem: "BK1(2,2)".into(),
            problem_id: 3,
            algorithm: Algorithm::Npqna,
            mean_iterations: 5.25,
            mean_function_evals: 6.25,
            mean_cpu_seconds: 0.004321,
            runs: 100,
            tol_reached_fraction: 0.98,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        export_table(&[row], &path).unwrap();
        let got = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            got,
            "problem,algorithm,it,f,cpu,tol_fraction\n3,NPQNA,5.25,6.25,0.00,0.98\n"
        );
    }
}
