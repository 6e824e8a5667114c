//! `mcopt` — command-line driver for the solver library: single solves,
//! multi-start benchmark batches, Pareto-front export, and registry listing.
//!
//! Exit codes: 0 on success, 1 when any run fails, 2 on usage errors
//! (including bad config files and unknown names).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcopt::nalgebra::DVector;
use mcopt::{
    evaluate_objectives, export_front, export_table, get_problem, registry, run, run_multistart,
    Algorithm, FrontFormat, SolverConfig,
};

#[derive(Parser)]
#[command(
    name = "mcopt",
    version,
    about = "Multiobjective composite optimization benchmarks",
    long_about = "Runs proximal quasi-Newton solvers (NPQNA, PQNA, NPGA) on a 23-problem\n\
                  benchmark suite, with multi-start batches, Pareto-front export, and\n\
                  deterministic seeding throughout."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem from the box midpoint and print a summary
    Solve(SolveArgs),
    /// Run the multi-start benchmark suite and export tables and fronts
    Bench(BenchArgs),
    /// Run one problem multi-start and export its Pareto-front files
    Front(FrontArgs),
    /// Print the problem registry, one line per instance
    List,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem name from the registry (see `mcopt list`)
    #[arg(long)]
    problem: String,
    /// Dimension pick for names registered at several sizes
    #[arg(long)]
    n: Option<usize>,
    /// Algorithm to run: npqna, pqna, or npga
    #[arg(long, default_value = "npqna", value_parser = parse_algo)]
    algo: Algorithm,
    /// Master seed for nonsmooth-term generation
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Solver-config file (key=value lines; flags take precedence)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark suite to run (only "table1" is registered)
    #[arg(long, default_value = "table1")]
    suite: String,
    /// Start points per problem, shared across algorithms
    #[arg(long, default_value_t = 100)]
    starts: usize,
    /// Master seed for starts and nonsmooth terms
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for table.csv and per-problem front files
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Algorithms to run: npqna, pqna, npga, or all
    #[arg(long, default_value = "all", value_parser = parse_algo_selector)]
    algo: AlgoSel,
    /// Solver-config file (key=value lines; flags take precedence)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FrontArgs {
    /// Problem name from the registry (see `mcopt list`)
    #[arg(long)]
    problem: String,
    /// Dimension pick for names registered at several sizes
    #[arg(long)]
    n: Option<usize>,
    /// Algorithms to run: npqna, pqna, npga, or all
    #[arg(long, default_value = "all", value_parser = parse_algo_selector)]
    algo: AlgoSel,
    /// Start points, shared across algorithms
    #[arg(long, default_value_t = 100)]
    starts: usize,
    /// Master seed for starts and nonsmooth terms
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Base output path; files land next to it as <stem>.<algo>.csv/.svg
    #[arg(long, default_value = "front.csv")]
    out: PathBuf,
    /// Solver-config file (key=value lines; flags take precedence)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone)]
struct AlgoSel(Vec<Algorithm>);

enum Failure {
    /// Bad input from the user: exit 2.
    Usage(String),
    /// Runs or exports went wrong: exit 1.
    Run(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve(args) => run_solve(args),
        Command::Bench(args) => run_bench(args),
        Command::Front(args) => run_front(args),
        Command::List => {
            for e in registry() {
                println!(
                    "{:>2}  {:<13} box [{}, {}]^{}  {}",
                    e.id,
                    e.label(),
                    e.lb,
                    e.ub,
                    e.n,
                    e.source
                );
            }
            Ok(())
        }
    }
}

fn run_solve(args: SolveArgs) -> Result<(), Failure> {
    let mut config = SolverConfig::default();
    if let Some(path) = &args.config {
        config = load_config(path, config)?;
    }
    config.seed = args.seed;
    let problem = get_problem(&args.problem, args.n).map_err(|e| Failure::Usage(e.to_string()))?;
    let problem = mcopt::attach_nonsmooth(&problem, args.seed)
        .map_err(|e| Failure::Run(e.to_string()))?;
    let x0 = problem.bounds().midpoint();
    let report = run(&problem, args.algo, &x0, &config).map_err(|e| Failure::Run(e.to_string()))?;

    let f0 = evaluate_objectives(&problem, &x0).map_err(|e| Failure::Run(e.to_string()))?;
    println!(
        "problem {}  algorithm {}  seed {}",
        problem.name(),
        args.algo.label(),
        args.seed
    );
    println!(
        "termination {} after {} iterations ({} evaluations, {} subproblem solves)",
        report.termination,
        report.counters.iterations,
        report.counters.function_evaluations,
        report.counters.subproblem_solves
    );
    if let Some(last) = report.trace.last() {
        println!("last theta {:.3e}  last |d| {:.3e}", last.theta, last.d_norm);
    }
    println!("cpu {:.4}s", report.cpu_seconds);
    println!("F(x0)    = {}", format_vector(&f0));
    println!("F(final) = {}", format_vector(&report.final_f));
    println!("final x  = {}", format_vector(&report.final_x));
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<(), Failure> {
    if args.suite != "table1" {
        return Err(Failure::Usage(format!(
            "unknown suite `{}`; available: table1",
            args.suite
        )));
    }
    let mut config = SolverConfig::bench_preset();
    if let Some(path) = &args.config {
        config = load_config(path, config)?;
    }
    config.seed = args.seed;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::Run(e.to_string()))?;

    let mut all_rows = Vec::new();
    let mut failed = 0usize;
    let mut total = 0usize;
    for entry in registry() {
        let problem = entry.spec();
        let outcome = run_multistart(&problem, &args.algo.0, args.starts, args.seed, &config)
            .map_err(|e| Failure::Run(format!("{}: {e}", entry.label())))?;
        total += outcome.reports.len();
        failed += outcome.reports.iter().filter(|r| r.report.is_err()).count();
        for front in &outcome.fronts {
            for (format, ext) in [(FrontFormat::Csv, "csv"), (FrontFormat::Svg, "svg")] {
                let path = args.out.join(format!(
                    "{}.front.{}.{ext}",
                    entry.slug(),
                    front.algorithm.key()
                ));
                export_front(front, &path, format).map_err(|e| Failure::Run(e.to_string()))?;
            }
        }
        let summary: Vec<String> = outcome
            .rows
            .iter()
            .map(|r| format!("{} it={:.2}", r.algorithm.key(), r.mean_iterations))
            .collect();
        println!("{:<13} {}", entry.label(), summary.join("  "));
        all_rows.extend(outcome.rows);
    }
    let table = args.out.join("table.csv");
    export_table(&all_rows, &table).map_err(|e| Failure::Run(e.to_string()))?;
    println!("wrote {}", table.display());
    if failed > 0 {
        return Err(Failure::Run(format!("{failed} of {total} runs failed")));
    }
    Ok(())
}

fn run_front(args: FrontArgs) -> Result<(), Failure> {
    let mut config = SolverConfig::bench_preset();
    if let Some(path) = &args.config {
        config = load_config(path, config)?;
    }
    config.seed = args.seed;
    let problem = get_problem(&args.problem, args.n).map_err(|e| Failure::Usage(e.to_string()))?;
    let outcome = run_multistart(&problem, &args.algo.0, args.starts, args.seed, &config)
        .map_err(|e| Failure::Run(e.to_string()))?;

    let stem = args
        .out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("front")
        .to_string();
    let dir = args.out.parent().unwrap_or(Path::new("")).to_path_buf();
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(&dir).map_err(|e| Failure::Run(e.to_string()))?;
    }
    for front in &outcome.fronts {
        for (format, ext) in [(FrontFormat::Csv, "csv"), (FrontFormat::Svg, "svg")] {
            let path = dir.join(format!("{stem}.{}.{ext}", front.algorithm.key()));
            export_front(front, &path, format).map_err(|e| Failure::Run(e.to_string()))?;
            println!("wrote {}", path.display());
        }
    }
    let failed = outcome.reports.iter().filter(|r| r.report.is_err()).count();
    if failed > 0 {
        return Err(Failure::Run(format!(
            "{failed} of {} runs failed",
            outcome.reports.len()
        )));
    }
    Ok(())
}

fn format_vector(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

const ALGO_TOKENS: [&str; 3] = ["npqna", "pqna", "npga"];

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    match s.to_lowercase().as_str() {
        "npqna" => Ok(Algorithm::Npqna),
        "pqna" => Ok(Algorithm::Pqna),
        "npga" => Ok(Algorithm::Npga),
        "all" => Err("this command runs a single algorithm; pick npqna, pqna, or npga".into()),
        other => Err(unknown_algo_message(other, &ALGO_TOKENS)),
    }
}

fn parse_algo_selector(s: &str) -> Result<AlgoSel, String> {
    match s.to_lowercase().as_str() {
        "all" => Ok(AlgoSel(Algorithm::ALL.to_vec())),
        "npqna" => Ok(AlgoSel(vec![Algorithm::Npqna])),
        "pqna" => Ok(AlgoSel(vec![Algorithm::Pqna])),
        "npga" => Ok(AlgoSel(vec![Algorithm::Npga])),
        other => Err(unknown_algo_message(other, &["npqna", "pqna", "npga", "all"])),
    }
}

fn unknown_algo_message(bad: &str, valid: &[&str]) -> String {
    // aliases readers might try out of habit
    let suggestion = match bad {
        "newton" => "npga",
        _ => valid
            .iter()
            .copied()
            .min_by_key(|v| levenshtein(bad, v))
            .unwrap_or("npqna"),
    };
    format!("unknown algorithm `{bad}`; did you mean `{suggestion}`?")
}

fn levenshtein(a: &str, b: &str) -> usize {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut prev = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = if ca == cb { prev } else { prev + 1 };
            prev = row[j + 1];
            row[j + 1] = cost.min(row[j] + 1).min(prev + 1);
        }
    }
    row[b.len()]
}

const CONFIG_KEYS: [&str; 16] = [
    "rho",
    "tau",
    "mu",
    "eta",
    "epsilon_theta",
    "d_tol",
    "max_iter",
    "max_backtracks",
    "spd_floor",
    "pqna_reg",
    "subproblem_tol",
    "seed",
    "curvature_eps",
    "raw_curvature",
    "box_rows",
    "barrier_floor",
];

fn load_config(path: &Path, mut base: SolverConfig) -> Result<SolverConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Failure::Usage(format!(
                "{}:{}: expected key=value, got `{}`",
                path.display(),
                idx + 1,
                raw.trim()
            ))
        })?;
        apply_key(&mut base, key.trim(), value.trim()).map_err(|msg| {
            Failure::Usage(format!("{}:{}: {msg}", path.display(), idx + 1))
        })?;
    }
    base.validate()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(base)
}

fn apply_key(config: &mut SolverConfig, key: &str, value: &str) -> Result<(), String> {
    fn float(v: &str) -> Result<f64, String> {
        v.parse().map_err(|_| format!("`{v}` is not a number"))
    }
    fn integer(v: &str) -> Result<usize, String> {
        v.parse().map_err(|_| format!("`{v}` is not an integer"))
    }
    fn boolean(v: &str) -> Result<bool, String> {
        v.parse().map_err(|_| format!("`{v}` is not true/false"))
    }
    match key {
        "rho" => config.rho = float(value)?,
        "tau" => config.tau = float(value)?,
        "mu" => config.mu = float(value)?,
        "eta" => config.eta = float(value)?,
        "epsilon_theta" => config.epsilon_theta = float(value)?,
        "d_tol" => config.d_tol = float(value)?,
        "max_iter" => config.max_iter = integer(value)?,
        "max_backtracks" => config.max_backtracks = integer(value)?,
        "spd_floor" => config.spd_floor = float(value)?,
        "pqna_reg" => config.pqna_reg = float(value)?,
        "subproblem_tol" => config.subproblem_tol = float(value)?,
        "seed" => {
            config.seed = value
                .parse()
                .map_err(|_| format!("`{value}` is not an integer"))?
        }
        "curvature_eps" => config.curvature_eps = float(value)?,
        "raw_curvature" => config.raw_curvature = boolean(value)?,
        "box_rows" => config.box_rows = boolean(value)?,
        "barrier_floor" => config.barrier_floor = float(value)?,
        unknown => {
            let nearest = CONFIG_KEYS
                .iter()
                .copied()
                .min_by_key(|k| levenshtein(unknown, k))
                .unwrap_or("eta");
            return Err(format!("unknown key `{unknown}`; nearest is `{nearest}`"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levenshtein_distances() {
        assert_eq!(levenshtein("", ""), 0);
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("abc", "abd"), 1);
        assert_eq!(levenshtein("etaa", "eta"), 1);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn algo_parsing_accepts_known_names_and_suggests_for_typos() {
        assert_eq!(parse_algo("NPQNA").unwrap(), Algorithm::Npqna);
        assert_eq!(parse_algo("npga").unwrap(), Algorithm::Npga);
        let err = parse_algo("newton").unwrap_err();
        assert!(err.contains("npga"), "{err}");
        let err = parse_algo("pqn").unwrap_err();
        assert!(err.contains("pqna"), "{err}");
        assert_eq!(parse_algo_selector("all").unwrap().0.len(), 3);
    }

    #[test]
    fn config_keys_apply_and_unknown_keys_suggest() {
        let mut c = SolverConfig::default();
        apply_key(&mut c, "eta", "1e-4").unwrap();
        assert_eq!(c.eta, 1e-4);
        apply_key(&mut c, "max_iter", "12").unwrap();
        assert_eq!(c.max_iter, 12);
        apply_key(&mut c, "box_rows", "false").unwrap();
        assert!(!c.box_rows);
        let err = apply_key(&mut c, "etaa", "3").unwrap_err();
        assert!(err.contains("`eta`"), "{err}");
        let err = apply_key(&mut c, "rho", "fast").unwrap_err();
        assert!(err.contains("not a number"), "{err}");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
