use mcopt::nalgebra::DVector;
use mcopt::{registry, run, uniform_starts, Algorithm, SolverConfig};

#[test]
#[ignore]
fn probe_scan() {
    let config = SolverConfig::bench_preset();
    let mut failed = 0usize;
    let mut total = 0usize;
    for entry in registry() {
        let problem = entry.spec();
        let starts: Vec<DVector<f64>> = uniform_starts(&entry.bounds(), 25, config.seed);
        for algo in Algorithm::ALL {
            for (s, x0) in starts.iter().enumerate() {
                total += 1;
                match run(&problem, algo, x0, &config) {
                    Ok(_) => {}
                    Err(e) => {
                        failed += 1;
                        eprintln!("FAIL {} {} start {s}: {e}", entry.slug(), algo.key());
                    }
                }
            }
        }
    }
    eprintln!("scan done: {failed} of {total} failed");
}

#[test]
#[ignore]
fn probe_one() {
    let config = SolverConfig::bench_preset();
    let entry = registry().iter().find(|e| e.slug() == std::env::var("MCOPT_PROBE_SLUG").unwrap_or_else(|_| "ikk1_n3".into())).unwrap();
    let problem = entry.spec();
    let starts: Vec<DVector<f64>> = uniform_starts(&entry.bounds(), 25, config.seed);
    match run(&problem, Algorithm::Npga, &starts[std::env::var("MCOPT_PROBE_START").map(|v| v.parse().unwrap()).unwrap_or(0)], &config) {
        Ok(r) => eprintln!("ok {:?}", r.termination),
        Err(e) => eprintln!("ERR {e}"),
    }
}
