//! Simulate one day of the default facility and print the run report.
//!
//! ```text
//! cargo run -p parksim --example simulate_day -- [seed] [out_dir]
//! ```

use std::path::PathBuf;

use parksim::sim::{run_scenario, ScenarioConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map(|s| s.parse().expect("seed must be an integer")).unwrap_or(42);
    let out_dir = args.next().map(PathBuf::from);

    let cfg = ScenarioConfig {
        seed,
        ..Default::default()
    };
    let started = std::time::Instant::now();
    let report = run_scenario(&cfg).expect("default scenario is valid");
    print!("{}", report.summary());
    println!("simulated in {:.2?}", started.elapsed());

    if let Some(dir) = out_dir {
        report.write_outputs(&dir).expect("cannot write outputs");
        println!("wrote events.jsonl, metrics.csv and report.txt to {}", dir.display());
    }
}
