//! Drop a share of every published packet and watch QoS 1 retransmission
//! recover them.
//!
//! ```text
//! cargo run -p parksim --example lossy_qos1 -- [drop_prob]
//! ```

use parksim::sim::{run_scenario, ScenarioConfig};
use parksim::stochastic::TrafficProfile;
use parksim::telemetry::{totals, EventKind};

fn main() {
    let drop_prob: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("drop probability must be a number"))
        .unwrap_or(0.1);

    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "retries", "sent", "corrected", "lost", "EC");
    for max_retries in [0, 1, 2, 3, 5] {
        let mut cfg = ScenarioConfig {
            duration_s: 3600.0,
            traffic: TrafficProfile::constant(0.0, 1800.0),
            gas_interval_s: 1.0,
            ..Default::default()
        };
        cfg.network.drop_prob = drop_prob;
        cfg.network.max_retries = max_retries;
        let report = run_scenario(&cfg).unwrap();
        let t = totals(&report.records);
        println!(
            "{max_retries:>8} {:>10} {:>10} {:>10} {:>10.5}",
            t.count(EventKind::PublishSent),
            t.count(EventKind::ErrorCorrected),
            t.count(EventKind::ErrorUncorrected),
            t.ec
        );
    }
}
