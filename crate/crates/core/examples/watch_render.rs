//! Feed the terminal view from a simulated morning and print what `parksim
//! watch` would draw.
//!
//! ```text
//! cargo run -p parksim --example watch_render -- [hours]
//! ```

use parksim::cli::watch::WatchState;
use parksim::sim::{run_scenario, ScenarioConfig};

fn main() {
    let hours: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("hours must be a number"))
        .unwrap_or(9.0);
    let cfg = ScenarioConfig {
        duration_s: hours * 3600.0,
        ..Default::default()
    };
    let report = run_scenario(&cfg).unwrap();

    // A watcher connecting now rebuilds everything from retained state.
    let mut view = WatchState::with_slots(cfg.facility.total_slots);
    for (topic, payload) in &report.retained {
        view.apply(topic, payload);
    }
    println!("after {hours} simulated hours:");
    for line in view.render(false) {
        println!("{line}");
    }
    println!();
    for line in view.render(true) {
        println!("{line}");
    }
}
