//! Deterministic discrete-event simulation of a whole facility: traffic,
//! sensors, the controller, its MQTT client, a lossy network and the broker
//! with its subscribers.
//!
//! ```no_run
//! use parksim::sim::{parse_scenario, run_scenario};
//!
//! let cfg = parse_scenario("duration_s = 3600\nfacility.total_slots = 8\n").unwrap();
//! let report = run_scenario(&cfg).unwrap();
//! println!("{}", report.summary());
//! ```

pub mod config;
mod engine;

use std::fmt::Write as _;
use std::io;
use std::path::Path;

pub use config::{
    parse_scenario, GasInjection, NetworkConfig, ScenarioConfig, ScenarioError, SubscriberConfig,
};
pub use engine::{
    run_scenario, run_scenario_with, EventQueue, Node, SensorKind, SimCounts, SimEvent,
    SimObserver, SimReport, SimTime,
};

use crate::rng::GENERATOR_NAME;
use crate::telemetry::{self, EventKind, EventRecord, LogError};

/// Occupancy step function from park/depart records: `(t, occupied)`
/// after each change.
pub fn occupancy_series(records: &[EventRecord]) -> Vec<(f64, usize)> {
    let mut occupied = 0usize;
    let mut out = Vec::new();
    for r in records {
        match r.kind {
            EventKind::CarParks => occupied += 1,
            EventKind::CarDeparts => occupied = occupied.saturating_sub(1),
            _ => continue,
        }
        out.push((r.t, occupied));
    }
    out
}

/// Parse an event log and extract its occupancy series.
pub fn occupancy_timeseries(event_log: &str) -> Result<Vec<(f64, usize)>, LogError> {
    Ok(occupancy_series(&telemetry::parse_event_log(event_log)?))
}

/// Time-weighted mean of a step series over `[start, end]`, the level
/// before the first step being zero.
pub fn time_weighted_mean(series: &[(f64, usize)], start: f64, end: f64) -> f64 {
    if end <= start {
        return 0.0;
    }
    let mut level = 0usize;
    let mut last = start;
    let mut area = 0.0;
    for &(t, next) in series {
        if t > end {
            break;
        }
        if t > start {
            area += level as f64 * (t - last);
            last = t;
        }
        level = next;
    }
    area += level as f64 * (end - last);
    area / (end - start)
}

impl SimReport {
    pub fn events_jsonl(&self) -> String {
        telemetry::write_event_log(&self.records)
    }

    /// Mean number of parked cars over the whole run.
    pub fn mean_occupancy(&self) -> f64 {
        time_weighted_mean(&occupancy_series(&self.records), 0.0, self.config.duration_s)
    }

    pub fn summary(&self) -> String {
        let totals = telemetry::totals(&self.records);
        let c = &self.counts;
        let s = &self.final_state;
        let mut out = String::new();
        let _ = writeln!(out, "parksim run report");
        let _ = writeln!(out, "generator: {GENERATOR_NAME}");
        let _ = writeln!(out, "seed: {}", self.config.seed);
        let _ = writeln!(out, "duration_s: {}", self.config.duration_s);
        let _ = writeln!(out, "slots: {}", s.total_slots());
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "cars: {} arrived, {} admitted, {} turned away, {} parked, {} left",
            c.arrivals, c.admitted, c.rejected, c.parked, c.departed
        );
        let _ = writeln!(
            out,
            "inside at end: {} parked, {} on the way to a slot",
            c.parked_at_end, c.en_route_at_end
        );
        let _ = writeln!(out, "mean occupancy: {:.3}", self.mean_occupancy());
        let _ = writeln!(
            out,
            "final display: {}",
            crate::controller::render_display(s)
        );
        let _ = writeln!(out, "fan: {}", s.fan.as_str());
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "publishes accepted: {}",
            totals.count(EventKind::PublishAccepted)
        );
        let _ = writeln!(
            out,
            "deliveries: {}",
            totals.count(EventKind::PublishDelivered)
        );
        let _ = writeln!(out, "packets dropped: {}", totals.count(EventKind::PacketDropped));
        let rate = telemetry::data_rate(totals.bytes as f64, self.config.duration_s).unwrap_or(0.0);
        let _ = writeln!(out, "data rate: {rate:.3} B/s");
        match totals.delay_mean_s {
            Some(d) => {
                let _ = writeln!(out, "mean delay: {d:.6} s");
            }
            None => {
                let _ = writeln!(out, "mean delay: n/a");
            }
        }
        let _ = writeln!(
            out,
            "errors: {} corrected, {} uncorrected",
            totals.count(EventKind::ErrorCorrected),
            totals.count(EventKind::ErrorUncorrected)
        );
        let _ = writeln!(out, "EC (modeled): {:.6}", totals.ec);
        let _ = writeln!(out, "controller anomalies: {}", self.anomalies);
        out
    }

    /// Write `events.jsonl`, `metrics.csv` and `report.txt` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("events.jsonl"), self.events_jsonl())?;
        std::fs::write(dir.join("metrics.csv"), &self.metrics_csv)?;
        std::fs::write(dir.join("report.txt"), self.summary())?;
        Ok(())
    }
}
