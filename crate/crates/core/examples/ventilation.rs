//! A butane leak switches the exhaust fan on; print the gas readings and
//! fan events around it.
//!
//! ```text
//! cargo run -p parksim --example ventilation -- [ppm] [decay_ppm_per_s]
//! ```

use parksim::sensors::Mq2Model;
use parksim::sim::{run_scenario, GasInjection, ScenarioConfig};
use parksim::stochastic::{vent_response, TrafficProfile};
use parksim::telemetry::EventKind;

fn main() {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>().expect("numeric argument"));
    let ppm = args.next().unwrap_or(20.0);
    let rate = args.next().unwrap_or(2.0);

    let cfg = ScenarioConfig {
        duration_s: 300.0,
        traffic: TrafficProfile::constant(0.0, 1800.0),
        mq2: Mq2Model::default().noiseless(),
        gas_interval_s: 1.0,
        decay_rate_ppm_s: rate,
        injections: vec![GasInjection {
            t: 100.0,
            gas: "butane".into(),
            ppm,
        }],
        ..Default::default()
    };
    let report = run_scenario(&cfg).unwrap();
    let mut on_at = None;
    for r in &report.records {
        match r.kind {
            EventKind::GasSample if (95.0..=120.0).contains(&r.t) => {
                println!("{:>10.6}s  reading {:>6.2} ppm", r.t, r.value.unwrap())
            }
            EventKind::FanOn => {
                on_at = Some((r.t, r.value.unwrap_or(0.0)));
                println!("{:>10.6}s  fan on", r.t);
            }
            EventKind::FanOff => {
                println!("{:>10.6}s  fan off", r.t);
                if let Some((t0, reading)) = on_at {
                    let predicted = vent_response(reading - cfg.facility.fan_off_ppm(), rate).unwrap();
                    println!("ran {:.3} s, predicted {predicted:.3} s", r.t - t0);
                }
            }
            _ => {}
        }
    }
}
