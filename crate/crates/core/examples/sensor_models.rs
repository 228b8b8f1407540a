//! The three sensor models on their own: IR accuracy against light, the
//! climate bump a car leaves behind, and the MQ-2 gas response.
//!
//! ```text
//! cargo run -p parksim --example sensor_models
//! ```

use std::collections::BTreeMap;

use parksim::rng::{stream, Stream};
use parksim::sensors::{ir_detect, sample_env, sample_mq2, EnvModel, IrModel, Mq2Model, PendingBumps};

fn main() {
    let ir = IrModel::default();
    let mut rng = stream(1, Stream::Ir);
    println!("IR accuracy, model vs 10 000 reads:");
    for lux in [0.0, 200.0, 400.0, 600.0, 800.0, 1000.0] {
        let hits = (0..10_000)
            .filter(|_| ir_detect(&ir, true, lux, &mut rng).unwrap())
            .count();
        println!("  {lux:>6} lx  {:.3}  {:.3}", ir.accuracy(lux).unwrap(), hits as f64 / 1e4);
    }

    let env = EnvModel::default().noiseless();
    let mut rng = stream(1, Stream::Env);
    let mut bumps = PendingBumps::new();
    bumps.car_entered(&env, 0.0);
    println!("\nclimate after one car enters at t = 0:");
    for t in [0.0, 60.0, 300.0, 600.0, 1800.0, 3600.0] {
        let (temp, hum) = sample_env(&env, t, &bumps, &mut rng);
        println!("  t = {t:>6} s  {temp:.3} C  {hum:.3} %");
    }

    let mq2 = Mq2Model::default();
    let mut rng = stream(1, Stream::Gas);
    println!("\nMQ-2 readings:");
    for mix in [
        vec![("butane", 10.0)],
        vec![("butane", 20.0)],
        vec![("alcohol", 20.0)],
        vec![("butane", 5.0), ("alcohol", 5.0)],
    ] {
        let gases: BTreeMap<String, f64> = mix.iter().map(|(g, p)| (g.to_string(), *p)).collect();
        println!(
            "  {mix:?}: {:.2} ppm noiseless, {:.2} ppm sampled",
            mq2.response(&gases).unwrap(),
            sample_mq2(&mq2, &gases, &mut rng).unwrap()
        );
    }
}
