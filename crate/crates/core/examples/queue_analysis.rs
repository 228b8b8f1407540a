//! Probability the lot is full, expected occupancy and fan response time.
//!
//! ```text
//! cargo run -p parksim --example queue_analysis
//! ```

use parksim::stochastic::{analyze, littles_law, vent_response, LambdaUnit, QueueInputs};

fn main() {
    println!("P(lot full) with arrivals per dwell period on the rows, slots on the columns");
    let slots = [2u64, 4, 6, 8, 10];
    print!("{:>8}", "lambda");
    for n in slots {
        print!("{n:>10}");
    }
    println!();
    for lambda in [1.0, 2.0, 4.0, 6.0, 8.0] {
        print!("{lambda:>8.1}");
        for n in slots {
            let r = analyze(&QueueInputs {
                lambda,
                slots: n,
                unit: LambdaUnit::PerDwell,
                t_avg_h: None,
                delta_g: None,
                reduction_rate: None,
            })
            .unwrap();
            print!("{:>10.5}", r.p_full);
        }
        println!();
    }

    let (rate, dwell_h) = (20.0, 0.5);
    println!(
        "\n{rate} cars/h staying {dwell_h} h on average keep L = {} cars inside",
        littles_law(rate, dwell_h).unwrap()
    );

    let per_hour = analyze(&QueueInputs {
        lambda: rate,
        slots: 12,
        unit: LambdaUnit::PerHour,
        t_avg_h: Some(dwell_h),
        delta_g: None,
        reduction_rate: None,
    })
    .unwrap();
    println!("with 12 slots the lot is full {:.2}% of the time", per_hour.p_full * 100.0);

    println!("\nfan run time to clear a gas excess:");
    for (dg, r) in [(10.4, 2.0), (10.4, 1.0), (20.0, 2.0)] {
        println!("  {dg:>5} ppm at {r} ppm/s: {:.1} s", vent_response(dg, r).unwrap());
    }
}
