//! Step the slot controller through a short, scripted morning and print what
//! it does at each event.
//!
//! ```text
//! cargo run -p parksim --example controller_walkthrough
//! ```

use parksim::controller::{Controller, ControllerEvent};
use parksim::domain::{ControlAction, FacilityConfig, Gate};

fn main() {
    let mut c = Controller::new(FacilityConfig::with_slots(2)).unwrap();
    let script = [
        (0.0, ControllerEvent::EnvReading { temp_c: 29.5, humidity_pct: 74.0 }),
        (10.0, ControllerEvent::EntranceDetect),
        (15.0, ControllerEvent::GateTimeout(Gate::Entrance)),
        (40.0, ControllerEvent::SlotUpdate { slot: 0, occupied: true }),
        (60.0, ControllerEvent::EntranceDetect),
        (90.0, ControllerEvent::SlotUpdate { slot: 1, occupied: true }),
        (120.0, ControllerEvent::EntranceDetect),
        (300.0, ControllerEvent::GasReading { ppm: 12.3 }),
        (306.0, ControllerEvent::GasReading { ppm: 9.1 }),
        (312.0, ControllerEvent::GasReading { ppm: 7.8 }),
        (900.0, ControllerEvent::SlotUpdate { slot: 0, occupied: false }),
        (930.0, ControllerEvent::ExitDetect),
    ];
    for (t, ev) in script {
        let actions = c.handle(t, &ev).unwrap();
        println!("{t:>6.0}s  {ev:?}");
        for a in actions {
            match a {
                ControlAction::Publish { topic, payload, .. } => {
                    println!("          publish {topic} = {}", String::from_utf8_lossy(&payload))
                }
                ControlAction::UpdateDisplay(frame) => println!("          display [{frame}]"),
                other => println!("          {other:?}"),
            }
        }
    }
    let s = c.state();
    println!("\nfinal: {} of {} free, fan {}", s.total_vacant, s.total_slots(), s.fan.as_str());
}
