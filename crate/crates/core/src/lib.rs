//! # parksim
//!
//! A smart-parking facility controller, behavioural sensor models, a
//! deterministic discrete-event simulator and a small MQTT 3.1.1 broker and
//! client stack, all in one library.
//!
//! The pieces fit together the way a real deployment does:
//!
//! ```text
//!  traffic ──▶ sensors ──▶ controller ──▶ client ──▶ (network) ──▶ broker ──▶ subscribers
//!                              │                                     │
//!                              └── display / gates / fan             └── retained slot state
//! ```
//!
//! * [`domain`]: facility configuration and state.
//! * [`controller`]: the slot-management state machine.
//! * [`sensors`]: IR, DHT22 and MQ-2 behavioural models.
//! * [`stochastic`]: Poisson / Little's Law analysis and the arrival generator.
//! * [`mqtt`]: wire codec and topic matching.
//! * [`broker`]: sans-IO broker and client engines, plus a TCP front end.
//! * [`telemetry`]: data-rate, delay and error-correction metrics.
//! * [`sim`]: scenario files and the event-driven simulator.
//! * [`cli`]: argument parsing and the terminal watch renderer used by the
//!   `parksim` binary.
//!
//! Runnable walkthroughs live in `examples/`; run one with
//! `cargo run -p parksim --example queue_analysis`.

pub mod broker;
pub mod cli;
pub mod controller;
pub mod domain;
pub mod mqtt;
pub mod rng;
pub mod sensors;
pub mod sim;
pub mod stochastic;
pub mod telemetry;

pub use controller::{Controller, ControllerEvent};
pub use domain::{ControlAction, DisplayFrame, FacilityConfig, FacilityState};
pub use mqtt::{MqttPacket, QoS};
pub use sim::{run_scenario, ScenarioConfig, SimReport};
