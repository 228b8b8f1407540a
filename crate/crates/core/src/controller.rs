//! Slot-management state machine.
//!
//! One event in, one deterministic `(state', actions)` out. The handlers are
//! free functions over [`FacilityState`] so they can be reasoned about and
//! tested in isolation; [`Controller`] owns a state and an anomaly log and
//! dispatches [`ControllerEvent`]s to them.

use thiserror::Error;

use crate::domain::{
    ControlAction, DisplayFrame, FacilityConfig, FacilityState, Gate, GateState, Switch,
};

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerEvent {
    /// Entrance IR reports a car.
    EntranceDetect,
    /// Exit IR reports a car.
    ExitDetect,
    /// A slot IR sensor changed its reading. `slot` is 0-based.
    SlotUpdate { slot: usize, occupied: bool },
    EnvReading { temp_c: f64, humidity_pct: f64 },
    GasReading { ppm: f64 },
    /// The open period of a gate elapsed.
    GateTimeout(Gate),
    BuzzerTimeout,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("slot {slot} out of range for a {total}-slot facility")]
    SlotOutOfRange { slot: usize, total: usize },
}

/// Something odd the controller noticed and recovered from.
#[derive(Debug, Clone, PartialEq)]
pub enum Anomaly {
    /// Exit detected while the counter already says the lot is empty.
    GhostExit,
    HumidityOutOfRange(f64),
    NonFiniteTemperature(f64),
    InvalidGasReading(f64),
}

impl Anomaly {
    pub fn describe(&self) -> String {
        match self {
            Anomaly::GhostExit => "exit detected with no car inside".to_string(),
            Anomaly::HumidityOutOfRange(h) => format!("humidity {h} outside [0, 100]"),
            Anomaly::NonFiniteTemperature(t) => format!("temperature reading {t} is not finite"),
            Anomaly::InvalidGasReading(g) => format!("gas reading {g} ppm rejected"),
        }
    }
}

/// Result of applying one event.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: FacilityState,
    pub actions: Vec<ControlAction>,
    pub anomaly: Option<Anomaly>,
}

impl Transition {
    fn new(state: FacilityState, actions: Vec<ControlAction>) -> Self {
        debug_assert!(state.total_vacant <= state.total_slots());
        Transition {
            state,
            actions,
            anomaly: None,
        }
    }

    fn rejected(state: &FacilityState, anomaly: Anomaly) -> Self {
        Transition {
            state: state.clone(),
            actions: Vec::new(),
            anomaly: Some(anomaly),
        }
    }
}

pub fn slot_topic(prefix: &str, slot: usize) -> String {
    format!("{prefix}/slot/{}/status", slot + 1)
}

pub fn summary_topic(prefix: &str) -> String {
    format!("{prefix}/summary")
}

pub fn gate_topic(prefix: &str, gate: Gate) -> String {
    format!("{prefix}/gate/{}", gate.as_str())
}

fn summary_publish(state: &FacilityState, cfg: &FacilityConfig) -> ControlAction {
    ControlAction::publish(
        summary_topic(&cfg.topic_prefix),
        format!("{}/{}", state.total_vacant, state.total_slots()),
    )
}

fn gate_publish(cfg: &FacilityConfig, gate: Gate, to: GateState) -> ControlAction {
    ControlAction::publish(gate_topic(&cfg.topic_prefix, gate), to.as_str())
}

fn decimal(v: f64) -> String {
    format!("{v:.2}")
}

/// Project the display contents out of the state.
pub fn render_display(state: &FacilityState) -> DisplayFrame {
    DisplayFrame {
        temp_c: state.last_temp_c,
        humidity_pct: state.last_humidity_pct,
        total_vacant: state.total_vacant,
        total_slots: state.total_slots(),
    }
}

/// Car at the entrance. Admits it iff a vacancy exists.
///
/// Checking before decrementing gives the same outcome as decrementing and
/// reverting, without ever holding a negative counter.
pub fn handle_entrance(state: &FacilityState, cfg: &FacilityConfig) -> Transition {
    let mut next = state.clone();
    if state.total_vacant == 0 {
        return Transition::new(next, vec![ControlAction::UpdateDisplay(render_display(state))]);
    }
    next.total_vacant -= 1;
    next.entrance_gate = GateState::Open;
    next.buzzer = Switch::On;
    let actions = vec![
        ControlAction::OpenEntranceGate,
        ControlAction::BuzzerOn,
        ControlAction::UpdateDisplay(render_display(&next)),
        gate_publish(cfg, Gate::Entrance, GateState::Open),
        summary_publish(&next, cfg),
    ];
    Transition::new(next, actions)
}

/// Car at the exit. The counter is clamped at `n`; an exit seen with the lot
/// already empty is reported as an anomaly but the gate still opens.
pub fn handle_exit(state: &FacilityState, cfg: &FacilityConfig) -> Transition {
    let mut next = state.clone();
    let anomaly = if state.total_vacant >= state.total_slots() {
        Some(Anomaly::GhostExit)
    } else {
        next.total_vacant += 1;
        None
    };
    next.exit_gate = GateState::Open;
    let actions = vec![
        ControlAction::OpenExitGate,
        ControlAction::UpdateDisplay(render_display(&next)),
        gate_publish(cfg, Gate::Exit, GateState::Open),
        summary_publish(&next, cfg),
    ];
    let mut t = Transition::new(next, actions);
    t.anomaly = anomaly;
    t
}

pub fn handle_slot_update(
    state: &FacilityState,
    cfg: &FacilityConfig,
    slot: usize,
    occupied: bool,
) -> Result<Transition, ControllerError> {
    if slot >= state.total_slots() {
        return Err(ControllerError::SlotOutOfRange {
            slot,
            total: state.total_slots(),
        });
    }
    let mut next = state.clone();
    next.slots[slot] = occupied;
    let payload = if occupied { "1" } else { "0" };
    let actions = vec![ControlAction::publish(
        slot_topic(&cfg.topic_prefix, slot),
        payload,
    )];
    Ok(Transition::new(next, actions))
}

pub fn handle_env(
    state: &FacilityState,
    cfg: &FacilityConfig,
    temp_c: f64,
    humidity_pct: f64,
) -> Transition {
    if !(0.0..=100.0).contains(&humidity_pct) {
        return Transition::rejected(state, Anomaly::HumidityOutOfRange(humidity_pct));
    }
    if !temp_c.is_finite() {
        return Transition::rejected(state, Anomaly::NonFiniteTemperature(temp_c));
    }
    let mut next = state.clone();
    next.last_temp_c = temp_c;
    next.last_humidity_pct = humidity_pct;
    let prefix = &cfg.topic_prefix;
    let actions = vec![
        ControlAction::UpdateDisplay(render_display(&next)),
        ControlAction::publish(format!("{prefix}/env/temperature"), decimal(temp_c)),
        ControlAction::publish(format!("{prefix}/env/humidity"), decimal(humidity_pct)),
    ];
    Transition::new(next, actions)
}

/// Exhaust fan control: on above the threshold, off at or below
/// `threshold - hysteresis`, unchanged in between.
pub fn handle_gas(state: &FacilityState, cfg: &FacilityConfig, ppm: f64) -> Transition {
    if !(ppm >= 0.0 && ppm.is_finite()) {
        return Transition::rejected(state, Anomaly::InvalidGasReading(ppm));
    }
    let mut next = state.clone();
    next.last_gas_ppm = ppm;
    let prefix = &cfg.topic_prefix;
    let mut actions = vec![ControlAction::publish(format!("{prefix}/gas/ppm"), decimal(ppm))];
    let switch_to = match state.fan {
        Switch::Off if ppm > cfg.gas_threshold_ppm => Some(Switch::On),
        Switch::On if ppm <= cfg.fan_off_ppm() => Some(Switch::Off),
        _ => None,
    };
    if let Some(fan) = switch_to {
        next.fan = fan;
        actions.push(match fan {
            Switch::On => ControlAction::FanOn,
            Switch::Off => ControlAction::FanOff,
        });
        actions.push(ControlAction::publish(
            format!("{prefix}/fan/state"),
            fan.as_str(),
        ));
    }
    Transition::new(next, actions)
}

pub fn handle_gate_timeout(state: &FacilityState, cfg: &FacilityConfig, gate: Gate) -> Transition {
    let mut next = state.clone();
    if state.gate(gate) == GateState::Closed {
        return Transition::new(next, Vec::new());
    }
    let close = match gate {
        Gate::Entrance => {
            next.entrance_gate = GateState::Closed;
            ControlAction::CloseEntranceGate
        }
        Gate::Exit => {
            next.exit_gate = GateState::Closed;
            ControlAction::CloseExitGate
        }
    };
    let actions = vec![close, gate_publish(cfg, gate, GateState::Closed)];
    Transition::new(next, actions)
}

pub fn handle_buzzer_timeout(state: &FacilityState) -> Transition {
    let mut next = state.clone();
    if state.buzzer == Switch::Off {
        return Transition::new(next, Vec::new());
    }
    next.buzzer = Switch::Off;
    Transition::new(next, vec![ControlAction::BuzzerOff])
}

/// A recorded anomaly with the simulated time it was seen at.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRecord {
    pub t: f64,
    pub anomaly: Anomaly,
}

/// Stateful wrapper around the transition functions.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: FacilityConfig,
    state: FacilityState,
    anomalies: Vec<AnomalyRecord>,
}

impl Controller {
    pub fn new(cfg: FacilityConfig) -> Result<Self, crate::domain::ConfigError> {
        let state = crate::domain::new_facility(&cfg)?;
        Ok(Controller {
            cfg,
            state,
            anomalies: Vec::new(),
        })
    }

    pub fn state(&self) -> &FacilityState {
        &self.state
    }

    pub fn config(&self) -> &FacilityConfig {
        &self.cfg
    }

    pub fn anomalies(&self) -> &[AnomalyRecord] {
        &self.anomalies
    }

    pub fn display(&self) -> DisplayFrame {
        render_display(&self.state)
    }

    pub fn handle(
        &mut self,
        t: f64,
        event: &ControllerEvent,
    ) -> Result<Vec<ControlAction>, ControllerError> {
        let s = &self.state;
        let cfg = &self.cfg;
        let transition = match *event {
            ControllerEvent::EntranceDetect => handle_entrance(s, cfg),
            ControllerEvent::ExitDetect => handle_exit(s, cfg),
            ControllerEvent::SlotUpdate { slot, occupied } => {
                handle_slot_update(s, cfg, slot, occupied)?
            }
            ControllerEvent::EnvReading {
                temp_c,
                humidity_pct,
            } => handle_env(s, cfg, temp_c, humidity_pct),
            ControllerEvent::GasReading { ppm } => handle_gas(s, cfg, ppm),
            ControllerEvent::GateTimeout(gate) => handle_gate_timeout(s, cfg, gate),
            ControllerEvent::BuzzerTimeout => handle_buzzer_timeout(s),
        };
        if let Some(anomaly) = transition.anomaly {
            log::warn!("t={t:.3}s controller anomaly: {}", anomaly.describe());
            self.anomalies.push(AnomalyRecord { t, anomaly });
        }
        self.state = transition.state;
        assert!(self.state.total_vacant <= self.state.total_slots());
        Ok(transition.actions)
    }
}
