//! Facility configuration, state and the actions the controller emits.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("facility must have at least one slot")]
    NoSlots,
    #[error("gas hysteresis {hysteresis} ppm exceeds threshold {threshold} ppm")]
    HysteresisTooLarge { hysteresis: f64, threshold: f64 },
    #[error("{field} must be {expected}, got {value}")]
    OutOfRange {
        field: &'static str,
        expected: &'static str,
        value: f64,
    },
    #[error("topic prefix {0:?} must be non-empty and free of wildcards")]
    BadTopicPrefix(String),
}

/// Static facility parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FacilityConfig {
    pub total_slots: usize,
    pub gas_threshold_ppm: f64,
    /// The fan switches off once the reading falls to `threshold - hysteresis`.
    pub gas_hysteresis_ppm: f64,
    pub lux_max: f64,
    pub topic_prefix: String,
    /// Gates close automatically this long after opening.
    pub gate_open_s: f64,
    pub buzzer_s: f64,
}

impl Default for FacilityConfig {
    fn default() -> Self {
        FacilityConfig {
            total_slots: 4,
            gas_threshold_ppm: 10.0,
            gas_hysteresis_ppm: 2.0,
            lux_max: 1000.0,
            topic_prefix: "parking".to_string(),
            gate_open_s: 5.0,
            buzzer_s: 2.0,
        }
    }
}

impl FacilityConfig {
    pub fn with_slots(total_slots: usize) -> Self {
        FacilityConfig {
            total_slots,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.total_slots == 0 {
            return Err(ConfigError::NoSlots);
        }
        non_negative("gas_threshold_ppm", self.gas_threshold_ppm)?;
        non_negative("gas_hysteresis_ppm", self.gas_hysteresis_ppm)?;
        if self.gas_hysteresis_ppm > self.gas_threshold_ppm {
            return Err(ConfigError::HysteresisTooLarge {
                hysteresis: self.gas_hysteresis_ppm,
                threshold: self.gas_threshold_ppm,
            });
        }
        if !(self.lux_max > 0.0 && self.lux_max.is_finite()) {
            return Err(ConfigError::OutOfRange {
                field: "lux_max",
                expected: "positive",
                value: self.lux_max,
            });
        }
        non_negative("gate_open_s", self.gate_open_s)?;
        non_negative("buzzer_s", self.buzzer_s)?;
        let p = &self.topic_prefix;
        if p.is_empty() || p.contains(['+', '#', '\0']) {
            return Err(ConfigError::BadTopicPrefix(p.clone()));
        }
        Ok(())
    }

    /// Turn-off level of the exhaust fan.
    pub fn fan_off_ppm(&self) -> f64 {
        self.gas_threshold_ppm - self.gas_hysteresis_ppm
    }
}

pub(crate) fn non_negative(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            field,
            expected: "non-negative",
            value,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateState {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Switch {
    On,
    Off,
}

impl GateState {
    pub fn as_str(self) -> &'static str {
        match self {
            GateState::Open => "open",
            GateState::Closed => "closed",
        }
    }
}

impl Switch {
    pub fn as_str(self) -> &'static str {
        match self {
            Switch::On => "on",
            Switch::Off => "off",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    Entrance,
    Exit,
}

impl Gate {
    pub fn as_str(self) -> &'static str {
        match self {
            Gate::Entrance => "entrance",
            Gate::Exit => "exit",
        }
    }
}

/// Everything the controller knows about the facility.
///
/// `total_vacant` is driven by the gates and `slots` by the per-slot IR
/// sensors. The two disagree while a car drives between the gate and its
/// slot; they only have to agree once no car is in transit.
#[derive(Debug, Clone, PartialEq)]
pub struct FacilityState {
    pub slots: Vec<bool>,
    pub total_vacant: usize,
    pub entrance_gate: GateState,
    pub exit_gate: GateState,
    pub buzzer: Switch,
    pub fan: Switch,
    pub last_temp_c: f64,
    pub last_humidity_pct: f64,
    pub last_gas_ppm: f64,
}

impl FacilityState {
    pub fn total_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn occupied_count(&self) -> usize {
        self.slots.iter().filter(|s| **s).count()
    }

    pub fn gate(&self, gate: Gate) -> GateState {
        match gate {
            Gate::Entrance => self.entrance_gate,
            Gate::Exit => self.exit_gate,
        }
    }
}

/// Fresh facility with every slot vacant, gates closed, buzzer and fan off.
pub fn new_facility(config: &FacilityConfig) -> Result<FacilityState, ConfigError> {
    config.validate()?;
    Ok(FacilityState {
        slots: vec![false; config.total_slots],
        total_vacant: config.total_slots,
        entrance_gate: GateState::Closed,
        exit_gate: GateState::Closed,
        buzzer: Switch::Off,
        fan: Switch::Off,
        last_temp_c: 0.0,
        last_humidity_pct: 0.0,
        last_gas_ppm: 0.0,
    })
}

/// Vacancy as counted from the slot sensors: `n - Σ slots`.
pub fn derived_vacancy(state: &FacilityState) -> usize {
    state.total_slots() - state.occupied_count()
}

/// The four values shown on the entrance display.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplayFrame {
    pub temp_c: f64,
    pub humidity_pct: f64,
    pub total_vacant: usize,
    pub total_slots: usize,
}

impl fmt::Display for DisplayFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "T {:.1}C  H {:.1}%  Free {}/{}",
            self.temp_c, self.humidity_pct, self.total_vacant, self.total_slots
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlAction {
    OpenEntranceGate,
    CloseEntranceGate,
    OpenExitGate,
    CloseExitGate,
    BuzzerOn,
    BuzzerOff,
    FanOn,
    FanOff,
    UpdateDisplay(DisplayFrame),
    Publish {
        topic: String,
        payload: Vec<u8>,
        retained: bool,
    },
}

impl ControlAction {
    pub fn publish(topic: impl Into<String>, payload: impl Into<Vec<u8>>) -> Self {
        let topic = topic.into();
        debug_assert!(!topic.is_empty() && !topic.contains(['+', '#']));
        ControlAction::Publish {
            topic,
            payload: payload.into(),
            retained: true,
        }
    }

    pub fn is_publish(&self) -> bool {
        matches!(self, ControlAction::Publish { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_facility_starts_vacant_and_closed() {
        let s = new_facility(&FacilityConfig::with_slots(4)).unwrap();
        assert_eq!(s.slots, vec![false; 4]);
        assert_eq!(s.total_vacant, 4);
        assert_eq!(s.entrance_gate, GateState::Closed);
        assert_eq!(s.exit_gate, GateState::Closed);
        assert_eq!(s.buzzer, Switch::Off);
        assert_eq!(s.fan, Switch::Off);
    }

    #[test]
    fn single_slot_lot() {
        let s = new_facility(&FacilityConfig::with_slots(1)).unwrap();
        assert_eq!(s.slots, vec![false]);
        assert_eq!(s.total_vacant, 1);
    }

    #[test]
    fn zero_slots_rejected() {
        assert_eq!(
            new_facility(&FacilityConfig::with_slots(0)),
            Err(ConfigError::NoSlots)
        );
    }

    #[test]
    fn hysteresis_above_threshold_rejected() {
        let cfg = FacilityConfig {
            gas_hysteresis_ppm: 12.0,
            ..Default::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::HysteresisTooLarge { .. })
        ));
        let cfg = FacilityConfig {
            lux_max: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = FacilityConfig {
            topic_prefix: "a/#".into(),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn derived_vacancy_counts_flags() {
        let mut s = new_facility(&FacilityConfig::with_slots(4)).unwrap();
        assert_eq!(derived_vacancy(&s), 4);
        s.slots = vec![true; 4];
        assert_eq!(derived_vacancy(&s), 0);
        s.slots = vec![true, false, true, false];
        assert_eq!(derived_vacancy(&s), 2);
    }
}
