//! Scenario files: one `key = value` per line, `#` starts a comment, keys
//! are dotted paths. Anything not mentioned keeps its default.

use std::path::Path;

use thiserror::Error;

use crate::domain::{ConfigError, FacilityConfig};
use crate::mqtt::{validate_topic_filter, QoS};
use crate::sensors::{EnvModel, IrModel, Mq2Model, SensorError};
use crate::stochastic::{DomainError, TrafficProfile};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Facility(#[from] ConfigError),
    #[error(transparent)]
    Traffic(#[from] DomainError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub latency_s: f64,
    /// Probability that any single PUBLISH on the wire is lost.
    pub drop_prob: f64,
    pub ack_timeout_s: f64,
    pub max_retries: u32,
    /// QoS the controller publishes with.
    pub qos: QoS,
    pub keep_alive_s: u16,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            latency_s: 0.05,
            drop_prob: 0.0,
            ack_timeout_s: 2.0,
            max_retries: 3,
            qos: QoS::AtLeastOnce,
            keep_alive_s: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubscriberConfig {
    pub count: usize,
    pub filter: String,
    pub qos: QoS,
}

impl Default for SubscriberConfig {
    fn default() -> Self {
        SubscriberConfig {
            count: 1,
            filter: "parking/#".into(),
            qos: QoS::AtLeastOnce,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasInjection {
    pub t: f64,
    pub gas: String,
    pub ppm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub gate_to_slot_travel_s: f64,
    pub facility: FacilityConfig,
    pub traffic: TrafficProfile,
    pub ir: IrModel,
    /// IR sensors are re-read this often until they report the truth.
    pub ir_repoll_s: f64,
    /// Midday ambient light; it follows a half-sine from 06:00 to 18:00.
    pub peak_lux: f64,
    pub env: EnvModel,
    pub env_interval_s: f64,
    pub mq2: Mq2Model,
    pub gas_interval_s: f64,
    /// Drop in the sensed gas reading per second while the fan runs.
    pub decay_rate_ppm_s: f64,
    pub injections: Vec<GasInjection>,
    pub network: NetworkConfig,
    pub subscribers: SubscriberConfig,
    pub metrics_window_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 42,
            duration_s: 86_400.0,
            gate_to_slot_travel_s: 30.0,
            facility: FacilityConfig::default(),
            traffic: TrafficProfile::default(),
            ir: IrModel::default(),
            ir_repoll_s: 1.0,
            peak_lux: 800.0,
            env: EnvModel::default(),
            env_interval_s: 60.0,
            mq2: Mq2Model::default(),
            gas_interval_s: 30.0,
            decay_rate_ppm_s: 2.0,
            injections: Vec::new(),
            network: NetworkConfig::default(),
            subscribers: SubscriberConfig::default(),
            metrics_window_s: crate::telemetry::DEFAULT_WINDOW_S,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(format!("{field} must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.facility.validate()?;
        self.traffic.validate()?;
        self.ir.validate()?;
        self.env.validate()?;
        self.mq2.validate()?;
        positive("duration_s", self.duration_s)?;
        positive("sensors.ir.repoll_s", self.ir_repoll_s)?;
        positive("sensors.env.interval_s", self.env_interval_s)?;
        positive("sensors.mq2.interval_s", self.gas_interval_s)?;
        positive("network.ack_timeout_s", self.network.ack_timeout_s)?;
        positive("metrics.window_s", self.metrics_window_s)?;
        if !(self.gate_to_slot_travel_s >= 0.0) {
            return Err(ScenarioError::Invalid("gate_to_slot_travel_s must be non-negative".into()));
        }
        if !(self.peak_lux >= 0.0) {
            return Err(ScenarioError::Invalid("sensors.ir.peak_lux must be non-negative".into()));
        }
        if !(self.decay_rate_ppm_s >= 0.0) {
            return Err(ScenarioError::Invalid(
                "ventilation.decay_rate_ppm_s must be non-negative".into(),
            ));
        }
        if !(self.network.latency_s >= 0.0) {
            return Err(ScenarioError::Invalid("network.latency_s must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.network.drop_prob) {
            return Err(ScenarioError::Invalid(format!(
                "network.drop_prob must lie in [0, 1), got {}",
                self.network.drop_prob
            )));
        }
        validate_topic_filter(&self.subscribers.filter)
            .map_err(|e| ScenarioError::Invalid(format!("subscribers.filter: {e}")))?;
        for inj in &self.injections {
            if !self.mq2.sensitivities.contains_key(&inj.gas) {
                return Err(SensorError::UnknownGas(inj.gas.clone()).into());
            }
            if !(inj.t >= 0.0 && inj.ppm >= 0.0) {
                return Err(ScenarioError::Invalid(format!(
                    "gas injection {}:{}:{} needs non-negative time and ppm",
                    inj.t, inj.gas, inj.ppm
                )));
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        parse_scenario(&text)
    }
}

fn num<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("cannot parse {value:?}: {e}"))
}

fn qos(value: &str) -> Result<QoS, String> {
    match value {
        "0" => Ok(QoS::AtMostOnce),
        "1" => Ok(QoS::AtLeastOnce),
        other => Err(format!("qos must be 0 or 1, got {other:?}")),
    }
}

fn list(value: &str) -> Result<Vec<f64>, String> {
    value.split(',').map(|v| num::<f64>(v.trim())).collect()
}

fn injections(value: &str) -> Result<Vec<GasInjection>, String> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            let [t, gas, ppm] = parts[..] else {
                return Err(format!("injection {item:?} is not time:gas:ppm"));
            };
            Ok(GasInjection {
                t: num(t)?,
                gas: gas.to_string(),
                ppm: num(ppm)?,
            })
        })
        .collect()
}

fn apply(cfg: &mut ScenarioConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "seed" => cfg.seed = num(value)?,
        "duration_s" => cfg.duration_s = num(value)?,
        "gate_to_slot_travel_s" => cfg.gate_to_slot_travel_s = num(value)?,
        "metrics.window_s" => cfg.metrics_window_s = num(value)?,

        "facility.total_slots" => cfg.facility.total_slots = num(value)?,
        "facility.gas_threshold_ppm" => cfg.facility.gas_threshold_ppm = num(value)?,
        "facility.gas_hysteresis_ppm" => cfg.facility.gas_hysteresis_ppm = num(value)?,
        "facility.lux_max" => {
            cfg.facility.lux_max = num(value)?;
            cfg.ir.lux_max = cfg.facility.lux_max;
        }
        "facility.topic_prefix" => cfg.facility.topic_prefix = value.to_string(),
        "facility.gate_open_s" => cfg.facility.gate_open_s = num(value)?,
        "facility.buzzer_s" => cfg.facility.buzzer_s = num(value)?,

        "traffic.hourly_rates" => {
            let rates = list(value)?;
            cfg.traffic.hourly_rates = rates
                .try_into()
                .map_err(|v: Vec<f64>| format!("expected 24 hourly rates, got {}", v.len()))?;
        }
        "traffic.constant_rate" => cfg.traffic.hourly_rates = [num(value)?; 24],
        "traffic.dwell_mean_s" => cfg.traffic.dwell_mean_s = num(value)?,

        "sensors.ir.accuracy_dark" => cfg.ir.acc_low_lux = num(value)?,
        "sensors.ir.accuracy_bright" => cfg.ir.acc_high_lux = num(value)?,
        "sensors.ir.repoll_s" => cfg.ir_repoll_s = num(value)?,
        "sensors.ir.peak_lux" => cfg.peak_lux = num(value)?,

        "sensors.env.base_temp_c" => cfg.env.base_temp_c = num(value)?,
        "sensors.env.base_humidity_pct" => cfg.env.base_humidity_pct = num(value)?,
        "sensors.env.entry_bump_temp_c" => cfg.env.entry_bump.0 = num(value)?,
        "sensors.env.entry_bump_humidity_pct" => cfg.env.entry_bump.1 = num(value)?,
        "sensors.env.exit_bump_temp_c" => cfg.env.exit_bump.0 = num(value)?,
        "sensors.env.exit_bump_humidity_pct" => cfg.env.exit_bump.1 = num(value)?,
        "sensors.env.relax_tau_s" => cfg.env.relax_tau_s = num(value)?,
        "sensors.env.noise_temp_c" => cfg.env.noise_sd.0 = num(value)?,
        "sensors.env.noise_humidity_pct" => cfg.env.noise_sd.1 = num(value)?,
        "sensors.env.interval_s" => cfg.env_interval_s = num(value)?,

        "sensors.mq2.noise_ppm" => cfg.mq2.noise_sd = num(value)?,
        "sensors.mq2.interval_s" => cfg.gas_interval_s = num(value)?,
        k if k.starts_with("sensors.mq2.sensitivity.") => {
            let gas = &k["sensors.mq2.sensitivity.".len()..];
            if gas.is_empty() {
                return Err("missing gas name".into());
            }
            cfg.mq2.sensitivities.insert(gas.to_string(), num(value)?);
        }

        "network.latency_s" => cfg.network.latency_s = num(value)?,
        "network.drop_prob" => cfg.network.drop_prob = num(value)?,
        "network.ack_timeout_s" => cfg.network.ack_timeout_s = num(value)?,
        "network.max_retries" => cfg.network.max_retries = num(value)?,
        "network.qos" => cfg.network.qos = qos(value)?,
        "network.keep_alive_s" => cfg.network.keep_alive_s = num(value)?,

        "ventilation.decay_rate_ppm_s" => cfg.decay_rate_ppm_s = num(value)?,
        "gas.injections" => cfg.injections = injections(value)?,

        "subscribers.count" => cfg.subscribers.count = num(value)?,
        "subscribers.filter" => cfg.subscribers.filter = value.to_string(),
        "subscribers.qos" => cfg.subscribers.qos = qos(value)?,

        other => return Err(format!("unknown key {other:?}")),
    }
    Ok(())
}

/// Parse scenario text on top of [`ScenarioConfig::default`] and validate
/// the result.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ScenarioError::Parse {
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        apply(&mut cfg, key.trim(), value.trim()).map_err(err)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_scenario("# nothing\n\n").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn dotted_keys() {
        let cfg = parse_scenario(
            "facility.total_slots = 6   # six bays\n\
             network.drop_prob = 0.1\n\
             traffic.constant_rate = 20\n\
             sensors.mq2.sensitivity.lpg = 0.7\n\
             gas.injections = 10:butane:20; 60:alcohol:5\n",
        )
        .unwrap();
        assert_eq!(cfg.facility.total_slots, 6);
        assert_eq!(cfg.network.drop_prob, 0.1);
        assert_eq!(cfg.traffic.hourly_rates, [20.0; 24]);
        assert_eq!(cfg.mq2.sensitivities["lpg"], 0.7);
        assert_eq!(cfg.injections.len(), 2);
        assert_eq!(cfg.injections[1].gas, "alcohol");
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_scenario("seed = 1\nbogus.key = 3\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 2, .. }), "{err}");
        let err = parse_scenario("traffic.hourly_rates = 1,2,3").unwrap_err();
        assert!(err.to_string().contains("24"), "{err}");
        let err = parse_scenario("no equals sign").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 1, .. }));
    }

    #[test]
    fn invalid_values_rejected_before_start() {
        assert!(parse_scenario("network.drop_prob = 1.0").is_err());
        assert!(parse_scenario("duration_s = 0").is_err());
        assert!(parse_scenario("facility.total_slots = 0").is_err());
        assert!(parse_scenario("gas.injections = 5:propane:3").is_err());
    }
}
