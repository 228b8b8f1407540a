//! Behavioural models of the facility's sensors.
//!
//! * IR presence sensors lose accuracy linearly with ambient light, from
//!   98 % in the dark down to 52 % at `lux_max`. Errors are symmetric.
//! * The DHT22 reads a baseline climate plus transient bumps from cars
//!   entering (+0.4 °C, +0.2 %) and leaving (the same amount downward), each
//!   relaxing exponentially back to baseline.
//! * The MQ-2 reports a sensitivity-weighted sum of gas concentrations.
//!
//! All randomness comes from a caller-owned generator.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("ambient light must be non-negative, got {0} lux")]
    NegativeLux(f64),
    #[error("no MQ-2 sensitivity configured for gas {0:?}")]
    UnknownGas(String),
    #[error("concentration of {gas} must be non-negative, got {ppm} ppm")]
    NegativeConcentration { gas: String, ppm: f64 },
    #[error("invalid sensor model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrModel {
    pub acc_low_lux: f64,
    pub acc_high_lux: f64,
    pub lux_max: f64,
}

impl Default for IrModel {
    fn default() -> Self {
        IrModel {
            acc_low_lux: 0.98,
            acc_high_lux: 0.52,
            lux_max: 1000.0,
        }
    }
}

impl IrModel {
    pub fn validate(&self) -> Result<(), SensorError> {
        let ok = (0.0..=1.0).contains(&self.acc_high_lux)
            && (0.0..=1.0).contains(&self.acc_low_lux)
            && self.acc_high_lux <= self.acc_low_lux;
        if !ok {
            return Err(SensorError::InvalidModel(format!(
                "IR accuracies must satisfy 0 <= high ({}) <= low ({}) <= 1",
                self.acc_high_lux, self.acc_low_lux
            )));
        }
        if !(self.lux_max > 0.0 && self.lux_max.is_finite()) {
            return Err(SensorError::InvalidModel(format!(
                "lux_max must be positive, got {}",
                self.lux_max
            )));
        }
        Ok(())
    }

    /// Probability that a reading matches the truth at `lux`.
    pub fn accuracy(&self, lux: f64) -> Result<f64, SensorError> {
        if lux.is_nan() || lux < 0.0 {
            return Err(SensorError::NegativeLux(lux));
        }
        let frac = lux.min(self.lux_max) / self.lux_max;
        Ok(self.acc_low_lux - (self.acc_low_lux - self.acc_high_lux) * frac)
    }
}

/// One IR reading: the truth with probability `accuracy(lux)`, its negation
/// otherwise.
pub fn ir_detect<R: Rng + ?Sized>(
    model: &IrModel,
    truth: bool,
    ambient_lux: f64,
    rng: &mut R,
) -> Result<bool, SensorError> {
    let a = model.accuracy(ambient_lux)?;
    let correct = rng.random::<f64>() < a;
    Ok(if correct { truth } else { !truth })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvModel {
    pub base_temp_c: f64,
    pub base_humidity_pct: f64,
    pub temp_range: (f64, f64),
    pub humidity_range: (f64, f64),
    /// (°C, %) added when a car enters.
    pub entry_bump: (f64, f64),
    pub exit_bump: (f64, f64),
    pub relax_tau_s: f64,
    /// Gaussian noise standard deviations (°C, %).
    pub noise_sd: (f64, f64),
}

impl Default for EnvModel {
    fn default() -> Self {
        EnvModel {
            base_temp_c: 29.5,
            base_humidity_pct: 74.0,
            temp_range: (24.0, 35.0),
            humidity_range: (63.0, 85.0),
            entry_bump: (0.4, 0.2),
            exit_bump: (-0.4, -0.2),
            relax_tau_s: 600.0,
            noise_sd: (0.1, 0.5),
        }
    }
}

impl EnvModel {
    pub fn noiseless(mut self) -> Self {
        self.noise_sd = (0.0, 0.0);
        self
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let (tl, th) = self.temp_range;
        let (hl, hh) = self.humidity_range;
        if !(tl <= th && hl <= hh) {
            return Err(SensorError::InvalidModel(
                "environment ranges must be ordered low..high".into(),
            ));
        }
        if !(0.0..=100.0).contains(&hl) || !(0.0..=100.0).contains(&hh) {
            return Err(SensorError::InvalidModel(
                "humidity range must lie within 0..100 %".into(),
            ));
        }
        if !(self.relax_tau_s > 0.0) {
            return Err(SensorError::InvalidModel("relax_tau_s must be positive".into()));
        }
        if !(self.noise_sd.0 >= 0.0 && self.noise_sd.1 >= 0.0) {
            return Err(SensorError::InvalidModel("noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Sum of all active climate bumps.
///
/// Every bump relaxes with the same time constant, so the sum itself decays
/// exponentially and can be carried as a single pair anchored at the time
/// of the last update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PendingBumps {
    temp_c: f64,
    humidity_pct: f64,
    anchor_s: f64,
}

impl PendingBumps {
    pub fn new() -> Self {
        Self::default()
    }

    /// Remaining bump at `t`.
    pub fn at(&self, t: f64, tau_s: f64) -> (f64, f64) {
        let decay = (-(t - self.anchor_s).max(0.0) / tau_s).exp();
        (self.temp_c * decay, self.humidity_pct * decay)
    }

    pub fn push(&mut self, t: f64, tau_s: f64, bump: (f64, f64)) {
        let (dt, dh) = self.at(t, tau_s);
        self.temp_c = dt + bump.0;
        self.humidity_pct = dh + bump.1;
        self.anchor_s = t.max(self.anchor_s);
    }

    pub fn car_entered(&mut self, model: &EnvModel, t: f64) {
        self.push(t, model.relax_tau_s, model.entry_bump);
    }

    pub fn car_left(&mut self, model: &EnvModel, t: f64) {
        self.push(t, model.relax_tau_s, model.exit_bump);
    }
}

/// One DHT22 reading: baseline + decayed bumps + noise, clamped.
pub fn sample_env<R: Rng + ?Sized>(
    model: &EnvModel,
    t: f64,
    bumps: &PendingBumps,
    rng: &mut R,
) -> (f64, f64) {
    let (bt, bh) = bumps.at(t, model.relax_tau_s);
    let mut temp = model.base_temp_c + bt;
    let mut hum = model.base_humidity_pct + bh;
    if model.noise_sd.0 > 0.0 {
        temp += model.noise_sd.0 * rng.sample::<f64, _>(StandardNormal);
    }
    if model.noise_sd.1 > 0.0 {
        hum += model.noise_sd.1 * rng.sample::<f64, _>(StandardNormal);
    }
    (
        temp.clamp(model.temp_range.0, model.temp_range.1),
        hum.clamp(model.humidity_range.0, model.humidity_range.1),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mq2Model {
    pub sensitivities: BTreeMap<String, f64>,
    pub noise_sd: f64,
}

impl Default for Mq2Model {
    fn default() -> Self {
        let sensitivities = [("butane", 0.92), ("alcohol", 0.80)]
            .into_iter()
            .map(|(g, s)| (g.to_string(), s))
            .collect();
        Mq2Model {
            sensitivities,
            noise_sd: 0.2,
        }
    }
}

impl Mq2Model {
    pub fn noiseless(mut self) -> Self {
        self.noise_sd = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        for (gas, s) in &self.sensitivities {
            if !(0.0..=1.0).contains(s) {
                return Err(SensorError::InvalidModel(format!(
                    "sensitivity for {gas} must lie in [0, 1], got {s}"
                )));
            }
        }
        if !(self.noise_sd >= 0.0) {
            return Err(SensorError::InvalidModel("MQ-2 noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Noise-free weighted sum of the concentrations.
    pub fn response(&self, concentrations: &BTreeMap<String, f64>) -> Result<f64, SensorError> {
        concentrations.iter().try_fold(0.0, |acc, (gas, &ppm)| {
            if !(ppm >= 0.0) {
                return Err(SensorError::NegativeConcentration {
                    gas: gas.clone(),
                    ppm,
                });
            }
            let s = self
                .sensitivities
                .get(gas)
                .ok_or_else(|| SensorError::UnknownGas(gas.clone()))?;
            Ok(acc + s * ppm)
        })
    }
}

/// One MQ-2 reading in ppm, never negative.
pub fn sample_mq2<R: Rng + ?Sized>(
    model: &Mq2Model,
    concentrations: &BTreeMap<String, f64>,
    rng: &mut R,
) -> Result<f64, SensorError> {
    let mut reading = model.response(concentrations)?;
    if model.noise_sd > 0.0 {
        reading += model.noise_sd * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(reading.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn gases(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(g, p)| (g.to_string(), *p)).collect()
    }

    #[test]
    fn ir_accuracy_endpoints_and_midpoint() {
        let m = IrModel::default();
        assert!((m.accuracy(0.0).unwrap() - 0.98).abs() < 1e-12);
        assert!((m.accuracy(1000.0).unwrap() - 0.52).abs() < 1e-12);
        assert!((m.accuracy(500.0).unwrap() - 0.75).abs() < 1e-12);
        // saturates past lux_max
        assert_eq!(m.accuracy(5000.0).unwrap(), m.accuracy(1000.0).unwrap());
        assert_eq!(m.accuracy(-1.0), Err(SensorError::NegativeLux(-1.0)));
    }

    #[test]
    fn ir_errors_are_symmetric() {
        let m = IrModel::default();
        let mut rng = stream(1, Stream::Ir);
        let trials = 20_000;
        let fp = (0..trials)
            .filter(|_| ir_detect(&m, false, 500.0, &mut rng).unwrap())
            .count() as f64
            / trials as f64;
        assert!((fp - 0.25).abs() < 0.02, "false-positive rate {fp}");
    }

    #[test]
    fn ir_model_validation() {
        let bad = IrModel {
            acc_low_lux: 0.5,
            acc_high_lux: 0.9,
            lux_max: 1000.0,
        };
        assert!(bad.validate().is_err());
        assert!(IrModel::default().validate().is_ok());
    }

    #[test]
    fn env_noiseless_baseline() {
        let m = EnvModel::default().noiseless();
        let mut rng = stream(1, Stream::Env);
        assert_eq!(sample_env(&m, 10.0, &PendingBumps::new(), &mut rng), (29.5, 74.0));
    }

    #[test]
    fn env_entry_bump_is_immediate() {
        let m = EnvModel::default().noiseless();
        let mut rng = stream(1, Stream::Env);
        let mut b = PendingBumps::new();
        b.car_entered(&m, 100.0);
        let (t, h) = sample_env(&m, 100.0, &b, &mut rng);
        assert!((t - 29.9).abs() < 1e-12);
        assert!((h - 74.2).abs() < 1e-12);
    }

    #[test]
    fn env_bump_decays_by_e_after_tau() {
        let m = EnvModel::default().noiseless();
        let mut rng = stream(1, Stream::Env);
        let mut b = PendingBumps::new();
        b.car_entered(&m, 100.0);
        let (t, _) = sample_env(&m, 100.0 + m.relax_tau_s, &b, &mut rng);
        // 0.4 * e^-1
        assert!((t - 29.5 - 0.147_151_776_468_576_94).abs() < 1e-12);
    }

    #[test]
    fn env_entry_then_exit_cancels() {
        let m = EnvModel::default().noiseless();
        let mut b = PendingBumps::new();
        b.car_entered(&m, 0.0);
        b.car_left(&m, 0.0);
        let (t, h) = b.at(50.0, m.relax_tau_s);
        assert!(t.abs() < 1e-12 && h.abs() < 1e-12);
    }

    #[test]
    fn env_is_clamped() {
        let m = EnvModel {
            base_temp_c: 34.9,
            base_humidity_pct: 84.95,
            ..EnvModel::default().noiseless()
        };
        let mut b = PendingBumps::new();
        for i in 0..10 {
            b.car_entered(&m, i as f64);
        }
        let mut rng = stream(1, Stream::Env);
        assert_eq!(sample_env(&m, 10.0, &b, &mut rng), (35.0, 85.0));
    }

    #[test]
    fn mq2_weighted_sum() {
        let m = Mq2Model::default().noiseless();
        let mut rng = stream(1, Stream::Gas);
        let r = sample_mq2(&m, &gases(&[("butane", 10.0)]), &mut rng).unwrap();
        assert!((r - 9.2).abs() < 1e-12);
        assert_eq!(sample_mq2(&m, &BTreeMap::new(), &mut rng).unwrap(), 0.0);
        let r = sample_mq2(&m, &gases(&[("alcohol", 10.0), ("butane", 10.0)]), &mut rng).unwrap();
        assert!((r - 17.2).abs() < 1e-12);
    }

    #[test]
    fn mq2_unknown_gas_is_config_error() {
        let m = Mq2Model::default();
        let mut rng = stream(1, Stream::Gas);
        assert_eq!(
            sample_mq2(&m, &gases(&[("methane", 1.0)]), &mut rng),
            Err(SensorError::UnknownGas("methane".into()))
        );
    }

    #[test]
    fn mq2_noise_never_negative() {
        let m = Mq2Model {
            noise_sd: 5.0,
            ..Mq2Model::default()
        };
        let mut rng = stream(3, Stream::Gas);
        for _ in 0..1000 {
            assert!(sample_mq2(&m, &gases(&[("butane", 0.1)]), &mut rng).unwrap() >= 0.0);
        }
    }
}
