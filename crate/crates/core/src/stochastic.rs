//! Queueing arithmetic and the arrival process.
//!
//! `p_full` is the Poisson probability of exactly `n` cars, `littles_law`
//! gives the mean population `λ·T_avg`, and `vent_response` the time for the
//! fan to pull the gas level down by `ΔG` at `r` ppm/s. Arrivals are a
//! Poisson process whose rate is piecewise constant per hour of day.

use std::fmt;

use rand::Rng;
use thiserror::Error;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("ventilation cannot reduce concentration at rate {0} ppm/s")]
    NonPositiveReduction(f64),
    #[error("traffic profile: {0}")]
    BadProfile(String),
    #[error("t_avg is required when lambda is given per hour")]
    MissingDwell,
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, DomainError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(DomainError::Negative { name, value })
    }
}

fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// `λ^k e^-λ / k!`, evaluated in log space once `k > 20`.
pub fn poisson_pmf(lambda: f64, k: u64) -> Result<f64, DomainError> {
    let lambda = non_negative("lambda", lambda)?;
    if lambda == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if k <= 20 {
        let mut p = (-lambda).exp();
        for i in 1..=k {
            p *= lambda / i as f64;
        }
        Ok(p)
    } else {
        Ok((k as f64 * lambda.ln() - lambda - ln_factorial(k)).exp())
    }
}

/// Probability that exactly `n` cars are present.
pub fn p_full(lambda: f64, n: u64) -> Result<f64, DomainError> {
    poisson_pmf(lambda, n)
}

/// Mean number of cars in the lot: `λ·T_avg` (units must agree).
pub fn littles_law(lambda: f64, t_avg: f64) -> Result<f64, DomainError> {
    Ok(non_negative("lambda", lambda)? * non_negative("t_avg", t_avg)?)
}

/// Seconds for ventilation at `rate` ppm/s to remove `delta_g` ppm.
pub fn vent_response(delta_g: f64, rate: f64) -> Result<f64, DomainError> {
    let delta_g = non_negative("delta_g", delta_g)?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(DomainError::NonPositiveReduction(rate));
    }
    Ok(delta_g / rate)
}

/// Arrival rate by hour of day plus the mean dwell time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficProfile {
    /// Cars per hour, index 0 is 00:00-01:00.
    pub hourly_rates: [f64; 24],
    pub dwell_mean_s: f64,
}

/// Diurnal shape with the 100 cars/hour peak between 12:00 and 13:00.
pub const DEFAULT_HOURLY_RATES: [f64; 24] = [
    5.0, 3.0, 2.0, 2.0, 3.0, 8.0, 20.0, 45.0, 60.0, 55.0, 50.0, 70.0, 100.0, 85.0, 60.0, 55.0,
    65.0, 75.0, 60.0, 40.0, 30.0, 20.0, 12.0, 8.0,
];

impl Default for TrafficProfile {
    fn default() -> Self {
        TrafficProfile {
            hourly_rates: DEFAULT_HOURLY_RATES,
            dwell_mean_s: 1800.0,
        }
    }
}

impl TrafficProfile {
    pub fn constant(cars_per_hour: f64, dwell_mean_s: f64) -> Self {
        TrafficProfile {
            hourly_rates: [cars_per_hour; 24],
            dwell_mean_s,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if let Some(r) = self.hourly_rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(DomainError::BadProfile(format!("rate {r} is not a non-negative number")));
        }
        if !(self.dwell_mean_s > 0.0 && self.dwell_mean_s.is_finite()) {
            return Err(DomainError::BadProfile(format!(
                "dwell_mean_s must be positive, got {}",
                self.dwell_mean_s
            )));
        }
        Ok(())
    }

    /// Rate in cars per second at simulated time `t_s`.
    pub fn rate_at(&self, t_s: f64) -> f64 {
        let hour = (t_s / SECONDS_PER_HOUR).floor() as i64;
        self.hourly_rates[hour.rem_euclid(24) as usize] / SECONDS_PER_HOUR
    }

    pub fn peak_rate(&self) -> f64 {
        self.hourly_rates.iter().cloned().fold(0.0, f64::max)
    }
}

/// Exponential variate with the given mean via the inverse CDF.
pub fn exponential<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -mean * (1.0 - u).ln()
}

/// Time of the next arrival after `now_s`, or `None` if the profile never
/// produces arrivals.
///
/// A gap is drawn at the current hour's rate; if it would cross into the
/// next hour the clock moves to the boundary and a fresh gap is drawn at the
/// new rate. Memorylessness makes this exact for piecewise-constant rates.
pub fn next_arrival<R: Rng + ?Sized>(
    profile: &TrafficProfile,
    now_s: f64,
    rng: &mut R,
) -> Option<f64> {
    if profile.peak_rate() <= 0.0 {
        return None;
    }
    let mut t = now_s;
    loop {
        let boundary = ((t / SECONDS_PER_HOUR).floor() + 1.0) * SECONDS_PER_HOUR;
        let rate = profile.rate_at(t);
        if rate > 0.0 {
            let candidate = t + exponential(1.0 / rate, rng);
            if candidate < boundary {
                return Some(candidate);
            }
        }
        t = boundary;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaUnit {
    /// Cars per hour. Combined with `t_avg` (hours) to get the mean number of
    /// arrivals during one dwell period.
    PerHour,
    /// Expected arrivals during one dwell period.
    PerDwell,
}

impl fmt::Display for LambdaUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LambdaUnit::PerHour => "per-hour",
            LambdaUnit::PerDwell => "per-dwell",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueInputs {
    pub lambda: f64,
    pub slots: u64,
    pub unit: LambdaUnit,
    /// Mean dwell in hours.
    pub t_avg_h: Option<f64>,
    pub delta_g: Option<f64>,
    pub reduction_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueReport {
    pub lambda: f64,
    pub slots: u64,
    pub p_full: f64,
    pub expected_occupancy: f64,
    pub vent_response_s: Option<f64>,
}

impl QueueReport {
    pub const CSV_HEADER: &'static str = "lambda,n,p_full,L,t_response";

    pub fn csv_row(&self) -> String {
        let t = self.vent_response_s.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.lambda, self.slots, self.p_full, self.expected_occupancy, t
        )
    }
}

/// Evaluate the queueing formulas for one set of inputs.
///
/// Occupancy of a lot with Poisson arrivals is Poisson with mean
/// `λ·T_avg`, so a per-hour rate is first converted to arrivals per dwell
/// period before the pmf is taken.
pub fn analyze(inputs: &QueueInputs) -> Result<QueueReport, DomainError> {
    let lambda = non_negative("lambda", inputs.lambda)?;
    let per_dwell = match inputs.unit {
        LambdaUnit::PerDwell => lambda,
        LambdaUnit::PerHour => {
            let t_avg = inputs.t_avg_h.ok_or(DomainError::MissingDwell)?;
            littles_law(lambda, t_avg)?
        }
    };
    let vent_response_s = match (inputs.delta_g, inputs.reduction_rate) {
        (Some(dg), Some(r)) => Some(vent_response(dg, r)?),
        _ => None,
    };
    Ok(QueueReport {
        lambda,
        slots: inputs.slots,
        p_full: p_full(per_dwell, inputs.slots)?,
        expected_occupancy: per_dwell,
        vent_response_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    /// Direct evaluation with an explicit factorial, independent of the
    /// incremental product and log-space paths.
    fn pmf_oracle(lambda: f64, k: u64) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        lambda.powi(k as i32) * (-lambda).exp() / fact
    }

    #[test]
    fn pmf_trivial_cases() {
        assert_eq!(poisson_pmf(0.0, 0).unwrap(), 1.0);
        assert_eq!(poisson_pmf(0.0, 3).unwrap(), 0.0);
        assert_eq!(poisson_pmf(0.0, 30).unwrap(), 0.0);
        assert!(poisson_pmf(-1.0, 2).is_err());
    }

    #[test]
    fn pmf_frozen_high_precision_values() {
        // reference values from 40-digit evaluation
        assert!((poisson_pmf(4.0, 4).unwrap() - 0.195_366_814_813_164_59).abs() < 1e-15);
        assert!((poisson_pmf(30.0, 25).unwrap() - 0.051_115_337_428_941_322).abs() < 1e-13);
        assert!((poisson_pmf(100.0, 100).unwrap() - 0.039_860_996_809_147_135).abs() < 1e-12);
    }

    #[test]
    fn pmf_matches_direct_formula_on_both_paths() {
        for &lambda in &[0.5, 4.0, 12.0, 25.0] {
            for k in 0..=40u64 {
                let a = poisson_pmf(lambda, k).unwrap();
                let b = pmf_oracle(lambda, k);
                assert!((a - b).abs() <= 1e-12 * b.max(1e-300), "λ={lambda} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pmf_partial_sums_approach_one() {
        for &lambda in &[0.1_f64, 1.0, 4.0, 20.0, 100.0] {
            let kmax = (lambda + 10.0 * lambda.sqrt() + 20.0).ceil() as u64;
            let mut sum = 0.0;
            for k in 0..=kmax {
                sum += poisson_pmf(lambda, k).unwrap();
                assert!(sum <= 1.0 + 1e-12);
            }
            assert!((sum - 1.0).abs() < 1e-9, "λ={lambda}: {sum}");
        }
    }

    #[test]
    fn p_full_cases() {
        assert!((p_full(4.0, 4).unwrap() - 0.19537).abs() < 1e-5);
        assert!((p_full(2.5, 0).unwrap() - (-2.5f64).exp()).abs() < 1e-15);
        assert_eq!(p_full(0.0, 4).unwrap(), 0.0);
    }

    #[test]
    fn littles_law_cases() {
        assert_eq!(littles_law(10.0, 0.5).unwrap(), 5.0);
        assert_eq!(littles_law(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(littles_law(100.0, 0.25).unwrap(), 25.0);
        assert!(littles_law(-1.0, 1.0).is_err());
        assert!(littles_law(1.0, -1.0).is_err());
    }

    #[test]
    fn vent_response_cases() {
        assert_eq!(vent_response(10.0, 2.0).unwrap(), 5.0);
        assert_eq!(vent_response(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(vent_response(5.0, 0.0), Err(DomainError::NonPositiveReduction(0.0)));
        assert!(vent_response(5.0, -1.0).is_err());
    }

    #[test]
    fn constant_rate_mean_gap() {
        let profile = TrafficProfile::constant(60.0, 1800.0);
        let mut rng = stream(7, Stream::Arrivals);
        let draws = 100_000;
        let mut t = 0.0;
        for _ in 0..draws {
            t = next_arrival(&profile, t, &mut rng).unwrap();
        }
        let mean_gap = t / draws as f64;
        assert!((mean_gap - 60.0).abs() < 0.02 * 60.0, "mean gap {mean_gap}");
    }

    #[test]
    fn zero_profile_has_no_arrivals() {
        let profile = TrafficProfile::constant(0.0, 1800.0);
        let mut rng = stream(7, Stream::Arrivals);
        assert_eq!(next_arrival(&profile, 0.0, &mut rng), None);
    }

    #[test]
    fn arrivals_are_reproducible() {
        let profile = TrafficProfile::default();
        let run = || {
            let mut rng = stream(11, Stream::Arrivals);
            let mut t = 0.0;
            (0..50)
                .map(|_| {
                    t = next_arrival(&profile, t, &mut rng).unwrap();
                    t
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn arrivals_skip_silent_hours() {
        let mut rates = [0.0; 24];
        rates[3] = 50.0;
        let profile = TrafficProfile {
            hourly_rates: rates,
            dwell_mean_s: 600.0,
        };
        let mut rng = stream(5, Stream::Arrivals);
        let mut t = 0.0;
        for _ in 0..200 {
            t = next_arrival(&profile, t, &mut rng).unwrap();
            let hour = ((t / 3600.0).floor() as i64).rem_euclid(24);
            assert_eq!(hour, 3, "arrival at {t}");
        }
    }

    #[test]
    fn hourly_counts_follow_profile() {
        let mut rates = [10.0; 24];
        rates[12] = 100.0;
        let profile = TrafficProfile {
            hourly_rates: rates,
            dwell_mean_s: 600.0,
        };
        let mut rng = stream(9, Stream::Arrivals);
        let days = 200.0;
        let mut counts = [0u32; 24];
        let mut t = 0.0;
        loop {
            t = next_arrival(&profile, t, &mut rng).unwrap();
            if t >= days * 86400.0 {
                break;
            }
            counts[((t / 3600.0) as usize) % 24] += 1;
        }
        let peak = counts[12] as f64 / days;
        let other = counts[5] as f64 / days;
        assert!((peak - 100.0).abs() < 3.0, "peak {peak}");
        assert!((other - 10.0).abs() < 1.5, "off-peak {other}");
    }

    #[test]
    fn analyze_units() {
        let r = analyze(&QueueInputs {
            lambda: 4.0,
            slots: 4,
            unit: LambdaUnit::PerDwell,
            t_avg_h: None,
            delta_g: Some(10.0),
            reduction_rate: Some(2.0),
        })
        .unwrap();
        assert!((r.p_full - 0.19537).abs() < 1e-5);
        assert_eq!(r.expected_occupancy, 4.0);
        assert_eq!(r.vent_response_s, Some(5.0));

        let r = analyze(&QueueInputs {
            lambda: 8.0,
            slots: 4,
            unit: LambdaUnit::PerHour,
            t_avg_h: Some(0.5),
            delta_g: None,
            reduction_rate: None,
        })
        .unwrap();
        assert!((r.p_full - 0.19537).abs() < 1e-5);
        assert_eq!(r.expected_occupancy, 4.0);
        assert_eq!(r.csv_row(), format!("8,4,{},4,", r.p_full));

        let missing = QueueInputs {
            lambda: 8.0,
            slots: 4,
            unit: LambdaUnit::PerHour,
            t_avg_h: None,
            delta_g: None,
            reduction_rate: None,
        };
        assert_eq!(analyze(&missing), Err(DomainError::MissingDwell));
    }
}
