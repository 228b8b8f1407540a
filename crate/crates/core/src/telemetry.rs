//! Communication metrics and the JSON-lines event log they are computed from.
//!
//! The aggregator is a pure function of the log: feeding the same records
//! in always produces the same CSV, byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("byte count must be non-negative, got {0}")]
    NegativeBytes(f64),
    #[error("interval ends before it starts ({start} > {end})")]
    NegativeInterval { start: f64, end: f64 },
    #[error("{corrected} corrected errors out of only {total}")]
    CorrectedExceedsTotal { corrected: u64, total: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    BytesTransferred,
    PublishDelay,
    ErrorCorrected,
    ErrorUncorrected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub kind: MetricKind,
    pub value: f64,
    pub t: f64,
}

/// Bytes per second.
pub fn data_rate(bytes_total: f64, duration_s: f64) -> Result<f64, MetricError> {
    if !(duration_s > 0.0) {
        return Err(MetricError::NonPositiveDuration(duration_s));
    }
    if !(bytes_total >= 0.0) {
        return Err(MetricError::NegativeBytes(bytes_total));
    }
    Ok(bytes_total / duration_s)
}

pub fn delay(t_start: f64, t_end: f64) -> Result<f64, MetricError> {
    if t_end < t_start {
        return Err(MetricError::NegativeInterval {
            start: t_start,
            end: t_end,
        });
    }
    Ok(t_end - t_start)
}

/// Share of errors that were recovered. With no errors at all the rate is
/// 1.0: nothing failed to be corrected.
pub fn error_correction_rate(corrected: u64, total_errors: u64) -> Result<f64, MetricError> {
    if corrected > total_errors {
        return Err(MetricError::CorrectedExceedsTotal {
            corrected,
            total: total_errors,
        });
    }
    if total_errors == 0 {
        return Ok(1.0);
    }
    Ok(corrected as f64 / total_errors as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CarArrives,
    CarRejected,
    CarParks,
    CarDeparts,
    GateOpen,
    GateClose,
    FanOn,
    FanOff,
    EnvSample,
    GasSample,
    GasInjection,
    /// A client put a PUBLISH on the network (retransmissions included).
    PublishSent,
    PublishAccepted,
    /// The broker put a PUBLISH on the network towards a subscriber.
    PublishForwarded,
    PublishDelivered,
    PacketDropped,
    ErrorCorrected,
    ErrorUncorrected,
    Anomaly,
    RunEnd,
}

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub kind: EventKind,
    pub topic: Option<String>,
    pub bytes: Option<u64>,
    pub client_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub car: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl EventRecord {
    pub fn new(t: f64, kind: EventKind) -> Self {
        EventRecord {
            t,
            kind,
            topic: None,
            bytes: None,
            client_id: None,
            car: None,
            slot: None,
            msg: None,
            value: None,
            value2: None,
            payload: None,
        }
    }

    pub fn topic(mut self, topic: impl Into<String>) -> Self {
        self.topic = Some(topic.into());
        self
    }

    pub fn bytes(mut self, bytes: usize) -> Self {
        self.bytes = Some(bytes as u64);
        self
    }

    pub fn client(mut self, client_id: impl Into<String>) -> Self {
        self.client_id = Some(client_id.into());
        self
    }

    pub fn car(mut self, car: u64) -> Self {
        self.car = Some(car);
        self
    }

    pub fn slot(mut self, slot: usize) -> Self {
        self.slot = Some(slot);
        self
    }

    pub fn msg(mut self, msg: u64) -> Self {
        self.msg = Some(msg);
        self
    }

    pub fn value(mut self, v: f64) -> Self {
        self.value = Some(v);
        self
    }

    pub fn value2(mut self, v: f64) -> Self {
        self.value2 = Some(v);
        self
    }

    pub fn payload(mut self, p: impl Into<String>) -> Self {
        self.payload = Some(p.into());
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event records always serialize")
    }
}

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct LogError {
    pub line: usize,
    pub message: String,
}

pub fn write_event_log(records: &[EventRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

/// Parse `events.jsonl` text. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_event_log(text: &str) -> Result<Vec<EventRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord = serde_json::from_str(line).map_err(|e| LogError {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !rec.t.is_finite() || rec.t < 0.0 {
            return Err(LogError {
                line: i + 1,
                message: format!("bad timestamp {}", rec.t),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub const METRICS_HEADER: &str = "metric,window_start_s,window_end_s,value";
pub const DEFAULT_WINDOW_S: f64 = 3600.0;

#[derive(Debug, Default, Clone)]
struct Window {
    bytes: u64,
    delays: Vec<f64>,
    corrected: u64,
    uncorrected: u64,
    occupied_time: f64,
}

/// Time-weighted occupancy contributions per window, from park/depart
/// records.
fn occupancy_by_window(records: &[EventRecord], window_s: f64, end: f64, windows: &mut [Window]) {
    let mut occupied = 0i64;
    let mut last = 0.0;
    let add = |from: f64, to: f64, level: i64, windows: &mut [Window]| {
        if level == 0 || to <= from {
            return;
        }
        let mut a = from;
        while a < to {
            let idx = ((a / window_s) as usize).min(windows.len() - 1);
            let b = to.min((idx + 1) as f64 * window_s);
            let b = if b <= a { to } else { b };
            windows[idx].occupied_time += (b - a) * level as f64;
            a = b;
        }
    };
    for r in records {
        let delta = match r.kind {
            EventKind::CarParks => 1,
            EventKind::CarDeparts => -1,
            _ => continue,
        };
        let t = r.t.min(end);
        add(last, t, occupied, windows);
        last = t;
        occupied += delta;
    }
    add(last, end, occupied, windows);
}

fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

/// Aggregate an event log into the metrics CSV. The run length is taken
/// from the `run_end` record, or the last timestamp if there is none.
pub fn aggregate(records: &[EventRecord], window_s: f64) -> Result<String, MetricError> {
    if !(window_s > 0.0) {
        return Err(MetricError::NonPositiveDuration(window_s));
    }
    let end = records
        .iter()
        .rev()
        .find(|r| r.kind == EventKind::RunEnd)
        .or_else(|| records.last())
        .map(|r| r.t)
        .unwrap_or(0.0);
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    if end <= 0.0 {
        return Ok(out);
    }
    let count = (end / window_s).ceil().max(1.0) as usize;
    let mut windows = vec![Window::default(); count];
    let index = |t: f64| ((t / window_s) as usize).min(count - 1);
    for r in records {
        let w = &mut windows[index(r.t)];
        match r.kind {
            EventKind::PublishSent | EventKind::PublishForwarded => w.bytes += r.bytes.unwrap_or(0),
            EventKind::PublishDelivered => {
                if let Some(d) = r.value {
                    w.delays.push(d);
                }
            }
            EventKind::ErrorCorrected => w.corrected += 1,
            EventKind::ErrorUncorrected => w.uncorrected += 1,
            _ => {}
        }
    }
    occupancy_by_window(records, window_s, end, &mut windows);

    let mut totals = Window::default();
    for (i, w) in windows.iter().enumerate() {
        let start = i as f64 * window_s;
        let stop = ((i + 1) as f64 * window_s).min(end);
        write_window(&mut out, w, start, stop)?;
        totals.bytes += w.bytes;
        totals.delays.extend_from_slice(&w.delays);
        totals.corrected += w.corrected;
        totals.uncorrected += w.uncorrected;
        totals.occupied_time += w.occupied_time;
    }
    if count > 1 {
        write_window(&mut out, &totals, 0.0, end)?;
    }
    Ok(out)
}

fn write_window(out: &mut String, w: &Window, start: f64, stop: f64) -> Result<(), MetricError> {
    let span = stop - start;
    let mut row = |metric: &str, value: f64| {
        let _ = writeln!(out, "{metric},{start:.3},{stop:.3},{}", fmt_value(value));
    };
    row("data_rate_bps", data_rate(w.bytes as f64, span)?);
    row("deliveries", w.delays.len() as f64);
    if !w.delays.is_empty() {
        let sum: f64 = w.delays.iter().sum();
        row("delay_mean_s", sum / w.delays.len() as f64);
        row("delay_min_s", w.delays.iter().copied().fold(f64::INFINITY, f64::min));
        row("delay_max_s", w.delays.iter().copied().fold(0.0, f64::max));
    }
    row("errors_corrected", w.corrected as f64);
    row("errors_uncorrected", w.uncorrected as f64);
    row(
        "ec_modeled",
        error_correction_rate(w.corrected, w.corrected + w.uncorrected)?,
    );
    row("occupancy_mean", w.occupied_time / span);
    Ok(())
}

/// Whole-run totals, used for report headers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Totals {
    pub counts: BTreeMap<EventKind, u64>,
    pub bytes: u64,
    pub delay_mean_s: Option<f64>,
    pub ec: f64,
}

pub fn totals(records: &[EventRecord]) -> Totals {
    let mut t = Totals::default();
    let mut delays = 0.0;
    let mut n = 0u64;
    for r in records {
        *t.counts.entry(r.kind).or_default() += 1;
        match r.kind {
            EventKind::PublishSent | EventKind::PublishForwarded => t.bytes += r.bytes.unwrap_or(0),
            EventKind::PublishDelivered => {
                if let Some(d) = r.value {
                    delays += d;
                    n += 1;
                }
            }
            _ => {}
        }
    }
    t.delay_mean_s = (n > 0).then(|| delays / n as f64);
    let c = t.count(EventKind::ErrorCorrected);
    let u = t.count(EventKind::ErrorUncorrected);
    t.ec = error_correction_rate(c, c + u).expect("c ≤ c + u");
    t
}

impl Totals {
    pub fn count(&self, kind: EventKind) -> u64 {
        self.counts.get(&kind).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_examples() {
        assert_eq!(data_rate(500.0, 2.0).unwrap(), 250.0);
        assert_eq!(data_rate(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(data_rate(26.0 * 1000.0, 10.0).unwrap(), 2600.0);
        assert!(data_rate(1.0, 0.0).is_err());
    }

    #[test]
    fn delay_examples() {
        assert!((delay(10.2, 10.5).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(delay(7.0, 7.0).unwrap(), 0.0);
        assert!(delay(2.0, 1.0).is_err());
    }

    #[test]
    fn ec_examples() {
        assert_eq!(error_correction_rate(3, 4).unwrap(), 0.75);
        assert_eq!(error_correction_rate(0, 0).unwrap(), 1.0);
        assert_eq!(error_correction_rate(5, 5).unwrap(), 1.0);
        assert!(error_correction_rate(5, 4).is_err());
    }

    #[test]
    fn json_line_shape() {
        let r = EventRecord::new(1.5, EventKind::PublishAccepted)
            .topic("parking/summary")
            .bytes(20)
            .client("controller");
        assert_eq!(
            r.to_json_line(),
            r#"{"t":1.5,"kind":"publish_accepted","topic":"parking/summary","bytes":20,"client_id":"controller"}"#
        );
        let bare = EventRecord::new(0.0, EventKind::RunEnd).to_json_line();
        assert_eq!(bare, r#"{"t":0.0,"kind":"run_end","topic":null,"bytes":null,"client_id":null}"#);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = format!(
            "{}\n\nnot json\n",
            EventRecord::new(0.0, EventKind::CarArrives).to_json_line()
        );
        let err = parse_event_log(&text).unwrap_err();
        assert_eq!(err.line, 3);
    }

    #[test]
    fn occupancy_window_mean() {
        let recs = vec![
            EventRecord::new(100.0, EventKind::CarParks).slot(0),
            EventRecord::new(400.0, EventKind::CarDeparts).slot(0),
            EventRecord::new(1000.0, EventKind::RunEnd),
        ];
        let csv = aggregate(&recs, 1000.0).unwrap();
        assert!(csv.contains("occupancy_mean,0.000,1000.000,0.300000"), "{csv}");
    }

    #[test]
    fn reaggregation_is_byte_identical() {
        let recs = vec![
            EventRecord::new(0.5, EventKind::PublishSent).bytes(26),
            EventRecord::new(0.55, EventKind::PublishDelivered).msg(0).value(0.05),
            EventRecord::new(4000.0, EventKind::ErrorCorrected),
            EventRecord::new(7200.0, EventKind::RunEnd),
        ];
        let a = aggregate(&recs, DEFAULT_WINDOW_S).unwrap();
        let reparsed = parse_event_log(&write_event_log(&recs)).unwrap();
        assert_eq!(a, aggregate(&reparsed, DEFAULT_WINDOW_S).unwrap());
        assert!(a.contains("delay_mean_s,0.000,3600.000,0.050000"));
    }
}
