//! Command-line front end: argument parsing and the subcommand runners used
//! by the `parksim` binary.

pub mod watch;

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::broker::tcp::{BrokerServer, TcpClient, TransportError};
use crate::broker::{BrokerConfig, ClientConfig};
use crate::mqtt::QoS;
use crate::sim::{run_scenario_with, ScenarioConfig};
use crate::stochastic::{analyze, LambdaUnit, QueueInputs, QueueReport};
use crate::telemetry;
use watch::WatchState;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NETWORK: i32 = 3;
pub const EXIT_PROTOCOL: i32 = 4;

fn parse_unit(s: &str) -> Result<LambdaUnit, String> {
    match s {
        "per-hour" => Ok(LambdaUnit::PerHour),
        "per-dwell" => Ok(LambdaUnit::PerDwell),
        other => Err(format!("expected per-hour or per-dwell, got {other:?}")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "parksim", version, about = "Smart-parking controller, simulator and MQTT broker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Run the MQTT broker on a TCP port.
    Broker {
        #[arg(long, default_value = "0.0.0.0:1883")]
        bind: String,
    },
    /// Run a scenario and write events.jsonl, metrics.csv and report.txt.
    Simulate {
        /// Scenario file; built-in defaults when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Also mirror every controller publish to this live broker.
        #[arg(long)]
        broker: Option<String>,
        /// With --broker, pace the run at this many simulated seconds per
        /// wall-clock second instead of as fast as possible.
        #[arg(long)]
        speed: Option<f64>,
    },
    /// Show live slot state from a broker.
    Watch {
        #[arg(long, default_value = "127.0.0.1:1883")]
        broker: String,
        #[arg(long, default_value = "parking/#")]
        filter: String,
        /// Draw this many slots even before any of them has reported.
        #[arg(long)]
        slots: Option<usize>,
        #[arg(long)]
        no_color: bool,
        /// Connection attempts before giving up.
        #[arg(long, default_value_t = 3)]
        retries: u32,
        /// Print the view once after this many seconds and exit.
        #[arg(long)]
        exit_after: Option<f64>,
    },
    /// Queueing and ventilation figures as CSV.
    Analyze {
        /// One or more arrival rates, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        lambda: Vec<f64>,
        /// One or more slot counts, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        slots: Vec<u64>,
        /// Mean dwell time in hours (needed with --lambda-unit per-hour).
        #[arg(long)]
        t_avg: Option<f64>,
        /// Gas excess to remove, ppm.
        #[arg(long)]
        delta_g: Option<f64>,
        /// Ventilation reduction rate, ppm per second.
        #[arg(long)]
        r: Option<f64>,
        #[arg(long, value_parser = parse_unit)]
        lambda_unit: LambdaUnit,
    },
    /// Re-aggregate an event log into metrics CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long = "out")]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = telemetry::DEFAULT_WINDOW_S)]
        window_s: f64,
    },
}

/// Parse arguments (without the program name). `--help` and `--version`
/// come back as errors of the matching kind; [`usage_exit_code`] maps them.
pub fn parse_args<I, S>(argv: I) -> Result<Command, clap::Error>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = std::iter::once(std::ffi::OsString::from("parksim"))
        .chain(argv.into_iter().map(Into::into));
    Cli::try_parse_from(args).map(|c| c.command)
}

pub fn usage_exit_code(err: &clap::Error) -> i32 {
    use clap::error::ErrorKind;
    match err.kind() {
        ErrorKind::DisplayHelp
        | ErrorKind::DisplayVersion
        | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_OK,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Network(String),
    #[error("{0}")]
    Protocol(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Network(_) => EXIT_NETWORK,
            CliError::Protocol(_) => EXIT_PROTOCOL,
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        if e.is_protocol() {
            CliError::Protocol(e.to_string())
        } else {
            CliError::Network(e.to_string())
        }
    }
}

pub fn run(cmd: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Broker { bind } => run_broker(&bind),
        Command::Simulate {
            scenario,
            seed,
            out_dir,
            broker,
            speed,
        } => run_simulate(scenario.as_deref(), seed, &out_dir, broker.as_deref(), speed, out),
        Command::Watch {
            broker,
            filter,
            slots,
            no_color,
            retries,
            exit_after,
        } => {
            let color = !no_color && std::io::stdout().is_terminal() && std::env::var_os("NO_COLOR").is_none();
            run_watch(&broker, &filter, slots, color, retries, exit_after, out)
        }
        Command::Analyze {
            lambda,
            slots,
            t_avg,
            delta_g,
            r,
            lambda_unit,
        } => {
            let rows = analyze_grid(&lambda, &slots, t_avg, delta_g, r, lambda_unit)?;
            let _ = writeln!(out, "{}", QueueReport::CSV_HEADER);
            for row in rows {
                let _ = writeln!(out, "{}", row.csv_row());
            }
            Ok(())
        }
        Command::Report {
            input,
            output,
            window_s,
        } => {
            let csv = report_csv(&input, window_s)?;
            match output {
                Some(path) => std::fs::write(&path, csv)
                    .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
                None => {
                    let _ = out.write_all(csv.as_bytes());
                    Ok(())
                }
            }
        }
    }
}

pub fn analyze_grid(
    lambdas: &[f64],
    slots: &[u64],
    t_avg_h: Option<f64>,
    delta_g: Option<f64>,
    reduction_rate: Option<f64>,
    unit: LambdaUnit,
) -> Result<Vec<QueueReport>, CliError> {
    let mut rows = Vec::new();
    for &lambda in lambdas {
        for &n in slots {
            let inputs = QueueInputs {
                lambda,
                slots: n,
                unit,
                t_avg_h,
                delta_g,
                reduction_rate,
            };
            rows.push(analyze(&inputs).map_err(|e| CliError::Config(e.to_string()))?);
        }
    }
    Ok(rows)
}

pub fn report_csv(input: &Path, window_s: f64) -> Result<String, CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", input.display())))?;
    let records = telemetry::parse_event_log(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    telemetry::aggregate(&records, window_s).map_err(|e| CliError::Config(e.to_string()))
}

fn run_broker(bind: &str) -> Result<(), CliError> {
    let server = BrokerServer::bind(bind, BrokerConfig::default())
        .map_err(|e| CliError::Network(format!("cannot bind {bind}: {e}")))?;
    let addr = server
        .local_addr()
        .map_err(|e| CliError::Network(e.to_string()))?;
    log::info!("broker listening on {addr}");
    eprintln!("broker listening on {addr}");
    server.run().map_err(|e| CliError::Network(e.to_string()))
}

fn run_simulate(
    scenario: Option<&Path>,
    seed: Option<u64>,
    out_dir: &Path,
    broker: Option<&str>,
    speed: Option<f64>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut cfg = match scenario {
        Some(path) => ScenarioConfig::from_file(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(s) = speed {
        if !(s > 0.0) {
            return Err(CliError::Config(format!("--speed must be positive, got {s}")));
        }
    }

    let mut mirror = match broker {
        Some(addr) => Some(TcpClient::connect(
            addr,
            ClientConfig::new(format!("parksim-sim-{}", cfg.seed)),
            Duration::from_secs(5),
        )?),
        None => None,
    };
    let started = Instant::now();
    let mut failure: Option<TransportError> = None;
    let mut observer = |t: f64, topic: &str, payload: &[u8], retain: bool| {
        let Some(client) = mirror.as_mut() else { return };
        if failure.is_some() {
            return;
        }
        if let Some(speed) = speed {
            let due = Duration::from_secs_f64(t / speed);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                thread::sleep(wait);
            }
        }
        if let Err(e) = client.publish(topic, payload.to_vec(), QoS::AtMostOnce, retain) {
            failure = Some(e);
        }
    };
    let report = run_scenario_with(&cfg, &mut observer).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    if let Some(client) = mirror {
        client.disconnect()?;
    }
    report
        .write_outputs(out_dir)
        .map_err(|e| CliError::Config(format!("cannot write to {}: {e}", out_dir.display())))?;
    let _ = write!(out, "{}", report.summary());
    let _ = writeln!(out, "outputs written to {}", out_dir.display());
    Ok(())
}

enum WatchMsg {
    Message(String, Vec<u8>),
    Failed(TransportError),
}

fn connect_with_retries(addr: &str, retries: u32) -> Result<TcpClient, TransportError> {
    let id = format!("parksim-watch-{}", std::process::id());
    let mut attempt = 0;
    loop {
        match TcpClient::connect(addr, ClientConfig::new(id.clone()), Duration::from_secs(3)) {
            Ok(c) => return Ok(c),
            Err(e) if e.is_protocol() || attempt >= retries => return Err(e),
            Err(e) => {
                attempt += 1;
                log::warn!("connect to {addr} failed ({e}), retry {attempt}/{retries}");
                thread::sleep(Duration::from_millis(500 * attempt as u64));
            }
        }
    }
}

/// Network reader on its own thread, rendering on this one, joined by an
/// ordered channel.
fn run_watch(
    addr: &str,
    filter: &str,
    slots: Option<usize>,
    color: bool,
    retries: u32,
    exit_after: Option<f64>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    crate::mqtt::validate_topic_filter(filter).map_err(|e| CliError::Config(e.to_string()))?;
    let mut client = connect_with_retries(addr, retries)?;
    client.subscribe(filter, QoS::AtLeastOnce, Duration::from_secs(5))?;

    let (tx, rx) = mpsc::channel();
    thread::spawn(move || loop {
        let msg = match client.poll(Duration::from_millis(200)) {
            Ok(Some(p)) => WatchMsg::Message(p.topic, p.payload),
            Ok(None) => continue,
            Err(e) => WatchMsg::Failed(e),
        };
        let failed = matches!(msg, WatchMsg::Failed(_));
        if tx.send(msg).is_err() || failed {
            return;
        }
    });

    let mut state = match slots {
        Some(n) => WatchState::with_slots(n),
        None => WatchState::default(),
    };
    let deadline = exit_after.map(|s| Instant::now() + Duration::from_secs_f64(s.max(0.0)));
    let live = deadline.is_none();
    if live {
        draw(&state, color, out);
    }
    loop {
        let wait = match deadline {
            Some(d) => match d.checked_duration_since(Instant::now()) {
                Some(w) => w,
                None => break,
            },
            None => Duration::from_secs(3600),
        };
        match rx.recv_timeout(wait) {
            Ok(WatchMsg::Message(topic, payload)) => {
                if state.apply(&topic, &payload) && live {
                    draw(&state, color, out);
                }
            }
            Ok(WatchMsg::Failed(e)) => return Err(e.into()),
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => break,
        }
    }
    for line in state.render(color) {
        let _ = writeln!(out, "{line}");
    }
    Ok(())
}

fn draw(state: &WatchState, color: bool, out: &mut dyn Write) {
    if color {
        let _ = write!(out, "\x1b[H\x1b[2J");
    }
    for line in state.render(color) {
        let _ = writeln!(out, "{line}");
    }
    if !color {
        let _ = writeln!(out);
    }
    let _ = out.flush();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analyze_example() {
        let cmd = parse_args(["analyze", "--lambda", "4", "--slots", "4", "--lambda-unit", "per-dwell"])
            .unwrap();
        assert_eq!(
            cmd,
            Command::Analyze {
                lambda: vec![4.0],
                slots: vec![4],
                t_avg: None,
                delta_g: None,
                r: None,
                lambda_unit: LambdaUnit::PerDwell,
            }
        );
    }

    #[test]
    fn simulate_example() {
        let cmd = parse_args(["simulate", "--scenario", "day.cfg", "--seed", "7"]).unwrap();
        let Command::Simulate { scenario, seed, .. } = cmd else { panic!("{cmd:?}") };
        assert_eq!(scenario, Some(PathBuf::from("day.cfg")));
        assert_eq!(seed, Some(7));
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let err = parse_args(["frobnicate"]).unwrap_err();
        assert_eq!(usage_exit_code(&err), EXIT_USAGE);
        let err = parse_args(["analyze", "--lambda", "4", "--slots", "4"]).unwrap_err();
        assert_eq!(usage_exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let err = parse_args(["--help"]).unwrap_err();
        assert_eq!(usage_exit_code(&err), EXIT_OK);
        let err = parse_args(["watch", "--help"]).unwrap_err();
        assert_eq!(usage_exit_code(&err), EXIT_OK);
    }

    #[test]
    fn lists_expand_to_grid() {
        let rows = analyze_grid(&[4.0, 10.0], &[4, 8], None, Some(10.4), Some(2.0), LambdaUnit::PerDwell)
            .unwrap();
        assert_eq!(rows.len(), 4);
        assert!((rows[0].vent_response_s.unwrap() - 5.2).abs() < 1e-12);
        assert!(matches!(
            analyze_grid(&[4.0], &[4], None, None, None, LambdaUnit::PerHour),
            Err(CliError::Config(_))
        ));
    }
}
