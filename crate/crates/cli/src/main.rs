use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spoofsim::harness::{
    compute_metrics, export_csv, parse_csv, run_scenario, run_suite_logs, HarnessError, RunLog,
    ScenarioConfig, SuiteConfig, SuiteRow,
};
use spoofsim::simcore::GeoRef;
use spoofsim::wirecodec::{self, read_capture, write_capture, GPS_INJECT_MSGID, HEARTBEAT_MSGID};

/// GPS/IMU spoofing workbench.
#[derive(Parser)]
#[command(name = "spoofsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its log, summary and frame capture.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a cross-strategy suite and print the comparison table.
    Suite {
        #[arg(long)]
        config: PathBuf,
        /// Also write one CSV per variant plus suite.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a frame capture and print one line per record.
    Replay {
        #[arg(long)]
        capture: PathBuf,
        #[arg(long, default_value_t = GeoRef::default().ref_latitude)]
        ref_lat: f64,
        #[arg(long, default_value_t = GeoRef::default().ref_longitude)]
        ref_lon: f64,
        #[arg(long, default_value_t = GeoRef::default().ref_altitude)]
        ref_alt: f64,
    },
    /// Recompute the run summary from a CSV log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        /// Trailing attack epochs used for correlations.
        #[arg(long)]
        horizon: Option<usize>,
    },
}

/// Failure category, reported through the exit code.
enum Failure {
    Config(String),
    Data(String),
    Simulation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 3,
            Self::Data(_) => 4,
            Self::Simulation(_) => 5,
        }
    }

    fn message(&self) -> (&'static str, &str) {
        match self {
            Self::Config(m) => ("config", m),
            Self::Data(m) => ("data", m),
            Self::Simulation(m) => ("simulation", m),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let m = e.to_string();
        match e.root() {
            HarnessError::Config(_) | HarnessError::Parse(_) => Self::Config(m),
            HarnessError::Io { .. } | HarnessError::Csv { .. } => Self::Data(m),
            _ => Self::Simulation(m),
        }
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("summary serializes")
}

fn write_run(log: &RunLog, dir: &Path, stem: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))?;
    export_csv(log, &dir.join(format!("{stem}.csv")))?;
    let summary = dir.join(format!("{stem}.summary.json"));
    std::fs::write(&summary, json(&log.summary) + "\n").map_err(|e| io_fail(&summary, e))?;
    if !log.frames.is_empty() {
        let cap = dir.join(format!("{stem}.capture.bin"));
        write_capture(&cap, &log.frames).map_err(|e| Failure::Data(e.to_string()))?;
    }
    Ok(())
}

fn stem(name: &str, fallback: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() {
        fallback.to_string()
    } else {
        cleaned
    }
}

fn fmt_rho(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".to_string(), |r| format!("{r:.6}"))
}

fn table(rows: &[SuiteRow]) -> String {
    let mut out = format!(
        "{:<20} {:<20} {:>14} {:>16} {:>12}\n",
        "name", "strategy", "max_tr", "norm_cusum", "rho"
    );
    for r in rows {
        let strategy = r.strategy.map_or("none", |s| s.name());
        let _ = writeln!(
            out,
            "{:<20} {:<20} {:>14.6e} {:>16.6} {:>12}",
            r.name,
            strategy,
            r.max_test_ratio,
            r.final_norm_cusum,
            fmt_rho(r.rho)
        );
    }
    out
}

fn replay(capture: &Path, geo: &GeoRef) -> Result<(), Failure> {
    let frames = read_capture(capture).map_err(|e| Failure::Data(e.to_string()))?;
    let mut bad = 0usize;
    let mut out = String::from("index,seq,msgid,t,n,e,d,vn,ve,vd\n");
    for (i, bytes) in frames.iter().enumerate() {
        match wirecodec::decode_frame(bytes) {
            Ok((frame, _)) if frame.msgid == GPS_INJECT_MSGID => {
                match wirecodec::decode(bytes, geo) {
                    Ok(d) => {
                        let (p, v) = (d.fix.position, d.fix.velocity);
                        let _ = writeln!(
                            out,
                            "{i},{},{},{:.6},{:.4},{:.4},{:.4},{:.2},{:.2},{:.2}",
                            d.seq, frame.msgid, d.fix.t, p.x, p.y, p.z, v.x, v.y, v.z
                        );
                    }
                    Err(e) => {
                        bad += 1;
                        eprintln!("record {i}: {e}");
                    }
                }
            }
            Ok((frame, _)) => {
                let kind = if frame.msgid == HEARTBEAT_MSGID {
                    "heartbeat"
                } else {
                    "other"
                };
                let _ = writeln!(out, "{i},{},{},{kind},,,,,,", frame.seq, frame.msgid);
            }
            Err(e) => {
                bad += 1;
                eprintln!("record {i}: {e}");
            }
        }
    }
    emit(&out);
    if bad > 0 {
        return Err(Failure::Data(format!(
            "{bad} of {} records failed to decode",
            frames.len()
        )));
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let dir = out.or_else(|| cfg.output.clone()).ok_or_else(|| {
                Failure::Config("no output directory: pass --out or set `output`".into())
            })?;
            let log = run_scenario(&cfg)?;
            write_run(&log, &dir, &stem(&cfg.name, "run"))?;
            emit(&(json(&log.summary) + "\n"));
        }
        Command::Suite { config, out } => {
            let suite = SuiteConfig::load(&config)?;
            let results = run_suite_logs(&suite.expand())?;
            let rows: Vec<SuiteRow> = results.iter().map(|(_, r)| r.clone()).collect();
            if let Some(dir) = out {
                for (i, (log, _)) in results.iter().enumerate() {
                    write_run(log, &dir, &stem(&log.name, &format!("variant{i}")))?;
                }
                let path = dir.join("suite.json");
                std::fs::write(&path, json(&rows) + "\n").map_err(|e| io_fail(&path, e))?;
            }
            emit(&table(&rows));
        }
        Command::Replay {
            capture,
            ref_lat,
            ref_lon,
            ref_alt,
        } => {
            let geo = GeoRef::new(ref_lat, ref_lon, ref_alt)
                .map_err(|e| Failure::Config(e.to_string()))?;
            replay(&capture, &geo)?;
        }
        Command::Metrics { log, horizon } => {
            let rows = parse_csv(&log)?;
            let summary = compute_metrics(&rows, horizon)?;
            emit(&(json(&summary) + "\n"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = f.message();
            eprintln!("error ({kind}): {msg}");
            ExitCode::from(f.code())
        }
    }
}
