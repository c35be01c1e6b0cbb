//! Command-line surface: scenario files and the `simulate`, `synth`,
//! `sense` and `drain` commands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::attacker::AttackConfig;
use crate::csi::{read_trace, synthesize_trace, write_trace, BreathScenario};
use crate::energy::{drain_report, DrainReport, Library};
use crate::error::{Error, Result};
use crate::frames::{FrameKind, PhyTiming};
use crate::medium::ReplyRateTable;
use crate::sensing::{accuracy, sliding_estimate, AccuracySummary, BreathEstimate, PipelineConfig};
use crate::sim::{simulate, write_awake_timeline, write_events, write_ledgers, SimConfig, SimReport};
use crate::station::StationConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    /// PHY preset name, see [`PhyTiming::preset`].
    #[serde(default = "default_band")]
    pub band: String,
    /// Replaces the preset entirely.
    #[serde(default)]
    pub phy: Option<PhyTiming>,
    #[serde(default)]
    pub reply_rate: ReplyRateTable,
}

fn default_band() -> String {
    "2.4ghz".into()
}

impl Default for MediumSection {
    fn default() -> Self {
        MediumSection {
            band: default_band(),
            phy: None,
            reply_rate: ReplyRateTable::default(),
        }
    }
}

impl MediumSection {
    pub fn phy(&self) -> Result<PhyTiming> {
        match &self.phy {
            Some(p) => Ok(p.clone()),
            None => PhyTiming::preset(&self.band),
        }
    }
}

fn default_device() -> String {
    "esp32".into()
}

/// A scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub duration_s: f64,
    /// Device profile used for station energy reports.
    #[serde(default = "default_device")]
    pub device: String,
    #[serde(default)]
    pub medium: MediumSection,
    #[serde(default)]
    pub station: Vec<StationConfig>,
    #[serde(default)]
    pub attacker: Option<AttackConfig>,
    #[serde(default)]
    pub breath: Option<BreathScenario>,
    #[serde(default)]
    pub pipeline: Option<PipelineConfig>,
}

impl Scenario {
    /// Parses scenario text; `origin` names it in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Scenario {
            path: origin.into(),
            msg: e.to_string().trim_end().to_string(),
        })?;
        if sc.schema != SCHEMA_VERSION {
            return Err(Error::Scenario {
                path: origin.into(),
                msg: format!("unsupported schema {} (expected {SCHEMA_VERSION})", sc.schema),
            });
        }
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn sim_config(&self, library: &Library) -> Result<SimConfig> {
        let attacker = self
            .attacker
            .clone()
            .ok_or_else(|| Error::Config("scenario has no [attacker] section".into()))?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config(format!(
                "duration_s must be > 0, got {}",
                self.duration_s
            )));
        }
        Ok(SimConfig {
            phy: self.medium.phy()?,
            reply_rate: self.medium.reply_rate.clone(),
            stations: self.station.clone(),
            attacker,
            device: library.device(&self.device)?.clone(),
            duration_us: (self.duration_s * 1e6).round() as u64,
            seed: self.seed,
        })
    }

    pub fn breath_scenario(&self) -> Result<BreathScenario> {
        let mut b = self
            .breath
            .clone()
            .ok_or_else(|| Error::Config("scenario has no [breath] section".into()))?;
        b.seed = self.seed;
        Ok(b)
    }
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Scenario {
            path: path.display().to_string(),
            msg,
        },
        other => other,
    }
}

#[derive(Debug, Parser)]
#[command(name = "loophole", version, about = "802.11 ACK and power-save loophole simulator")]
pub struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario; writes events.csv, ledger.jsonl and awake.csv.
    Simulate { scenario: PathBuf },
    /// Generate a CSI trace from a scenario's [breath] section; writes trace.csv.
    Synth { scenario: PathBuf },
    /// Estimate breathing rate over a CSI trace, one JSON record per window.
    Sense {
        trace: PathBuf,
        /// Known rate, adds an accuracy summary.
        #[arg(long)]
        truth_bpm: Option<f64>,
        /// Scenario file whose [pipeline] section overrides the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Time to drain a battery under a saturating query flood.
    Drain {
        #[arg(long, default_value = "bar")]
        query: FrameKind,
        #[arg(long, default_value_t = 1.0)]
        bitrate: f64,
        #[arg(long, default_value = "table-implied")]
        device: String,
        #[arg(long)]
        battery: String,
        /// Share of the capacity to drain, in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        /// Voltage for batteries rated in mAh.
        #[arg(long)]
        pack_voltage: Option<f64>,
        /// Extra device and battery definitions.
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, default_value = "2.4ghz")]
        band: String,
    },
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub outputs: Vec<PathBuf>,
    #[serde(flatten)]
    pub report: SimReport,
}

#[derive(Debug, Serialize)]
pub struct SenseSummary {
    pub windows: usize,
    pub detected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<AccuracySummary>,
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn out_dir(cli_out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = cli_out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

pub fn cmd_simulate(path: &Path, seed: Option<u64>, out: &Option<PathBuf>) -> Result<SimulateSummary> {
    let mut sc = Scenario::load(path)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let cfg = sc.sim_config(&Library::builtin()).map_err(|e| in_file(path, e))?;
    let report = simulate(&cfg).map_err(|e| in_file(path, e))?;
    let dir = out_dir(out)?;
    let events = dir.join("events.csv");
    let ledger = dir.join("ledger.jsonl");
    let awake = dir.join("awake.csv");
    write_events(&report, create(&events)?)?;
    write_ledgers(&report, create(&ledger)?)?;
    write_awake_timeline(&report, create(&awake)?)?;
    Ok(SimulateSummary {
        outputs: vec![events, ledger, awake],
        report,
    })
}

pub fn cmd_synth(path: &Path, seed: Option<u64>, out: &Option<PathBuf>) -> Result<PathBuf> {
    let mut sc = Scenario::load(path)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let breath = sc.breath_scenario().map_err(|e| in_file(path, e))?;
    let trace = synthesize_trace(&breath).map_err(|e| in_file(path, e))?;
    let dir = out_dir(out)?;
    let file = dir.join("trace.csv");
    write_trace(&trace, create(&file)?)?;
    Ok(file)
}

pub fn cmd_sense(
    trace_path: &Path,
    truth_bpm: Option<f64>,
    config: Option<&Path>,
) -> Result<(Vec<BreathEstimate>, SenseSummary)> {
    let cfg = match config {
        Some(p) => Scenario::load(p)?.pipeline.unwrap_or_default(),
        None => PipelineConfig::default(),
    };
    let file = fs::File::open(trace_path).map_err(|e| Error::io(trace_path, e))?;
    let trace = read_trace(std::io::BufReader::new(file))?;
    let estimates = sliding_estimate(&trace, &cfg)?;
    let summary = SenseSummary {
        windows: estimates.len(),
        detected: estimates.iter().filter(|e| e.detected()).count(),
        accuracy: truth_bpm.map(|t| accuracy(&estimates, t)),
    };
    Ok((estimates, summary))
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_drain(
    query: FrameKind,
    bitrate: f64,
    device: &str,
    battery: &str,
    fraction: f64,
    pack_voltage: Option<f64>,
    library: Option<&Path>,
    band: &str,
) -> Result<DrainReport> {
    let mut lib = match library {
        Some(p) => Library::load(p)?,
        None => Library::builtin(),
    };
    if let Some(v) = pack_voltage {
        lib.set_pack_voltage(v)?;
    }
    let phy = PhyTiming::preset(band)?;
    let config = AttackConfig::new(query, bitrate);
    drain_report(&config, lib.device(device)?, lib.battery(battery)?, fraction, &phy)
}

fn json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n").map_err(|e| Error::io("<stdout>", e))
}

/// Runs a parsed command line, writing reports to `stdout`.
pub fn run<W: Write>(cli: &Cli, stdout: &mut W) -> Result<()> {
    match &cli.command {
        Command::Simulate { scenario } => {
            let summary = cmd_simulate(scenario, cli.seed, &cli.out)?;
            json_line(stdout, &summary)
        }
        Command::Synth { scenario } => {
            let file = cmd_synth(scenario, cli.seed, &cli.out)?;
            json_line(stdout, &serde_json::json!({ "trace": file }))
        }
        Command::Sense {
            trace,
            truth_bpm,
            config,
        } => {
            let (estimates, summary) = cmd_sense(trace, *truth_bpm, config.as_deref())?;
            match &cli.out {
                Some(_) => {
                    let dir = out_dir(&cli.out)?;
                    let path = dir.join("estimates.jsonl");
                    let mut f = create(&path)?;
                    for e in &estimates {
                        json_line(&mut f, e)?;
                    }
                    f.flush().map_err(|e| Error::io(&path, e))?;
                }
                None => {
                    for e in &estimates {
                        json_line(stdout, e)?;
                    }
                }
            }
            json_line(stdout, &serde_json::json!({ "summary": summary }))
        }
        Command::Drain {
            query,
            bitrate,
            device,
            battery,
            fraction,
            pack_voltage,
            library,
            band,
        } => {
            let report = cmd_drain(
                *query,
                *bitrate,
                device,
                battery,
                *fraction,
                *pack_voltage,
                library.as_deref(),
                band,
            )?;
            json_line(stdout, &report)
        }
    }
}

/// Human or JSON rendering of an error for stderr.
pub fn render_error(err: &Error, json: bool) -> String {
    if json {
        serde_json::json!({ "error": err.kind(), "message": err.to_string() }).to_string()
    } else {
        format!("error: {err}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = 1
duration_s = 1.0

[[station]]
name = "victim"
mac = "02:00:00:00:00:01"

[attacker]
target = "02:00:00:00:00:01"
beacon_period_us = 0
"#;

    #[test]
    fn minimal_scenario_parses() {
        let sc = Scenario::parse(MINIMAL, "mem").unwrap();
        let cfg = sc.sim_config(&Library::builtin()).unwrap();
        assert_eq!(cfg.duration_us, 1_000_000);
        assert_eq!(cfg.stations[0].distance_m, 5.0);
        assert_eq!(cfg.phy, PhyTiming::band_2_4ghz());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = MINIMAL.replace("beacon_period_us = 0", "beacon_period = 0");
        let err = Scenario::parse(&text, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("bad.toml") && err.contains("line"), "{err}");
        assert!(err.contains("beacon_period"), "{err}");
    }

    #[test]
    fn wrong_schema() {
        let text = MINIMAL.replace("schema = 1", "schema = 2");
        assert!(Scenario::parse(&text, "x")
            .unwrap_err()
            .to_string()
            .contains("schema 2"));
    }

    #[test]
    fn bad_mac_names_the_field() {
        let text = MINIMAL.replace("target = \"02:00:00:00:00:01\"", "target = \"02:00:00:00:00:09\"");
        let sc = Scenario::parse(&text, "x").unwrap();
        let cfg = sc.sim_config(&Library::builtin()).unwrap();
        let err = simulate(&cfg).unwrap_err().to_string();
        assert!(err.contains("attacker.target"), "{err}");
        let text = MINIMAL.replace("target = \"02:00:00:00:00:01\"", "target = \"nope\"");
        let err = Scenario::parse(&text, "x").unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");
    }

    #[test]
    fn drain_examples() {
        let aaa = cmd_drain(
            FrameKind::BlockAckRequest,
            1.0,
            "table-implied",
            "AAA",
            1.0,
            None,
            None,
            "2.4ghz",
        )
        .unwrap();
        assert!((aaa.minutes - 39.0).abs() / 39.0 < 0.05, "{}", aaa.minutes);
        let coin = cmd_drain(
            FrameKind::BlockAckRequest,
            1.0,
            "table-implied",
            "CR2032",
            0.25,
            None,
            None,
            "2.4ghz",
        )
        .unwrap();
        assert!((coin.minutes - 3.5).abs() <= 0.5, "{}", coin.minutes);
        let ring = cmd_drain(
            FrameKind::BlockAckRequest,
            1.0,
            "ring",
            "ring",
            1.0,
            None,
            None,
            "2.4ghz",
        )
        .unwrap();
        assert!((ring.hours - 36.0).abs() < 1e-9);
        let err = cmd_drain(
            FrameKind::BlockAckRequest,
            1.0,
            "esp32",
            "D-cell",
            1.0,
            None,
            None,
            "2.4ghz",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("AAA") && err.contains("CR2032"), "{err}");
    }

    #[test]
    fn json_errors() {
        let e = Error::Config("x".into());
        let j: serde_json::Value = serde_json::from_str(&render_error(&e, true)).unwrap();
        assert_eq!(j["error"], "config");
    }
}
