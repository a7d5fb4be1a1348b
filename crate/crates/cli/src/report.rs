//! Row schemas and CSV/JSON emission.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use tkp_core::protocol::{Calibration, GameReport, NoiseModel, TrialStats};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Usage(format!("unknown format '{other}' (csv, json)"))),
        }
    }
}

/// Rounds to 12 significant digits; magnitudes below `1e-13` become 0.
pub fn round12(x: f64) -> f64 {
    if x.abs() < 1e-13 {
        return 0.0;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelJson {
    pub c: u32,
    pub r: u32,
    pub s: u32,
}

/// One JSON document: `schema_version`, `command`, then the body's fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub command: String,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub d: u32,
    pub initial_c: u32,
    pub initial_r: u32,
    pub initial_s: u32,
    pub b: String,
    pub outcome_c: u32,
    pub outcome_r: u32,
    /// Empty unless `d = 2`.
    pub coincidence_label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableJson {
    pub d: u32,
    pub initial: LabelJson,
    pub rows: Vec<TableRow>,
}

/// Long-format trials row; `section` is `metric`, `count`, `confusion` or `record`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialsRow {
    pub section: String,
    pub name: String,
    pub b: String,
    pub outcome_c: Option<u32>,
    pub outcome_r: Option<u32>,
    pub coincidence_label: String,
    pub decoded: String,
    pub count: Option<u64>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioJson {
    pub d: u32,
    pub initial: LabelJson,
    pub noise: Vec<NoiseModel>,
    pub shots: u64,
    pub seed: u64,
    pub b_schedule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialsJson {
    pub scenario: ScenarioJson,
    pub stats: TrialStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub d: u32,
    pub initial: String,
    pub family: String,
    pub target: f64,
    pub parameter: f64,
    pub achieved: f64,
}

impl CalibrationRow {
    pub fn rounded(&self) -> Self {
        Self {
            parameter: round12(self.parameter),
            achieved: round12(self.achieved),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationJson {
    #[serde(flatten)]
    pub row: CalibrationRow,
    pub calibration: Calibration,
}

/// `kind` is `point` (delay, coincidence) or `summary` (visibility).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomRow {
    pub kind: String,
    pub delay: Option<f64>,
    pub coincidence: Option<f64>,
    pub visibility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomJson {
    pub m0: f64,
    pub width: f64,
    pub delays: Vec<f64>,
    pub coincidences: Vec<f64>,
    pub visibility: f64,
}

/// `kind` is `cell` (input, output), `success` (input) or `average_fidelity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTableRow {
    pub mode_match: f64,
    pub kind: String,
    pub input: String,
    pub output: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTableJson {
    pub mode_match: f64,
    pub labels: Vec<String>,
    pub probabilities: Vec<Vec<f64>>,
    pub success: Vec<f64>,
    pub average_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellTableRow {
    pub mode_match: f64,
    pub bell: String,
    pub coincidence: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellTableJson {
    pub mode_match: f64,
    pub rows: Vec<BellTableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRow {
    pub round: usize,
    pub b_true: String,
    pub guess: String,
    pub confidence: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameJson {
    pub rounds_played: usize,
    pub hits: usize,
    pub hit_rate: f64,
    pub report: GameReport,
}

pub fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn json_bytes<T: Serialize>(command: &str, body: T) -> Result<Vec<u8>, CliError> {
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        body,
    };
    let mut out = serde_json::to_vec_pretty(&envelope).map_err(|e| CliError::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Parses CSV emitted by `csv_bytes`.
pub fn parse_csv<R: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<R>, csv::Error> {
    csv::Reader::from_reader(bytes).deserialize().collect()
}

/// Parses JSON emitted by `json_bytes`.
pub fn parse_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<Envelope<T>, serde_json::Error> {
    serde_json::from_slice(bytes)
}
