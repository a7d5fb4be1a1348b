//! Flat TOML run configuration; command-line flags override file values.
//!
//! ```toml
//! d = 2
//! initial = "phi+"            # or "c,r,s", or { c = 0, r = 0, s = 0 }
//! noise = ["white:0.374"]     # or a single string, or { variant = "white", parameter = 0.374 }
//! shots = 100000
//! seed = 7
//! b_schedule = "all"          # "random", or a list such as "x,y,z"
//! format = "json"
//! out = "trials.json"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub d: Option<u32>,
    pub initial: Option<InitialSpec>,
    pub noise: Option<NoiseSpec>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    #[serde(alias = "b_list")]
    pub b_schedule: Option<String>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
    pub verbose: Option<u8>,
    pub rounds: Option<usize>,
    pub shots_per_round: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Text(String),
    Label { c: u32, r: u32, s: u32 },
}

impl InitialSpec {
    pub fn to_text(&self) -> String {
        match self {
            InitialSpec::Text(t) => t.clone(),
            InitialSpec::Label { c, r, s } => format!("{c},{r},{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct NoiseEntry {
    pub variant: String,
    pub parameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum NoiseItem {
    Text(String),
    Entry(NoiseEntry),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    One(NoiseItem),
    Many(Vec<NoiseItem>),
}

impl NoiseSpec {
    pub fn to_texts(&self) -> Vec<String> {
        let item = |i: &NoiseItem| match i {
            NoiseItem::Text(t) => t.clone(),
            NoiseItem::Entry(NoiseEntry { variant, parameter: None }) => variant.clone(),
            NoiseItem::Entry(NoiseEntry {
                variant,
                parameter: Some(p),
            }) => format!("{variant}:{p}"),
        };
        match self {
            NoiseSpec::One(i) => vec![item(i)],
            NoiseSpec::Many(v) => v.iter().map(item).collect(),
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
