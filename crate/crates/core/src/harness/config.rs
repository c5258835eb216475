use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamic_agent::LocationMap;
use crate::harmoniser::DEFAULT_TERMINATE_DEADLINE;
use crate::intent::Grammar;
use crate::messaging::Tick;
use crate::requesters::RuleTable;
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub file: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.file, line, self.message),
            None => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

impl ConfigError {
    pub fn new(file: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        Self { file: file.into(), line, message: message.into() }
    }

    fn from_toml(file: &str, text: &str, e: toml::de::Error) -> Self {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Self::new(file, line, e.message().trim())
    }
}

pub fn read_file(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::new(path.display().to_string(), None, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mic {
    Internal,
    External,
}

impl Mic {
    pub const ALL: [Mic; 2] = [Mic::Internal, Mic::External];

    pub fn as_str(self) -> &'static str {
        match self {
            Mic::Internal => "internal",
            Mic::External => "external",
        }
    }
}

impl fmt::Display for Mic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "internal" => Ok(Mic::Internal),
            "external" => Ok(Mic::External),
            other => Err(format!("unknown microphone `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotChannels {
    pub internal: f64,
    pub external: f64,
}

impl SpotChannels {
    pub fn get(&self, mic: Mic) -> f64 {
        match mic {
            Mic::Internal => self.internal,
            Mic::External => self.external,
        }
    }
}

/// Probability that a keyword said at a spot reaches the recognizer, per
/// microphone. The shipped table is authored to follow the qualitative
/// shape of the home trial, not measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcousticModel {
    pub robot_spot: u32,
    pub spots: BTreeMap<u32, SpotChannels>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpotRow {
    id: u32,
    internal: f64,
    external: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AcousticFile {
    n_spots: Option<u32>,
    n_users: Option<u32>,
    n_reps: Option<u32>,
    robot_spot: u32,
    spot: Vec<SpotRow>,
}

fn parse_acoustic_file(file: &str, text: &str) -> Result<AcousticFile, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::from_toml(file, text, e))
}

impl AcousticModel {
    fn from_rows(file: &str, parsed: &AcousticFile) -> Result<Self, ConfigError> {
        let mut spots = BTreeMap::new();
        for row in &parsed.spot {
            for (mic, p) in [(Mic::Internal, row.internal), (Mic::External, row.external)] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ConfigError::new(
                        file,
                        None,
                        format!("spot {} {mic} probability {p} outside [0, 1]", row.id),
                    ));
                }
            }
            if spots.insert(row.id, SpotChannels { internal: row.internal, external: row.external }).is_some() {
                return Err(ConfigError::new(file, None, format!("spot {} listed twice", row.id)));
            }
        }
        if !spots.contains_key(&parsed.robot_spot) {
            return Err(ConfigError::new(file, None, format!("robot spot {} is not listed", parsed.robot_spot)));
        }
        Ok(Self { robot_spot: parsed.robot_spot, spots })
    }

    pub fn parse(file: &str, text: &str) -> Result<Self, ConfigError> {
        Self::from_rows(file, &parse_acoustic_file(file, text)?)
    }

    pub fn shipped() -> Self {
        Self::parse("keyword_spotting.toml", SHIPPED_ACOUSTIC).expect("shipped acoustic model is valid")
    }

    pub fn channel(&self, spot: u32, mic: Mic) -> Option<f64> {
        self.spots.get(&spot).map(|c| c.get(mic))
    }

    /// Spot with the lowest probability for `mic`; ties go to the lower id.
    pub fn worst_spot(&self, mic: Mic) -> u32 {
        let mut best: Option<(u32, f64)> = None;
        for (&id, c) in &self.spots {
            if best.is_none_or(|(_, p)| c.get(mic) < p) {
                best = Some((id, c.get(mic)));
            }
        }
        best.expect("model has at least the robot spot").0
    }
}

pub const SHIPPED_ACOUSTIC: &str = include_str!("../../data/keyword_spotting.toml");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub n_spots: u32,
    pub n_users: u32,
    pub n_reps: u32,
    pub seed: u64,
    pub model: AcousticModel,
}

impl ExperimentConfig {
    /// Missing counts default to the home trial protocol: 12 spots, 5 users,
    /// 10 repetitions.
    pub fn parse(file: &str, text: &str, seed: u64) -> Result<Self, ConfigError> {
        let parsed = parse_acoustic_file(file, text)?;
        let model = AcousticModel::from_rows(file, &parsed)?;
        let n_spots = parsed.n_spots.unwrap_or(12);
        for id in 1..=n_spots {
            if !model.spots.contains_key(&id) {
                return Err(ConfigError::new(file, None, format!("spot {id} is missing")));
            }
        }
        if model.spots.len() as u32 != n_spots {
            return Err(ConfigError::new(file, None, format!("expected spots 1..={n_spots} only")));
        }
        Ok(Self { n_spots, n_users: parsed.n_users.unwrap_or(5), n_reps: parsed.n_reps.unwrap_or(10), seed, model })
    }

    pub fn shipped(seed: u64) -> Self {
        Self::parse("keyword_spotting.toml", SHIPPED_ACOUSTIC, seed).expect("shipped experiment config is valid")
    }
}

/// Everything needed to assemble a [`super::System`].
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub grammar: Grammar,
    pub rules: RuleTable,
    pub store: Store,
    pub locations: LocationMap,
    pub acoustic: AcousticModel,
    pub mic: Mic,
    pub voice: String,
    pub terminate_deadline: Tick,
}

impl SystemConfig {
    pub fn shipped() -> Self {
        Self {
            grammar: Grammar::shipped(),
            rules: RuleTable::shipped(),
            store: Store::shipped(),
            locations: LocationMap::shipped(),
            acoustic: AcousticModel::shipped(),
            mic: Mic::External,
            voice: "default".to_owned(),
            terminate_deadline: DEFAULT_TERMINATE_DEADLINE,
        }
    }
}

/// Optional file overrides for [`SystemConfig::shipped`].
#[derive(Debug, Clone, Default)]
pub struct ConfigPaths<'a> {
    pub grammar: Option<&'a Path>,
    pub rules: Option<&'a Path>,
    pub store_dir: Option<&'a Path>,
    pub locations: Option<&'a Path>,
    pub acoustic: Option<&'a Path>,
}

impl ConfigPaths<'_> {
    pub fn load(&self) -> Result<SystemConfig, ConfigError> {
        let mut cfg = SystemConfig::shipped();
        if let Some(path) = self.grammar {
            let text = read_file(path)?;
            cfg.grammar = text.parse().map_err(|e: crate::intent::GrammarError| {
                ConfigError::new(path.display().to_string(), Some(e.line), e.message)
            })?;
        }
        if let Some(path) = self.rules {
            let text = read_file(path)?;
            cfg.rules = text.parse().map_err(|e: crate::requesters::RuleError| {
                ConfigError::new(path.display().to_string(), Some(e.line), e.message)
            })?;
        }
        if let Some(dir) = self.store_dir {
            cfg.store = Store::load_dir(dir).map_err(|e| match e {
                crate::store::StoreError::Load { path, message } => ConfigError::new(path, None, message),
                other => ConfigError::new(dir.display().to_string(), None, other.to_string()),
            })?;
        }
        if let Some(path) = self.locations {
            let text = read_file(path)?;
            cfg.locations =
                LocationMap::parse(&text).map_err(|m| ConfigError::new(path.display().to_string(), None, m))?;
        }
        if let Some(path) = self.acoustic {
            let text = read_file(path)?;
            cfg.acoustic = AcousticModel::parse(&path.display().to_string(), &text)?;
        }
        Ok(cfg)
    }
}
