//! Scenario documents (TOML) and the shipped presets.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sensoralloc::{Scenario, SourceSpec, WindModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub x: f64,
    pub y: f64,
    pub height: f64,
}

/// One mean shared by every source, or one per source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorMean {
    Shared(f64),
    PerSource(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub mean: PriorMean,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticSection {
    pub l1: f64,
    pub l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSection {
    pub speed: [f64; 2],
    pub direction_deg: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub diffusivity: f64,
    pub noise_sigma: f64,
    pub kernel_wind_speed_factor: bool,
    pub prior: PriorSection,
    pub elastic: ElasticSection,
    pub domain: BoxSection,
    /// Sensors are confined here; defaults to the domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_box: Option<BoxSection>,
    pub wind: WindSection,
    pub sources: Vec<SourceEntry>,
}

#[derive(Debug)]
pub enum ScenarioError {
    Io(String),
    Syntax(String),
    Constraint(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(m) => write!(f, "cannot read scenario: {m}"),
            Self::Syntax(m) => write!(f, "malformed scenario: {m}"),
            Self::Constraint(m) => write!(f, "invalid scenario: {m}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

pub const PRESETS: &[(&str, &str)] = &[
    ("example1", include_str!("../scenarios/example1.scenario")),
    ("example2", include_str!("../scenarios/example2.scenario")),
    ("validation20", include_str!("../scenarios/validation20.scenario")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".scenario").unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))
    }

    /// Reads a file, falling back to a preset name when no such file exists.
    pub fn load(path: &Path) -> Result<(Self, String), ScenarioError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => match preset(&path.to_string_lossy()) {
                Some(t) => t.to_string(),
                None => return Err(ScenarioError::Io(format!("{}: {e}", path.display()))),
            },
        };
        Ok((Self::parse(&text)?, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn to_domain(&self) -> Result<(Scenario, WindModel), ScenarioError> {
        let bad = |e: sensoralloc::Error| ScenarioError::Constraint(e.to_string());
        let np = self.sources.len();
        let prior_mean = match &self.prior.mean {
            PriorMean::Shared(m) => vec![*m; np],
            PriorMean::PerSource(v) => {
                if v.len() != np {
                    return Err(ScenarioError::Constraint(format!("prior.mean has {} entries for {np} sources", v.len())));
                }
                v.clone()
            }
        };
        let sources = self
            .sources
            .iter()
            .enumerate()
            .map(|(j, s)| SourceSpec::new([s.x, s.y], s.height).map_err(|e| ScenarioError::Constraint(format!("sources[{j}]: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let sensor_box = self.sensor_box.as_ref().unwrap_or(&self.domain);
        let scenario = Scenario {
            sources,
            diffusivity: self.diffusivity,
            noise_sigma: self.noise_sigma,
            domain_lo: self.domain.lo,
            domain_hi: self.domain.hi,
            sensor_lo: sensor_box.lo,
            sensor_hi: sensor_box.hi,
            prior_mean,
            prior_sigma: self.prior.sigma,
            elastic_l2: self.elastic.l2,
            elastic_l1: self.elastic.l1,
            wind_speed_factor: self.kernel_wind_speed_factor,
        };
        scenario.validate().map_err(bad)?;
        let wind = WindModel::new(
            (self.wind.speed[0], self.wind.speed[1]),
            (self.wind.direction_deg[0].to_radians(), self.wind.direction_deg[1].to_radians()),
        )
        .map_err(bad)?;
        Ok((scenario, wind))
    }
}

/// Parses and validates a scenario document in one step.
pub fn parse_scenario(text: &str) -> Result<(Scenario, WindModel), ScenarioError> {
    ScenarioFile::parse(text)?.to_domain()
}
