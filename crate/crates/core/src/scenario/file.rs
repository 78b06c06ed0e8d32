//! TOML scenario files.
//!
//! ```toml
//! [config]
//! name = "interval"
//! mode = "approx_async"
//! n = 4
//! f = 1
//! d = 1
//! epsilon = "1/100"
//! lower = "0"
//! upper = "12"
//! seed = 7
//!
//! [inputs]
//! points = [["0"], ["6"], ["12"], ["3"]]
//!
//! [[adversary]]
//! process = 3
//! strategy = "fixed_lie"
//! point = ["12"]
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::geom::rational::parse_rational;
use crate::geom::{Rational, RationalPoint};
use crate::model::{
    validate_config, validate_inputs, ConfigError, Mode, ProcessId, ScenarioConfig, StatePrecision, Step2Mode, Strategy,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    config: RawConfig,
    inputs: RawInputs,
    #[serde(default)]
    adversary: Vec<RawAdversary>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    mode: Mode,
    n: usize,
    f: usize,
    d: usize,
    epsilon: String,
    lower: String,
    upper: String,
    #[serde(default)]
    step2: Step2Mode,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    allow_unsafe: bool,
    #[serde(default)]
    element_wise: bool,
    default_point: Option<Vec<String>>,
    #[serde(default)]
    exact_states: bool,
    event_cap: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInputs {
    points: Vec<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdversary {
    process: ProcessId,
    strategy: String,
    round: Option<u64>,
    point: Option<Vec<String>>,
    points: Option<Vec<Vec<String>>>,
}

/// A parsed and validated scenario.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioFile {
    pub config: ScenarioConfig,
    /// One input per process, faulty ones included.
    pub inputs: Vec<RationalPoint>,
}

fn number(field: &str, text: &str) -> Result<Rational, ScenarioError> {
    parse_rational(text).ok_or_else(|| ScenarioError::Invalid(format!("{field}: '{text}' is not a rational")))
}

fn point(field: &str, coords: &[String]) -> Result<RationalPoint, ScenarioError> {
    RationalPoint::parse(coords).ok_or_else(|| ScenarioError::Invalid(format!("{field}: {coords:?} is not a point")))
}

fn strategy(raw: RawAdversary) -> Result<(ProcessId, Strategy), ScenarioError> {
    let field = format!("adversary {}", raw.process);
    let missing = |what: &str| ScenarioError::Invalid(format!("{field}: strategy '{}' needs '{what}'", raw.strategy));
    let s = match raw.strategy.as_str() {
        "crash" => Strategy::Crash {
            round: raw.round.ok_or_else(|| missing("round"))?,
        },
        "mute" => Strategy::Mute,
        "fixed_lie" => Strategy::FixedLie {
            point: point(&field, raw.point.as_deref().ok_or_else(|| missing("point"))?)?,
        },
        "equivocate" => {
            let raw_points = raw.points.as_deref().ok_or_else(|| missing("points"))?;
            let points = raw_points
                .iter()
                .map(|p| point(&field, p))
                .collect::<Result<Vec<_>, _>>()?;
            if points.is_empty() {
                return Err(missing("points"));
            }
            Strategy::Equivocate { points }
        }
        "starve" => Strategy::Starve,
        other => return Err(ScenarioError::Invalid(format!("{field}: unknown strategy '{other}'"))),
    };
    Ok((raw.process, s))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawFile = toml::from_str(text)?;
        let c = raw.config;
        let mut config = ScenarioConfig::new(c.mode, c.n, c.f, c.d);
        if let Some(name) = c.name {
            config.name = name;
        }
        config.epsilon = number("epsilon", &c.epsilon)?;
        config.lower = number("lower", &c.lower)?;
        config.upper = number("upper", &c.upper)?;
        config.step2 = c.step2;
        config.seed = c.seed;
        config.allow_unsafe = c.allow_unsafe;
        config.element_wise = c.element_wise;
        config.default_point = c
            .default_point
            .as_deref()
            .map(|p| point("default_point", p))
            .transpose()?;
        if c.exact_states {
            config.precision = StatePrecision::Exact;
        }
        if let Some(cap) = c.event_cap {
            config.event_cap = cap;
        }
        for adversary in raw.adversary {
            let (id, s) = strategy(adversary)?;
            if config.faulty.insert(id, s).is_some() {
                return Err(ScenarioError::Invalid(format!("adversary {id} listed twice")));
            }
        }
        let inputs = raw
            .inputs
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| point(&format!("input {i}"), p))
            .collect::<Result<Vec<_>, _>>()?;
        validate_config(&config)?;
        validate_inputs(&config, &inputs)?;
        Ok(Self { config, inputs })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}
