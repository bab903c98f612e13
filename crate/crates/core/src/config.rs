//! Experiment manifests.
//!
//! A manifest is a TOML document:
//!
//! ```toml
//! [system]
//! channels = 2
//! slots = 100000
//! seed = 1
//! policy = "mgf"
//!
//! [[classes]]
//! name = "fast"
//! members = 10
//! success_prob = 0.95
//! loss = "safety_example"
//! safety = { bands = [6, 13] }
//! source = { type = "row_chain", rows = 20, up = 0.3, down = 0.3 }
//! ```
//!
//! Syntax errors carry `path:line:col`; semantic errors name the offending
//! key and the line of its table.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::bandit::SolverSettings;
use crate::error::{Error, Result};
use crate::loss::LossMatrix;
use crate::markov::{build_row_chain, AgentClassSpec, GridMotion, MarkovSource, SafetyMap};
use crate::scheduler::PolicyKind;
use crate::sim::SimConfig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    system: Spanned<RawSystem>,
    #[serde(default)]
    solver: Option<SolverSettings>,
    classes: Spanned<Vec<Spanned<RawClass>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    channels: usize,
    slots: usize,
    warmup: Option<usize>,
    #[serde(default)]
    seed: u64,
    policy: Option<Spanned<String>>,
    delta_bound: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClass {
    name: String,
    members: usize,
    success_prob: f64,
    loss: RawLoss,
    safety: RawSafety,
    source: RawSource,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawLoss {
    Named(String),
    Quadratic { name: String, values: Vec<f64> },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawSafety {
    Named(String),
    Bands { bands: Vec<usize> },
    Explicit { labels: usize, assignment: Vec<usize> },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawSource {
    RowChain {
        rows: usize,
        up: f64,
        down: f64,
    },
    Grid {
        rows: usize,
        cols: usize,
        up: f64,
        down: f64,
        left: f64,
        right: f64,
    },
    Matrix {
        rows: Vec<Vec<f64>>,
    },
}

/// A loaded, validated experiment.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: SimConfig,
    pub solver: SolverSettings,
    /// Where the manifest came from, for messages.
    pub origin: String,
    /// Lowercase hex SHA-256 of the manifest bytes.
    pub digest: String,
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_config(path: &Path) -> Result<RunManifest> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        location: path.display().to_string(),
        message: format!("not UTF-8: {e}"),
    })?;
    parse_config(&text, &path.display().to_string())
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

fn column_of(text: &str, offset: usize) -> usize {
    let offset = offset.min(text.len());
    offset - text[..offset].rfind('\n').map_or(0, |i| i + 1) + 1
}

pub fn parse_config(text: &str, origin: &str) -> Result<RunManifest> {
    let raw: RawManifest = toml::from_str(text).map_err(|e| {
        let location = match e.span() {
            Some(span) => format!("{origin}:{}:{}", line_of(text, span.clone()), column_of(text, span.start)),
            None => origin.to_string(),
        };
        Error::Parse {
            location,
            message: e.message().trim().to_string(),
        }
    })?;

    let at = |span: Range<usize>, key: &str| format!("{origin}:{}: {key}", line_of(text, span));
    let config_err = |span: Range<usize>, key: &str, message: String| Error::Config {
        location: at(span, key),
        message,
    };

    let mut solver = raw.solver.unwrap_or_default();
    let system_span = raw.system.span();
    let system = raw.system.into_inner();
    if let Some(d) = system.delta_bound {
        solver.delta_bound = d;
    }
    solver
        .validate()
        .map_err(|e| config_err(0..0, "solver", e.to_string()))?;

    let policy = match &system.policy {
        None => {
            return Err(config_err(
                system_span,
                "system.policy",
                format!("missing policy key, expected one of {}", PolicyKind::valid_keys()),
            ))
        }
        Some(p) => p
            .get_ref()
            .parse::<PolicyKind>()
            .map_err(|e| config_err(p.span(), "system.policy", e.to_string()))?,
    };

    let classes_span = raw.classes.span();
    let raw_classes = raw.classes.into_inner();
    if raw_classes.is_empty() {
        return Err(config_err(classes_span, "classes", "at least one class is required".into()));
    }
    let mut classes = Vec::with_capacity(raw_classes.len());
    for (k, spanned) in raw_classes.into_iter().enumerate() {
        let span = spanned.span();
        let class = spanned.into_inner();
        let key = |field: &str| format!("classes[{k}].{field}");
        let (source, cols) = build_source(&class.source)
            .map_err(|e| config_err(span.clone(), &key("source"), e.to_string()))?;
        let source = source
            .with_name(class.name.clone())
            .with_delta_bound(solver.delta_bound)
            .map_err(|e| config_err(span.clone(), &key("source"), e.to_string()))?;
        let safety = build_safety(&class.safety, source.state_count(), cols)
            .map_err(|e| config_err(span.clone(), &key("safety"), e.to_string()))?;
        let loss = build_loss(&class.loss, safety.label_count()).map_err(|e| config_err(span.clone(), &key("loss"), e.to_string()))?;
        let spec = AgentClassSpec::new(class.name, source, safety, loss, class.success_prob, class.members)
            .map_err(|e| config_err(span.clone(), &format!("classes[{k}]"), e.to_string()))?;
        classes.push(spec);
    }

    let warmup = system.warmup.unwrap_or(system.slots / 10);
    let config = SimConfig {
        classes,
        channels: system.channels,
        slots: system.slots,
        warmup,
        seed: system.seed,
        policy,
        delta_bound: solver.delta_bound,
        scale: 1,
    };
    config
        .validate()
        .map_err(|e| config_err(system_span, "system", e.to_string()))?;

    Ok(RunManifest {
        config,
        solver,
        origin: origin.to_string(),
        digest: digest_hex(text.as_bytes()),
    })
}

/// Returns the source and the grid width used for row bands.
fn build_source(raw: &RawSource) -> Result<(MarkovSource, usize)> {
    match raw {
        RawSource::RowChain { rows, up, down } => Ok((build_row_chain(*rows, *up, *down)?, 1)),
        RawSource::Grid {
            rows,
            cols,
            up,
            down,
            left,
            right,
        } => {
            let motion = GridMotion {
                up: *up,
                down: *down,
                left: *left,
                right: *right,
            };
            Ok((motion.grid_chain(*rows, *cols)?, *cols))
        }
        RawSource::Matrix { rows } => Ok((MarkovSource::new(rows.clone())?, 1)),
    }
}

fn build_safety(raw: &RawSafety, states: usize, cols: usize) -> Result<SafetyMap> {
    match raw {
        RawSafety::Named(name) => match name.as_str() {
            "identity" => Ok(SafetyMap::identity(states)),
            "constant" => Ok(SafetyMap::constant(states)),
            other => Err(Error::validation(format!(
                "unknown safety map '{other}', expected \"identity\", \"constant\", {{ bands = [...] }} or {{ labels, assignment }}"
            ))),
        },
        RawSafety::Bands { bands } => SafetyMap::row_bands(states / cols, cols, bands),
        RawSafety::Explicit { labels, assignment } => {
            if assignment.len() != states {
                return Err(Error::Shape {
                    expected: states,
                    found: assignment.len(),
                });
            }
            SafetyMap::new(*labels, assignment.clone())
        }
    }
}

fn build_loss(raw: &RawLoss, labels: usize) -> Result<LossMatrix> {
    match raw {
        RawLoss::Named(name) => match name.as_str() {
            "safety_example" => Ok(LossMatrix::safety_example()),
            "zero_one" => Ok(LossMatrix::zero_one(labels)),
            other => Err(Error::validation(format!(
                "unknown loss '{other}', expected \"safety_example\", \"zero_one\", {{ name = \"quadratic\", values }} or {{ rows }}"
            ))),
        },
        RawLoss::Quadratic { name, values } if name == "quadratic" => LossMatrix::quadratic(values),
        RawLoss::Quadratic { name, .. } => Err(Error::validation(format!("unknown parametrised loss '{name}'"))),
        RawLoss::Matrix { rows } => LossMatrix::new(rows.clone()),
    }
}

/// Bundled manifests shipped next to the crate.
pub fn bundled_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN_A: &str = r#"
[system]
channels = 1
slots = 1000
policy = "mgf"

[[classes]]
name = "a"
members = 1
success_prob = 1.0
loss = "zero_one"
safety = "identity"
source = { type = "matrix", rows = [[0.9, 0.1], [0.2, 0.8]] }
"#;

    #[test]
    fn parses_minimal_manifest() {
        let m = parse_config(CHAIN_A, "mem").unwrap();
        assert_eq!(m.config.agent_count(), 1);
        assert_eq!(m.config.warmup, 100);
        assert_eq!(m.config.policy, PolicyKind::Mgf);
        assert_eq!(m.digest, digest_hex(CHAIN_A.as_bytes()));
        assert_eq!(m.digest.len(), 64);
    }

    #[test]
    fn bad_row_names_the_key_and_line() {
        let text = CHAIN_A.replace("[0.2, 0.8]", "[0.2, 0.79]");
        let err = parse_config(&text, "mem").unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let msg = err.to_string();
        assert!(msg.contains("classes[0].source"), "{msg}");
        assert!(msg.contains("row 1"), "{msg}");
        assert!(msg.starts_with("mem:"), "{msg}");
    }

    #[test]
    fn missing_policy_lists_keys() {
        let text = CHAIN_A.replace("policy = \"mgf\"\n", "");
        let msg = parse_config(&text, "mem").unwrap_err().to_string();
        for key in ["mgf", "maf", "randomized", "random_queue"] {
            assert!(msg.contains(key), "{msg}");
        }
    }

    #[test]
    fn syntax_error_has_location() {
        let err = parse_config("[system\nchannels = 1", "broken.cfg").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().starts_with("broken.cfg:1:"), "{err}");
    }
}
