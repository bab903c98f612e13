//! Command implementations behind the `aoi-guard` binary.
//!
//! Every command returns its artifacts as strings so callers (and tests)
//! decide where they go. Output files start with the version line and the
//! manifest digest as `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::bandit::DualOutcome;
use crate::config::RunManifest;
use crate::error::{Error, Result};
use crate::scheduler::PolicyKind;
use crate::sim::{run_replications, run_sweep, PreparedSystem, SimRecord, SweepAxis, CSV_HEADER};
use crate::stats::{mean, std_error};
use crate::version_line;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::validation(format!("unknown format '{other}', expected csv | json"))),
        }
    }
}

/// Parses a `--policy` value; `all` expands to every policy.
pub fn parse_policies(value: &str) -> Result<Vec<PolicyKind>> {
    if value == "all" {
        return Ok(PolicyKind::ALL.to_vec());
    }
    value.split(',').map(|p| p.trim().parse()).collect()
}

fn provenance(digest: &str) -> String {
    format!("# {}\n# config-sha256 {digest}\n", version_line())
}

/// CSV body with the leading provenance comments.
pub fn records_csv(records: &[SimRecord], digest: &str) -> String {
    let mut out = provenance(digest);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    version: String,
    config_digest: &'a str,
    #[serde(flatten)]
    body: T,
}

fn wrapped_json<T: Serialize>(digest: &str, body: T) -> Result<String> {
    let w = Wrapped {
        version: version_line(),
        config_digest: digest,
        body,
    };
    serde_json::to_string_pretty(&w)
        .map(|s| s + "\n")
        .map_err(|e| Error::Numeric(format!("cannot encode JSON: {e}")))
}

pub fn records_json(records: &[SimRecord], digest: &str) -> Result<String> {
    #[derive(Serialize)]
    struct Body<'a> {
        records: &'a [SimRecord],
    }
    wrapped_json(digest, Body { records })
}

pub fn render_records(records: &[SimRecord], digest: &str, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => Ok(records_csv(records, digest)),
        OutputFormat::Json => records_json(records, digest),
    }
}

/// Writes `body` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, body)?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

/// Mean and standard error of the normalized penalty per policy.
pub fn policy_summary(records: &[SimRecord]) -> Vec<(PolicyKind, f64, f64, usize)> {
    let mut by: BTreeMap<PolicyKind, Vec<f64>> = BTreeMap::new();
    for r in records {
        by.entry(r.policy).or_default().push(r.normalized_penalty);
    }
    by.into_iter()
        .map(|(p, v)| (p, mean(&v), std_error(&v), v.len()))
        .collect()
}

pub fn summary_lines(records: &[SimRecord]) -> Vec<String> {
    policy_summary(records)
        .into_iter()
        .map(|(p, m, se, n)| format!("{p}: normalized penalty {m:.6} (se {se:.6}, {n} runs)"))
        .collect()
}

fn solve_system(manifest: &RunManifest) -> Result<PreparedSystem> {
    let cfg = &manifest.config;
    let mut prepared = PreparedSystem::build(&cfg.classes, cfg.delta_bound)?;
    prepared.solve(&cfg.classes, cfg.channels, &manifest.solver, cfg.seed)?;
    Ok(prepared)
}

/// Artifacts of `solve`, keyed by file name.
#[derive(Debug, Clone)]
pub struct SolveArtifacts {
    pub files: Vec<(String, String)>,
    pub lambda_star: f64,
    pub in_band: bool,
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Builds tables, runs the price search and renders per-class tables,
/// the summary and the dual trace.
pub fn cmd_solve(manifest: &RunManifest) -> Result<SolveArtifacts> {
    let prepared = solve_system(manifest)?;
    let dual = prepared.dual.as_ref().expect("solved above");
    let cfg = &manifest.config;
    let mut files = Vec::new();
    for ((class, tables), sol) in cfg.classes.iter().zip(&prepared.tables).zip(&dual.solutions) {
        let mut out = provenance(&manifest.digest);
        out.push_str("delta,x,q,f,alpha\n");
        for delta in 1..=tables.penalty.delta_bound() {
            for x in 0..tables.penalty.state_count() {
                let _ = writeln!(
                    out,
                    "{delta},{x},{},{},{}",
                    tables.penalty.get(delta, x),
                    tables.estimator.get(delta, x),
                    sol.gain.get(delta, x)
                );
            }
        }
        files.push((format!("tables_{}.csv", file_stem(&class.name)), out));
    }

    #[derive(Serialize)]
    struct Summary {
        lambda_star: f64,
        avg_costs: BTreeMap<String, f64>,
        activation_rate: f64,
        in_band: bool,
        dual_value: f64,
    }
    let summary = Summary {
        lambda_star: dual.lambda_star,
        avg_costs: cfg
            .classes
            .iter()
            .zip(&dual.solutions)
            .map(|(c, s)| (c.name.clone(), s.avg_cost))
            .collect(),
        activation_rate: dual.activation_rate,
        in_band: dual.in_band,
        dual_value: dual.dual_value(&cfg.classes, cfg.channels),
    };
    files.push(("summary.json".into(), wrapped_json(&manifest.digest, summary)?));
    files.push((
        "dual_trace.csv".into(),
        provenance(&manifest.digest) + &dual.trace.to_csv(),
    ));
    Ok(SolveArtifacts {
        files,
        lambda_star: dual.lambda_star,
        in_band: dual.in_band,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub class: String,
    pub delta: usize,
    pub x: usize,
    pub q: f64,
    pub alpha: f64,
}

/// Where the penalty and gain peak for one class at one age.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySummary {
    pub class: String,
    pub delta: usize,
    /// Lowest state attaining the maximum penalty.
    pub argmax_q: usize,
    pub max_q: f64,
    /// States with `q > max_q / 2`.
    pub above_half_max: Vec<usize>,
    /// Lowest state attaining the maximum gain.
    pub argmax_alpha: usize,
    pub max_alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileReport {
    pub lambda_star: f64,
    pub rows: Vec<ProfileRow>,
    pub boundary: Vec<BoundarySummary>,
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

pub fn profile_from(manifest: &RunManifest, dual: &DualOutcome, prepared: &PreparedSystem, deltas: &[usize]) -> Result<ProfileReport> {
    let mut rows = Vec::new();
    let mut boundary = Vec::new();
    for ((class, tables), sol) in manifest.config.classes.iter().zip(&prepared.tables).zip(&dual.solutions) {
        for &delta in deltas {
            let q = tables.penalty.try_get(delta, 0).map(|_| tables.penalty.at_delta(delta))?;
            let alpha = sol.gain.at_delta(delta);
            for (x, (&qv, &av)) in q.iter().zip(alpha).enumerate() {
                rows.push(ProfileRow {
                    class: class.name.clone(),
                    delta,
                    x,
                    q: qv,
                    alpha: av,
                });
            }
            let (argmax_q, max_q) = argmax(q.iter().copied());
            let (argmax_alpha, max_alpha) = argmax(alpha.iter().copied());
            boundary.push(BoundarySummary {
                class: class.name.clone(),
                delta,
                argmax_q,
                max_q,
                above_half_max: (0..q.len()).filter(|&x| q[x] > 0.5 * max_q).collect(),
                argmax_alpha,
                max_alpha,
            });
        }
    }
    Ok(ProfileReport {
        lambda_star: dual.lambda_star,
        rows,
        boundary,
    })
}

/// Solves the manifest and tabulates `q` and `alpha` at the requested ages.
pub fn cmd_profile(manifest: &RunManifest, deltas: &[usize]) -> Result<ProfileReport> {
    if deltas.is_empty() {
        return Err(Error::validation("profile needs at least one delta"));
    }
    let prepared = solve_system(manifest)?;
    profile_from(manifest, prepared.dual.as_ref().expect("solved above"), &prepared, deltas)
}

pub fn render_profile(report: &ProfileReport, digest: &str, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => wrapped_json(digest, report),
        OutputFormat::Csv => {
            let mut out = provenance(digest);
            out.push_str("class,delta,x,q,alpha\n");
            for r in &report.rows {
                let _ = writeln!(out, "{},{},{},{},{}", r.class, r.delta, r.x, r.q, r.alpha);
            }
            Ok(out)
        }
    }
}

pub fn boundary_lines(report: &ProfileReport) -> Vec<String> {
    report
        .boundary
        .iter()
        .map(|b| {
            let set: Vec<String> = b.above_half_max.iter().map(|x| x.to_string()).collect();
            format!(
                "{} delta={}: argmax q at x={} ({:.6}), above half max {{{}}}, argmax alpha at x={} ({:.6})",
                b.class,
                b.delta,
                b.argmax_q,
                b.max_q,
                set.join(","),
                b.argmax_alpha,
                b.max_alpha
            )
        })
        .collect()
}

/// `count` consecutive seeds starting at `first`.
pub fn seed_list(first: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| first.wrapping_add(k)).collect()
}

/// Runs every policy on every seed of one manifest.
pub fn cmd_simulate(manifest: &RunManifest, policies: &[PolicyKind], seeds: &[u64]) -> Result<Vec<SimRecord>> {
    let cfg = &manifest.config;
    cfg.validate()?;
    let prepared = if policies.contains(&PolicyKind::Mgf) {
        solve_system(manifest)?
    } else {
        PreparedSystem::build(&cfg.classes, cfg.delta_bound)?
    };
    run_replications(cfg, &prepared, policies, seeds)
}

pub fn cmd_sweep(
    manifest: &RunManifest,
    axis: SweepAxis,
    values: &[usize],
    policies: &[PolicyKind],
    seeds: &[u64],
) -> Result<Vec<SimRecord>> {
    if values.is_empty() {
        return Err(Error::validation("sweep needs at least one value"));
    }
    let points = run_sweep(&manifest.config, axis, values, policies, seeds, &manifest.solver)?;
    Ok(points.into_iter().flat_map(|p| p.records).collect())
}
