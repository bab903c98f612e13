//! Time-slotted simulation of N agents sharing M erasure channels.
//!
//! Per slot `t`, every agent `n` has a true state `X_t`, and the receiver
//! holds `(delta, x)`: the age of the freshest delivered packet and the
//! state it carried. The slot proceeds as
//!
//! 1. the receiver estimates `f(delta, x)` and, after warmup, the loss
//!    `L(g(X_t), f(delta, x))` is accumulated;
//! 2. the policy pulls at most `M` agents;
//! 3. each pulled agent transmits (a fresh sample of `X_t`, or the oldest
//!    queued packet for the queue baseline) and the packet arrives with
//!    probability `p`;
//! 4. AoI advances, and every true state steps once.
//!
//! Randomness is split into one stream per (agent, motion), one per
//! (agent, channel) and one for the policy, all derived from the master
//! seed, so policies are compared on common source trajectories.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bandit::{dual_ascent, DualOutcome, SolverSettings};
use crate::error::{Error, Result};
use crate::loss::{build_tables, EstimatorTable, PenaltyTable};
use crate::markov::{AgentClassSpec, MarkovSource};
use crate::scheduler::{
    maf_select, mgf_select, queue_policy_step, randomized_select, AgentId, AgentState, PolicyDecision,
    PolicyKind, UpdateQueue,
};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub classes: Vec<AgentClassSpec>,
    pub channels: usize,
    pub slots: usize,
    pub warmup: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub delta_bound: usize,
    /// Scale factor `r` reported alongside results (1 unless scaled).
    pub scale: usize,
}

impl SimConfig {
    pub fn agent_count(&self) -> usize {
        self.classes.iter().map(|c| c.member_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() || self.agent_count() == 0 {
            return Err(Error::validation("simulation needs at least one agent"));
        }
        for c in &self.classes {
            c.validate()?;
        }
        if self.channels == 0 {
            return Err(Error::validation("channels must be at least 1"));
        }
        if self.slots <= self.warmup {
            return Err(Error::validation(format!(
                "slots ({}) must exceed warmup ({})",
                self.slots, self.warmup
            )));
        }
        if self.delta_bound == 0 {
            return Err(Error::validation("delta_bound must be at least 1"));
        }
        Ok(())
    }

    /// Class index of every agent, agents numbered class by class.
    pub fn agent_classes(&self) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .flat_map(|(c, spec)| std::iter::repeat_n(c, spec.member_count))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ClassTables {
    pub penalty: PenaltyTable,
    pub estimator: EstimatorTable,
    pub initial_law: Vec<f64>,
}

/// Everything a run needs beyond its config: per-class tables and, for
/// MGF, the solved gain indices.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    pub tables: Vec<ClassTables>,
    pub dual: Option<DualOutcome>,
}

impl PreparedSystem {
    pub fn build(classes: &[AgentClassSpec], delta_bound: usize) -> Result<Self> {
        let tables = classes
            .par_iter()
            .map(|c| {
                let (penalty, estimator) = build_tables(c, delta_bound)?;
                Ok(ClassTables {
                    penalty,
                    estimator,
                    initial_law: c.source.initial_law(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { tables, dual: None })
    }

    pub fn penalties(&self) -> Vec<PenaltyTable> {
        self.tables.iter().map(|t| t.penalty.clone()).collect()
    }

    /// Runs the dual price search and keeps its solutions for MGF.
    pub fn solve(
        &mut self,
        classes: &[AgentClassSpec],
        channels: usize,
        settings: &SolverSettings,
        seed: u64,
    ) -> Result<&DualOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(DUAL_STREAM);
        let outcome = dual_ascent(classes, &self.penalties(), channels, settings, &mut rng)?;
        Ok(self.dual.insert(outcome))
    }
}

const DUAL_STREAM: u64 = u64::MAX - 1;
const POLICY_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRecord {
    pub policy: PolicyKind,
    #[serde(rename = "N")]
    pub agents: usize,
    #[serde(rename = "M")]
    pub channels: usize,
    pub r: usize,
    pub seed: u64,
    pub slots: usize,
    pub total_loss: f64,
    pub normalized_penalty: f64,
    pub activation_rate: f64,
    pub mean_aoi: f64,
    pub deliveries: u64,
    pub per_agent_mean_aoi: Vec<f64>,
}

pub const CSV_HEADER: &str =
    "policy,N,M,r,seed,slots,total_loss,normalized_penalty,activation_rate,mean_aoi";

impl SimRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.agents,
            self.channels,
            self.r,
            self.seed,
            self.slots,
            self.total_loss,
            self.normalized_penalty,
            self.activation_rate,
            self.mean_aoi
        )
    }
}

/// AoI recursion: 1 after a delivered pull, otherwise one more slot.
pub fn advance_aoi(delta: usize, pulled: bool, delivered: bool) -> usize {
    if pulled && delivered {
        1
    } else {
        delta + 1
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs one replication with pre-built tables.
pub fn simulate(config: &SimConfig, prepared: &PreparedSystem) -> Result<SimRecord> {
    config.validate()?;
    if prepared.tables.len() != config.classes.len() {
        return Err(Error::Shape {
            expected: config.classes.len(),
            found: prepared.tables.len(),
        });
    }
    let solutions = match (config.policy, &prepared.dual) {
        (PolicyKind::Mgf, Some(d)) => Some(d.solutions.as_slice()),
        (PolicyKind::Mgf, None) => {
            return Err(Error::Config {
                location: "policy".into(),
                message: "MGF needs solved gain tables; run the dual price search first".into(),
            })
        }
        _ => None,
    };

    let class_of = config.agent_classes();
    let n = class_of.len();
    let m = config.channels;
    let ids: Vec<AgentId> = (0..n).collect();

    let mut motion: Vec<ChaCha8Rng> = (0..n).map(|a| stream(config.seed, 2 * a as u64)).collect();
    let mut channel: Vec<ChaCha8Rng> = (0..n).map(|a| stream(config.seed, 2 * a as u64 + 1)).collect();
    let mut policy_rng = stream(config.seed, POLICY_STREAM);

    let mut truth = Vec::with_capacity(n);
    let mut receiver = Vec::with_capacity(n);
    for (a, &c) in class_of.iter().enumerate() {
        let source = &config.classes[c].source;
        let seen = MarkovSource::sample_from(&prepared.tables[c].initial_law, &mut motion[a]);
        truth.push(source.sample_next(seen, &mut motion[a]));
        receiver.push(AgentState { id: a, class: c, delta: 1, x: seen });
    }
    let mut queues: Vec<UpdateQueue> = match config.policy {
        PolicyKind::RandomQueue => vec![UpdateQueue::default(); n],
        _ => Vec::new(),
    };

    let mut total_loss = 0.0;
    let mut aoi_sum = vec![0u64; n];
    let mut pulls = 0u64;
    let mut deliveries = 0u64;

    for t in 0..config.slots {
        let counted = t >= config.warmup;
        if counted {
            for (a, s) in receiver.iter().enumerate() {
                let class = &config.classes[s.class];
                let estimate = prepared.tables[s.class].estimator.get(s.delta, s.x);
                total_loss += class.loss.get(class.safety.label(truth[a]), estimate);
                aoi_sum[a] += s.delta as u64;
            }
        }

        let mut sent = Vec::new();
        let decision: PolicyDecision = match config.policy {
            PolicyKind::Mgf => mgf_select(&receiver, solutions.expect("checked above"), m),
            PolicyKind::Maf => maf_select(&receiver, m),
            PolicyKind::Randomized => randomized_select(&ids, m, &mut policy_rng),
            PolicyKind::RandomQueue => {
                let (d, packets) = queue_policy_step(&mut queues, &ids, t as u64, &truth, m, &mut policy_rng);
                sent = packets;
                d
            }
        };
        assert!(decision.len() <= m, "channel budget exceeded at slot {t}");

        let mut delivered = vec![false; n];
        for &a in decision.selected() {
            if counted {
                pulls += 1;
            }
            let p = config.classes[receiver[a].class].success_prob;
            if channel[a].random::<f64>() >= p {
                continue;
            }
            delivered[a] = true;
            deliveries += 1;
            let s = &mut receiver[a];
            match sent.get(a).copied().flatten() {
                Some(packet) => {
                    s.delta = (t as u64 + 1 - packet.generated_at) as usize;
                    s.x = packet.state;
                }
                None => {
                    s.delta = advance_aoi(s.delta, true, true);
                    s.x = truth[a];
                }
            }
        }
        for (a, s) in receiver.iter_mut().enumerate() {
            if !delivered[a] {
                s.delta += 1;
            }
            let source = &config.classes[s.class].source;
            truth[a] = source.sample_next(truth[a], &mut motion[a]);
        }
    }

    let measured = (config.slots - config.warmup) as f64;
    let normalized_penalty = total_loss / (measured * n as f64);
    debug_assert!(
        normalized_penalty
            >= config.classes.iter().map(|c| c.loss.min_entry()).fold(f64::INFINITY, f64::min) - 1e-12
    );
    let per_agent_mean_aoi: Vec<f64> = aoi_sum.iter().map(|&s| s as f64 / measured).collect();
    let activation_rate = pulls as f64 / measured;
    debug_assert!(activation_rate <= m as f64);
    Ok(SimRecord {
        policy: config.policy,
        agents: n,
        channels: m,
        r: config.scale,
        seed: config.seed,
        slots: config.slots,
        total_loss,
        normalized_penalty,
        activation_rate,
        mean_aoi: per_agent_mean_aoi.iter().sum::<f64>() / n as f64,
        deliveries,
        per_agent_mean_aoi,
    })
}

/// Builds tables (and MGF gains, if needed) then runs one replication.
pub fn run_simulation(config: &SimConfig, settings: &SolverSettings) -> Result<SimRecord> {
    config.validate()?;
    let mut prepared = PreparedSystem::build(&config.classes, config.delta_bound)?;
    if config.policy == PolicyKind::Mgf {
        prepared.solve(&config.classes, config.channels, settings, config.seed)?;
    }
    simulate(config, &prepared)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Agents,
    Channels,
    Scale,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agents" | "N" => Ok(SweepAxis::Agents),
            "channels" | "M" => Ok(SweepAxis::Channels),
            "scale" | "r" => Ok(SweepAxis::Scale),
            other => Err(Error::validation(format!(
                "unknown sweep axis '{other}', expected agents | channels | scale"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Agents => "agents",
            SweepAxis::Channels => "channels",
            SweepAxis::Scale => "scale",
        })
    }
}

/// Applies one sweep coordinate to a base config. Returns the derived
/// config and, for each of its classes, the base class index.
pub fn derive_config(base: &SimConfig, axis: SweepAxis, value: usize) -> Result<(SimConfig, Vec<usize>)> {
    if value == 0 {
        return Err(Error::validation(format!("sweep value for {axis} must be positive")));
    }
    let mut cfg = base.clone();
    let mut keep: Vec<usize> = (0..base.classes.len()).collect();
    match axis {
        SweepAxis::Channels => cfg.channels = value,
        SweepAxis::Scale => {
            for c in &mut cfg.classes {
                c.member_count *= value;
            }
            cfg.channels = base.channels * value;
            cfg.scale = base.scale * value;
        }
        SweepAxis::Agents => {
            let total = base.agent_count();
            let mut counts: Vec<usize> = base
                .classes
                .iter()
                .map(|c| value * c.member_count / total)
                .collect();
            let mut left = value - counts.iter().sum::<usize>();
            for c in counts.iter_mut() {
                if left == 0 {
                    break;
                }
                *c += 1;
                left -= 1;
            }
            keep = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
            cfg.classes = keep
                .iter()
                .map(|&i| {
                    let mut c = base.classes[i].clone();
                    c.member_count = counts[i];
                    c
                })
                .collect();
        }
    }
    Ok((cfg, keep))
}

/// Thread count for replication fan-out: `AOI_GUARD_THREADS`, 0 = auto.
pub fn configured_threads() -> usize {
    std::env::var("AOI_GUARD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

pub(crate) fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(configured_threads()).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Replicates `policies x seeds` on one config, sharing tables and gains.
/// Records come back ordered by policy, then seed.
pub fn run_replications(
    config: &SimConfig,
    prepared: &PreparedSystem,
    policies: &[PolicyKind],
    seeds: &[u64],
) -> Result<Vec<SimRecord>> {
    let jobs: Vec<(PolicyKind, u64)> = policies
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    with_pool(|| {
        jobs.par_iter()
            .map(|&(policy, seed)| {
                let cfg = SimConfig {
                    policy,
                    seed,
                    ..config.clone()
                };
                simulate(&cfg, prepared)
            })
            .collect()
    })
}

/// One point of a sweep with its records and (when MGF ran) price search.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: usize,
    pub config: SimConfig,
    pub dual: Option<DualOutcome>,
    pub records: Vec<SimRecord>,
}

/// Runs every `(value, policy, seed)` combination. Seeds are shared across
/// policies so results can be compared pairwise.
pub fn run_sweep(
    base: &SimConfig,
    axis: SweepAxis,
    values: &[usize],
    policies: &[PolicyKind],
    seeds: &[u64],
    settings: &SolverSettings,
) -> Result<Vec<SweepPoint>> {
    base.validate()?;
    let base_prepared = PreparedSystem::build(&base.classes, base.delta_bound)?;
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let (cfg, keep) = derive_config(base, axis, value)?;
        cfg.validate()?;
        let mut prepared = PreparedSystem {
            tables: keep.iter().map(|&i| base_prepared.tables[i].clone()).collect(),
            dual: None,
        };
        if policies.contains(&PolicyKind::Mgf) {
            let mut point_settings = *settings;
            if axis == SweepAxis::Scale {
                // the relaxed rate gap grows with r while the price does not
                point_settings.beta /= value as f64;
            }
            prepared.solve(&cfg.classes, cfg.channels, &point_settings, base.seed)?;
        }
        let records = run_replications(&cfg, &prepared, policies, seeds)?;
        points.push(SweepPoint {
            value,
            config: cfg,
            dual: prepared.dual,
            records,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossMatrix;
    use crate::markov::SafetyMap;

    fn chain_a_config(policy: PolicyKind, slots: usize) -> SimConfig {
        let src = MarkovSource::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let class = AgentClassSpec::new("a", src, SafetyMap::identity(2), LossMatrix::zero_one(2), 1.0, 1).unwrap();
        SimConfig {
            classes: vec![class],
            channels: 1,
            slots,
            warmup: slots / 10,
            seed: 7,
            policy,
            delta_bound: 250,
            scale: 1,
        }
    }

    #[test]
    fn aoi_recursion() {
        assert_eq!(advance_aoi(4, true, true), 1);
        assert_eq!(advance_aoi(4, true, false), 5);
        assert_eq!(advance_aoi(4, false, false), 5);
        assert_eq!(advance_aoi(4, false, true), 5);
    }

    #[test]
    fn frozen_world_has_no_loss() {
        let class = AgentClassSpec::new(
            "frozen",
            MarkovSource::identity(3).unwrap(),
            SafetyMap::identity(3),
            LossMatrix::safety_example(),
            0.9,
            4,
        )
        .unwrap();
        for policy in PolicyKind::ALL {
            let cfg = SimConfig {
                classes: vec![class.clone()],
                channels: 2,
                slots: 2_000,
                warmup: 100,
                seed: 3,
                policy,
                delta_bound: 50,
                scale: 1,
            };
            let rec = run_simulation(&cfg, &SolverSettings::default()).unwrap();
            assert_eq!(rec.normalized_penalty, 0.0, "{policy}");
        }
    }

    #[test]
    fn single_agent_always_sent_has_unit_age() {
        let cfg = chain_a_config(PolicyKind::Maf, 5_000);
        let rec = run_simulation(&cfg, &SolverSettings::default()).unwrap();
        assert_eq!(rec.mean_aoi, 1.0);
        assert_eq!(rec.activation_rate, 1.0);
    }

    #[test]
    fn mgf_without_gains_is_a_config_error() {
        let cfg = chain_a_config(PolicyKind::Mgf, 100);
        let prepared = PreparedSystem::build(&cfg.classes, 250).unwrap();
        assert!(matches!(simulate(&cfg, &prepared), Err(Error::Config { .. })));
    }

    #[test]
    fn identical_seed_identical_record() {
        let cfg = chain_a_config(PolicyKind::Randomized, 3_000);
        let s = SolverSettings::default();
        assert_eq!(run_simulation(&cfg, &s).unwrap(), run_simulation(&cfg, &s).unwrap());
    }

    #[test]
    fn config_validation() {
        let mut cfg = chain_a_config(PolicyKind::Maf, 100);
        cfg.warmup = 100;
        assert!(cfg.validate().is_err());
        cfg.warmup = 10;
        cfg.channels = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn derive_agent_split() {
        let mut cfg = chain_a_config(PolicyKind::Maf, 100);
        let mut other = cfg.classes[0].clone();
        other.name = "b".into();
        cfg.classes.push(other);
        let (d, keep) = derive_config(&cfg, SweepAxis::Agents, 7).unwrap();
        assert_eq!(keep, vec![0, 1]);
        assert_eq!(d.classes.iter().map(|c| c.member_count).collect::<Vec<_>>(), vec![4, 3]);
        let (d, _) = derive_config(&cfg, SweepAxis::Scale, 3).unwrap();
        assert_eq!((d.agent_count(), d.channels, d.scale), (6, 3, 3));
        let (d, keep) = derive_config(&cfg, SweepAxis::Agents, 1).unwrap();
        assert_eq!((d.agent_count(), keep), (1, vec![0]));
    }
}
