//! Channel allocation policies.
//!
//! Every policy picks at most `M` agents per slot from the receiver-side
//! states `(delta, x)`. Ties are always broken towards the lower agent id.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::BanditSolution;
use crate::error::{Error, Result};

pub type AgentId = usize;

/// Receiver-side view of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentState {
    pub id: AgentId,
    pub class: usize,
    /// True AoI in slots (not clamped).
    pub delta: usize,
    /// Latest received observation.
    pub x: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyDecision {
    selected: Vec<AgentId>,
}

impl PolicyDecision {
    pub fn new(selected: Vec<AgentId>, channels: usize) -> Result<Self> {
        if selected.len() > channels {
            return Err(Error::validation(format!(
                "{} agents selected for {channels} channels",
                selected.len()
            )));
        }
        let mut sorted = selected.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("duplicate agent in selection"));
        }
        Ok(Self { selected })
    }

    pub fn selected(&self) -> &[AgentId] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.selected.contains(&id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Mgf,
    Maf,
    Randomized,
    RandomQueue,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Mgf,
        PolicyKind::Maf,
        PolicyKind::Randomized,
        PolicyKind::RandomQueue,
    ];

    pub fn key(self) -> &'static str {
        match self {
            PolicyKind::Mgf => "mgf",
            PolicyKind::Maf => "maf",
            PolicyKind::Randomized => "randomized",
            PolicyKind::RandomQueue => "random_queue",
        }
    }

    pub fn valid_keys() -> String {
        Self::ALL.iter().map(|p| format!("\"{}\"", p.key())).collect::<Vec<_>>().join(" | ")
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.key() == s)
            .ok_or_else(|| Error::validation(format!("unknown policy '{s}', expected one of {}", Self::valid_keys())))
    }
}

/// Up to `channels` agents with the largest strictly positive gain.
pub fn select_by_gain(gains: &[(AgentId, f64)], channels: usize) -> PolicyDecision {
    let mut positive: Vec<(AgentId, f64)> = gains.iter().copied().filter(|(_, g)| *g > 0.0).collect();
    positive.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    positive.truncate(channels);
    PolicyDecision {
        selected: positive.into_iter().map(|(id, _)| id).collect(),
    }
}

/// Maximum Gain First: gains are looked up in each agent's class solution
/// at the clamped AoI.
pub fn mgf_select(states: &[AgentState], solutions: &[BanditSolution], channels: usize) -> PolicyDecision {
    let gains: Vec<(AgentId, f64)> = states
        .iter()
        .map(|s| (s.id, solutions[s.class].gain.get(s.delta, s.x)))
        .collect();
    select_by_gain(&gains, channels)
}

/// Maximum Age First.
pub fn maf_select(states: &[AgentState], channels: usize) -> PolicyDecision {
    let mut order: Vec<&AgentState> = states.iter().collect();
    order.sort_by(|a, b| match b.delta.cmp(&a.delta) {
        Ordering::Equal => a.id.cmp(&b.id),
        o => o,
    });
    PolicyDecision {
        selected: order.into_iter().take(channels).map(|s| s.id).collect(),
    }
}

/// Uniform `min(M, N)`-subset by partial Fisher-Yates.
pub fn randomized_select<R: Rng + ?Sized>(ids: &[AgentId], channels: usize, rng: &mut R) -> PolicyDecision {
    let mut pool = ids.to_vec();
    let take = channels.min(pool.len());
    let (chosen, _) = pool.partial_shuffle(rng, take);
    PolicyDecision {
        selected: chosen.to_vec(),
    }
}

pub const QUEUE_CAPACITY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub generated_at: u64,
    pub state: usize,
}

/// FIFO buffer of generated updates; when full the oldest is dropped.
#[derive(Debug, Clone)]
pub struct UpdateQueue {
    packets: VecDeque<Packet>,
    capacity: usize,
}

impl Default for UpdateQueue {
    fn default() -> Self {
        Self::with_capacity(QUEUE_CAPACITY)
    }
}

impl UpdateQueue {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            packets: VecDeque::with_capacity(capacity.min(QUEUE_CAPACITY)),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, packet: Packet) {
        debug_assert!(self.packets.back().is_none_or(|p| p.generated_at < packet.generated_at));
        if self.packets.len() == self.capacity {
            self.packets.pop_front();
        }
        self.packets.push_back(packet);
    }

    pub fn pop_oldest(&mut self) -> Option<Packet> {
        self.packets.pop_front()
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn stamps(&self) -> impl Iterator<Item = u64> + '_ {
        self.packets.iter().map(|p| p.generated_at)
    }
}

/// One slot of random selection with queues: every agent enqueues an update
/// stamped `now`, `M` agents are drawn uniformly and each selected agent
/// dequeues its oldest packet for transmission.
///
/// Returns the decision and, per agent, the packet put on the air.
pub fn queue_policy_step<R: Rng + ?Sized>(
    queues: &mut [UpdateQueue],
    ids: &[AgentId],
    now: u64,
    current_states: &[usize],
    channels: usize,
    rng: &mut R,
) -> (PolicyDecision, Vec<Option<Packet>>) {
    for (q, &state) in queues.iter_mut().zip(current_states) {
        q.push(Packet { generated_at: now, state });
    }
    let decision = randomized_select(ids, channels, rng);
    let mut sent = vec![None; queues.len()];
    for &id in decision.selected() {
        sent[id] = queues[id].pop_oldest();
    }
    (decision, sent)
}
