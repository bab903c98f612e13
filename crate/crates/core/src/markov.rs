//! Finite-state, time-homogeneous Markov sources.
//!
//! A [`MarkovSource`] owns a row-stochastic transition matrix and lazily
//! caches its powers `P^0 ..= P^delta_bound`. Cached matrices are published
//! whole behind an `Arc`, so concurrent readers never see a partially
//! written power. The row-chain and grid builders reproduce the agent
//! motion models used by the safety-monitoring experiments.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, RwLock};

use rand::Rng;

use crate::error::{Error, Result};
use crate::loss::LossMatrix;

/// Default AoI truncation.
pub const DEFAULT_DELTA_BOUND: usize = 250;

/// Tolerance for row sums on construction. Rows outside it are rejected,
/// never renormalized.
pub const STOCHASTIC_TOL: f64 = 1e-12;

const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITERS: usize = 2_000_000;

pub struct MarkovSource {
    name: String,
    states: usize,
    transition: Vec<f64>,
    cumulative: Vec<f64>,
    delta_bound: usize,
    powers: RwLock<Vec<Arc<[f64]>>>,
}

impl MarkovSource {
    /// Builds a source from explicit matrix rows.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let states = rows.len();
        if states == 0 {
            return Err(Error::validation("transition matrix has no rows"));
        }
        let mut flat = Vec::with_capacity(states * states);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != states {
                return Err(Error::validation(format!(
                    "row {i} has {} entries, expected {states}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(states, flat)
    }

    /// Builds a source from a row-major `states x states` buffer.
    pub fn from_flat(states: usize, transition: Vec<f64>) -> Result<Self> {
        if states == 0 {
            return Err(Error::validation("source needs at least one state"));
        }
        if transition.len() != states * states {
            return Err(Error::Shape {
                expected: states * states,
                found: transition.len(),
            });
        }
        for (i, row) in transition.chunks_exact(states).enumerate() {
            validate_row(i, row)?;
        }
        let mut cumulative = transition.clone();
        for row in cumulative.chunks_exact_mut(states) {
            let mut acc = 0.0;
            for v in row.iter_mut() {
                acc += *v;
                *v = acc;
            }
        }
        Ok(Self {
            name: String::from("source"),
            states,
            transition,
            cumulative,
            delta_bound: DEFAULT_DELTA_BOUND,
            powers: RwLock::new(Vec::new()),
        })
    }

    pub fn identity(states: usize) -> Result<Self> {
        let mut flat = vec![0.0; states * states];
        for i in 0..states {
            flat[i * states + i] = 1.0;
        }
        Self::from_flat(states, flat)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_delta_bound(mut self, delta_bound: usize) -> Result<Self> {
        if delta_bound == 0 {
            return Err(Error::validation("delta_bound must be at least 1"));
        }
        self.delta_bound = delta_bound;
        self.powers = RwLock::new(Vec::new());
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    pub fn delta_bound(&self) -> usize {
        self.delta_bound
    }

    /// Transition probability `P(from -> to)`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.states + to]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.transition[x * self.states..(x + 1) * self.states]
    }

    /// Row-major view of `P`.
    pub fn matrix(&self) -> &[f64] {
        &self.transition
    }

    /// `out = P v`, i.e. `out[x] = sum_j P(x, j) v[j]`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.states);
        for (o, row) in out.iter_mut().zip(self.transition.chunks_exact(self.states)) {
            *o = row.iter().zip(v).map(|(p, h)| p * h).sum();
        }
    }

    /// `P^delta`, computed on first use and cached.
    pub fn power(&self, delta: usize) -> Result<Arc<[f64]>> {
        if delta > self.delta_bound {
            return Err(Error::Range {
                what: "delta",
                index: delta,
                bound: self.delta_bound,
            });
        }
        if let Some(m) = self.powers.read().expect("power cache poisoned").get(delta) {
            return Ok(Arc::clone(m));
        }
        let mut cache = self.powers.write().expect("power cache poisoned");
        if cache.is_empty() {
            let mut eye = vec![0.0; self.states * self.states];
            for i in 0..self.states {
                eye[i * self.states + i] = 1.0;
            }
            cache.push(eye.into());
        }
        while cache.len() <= delta {
            let next = mat_mul(cache.last().expect("non-empty"), &self.transition, self.states);
            cache.push(next.into());
        }
        Ok(Arc::clone(&cache[delta]))
    }

    /// Row `x` of `P^delta`: the law of `X_t` given `X_{t-delta} = x`.
    pub fn step_distribution(&self, x: usize, delta: usize) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let p = self.power(delta)?;
        Ok(p[x * self.states..(x + 1) * self.states].to_vec())
    }

    /// Law of the safety label `g(X_t)` given `X_{t-delta} = x`.
    pub fn safety_distribution(&self, safety: &SafetyMap, x: usize, delta: usize) -> Result<Vec<f64>> {
        if safety.state_count() != self.states {
            return Err(Error::Shape {
                expected: self.states,
                found: safety.state_count(),
            });
        }
        let states = self.step_distribution(x, delta)?;
        Ok(safety.push_forward(&states))
    }

    /// Stationary law by power iteration.
    ///
    /// The support graph must be irreducible and aperiodic; otherwise the
    /// law is not unique (or iteration cycles) and a convergence error is
    /// returned.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        self.stationary_distribution_capped(STATIONARY_MAX_ITERS)
    }

    pub fn stationary_distribution_capped(&self, max_iters: usize) -> Result<Vec<f64>> {
        let n = self.states;
        if !self.is_irreducible() {
            return Err(self.convergence_error("reducible chain has no unique stationary law"));
        }
        if self.period() != 1 {
            return Err(self.convergence_error("periodic chain: power iteration does not settle"));
        }
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..max_iters {
            next.iter_mut().for_each(|v| *v = 0.0);
            for (i, row) in self.transition.chunks_exact(n).enumerate() {
                let w = pi[i];
                if w == 0.0 {
                    continue;
                }
                for (nj, p) in next.iter_mut().zip(row) {
                    *nj += w * p;
                }
            }
            let diff = pi
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut pi, &mut next);
            if diff < STATIONARY_TOL {
                return Ok(pi);
            }
        }
        Err(self.convergence_error(&format!("no fixed point after {max_iters} iterations")))
    }

    /// Stationary law when it exists, otherwise uniform.
    pub fn initial_law(&self) -> Vec<f64> {
        self.stationary_distribution()
            .unwrap_or_else(|_| vec![1.0 / self.states as f64; self.states])
    }

    /// Draws `X_{t+1}` given `X_t = x`.
    pub fn sample_next<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let row = &self.cumulative[x * self.states..(x + 1) * self.states];
        let u: f64 = rng.random();
        match row.iter().position(|&c| c > u) {
            Some(j) => j,
            // u landed in the rounding gap above the last partial sum
            None => self.row(x).iter().rposition(|&p| p > 0.0).unwrap_or(x),
        }
    }

    /// Draws a state from an arbitrary law over the state space.
    pub fn sample_from<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, p) in dist.iter().enumerate() {
            acc += p;
            if acc > u {
                return j;
            }
        }
        dist.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.states {
            return Err(Error::Range {
                what: "state",
                index: x,
                bound: self.states,
            });
        }
        Ok(())
    }

    fn convergence_error(&self, detail: &str) -> Error {
        Error::Convergence {
            what: format!("stationary distribution of '{}'", self.name),
            detail: detail.to_string(),
        }
    }

    fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(j, _)| j)
    }

    fn bfs_levels(&self, forward: bool) -> Vec<Option<usize>> {
        let n = self.states;
        let mut level = vec![None; n];
        let mut queue = VecDeque::from([0usize]);
        level[0] = Some(0);
        while let Some(u) = queue.pop_front() {
            let lu = level[u].expect("visited");
            for v in 0..n {
                let edge = if forward { self.prob(u, v) } else { self.prob(v, u) };
                if edge > 0.0 && level[v].is_none() {
                    level[v] = Some(lu + 1);
                    queue.push_back(v);
                }
            }
        }
        level
    }

    pub fn is_irreducible(&self) -> bool {
        self.bfs_levels(true).iter().all(Option::is_some)
            && self.bfs_levels(false).iter().all(Option::is_some)
    }

    /// Period of the (assumed irreducible) support graph.
    pub fn period(&self) -> usize {
        let level = self.bfs_levels(true);
        let mut g = 0usize;
        for u in 0..self.states {
            let Some(lu) = level[u] else { continue };
            for v in self.successors(u) {
                if let Some(lv) = level[v] {
                    g = gcd(g, (lu + 1).abs_diff(lv));
                }
            }
        }
        g
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn validate_row(i: usize, row: &[f64]) -> Result<()> {
    for (j, &p) in row.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!(
                "row {i}: entry {j} = {p} is not a probability"
            )));
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::validation(format!("row {i} sums to {sum}, not 1")));
    }
    Ok(())
}

pub(crate) fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * n..(k + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    out
}

impl Clone for MarkovSource {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            states: self.states,
            transition: self.transition.clone(),
            cumulative: self.cumulative.clone(),
            delta_bound: self.delta_bound,
            powers: RwLock::new(Vec::new()),
        }
    }
}

impl fmt::Debug for MarkovSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarkovSource")
            .field("name", &self.name)
            .field("states", &self.states)
            .field("delta_bound", &self.delta_bound)
            .finish_non_exhaustive()
    }
}

/// One step of a random walk on a grid. Moves that would leave the grid
/// keep the agent in place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMotion {
    pub up: f64,
    pub down: f64,
    pub left: f64,
    pub right: f64,
}

impl GridMotion {
    fn validate(&self) -> Result<()> {
        for (name, p) in [("up", self.up), ("down", self.down), ("left", self.left), ("right", self.right)] {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        if self.up + self.down + self.left + self.right > 1.0 + STOCHASTIC_TOL {
            return Err(Error::validation("move probabilities sum above 1"));
        }
        Ok(())
    }

    /// Row-only projection: horizontal moves keep the row.
    pub fn row_chain(&self, rows: usize) -> Result<MarkovSource> {
        self.validate()?;
        build_row_chain(rows, self.up, self.down)
    }

    /// Full `rows x cols` chain, state index `row * cols + col`.
    pub fn grid_chain(&self, rows: usize, cols: usize) -> Result<MarkovSource> {
        self.validate()?;
        if rows == 0 || cols == 0 {
            return Err(Error::validation("grid needs at least one row and column"));
        }
        let n = rows * cols;
        let mut flat = vec![0.0; n * n];
        for r in 0..rows {
            for c in 0..cols {
                let s = r * cols + c;
                let mut stay = 1.0 - self.up - self.down - self.left - self.right;
                let mut go = |target: Option<usize>, p: f64, flat: &mut Vec<f64>| match target {
                    Some(t) => flat[s * n + t] += p,
                    None => stay += p,
                };
                go((r > 0).then(|| s - cols), self.up, &mut flat);
                go((r + 1 < rows).then(|| s + cols), self.down, &mut flat);
                go((c > 0).then(|| s - 1), self.left, &mut flat);
                go((c + 1 < cols).then(|| s + 1), self.right, &mut flat);
                flat[s * n + s] += stay.max(0.0);
            }
        }
        MarkovSource::from_flat(n, flat)
    }
}

/// Birth-death chain over `rows` rows. Row `r` moves to `r - 1` with
/// probability `up`, to `r + 1` with probability `down`, and stays
/// otherwise; at the top and bottom rows the blocked move becomes a stay.
pub fn build_row_chain(rows: usize, up: f64, down: f64) -> Result<MarkovSource> {
    if rows < 2 {
        return Err(Error::validation("row chain needs at least 2 rows"));
    }
    for (name, p) in [("up", up), ("down", down)] {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!("{name} probability {p} outside [0, 1]")));
        }
    }
    if up + down > 1.0 + STOCHASTIC_TOL {
        return Err(Error::validation(format!("up + down = {} exceeds 1", up + down)));
    }
    let stay = (1.0 - up - down).max(0.0);
    let mut flat = vec![0.0; rows * rows];
    for r in 0..rows {
        let base = r * rows;
        flat[base + r] = stay;
        if r == 0 {
            flat[base + r] += up;
        } else {
            flat[base + r - 1] = up;
        }
        if r + 1 == rows {
            flat[base + r] += down;
        } else {
            flat[base + r + 1] = down;
        }
    }
    MarkovSource::from_flat(rows, flat)
}

/// Deterministic map from source states to safety labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyMap {
    labels: usize,
    assignment: Vec<usize>,
}

impl SafetyMap {
    pub fn new(labels: usize, assignment: Vec<usize>) -> Result<Self> {
        if labels == 0 {
            return Err(Error::validation("safety map needs at least one label"));
        }
        if let Some((i, &y)) = assignment.iter().enumerate().find(|(_, &y)| y >= labels) {
            return Err(Error::validation(format!(
                "state {i} mapped to label {y}, but only {labels} labels exist"
            )));
        }
        Ok(Self { labels, assignment })
    }

    pub fn identity(states: usize) -> Self {
        Self {
            labels: states.max(1),
            assignment: (0..states).collect(),
        }
    }

    pub fn constant(states: usize) -> Self {
        Self {
            labels: 1,
            assignment: vec![0; states],
        }
    }

    /// Labels grid positions by row. `last_rows[k]` is the last row
    /// (1-based) carrying label `k`; rows past the final cut get the
    /// final label.
    pub fn row_bands(rows: usize, cols: usize, last_rows: &[usize]) -> Result<Self> {
        if last_rows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("band cut rows must be strictly increasing"));
        }
        if last_rows.last().is_some_and(|&r| r >= rows) {
            return Err(Error::validation("band cut row must leave at least one row for the last label"));
        }
        let label_of_row = |r: usize| last_rows.iter().filter(|&&cut| r + 1 > cut).count();
        let assignment = (0..rows * cols).map(|s| label_of_row(s / cols)).collect();
        Self::new(last_rows.len() + 1, assignment)
    }

    pub fn label_count(&self) -> usize {
        self.labels
    }

    pub fn state_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn label(&self, x: usize) -> usize {
        self.assignment[x]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Sums a law over states into a law over labels.
    pub fn push_forward(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.labels];
        for (p, &y) in dist.iter().zip(&self.assignment) {
            out[y] += p;
        }
        out
    }
}

/// A population of agents sharing source law, safety map, loss and
/// channel reliability.
#[derive(Debug, Clone)]
pub struct AgentClassSpec {
    pub name: String,
    pub source: MarkovSource,
    pub safety: SafetyMap,
    pub loss: LossMatrix,
    pub success_prob: f64,
    pub member_count: usize,
}

impl AgentClassSpec {
    pub fn new(
        name: impl Into<String>,
        source: MarkovSource,
        safety: SafetyMap,
        loss: LossMatrix,
        success_prob: f64,
        member_count: usize,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            source,
            safety,
            loss,
            success_prob,
            member_count,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.member_count == 0 {
            return Err(Error::validation(format!("class '{}': member_count must be >= 1", self.name)));
        }
        if !(self.success_prob > 0.0 && self.success_prob <= 1.0) {
            return Err(Error::validation(format!(
                "class '{}': success_prob {} outside (0, 1]",
                self.name, self.success_prob
            )));
        }
        if self.safety.state_count() != self.source.state_count() {
            return Err(Error::validation(format!(
                "class '{}': safety map covers {} states, source has {}",
                self.name,
                self.safety.state_count(),
                self.source.state_count()
            )));
        }
        if self.loss.label_count() != self.safety.label_count() {
            return Err(Error::validation(format!(
                "class '{}': loss matrix is {}x{}, safety map has {} labels",
                self.name,
                self.loss.label_count(),
                self.loss.label_count(),
                self.safety.label_count()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain_a() -> MarkovSource {
        MarkovSource::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn step_distribution_examples() {
        let a = chain_a();
        assert!(close(&a.step_distribution(0, 1).unwrap(), &[0.9, 0.1], 1e-15));
        assert_eq!(a.step_distribution(0, 0).unwrap(), vec![1.0, 0.0]);
        // 0.9*0.9 + 0.1*0.2, 0.9*0.1 + 0.1*0.8
        assert!(close(&a.step_distribution(0, 2).unwrap(), &[0.83, 0.17], 1e-14));
    }

    #[test]
    fn step_distribution_range_errors() {
        let a = chain_a();
        assert!(matches!(a.step_distribution(2, 1), Err(Error::Range { what: "state", .. })));
        assert!(matches!(a.step_distribution(0, 251), Err(Error::Range { what: "delta", .. })));
        let small = chain_a().with_delta_bound(3).unwrap();
        assert!(small.step_distribution(0, 3).is_ok());
        assert!(small.step_distribution(0, 4).is_err());
    }

    #[test]
    fn safety_distribution_examples() {
        let a = chain_a();
        let d = a.safety_distribution(&SafetyMap::identity(2), 0, 2).unwrap();
        assert!(close(&d, &[0.83, 0.17], 1e-14));
        let d = a.safety_distribution(&SafetyMap::constant(2), 1, 7).unwrap();
        assert!(close(&d, &[1.0], 1e-12));

        let rows = build_row_chain(20, 0.3, 0.3).unwrap();
        let bands = SafetyMap::row_bands(20, 1, &[6, 13]).unwrap();
        // row 7 is index 6
        let d = rows.safety_distribution(&bands, 6, 1).unwrap();
        assert!(close(&d, &[0.3, 0.7, 0.0], 1e-15));
    }

    #[test]
    fn stationary_examples() {
        let pi = chain_a().stationary_distribution().unwrap();
        assert!(close(&pi, &[2.0 / 3.0, 1.0 / 3.0], 1e-10));

        let err = MarkovSource::identity(3).unwrap().with_name("frozen").stationary_distribution();
        match err {
            Err(Error::Convergence { what, detail }) => {
                assert!(what.contains("frozen"));
                assert!(detail.contains("reducible"));
            }
            other => panic!("expected convergence error, got {other:?}"),
        }

        let uniform = MarkovSource::from_flat(4, vec![0.25; 16]).unwrap();
        assert!(close(&uniform.stationary_distribution().unwrap(), &[0.25; 4], 1e-12));
    }

    #[test]
    fn periodic_chain_is_rejected() {
        let flip = MarkovSource::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(flip.period(), 2);
        assert!(flip.stationary_distribution().is_err());
    }

    #[test]
    fn row_chain_examples() {
        let c = build_row_chain(20, 0.3, 0.3).unwrap();
        assert!(close(&c.row(9)[8..11], &[0.3, 0.4, 0.3], 1e-15));
        assert!((c.prob(0, 0) - 0.7).abs() < 1e-15);
        assert!((c.prob(0, 1) - 0.3).abs() < 1e-15);
        assert!((c.prob(19, 19) - 0.7).abs() < 1e-15);
        let slow = build_row_chain(20, 0.05, 0.05).unwrap();
        assert!((slow.prob(10, 10) - 0.9).abs() < 1e-15);

        assert!(build_row_chain(20, 0.6, 0.5).is_err());
        assert!(build_row_chain(20, -0.1, 0.5).is_err());
        assert!(build_row_chain(1, 0.1, 0.1).is_err());
    }

    #[test]
    fn grid_chain_projects_to_row_chain() {
        let motion = GridMotion { up: 0.3, down: 0.3, left: 0.2, right: 0.2 };
        let grid = motion.grid_chain(5, 4).unwrap();
        let rows = motion.row_chain(5).unwrap();
        // Row marginal of one grid step equals one row-chain step.
        for r in 0..5 {
            for c in 0..4 {
                let s = r * 4 + c;
                let mut marginal = [0.0; 5];
                for (t, p) in grid.row(s).iter().enumerate() {
                    marginal[t / 4] += p;
                }
                assert!(close(&marginal, rows.row(r), 1e-12));
            }
        }
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = MarkovSource::new(vec![vec![0.5, 0.49], vec![0.5, 0.5]]).unwrap_err();
        assert!(err.to_string().contains("row 0"));
        assert!(MarkovSource::new(vec![vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_unbiased() {
        let mut flat = vec![0.0; 25];
        for i in 0..5 {
            flat[i * 5 + (i + 1) % 5] = 1.0;
        }
        let shift = MarkovSource::from_flat(5, flat).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(shift.sample_next(3, &mut rng), 4);

        let a = chain_a();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..16).map(|_| a.sample_next(0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));

        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let zeros = (0..n).filter(|_| a.sample_next(0, &mut rng) == 0).count();
        assert!((zeros as f64 / n as f64 - 0.9).abs() < 0.002);
    }

    #[test]
    fn safety_map_validation() {
        assert!(SafetyMap::new(2, vec![0, 1, 2]).is_err());
        let bands = SafetyMap::row_bands(20, 1, &[6, 13]).unwrap();
        assert_eq!(bands.label(5), 0);
        assert_eq!(bands.label(6), 1);
        assert_eq!(bands.label(12), 1);
        assert_eq!(bands.label(13), 2);
        assert!(SafetyMap::row_bands(20, 1, &[13, 6]).is_err());
    }
}
