//! Per-bandit average-cost MDP and the Lagrangian price search.
//!
//! A bandit's state is `(delta, x)`: the AoI of the freshest delivered
//! packet and the source state it carried. For a transmission price
//! `lambda` the relative action values are
//!
//! ```text
//! Q(d, x, passive) = q(d, x) - g + h(d+1, x)
//! Q(d, x, active)  = q(d, x) - g + (1-p) h(d+1, x) + p E[h(1, X_d) | X_0 = x] + lambda
//! ```
//!
//! with `g` the optimal average cost and `d+1` saturating at the AoI bound.
//! The gain index is `Q(passive) - Q(active)`; positive gain means a pull
//! is worth its price.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{AgeTable, PenaltyTable};
use crate::markov::{AgentClassSpec, MarkovSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Span-seminorm tolerance for relative value iteration.
    pub tol: f64,
    pub max_iters: usize,
    /// Weight on the Bellman update per sweep, in `(0, 1]`. Values below one
    /// mix in a self-loop so iteration also settles for periodic policies.
    pub damping: f64,
    /// Dual step scale; iteration `j` uses `beta / j`.
    pub beta: f64,
    /// Slots per relaxed-system evaluation.
    pub eval_horizon: usize,
    pub outer_iters: usize,
    pub delta_bound: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 100_000,
            damping: 0.9,
            beta: 1.0,
            eval_horizon: 20_000,
            outer_iters: 60,
            delta_bound: crate::markov::DEFAULT_DELTA_BOUND,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::validation("solver.tol must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::validation("solver.damping must lie in (0, 1]"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::validation("solver.beta must be positive"));
        }
        if self.eval_horizon == 0 || self.outer_iters == 0 || self.max_iters == 0 {
            return Err(Error::validation("solver iteration counts must be at least 1"));
        }
        if self.delta_bound == 0 {
            return Err(Error::validation("delta_bound must be at least 1"));
        }
        Ok(())
    }
}

/// Converged relative values, action values and gain index at one price.
#[derive(Debug, Clone)]
pub struct BanditSolution {
    pub lambda: f64,
    pub success_prob: f64,
    /// Relative value `h`, zero at the reference state `(1, 0)`.
    pub h: AgeTable<f64>,
    pub q_passive: AgeTable<f64>,
    pub q_active: AgeTable<f64>,
    pub gain: AgeTable<f64>,
    /// Optimal long-run penalty plus price per bandit.
    pub avg_cost: f64,
    pub iterations: usize,
    pub span: f64,
}

impl BanditSolution {
    /// `alpha(delta, x)`, range-checked.
    pub fn gain_index(&self, delta: usize, x: usize) -> Result<f64> {
        self.gain.try_get(delta, x)
    }

    /// Greedy single-bandit action; zero gain counts as passive.
    #[inline]
    pub fn wants_active(&self, delta: usize, x: usize) -> bool {
        self.gain.get(delta, x) > 0.0
    }

    pub fn delta_bound(&self) -> usize {
        self.gain.delta_bound()
    }

    pub fn state_count(&self) -> usize {
        self.gain.state_count()
    }

    /// States where pulling is strictly preferred.
    pub fn active_set(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for d in 1..=self.delta_bound() {
            for x in 0..self.state_count() {
                if self.wants_active(d, x) {
                    out.push((d, x));
                }
            }
        }
        out
    }
}

/// `E[h(1, X_delta) | X_0 = x]` for every `delta`, by repeated `P v`.
fn fresh_value_expectations(source: &MarkovSource, h: &AgeTable<f64>, out: &mut AgeTable<f64>) {
    let n = source.state_count();
    let mut g = h.at_delta(1).to_vec();
    let mut next = vec![0.0; n];
    for delta in 1..=h.delta_bound() {
        source.apply(&g, &mut next);
        std::mem::swap(&mut g, &mut next);
        for (x, v) in g.iter().enumerate() {
            out.set(delta, x, *v);
        }
    }
}

/// Solves the single-bandit MDP at price `lambda` by relative value
/// iteration, starting from `h = 0`.
pub fn relative_value_iteration(
    penalty: &PenaltyTable,
    success_prob: f64,
    lambda: f64,
    source: &MarkovSource,
    settings: &SolverSettings,
) -> Result<BanditSolution> {
    relative_value_iteration_from(penalty, success_prob, lambda, source, settings, None)
}

/// As [`relative_value_iteration`], warm-started from `initial`.
pub fn relative_value_iteration_from(
    penalty: &PenaltyTable,
    success_prob: f64,
    lambda: f64,
    source: &MarkovSource,
    settings: &SolverSettings,
    initial: Option<&AgeTable<f64>>,
) -> Result<BanditSolution> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::validation(format!("price lambda = {lambda} must be finite and >= 0")));
    }
    if !(success_prob > 0.0 && success_prob <= 1.0) {
        return Err(Error::validation(format!("success_prob {success_prob} outside (0, 1]")));
    }
    settings.validate()?;
    let bound = penalty.delta_bound();
    let n = penalty.state_count();
    if source.state_count() != n {
        return Err(Error::Shape {
            expected: n,
            found: source.state_count(),
        });
    }
    let p = success_prob;
    let tau = settings.damping;

    let mut h = match initial {
        Some(init) if init.delta_bound() == bound && init.state_count() == n => init.clone(),
        _ => AgeTable::filled(bound, n, 0.0),
    };
    let mut expect = AgeTable::filled(bound, n, 0.0);
    let mut update = AgeTable::filled(bound, n, 0.0);
    let mut span = f64::INFINITY;

    for iter in 1..=settings.max_iters {
        fresh_value_expectations(source, &h, &mut expect);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for d in 1..=bound {
            let next = (d + 1).min(bound);
            for x in 0..n {
                let stay = h.get(next, x);
                let pull = (1.0 - p) * stay + p * expect.get(d, x) + lambda;
                let t = penalty.get(d, x) + stay.min(pull);
                let diff = t - h.get(d, x);
                lo = lo.min(diff);
                hi = hi.max(diff);
                update.set(d, x, diff);
            }
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Numeric(format!("relative values diverged at sweep {iter}")));
        }
        span = hi - lo;
        if span < settings.tol {
            let avg_cost = 0.5 * (hi + lo);
            return Ok(finish(penalty, &h, &expect, p, lambda, avg_cost, iter, span));
        }
        let offset = h.get(1, 0) + tau * update.get(1, 0);
        for d in 1..=bound {
            for x in 0..n {
                let v = h.get(d, x) + tau * update.get(d, x) - offset;
                h.set(d, x, v);
            }
        }
    }
    Err(Error::Convergence {
        what: format!("relative value iteration (lambda = {lambda})"),
        detail: format!("span {span:e} after {} sweeps", settings.max_iters),
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    penalty: &PenaltyTable,
    h: &AgeTable<f64>,
    expect: &AgeTable<f64>,
    p: f64,
    lambda: f64,
    avg_cost: f64,
    iterations: usize,
    span: f64,
) -> BanditSolution {
    let bound = penalty.delta_bound();
    let n = penalty.state_count();
    let mut q_passive = AgeTable::filled(bound, n, 0.0);
    let mut q_active = AgeTable::filled(bound, n, 0.0);
    let mut gain = AgeTable::filled(bound, n, 0.0);
    for d in 1..=bound {
        let next = (d + 1).min(bound);
        for x in 0..n {
            let base = penalty.get(d, x) - avg_cost;
            let stay = h.get(next, x);
            let passive = base + stay;
            let active = base + (1.0 - p) * stay + p * expect.get(d, x) + lambda;
            q_passive.set(d, x, passive);
            q_active.set(d, x, active);
            gain.set(d, x, passive - active);
        }
    }
    BanditSolution {
        lambda,
        success_prob: p,
        h: h.clone(),
        q_passive,
        q_active,
        gain,
        avg_cost,
        iterations,
        span,
    }
}

/// One row of the price search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualStep {
    pub iteration: usize,
    pub lambda: f64,
    pub activation_rate: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DualTrace {
    pub steps: Vec<DualStep>,
    pub lambda_star: f64,
}

impl DualTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,lambda,activation_rate\n");
        for s in &self.steps {
            out.push_str(&format!("{},{},{}\n", s.iteration, s.lambda, s.activation_rate));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct DualOutcome {
    pub lambda_star: f64,
    pub trace: DualTrace,
    /// One solution per class, in class order, at `lambda_star`.
    pub solutions: Vec<BanditSolution>,
    /// Relaxed-system mean activations per slot at `lambda_star`.
    pub activation_rate: f64,
    /// False when no iterate reached the +/-5% activation band; the best
    /// iterate is returned instead.
    pub in_band: bool,
}

impl DualOutcome {
    /// Lagrangian dual value `sum_n avg_cost_n - lambda M`: a lower bound on
    /// the long-run total penalty of every policy meeting the channel budget.
    pub fn dual_value(&self, classes: &[AgentClassSpec], channels: usize) -> f64 {
        dual_value(classes, &self.solutions, channels)
    }
}

pub fn dual_value(classes: &[AgentClassSpec], solutions: &[BanditSolution], channels: usize) -> f64 {
    let lambda = solutions.first().map_or(0.0, |s| s.lambda);
    classes
        .iter()
        .zip(solutions)
        .map(|(c, s)| c.member_count as f64 * s.avg_cost)
        .sum::<f64>()
        - lambda * channels as f64
}

/// Projected dual subgradient step.
pub fn dual_update(lambda: f64, step: f64, activation_rate: f64, channels: usize) -> f64 {
    (lambda + step * (activation_rate - channels as f64)).max(0.0)
}

const BAND: f64 = 0.05;

fn within_band(lambda: f64, rate: f64, channels: usize) -> bool {
    let m = channels as f64;
    (rate - m).abs() <= BAND * m || (lambda == 0.0 && rate <= m)
}

/// Mean activations per slot when every bandit follows its own greedy
/// policy with no channel coupling.
pub fn relaxed_activation_rate(
    classes: &[AgentClassSpec],
    solutions: &[BanditSolution],
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    let mut jobs = Vec::new();
    for (c, class) in classes.iter().enumerate() {
        for _ in 0..class.member_count {
            jobs.push(c);
        }
    }
    let starts: Vec<Vec<f64>> = classes.iter().map(|c| c.source.initial_law()).collect();
    let counts: Vec<u64> = jobs
        .par_iter()
        .enumerate()
        .map(|(stream, &c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream as u64);
            simulate_relaxed_bandit(&classes[c], &solutions[c], &starts[c], horizon, &mut rng)
        })
        .collect();
    let rate = counts.iter().sum::<u64>() as f64 / horizon as f64;
    if !rate.is_finite() {
        return Err(Error::Numeric("activation average is not finite".into()));
    }
    Ok(rate)
}

fn simulate_relaxed_bandit(
    class: &AgentClassSpec,
    solution: &BanditSolution,
    start: &[f64],
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> u64 {
    let source = &class.source;
    let mut observed = MarkovSource::sample_from(start, rng);
    let mut truth = source.sample_next(observed, rng);
    let mut delta = 1usize;
    let bound = solution.delta_bound();
    let mut pulls = 0u64;
    for _ in 0..horizon {
        if solution.wants_active(delta, observed) {
            pulls += 1;
            if rng.random::<f64>() < class.success_prob {
                observed = truth;
                delta = 0;
            }
        }
        delta = (delta + 1).min(bound);
        truth = source.sample_next(truth, rng);
    }
    pulls
}

/// Stochastic dual subgradient ascent on the transmission price.
///
/// Each outer iteration solves every class at `lambda(j)`, measures the
/// relaxed activation rate over `eval_horizon` slots and applies
/// `lambda <- max(0, lambda + beta/j (rate - M))`.
pub fn dual_ascent<R: Rng + ?Sized>(
    classes: &[AgentClassSpec],
    penalties: &[PenaltyTable],
    channels: usize,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<DualOutcome> {
    settings.validate()?;
    if classes.is_empty() {
        return Err(Error::validation("dual ascent needs at least one class"));
    }
    if classes.len() != penalties.len() {
        return Err(Error::Shape {
            expected: classes.len(),
            found: penalties.len(),
        });
    }
    if channels == 0 {
        return Err(Error::validation("channel count must be at least 1"));
    }

    let solve_all = |lambda: f64, warm: Option<&[BanditSolution]>| -> Result<Vec<BanditSolution>> {
        classes
            .par_iter()
            .zip(penalties.par_iter())
            .enumerate()
            .map(|(c, (class, penalty))| {
                relative_value_iteration_from(
                    penalty,
                    class.success_prob,
                    lambda,
                    &class.source,
                    settings,
                    warm.map(|w| &w[c].h),
                )
            })
            .collect()
    };

    let mut lambda = 0.0;
    let mut steps = Vec::with_capacity(settings.outer_iters + 1);
    let mut best: Option<(f64, f64, Vec<BanditSolution>)> = None;
    let mut warm: Option<Vec<BanditSolution>> = None;

    for j in 1..=settings.outer_iters + 1 {
        let solutions = solve_all(lambda, warm.as_deref())?;
        let rate = relaxed_activation_rate(classes, &solutions, settings.eval_horizon, rng.random())?;
        steps.push(DualStep {
            iteration: j,
            lambda,
            activation_rate: rate,
        });
        let score = if within_band(lambda, rate, channels) { 0.0 } else { (rate - channels as f64).abs() };
        let better = best.as_ref().is_none_or(|(s, _, _)| score <= *s);
        if j > settings.outer_iters {
            // final iterate: keep it unless an earlier one was strictly closer
            if better {
                best = Some((score, rate, solutions));
            }
            break;
        }
        if better {
            best = Some((score, rate, solutions.clone()));
        }
        let next = dual_update(lambda, settings.beta / j as f64, rate, channels);
        warm = Some(solutions);
        lambda = next;
    }

    let (score, activation_rate, solutions) = best.expect("at least one iterate");
    let lambda_star = solutions[0].lambda;
    Ok(DualOutcome {
        lambda_star,
        trace: DualTrace { steps, lambda_star },
        solutions,
        activation_rate,
        in_band: score == 0.0,
    })
}
