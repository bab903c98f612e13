//! Loss matrices, Bayes-optimal label estimators and L-conditional entropy.
//!
//! For a loss `L(y, y_hat)` the generalized entropy of a label law `P` is
//! `H_L(P) = min_{y_hat} sum_y P(y) L(y, y_hat)`; the minimizer is the
//! optimal estimate. [`build_tables`] evaluates both for every
//! `(AoI, last observation)` pair of a source, which gives the per-slot
//! penalty `q(delta, x)` and the receiver's estimator `f(delta, x)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::AgentClassSpec;

pub const SAFE: usize = 0;
pub const CAUTIOUS: usize = 1;
pub const DANGEROUS: usize = 2;

const DIST_SUM_TOL: f64 = 1e-9;

/// `entries[y * labels + y_hat] = L(y, y_hat)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossMatrix {
    labels: usize,
    entries: Vec<f64>,
}

impl LossMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let labels = rows.len();
        if labels == 0 {
            return Err(Error::validation("loss matrix has no rows"));
        }
        let mut entries = Vec::with_capacity(labels * labels);
        for (y, row) in rows.into_iter().enumerate() {
            if row.len() != labels {
                return Err(Error::validation(format!(
                    "loss row {y} has {} entries, expected {labels}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::validation(format!("loss row {y} has non-finite entry {v}")));
            }
            entries.extend(row);
        }
        Ok(Self { labels, entries })
    }

    /// Indicator of `y != y_hat`.
    pub fn zero_one(labels: usize) -> Self {
        let labels = labels.max(1);
        let entries = (0..labels * labels)
            .map(|i| if i / labels == i % labels { 0.0 } else { 1.0 })
            .collect();
        Self { labels, entries }
    }

    /// `(v_y - v_y_hat)^2` over the supplied label values.
    pub fn quadratic(values: &[f64]) -> Result<Self> {
        let rows = values
            .iter()
            .map(|a| values.iter().map(|b| (a - b) * (a - b)).collect())
            .collect();
        Self::new(rows)
    }

    /// Asymmetric safety loss over (safe, cautious, dangerous): missing a
    /// dangerous situation is far costlier than a false alarm.
    pub fn safety_example() -> Self {
        let mut m = Self::zero_one(3);
        m.entries.iter_mut().for_each(|v| *v = 0.0);
        m.set(DANGEROUS, SAFE, 1000.0);
        m.set(SAFE, DANGEROUS, 5.0);
        m.set(CAUTIOUS, SAFE, 10.0);
        m.set(SAFE, CAUTIOUS, 1.0);
        m.set(CAUTIOUS, DANGEROUS, 5.0);
        m.set(DANGEROUS, CAUTIOUS, 100.0);
        m
    }

    fn set(&mut self, y: usize, y_hat: usize, v: f64) {
        self.entries[y * self.labels + y_hat] = v;
    }

    pub fn label_count(&self) -> usize {
        self.labels
    }

    pub fn get(&self, y: usize, y_hat: usize) -> f64 {
        self.entries[y * self.labels + y_hat]
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            labels: self.labels,
            entries: self.entries.iter().map(|v| v * c).collect(),
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks_exact(self.labels).map(<[f64]>::to_vec).collect()
    }

    /// Expected loss of answering `y_hat` when the label follows `dist`.
    pub fn expected_loss(&self, dist: &[f64], y_hat: usize) -> f64 {
        dist.iter()
            .enumerate()
            .map(|(y, p)| p * self.entries[y * self.labels + y_hat])
            .sum()
    }
}

/// Bayes-optimal label and the attained expected loss (`H_L` of `dist`).
/// Ties go to the lowest label index.
pub fn optimal_estimate(dist: &[f64], loss: &LossMatrix) -> Result<(usize, f64)> {
    if dist.len() != loss.label_count() {
        return Err(Error::Shape {
            expected: loss.label_count(),
            found: dist.len(),
        });
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > DIST_SUM_TOL {
        return Err(Error::validation(format!("label distribution sums to {sum}")));
    }
    Ok(argmin_expected_loss(dist, loss))
}

fn argmin_expected_loss(dist: &[f64], loss: &LossMatrix) -> (usize, f64) {
    let mut best = (0, loss.expected_loss(dist, 0));
    for y_hat in 1..loss.label_count() {
        let v = loss.expected_loss(dist, y_hat);
        if v < best.1 {
            best = (y_hat, v);
        }
    }
    best
}

/// `H_L(dist)`.
pub fn generalized_entropy(dist: &[f64], loss: &LossMatrix) -> Result<f64> {
    optimal_estimate(dist, loss).map(|(_, v)| v)
}

/// The two sides of "conditioning reduces L-entropy" for one value `z`.
///
/// `side[x] = P(X = x | Z = z)` and `conditional[x] = P(Y | X = x, Z = z)`.
/// Returns `(H_L(Y | Z = z), H_L(Y | X, Z = z))`.
pub fn conditional_entropy_given(
    side: &[f64],
    conditional: &[Vec<f64>],
    loss: &LossMatrix,
) -> Result<(f64, f64)> {
    if side.len() != conditional.len() {
        return Err(Error::Shape {
            expected: side.len(),
            found: conditional.len(),
        });
    }
    let labels = loss.label_count();
    let mut marginal = vec![0.0; labels];
    let mut given_x = 0.0;
    for (w, law) in side.iter().zip(conditional) {
        let h = generalized_entropy(law, loss)?;
        given_x += w * h;
        for (m, p) in marginal.iter_mut().zip(law) {
            *m += w * p;
        }
    }
    let given_z = generalized_entropy(&marginal, loss)?;
    Ok((given_z, given_x))
}

/// `values[(delta - 1) * states + x]`, `delta` in `1..=delta_bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeTable<T> {
    delta_bound: usize,
    states: usize,
    values: Vec<T>,
}

impl<T: Copy> AgeTable<T> {
    pub(crate) fn filled(delta_bound: usize, states: usize, fill: T) -> Self {
        Self {
            delta_bound,
            states,
            values: vec![fill; delta_bound * states],
        }
    }

    pub fn delta_bound(&self) -> usize {
        self.delta_bound
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    /// Entry at `(delta, x)`; `delta` is clamped into `1..=delta_bound`.
    #[inline]
    pub fn get(&self, delta: usize, x: usize) -> T {
        let d = delta.clamp(1, self.delta_bound);
        self.values[(d - 1) * self.states + x]
    }

    pub fn try_get(&self, delta: usize, x: usize) -> Result<T> {
        if delta == 0 || delta > self.delta_bound {
            return Err(Error::Range {
                what: "delta",
                index: delta,
                bound: self.delta_bound,
            });
        }
        if x >= self.states {
            return Err(Error::Range {
                what: "state",
                index: x,
                bound: self.states,
            });
        }
        Ok(self.values[(delta - 1) * self.states + x])
    }

    /// All entries for one AoI value.
    pub fn at_delta(&self, delta: usize) -> &[T] {
        let d = delta.clamp(1, self.delta_bound);
        &self.values[(d - 1) * self.states..d * self.states]
    }

    pub(crate) fn set(&mut self, delta: usize, x: usize, v: T) {
        self.values[(delta - 1) * self.states + x] = v;
    }
}

/// `q(delta, x)`: L-conditional entropy of the current label given the
/// observation `x` received `delta` slots ago.
pub type PenaltyTable = AgeTable<f64>;

/// `f(delta, x)`: Bayes-optimal label estimate for that state.
pub type EstimatorTable = AgeTable<usize>;

/// Tabulates penalty and estimator for every `(delta, x)` up to the bound.
///
/// The label law is propagated one step at a time,
/// `D_delta = P D_{delta-1}` with `D_0` the safety-map indicator, so no
/// full matrix powers are materialized.
pub fn build_tables(class: &AgentClassSpec, delta_bound: usize) -> Result<(PenaltyTable, EstimatorTable)> {
    if delta_bound == 0 {
        return Err(Error::validation("delta_bound must be at least 1"));
    }
    class.validate()?;
    let source = &class.source;
    let states = source.state_count();
    let labels = class.safety.label_count();

    // column-major label law: law[y][x] = P(g(X_delta) = y | X_0 = x)
    let mut law: Vec<Vec<f64>> = (0..labels)
        .map(|y| (0..states).map(|x| f64::from(u8::from(class.safety.label(x) == y))).collect())
        .collect();
    let mut scratch = vec![0.0; states];

    let mut penalty = PenaltyTable::filled(delta_bound, states, 0.0);
    let mut estimator = EstimatorTable::filled(delta_bound, states, 0);
    let mut dist = vec![0.0; labels];
    for delta in 1..=delta_bound {
        for column in law.iter_mut() {
            source.apply(column, &mut scratch);
            column.copy_from_slice(&scratch);
        }
        for x in 0..states {
            for (y, d) in dist.iter_mut().enumerate() {
                *d = law[y][x];
            }
            let (y_hat, h) = argmin_expected_loss(&dist, &class.loss);
            penalty.set(delta, x, h);
            estimator.set(delta, x, y_hat);
        }
    }
    Ok((penalty, estimator))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{MarkovSource, SafetyMap};

    fn chain_a_class(loss: LossMatrix) -> AgentClassSpec {
        let src = MarkovSource::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        AgentClassSpec::new("a", src, SafetyMap::identity(2), loss, 1.0, 1).unwrap()
    }

    #[test]
    fn named_losses() {
        assert_eq!(LossMatrix::zero_one(2).rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(LossMatrix::zero_one(1).rows(), vec![vec![0.0]]);
        let three = LossMatrix::zero_one(3);
        assert_eq!(three.rows().iter().flatten().filter(|&&v| v == 1.0).count(), 6);

        assert_eq!(LossMatrix::quadratic(&[0.0, 1.0]).unwrap().rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(LossMatrix::quadratic(&[0.0, 2.0]).unwrap().rows(), vec![vec![0.0, 4.0], vec![4.0, 0.0]]);
        assert!(LossMatrix::quadratic(&[1.0, 1.0]).unwrap().rows().iter().flatten().all(|&v| v == 0.0));

        let s = LossMatrix::safety_example();
        assert_eq!(s.get(DANGEROUS, SAFE), 1000.0);
        assert_eq!(s.get(SAFE, DANGEROUS), 5.0);
        assert_eq!(s.get(CAUTIOUS, SAFE), 10.0);
        assert_eq!(s.get(SAFE, CAUTIOUS), 1.0);
        assert_eq!(s.get(CAUTIOUS, DANGEROUS), 5.0);
        assert_eq!(s.get(DANGEROUS, CAUTIOUS), 100.0);
        for y in 0..3 {
            assert_eq!(s.get(y, y), 0.0);
        }
    }

    #[test]
    fn rejects_non_finite_loss() {
        assert!(LossMatrix::new(vec![vec![0.0, f64::NAN], vec![1.0, 0.0]]).is_err());
        assert!(LossMatrix::new(vec![vec![0.0, 1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn optimal_estimate_examples() {
        let s = LossMatrix::safety_example();
        let dist = [0.2, 0.3, 0.5];
        assert!((s.expected_loss(&dist, SAFE) - 503.0).abs() < 1e-12);
        assert!((s.expected_loss(&dist, CAUTIOUS) - 50.2).abs() < 1e-12);
        let (y, v) = optimal_estimate(&dist, &s).unwrap();
        assert_eq!(y, DANGEROUS);
        assert!((v - 2.5).abs() < 1e-12);

        assert_eq!(optimal_estimate(&[0.0, 1.0, 0.0], &s).unwrap(), (1, 0.0));

        let (y, v) = optimal_estimate(&[0.83, 0.17], &LossMatrix::zero_one(2)).unwrap();
        assert_eq!(y, 0);
        assert!((v - 0.17).abs() < 1e-15);
    }

    #[test]
    fn optimal_estimate_ties_and_shape() {
        let (y, _) = optimal_estimate(&[0.5, 0.5], &LossMatrix::zero_one(2)).unwrap();
        assert_eq!(y, 0);
        assert!(matches!(
            optimal_estimate(&[1.0], &LossMatrix::zero_one(2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn tables_for_chain_a() {
        let (q, f) = build_tables(&chain_a_class(LossMatrix::zero_one(2)), 250).unwrap();
        assert!((q.get(1, 0) - 0.1).abs() < 1e-15);
        assert_eq!(f.get(1, 0), 0);
        assert!((q.get(2, 0) - 0.17).abs() < 1e-14);
        assert!((q.get(1, 1) - 0.2).abs() < 1e-15);
        // stationary law (2/3, 1/3) under 0-1 loss
        assert!((q.get(250, 0) - 1.0 / 3.0).abs() < 1e-6);
        assert!((q.get(250, 1) - 1.0 / 3.0).abs() < 1e-6);
        assert!(q.try_get(0, 0).is_err());
        assert!(q.try_get(251, 0).is_err());
    }

    #[test]
    fn frozen_source_has_zero_penalty() {
        let class = AgentClassSpec::new(
            "frozen",
            MarkovSource::identity(3).unwrap(),
            SafetyMap::identity(3),
            LossMatrix::safety_example(),
            0.9,
            1,
        )
        .unwrap();
        let (q, _) = build_tables(&class, 40).unwrap();
        for d in 1..=40 {
            assert!(q.at_delta(d).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn tables_agree_with_cached_powers() {
        let src = MarkovSource::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let safety = SafetyMap::new(3, vec![0, 2]).unwrap();
        let class = AgentClassSpec::new("a", src, safety, LossMatrix::safety_example(), 1.0, 1).unwrap();
        let (q, f) = build_tables(&class, 30).unwrap();
        for d in 1..=30 {
            for x in 0..2 {
                let dist = class.source.safety_distribution(&class.safety, x, d).unwrap();
                let (y, v) = optimal_estimate(&dist, &class.loss).unwrap();
                assert_eq!(f.get(d, x), y);
                assert!((q.get(d, x) - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conditioning_examples() {
        let loss = LossMatrix::safety_example();
        let law = vec![0.2, 0.3, 0.5];
        let (lhs, rhs) = conditional_entropy_given(&[0.4, 0.6], &[law.clone(), law], &loss).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);

        let point = |y: usize| (0..3).map(|k| f64::from(u8::from(k == y))).collect::<Vec<_>>();
        let (lhs, rhs) =
            conditional_entropy_given(&[0.3, 0.3, 0.4], &[point(0), point(1), point(2)], &loss).unwrap();
        assert_eq!(rhs, 0.0);
        assert!(lhs >= 0.0);
    }
}
