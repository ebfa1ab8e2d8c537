//! Single-decision problems small enough to enumerate, used to check the
//! write-weight gradient estimators against finite differences.
//!
//! A problem has a handful of past states with write weights, a memory of
//! size `n` drawn from the product-weight subset law over them, a query rule
//! that picks one stored state, a policy table conditioned on the recalled
//! state, and a deterministic reward per action. The episode ends after one
//! action, so the expected return is a finite sum and a perfect critic is
//! just that sum.

use rand::Rng;

use super::subset::SubsetDistribution;
use crate::error::{Error, Result};

const MAX_CANDIDATES: usize = 6;
const MAX_ACTIONS: usize = 3;
const FD_STEP: f64 = 1e-5;

/// How the recalled state is chosen from the memory set.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryTable {
    /// Softmax over the per-candidate scores of the stored states.
    Softmax(Vec<f64>),
    /// Always recall the stored state with the highest score (lowest index
    /// on ties).
    Greedy(Vec<f64>),
}

impl QueryTable {
    fn scores(&self) -> &[f64] {
        match self {
            QueryTable::Softmax(s) | QueryTable::Greedy(s) => s,
        }
    }

    /// Recall probabilities aligned with `memory`.
    pub fn probabilities(&self, memory: &[usize]) -> Vec<f64> {
        let scores = self.scores();
        match self {
            QueryTable::Softmax(_) => {
                let max = memory.iter().map(|&j| scores[j]).fold(f64::NEG_INFINITY, f64::max);
                let exp: Vec<f64> = memory.iter().map(|&j| (scores[j] - max).exp()).collect();
                let total: f64 = exp.iter().sum();
                exp.into_iter().map(|e| e / total).collect()
            }
            QueryTable::Greedy(_) => {
                let best = memory
                    .iter()
                    .enumerate()
                    .fold(0, |b, (k, &j)| if scores[j] > scores[memory[b]] { k } else { b });
                (0..memory.len()).map(|k| if k == best { 1.0 } else { 0.0 }).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroProblem {
    pub weights: Vec<f64>,
    pub memory: usize,
    pub query: QueryTable,
    /// `policy[k][a]`: probability of action `a` when state `k` is recalled.
    pub policy: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_sums(sum: f64, sum_sq: f64, trials: usize) -> Self {
        let n = trials as f64;
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
        Self {
            mean,
            std_error: (var / n).sqrt(),
        }
    }

    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.mean - target).abs();
        if self.std_error == 0.0 {
            return if diff == 0.0 { 0.0 } else { f64::INFINITY };
        }
        diff / self.std_error
    }
}

/// Means of the estimators that credit every stored state and only the
/// recalled state, plus their paired difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryEstimates {
    pub all_states: Estimate,
    pub queried_item: Estimate,
    pub gap: Estimate,
}

impl MicroProblem {
    pub fn new(
        weights: Vec<f64>,
        memory: usize,
        query: QueryTable,
        policy: Vec<Vec<f64>>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        let c = weights.len();
        if c == 0 || c > MAX_CANDIDATES {
            return Err(Error::InvalidConfig(format!("{c} candidates, expected 1..={MAX_CANDIDATES}")));
        }
        if memory == 0 || memory > c {
            return Err(Error::InvalidConfig(format!("memory size {memory} with {c} candidates")));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidWeight(w));
        }
        let a = rewards.len();
        if a == 0 || a > MAX_ACTIONS {
            return Err(Error::InvalidConfig(format!("{a} actions, expected 1..={MAX_ACTIONS}")));
        }
        if query.scores().len() != c {
            return Err(Error::DimensionMismatch {
                expected: c,
                got: query.scores().len(),
            });
        }
        if policy.len() != c {
            return Err(Error::DimensionMismatch {
                expected: c,
                got: policy.len(),
            });
        }
        for row in &policy {
            if row.len() != a {
                return Err(Error::DimensionMismatch {
                    expected: a,
                    got: row.len(),
                });
            }
            if row.iter().any(|p| *p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!("policy row {row:?} is not a distribution")));
            }
        }
        Ok(Self {
            weights,
            memory,
            query,
            policy,
            rewards,
        })
    }

    /// A problem with random weights in `[0.1, 1]`, random policy rows,
    /// softmax query scores in `[-2, 2]` and rewards in `[0, 1]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, candidates: usize, actions: usize, memory: usize) -> Result<Self> {
        let weights = (0..candidates).map(|_| rng.random_range(0.1..=1.0)).collect();
        let scores = (0..candidates).map(|_| rng.random_range(-2.0..=2.0)).collect();
        let policy = (0..candidates)
            .map(|_| {
                let raw: Vec<f64> = (0..actions).map(|_| rng.random_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|p| p / total).collect()
            })
            .collect();
        let rewards = (0..actions).map(|_| rng.random_range(0.0..=1.0)).collect();
        Self::new(weights, memory, QueryTable::Softmax(scores), policy, rewards)
    }

    pub fn candidates(&self) -> usize {
        self.weights.len()
    }

    /// Expected reward when state `k` is recalled.
    pub fn recalled_return(&self, k: usize) -> f64 {
        self.policy[k].iter().zip(&self.rewards).map(|(p, r)| p * r).sum()
    }

    pub fn exact_expected_return(&self) -> f64 {
        self.expected_return_with(&self.weights)
    }

    /// Expected return by enumeration over memory sets, recalls and actions,
    /// with the memory law renormalised for `weights`.
    pub fn expected_return_with(&self, weights: &[f64]) -> f64 {
        let dist = SubsetDistribution::exact(weights, self.memory).expect("validated weights");
        dist.subsets()
            .iter()
            .zip(dist.probabilities())
            .map(|(memory, p_memory)| {
                let recall = self.query.probabilities(memory);
                p_memory
                    * memory
                        .iter()
                        .zip(&recall)
                        .map(|(&k, q)| q * self.recalled_return(k))
                        .sum::<f64>()
            })
            .sum()
    }

    /// Central finite-difference derivative of the expected return with
    /// respect to weight `i`.
    pub fn exact_grad(&self, i: usize) -> f64 {
        let mut up = self.weights.clone();
        let mut down = self.weights.clone();
        up[i] += FD_STEP;
        down[i] -= FD_STEP;
        (self.expected_return_with(&up) - self.expected_return_with(&down)) / (2.0 * FD_STEP)
    }

    fn sample_action<R: Rng + ?Sized>(&self, recalled: usize, rng: &mut R) -> usize {
        sample_categorical(&self.policy[recalled], rng)
    }

    /// Mean of `delta / w_i` on trials where state `i` is in the one-slot
    /// memory (zero otherwise), with a perfect critic.
    pub fn estimator_mean_single<R: Rng + ?Sized>(&self, i: usize, trials: usize, rng: &mut R) -> Result<Estimate> {
        if self.memory != 1 {
            return Err(Error::InvalidConfig(format!(
                "single-state estimator needs memory size 1, got {}",
                self.memory
            )));
        }
        let baseline = self.exact_expected_return();
        let total: f64 = self.weights.iter().sum();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..trials {
            let stored = sample_scaled(&self.weights, total, rng);
            let action = self.sample_action(stored, rng);
            let delta = self.rewards[action] - baseline;
            let g = if stored == i { delta / self.weights[i] } else { 0.0 };
            sum += g;
            sum_sq += g * g;
        }
        Ok(Estimate::from_sums(sum, sum_sq, trials))
    }

    /// Means of the all-states estimator (credit `delta / w_i` whenever state
    /// `i` is stored) and the queried-item estimator (only when it is also
    /// recalled), from the same trials.
    pub fn estimator_mean_all<R: Rng + ?Sized>(&self, i: usize, trials: usize, rng: &mut R) -> Result<MemoryEstimates> {
        let dist = SubsetDistribution::exact(&self.weights, self.memory)?;
        let recalls: Vec<Vec<f64>> = dist.subsets().iter().map(|m| self.query.probabilities(m)).collect();
        let baseline = self.exact_expected_return();
        let mut sums = [0.0f64; 6];
        for _ in 0..trials {
            let k = dist.sample_index(rng);
            let memory = &dist.subsets()[k];
            let recalled = memory[sample_categorical(&recalls[k], rng)];
            let action = self.sample_action(recalled, rng);
            let credit = (self.rewards[action] - baseline) / self.weights[i];
            let all = if memory.contains(&i) { credit } else { 0.0 };
            let queried = if recalled == i { credit } else { 0.0 };
            let gap = all - queried;
            for (s, v) in sums.chunks_mut(2).zip([all, queried, gap]) {
                s[0] += v;
                s[1] += v * v;
            }
        }
        Ok(MemoryEstimates {
            all_states: Estimate::from_sums(sums[0], sums[1], trials),
            queried_item: Estimate::from_sums(sums[2], sums[3], trials),
            gap: Estimate::from_sums(sums[4], sums[5], trials),
        })
    }

    /// Same problem with every reward multiplied by `c`.
    pub fn with_scaled_rewards(&self, c: f64) -> Self {
        Self {
            rewards: self.rewards.iter().map(|r| r * c).collect(),
            ..self.clone()
        }
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    sample_scaled(probs, 1.0, rng)
}

fn sample_scaled<R: Rng + ?Sized>(masses: &[f64], total: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, m) in masses.iter().enumerate() {
        acc += m;
        if u < acc {
            return k;
        }
    }
    masses.len() - 1
}
