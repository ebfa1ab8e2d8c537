//! Exact enumeration of the product-weight n-subset distribution and the
//! sequential sampler built from its conditionals.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};

/// All `k`-subsets of `0..t` as sorted index lists, in lexicographic order.
pub fn combinations(t: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > t {
        return out;
    }
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        // Rightmost index that can still advance.
        let Some(pos) = (0..k).rev().find(|&p| current[p] < t - k + p) else {
            return out;
        };
        current[pos] += 1;
        for q in pos + 1..k {
            current[q] = current[q - 1] + 1;
        }
    }
}

/// Sum over all `k`-subsets of `candidates` of the product of their weights,
/// by direct enumeration. The empty subset contributes 1.
pub fn subset_product_sum(weights: &[f64], candidates: &[usize], k: usize) -> f64 {
    combinations(candidates.len(), k)
        .iter()
        .map(|subset| subset.iter().map(|&j| weights[candidates[j]]).product::<f64>())
        .sum()
}

fn check_weights(weights: &[f64]) -> Result<()> {
    match weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        Some(&w) => Err(Error::InvalidWeight(w)),
        None => Ok(()),
    }
}

/// The exact law over n-subsets of `0..weights.len()`.
#[derive(Debug, Clone)]
pub struct SubsetDistribution {
    weights: Vec<f64>,
    subset_size: usize,
    subsets: Vec<Vec<usize>>,
    probabilities: Vec<f64>,
}

impl SubsetDistribution {
    pub fn exact(weights: &[f64], subset_size: usize) -> Result<Self> {
        check_weights(weights)?;
        if subset_size > weights.len() {
            return Err(Error::InvalidSubset(format!(
                "subset size {subset_size} exceeds {} items",
                weights.len()
            )));
        }
        let subsets = combinations(weights.len(), subset_size);
        let products: Vec<f64> = subsets
            .iter()
            .map(|s| s.iter().map(|&i| weights[i]).product())
            .collect();
        let total: f64 = products.iter().sum();
        Ok(Self {
            weights: weights.to_vec(),
            subset_size,
            subsets,
            probabilities: products.iter().map(|p| p / total).collect(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn subset_size(&self) -> usize {
        self.subset_size
    }

    /// Subsets in lexicographic order; aligned with [`Self::probabilities`].
    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Position of a sorted subset in [`Self::subsets`].
    pub fn index_of(&self, sorted_subset: &[usize]) -> Option<usize> {
        self.subsets
            .binary_search_by(|s| s.as_slice().cmp(sorted_subset))
            .ok()
    }

    /// Draws one subset index by inverse CDF.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.probabilities.len() - 1
    }

    /// Normalised histogram of `samples` (unsorted subsets are accepted)
    /// over this distribution's support.
    pub fn empirical<'a, I>(&self, samples: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut counts = vec![0u64; self.subsets.len()];
        let mut total = 0u64;
        let mut key = Vec::with_capacity(self.subset_size);
        for s in samples {
            key.clear();
            key.extend_from_slice(s);
            key.sort_unstable();
            let k = self
                .index_of(&key)
                .ok_or_else(|| Error::InvalidSubset(format!("{key:?} is not in the support")))?;
            counts[k] += 1;
            total += 1;
        }
        Ok(normalize_counts(&counts, total))
    }
}

pub(crate) fn normalize_counts(counts: &[u64], total: u64) -> Vec<f64> {
    let total = total.max(1) as f64;
    counts.iter().map(|&c| c as f64 / total).collect()
}

/// Probability of `subset` under the product-weight n-subset law with
/// `n = subset.len()`.
pub fn subset_probability(weights: &[f64], subset: &[usize]) -> Result<f64> {
    check_weights(weights)?;
    let n = subset.len();
    if n > weights.len() {
        return Err(Error::InvalidSubset(format!(
            "subset size {n} exceeds {} items",
            weights.len()
        )));
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.last().is_some_and(|&i| i >= weights.len()) {
        return Err(Error::InvalidSubset(format!("{subset:?} has repeated or out-of-range indices")));
    }
    let all: Vec<usize> = (0..weights.len()).collect();
    let numerator: f64 = subset.iter().map(|&i| weights[i]).product();
    Ok(numerator / subset_product_sum(weights, &all, n))
}

/// Probability that the next pick (position `prefix.len()`) is `candidate`,
/// given the already chosen `prefix`, when drawing an ordered n-vector
/// member by member.
pub fn conditional_probability(weights: &[f64], n: usize, prefix: &[usize], candidate: usize) -> f64 {
    let i = prefix.len();
    let remaining: Vec<usize> = (0..weights.len()).filter(|j| !prefix.contains(j)).collect();
    if !remaining.contains(&candidate) {
        return 0.0;
    }
    let after: Vec<usize> = remaining.iter().copied().filter(|&j| j != candidate).collect();
    weights[candidate] * subset_product_sum(weights, &after, n - i - 1)
        / ((n - i) as f64 * subset_product_sum(weights, &remaining, n - i))
}

/// Draws ordered vectors of `n` distinct indices one member at a time with
/// [`conditional_probability`]. Conditionals are cached per prefix set.
#[derive(Debug, Clone)]
pub struct SequentialSampler {
    weights: Vec<f64>,
    n: usize,
    // prefix bitmask -> (candidate, cumulative probability)
    cache: HashMap<u64, Vec<(usize, f64)>>,
}

impl SequentialSampler {
    pub fn new(weights: &[f64], n: usize) -> Result<Self> {
        check_weights(weights)?;
        if n > weights.len() {
            return Err(Error::InvalidSubset(format!(
                "subset size {n} exceeds {} items",
                weights.len()
            )));
        }
        if weights.len() > 64 {
            return Err(Error::InvalidSubset("at most 64 items can be enumerated".into()));
        }
        Ok(Self {
            weights: weights.to_vec(),
            n,
            cache: HashMap::new(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        let mut chosen = Vec::with_capacity(self.n);
        let mut mask = 0u64;
        for _ in 0..self.n {
            let (weights, n) = (&self.weights, self.n);
            let table = self.cache.entry(mask).or_insert_with(|| {
                let mut acc = 0.0;
                (0..weights.len())
                    .filter(|j| mask & (1 << j) == 0)
                    .map(|j| {
                        acc += conditional_probability(weights, n, &chosen, j);
                        (j, acc)
                    })
                    .collect()
            });
            let u: f64 = rng.random();
            // Round-off can leave the last cumulative value a hair below 1.
            let pick = table
                .iter()
                .find(|&&(_, c)| u < c)
                .unwrap_or_else(|| table.last().expect("a candidate remains"))
                .0;
            chosen.push(pick);
            mask |= 1 << pick;
        }
        chosen
    }
}

/// One draw from [`SequentialSampler`].
pub fn sequential_sample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    Ok(SequentialSampler::new(weights, n)?.sample(rng))
}

/// Half the L1 distance between two distributions over the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
