//! Weighted n-subset reservoir sampling.
//!
//! After `t >= n` items have been streamed, the set of retained items is a
//! sample from the distribution over n-subsets of `{0, .., t-1}` in which a
//! subset's probability is proportional to the product of its weights.
//!
//! Each insert walks the buffer once. The new item starts in a one-slot
//! carry buffer; at position `i` the carry is swapped with the stored item
//! with a probability chosen so that the item at `i`, conditioned on the
//! items before it, again has the sequential-selection law for the enlarged
//! stream. Whatever is left in the carry afterwards is evicted.
//!
//! Two accumulators make the swap probabilities O(1) each:
//!
//! * `omega[i]` is the sum, over all (n-i)-subsets of the candidates not yet
//!   fixed at positions `0..i`, of the product of their weights;
//! * `omega_tilde[i]` is the same sum over (n-i-1)-subsets.
//!
//! Both are only defined up to a common positive factor. When their range
//! drifts towards the limits of `f64` they are multiplied by a power of two;
//! the swap probabilities only use ratios, so sampling is unaffected.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

const RESCALE_HIGH: f64 = 1e100;
const RESCALE_LOW: f64 = 1e-100;

/// A stored item together with the weight it was written with.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry<T> {
    pub payload: T,
    pub weight: f64,
    pub time_index: u64,
}

impl<T> MemoryEntry<T> {
    pub fn new(payload: T, weight: f64, time_index: u64) -> Self {
        Self {
            payload,
            weight,
            time_index,
        }
    }
}

/// What happened to the reservoir during one insert.
#[derive(Debug, Clone, PartialEq)]
pub enum InsertOutcome<T> {
    /// Fill phase: the entry was appended at `position`.
    Filled { position: usize },
    /// The new entry was retained. The carry buffer first swapped at
    /// `first_swap` and `evicted` is what it finally pushed out.
    Swapped {
        first_swap: usize,
        evicted: MemoryEntry<T>,
    },
    /// No swap happened; the reservoir is unchanged and the new entry was
    /// dropped.
    Rejected(MemoryEntry<T>),
}

#[derive(Debug, Clone)]
pub struct Reservoir<T> {
    capacity: usize,
    entries: Vec<MemoryEntry<T>>,
    omega: Vec<f64>,
    omega_tilde: Vec<f64>,
    count: u64,
    rescale_exponent: i32,
    low: f64,
    high: f64,
}

impl<T> Reservoir<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        Self::with_rescale_bounds(capacity, RESCALE_LOW, RESCALE_HIGH)
    }

    /// Like [`Reservoir::new`] but rescales whenever an accumulator leaves
    /// `[low, high]`. Tight bounds force frequent rescaling in tests.
    pub fn with_rescale_bounds(capacity: usize, low: f64, high: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::ZeroCapacity);
        }
        if !(low > 0.0 && high > low && high.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rescale bounds [{low}, {high}] are not a valid positive range"
            )));
        }
        Ok(Self {
            capacity,
            entries: Vec::with_capacity(capacity),
            omega: vec![0.0; capacity + 1],
            omega_tilde: vec![0.0; capacity],
            count: 0,
            rescale_exponent: 0,
            low,
            high,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of items streamed so far.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_full(&self) -> bool {
        self.count >= self.capacity as u64
    }

    /// Current entries in buffer order.
    pub fn contents(&self) -> &[MemoryEntry<T>] {
        &self.entries
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn omega_tilde(&self) -> &[f64] {
        &self.omega_tilde
    }

    /// Net power of two applied to the accumulators; `omega[n]` equals
    /// `2^rescale_exponent`.
    pub fn rescale_exponent(&self) -> i32 {
        self.rescale_exponent
    }

    /// Drops all entries and returns to the fill phase.
    pub fn clear(&mut self) {
        self.entries.clear();
        self.omega.iter_mut().for_each(|x| *x = 0.0);
        self.omega_tilde.iter_mut().for_each(|x| *x = 0.0);
        self.count = 0;
        self.rescale_exponent = 0;
    }

    pub fn insert<R: Rng + ?Sized>(
        &mut self,
        entry: MemoryEntry<T>,
        rng: &mut R,
    ) -> Result<InsertOutcome<T>> {
        if entry.time_index != self.count {
            return Err(Error::OutOfOrder {
                expected: self.count,
                got: entry.time_index,
            });
        }
        if !(entry.weight > 0.0 && entry.weight.is_finite()) {
            return Err(Error::InvalidWeight(entry.weight));
        }

        let n = self.capacity;
        if self.entries.len() < n {
            let position = self.entries.len();
            self.entries.push(entry);
            self.count += 1;
            if self.entries.len() == n {
                self.entries.shuffle(rng);
                self.initialize_accumulators();
                self.rescale_if_needed();
            }
            return Ok(InsertOutcome::Filled { position });
        }

        let mut carry = entry;
        let mut first_swap = None;
        for i in 0..n {
            let w = carry.weight;
            let (grown, next_grown) = self.grown_pair(i, w);
            let p = swap_probability(grown, next_grown, self.omega[i], self.omega[i + 1]);
            if rng.random::<f64>() < p {
                std::mem::swap(&mut carry, &mut self.entries[i]);
                first_swap.get_or_insert(i);
            }
            self.omega[i] = grown;
        }
        self.rebuild_omega_tilde();
        self.count += 1;
        self.rescale_if_needed();

        Ok(match first_swap {
            Some(first_swap) => InsertOutcome::Swapped {
                first_swap,
                evicted: carry,
            },
            None => InsertOutcome::Rejected(carry),
        })
    }

    /// Swap probability at each position for an item of weight `new_weight`,
    /// assuming no earlier position swapped.
    pub fn swap_probabilities(&self, new_weight: f64) -> Result<Vec<f64>> {
        if !self.is_full() {
            return Err(Error::NotFull {
                count: self.count,
                capacity: self.capacity,
            });
        }
        if !(new_weight > 0.0 && new_weight.is_finite()) {
            return Err(Error::InvalidWeight(new_weight));
        }
        Ok((0..self.capacity)
            .map(|i| {
                let (grown, next_grown) = self.grown_pair(i, new_weight);
                swap_probability(grown, next_grown, self.omega[i], self.omega[i + 1])
            })
            .collect())
    }

    /// Rescales the accumulators by a power of two when their range has
    /// left the configured bounds. Returns the applied exponent.
    pub fn rescale_if_needed(&mut self) -> i32 {
        if !self.is_full() {
            return 0;
        }
        let (min, max) = self
            .omega
            .iter()
            .chain(&self.omega_tilde)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if min >= self.low && max <= self.high {
            return 0;
        }
        // Centre the log-range on 1.
        let shift = -((min.log2() + max.log2()) / 2.0).round() as i32;
        if shift != 0 {
            self.scale_accumulators(shift);
        }
        shift
    }

    pub(crate) fn scale_accumulators(&mut self, exponent: i32) {
        let factor = 2f64.powi(exponent);
        self.omega.iter_mut().for_each(|x| *x *= factor);
        self.omega_tilde.iter_mut().for_each(|x| *x *= factor);
        self.rescale_exponent += exponent;
    }

    /// `omega'` and `omega''` at position `i` for a carry of weight `w`.
    fn grown_pair(&self, i: usize, w: f64) -> (f64, f64) {
        let n = self.capacity;
        let grown = self.omega[i] + w * self.omega_tilde[i];
        let next_grown = if i == n - 1 {
            self.omega[n]
        } else {
            self.omega[i + 1] + w * self.omega_tilde[i + 1]
        };
        (grown, next_grown)
    }

    fn initialize_accumulators(&mut self) {
        let n = self.capacity;
        self.rescale_exponent = 0;
        self.omega[n] = 1.0;
        for i in (0..n).rev() {
            self.omega[i] = self.entries[i].weight * self.omega[i + 1];
        }
        self.omega_tilde[n - 1] = 1.0;
        self.rebuild_omega_tilde();
    }

    fn rebuild_omega_tilde(&mut self) {
        let n = self.capacity;
        for i in (0..n.saturating_sub(1)).rev() {
            self.omega_tilde[i] = self.omega[i + 1] + self.entries[i].weight * self.omega_tilde[i + 1];
        }
    }
}

/// `1 - (omega'' * omega[i]) / (omega' * omega[i+1])`, evaluated as a product
/// of two ratios so wide accumulator ranges cannot overflow, and clamped
/// against round-off.
fn swap_probability(grown: f64, next_grown: f64, at: f64, next: f64) -> f64 {
    (1.0 - (next_grown / grown) * (at / next)).clamp(0.0, 1.0)
}
