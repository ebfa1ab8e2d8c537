//! Brute-force references for the reservoir sampler and the write-weight
//! gradient estimators. Everything here enumerates, so it only scales to a
//! few dozen items.

mod micro;
mod subset;

pub use micro::{Estimate, MemoryEstimates, MicroProblem, QueryTable};
pub use subset::{
    combinations, conditional_probability, sequential_sample, subset_probability, subset_product_sum,
    total_variation, SequentialSampler, SubsetDistribution,
};
