//! Self-checks against brute-force references.
//!
//! Every check reports a measured statistic next to its threshold; a check
//! passes when the statistic is strictly below the threshold.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{AgentConfig, AgentNets, EpisodicAgent, StepTrace};
use crate::baseline::{GruAgent, GruCell, GruConfig, GruStep};
use crate::env::{EnvConfig, InformantEnv, ProblemInstance, FORWARD};
use crate::error::{Error, Result};
use crate::oracle::{conditional_probability, total_variation, MicroProblem, SequentialSampler, SubsetDistribution};
use crate::reservoir::{MemoryEntry, Reservoir};
use crate::tinynet::{entropy, softmax, Activation, Mlp};

/// Monte Carlo trials per reservoir or sampler distribution check.
pub const TV_TRIALS: usize = 1_000_000;
pub const TV_THRESHOLD: f64 = 0.01;
pub const POSITIONAL_TRIALS: usize = 400_000;
pub const POSITIONAL_THRESHOLD: f64 = 0.02;
pub const OMEGA_STREAMS: usize = 1000;
pub const OMEGA_THRESHOLD: f64 = 1e-9;
pub const ESTIMATOR_TRIALS: usize = 200_000;
pub const Z_THRESHOLD: f64 = 4.0;
pub const GRAD_THRESHOLD: f64 = 1e-4;
/// Sizes `(t, n)` of the reservoir distribution checks.
pub const TV_CASES: [(usize, usize); 3] = [(5, 2), (8, 3), (10, 4)];
pub const WEIGHT_VECTORS_PER_CASE: usize = 5;

const FD_STEP: f64 = 1e-5;
/// Gradients below this magnitude are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Reservoir,
    Gradients,
    Nets,
    Env,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "reservoir" => Suite::Reservoir,
            "gradients" => Suite::Gradients,
            "nets" => Suite::Nets,
            "env" => Suite::Env,
            "all" => Suite::All,
            other => return Err(Error::InvalidConfig(format!("unknown suite {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
        }
    }

    pub fn passed(&self) -> bool {
        self.statistic < self.threshold
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} (threshold {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = match suite {
        Suite::Reservoir => reservoir_suite(&mut rng)?,
        Suite::Gradients => gradients_suite(&mut rng)?,
        Suite::Nets => nets_suite(&mut rng)?,
        Suite::Env => env_suite(&mut rng)?,
        Suite::All => {
            let mut all = reservoir_suite(&mut rng)?;
            all.extend(gradients_suite(&mut rng)?);
            all.extend(nets_suite(&mut rng)?);
            all.extend(env_suite(&mut rng)?);
            all
        }
    };
    Ok(Report { checks })
}

pub fn random_weights<R: Rng + ?Sized>(t: usize, rng: &mut R) -> Vec<f64> {
    (0..t).map(|_| rng.random_range(0.05..1.0)).collect()
}

/// Streams `weights` through a fresh reservoir of capacity `n`.
pub fn fill_reservoir<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Result<Reservoir<usize>> {
    let mut r = Reservoir::new(n)?;
    for (t, &w) in weights.iter().enumerate() {
        r.insert(MemoryEntry::new(t, w, t as u64), rng)?;
    }
    Ok(r)
}

/// Total variation between the reservoir's empirical contents and the exact
/// product-weight subset law.
pub fn reservoir_tv<R: Rng + ?Sized>(weights: &[f64], n: usize, trials: usize, rng: &mut R) -> Result<f64> {
    let exact = SubsetDistribution::exact(weights, n)?;
    let mut counts = vec![0usize; exact.subsets().len()];
    let mut set = Vec::with_capacity(n);
    for _ in 0..trials {
        let r = fill_reservoir(weights, n, rng)?;
        set.clear();
        set.extend(r.contents().iter().map(|e| e.payload));
        set.sort_unstable();
        let k = exact
            .index_of(&set)
            .ok_or_else(|| Error::InvalidSubset(format!("{set:?}")))?;
        counts[k] += 1;
    }
    total_variation(&normalize(&counts), exact.probabilities())
}

/// Same as [`reservoir_tv`] for the sequential sampler.
pub fn sequential_tv<R: Rng + ?Sized>(weights: &[f64], n: usize, trials: usize, rng: &mut R) -> Result<f64> {
    let exact = SubsetDistribution::exact(weights, n)?;
    let mut sampler = SequentialSampler::new(weights, n)?;
    let mut counts = vec![0usize; exact.subsets().len()];
    for _ in 0..trials {
        let mut set = sampler.sample(rng);
        set.sort_unstable();
        let k = exact
            .index_of(&set)
            .ok_or_else(|| Error::InvalidSubset(format!("{set:?}")))?;
        counts[k] += 1;
    }
    total_variation(&normalize(&counts), exact.probabilities())
}

/// Total variation between the law of the reservoir's ordered buffer and the
/// product of sequential-selection conditionals.
pub fn positional_tv<R: Rng + ?Sized>(weights: &[f64], n: usize, trials: usize, rng: &mut R) -> Result<f64> {
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..trials {
        let r = fill_reservoir(weights, n, rng)?;
        let key: Vec<usize> = r.contents().iter().map(|e| e.payload).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    let tuples = ordered_tuples(weights.len(), n);
    let exact: Vec<f64> = tuples
        .iter()
        .map(|tuple| {
            (0..n)
                .map(|i| conditional_probability(weights, n, &tuple[..i], tuple[i]))
                .product()
        })
        .collect();
    let seen: usize = tuples.iter().map(|t| counts.get(t).copied().unwrap_or(0)).sum();
    if seen != trials {
        return Err(Error::InvalidSubset("reservoir produced a repeated item".into()));
    }
    let empirical: Vec<f64> = tuples
        .iter()
        .map(|t| counts.get(t).copied().unwrap_or(0) as f64 / trials as f64)
        .collect();
    total_variation(&empirical, &exact)
}

fn ordered_tuples(t: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for prefix in &out {
            for c in (0..t).filter(|c| !prefix.contains(c)) {
                let mut p = prefix.clone();
                p.push(c);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn normalize(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

fn elementary(weights: &[f64], k: usize) -> f64 {
    // e_k by the usual recurrence; exact enough for these sizes.
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for &w in weights {
        for j in (1..=k).rev() {
            e[j] += w * e[j - 1];
        }
    }
    e[k]
}

/// Largest relative disagreement between the reservoir's accumulators and
/// their brute-force values over one stream, checked after every insert
/// once the reservoir is full.
pub fn omega_error<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Result<f64> {
    let mut r = Reservoir::new(n)?;
    let mut worst = 0.0f64;
    for (t, &w) in weights.iter().enumerate() {
        r.insert(MemoryEntry::new(t, w, t as u64), rng)?;
        if !r.is_full() {
            continue;
        }
        let scale = 2f64.powi(r.rescale_exponent());
        let mut remaining: Vec<usize> = (0..=t).collect();
        for i in 0..=n {
            let pool: Vec<f64> = remaining.iter().map(|&j| weights[j]).collect();
            let omega = elementary(&pool, n - i) * scale;
            worst = worst.max(relative(r.omega()[i], omega));
            if i < n {
                let tilde = elementary(&pool, n - i - 1) * scale;
                worst = worst.max(relative(r.omega_tilde()[i], tilde));
                let fixed = r.contents()[i].payload;
                remaining.retain(|&j| j != fixed);
            }
        }
    }
    Ok(worst)
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// `|a - b| / max(|a|, |b|, 1e-3)`.
pub fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Worst [`gradient_error`] of `analytic` against central differences of
/// `loss` with respect to `params`.
pub fn finite_difference_error<F>(params: &mut [f64], analytic: &[f64], mut loss: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let orig = params[k];
        params[k] = orig + FD_STEP;
        let up = loss(params);
        params[k] = orig - FD_STEP;
        let down = loss(params);
        params[k] = orig;
        worst = worst.max(gradient_error(analytic[k], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

const MLP_SHAPES: [&[(usize, Activation)]; 5] = [
    &[(10, Activation::Tanh), (1, Activation::Tanh)],
    &[(10, Activation::Tanh), (10, Activation::Tanh), (3, Activation::Softmax)],
    &[(10, Activation::Tanh), (7, Activation::Tanh)],
    &[(10, Activation::Tanh), (1, Activation::Sigmoid)],
    &[(6, Activation::Sigmoid), (4, Activation::Identity)],
];

/// Gradient check of `<c, f(x)>` for `count` random networks cycling over
/// the agent's shapes. Checks parameter and input gradients.
pub fn mlp_gradient_error<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..count {
        let shape = MLP_SHAPES[k % MLP_SHAPES.len()];
        let input_dim = rng.random_range(2..10);
        let mut net = Mlp::new(input_dim, shape, rng)?;
        let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let c: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, cache) = net.forward(&x)?;
        let (grads, dx) = net.backward(&cache, &c)?;
        let objective = |net: &Mlp, x: &[f64]| -> f64 {
            let y = net.predict(x).expect("shapes fixed");
            y.iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let mut params = net.params().to_vec();
        worst = worst.max(finite_difference_error(&mut params, grads.as_slice(), |p| {
            net.params_mut().copy_from_slice(p);
            objective(&net, &x)
        }));
        net.params_mut().copy_from_slice(&params);
        let mut xs = x.clone();
        worst = worst.max(finite_difference_error(&mut xs, &dx, |x| objective(&net, x)));
    }
    Ok(worst)
}

/// Gradient check of `<c, h_T>` through a `steps`-long GRU unroll.
pub fn gru_unroll_error<R: Rng + ?Sized>(steps: usize, rng: &mut R) -> Result<f64> {
    let (input_dim, hidden) = (7, 10);
    let mut cell = GruCell::new(input_dim, hidden, rng)?;
    for p in cell.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let xs: Vec<Vec<f64>> = (0..steps)
        .map(|_| (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let c: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
    let unroll = |cell: &GruCell| -> Result<(Vec<f64>, Vec<_>)> {
        let mut h = vec![0.0; hidden];
        let mut tape = Vec::new();
        for x in &xs {
            let (next, cache) = cell.step(&h, x)?;
            tape.push(cache);
            h = next;
        }
        Ok((h, tape))
    };
    let (_, tape) = unroll(&cell)?;
    let grads = cell.bptt(&tape, &c);
    let mut params = cell.params().to_vec();
    Ok(finite_difference_error(&mut params, grads.as_slice(), |p| {
        cell.params_mut().copy_from_slice(p);
        let (h, _) = unroll(&cell).expect("shapes fixed");
        h.iter().zip(&c).map(|(a, b)| a * b).sum()
    }))
}

/// Gradient check of the recurrent learner's combined policy loss
/// `-δ log π(a | S_T ⊕ h_T) - β H(π)` over a `steps`-long episode prefix,
/// for GRU and policy parameters.
pub fn gru_policy_error<R: Rng + ?Sized>(steps: usize, rng: &mut R) -> Result<f64> {
    let env = EnvConfig::new(10, 3, 2, 1000)?;
    let config = GruConfig {
        entropy: 0.05,
        ..GruConfig::default()
    };
    let mut agent = GruAgent::new(config, env, rng)?;
    let states: Vec<Vec<f64>> = (0..steps)
        .map(|_| (0..env.state_width()).map(|_| f64::from(rng.random_range(0..2u8))).collect())
        .collect();
    let mut hidden = Vec::new();
    for s in &states {
        hidden = agent.observe(s)?.0;
    }
    let step = GruStep {
        state: states[steps - 1].clone(),
        hidden,
        action: rng.random_range(0..env.actions),
        delta: rng.random_range(-1.0..1.0),
    };
    let grads = agent.gradients(agent.tape(), &step)?;
    let beta = config.entropy;
    let loss = |agent: &GruAgent| -> f64 {
        let mut h = vec![0.0; config.hidden];
        for s in &states {
            h = agent.cell().step(&h, s).expect("shapes fixed").0;
        }
        let mut input = step.state.clone();
        input.extend(&h);
        let probs = agent.policy().predict(&input).expect("shapes fixed");
        -step.delta * probs[step.action].ln() - beta * entropy(&probs)
    };
    let mut cell_params = agent.cell().params().to_vec();
    let cell_err = finite_difference_error(&mut cell_params, grads.cell.as_slice(), |p| {
        agent.cell_mut().params_mut().copy_from_slice(p);
        loss(&agent)
    });
    agent.cell_mut().params_mut().copy_from_slice(&cell_params);
    let mut policy_params = agent.policy().params().to_vec();
    let policy_err = finite_difference_error(&mut policy_params, grads.policy.as_slice(), |p| {
        agent.policy_mut().params_mut().copy_from_slice(p);
        loss(&agent)
    });
    Ok(cell_err.max(policy_err))
}

/// Worst gradient errors of the episodic learner's four surrogate losses,
/// in the order value, policy, query (with temperature), write.
pub fn agent_gradient_errors<R: Rng + ?Sized>(rng: &mut R) -> Result<[f64; 4]> {
    let env = EnvConfig::new(10, 3, 2, 1000)?;
    let config = AgentConfig {
        memory: 3,
        ..AgentConfig::default()
    };
    let width = env.state_width();
    let mut nets = AgentNets::new(width, env.actions, config.hidden, rng.random_range(0.5..2.0), rng)?;
    let bits = |rng: &mut R| -> Vec<f64> { (0..width).map(|_| f64::from(rng.random_range(0..2u8))).collect() };
    let state = bits(rng);
    let memory: Vec<Vec<f64>> = (0..3).map(|_| bits(rng)).collect();
    let memory_weights: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..0.95)).collect();
    let (query_vector, recall) = nets.query_distribution(&state, &memory)?;
    let recalled = rng.random_range(0..3);
    let action = rng.random_range(0..env.actions);
    let trace = StepTrace {
        state: state.clone(),
        memory: memory.clone(),
        memory_weights: memory_weights.clone(),
        recalled,
        query_prob: recall[recalled],
        query_vector,
        action,
        action_prob: nets.policy_probs(&state, &memory[recalled])?[action],
        written_weight: 0.5,
        reward: 0.0,
        v_now: 0.0,
        v_next: 0.0,
        delta: rng.random_range(-1.0..1.0),
    };
    let delta = trace.delta;
    let grads = EpisodicAgent::with_nets(config, env, nets.clone())?.gradients(&trace)?;

    let value_loss = |n: &AgentNets| -delta * n.value.predict(&state).expect("shapes")[0];
    let policy_loss = |n: &AgentNets| {
        let mut input = state.clone();
        input.extend(&memory[recalled]);
        -delta * n.policy.predict(&input).expect("shapes")[action].ln()
    };
    let query_loss = |n: &AgentNets| {
        let q = n.query.predict(&state).expect("shapes");
        let scores: Vec<f64> = memory
            .iter()
            .map(|m| m.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / n.tau)
            .collect();
        -delta * softmax(&scores)[recalled].ln()
    };
    let write_loss =
        |n: &AgentNets| -delta * n.write.predict(&memory[recalled]).expect("shapes")[0] / memory_weights[recalled];

    let mut errors = [0.0; 4];
    macro_rules! check_net {
        ($slot:expr, $field:ident, $grad:expr, $loss:expr) => {{
            let mut params = nets.$field.params().to_vec();
            $slot = finite_difference_error(&mut params, $grad.as_slice(), |p| {
                nets.$field.params_mut().copy_from_slice(p);
                $loss(&nets)
            });
            nets.$field.params_mut().copy_from_slice(&params);
        }};
    }
    check_net!(errors[0], value, grads.value, value_loss);
    check_net!(errors[1], policy, grads.policy, policy_loss);
    check_net!(errors[2], query, grads.query, query_loss);
    check_net!(errors[3], write, grads.write, write_loss);
    let mut tau = [nets.tau];
    let tau_err = finite_difference_error(&mut tau, &[grads.tau], |t| {
        nets.tau = t[0];
        query_loss(&nets)
    });
    errors[2] = errors[2].max(tau_err);
    Ok(errors)
}

fn reservoir_suite<R: Rng + ?Sized>(rng: &mut R) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (t, n) in TV_CASES {
        for v in 0..WEIGHT_VECTORS_PER_CASE {
            let w = random_weights(t, rng);
            checks.push(Check::new(
                format!("reservoir TV t={t} n={n} #{v}"),
                reservoir_tv(&w, n, TV_TRIALS, rng)?,
                TV_THRESHOLD,
            ));
            checks.push(Check::new(
                format!("sequential sampler TV t={t} n={n} #{v}"),
                sequential_tv(&w, n, TV_TRIALS, rng)?,
                TV_THRESHOLD,
            ));
        }
    }
    let w = random_weights(6, rng);
    checks.push(Check::new(
        "positional law t=6 n=3",
        positional_tv(&w, 3, POSITIONAL_TRIALS, rng)?,
        POSITIONAL_THRESHOLD,
    ));
    let mut worst = 0.0f64;
    for _ in 0..OMEGA_STREAMS {
        let n = rng.random_range(1..=4);
        let t = rng.random_range(n..=12);
        worst = worst.max(omega_error(&random_weights(t, rng), n, rng)?);
    }
    checks.push(Check::new("omega bookkeeping", worst, OMEGA_THRESHOLD));
    Ok(checks)
}

/// Estimator checks on `problems` random single-slot problems and as many
/// multi-slot ones. Yields one `|z|` per (problem, candidate).
pub fn estimator_checks<R: Rng + ?Sized>(problems: usize, trials: usize, rng: &mut R) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for p in 0..problems {
        let candidates = rng.random_range(2..=5);
        let problem = MicroProblem::random(rng, candidates, 3, 1)?;
        for i in 0..candidates {
            let est = problem.estimator_mean_single(i, trials, rng)?;
            checks.push(Check::new(
                format!("single-state estimator problem {p} state {i} |z|"),
                est.z_score(problem.exact_grad(i)),
                Z_THRESHOLD,
            ));
        }
    }
    for p in 0..problems {
        let candidates = rng.random_range(3..=5);
        let memory = rng.random_range(2..candidates);
        let problem = MicroProblem::random(rng, candidates, 3, memory)?;
        for i in 0..candidates {
            let est = problem.estimator_mean_all(i, trials, rng)?;
            checks.push(Check::new(
                format!("all-states estimator problem {p} (n={memory}) state {i} |z|"),
                est.all_states.z_score(problem.exact_grad(i)),
                Z_THRESHOLD,
            ));
        }
    }
    Ok(checks)
}

fn gradients_suite<R: Rng + ?Sized>(rng: &mut R) -> Result<Vec<Check>> {
    let mut checks = estimator_checks(5, ESTIMATOR_TRIALS, rng)?;
    let mut worst = [0.0f64; 4];
    for _ in 0..5 {
        for (w, e) in worst.iter_mut().zip(agent_gradient_errors(rng)?) {
            *w = w.max(e);
        }
    }
    for (name, e) in ["value", "policy", "query", "write"].iter().zip(worst) {
        checks.push(Check::new(format!("{name} loss gradient"), e, GRAD_THRESHOLD));
    }
    checks.push(Check::new(
        "recurrent policy loss gradient, 3 steps",
        gru_policy_error(3, rng)?,
        GRAD_THRESHOLD,
    ));
    Ok(checks)
}

fn nets_suite<R: Rng + ?Sized>(rng: &mut R) -> Result<Vec<Check>> {
    Ok(vec![
        Check::new("mlp gradients, 20 networks", mlp_gradient_error(20, rng)?, GRAD_THRESHOLD),
        Check::new("gru unroll gradient, 5 steps", gru_unroll_error(5, rng)?, GRAD_THRESHOLD),
    ])
}

/// Number of action sequences that earn a reward minus one, summed over
/// layouts with `A <= 4`, `D <= 3`. Zero when each layout has exactly one.
pub fn rewarding_sequence_excess<R: Rng + ?Sized>(rng: &mut R) -> Result<usize> {
    let mut excess = 0;
    for actions in 2..=4usize {
        for decisions in 1..=3usize {
            let config = EnvConfig::new(4, actions, decisions, 1000)?;
            let inst = ProblemInstance::generate(&config, rng)?;
            let mut rewarded = 0usize;
            for code in 0..actions.pow(decisions as u32) {
                let mut env = InformantEnv::new(inst.clone());
                for _ in 0..=config.length {
                    env.step(FORWARD)?;
                }
                let mut reward = 0.0;
                for k in 0..decisions {
                    let a = code / actions.pow(k as u32) % actions;
                    reward = env.step(a)?.reward;
                }
                rewarded += usize::from(reward == 1.0);
            }
            excess += rewarded.abs_diff(1);
        }
    }
    Ok(excess)
}

/// `|mean - A^-D| / SE` for a uniformly random policy.
pub fn random_policy_z<R: Rng + ?Sized>(config: &EnvConfig, episodes: usize, rng: &mut R) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut env = InformantEnv::new(ProblemInstance::generate(config, rng)?);
        loop {
            let out = env.step(rng.random_range(0..config.actions))?;
            if !out.state.is_well_formed(config) {
                return Err(Error::InvalidConfig("malformed state".into()));
            }
            if out.done() {
                total += out.reward;
                break;
            }
        }
    }
    let p = config.random_return();
    let se = (p * (1.0 - p) / episodes as f64).sqrt();
    Ok((total / episodes as f64 - p).abs() / se)
}

fn env_suite<R: Rng + ?Sized>(rng: &mut R) -> Result<Vec<Check>> {
    let mut checks = vec![Check::new(
        "extra rewarding sequences",
        rewarding_sequence_excess(rng)? as f64,
        0.5,
    )];
    for d in [1, 2] {
        let config = EnvConfig::new(10, 3, d, 1000)?;
        checks.push(Check::new(
            format!("random policy return D={d} |z|"),
            random_policy_z(&config, 20_000, rng)?,
            3.0,
        ));
    }
    Ok(checks)
}
