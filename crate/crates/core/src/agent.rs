//! The episodic-memory learner.
//!
//! Four small networks share one TD error `δ = r + V(S') - V(S)`:
//!
//! * value `V(S)`, trained on `δ²` through `V(S)` only;
//! * policy `π(a | S ⊕ m)`, conditioned on the current state and one
//!   recalled state `m`;
//! * query `q(S)`, which picks `m` from memory with probability
//!   `softmax_j(<q(S), m_j> / τ)`;
//! * write `w(S)`, whose output is the state's reservoir weight.
//!
//! Each step the current state is written first, then memory is queried and
//! an action is sampled. The write network is trained only on the recalled
//! state: it ascends `δ / w_stored · ∂w(m)`, where `w_stored` is the weight
//! `m` was written with and the derivative comes from a fresh pass of the
//! current network.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::env::{EnvConfig, InformantEnv, ProblemInstance, StateClass};
use crate::error::{Error, Result};
use crate::reservoir::{MemoryEntry, Reservoir};
use crate::tinynet::{dot, log_prob_logit_grad, softmax, Activation, GradientBundle, Mlp, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    /// Reservoir capacity `n`.
    pub memory: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub tau_init: f64,
    pub tau_min: f64,
    pub weight_min: f64,
    pub weight_max: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            memory: 1,
            hidden: 10,
            learning_rate: 0.005,
            tau_init: 1.0,
            tau_min: 0.01,
            weight_min: 1e-3,
            weight_max: 1.0 - 1e-3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::InvalidConfig("memory capacity must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidConfig("hidden width must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.tau_min > 0.0 && self.tau_init >= self.tau_min) {
            return Err(Error::InvalidConfig("temperature must start above its floor".into()));
        }
        if !(0.0 < self.weight_min && self.weight_min < self.weight_max && self.weight_max <= 1.0) {
            return Err(Error::InvalidConfig("bad write-weight clamp".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub value: Mlp,
    pub policy: Mlp,
    pub query: Mlp,
    pub write: Mlp,
    pub tau: f64,
}

impl AgentNets {
    /// Initializes value, policy, query and write networks in that order.
    pub fn new<R: Rng + ?Sized>(width: usize, actions: usize, hidden: usize, tau: f64, rng: &mut R) -> Result<Self> {
        use Activation::*;
        Ok(Self {
            value: Mlp::new(width, &[(hidden, Tanh), (1, Tanh)], rng)?,
            policy: Mlp::new(2 * width, &[(hidden, Tanh), (hidden, Tanh), (actions, Softmax)], rng)?,
            query: Mlp::new(width, &[(hidden, Tanh), (width, Tanh)], rng)?,
            write: Mlp::new(width, &[(hidden, Tanh), (1, Sigmoid)], rng)?,
            tau,
        })
    }

    pub fn width(&self) -> usize {
        self.value.input_dim()
    }

    pub fn value_of(&self, state: &[f64]) -> Result<f64> {
        Ok(self.value.predict(state)?[0])
    }

    /// Raw write-network output.
    pub fn write_output(&self, state: &[f64]) -> Result<f64> {
        Ok(self.write.predict(state)?[0])
    }

    /// Query vector and the recall distribution over `memory`.
    pub fn query_distribution(&self, state: &[f64], memory: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        if memory.is_empty() {
            return Err(Error::EmptyMemory);
        }
        let q = self.query.predict(state)?;
        let scores: Vec<f64> = memory.iter().map(|m| dot(&q, m) / self.tau).collect();
        Ok((q, softmax(&scores)))
    }

    pub fn policy_probs(&self, state: &[f64], recalled: &[f64]) -> Result<Vec<f64>> {
        self.policy.predict(&concat(state, recalled))
    }
}

/// Everything one update needs about one step, frozen at acting time.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub state: Vec<f64>,
    /// Memory payloads visible to the query.
    pub memory: Vec<Vec<f64>>,
    /// Weights the memory payloads were written with.
    pub memory_weights: Vec<f64>,
    pub recalled: usize,
    pub query_prob: f64,
    pub query_vector: Vec<f64>,
    pub action: usize,
    pub action_prob: f64,
    /// Clamped weight the current state was written with.
    pub written_weight: f64,
    pub reward: f64,
    pub v_now: f64,
    pub v_next: f64,
    pub delta: f64,
}

impl StepTrace {
    pub fn recalled_state(&self) -> &[f64] {
        &self.memory[self.recalled]
    }

    pub fn stored_weight(&self) -> f64 {
        self.memory_weights[self.recalled]
    }
}

/// Descent directions for each parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentGradients {
    pub value: GradientBundle,
    pub policy: GradientBundle,
    pub query: GradientBundle,
    pub write: GradientBundle,
    pub tau: f64,
}

/// `r + V(S') - V(S)` with `V(S') = 0` at episode end.
pub fn td_error(reward: f64, v_next: f64, v_now: f64, terminal: bool) -> f64 {
    reward + if terminal { 0.0 } else { v_next } - v_now
}

/// Per-decision averages of query-vector components over one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryDiagnostics {
    pub info: f64,
    pub uninfo: f64,
    pub ids: Vec<f64>,
}

/// Summary of one training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub ret: f64,
    pub steps: usize,
    pub truncated: bool,
    /// Mean written weight over informative chain steps, if any.
    pub w_informative: Option<f64>,
    pub w_uninformative: Option<f64>,
    /// One entry per decision state, `None` if it was never visited or the
    /// learner has no query network.
    pub query: Vec<Option<QueryDiagnostics>>,
}

impl EpisodeMetrics {
    pub fn without_memory(ret: f64, steps: usize, truncated: bool, decisions: usize) -> Self {
        Self {
            ret,
            steps,
            truncated,
            w_informative: None,
            w_uninformative: None,
            query: vec![None; decisions],
        }
    }
}

#[derive(Debug, Default, Clone)]
pub(crate) struct MeanAccumulator {
    sum: Vec<f64>,
    count: usize,
}

impl MeanAccumulator {
    pub(crate) fn push(&mut self, values: &[f64]) {
        if self.sum.is_empty() {
            self.sum = vec![0.0; values.len()];
        }
        self.sum.iter_mut().zip(values).for_each(|(s, v)| *s += v);
        self.count += 1;
    }

    pub(crate) fn mean(&self) -> Option<Vec<f64>> {
        (self.count > 0).then(|| self.sum.iter().map(|s| s / self.count as f64).collect())
    }
}

pub struct EpisodicAgent {
    config: AgentConfig,
    env: EnvConfig,
    nets: AgentNets,
    reservoir: Reservoir<Vec<f64>>,
    optimizers: [OptimizerState; 4],
}

impl EpisodicAgent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, env: EnvConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        env.validate()?;
        let nets = AgentNets::new(env.state_width(), env.actions, config.hidden, config.tau_init, rng)?;
        Self::with_nets(config, env, nets)
    }

    pub fn with_nets(config: AgentConfig, env: EnvConfig, nets: AgentNets) -> Result<Self> {
        config.validate()?;
        env.validate()?;
        if nets.width() != env.state_width() || nets.policy.output_dim() != env.actions {
            return Err(Error::DimensionMismatch {
                expected: env.state_width(),
                got: nets.width(),
            });
        }
        let sgd = OptimizerState::sgd(config.learning_rate)?;
        Ok(Self {
            config,
            env,
            nets,
            reservoir: Reservoir::new(config.memory)?,
            optimizers: [sgd.clone(), sgd.clone(), sgd.clone(), sgd],
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn nets(&self) -> &AgentNets {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut AgentNets {
        &mut self.nets
    }

    pub fn reservoir(&self) -> &Reservoir<Vec<f64>> {
        &self.reservoir
    }

    pub fn reset_memory(&mut self) {
        self.reservoir.clear();
    }

    /// Write-network output clamped to the allowed weight range.
    pub fn write_weight(&self, state: &[f64]) -> Result<f64> {
        Ok(self
            .nets
            .write_output(state)?
            .clamp(self.config.weight_min, self.config.weight_max))
    }

    /// Samples a memory entry. Returns its index, the recall distribution and
    /// the query vector.
    pub fn query_memory<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<(usize, Vec<f64>, Vec<f64>)> {
        let memory: Vec<Vec<f64>> = self.reservoir.contents().iter().map(|e| e.payload.clone()).collect();
        let (q, probs) = self.nets.query_distribution(state, &memory)?;
        let index = sample_categorical(&probs, rng)?;
        Ok((index, probs, q))
    }

    /// Writes `state` (stream position `time`), queries, and samples an
    /// action. The returned trace still lacks reward, values and `δ`.
    pub fn act<R: Rng + ?Sized>(&mut self, state: &[f64], time: u64, rng: &mut R) -> Result<StepTrace> {
        let written_weight = self.write_weight(state)?;
        self.reservoir
            .insert(MemoryEntry::new(state.to_vec(), written_weight, time), rng)?;
        let (memory, memory_weights): (Vec<Vec<f64>>, Vec<f64>) =
            self.reservoir.contents().iter().map(|e| (e.payload.clone(), e.weight)).unzip();
        let (recalled, probs, query_vector) = self.query_memory(state, rng)?;
        let policy = self.nets.policy_probs(state, &memory[recalled])?;
        let action = sample_categorical(&policy, rng)?;
        Ok(StepTrace {
            state: state.to_vec(),
            memory,
            memory_weights,
            recalled,
            query_prob: probs[recalled],
            query_vector,
            action,
            action_prob: policy[action],
            written_weight,
            reward: 0.0,
            v_now: 0.0,
            v_next: 0.0,
            delta: 0.0,
        })
    }

    /// Fills in reward, value estimates and `δ`. `next` is `None` when the
    /// episode ended, terminally or by truncation.
    pub fn complete_trace(&self, trace: &mut StepTrace, reward: f64, next: Option<&[f64]>) -> Result<()> {
        trace.reward = reward;
        trace.v_now = self.nets.value_of(&trace.state)?;
        trace.v_next = match next {
            Some(s) => self.nets.value_of(s)?,
            None => 0.0,
        };
        trace.delta = td_error(reward, trace.v_next, trace.v_now, next.is_none());
        Ok(())
    }

    /// Descent gradients of the four surrogate losses at the current
    /// parameters, holding `δ` fixed.
    pub fn gradients(&self, trace: &StepTrace) -> Result<AgentGradients> {
        let nets = &self.nets;
        let delta = trace.delta;

        let (_, cache) = nets.value.forward(&trace.state)?;
        let (value, _) = nets.value.backward(&cache, &[-delta])?;

        let (probs, cache) = nets.policy.forward(&concat(&trace.state, trace.recalled_state()))?;
        let mut logit_grad = log_prob_logit_grad(&probs, trace.action);
        logit_grad.iter_mut().for_each(|g| *g *= -delta);
        let (policy, _) = nets.policy.backward_logits(&cache, &logit_grad)?;

        let (q, cache) = nets.query.forward(&trace.state)?;
        let scores: Vec<f64> = trace.memory.iter().map(|m| dot(&q, m) / nets.tau).collect();
        let recall = softmax(&scores);
        let width = q.len();
        let mut expected = vec![0.0; width];
        for (m, p) in trace.memory.iter().zip(&recall) {
            expected.iter_mut().zip(m).for_each(|(e, x)| *e += p * x);
        }
        let q_grad: Vec<f64> = trace
            .recalled_state()
            .iter()
            .zip(&expected)
            .map(|(m, e)| -delta * (m - e) / nets.tau)
            .collect();
        let (query, _) = nets.query.backward(&cache, &q_grad)?;
        let mean_score: f64 = scores.iter().zip(&recall).map(|(s, p)| s * p).sum();
        let tau = delta * (scores[trace.recalled] - mean_score) / nets.tau;

        let (_, cache) = nets.write.forward(trace.recalled_state())?;
        let (write, _) = nets.write.backward(&cache, &[-delta / trace.stored_weight()])?;

        Ok(AgentGradients {
            value,
            policy,
            query,
            write,
            tau,
        })
    }

    pub fn apply(&mut self, grads: &AgentGradients) {
        let [v, p, q, w] = &mut self.optimizers;
        self.nets.value.step(&grads.value, v);
        self.nets.policy.step(&grads.policy, p);
        self.nets.query.step(&grads.query, q);
        self.nets.write.step(&grads.write, w);
        self.nets.tau = (self.nets.tau - self.config.learning_rate * grads.tau).max(self.config.tau_min);
    }

    pub fn update(&mut self, trace: &StepTrace) -> Result<()> {
        let grads = self.gradients(trace)?;
        self.apply(&grads);
        Ok(())
    }

    /// Generates an instance and trains on one episode of it.
    pub fn run_episode<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EpisodeMetrics> {
        let instance = ProblemInstance::generate(&self.env, rng)?;
        self.run_instance(instance, rng)
    }

    pub fn run_instance<R: Rng + ?Sized>(&mut self, instance: ProblemInstance, rng: &mut R) -> Result<EpisodeMetrics> {
        self.reset_memory();
        let env_config = self.env;
        let mut env = InformantEnv::new(instance);
        let mut state = env.observe().to_f64();
        let mut informative = MeanAccumulator::default();
        let mut uninformative = MeanAccumulator::default();
        let mut query = vec![MeanAccumulator::default(); env_config.decisions];
        let mut ret = 0.0;
        let mut time = 0u64;
        loop {
            let position = env.position();
            let class = env.class();
            let mut trace = self.act(&state, time, rng)?;
            match class {
                StateClass::Informative => informative.push(&[trace.written_weight]),
                StateClass::Uninformative => uninformative.push(&[trace.written_weight]),
                StateClass::Decision => {
                    if let crate::env::Position::Decision(j) = position {
                        query[j - 1].push(&query_components(&env_config, &trace.query_vector));
                    }
                }
                StateClass::Start => {}
            }
            let out = env.step(trace.action)?;
            ret += out.reward;
            let next = out.state.to_f64();
            self.complete_trace(&mut trace, out.reward, (!out.done()).then_some(next.as_slice()))?;
            self.update(&trace)?;
            time += 1;
            if out.done() {
                return Ok(EpisodeMetrics {
                    ret,
                    steps: env.steps(),
                    truncated: out.truncated,
                    w_informative: informative.mean().map(|m| m[0]),
                    w_uninformative: uninformative.mean().map(|m| m[0]),
                    query: query
                        .iter()
                        .map(|acc| {
                            acc.mean().map(|m| QueryDiagnostics {
                                info: m[0],
                                uninfo: m[1],
                                ids: m[2..].to_vec(),
                            })
                        })
                        .collect(),
                });
            }
            state = next;
        }
    }
}

/// Informative bit, uninformative bit, then the identifier bits.
fn query_components(env: &EnvConfig, q: &[f64]) -> Vec<f64> {
    let mut out = vec![q[env.info_bit()], q[env.uninfo_bit()]];
    out.extend((0..env.decisions).map(|k| q[env.id_bit(k)]));
    out
}

pub(crate) fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let dist = WeightedIndex::new(probs).map_err(|e| Error::InvalidConfig(format!("bad distribution: {e}")))?;
    Ok(dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(memory: usize, decisions: usize, lr: f64, seed: u64) -> (EpisodicAgent, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = AgentConfig {
            memory,
            learning_rate: lr,
            ..AgentConfig::default()
        };
        let env = EnvConfig::new(10, 3, decisions, 1000).unwrap();
        (EpisodicAgent::new(config, env, &mut rng).unwrap(), rng)
    }

    #[test]
    fn td_error_examples() {
        assert!((td_error(1.0, 123.0, 0.3, true) - 0.7).abs() < 1e-15);
        assert_eq!(td_error(0.0, 0.4, 0.4, false), 0.0);
        assert!((td_error(0.0, 0.5, 0.2, false) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn query_distribution_examples() {
        let (a, _) = agent(2, 1, 0.0, 0);
        let mut nets = a.nets().clone();
        // Make the query output constant: zero weights, bias atanh(0.5).
        nets.query.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let last = nets.query.num_layers() - 1;
        nets.query.layer_bias_mut(last).iter_mut().for_each(|b| *b = 0.5f64.atanh());
        let width = nets.width();
        let s = vec![0.0; width];
        let mut m1 = vec![0.0; width];
        m1[0] = 2.0;
        let m0 = vec![0.0; width];
        let (_, probs) = nets.query_distribution(&s, &[m1.clone(), m0.clone()]).unwrap();
        let e = std::f64::consts::E;
        assert!((probs[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((probs[0] - 0.7311).abs() < 1e-4);
        let (_, flat) = nets.query_distribution(&s, &[m0.clone(), m0.clone(), m0.clone()]).unwrap();
        assert!(flat.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
        nets.tau = 1e9;
        let (_, hot) = nets.query_distribution(&s, &[m1, m0]).unwrap();
        assert!((hot[0] - 0.5).abs() < 1e-8);
        assert!(matches!(nets.query_distribution(&s, &[]), Err(Error::EmptyMemory)));
    }

    #[test]
    fn first_step_recalls_the_current_state() {
        let (mut a, mut rng) = agent(3, 1, 0.005, 1);
        let s = vec![0.0; 8];
        let trace = a.act(&s, 0, &mut rng).unwrap();
        assert_eq!(trace.memory, vec![s.clone()]);
        assert_eq!(trace.recalled, 0);
        assert_eq!(trace.query_prob, 1.0);
    }

    #[test]
    fn memory_is_bounded_by_capacity() {
        let (mut a, mut rng) = agent(3, 1, 0.005, 2);
        for t in 0..11 {
            let s: Vec<f64> = (0..8).map(|i| f64::from(u8::from((i + t) % 3 == 0))).collect();
            let trace = a.act(&s, t as u64, &mut rng).unwrap();
            assert_eq!(trace.memory.len(), (t + 1).min(3));
        }
    }

    #[test]
    fn dominant_logit_is_chosen() {
        let (mut a, mut rng) = agent(1, 1, 0.0, 3);
        let nets = a.nets_mut();
        nets.policy.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let last = nets.policy.num_layers() - 1;
        nets.policy.layer_bias_mut(last).copy_from_slice(&[0.0, 20.0, 0.0]);
        let s = vec![0.0; 8];
        let mut picked = 0;
        for t in 0..10_000 {
            if t % 50 == 0 {
                a.reset_memory();
            }
            let trace = a.act(&s, (t % 50) as u64, &mut rng).unwrap();
            picked += usize::from(trace.action == 1);
        }
        assert!(picked as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn zero_delta_updates_nothing() {
        let (mut a, mut rng) = agent(2, 1, 0.1, 4);
        let s = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let mut trace = a.act(&s, 0, &mut rng).unwrap();
        trace.delta = 0.0;
        let before = a.nets().clone();
        a.update(&trace).unwrap();
        assert_eq!(a.nets(), &before);
    }

    #[test]
    fn positive_delta_raises_recalled_write_weight() {
        let (mut a, mut rng) = agent(1, 1, 0.05, 5);
        let s = vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let mut trace = a.act(&s, 0, &mut rng).unwrap();
        trace.delta = 0.5;
        let before = a.nets().write_output(trace.recalled_state()).unwrap();
        a.update(&trace).unwrap();
        let after = a.nets().write_output(trace.recalled_state()).unwrap();
        assert!(after > before);
        trace.delta = -0.5;
        a.update(&trace).unwrap();
        assert!(a.nets().write_output(trace.recalled_state()).unwrap() < after);
    }

    #[test]
    fn tau_respects_floor() {
        let (mut a, mut rng) = agent(2, 1, 100.0, 6);
        let s = vec![0.0; 8];
        let s2 = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        a.act(&s, 0, &mut rng).unwrap();
        let mut trace = a.act(&s2, 1, &mut rng).unwrap();
        for delta in [5.0, -5.0, 5.0, -5.0] {
            trace.delta = delta;
            a.update(&trace).unwrap();
            assert!(a.nets().tau >= 0.01);
        }
    }

    #[test]
    fn episode_invariants() {
        let (mut a, mut rng) = agent(3, 2, 0.005, 7);
        for _ in 0..50 {
            let m = a.run_episode(&mut rng).unwrap();
            assert!(m.ret == 0.0 || m.ret == 1.0);
            assert!(m.steps >= 13);
            assert!(a.nets().tau >= 0.01);
            for e in a.reservoir().contents() {
                assert!((1e-3..=1.0 - 1e-3).contains(&e.weight));
            }
            assert_eq!(m.query.len(), 2);
            assert!(m.query.iter().all(|q| q.as_ref().is_some_and(|q| q.ids.len() == 2)));
        }
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let (mut a, mut rng) = agent(3, 2, 0.0, 8);
        let before = a.nets().clone();
        for _ in 0..20 {
            a.run_episode(&mut rng).unwrap();
        }
        assert_eq!(a.nets(), &before);
    }
}
