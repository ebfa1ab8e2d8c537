//! Recurrent baseline: the memory is replaced by a GRU.
//!
//! The policy sees `S_t ⊕ h_t`, where `h_t` is the GRU state after reading
//! `S_0 .. S_t`; the value network sees `S_t` only. Training is online, one
//! update per step, with the policy gradient pushed back through every
//! recurrent step of the episode so far. Updates use RMSProp, a discount of
//! 0.9 and a small entropy bonus. Reported returns are undiscounted.

use rand::Rng;

use crate::agent::{concat, sample_categorical, EpisodeMetrics};
use crate::env::{EnvConfig, InformantEnv, ProblemInstance};
use crate::error::{Error, Result};
use crate::tinynet::{
    dot, entropy_logit_grad, log_prob_logit_grad, sigmoid, Activation, GradientBundle, Mlp, OptimizerState,
};

/// Gated recurrent unit with flat parameters laid out as
/// `W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h`, matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    input_dim: usize,
    hidden: usize,
    params: Vec<f64>,
}

/// Activations of one recurrent step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Gate {
    Update = 0,
    Reset = 1,
    Candidate = 2,
}

impl GruCell {
    pub fn zeros(input_dim: usize, hidden: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidConfig("GRU dimensions must be positive".into()));
        }
        Ok(Self {
            input_dim,
            hidden,
            params: vec![0.0; 3 * hidden * (input_dim + hidden + 1)],
        })
    }

    /// Scaled-uniform input and recurrent weights, zero biases.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut cell = Self::zeros(input_dim, hidden)?;
        let w_limit = (6.0 / (input_dim + hidden) as f64).sqrt();
        let u_limit = (6.0 / (2 * hidden) as f64).sqrt();
        for gate in [Gate::Update, Gate::Reset, Gate::Candidate] {
            let (w, u, _) = cell.ranges(gate);
            for p in &mut cell.params[w] {
                *p = rng.random_range(-w_limit..w_limit);
            }
            for p in &mut cell.params[u] {
                *p = rng.random_range(-u_limit..u_limit);
            }
        }
        Ok(cell)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn ranges(&self, gate: Gate) -> (std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>) {
        let (x, h) = (self.input_dim, self.hidden);
        let block = h * (x + h + 1);
        let w = gate as usize * block;
        let u = w + h * x;
        let b = u + h * h;
        (w..u, u..b, b..b + h)
    }

    /// `W x + U v + b` for one gate.
    fn affine(&self, gate: Gate, x: &[f64], v: &[f64]) -> Vec<f64> {
        let (w, u, b) = self.ranges(gate);
        let w = &self.params[w];
        let u = &self.params[u];
        self.params[b]
            .iter()
            .enumerate()
            .map(|(i, bi)| {
                bi + dot(&w[i * self.input_dim..][..self.input_dim], x) + dot(&u[i * self.hidden..][..self.hidden], v)
            })
            .collect()
    }

    pub fn step(&self, h: &[f64], x: &[f64]) -> Result<(Vec<f64>, GruCache)> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if h.len() != self.hidden {
            return Err(Error::DimensionMismatch {
                expected: self.hidden,
                got: h.len(),
            });
        }
        let z: Vec<f64> = self.affine(Gate::Update, x, h).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = self.affine(Gate::Reset, x, h).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(r, h)| r * h).collect();
        let h_tilde: Vec<f64> = self.affine(Gate::Candidate, x, &rh).into_iter().map(f64::tanh).collect();
        let h_new: Vec<f64> = (0..self.hidden)
            .map(|i| (1.0 - z[i]) * h[i] + z[i] * h_tilde[i])
            .collect();
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            z,
            r,
            h_tilde,
            h: h_new.clone(),
        };
        Ok((h_new, cache))
    }

    /// Backward through one step. Adds parameter gradients into `grads` and
    /// returns the gradient with respect to the previous hidden state.
    pub fn backward_step(&self, cache: &GruCache, dh: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let n = self.hidden;
        let h = &cache.h_prev;
        let mut dh_prev: Vec<f64> = (0..n).map(|i| dh[i] * (1.0 - cache.z[i])).collect();
        let da_z: Vec<f64> = (0..n)
            .map(|i| dh[i] * (cache.h_tilde[i] - h[i]) * cache.z[i] * (1.0 - cache.z[i]))
            .collect();
        let da_h: Vec<f64> = (0..n)
            .map(|i| dh[i] * cache.z[i] * (1.0 - cache.h_tilde[i] * cache.h_tilde[i]))
            .collect();
        let rh: Vec<f64> = cache.r.iter().zip(h).map(|(r, h)| r * h).collect();
        let d_rh = self.accumulate(Gate::Candidate, &da_h, &cache.x, &rh, grads);
        let da_r: Vec<f64> = (0..n)
            .map(|i| d_rh[i] * h[i] * cache.r[i] * (1.0 - cache.r[i]))
            .collect();
        for i in 0..n {
            dh_prev[i] += d_rh[i] * cache.r[i];
        }
        let from_z = self.accumulate(Gate::Update, &da_z, &cache.x, h, grads);
        let from_r = self.accumulate(Gate::Reset, &da_r, &cache.x, h, grads);
        for i in 0..n {
            dh_prev[i] += from_z[i] + from_r[i];
        }
        dh_prev
    }

    /// Parameter gradients of one gate given its pre-activation gradient;
    /// returns `Uᵀ da`.
    fn accumulate(&self, gate: Gate, da: &[f64], x: &[f64], v: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let (w, u, b) = self.ranges(gate);
        let (xd, hd) = (self.input_dim, self.hidden);
        for (i, d) in da.iter().enumerate() {
            grads[w.start + i * xd..][..xd]
                .iter_mut()
                .zip(x)
                .for_each(|(g, xi)| *g += d * xi);
            grads[u.start + i * hd..][..hd]
                .iter_mut()
                .zip(v)
                .for_each(|(g, vi)| *g += d * vi);
            grads[b.start + i] += d;
        }
        let u = &self.params[u];
        let mut back = vec![0.0; hd];
        for (i, d) in da.iter().enumerate() {
            back.iter_mut()
                .zip(&u[i * hd..][..hd])
                .for_each(|(o, ui)| *o += d * ui);
        }
        back
    }

    /// Backpropagation through a whole tape, starting from `dh_last` at the
    /// final step's output.
    pub fn bptt(&self, tape: &[GruCache], dh_last: &[f64]) -> GradientBundle {
        let mut grads = GradientBundle::zeros(self.params.len());
        let mut dh = dh_last.to_vec();
        for cache in tape.iter().rev() {
            dh = self.backward_step(cache, &dh, grads.as_mut_slice());
        }
        grads
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GruConfig {
    pub hidden: usize,
    pub policy_hidden: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub entropy: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
}

impl Default for GruConfig {
    fn default() -> Self {
        Self {
            hidden: 10,
            policy_hidden: 10,
            // 0.05 * 2^-6, the best of the 0.05 * 2^-x grid on L=10, D=2.
            learning_rate: 0.000_781_25,
            gamma: 0.9,
            entropy: 0.0005,
            rms_decay: 0.9,
            rms_epsilon: 1e-8,
        }
    }
}

impl GruConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.policy_hidden == 0 {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {}", self.gamma)));
        }
        if !(self.entropy >= 0.0 && self.entropy.is_finite()) {
            return Err(Error::InvalidConfig(format!("entropy weight {}", self.entropy)));
        }
        Ok(())
    }
}

/// What one update needs beyond the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStep {
    pub state: Vec<f64>,
    pub hidden: Vec<f64>,
    pub action: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruGradients {
    pub cell: GradientBundle,
    pub policy: GradientBundle,
    pub value: GradientBundle,
}

pub struct GruAgent {
    config: GruConfig,
    env: EnvConfig,
    cell: GruCell,
    policy: Mlp,
    value: Mlp,
    optimizers: [OptimizerState; 3],
    tape: Vec<GruCache>,
}

impl GruAgent {
    /// Initializes the GRU, then policy, then value network.
    pub fn new<R: Rng + ?Sized>(config: GruConfig, env: EnvConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        env.validate()?;
        let width = env.state_width();
        let cell = GruCell::new(width, config.hidden, rng)?;
        let ph = config.policy_hidden;
        let policy = Mlp::new(
            width + config.hidden,
            &[(ph, Activation::Tanh), (ph, Activation::Tanh), (env.actions, Activation::Softmax)],
            rng,
        )?;
        let value = Mlp::new(width, &[(ph, Activation::Tanh), (1, Activation::Tanh)], rng)?;
        let opt = OptimizerState::rmsprop(config.learning_rate, config.rms_decay, config.rms_epsilon)?;
        Ok(Self {
            config,
            env,
            cell,
            policy,
            value,
            optimizers: [opt.clone(), opt.clone(), opt],
            tape: Vec::new(),
        })
    }

    pub fn config(&self) -> &GruConfig {
        &self.config
    }

    pub fn cell(&self) -> &GruCell {
        &self.cell
    }

    pub fn cell_mut(&mut self) -> &mut GruCell {
        &mut self.cell
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut Mlp {
        &mut self.policy
    }

    pub fn value(&self) -> &Mlp {
        &self.value
    }

    /// Caches of the steps taken so far this episode.
    pub fn tape(&self) -> &[GruCache] {
        &self.tape
    }

    /// Clears the tape; the next step starts from `h = 0`.
    pub fn reset(&mut self) {
        self.tape.clear();
    }

    /// Reads `state` into the GRU and returns the new hidden state with the
    /// action distribution.
    pub fn observe(&mut self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let h_prev = self
            .tape
            .last()
            .map_or_else(|| vec![0.0; self.config.hidden], |c| c.h.clone());
        let (h, cache) = self.cell.step(&h_prev, state)?;
        self.tape.push(cache);
        let probs = self.policy.predict(&concat(state, &h))?;
        Ok((h, probs))
    }

    /// Descent gradients of `-δ log π(a) - β H(π)` through the whole tape,
    /// and of `-δ V(S)` for the value network.
    pub fn gradients(&self, tape: &[GruCache], step: &GruStep) -> Result<GruGradients> {
        let (probs, cache) = self.policy.forward(&concat(&step.state, &step.hidden))?;
        let lp = log_prob_logit_grad(&probs, step.action);
        let ent = entropy_logit_grad(&probs);
        let logit_grad: Vec<f64> = lp
            .iter()
            .zip(&ent)
            .map(|(l, e)| -step.delta * l - self.config.entropy * e)
            .collect();
        let (policy, input_grad) = self.policy.backward_logits(&cache, &logit_grad)?;
        let dh = &input_grad[step.state.len()..];
        let cell = self.cell.bptt(tape, dh);
        let (_, cache) = self.value.forward(&step.state)?;
        let (value, _) = self.value.backward(&cache, &[-step.delta])?;
        Ok(GruGradients { cell, policy, value })
    }

    pub fn apply(&mut self, grads: &GruGradients) {
        let [c, p, v] = &mut self.optimizers;
        c.step(self.cell.params_mut(), grads.cell.as_slice());
        self.policy.step(&grads.policy, p);
        self.value.step(&grads.value, v);
    }

    pub fn run_episode<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EpisodeMetrics> {
        let instance = ProblemInstance::generate(&self.env, rng)?;
        self.run_instance(instance, rng)
    }

    pub fn run_instance<R: Rng + ?Sized>(&mut self, instance: ProblemInstance, rng: &mut R) -> Result<EpisodeMetrics> {
        self.reset();
        let mut env = InformantEnv::new(instance);
        let mut state = env.observe().to_f64();
        let mut ret = 0.0;
        loop {
            let (hidden, probs) = self.observe(&state)?;
            let action = sample_categorical(&probs, rng)?;
            let out = env.step(action)?;
            ret += out.reward;
            let next = out.state.to_f64();
            let v_now = self.value.predict(&state)?[0];
            let v_next = if out.done() { 0.0 } else { self.value.predict(&next)?[0] };
            let step = GruStep {
                state,
                hidden,
                action,
                delta: out.reward + self.config.gamma * v_next - v_now,
            };
            let grads = self.gradients(&self.tape, &step)?;
            self.apply(&grads);
            if out.done() {
                return Ok(EpisodeMetrics::without_memory(
                    ret,
                    env.steps(),
                    out.truncated,
                    self.env.decisions,
                ));
            }
            state = next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_halves_hidden_state() {
        let cell = GruCell::zeros(4, 3).unwrap();
        let h = [0.4, -0.8, 0.2];
        let (h_new, cache) = cell.step(&h, &[1.0, 0.0, -2.0, 0.5]).unwrap();
        assert!(cache.z.iter().all(|z| *z == 0.5));
        assert!(cache.h_tilde.iter().all(|v| *v == 0.0));
        for (a, b) in h_new.iter().zip(h) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_checks() {
        let cell = GruCell::zeros(4, 3).unwrap();
        assert!(cell.step(&[0.0; 3], &[0.0; 5]).is_err());
        assert!(cell.step(&[0.0; 2], &[0.0; 4]).is_err());
        assert!(GruCell::zeros(0, 3).is_err());
    }

    #[test]
    fn hidden_state_stays_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cell = GruCell::new(5, 4, &mut rng).unwrap();
        cell.params_mut().iter_mut().for_each(|p| *p *= 5.0);
        let mut h = vec![0.0; 4];
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            h = cell.step(&h, &x).unwrap().0;
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn uniform_policy_without_advantage_has_no_policy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let env = EnvConfig::new(10, 3, 2, 1000).unwrap();
        let mut agent = GruAgent::new(GruConfig::default(), env, &mut rng).unwrap();
        agent.policy_mut().params_mut().iter_mut().for_each(|p| *p = 0.0);
        let state = vec![0.0; env.state_width()];
        let (hidden, probs) = agent.observe(&state).unwrap();
        assert!(probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
        let step = GruStep {
            state,
            hidden,
            action: 2,
            delta: 0.0,
        };
        let grads = agent.gradients(agent.tape(), &step).unwrap();
        assert!(grads.policy.as_slice().iter().all(|g| g.abs() < 1e-15));
        assert!(grads.cell.as_slice().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn episodes_reset_the_tape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let env = EnvConfig::new(4, 3, 2, 1000).unwrap();
        let mut agent = GruAgent::new(GruConfig::default(), env, &mut rng).unwrap();
        for _ in 0..5 {
            let m = agent.run_episode(&mut rng).unwrap();
            assert_eq!(agent.tape().len(), m.steps);
            assert!(m.w_informative.is_none());
            assert!(m.query.iter().all(Option::is_none));
        }
    }
}
