//! The secret informant problem.
//!
//! An episode walks a chain of `L` states and then faces `D` decision states.
//! Exactly `D` chain states are informants: each one shows the correct action
//! for one decision. The remaining chain states show a random action and a
//! random decision identifier, flagged as uninformative. Only the full
//! sequence of correct decisions is rewarded, so the agent has to remember
//! the informants across the chain.
//!
//! State vectors have width `A + D + 4`:
//!
//! | bits                | meaning                                   |
//! |---------------------|-------------------------------------------|
//! | `0..A`              | action one-hot                            |
//! | `A`, `A + 1`        | `10` informative, `01` uninformative      |
//! | `A + 2 .. A + 2 + D`| decision identifier one-hot               |
//! | `A + 2 + D`         | decision state indicator                  |
//! | `A + 3 + D`         | correct path so far                       |
//!
//! The start state is all zeros. Outside decision states only [`FORWARD`]
//! moves ahead; every other action keeps the agent in place.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// Action index that advances along the chain.
pub const FORWARD: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvConfig {
    pub length: usize,
    pub actions: usize,
    pub decisions: usize,
    pub max_steps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            length: 10,
            actions: 3,
            decisions: 1,
            max_steps: 1000,
        }
    }
}

impl EnvConfig {
    pub fn new(length: usize, actions: usize, decisions: usize, max_steps: usize) -> Result<Self> {
        let config = Self {
            length,
            actions,
            decisions,
            max_steps,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidConfig("chain length must be positive".into()));
        }
        if self.actions < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 actions, got {}",
                self.actions
            )));
        }
        if self.decisions == 0 || self.decisions > self.length {
            return Err(Error::InvalidConfig(format!(
                "decisions must be in 1..={}, got {}",
                self.length, self.decisions
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn state_width(&self) -> usize {
        self.actions + self.decisions + 4
    }

    /// Steps taken by an agent that always moves forward and decides right.
    pub fn optimal_steps(&self) -> usize {
        1 + self.length + self.decisions
    }

    /// Expected return of a uniformly random policy.
    pub fn random_return(&self) -> f64 {
        (self.actions as f64).powi(-(self.decisions as i32))
    }

    pub fn info_bit(&self) -> usize {
        self.actions
    }

    pub fn uninfo_bit(&self) -> usize {
        self.actions + 1
    }

    /// Bit of the one-hot identifier for 0-based decision `k`.
    pub fn id_bit(&self, k: usize) -> usize {
        self.actions + 2 + k
    }

    pub fn decision_bit(&self) -> usize {
        self.actions + 2 + self.decisions
    }

    pub fn correct_path_bit(&self) -> usize {
        self.actions + 3 + self.decisions
    }
}

/// Where the agent is. Chain and decision indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Start,
    Chain(usize),
    Decision(usize),
}

/// Coarse class of a position, used for write-weight diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateClass {
    Start,
    Informative,
    Uninformative,
    Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ChainCell {
    Informant { decision: usize },
    Noise { action: usize, decision: usize },
}

/// One randomized episode layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemInstance {
    config: EnvConfig,
    correct_actions: Vec<usize>,
    informant_positions: Vec<usize>,
    chain: Vec<ChainCell>,
}

impl ProblemInstance {
    /// Draws correct actions, then informant positions, then the noise
    /// contents of the remaining chain states in chain order.
    pub fn generate<R: Rng + ?Sized>(config: &EnvConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let correct_actions: Vec<usize> = (0..config.decisions)
            .map(|_| rng.random_range(0..config.actions))
            .collect();
        let informant_positions: Vec<usize> = index::sample(rng, config.length, config.decisions)
            .into_iter()
            .map(|p| p + 1)
            .collect();
        let mut chain: Vec<Option<ChainCell>> = vec![None; config.length];
        for (k, &p) in informant_positions.iter().enumerate() {
            chain[p - 1] = Some(ChainCell::Informant { decision: k });
        }
        let chain = chain
            .into_iter()
            .map(|cell| {
                cell.unwrap_or_else(|| ChainCell::Noise {
                    action: rng.random_range(0..config.actions),
                    decision: rng.random_range(0..config.decisions),
                })
            })
            .collect();
        Ok(Self {
            config: *config,
            correct_actions,
            informant_positions,
            chain,
        })
    }

    /// Builds an instance from explicit parts. `noise` lists `(action,
    /// decision)` for the non-informant chain positions in chain order;
    /// decisions are 0-based, positions 1-based.
    pub fn from_parts(
        config: &EnvConfig,
        correct_actions: Vec<usize>,
        informant_positions: Vec<usize>,
        noise: &[(usize, usize)],
    ) -> Result<Self> {
        config.validate()?;
        let (a, d, l) = (config.actions, config.decisions, config.length);
        if correct_actions.len() != d || informant_positions.len() != d {
            return Err(Error::InvalidConfig(format!("expected {d} decisions")));
        }
        if let Some(&bad) = correct_actions.iter().find(|&&c| c >= a) {
            return Err(Error::InvalidAction { action: bad, actions: a });
        }
        let mut chain: Vec<Option<ChainCell>> = vec![None; l];
        for (k, &p) in informant_positions.iter().enumerate() {
            if p == 0 || p > l || chain[p - 1].is_some() {
                return Err(Error::InvalidPosition(format!("informant position {p}")));
            }
            chain[p - 1] = Some(ChainCell::Informant { decision: k });
        }
        if noise.len() != l - d {
            return Err(Error::InvalidConfig(format!(
                "expected {} uninformative states, got {}",
                l - d,
                noise.len()
            )));
        }
        if noise.iter().any(|&(na, nd)| na >= a || nd >= d) {
            return Err(Error::InvalidConfig("uninformative content out of range".into()));
        }
        let mut noise = noise.iter();
        let chain = chain
            .into_iter()
            .map(|cell| {
                cell.unwrap_or_else(|| {
                    let &(action, decision) = noise.next().expect("length checked");
                    ChainCell::Noise { action, decision }
                })
            })
            .collect();
        Ok(Self {
            config: *config,
            correct_actions,
            informant_positions,
            chain,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn correct_actions(&self) -> &[usize] {
        &self.correct_actions
    }

    /// Chain position (1-based) of the informant for each decision.
    pub fn informant_positions(&self) -> &[usize] {
        &self.informant_positions
    }

    /// `(position, action, decision)` for every uninformative chain state.
    pub fn uninformative_contents(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.chain.iter().enumerate().filter_map(|(i, cell)| match *cell {
            ChainCell::Noise { action, decision } => Some((i + 1, action, decision)),
            ChainCell::Informant { .. } => None,
        })
    }

    pub fn class_of(&self, position: Position) -> Result<StateClass> {
        self.check(position)?;
        Ok(match position {
            Position::Start => StateClass::Start,
            Position::Decision(_) => StateClass::Decision,
            Position::Chain(p) => match self.chain[p - 1] {
                ChainCell::Informant { .. } => StateClass::Informative,
                ChainCell::Noise { .. } => StateClass::Uninformative,
            },
        })
    }

    /// State vector at `position`. `correct_path` only matters at decision
    /// states.
    pub fn encode(&self, position: Position, correct_path: bool) -> Result<BitState> {
        self.check(position)?;
        let c = &self.config;
        let mut bits = vec![0u8; c.state_width()];
        match position {
            Position::Start => {}
            Position::Chain(p) => {
                let (action, info, decision) = match self.chain[p - 1] {
                    ChainCell::Informant { decision } => (self.correct_actions[decision], c.info_bit(), decision),
                    ChainCell::Noise { action, decision } => (action, c.uninfo_bit(), decision),
                };
                bits[action] = 1;
                bits[info] = 1;
                bits[c.id_bit(decision)] = 1;
            }
            Position::Decision(j) => {
                bits[c.id_bit(j - 1)] = 1;
                bits[c.decision_bit()] = 1;
                bits[c.correct_path_bit()] = u8::from(correct_path);
            }
        }
        Ok(BitState { bits })
    }

    fn check(&self, position: Position) -> Result<()> {
        match position {
            Position::Chain(p) if p == 0 || p > self.config.length => {
                Err(Error::InvalidPosition(format!("chain position {p}")))
            }
            Position::Decision(j) if j == 0 || j > self.config.decisions => {
                Err(Error::InvalidPosition(format!("decision {j}")))
            }
            _ => Ok(()),
        }
    }
}

/// A 0/1 state vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitState {
    bits: Vec<u8>,
}

impl BitState {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }

    /// Checks the layout rules: at most one action bit, never both
    /// information bits, at most one identifier bit.
    pub fn is_well_formed(&self, config: &EnvConfig) -> bool {
        let ones = |r: std::ops::Range<usize>| self.bits[r].iter().filter(|&&b| b == 1).count();
        self.bits.len() == config.state_width()
            && self.bits.iter().all(|&b| b <= 1)
            && ones(0..config.actions) <= 1
            && ones(config.info_bit()..config.info_bit() + 2) <= 1
            && ones(config.id_bit(0)..config.id_bit(0) + config.decisions) <= 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: BitState,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// A running episode over one [`ProblemInstance`].
#[derive(Debug, Clone)]
pub struct InformantEnv {
    instance: ProblemInstance,
    position: Position,
    correct_path: bool,
    steps: usize,
    finished: bool,
}

impl InformantEnv {
    pub fn new(instance: ProblemInstance) -> Self {
        Self {
            instance,
            position: Position::Start,
            correct_path: true,
            steps: 0,
            finished: false,
        }
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn config(&self) -> &EnvConfig {
        &self.instance.config
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn correct_path(&self) -> bool {
        self.correct_path
    }

    pub fn observe(&self) -> BitState {
        self.instance
            .encode(self.position, self.correct_path)
            .expect("the current position is always valid")
    }

    pub fn class(&self) -> StateClass {
        self.instance
            .class_of(self.position)
            .expect("the current position is always valid")
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.finished {
            return Err(Error::EpisodeFinished);
        }
        let config = self.instance.config;
        if action >= config.actions {
            return Err(Error::InvalidAction {
                action,
                actions: config.actions,
            });
        }
        self.steps += 1;
        let mut reward = 0.0;
        let mut terminal = false;
        match self.position {
            Position::Decision(j) => {
                self.correct_path &= action == self.instance.correct_actions[j - 1];
                if j == config.decisions {
                    terminal = true;
                    if self.correct_path {
                        reward = 1.0;
                    }
                } else {
                    self.position = Position::Decision(j + 1);
                }
            }
            position if action == FORWARD => {
                self.position = match position {
                    Position::Start => Position::Chain(1),
                    Position::Chain(p) if p < config.length => Position::Chain(p + 1),
                    _ => Position::Decision(1),
                };
            }
            _ => {}
        }
        let truncated = !terminal && self.steps >= config.max_steps;
        self.finished = terminal || truncated;
        Ok(StepOutcome {
            state: self.observe(),
            reward,
            terminal,
            truncated,
        })
    }
}
