//! Experiment runner: seeding, repetitions, windowed metrics and CSV output.
//!
//! Each run owns one ChaCha8 stream seeded with `seed + repetition`. The
//! stream is consumed in a fixed order: network initialization, then per
//! episode the instance, the reservoir fill permutation and swap draws, the
//! recall draw and the action draw of every step.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{AgentConfig, EpisodeMetrics, EpisodicAgent, QueryDiagnostics};
use crate::baseline::{GruAgent, GruConfig};
use crate::env::EnvConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Episodic,
    Gru,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Episodic => "episodic",
            Algo::Gru => "gru",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "episodic" => Ok(Algo::Episodic),
            "gru" => Ok(Algo::Gru),
            other => Err(Error::InvalidConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: Algo,
    pub env: EnvConfig,
    /// Reservoir capacity; episodic only, defaults to 1.
    pub memory: Option<usize>,
    pub episodes: usize,
    /// Defaults to 0.005 (episodic) or 0.00078125 (gru).
    pub learning_rate: Option<f64>,
    pub seed: u64,
    pub repetitions: usize,
    pub window: usize,
    /// GRU only.
    pub gamma: Option<f64>,
    /// GRU only.
    pub entropy: Option<f64>,
    pub hidden: usize,
    pub out_dir: PathBuf,
    pub raw: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Episodic,
            env: EnvConfig::default(),
            memory: None,
            episodes: 25_000,
            learning_rate: None,
            seed: 0,
            repetitions: 3,
            window: 100,
            gamma: None,
            entropy: None,
            hidden: 10,
            out_dir: PathBuf::from("."),
            raw: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.episodes == 0 || self.repetitions == 0 || self.window == 0 {
            return Err(Error::InvalidConfig(
                "episodes, repetitions and window must be at least 1".into(),
            ));
        }
        match self.algo {
            Algo::Episodic => {
                if self.gamma.is_some() || self.entropy.is_some() {
                    return Err(Error::InvalidConfig(
                        "--gamma and --entropy only apply to the gru learner".into(),
                    ));
                }
                self.agent_config()?.validate()
            }
            Algo::Gru => {
                if self.memory.is_some() {
                    return Err(Error::InvalidConfig("--memory does not apply to the gru learner".into()));
                }
                self.gru_config()?.validate()
            }
        }
    }

    pub fn agent_config(&self) -> Result<AgentConfig> {
        let mut config = AgentConfig {
            memory: self.memory.unwrap_or(1),
            hidden: self.hidden,
            ..AgentConfig::default()
        };
        if let Some(lr) = self.learning_rate {
            config.learning_rate = lr;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn gru_config(&self) -> Result<GruConfig> {
        let mut config = GruConfig {
            hidden: self.hidden,
            policy_hidden: self.hidden,
            ..GruConfig::default()
        };
        if let Some(lr) = self.learning_rate {
            config.learning_rate = lr;
        }
        if let Some(g) = self.gamma {
            config.gamma = g;
        }
        if let Some(e) = self.entropy {
            config.entropy = e;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn file_name(&self, repetition: usize) -> String {
        format!(
            "{}_rep{}_seed{}.csv",
            self.algo.name(),
            repetition,
            self.seed.wrapping_add(repetition as u64)
        )
    }

    pub fn raw_file_name(&self, repetition: usize) -> String {
        self.file_name(repetition).replace(".csv", "_raw.csv")
    }
}

/// Anything that can be trained one episode at a time.
pub trait Learner {
    fn run_episode(&mut self, rng: &mut dyn RngCore) -> Result<EpisodeMetrics>;
}

impl Learner for EpisodicAgent {
    fn run_episode(&mut self, rng: &mut dyn RngCore) -> Result<EpisodeMetrics> {
        EpisodicAgent::run_episode(self, rng)
    }
}

impl Learner for GruAgent {
    fn run_episode(&mut self, rng: &mut dyn RngCore) -> Result<EpisodeMetrics> {
        GruAgent::run_episode(self, rng)
    }
}

pub fn build_learner(config: &RunConfig, rng: &mut dyn RngCore) -> Result<Box<dyn Learner + Send>> {
    Ok(match config.algo {
        Algo::Episodic => Box::new(EpisodicAgent::new(config.agent_config()?, config.env, rng)?),
        Algo::Gru => Box::new(GruAgent::new(config.gru_config()?, config.env, rng)?),
    })
}

/// Trains a fresh learner for `config.episodes` episodes on one stream.
pub fn train(config: &RunConfig, seed: u64) -> Result<Vec<EpisodeMetrics>> {
    train_with(config, seed, |_, _| {})
}

/// Like [`train`], calling `progress(index, metrics)` after each episode.
pub fn train_with<F>(config: &RunConfig, seed: u64, mut progress: F) -> Result<Vec<EpisodeMetrics>>
where
    F: FnMut(usize, &EpisodeMetrics),
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = build_learner(config, &mut rng)?;
    let mut episodes = Vec::with_capacity(config.episodes);
    for i in 0..config.episodes {
        let m = learner.run_episode(&mut rng)?;
        progress(i, &m);
        episodes.push(m);
    }
    Ok(episodes)
}

/// One aggregated CSV row. Episode range is `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub window: usize,
    pub start: usize,
    pub end: usize,
    pub mean_return: f64,
    pub mean_steps: f64,
    pub truncations: usize,
    pub w_informative: Option<f64>,
    pub w_uninformative: Option<f64>,
    pub query: Vec<Option<QueryDiagnostics>>,
}

fn mean_defined<I: Iterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Averages per-episode metrics over consecutive windows; the last window
/// may be shorter. Diagnostics are averaged over the episodes that define
/// them.
pub fn aggregate(episodes: &[EpisodeMetrics], window: usize, decisions: usize) -> Vec<WindowRow> {
    episodes
        .chunks(window.max(1))
        .enumerate()
        .map(|(w, chunk)| {
            let n = chunk.len() as f64;
            let query = (0..decisions)
                .map(|k| {
                    let visits: Vec<&QueryDiagnostics> =
                        chunk.iter().filter_map(|m| m.query.get(k).and_then(Option::as_ref)).collect();
                    if visits.is_empty() {
                        return None;
                    }
                    let c = visits.len() as f64;
                    Some(QueryDiagnostics {
                        info: visits.iter().map(|q| q.info).sum::<f64>() / c,
                        uninfo: visits.iter().map(|q| q.uninfo).sum::<f64>() / c,
                        ids: (0..decisions)
                            .map(|j| visits.iter().map(|q| q.ids[j]).sum::<f64>() / c)
                            .collect(),
                    })
                })
                .collect();
            WindowRow {
                window: w,
                start: w * window,
                end: w * window + chunk.len(),
                mean_return: chunk.iter().map(|m| m.ret).sum::<f64>() / n,
                mean_steps: chunk.iter().map(|m| m.steps as f64).sum::<f64>() / n,
                truncations: chunk.iter().filter(|m| m.truncated).count(),
                w_informative: mean_defined(chunk.iter().map(|m| m.w_informative)),
                w_uninformative: mean_defined(chunk.iter().map(|m| m.w_uninformative)),
                query,
            }
        })
        .collect()
}

fn query_columns(decisions: usize) -> String {
    let mut s = String::new();
    for k in 1..=decisions {
        write!(s, ",q_info_d{k},q_uninfo_d{k}").expect("writing to a String");
        for j in 1..=decisions {
            write!(s, ",q_id{j}_d{k}").expect("writing to a String");
        }
    }
    s
}

pub fn csv_header(decisions: usize) -> String {
    format!(
        "window,episodes_start,episodes_end,mean_return,mean_steps,truncations,w_informative,w_uninformative{}",
        query_columns(decisions)
    )
}

pub fn raw_header(decisions: usize) -> String {
    format!(
        "episode,return,steps,truncated,w_informative,w_uninformative{}",
        query_columns(decisions)
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn push_query(line: &mut String, query: &[Option<QueryDiagnostics>], decisions: usize) {
    for k in 0..decisions {
        match query.get(k).and_then(Option::as_ref) {
            Some(q) => {
                write!(line, ",{},{}", q.info, q.uninfo).expect("writing to a String");
                for v in &q.ids {
                    write!(line, ",{v}").expect("writing to a String");
                }
            }
            None => line.push_str(&",".repeat(2 + decisions)),
        }
    }
}

pub fn format_row(row: &WindowRow, decisions: usize) -> String {
    let mut line = format!(
        "{},{},{},{},{},{},{},{}",
        row.window,
        row.start,
        row.end,
        row.mean_return,
        row.mean_steps,
        row.truncations,
        opt(row.w_informative),
        opt(row.w_uninformative)
    );
    push_query(&mut line, &row.query, decisions);
    line
}

pub fn format_raw(index: usize, m: &EpisodeMetrics, decisions: usize) -> String {
    let mut line = format!(
        "{},{},{},{},{},{}",
        index,
        m.ret,
        m.steps,
        u8::from(m.truncated),
        opt(m.w_informative),
        opt(m.w_uninformative)
    );
    push_query(&mut line, &m.query, decisions);
    line
}

pub fn write_csv(path: &Path, rows: &[WindowRow], decisions: usize) -> Result<()> {
    let mut out = csv_header(decisions);
    out.push('\n');
    for row in rows {
        out.push_str(&format_row(row, decisions));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_raw_csv(path: &Path, episodes: &[EpisodeMetrics], decisions: usize) -> Result<()> {
    let mut out = raw_header(decisions);
    out.push('\n');
    for (i, m) in episodes.iter().enumerate() {
        out.push_str(&format_raw(i, m, decisions));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Result of one repetition.
#[derive(Debug, Clone)]
pub struct RepetitionOutput {
    pub repetition: usize,
    pub seed: u64,
    pub csv: PathBuf,
    pub raw: Option<PathBuf>,
    pub episodes: Vec<EpisodeMetrics>,
}

/// Runs every repetition on its own thread and writes one CSV each.
pub fn run(config: &RunConfig) -> Result<Vec<RepetitionOutput>> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let results: Vec<Result<RepetitionOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.repetitions)
            .map(|r| scope.spawn(move || run_repetition(config, r)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("repetition thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

fn run_repetition(config: &RunConfig, repetition: usize) -> Result<RepetitionOutput> {
    let seed = config.seed.wrapping_add(repetition as u64);
    let episodes = train(config, seed)?;
    let d = config.env.decisions;
    let csv = config.out_dir.join(config.file_name(repetition));
    write_csv(&csv, &aggregate(&episodes, config.window, d), d)?;
    let raw = if config.raw {
        let path = config.out_dir.join(config.raw_file_name(repetition));
        write_raw_csv(&path, &episodes, d)?;
        Some(path)
    } else {
        None
    };
    Ok(RepetitionOutput {
        repetition,
        seed,
        csv,
        raw,
        episodes,
    })
}

/// Mean of `f` over the last `k` episodes where it is defined.
pub fn tail_mean<F>(episodes: &[EpisodeMetrics], k: usize, f: F) -> Option<f64>
where
    F: Fn(&EpisodeMetrics) -> Option<f64>,
{
    let start = episodes.len().saturating_sub(k);
    mean_defined(episodes[start..].iter().map(f))
}

pub fn tail_return(episodes: &[EpisodeMetrics], k: usize) -> f64 {
    tail_mean(episodes, k, |m| Some(m.ret)).unwrap_or(0.0)
}
