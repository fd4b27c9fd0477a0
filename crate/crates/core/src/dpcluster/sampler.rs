//! Gibbs sweeps over player assignments and the seeded, resumable driver
//! that records a trace and tracks the best-scoring partition.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::base::{estimate_base_measure, BaseMeasure};
use super::kmeans::{default_k, kmeans};
use super::state::{partition_score, reassignment_probs, MeanUpdate, PartitionState, PlayerData};
use crate::error::{Error, Result};

/// Weak inverse-gamma prior used when the residual variance is resampled.
const SIGMA2_PRIOR_SHAPE: f64 = 1e-3;
const SIGMA2_PRIOR_RATE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Number of Gibbs sweeps after initialisation.
    pub iterations: usize,
    /// Leading sweeps excluded from per-player summaries downstream.
    pub burn_in: usize,
    pub seed: u64,
    pub omega: f64,
    /// Overrides the plug-in residual variance when set.
    pub sigma2: Option<f64>,
    pub thinning: usize,
    /// Overrides the `round(sqrt(n / 2))` initial cluster count when set.
    pub k: Option<usize>,
    pub mean_update: MeanUpdate,
    pub resample_sigma2: bool,
    /// Explicit base measure, required when only one initial center exists.
    pub base: Option<BaseMeasure>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 200,
            burn_in: 20,
            seed: 0,
            omega: 1.0,
            sigma2: None,
            thinning: 1,
            k: None,
            mean_update: MeanUpdate::PosteriorMode,
            resample_sigma2: false,
            base: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    #[serde(with = "super::score_serde")]
    pub score: f64,
    pub k: usize,
    pub sigma2: f64,
    pub assignment: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerTrace {
    pub seed: u64,
    pub players: Vec<String>,
    pub records: Vec<TraceRecord>,
    pub map_state: PartitionState,
    #[serde(with = "super::score_serde")]
    pub map_score: f64,
    pub map_iteration: u64,
}

impl SamplerTrace {
    fn observe(&mut self, state: &PartitionState, score: f64) {
        self.records.push(TraceRecord {
            iteration: state.iteration,
            score,
            k: state.n_clusters(),
            sigma2: state.sigma2,
            assignment: state.assignment.clone(),
        });
        if score > self.map_score {
            self.map_score = score;
            self.map_state = state.clone();
            self.map_iteration = state.iteration;
        }
    }

    /// Writes a header line, then one line per record carrying only the
    /// assignments that changed since the previous record.
    pub fn write_jsonl<W: Write>(&self, mut out: W, config: &serde_json::Value) -> Result<()> {
        let header = serde_json::json!({
            "seed": self.seed,
            "players": self.players,
            "map_iteration": self.map_iteration,
            "map_score": self.map_score,
            "config": config,
        });
        writeln!(out, "{header}")?;
        let mut prev: Option<&[u64]> = None;
        for r in &self.records {
            let delta: Vec<(usize, u64)> = r
                .assignment
                .iter()
                .enumerate()
                .filter(|(j, id)| prev.is_none_or(|p| p[*j] != **id))
                .map(|(j, id)| (j, *id))
                .collect();
            let line = serde_json::json!({
                "iteration": r.iteration,
                "score": r.score,
                "k": r.k,
                "sigma2": r.sigma2,
                "delta": delta,
            });
            writeln!(out, "{line}")?;
            prev = Some(&r.assignment);
        }
        Ok(())
    }

    /// Reconstructs the per-iteration assignments from a JSONL trace.
    pub fn read_jsonl_records<R: BufRead>(input: R) -> Result<(Vec<String>, Vec<TraceRecord>)> {
        #[derive(Deserialize)]
        struct Header {
            players: Vec<String>,
        }
        #[derive(Deserialize)]
        struct Line {
            iteration: u64,
            score: Option<f64>,
            k: usize,
            sigma2: f64,
            delta: Vec<(usize, u64)>,
        }
        let mut lines = input.lines();
        let header: Header = match lines.next() {
            Some(l) => serde_json::from_str(&l?)?,
            None => return Err(Error::Empty("trace")),
        };
        let mut current = vec![u64::MAX; header.players.len()];
        let mut records = Vec::new();
        for l in lines {
            let l = l?;
            if l.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(&l)?;
            for (j, id) in line.delta {
                *current.get_mut(j).ok_or_else(|| {
                    Error::invalid(format!("trace player index {j} out of range"))
                })? = id;
            }
            records.push(TraceRecord {
                iteration: line.iteration,
                score: line.score.unwrap_or(f64::NEG_INFINITY),
                k: line.k,
                sigma2: line.sigma2,
                assignment: current.clone(),
            });
        }
        Ok((header.players, records))
    }
}

/// Draws an index from a probability vector.
fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the running total; take the last positive entry
    probs
        .iter()
        .rposition(|p| *p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// One pass over all players in a random order, reassigning each to an
/// existing cluster or a new one drawn from the base measure.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut PartitionState,
    data: &PlayerData,
    rule: MeanUpdate,
    rng: &mut R,
) -> Result<()> {
    let mut order: Vec<usize> = (0..state.n_players()).collect();
    order.shuffle(rng);
    for j in order {
        let own = state.cluster_of(j);
        if state.n_clusters() == 1 && own.size() == 1 {
            // a lone player in a lone cluster has nowhere else to go
            continue;
        }
        if let Some(src) = state.detach(j, data) {
            let mean = rule.compute(&state.clusters[src], state, data, rng)?;
            state.clusters[src].mean = mean;
        }
        let fresh = state.base.sample(rng);
        let probs = reassignment_probs(&data.stats[j], state, &fresh)?;
        let choice = sample_categorical(&probs, rng);
        let dst = if choice < state.n_clusters() {
            state.attach(j, choice, data);
            choice
        } else {
            state.open_cluster(j, fresh, data)
        };
        let mean = rule.compute(&state.clusters[dst], state, data, rng)?;
        state.clusters[dst].mean = mean;
    }
    state.iteration += 1;
    Ok(())
}

/// Conjugate inverse-gamma draw of the residual variance given the partition.
pub fn resample_sigma2<R: Rng + ?Sized>(
    state: &mut PartitionState,
    data: &PlayerData,
    rng: &mut R,
) -> Result<()> {
    let rss: f64 = data
        .stats
        .iter()
        .enumerate()
        .map(|(j, s)| s.rss(&state.cluster_of(j).mean).max(0.0))
        .sum();
    let shape = SIGMA2_PRIOR_SHAPE + data.total_rows() as f64 / 2.0;
    let rate = SIGMA2_PRIOR_RATE + rss / 2.0;
    let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::invalid(e.to_string()))?;
    state.sigma2 = 1.0 / gamma.sample(rng);
    Ok(())
}

/// Resumable sampler: configuration, current state, rng position and trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampler {
    pub config: SamplerConfig,
    pub state: PartitionState,
    pub rng: ChaCha8Rng,
    pub trace: SamplerTrace,
}

impl Sampler {
    /// K-means on the least-squares styles, base measure from the centers,
    /// every player's style replaced by its center.
    pub fn initialize(data: &PlayerData, config: SamplerConfig) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 players, got {n}")));
        }
        if config.thinning == 0 {
            return Err(Error::invalid("thinning must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let k = config.k.unwrap_or_else(|| default_k(n));
        let km = kmeans(&data.ols, k, &mut rng)?;
        let base = match &config.base {
            Some(b) => b.clone(),
            None => estimate_base_measure(&km.centers)?,
        };
        let sigma2 = config.sigma2.unwrap_or(data.mse);
        let state =
            PartitionState::from_labels(data, &km.labels, &km.centers, base, sigma2, config.omega)?;
        let score = partition_score(&state, data)?;
        let trace = SamplerTrace {
            seed: config.seed,
            players: data.players.clone(),
            records: Vec::new(),
            map_state: state.clone(),
            map_score: f64::NEG_INFINITY,
            map_iteration: 0,
        };
        let mut sampler = Sampler {
            config,
            state,
            rng,
            trace,
        };
        sampler.trace.observe(&sampler.state, score);
        Ok(sampler)
    }

    pub fn step(&mut self, data: &PlayerData) -> Result<()> {
        gibbs_sweep(
            &mut self.state,
            data,
            self.config.mean_update,
            &mut self.rng,
        )?;
        if self.config.resample_sigma2 {
            resample_sigma2(&mut self.state, data, &mut self.rng)?;
        }
        if self
            .state
            .iteration
            .is_multiple_of(self.config.thinning as u64)
        {
            let score = partition_score(&self.state, data)?;
            self.trace.observe(&self.state, score);
        }
        Ok(())
    }

    pub fn run(&mut self, sweeps: usize, data: &PlayerData) -> Result<()> {
        for _ in 0..sweeps {
            self.step(data)?;
        }
        Ok(())
    }

    pub fn to_checkpoint<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    /// Restores a sampler written by [`Sampler::to_checkpoint`].
    pub fn from_checkpoint<R: std::io::Read>(input: R, data: &PlayerData) -> Result<Self> {
        let mut s: Sampler = serde_json::from_reader(input)?;
        if s.state.players != data.players {
            return Err(Error::invalid("checkpoint players do not match the design"));
        }
        s.state.check_invariants()?;
        s.state.rebuild_stats(data);
        s.trace.map_state.rebuild_stats(data);
        Ok(s)
    }
}

/// Initialises and runs `config.iterations` sweeps.
pub fn run_sampler(data: &PlayerData, config: SamplerConfig) -> Result<SamplerTrace> {
    let iterations = config.iterations;
    let mut sampler = Sampler::initialize(data, config)?;
    sampler.run(iterations, data)?;
    Ok(sampler.trace)
}
