use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::base::BaseMeasure;
use crate::error::{Error, Result};
use crate::ingest::DesignRow;
use crate::linalg::{dot, quad_form, Cholesky};
use crate::regress::{player_suffstats, GlobalFit, PlayerEffects, SuffStats};

/// Everything the sampler needs per player: cached residual statistics and
/// the initial least-squares style. Players are indexed in lexicographic id
/// order throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerData {
    pub players: Vec<String>,
    pub stats: Vec<SuffStats>,
    pub ols: Vec<Vec<f64>>,
    /// Plug-in residual variance from the player-specific least-squares fit.
    pub mse: f64,
}

impl PlayerData {
    pub fn new(rows: &[DesignRow], global: &GlobalFit, effects: &PlayerEffects) -> Result<Self> {
        let stats = player_suffstats(rows, &global.alpha)?;
        let mut players = Vec::with_capacity(stats.len());
        let mut ols = Vec::with_capacity(stats.len());
        let mut cached = Vec::with_capacity(stats.len());
        for (player, s) in stats {
            let style = effects
                .styles
                .get(&player)
                .ok_or_else(|| Error::UnknownPlayer(player.clone()))?;
            ols.push(style.beta.clone());
            cached.push(s);
            players.push(player);
        }
        Ok(PlayerData {
            players,
            stats: cached,
            ols,
            mse: effects.mse,
        })
    }

    pub fn from_parts(
        players: Vec<String>,
        stats: Vec<SuffStats>,
        ols: Vec<Vec<f64>>,
        mse: f64,
    ) -> Result<Self> {
        if players.len() != stats.len() || players.len() != ols.len() {
            return Err(Error::invalid("player data parts differ in length"));
        }
        Ok(PlayerData {
            players,
            stats,
            ols,
            mse,
        })
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.stats.first().map_or(0, |s| s.p)
    }

    pub fn total_rows(&self) -> usize {
        self.stats.iter().map(|s| s.n_rows).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Persistent identity; never reused within a run.
    pub id: u64,
    pub mean: Vec<f64>,
    pub members: BTreeSet<usize>,
    /// Pooled statistics of the members, rebuilt from the player cache.
    #[serde(skip)]
    pub stats: SuffStats,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Sum of the cached statistics of `members`, accumulated in ascending player
/// order so the result depends only on the member set.
pub fn pooled_stats(members: &BTreeSet<usize>, data: &PlayerData) -> SuffStats {
    let mut s = SuffStats::zeros(data.dim());
    for &j in members {
        s.add(&data.stats[j]);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanUpdate {
    /// Mode of the pooled conditional posterior under the base measure.
    #[default]
    PosteriorMode,
    /// A draw from that same Gaussian conditional posterior.
    PosteriorDraw,
    /// Plain average of the members' initial least-squares styles.
    MemberAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionState {
    pub players: Vec<String>,
    /// Sorted by ascending id.
    pub clusters: Vec<Cluster>,
    /// Cluster id per player index.
    pub assignment: Vec<u64>,
    pub sigma2: f64,
    pub omega: f64,
    pub base: BaseMeasure,
    pub iteration: u64,
    pub next_id: u64,
}

impl PartitionState {
    /// Builds a state from per-player labels and one mean per label.
    pub fn from_labels(
        data: &PlayerData,
        labels: &[usize],
        means: &[Vec<f64>],
        base: BaseMeasure,
        sigma2: f64,
        omega: f64,
    ) -> Result<Self> {
        if labels.len() != data.len() {
            return Err(Error::invalid("one label per player required"));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        if !(omega >= 0.0) || !omega.is_finite() {
            return Err(Error::invalid(format!(
                "omega must be non-negative, got {omega}"
            )));
        }
        let mut by_label: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (j, &l) in labels.iter().enumerate() {
            if l >= means.len() {
                return Err(Error::invalid(format!("label {l} has no mean")));
            }
            by_label.entry(l).or_default().insert(j);
        }
        let mut clusters = Vec::with_capacity(by_label.len());
        let mut assignment = vec![0u64; labels.len()];
        for (id, (label, members)) in by_label.into_iter().enumerate() {
            let id = id as u64;
            for &j in &members {
                assignment[j] = id;
            }
            clusters.push(Cluster {
                id,
                mean: means[label].clone(),
                stats: pooled_stats(&members, data),
                members,
            });
        }
        let next_id = clusters.len() as u64;
        Ok(PartitionState {
            players: data.players.clone(),
            clusters,
            assignment,
            sigma2,
            omega,
            base,
            iteration: 0,
            next_id,
        })
    }

    pub fn n_players(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_index(&self, id: u64) -> Option<usize> {
        self.clusters.binary_search_by_key(&id, |c| c.id).ok()
    }

    pub fn cluster_of(&self, player: usize) -> &Cluster {
        let idx = self
            .cluster_index(self.assignment[player])
            .expect("assignment refers to a live cluster");
        &self.clusters[idx]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Cluster::size).collect()
    }

    /// Restores the pooled statistics (not serialised) after loading.
    pub fn rebuild_stats(&mut self, data: &PlayerData) {
        for c in &mut self.clusters {
            c.stats = pooled_stats(&c.members, data);
        }
    }

    /// Assignment keyed by player id.
    pub fn assignment_map(&self) -> BTreeMap<String, u64> {
        self.players
            .iter()
            .cloned()
            .zip(self.assignment.iter().copied())
            .collect()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = 0usize;
        for w in self.clusters.windows(2) {
            if w[0].id >= w[1].id {
                return Err(Error::invalid("cluster ids not strictly increasing"));
            }
        }
        for c in &self.clusters {
            if c.members.is_empty() {
                return Err(Error::invalid(format!("cluster {} is empty", c.id)));
            }
            if c.id >= self.next_id {
                return Err(Error::invalid(format!(
                    "cluster id {} not yet issued",
                    c.id
                )));
            }
            for &j in &c.members {
                if self.assignment.get(j) != Some(&c.id) {
                    return Err(Error::invalid(format!(
                        "player {j} listed in cluster {} but assigned elsewhere",
                        c.id
                    )));
                }
            }
            seen += c.members.len();
        }
        if seen != self.assignment.len() {
            return Err(Error::invalid(format!(
                "member counts sum to {seen}, expected {}",
                self.assignment.len()
            )));
        }
        Ok(())
    }

    /// Takes player `j` out of its cluster, deleting the cluster if emptied.
    /// Returns the index of the source cluster when it survives. The state is
    /// inconsistent until the player is attached again.
    pub fn detach(&mut self, j: usize, data: &PlayerData) -> Option<usize> {
        let idx = self
            .cluster_index(self.assignment[j])
            .expect("player assigned to live cluster");
        let cluster = &mut self.clusters[idx];
        cluster.members.remove(&j);
        if cluster.members.is_empty() {
            self.clusters.remove(idx);
            None
        } else {
            cluster.stats = pooled_stats(&cluster.members, data);
            Some(idx)
        }
    }

    pub fn attach(&mut self, j: usize, idx: usize, data: &PlayerData) {
        let cluster = &mut self.clusters[idx];
        cluster.members.insert(j);
        cluster.stats = pooled_stats(&cluster.members, data);
        self.assignment[j] = cluster.id;
    }

    /// Opens a new singleton cluster for `j`; returns its index.
    pub fn open_cluster(&mut self, j: usize, mean: Vec<f64>, data: &PlayerData) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        let members: BTreeSet<usize> = [j].into();
        self.clusters.push(Cluster {
            id,
            mean,
            stats: pooled_stats(&members, data),
            members,
        });
        self.assignment[j] = id;
        self.clusters.len() - 1
    }
}

/// `-(1 / 2 sigma2) * sum_m (r_jm - x_jm . candidate)^2`, from cached statistics.
pub fn player_loglik(stats: &SuffStats, candidate: &[f64], sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    if candidate.len() != stats.p {
        return Err(Error::WidthMismatch {
            expected: stats.p,
            got: candidate.len(),
        });
    }
    let rss = stats.rtr - 2.0 * dot(candidate, &stats.xtr) + quad_form(&stats.xtx, candidate);
    Ok(-rss / (2.0 * sigma2))
}

/// Normalises log weights into probabilities with log-sum-exp.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::DegenerateWeights);
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Unnormalised log weights `ln n_k + loglik(mean_k)` for every cluster
/// followed by `ln omega + loglik(fresh_draw)` for a new cluster.
pub fn reassignment_log_weights(
    stats: &SuffStats,
    state: &PartitionState,
    fresh_draw: &[f64],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(state.clusters.len() + 1);
    for c in &state.clusters {
        out.push((c.size() as f64).ln() + player_loglik(stats, &c.mean, state.sigma2)?);
    }
    out.push(state.omega.ln() + player_loglik(stats, fresh_draw, state.sigma2)?);
    Ok(out)
}

/// Probabilities of joining each current cluster, or a new one at
/// `fresh_draw` (last entry). The player must already be detached from
/// `state` so the counts exclude it.
pub fn reassignment_probs(
    stats: &SuffStats,
    state: &PartitionState,
    fresh_draw: &[f64],
) -> Result<Vec<f64>> {
    normalize_log_weights(&reassignment_log_weights(stats, state, fresh_draw)?)
}

fn posterior_system(
    stats: &SuffStats,
    base: &BaseMeasure,
    sigma2: f64,
) -> Result<(Cholesky, Vec<f64>)> {
    let p = stats.p;
    if base.dim() != p {
        return Err(Error::WidthMismatch {
            expected: p,
            got: base.dim(),
        });
    }
    let mut a: Vec<f64> = stats.xtx.iter().map(|v| v / sigma2).collect();
    let mut b: Vec<f64> = stats.xtr.iter().map(|v| v / sigma2).collect();
    for i in 0..p {
        let prec = 1.0 / base.lambda_diag[i];
        a[i * p + i] += prec;
        b[i] += base.mu[i] * prec;
    }
    Ok((Cholesky::factor(&a, p)?, b))
}

/// Posterior mode of a cluster mean: solves
/// `(X^T X / sigma2 + Lambda^-1) m = X^T r / sigma2 + Lambda^-1 mu`
/// over the members' pooled statistics.
pub fn update_cluster_mean(cluster: &Cluster, state: &PartitionState) -> Result<Vec<f64>> {
    posterior_mode(&cluster.stats, &state.base, state.sigma2)
}

pub fn posterior_mode(stats: &SuffStats, base: &BaseMeasure, sigma2: f64) -> Result<Vec<f64>> {
    let (chol, b) = posterior_system(stats, base, sigma2)?;
    Ok(chol.solve(&b))
}

impl MeanUpdate {
    pub fn compute<R: Rng + ?Sized>(
        self,
        cluster: &Cluster,
        state: &PartitionState,
        data: &PlayerData,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        match self {
            MeanUpdate::PosteriorMode => update_cluster_mean(cluster, state),
            MeanUpdate::PosteriorDraw => {
                let (chol, b) = posterior_system(&cluster.stats, &state.base, state.sigma2)?;
                let mode = chol.solve(&b);
                let z: Vec<f64> = (0..mode.len())
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                let noise = chol.solve_upper(&z);
                Ok(mode.iter().zip(noise).map(|(m, e)| m + e).collect())
            }
            MeanUpdate::MemberAverage => {
                let mut mean = vec![0.0; data.dim()];
                for &j in &cluster.members {
                    for (m, v) in mean.iter_mut().zip(&data.ols[j]) {
                        *m += v;
                    }
                }
                let n = cluster.size() as f64;
                mean.iter_mut().for_each(|m| *m /= n);
                Ok(mean)
            }
        }
    }
}

/// Within-run ranking score of a partition: the data log-likelihood at the
/// cluster means, the Chinese-restaurant partition prior up to a constant,
/// and the base-measure density of each cluster mean.
pub fn partition_score(state: &PartitionState, data: &PlayerData) -> Result<f64> {
    let mut loglik = 0.0;
    for (j, stats) in data.stats.iter().enumerate() {
        loglik += player_loglik(stats, &state.cluster_of(j).mean, state.sigma2)?;
    }
    let k = state.n_clusters() as f64;
    let mut prior = if k == 0.0 { 0.0 } else { k * state.omega.ln() };
    for c in &state.clusters {
        prior += ln_gamma(c.size() as f64);
        prior += state.base.log_density(&c.mean);
    }
    Ok(loglik + prior)
}
