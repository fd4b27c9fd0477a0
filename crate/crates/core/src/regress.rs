//! Two-stage least-squares fit of the global and player-specific models.
//!
//! Stage one fits shared coefficients `alpha` over all rows with a tiny ridge
//! on every column but the intercept. Stage two fits each player's offset
//! `beta_j` by ridge regression of that player's residuals `y - x.alpha`.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DesignRow, SparseRow};
use crate::linalg::{cholesky_solve, gram_rank, trace};

/// Relative ridge used to stabilise the global fit.
pub const GLOBAL_RIDGE_SCALE: f64 = 1e-8;
/// Relative ridge used for the per-player fits.
pub const PLAYER_RIDGE_SCALE: f64 = 1e-6;

/// Accumulated `X^T X`, `X^T r` and `r^T r` over a set of rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuffStats {
    pub p: usize,
    pub n_rows: usize,
    pub xtx: Vec<f64>,
    pub xtr: Vec<f64>,
    pub rtr: f64,
}

impl SuffStats {
    pub fn zeros(p: usize) -> Self {
        SuffStats {
            p,
            n_rows: 0,
            xtx: vec![0.0; p * p],
            xtr: vec![0.0; p],
            rtr: 0.0,
        }
    }

    pub fn add_row(&mut self, x: &SparseRow, r: f64) {
        let p = self.p;
        for (i, vi) in x.iter() {
            self.xtr[i] += vi * r;
            for (j, vj) in x.iter() {
                self.xtx[i * p + j] += vi * vj;
            }
        }
        self.rtr += r * r;
        self.n_rows += 1;
    }

    pub fn add(&mut self, other: &SuffStats) {
        for (a, b) in self.xtx.iter_mut().zip(&other.xtx) {
            *a += b;
        }
        for (a, b) in self.xtr.iter_mut().zip(&other.xtr) {
            *a += b;
        }
        self.rtr += other.rtr;
        self.n_rows += other.n_rows;
    }

    pub fn rank(&self) -> usize {
        gram_rank(&self.xtx, self.p)
    }

    /// Residual sum of squares `sum (r - x.c)^2` evaluated from the statistics.
    pub fn rss(&self, c: &[f64]) -> f64 {
        self.rtr - 2.0 * crate::linalg::dot(c, &self.xtr) + crate::linalg::quad_form(&self.xtx, c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFit {
    pub alpha: Vec<f64>,
    /// Residual variance estimate with denominator `n_obs - rank`.
    pub mse: f64,
    pub n_obs: usize,
    pub rank: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerStyle {
    pub player_id: String,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerEffects {
    pub styles: BTreeMap<String, PlayerStyle>,
    /// Mean squared error of the full player-specific model, used as the
    /// sampler's plug-in residual variance.
    pub mse: f64,
    pub lambda_p: f64,
}

fn width_of(rows: &[DesignRow]) -> Result<usize> {
    let p = rows
        .first()
        .ok_or(Error::Empty("design rows"))?
        .covariates
        .width;
    for row in rows {
        if row.covariates.width != p {
            return Err(Error::WidthMismatch {
                expected: p,
                got: row.covariates.width,
            });
        }
        if !row.response.is_finite() || row.covariates.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design row"));
        }
    }
    Ok(p)
}

pub fn fit_global(rows: &[DesignRow]) -> Result<GlobalFit> {
    fit_global_with(rows, GLOBAL_RIDGE_SCALE)
}

/// Least squares with ridge `lambda = ridge_scale * trace(X^T X) / p` on all
/// columns except the intercept (column 0).
pub fn fit_global_with(rows: &[DesignRow], ridge_scale: f64) -> Result<GlobalFit> {
    let p = width_of(rows)?;
    if rows.len() < p {
        return Err(Error::Underdetermined {
            rows: rows.len(),
            cols: p,
        });
    }
    let mut stats = SuffStats::zeros(p);
    for row in rows {
        stats.add_row(&row.covariates, row.response);
    }
    let lambda = ridge_scale * trace(&stats.xtx, p) / p as f64;
    let mut a = stats.xtx.clone();
    for i in 1..p {
        a[i * p + i] += lambda;
    }
    let alpha = cholesky_solve(&a, p, &stats.xtr)?;
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("global coefficients"));
    }
    let rss: f64 = rows
        .iter()
        .map(|r| {
            let e = r.response - r.covariates.dot(&alpha);
            e * e
        })
        .sum();
    let rank = stats.rank();
    let dof = rows.len().saturating_sub(rank);
    let mse = if dof == 0 { 0.0 } else { rss / dof as f64 };
    Ok(GlobalFit {
        alpha,
        mse,
        n_obs: rows.len(),
        rank,
        lambda,
    })
}

/// Row indices per player, players in lexicographic order.
pub fn group_by_player(rows: &[DesignRow]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(r.player_id.as_str()).or_default().push(i);
    }
    groups
}

/// Per-player statistics on the residualised responses `y - x.alpha`.
pub fn player_suffstats(rows: &[DesignRow], alpha: &[f64]) -> Result<BTreeMap<String, SuffStats>> {
    let p = width_of(rows)?;
    if alpha.len() != p {
        return Err(Error::WidthMismatch {
            expected: p,
            got: alpha.len(),
        });
    }
    let mut out = BTreeMap::new();
    for (player, idx) in group_by_player(rows) {
        let mut s = SuffStats::zeros(p);
        for &i in &idx {
            let row = &rows[i];
            s.add_row(&row.covariates, row.response - row.covariates.dot(alpha));
        }
        out.insert(player.to_string(), s);
    }
    Ok(out)
}

/// `PLAYER_RIDGE_SCALE` times the median column energy per player.
///
/// The median is insensitive to the rank column, whose raw scale would
/// otherwise dominate a trace-based choice.
pub fn default_lambda_p(rows: &[DesignRow]) -> Result<f64> {
    let p = width_of(rows)?;
    let mut energy = vec![0.0; p];
    for row in rows {
        for (c, v) in row.covariates.iter() {
            energy[c] += v * v;
        }
    }
    let players = group_by_player(rows).len() as f64;
    let mut e: Vec<f64> = energy.into_iter().filter(|v| *v > 0.0).collect();
    e.sort_by(f64::total_cmp);
    let median = e[e.len() / 2];
    Ok(PLAYER_RIDGE_SCALE * median / players)
}

fn ridge_solve(stats: &SuffStats, lambda: f64) -> Result<Vec<f64>> {
    let p = stats.p;
    let mut a = stats.xtx.clone();
    for i in 0..p {
        a[i * p + i] += lambda;
    }
    cholesky_solve(&a, p, &stats.xtr)
}

pub fn fit_player_effects(
    rows: &[DesignRow],
    global: &GlobalFit,
    lambda_p: f64,
) -> Result<PlayerEffects> {
    if !(lambda_p > 0.0) || !lambda_p.is_finite() {
        return Err(Error::invalid(format!(
            "lambda_p must be positive and finite, got {lambda_p}"
        )));
    }
    let stats = player_suffstats(rows, &global.alpha)?;
    let mut styles = BTreeMap::new();
    let mut rss = 0.0;
    let mut params = 0usize;
    for (player, s) in &stats {
        let beta = ridge_solve(s, lambda_p)?;
        rss += s.rss(&beta).max(0.0);
        params += s.rank();
        styles.insert(
            player.clone(),
            PlayerStyle {
                player_id: player.clone(),
                beta,
            },
        );
    }
    let n = rows.len();
    let dof = if n > params { n - params } else { n };
    Ok(PlayerEffects {
        styles,
        mse: rss / dof as f64,
        lambda_p,
    })
}

pub fn predict(effective: &[f64], row: &DesignRow) -> Result<f64> {
    if effective.len() != row.covariates.width {
        return Err(Error::WidthMismatch {
            expected: row.covariates.width,
            got: effective.len(),
        });
    }
    Ok(row.covariates.dot(effective))
}

/// Elementwise `alpha + beta`.
pub fn combine(alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    alpha.iter().zip(beta).map(|(a, b)| a + b).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSplit {
    pub train: Vec<DesignRow>,
    pub test: Vec<DesignRow>,
    pub seed: u64,
    pub fraction: f64,
}

impl HoldoutSplit {
    /// Test match ids per player.
    pub fn manifest(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for r in &self.test {
            out.entry(r.player_id.clone())
                .or_default()
                .push(r.match_id.clone());
        }
        out
    }
}

/// Holds out `floor(fraction * n_j)` uniformly chosen rows of every player.
/// Row order is preserved within both halves.
pub fn split_holdout(rows: &[DesignRow], fraction: f64, seed: u64) -> Result<HoldoutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; rows.len()];
    for idx in group_by_player(rows).values() {
        let n_test = (idx.len() as f64 * fraction + 1e-9).floor() as usize;
        for k in sample(&mut rng, idx.len(), n_test) {
            is_test[idx[k]] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (row, t) in rows.iter().zip(is_test) {
        if t {
            test.push(row.clone());
        } else {
            train.push(row.clone());
        }
    }
    Ok(HoldoutSplit {
        train,
        test,
        seed,
        fraction,
    })
}

/// Splits according to a saved manifest of test match ids.
pub fn split_from_manifest(
    rows: &[DesignRow],
    manifest: &BTreeMap<String, Vec<String>>,
    seed: u64,
    fraction: f64,
) -> HoldoutSplit {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for row in rows {
        let held = manifest
            .get(&row.player_id)
            .is_some_and(|ids| ids.contains(&row.match_id));
        if held {
            test.push(row.clone());
        } else {
            train.push(row.clone());
        }
    }
    HoldoutSplit {
        train,
        test,
        seed,
        fraction,
    }
}

pub fn rmse(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("rmse inputs"));
    }
    if predictions.len() != actuals.len() {
        return Err(Error::WidthMismatch {
            expected: actuals.len(),
            got: predictions.len(),
        });
    }
    let ss: f64 = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok((ss / predictions.len() as f64).sqrt())
}
