use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dpcluster::PartitionState;
use crate::error::{Error, Result};
use crate::regress::{rmse, GlobalFit, HoldoutSplit, PlayerStyle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    /// Constant prediction by the mean training response.
    pub rmse_global_mean: f64,
    /// Global coefficients plus each player's least-squares offsets.
    pub rmse_ols: f64,
    /// Global coefficients plus the mean of the player's cluster.
    pub rmse_clustered: f64,
    /// Unique coefficient vectors relative to one per player: `K / n`.
    pub unique_coeff_ratio: f64,
    pub n_test: usize,
    pub n_players: usize,
    pub n_clusters: usize,
}

/// Held-out error of the three predictors on `split.test`. Players with no
/// fitted offset fall back to the global coefficients.
pub fn evaluate_models(
    split: &HoldoutSplit,
    global: &GlobalFit,
    styles: &BTreeMap<String, PlayerStyle>,
    map_state: &PartitionState,
) -> Result<ModelMetrics> {
    if split.test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if split.train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let p = global.alpha.len();
    let train_mean = split.train.iter().map(|r| r.response).sum::<f64>() / split.train.len() as f64;
    let cluster_of: BTreeMap<&str, &[f64]> = map_state
        .players
        .iter()
        .enumerate()
        .map(|(j, id)| (id.as_str(), map_state.cluster_of(j).mean.as_slice()))
        .collect();

    let zero = vec![0.0; p];
    let mut actual = Vec::with_capacity(split.test.len());
    let mut pred_mean = Vec::with_capacity(split.test.len());
    let mut pred_ols = Vec::with_capacity(split.test.len());
    let mut pred_clu = Vec::with_capacity(split.test.len());
    for row in &split.test {
        if row.covariates.width != p {
            return Err(Error::WidthMismatch {
                expected: p,
                got: row.covariates.width,
            });
        }
        let base = row.covariates.dot(&global.alpha);
        let beta = styles
            .get(&row.player_id)
            .map_or(zero.as_slice(), |s| s.beta.as_slice());
        let cluster = cluster_of
            .get(row.player_id.as_str())
            .copied()
            .unwrap_or(&zero);
        actual.push(row.response);
        pred_mean.push(train_mean);
        pred_ols.push(base + row.covariates.dot(beta));
        pred_clu.push(base + row.covariates.dot(cluster));
    }
    let n = map_state.n_players();
    Ok(ModelMetrics {
        rmse_global_mean: rmse(&pred_mean, &actual)?,
        rmse_ols: rmse(&pred_ols, &actual)?,
        rmse_clustered: rmse(&pred_clu, &actual)?,
        unique_coeff_ratio: map_state.n_clusters() as f64 / n as f64,
        n_test: split.test.len(),
        n_players: n,
        n_clusters: map_state.n_clusters(),
    })
}
