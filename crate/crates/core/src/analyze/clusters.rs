use serde::{Deserialize, Serialize};

use crate::dpcluster::PartitionState;
use crate::ingest::{ColumnKind, CovariateVocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    /// Sizes of clusters with at least `min_size` members, descending.
    pub sizes: Vec<usize>,
    /// `(size, number of clusters of that size)`, ascending by size.
    pub histogram: Vec<(usize, usize)>,
    pub min_size: usize,
    pub n_clusters: usize,
    pub top_m: usize,
    /// Fraction of all players inside the `top_m` largest reported clusters.
    pub top_share: f64,
}

pub fn cluster_size_distribution(
    state: &PartitionState,
    min_size: usize,
    top_m: usize,
) -> SizeDistribution {
    let mut sizes: Vec<usize> = state
        .sizes()
        .into_iter()
        .filter(|s| *s >= min_size)
        .collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let mut histogram: Vec<(usize, usize)> = Vec::new();
    for &s in sizes.iter().rev() {
        match histogram.last_mut() {
            Some((size, count)) if *size == s => *count += 1,
            _ => histogram.push((s, 1)),
        }
    }
    let n = state.n_players().max(1) as f64;
    let top_share = sizes.iter().take(top_m).sum::<usize>() as f64 / n;
    SizeDistribution {
        n_clusters: sizes.len(),
        sizes,
        histogram,
        min_size,
        top_m,
        top_share,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCoefficient {
    pub column: usize,
    pub kind: ColumnKind,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StylePattern {
    AllStars,
    MapSpecialists,
    GameSpecialists,
    RoleSpecialists,
    Mixed,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster_id: u64,
    pub size: usize,
    pub share: f64,
    pub coefficients: Vec<LabeledCoefficient>,
    /// Coefficients with `|value| >= threshold`, largest magnitude first.
    pub top: Vec<LabeledCoefficient>,
    pub pattern: StylePattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopClusters {
    pub reports: Vec<ClusterReport>,
    /// Set when fewer than the requested number of clusters exist.
    pub truncated: bool,
}

/// Heuristic archetype of a coefficient vector, read from its largest
/// positive entries.
pub fn classify_pattern(top: &[LabeledCoefficient]) -> StylePattern {
    let positive: Vec<&LabeledCoefficient> = top.iter().filter(|c| c.value > 0.0).collect();
    let Some(lead) = positive.first() else {
        return if top.is_empty() {
            StylePattern::Flat
        } else {
            StylePattern::Mixed
        };
    };
    match lead.kind {
        ColumnKind::Intercept => {
            let runner_up = top.iter().find(|c| c.kind != ColumnKind::Intercept);
            if runner_up.is_none_or(|c| c.value.abs() < 0.5 * lead.value) {
                StylePattern::AllStars
            } else {
                StylePattern::Mixed
            }
        }
        ColumnKind::Map => {
            if positive.get(1).is_some_and(|c| c.kind == ColumnKind::Map) {
                StylePattern::MapSpecialists
            } else {
                StylePattern::Mixed
            }
        }
        ColumnKind::GameType | ColumnKind::Rank => StylePattern::GameSpecialists,
        ColumnKind::Role => StylePattern::RoleSpecialists,
    }
}

pub fn cluster_report(
    state: &PartitionState,
    index: usize,
    vocab: &CovariateVocabulary,
    threshold: f64,
) -> ClusterReport {
    let cluster = &state.clusters[index];
    let coefficients: Vec<LabeledCoefficient> = cluster
        .mean
        .iter()
        .enumerate()
        .map(|(c, v)| {
            let label = vocab.label(c).expect("mean width matches vocabulary");
            LabeledCoefficient {
                column: c,
                kind: label.kind,
                name: label.name,
                value: *v,
            }
        })
        .collect();
    let mut top: Vec<LabeledCoefficient> = coefficients
        .iter()
        .filter(|c| c.value.abs() >= threshold)
        .cloned()
        .collect();
    top.sort_by(|a, b| {
        b.value
            .abs()
            .total_cmp(&a.value.abs())
            .then(a.column.cmp(&b.column))
    });
    ClusterReport {
        cluster_id: cluster.id,
        size: cluster.size(),
        share: cluster.size() as f64 / state.n_players().max(1) as f64,
        pattern: classify_pattern(&top),
        coefficients,
        top,
    }
}

/// Reports for the `m` largest clusters (ties broken by lower id).
pub fn top_cluster_reports(
    state: &PartitionState,
    vocab: &CovariateVocabulary,
    m: usize,
    threshold: f64,
) -> TopClusters {
    let mut order: Vec<usize> = (0..state.n_clusters()).collect();
    order.sort_by(|&a, &b| {
        state.clusters[b]
            .size()
            .cmp(&state.clusters[a].size())
            .then(state.clusters[a].id.cmp(&state.clusters[b].id))
    });
    let truncated = m > order.len();
    TopClusters {
        reports: order
            .into_iter()
            .take(m)
            .map(|i| cluster_report(state, i, vocab, threshold))
            .collect(),
        truncated,
    }
}
