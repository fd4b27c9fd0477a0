use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dpcluster::TraceRecord;
use crate::error::{Error, Result};

/// A player is stable above this residency fraction in one cluster.
pub const STABLE_RESIDENCY: f64 = 0.5;
/// A player is hybrid after this many switches within one cluster pair.
pub const HYBRID_TRANSITIONS: usize = 4;
/// Players with neither flag who visited more clusters than this are unstable.
pub const UNSTABLE_VISITS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityLabel {
    Stable,
    Hybrid,
    Unstable,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub player_id: String,
    pub clusters_visited: usize,
    pub max_residency_fraction: f64,
    pub max_pair_transitions: usize,
    /// Residency fraction per visited cluster id.
    pub residency: BTreeMap<u64, f64>,
    pub stable: bool,
    pub hybrid: bool,
    /// Hybrid takes precedence over stable when both flags are set.
    pub label: StabilityLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub n_players: usize,
    pub stable_fraction: f64,
    pub hybrid_fraction: f64,
    /// `(clusters visited, number of players)`, ascending.
    pub visit_distribution: Vec<(usize, usize)>,
}

/// Per-player residency and transition statistics over the recorded
/// iterations strictly after `burn_in`.
pub fn classify_stability(
    players: &[String],
    records: &[TraceRecord],
    burn_in: u64,
) -> Result<Vec<StabilityRecord>> {
    let post: Vec<&TraceRecord> = records.iter().filter(|r| r.iteration > burn_in).collect();
    if post.is_empty() {
        return Err(Error::Empty("post burn-in trace"));
    }
    let total = post.len() as f64;
    let mut out = Vec::with_capacity(players.len());
    for (j, player) in players.iter().enumerate() {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        let mut pairs: BTreeMap<(u64, u64), usize> = BTreeMap::new();
        let mut prev: Option<u64> = None;
        for r in &post {
            let id = *r
                .assignment
                .get(j)
                .ok_or_else(|| Error::invalid("trace record shorter than player list"))?;
            *counts.entry(id).or_default() += 1;
            if let Some(p) = prev {
                if p != id {
                    *pairs.entry((p.min(id), p.max(id))).or_default() += 1;
                }
            }
            prev = Some(id);
        }
        let residency: BTreeMap<u64, f64> = counts
            .iter()
            .map(|(id, c)| (*id, *c as f64 / total))
            .collect();
        let max_residency_fraction = residency.values().copied().fold(0.0, f64::max);
        let max_pair_transitions = pairs.values().copied().max().unwrap_or(0);
        let stable = max_residency_fraction > STABLE_RESIDENCY;
        let hybrid = max_pair_transitions >= HYBRID_TRANSITIONS;
        let label = if hybrid {
            StabilityLabel::Hybrid
        } else if stable {
            StabilityLabel::Stable
        } else if counts.len() > UNSTABLE_VISITS {
            StabilityLabel::Unstable
        } else {
            StabilityLabel::Other
        };
        out.push(StabilityRecord {
            player_id: player.clone(),
            clusters_visited: counts.len(),
            max_residency_fraction,
            max_pair_transitions,
            residency,
            stable,
            hybrid,
            label,
        });
    }
    Ok(out)
}

pub fn summarize_stability(records: &[StabilityRecord]) -> StabilitySummary {
    let n = records.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let mut visits: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records {
        *visits.entry(r.clusters_visited).or_default() += 1;
    }
    StabilitySummary {
        n_players: n,
        stable_fraction: frac(records.iter().filter(|r| r.stable).count()),
        hybrid_fraction: frac(records.iter().filter(|r| r.hybrid).count()),
        visit_distribution: visits.into_iter().collect(),
    }
}
