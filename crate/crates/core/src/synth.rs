//! Synthetic match logs with planted play styles.
//!
//! Responses follow `y = x.(alpha + beta_style) + N(0, noise_sd^2)` and are
//! written as integer scores `max(round(exp(y)), 101)`, so every generated
//! row survives the ingest filter. Each planted style also raises the
//! probability of choosing the roles, game types and maps it is good at.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hash;
use std::io::Write;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, CovariateVocabulary, MatchRecord, MAX_RANK};

const ROLE_NAMES: [&str; 9] = [
    "assault",
    "engineer",
    "support",
    "recon",
    "armored_land",
    "unarmored_land",
    "helicopter",
    "boat",
    "jet",
];

const GAME_NAMES: [&str; 8] = [
    "conquest",
    "rush",
    "team_deathmatch",
    "squad_deathmatch",
    "squad_rush",
    "conquest_assault",
    "tank_superiority",
    "gun_master",
];

const MAP_NAMES: [&str; 10] = [
    "Grand Bazaar",
    "Operation Metro",
    "Noshahr Canals",
    "Caspian Border",
    "Damavand Peak",
    "Kharg Island",
    "Operation Firestorm",
    "Seine Crossing",
    "Tehran Highway",
    "Gulf of Oman",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_players: usize,
    pub n_clusters: usize,
    /// Inclusive range of matches per player.
    pub matches_per_player: (usize, usize),
    pub n_roles: usize,
    pub n_game_types: usize,
    pub n_maps: usize,
    pub noise_sd: f64,
    /// Minimum distance between planted style vectors, measured after
    /// removing directions the one-hot blocks cannot identify.
    pub style_separation: f64,
    pub hybrid_fraction: f64,
    /// Hybrid players switch generating style every this many matches.
    pub hybrid_block: usize,
    /// Choice-weight multiplier for the categories a style excels at.
    pub preference: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_players: 120,
            n_clusters: 5,
            matches_per_player: (150, 150),
            n_roles: 5,
            n_game_types: 4,
            n_maps: 6,
            noise_sd: 0.3,
            style_separation: 1.0,
            hybrid_fraction: 0.0,
            hybrid_block: 10,
            preference: 4.0,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if self.n_players == 0 {
            return bad("n_players must be positive".into());
        }
        if self.n_clusters == 0 || self.n_clusters > self.n_players {
            return bad(format!(
                "n_clusters = {} must lie in 1..={}",
                self.n_clusters, self.n_players
            ));
        }
        let (lo, hi) = self.matches_per_player;
        if lo == 0 || lo > hi {
            return bad(format!("matches_per_player range {lo}..={hi} is empty"));
        }
        if self.n_roles == 0 || self.n_game_types == 0 || self.n_maps == 0 {
            return bad("vocabulary sizes must be positive".into());
        }
        if !(self.noise_sd > 0.0) || !(self.style_separation > 0.0) {
            return bad("noise_sd and style_separation must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.hybrid_fraction) {
            return bad("hybrid_fraction must lie in [0, 1]".into());
        }
        if self.hybrid_fraction > 0.0 && self.n_clusters < 2 {
            return bad("hybrid players need at least two planted styles".into());
        }
        if self.hybrid_block == 0 || !(self.preference >= 1.0) {
            return bad("hybrid_block must be positive and preference at least 1".into());
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> CovariateVocabulary {
        fn names(base: &[&str], n: usize, prefix: &str) -> Vec<String> {
            (0..n)
                .map(|i| match base.get(i) {
                    Some(s) => s.to_string(),
                    None => format!("{prefix}_{i:02}"),
                })
                .collect()
        }
        CovariateVocabulary::new(
            names(&ROLE_NAMES, self.n_roles, "role"),
            names(&GAME_NAMES, self.n_game_types, "game"),
            names(&MAP_NAMES, self.n_maps, "map"),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedLabel {
    pub primary: usize,
    /// Second generating style of a hybrid player.
    pub secondary: Option<usize>,
}

impl PlantedLabel {
    pub fn is_hybrid(&self) -> bool {
        self.secondary.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    pub vocabulary: CovariateVocabulary,
    pub alpha: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub labels: BTreeMap<String, PlantedLabel>,
    /// Generating style of every emitted row, in log order.
    pub row_styles: Vec<usize>,
}

impl GroundTruth {
    /// Primary planted style per player.
    pub fn primary_labels(&self) -> BTreeMap<String, usize> {
        self.labels
            .iter()
            .map(|(k, v)| (k.clone(), v.primary))
            .collect()
    }

    /// Noise-free log score of the `index`-th emitted row.
    pub fn exact_response(&self, index: usize, record: &MatchRecord) -> Result<f64> {
        let row = crate::ingest::encode_match(record, &self.vocabulary)?;
        let style = &self.means[self.row_styles[index]];
        Ok(row
            .covariates
            .iter()
            .map(|(c, v)| v * (self.alpha[c] + style[c]))
            .sum())
    }
}

/// Basis of the coefficient directions that never change a prediction:
/// intercept minus the game-type block and intercept minus the map block.
fn null_directions(vocab: &CovariateVocabulary) -> Vec<Vec<f64>> {
    let p = vocab.total_width();
    let mut dirs = Vec::new();
    for (start, len) in [
        (vocab.game_offset(), vocab.game_types.len()),
        (vocab.map_offset(), vocab.maps.len()),
    ] {
        let mut v = vec![0.0; p];
        v[0] = 1.0;
        v[start..start + len].iter_mut().for_each(|x| *x = -1.0);
        dirs.push(v);
    }
    // Gram-Schmidt
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in dirs {
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

fn identifiable_distance(a: &[f64], b: &[f64], basis: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    for v in basis {
        let proj: f64 = d.iter().zip(v).map(|(x, y)| x * y).sum();
        d.iter_mut().zip(v).for_each(|(x, y)| *x -= proj * y);
    }
    d.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Style 0 is a flat intercept boost; later styles put the same amplitude on
/// two columns drawn from one archetype (two maps, two game types, a role
/// with a game type, a role with a map).
fn plant_styles<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    vocab: &CovariateVocabulary,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let p = vocab.total_width();
    let amp = spec.style_separation;
    let basis = null_directions(vocab);
    let roles: Vec<usize> = (vocab.role_offset()..vocab.game_offset()).collect();
    let games: Vec<usize> = (vocab.game_offset()..vocab.map_offset()).collect();
    let maps: Vec<usize> = (vocab.map_offset()..p).collect();

    let mut styles: Vec<Vec<f64>> = Vec::with_capacity(spec.n_clusters);
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut all_star = vec![0.0; p];
    all_star[0] = amp;
    styles.push(all_star);
    for g in 1..spec.n_clusters {
        let mut placed = false;
        for attempt in 0..2000 {
            let (pool_a, pool_b) = match (g + attempt) % 4 {
                1 => (&maps, &maps),
                2 => (&games, &games),
                3 => (&roles, &games),
                _ => (&roles, &maps),
            };
            let a = pool_a[rng.random_range(0..pool_a.len())];
            let b = pool_b[rng.random_range(0..pool_b.len())];
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if used.contains(&key) {
                continue;
            }
            let mut style = vec![0.0; p];
            style[a] = amp;
            style[b] = amp;
            let ok = styles
                .iter()
                .all(|s| identifiable_distance(s, &style, &basis) >= spec.style_separation - 1e-12);
            if ok {
                used.insert(key);
                styles.push(style);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InfeasibleSpec(format!(
                "cannot place {} styles at separation {} in width {p}",
                spec.n_clusters, spec.style_separation
            )));
        }
    }
    Ok(styles)
}

fn choice_weights(
    vocab: &CovariateVocabulary,
    style: &[f64],
    kind: ColumnKind,
    boost: f64,
) -> Vec<f64> {
    let (start, len) = match kind {
        ColumnKind::Role => (vocab.role_offset(), vocab.roles.len()),
        ColumnKind::GameType => (vocab.game_offset(), vocab.game_types.len()),
        _ => (vocab.map_offset(), vocab.maps.len()),
    };
    (start..start + len)
        .map(|c| if style[c] > 0.0 { boost } else { 1.0 })
        .collect()
}

/// Generates the match log and its ground truth; deterministic in `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<(Vec<MatchRecord>, GroundTruth)> {
    spec.validate()?;
    let vocab = spec.vocabulary();
    let p = vocab.total_width();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let effect = Normal::new(0.0, 0.15).expect("valid sd");
    let mut alpha = vec![0.0; p];
    alpha[0] = 7.5;
    alpha[1] = 0.004;
    for a in alpha.iter_mut().skip(2) {
        *a = effect.sample(&mut rng);
    }
    let means = plant_styles(spec, &vocab, &mut rng)?;

    let n = spec.n_players;
    let g = spec.n_clusters;
    let mut primary: Vec<usize> = (0..n).map(|i| i % g).collect();
    primary.shuffle(&mut rng);
    let n_hybrid = (spec.hybrid_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut secondary: Vec<Option<usize>> = vec![None; n];
    for &j in order.iter().take(n_hybrid) {
        let other = (primary[j] + rng.random_range(1..g)) % g;
        secondary[j] = Some(other);
    }

    let noise = Normal::new(0.0, spec.noise_sd).expect("validated sd");
    let per_style: Vec<[WeightedIndex<f64>; 3]> = means
        .iter()
        .map(|s| {
            [ColumnKind::Role, ColumnKind::GameType, ColumnKind::Map].map(|k| {
                WeightedIndex::new(choice_weights(&vocab, s, k, spec.preference))
                    .expect("positive weights")
            })
        })
        .collect();

    let mut records = Vec::new();
    let mut row_styles = Vec::new();
    let mut labels = BTreeMap::new();
    for j in 0..n {
        let player_id = format!("player_{j:04}");
        labels.insert(
            player_id.clone(),
            PlantedLabel {
                primary: primary[j],
                secondary: secondary[j],
            },
        );
        let n_matches = rng.random_range(spec.matches_per_player.0..=spec.matches_per_player.1);
        for m in 0..n_matches {
            let style = match secondary[j] {
                Some(h) if (m / spec.hybrid_block) % 2 == 1 => h,
                _ => primary[j],
            };
            let [role_w, game_w, map_w] = &per_style[style];
            let mut roles = BTreeSet::new();
            roles.insert(vocab.roles[role_w.sample(&mut rng)].clone());
            if vocab.roles.len() > 1 && rng.random_bool(0.25) {
                while roles.len() < 2 {
                    roles.insert(vocab.roles[role_w.sample(&mut rng)].clone());
                }
            }
            let game_type = vocab.game_types[game_w.sample(&mut rng)].clone();
            let map_name = vocab.maps[map_w.sample(&mut rng)].clone();
            let rank = rng.random_range(0..=MAX_RANK as u32);

            let mut y = alpha[0] + means[style][0] + (alpha[1] + means[style][1]) * f64::from(rank);
            let cols = roles
                .iter()
                .map(|r| vocab.role_column(r))
                .chain([vocab.game_column(&game_type), vocab.map_column(&map_name)]);
            for c in cols {
                let c = c.expect("name from vocabulary");
                y += alpha[c] + means[style][c];
            }
            y += noise.sample(&mut rng);
            let score = (y.exp().round() as u64).max(101);
            let duration = f64::from(rng.random_range(301u32..=1800));

            records.push(MatchRecord {
                player_id: player_id.clone(),
                match_id: format!("{player_id}-m{m:04}"),
                score,
                duration,
                rank,
                roles,
                game_type,
                map_name,
                timestamp: Some(1_320_000_000 + (m as i64) * 3600),
                extra: BTreeMap::new(),
            });
            row_styles.push(style);
        }
    }
    Ok((
        records,
        GroundTruth {
            spec: spec.clone(),
            vocabulary: vocab,
            alpha,
            means,
            labels,
            row_styles,
        },
    ))
}

pub fn write_match_log<W: Write>(mut out: W, records: &[MatchRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index between two labelings of the same players.
pub fn adjusted_rand_index<A, B>(a: &BTreeMap<String, A>, b: &BTreeMap<String, B>) -> Result<f64>
where
    A: Ord + Hash + Clone,
    B: Ord + Hash + Clone,
{
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::invalid("partitions cover different players"));
    }
    let mut table: BTreeMap<(A, B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<B, u64> = BTreeMap::new();
    for (la, lb) in a.values().zip(b.values()) {
        *table.entry((la.clone(), lb.clone())).or_default() += 1;
        *rows.entry(la.clone()).or_default() += 1;
        *cols.entry(lb.clone()).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both labelings trivial in the same way
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
