use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, CovariateVocabulary, DesignRow};

pub const DEFAULT_ALPHA_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub dof: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub count: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// `None` when the test is undefined (fewer than two values or zero variance).
    pub test: Option<TTest>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    /// `Intercept` stands for the overall category.
    pub kind: ColumnKind,
    pub name: String,
    /// `None` marks a category the player never played.
    pub summary: Option<CategorySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerProfile {
    pub player_id: String,
    pub global_mean: f64,
    pub alpha_level: f64,
    pub entries: Vec<ProfileEntry>,
}

impl PlayerProfile {
    pub fn entry(&self, kind: ColumnKind, name: &str) -> Option<&ProfileEntry> {
        self.entries
            .iter()
            .find(|e| e.kind == kind && e.name == name)
    }

    pub fn overall(&self) -> &CategorySummary {
        self.entries[0]
            .summary
            .as_ref()
            .expect("overall category is never empty")
    }
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-sided one-sample t-test against `mu0`.
pub fn one_sample_t_test(values: &[f64], mu0: f64) -> Option<TTest> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return None;
    }
    let dof = (n - 1) as f64;
    let t = (mean - mu0) / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).ok()?;
    let p_value = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Some(TTest { t, dof, p_value })
}

pub fn summarize_category(
    values: &[f64],
    global_mean: f64,
    alpha_level: f64,
) -> Option<CategorySummary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let test = one_sample_t_test(values, global_mean);
    Some(CategorySummary {
        count: values.len(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        significant: test.as_ref().is_some_and(|t| t.p_value < alpha_level),
        test,
    })
}

/// Log-score distribution of one player overall and per role, game type and
/// map. Every vocabulary category appears, absent ones with no summary.
pub fn player_profile(
    player_id: &str,
    rows: &[DesignRow],
    vocab: &CovariateVocabulary,
    global_mean: f64,
    alpha_level: f64,
) -> Result<PlayerProfile> {
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::invalid(format!(
            "alpha level {alpha_level} not in (0, 1)"
        )));
    }
    let mine: Vec<&DesignRow> = rows.iter().filter(|r| r.player_id == player_id).collect();
    if mine.is_empty() {
        return Err(Error::UnknownPlayer(player_id.to_string()));
    }
    let width = vocab.total_width();
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); width];
    for row in &mine {
        if row.covariates.width != width {
            return Err(Error::WidthMismatch {
                expected: width,
                got: row.covariates.width,
            });
        }
        buckets[0].push(row.response);
        for (c, v) in row.covariates.iter() {
            if c >= vocab.role_offset() && v != 0.0 {
                buckets[c].push(row.response);
            }
        }
    }
    let mut entries = vec![ProfileEntry {
        kind: ColumnKind::Intercept,
        name: "overall".into(),
        summary: summarize_category(&buckets[0], global_mean, alpha_level),
    }];
    for (c, values) in buckets.iter().enumerate().skip(vocab.role_offset()) {
        let label = vocab.label(c).expect("column within vocabulary");
        entries.push(ProfileEntry {
            kind: label.kind,
            name: label.name,
            summary: summarize_category(values, global_mean, alpha_level),
        });
    }
    Ok(PlayerProfile {
        player_id: player_id.to_string(),
        global_mean,
        alpha_level,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{encode_match, MatchRecord};

    #[test]
    fn quartiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.75), 3.25);
        assert_eq!(quantile_sorted(&[5.0], 0.75), 5.0);
    }

    #[test]
    fn t_statistic_matches_hand_computation() {
        // 30 values with mean 9 and sample sd exactly 0.5.
        let half = 0.5 * (29.0f64 / 30.0).sqrt();
        let values: Vec<f64> = (0..30)
            .map(|i| if i % 2 == 0 { 9.0 + half } else { 9.0 - half })
            .collect();
        let t = one_sample_t_test(&values, 8.0).unwrap();
        let expected = 1.0 / (0.5 / 30f64.sqrt());
        assert!((t.t - expected).abs() < 1e-9, "{} vs {}", t.t, expected);
        assert!((t.t - 10.95).abs() < 0.01);
        assert!(t.p_value < 1e-10);
    }

    #[test]
    fn degenerate_categories_are_not_flagged() {
        assert!(one_sample_t_test(&[3.0], 0.0).is_none());
        assert!(one_sample_t_test(&[3.0, 3.0, 3.0], 0.0).is_none());
        let s = summarize_category(&[3.0], 0.0, 0.05).unwrap();
        assert!(!s.significant);
    }

    #[test]
    fn absent_categories_and_count_identities() {
        let vocab =
            CovariateVocabulary::new(vec!["a", "b", "c"], vec!["g1", "g2"], vec!["m1", "m2"]);
        let rec = |id: &str, roles: &[&str], g: &str, m: &str, score: u64| MatchRecord {
            player_id: "p".into(),
            match_id: id.into(),
            score,
            duration: 900.0,
            rank: 10,
            roles: roles.iter().map(|s| s.to_string()).collect(),
            game_type: g.into(),
            map_name: m.into(),
            timestamp: None,
            extra: Default::default(),
        };
        let rows: Vec<DesignRow> = [
            rec("1", &["a", "b"], "g1", "m1", 1000),
            rec("2", &["a"], "g1", "m1", 2000),
            rec("3", &["b"], "g1", "m1", 3000),
        ]
        .iter()
        .map(|r| encode_match(r, &vocab).unwrap())
        .collect();
        let prof = player_profile("p", &rows, &vocab, 7.0, 0.05).unwrap();
        assert_eq!(prof.overall().count, 3);
        assert!(prof.entry(ColumnKind::Role, "c").unwrap().summary.is_none());
        assert!(prof
            .entry(ColumnKind::GameType, "g2")
            .unwrap()
            .summary
            .is_none());
        let sum = |k: ColumnKind| -> usize {
            prof.entries
                .iter()
                .filter(|e| e.kind == k)
                .filter_map(|e| e.summary.as_ref().map(|s| s.count))
                .sum()
        };
        assert_eq!(sum(ColumnKind::GameType), 3);
        assert_eq!(sum(ColumnKind::Map), 3);
        assert_eq!(sum(ColumnKind::Role), 4);
        assert!(matches!(
            player_profile("q", &rows, &vocab, 7.0, 0.05),
            Err(Error::UnknownPlayer(_))
        ));
    }
}
