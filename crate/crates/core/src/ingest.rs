//! Match-log ingestion: JSONL parsing, the retention filter, the covariate
//! vocabulary and the sparse encoding of one player-match into a design row.
//!
//! Column layout of every encoded row is
//! `[intercept, rank, roles (multi-hot), game types (one-hot), maps (one-hot)]`,
//! with each block ordered lexicographically so indices are stable across runs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const MAX_RANK: i64 = 145;
/// Matches must last strictly longer than this many seconds to be kept.
pub const MIN_DURATION_SECONDS: f64 = 300.0;
/// Matches must score strictly more than this many points to be kept.
pub const MIN_SCORE: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub player_id: String,
    pub match_id: String,
    pub score: u64,
    #[serde(rename = "duration_seconds")]
    pub duration: f64,
    pub rank: u32,
    pub roles: BTreeSet<String>,
    pub game_type: String,
    pub map_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
    /// Unmodelled outcome fields (kills, deaths, ...) carried through untouched.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// Wire form; numbers are read wide so range violations get a precise message.
#[derive(Deserialize)]
struct RawRecord {
    player_id: String,
    match_id: String,
    score: i64,
    duration_seconds: f64,
    rank: i64,
    roles: Vec<String>,
    game_type: String,
    map_name: String,
    #[serde(default)]
    timestamp: Option<i64>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

impl RawRecord {
    fn validate(self, line: usize) -> Result<MatchRecord> {
        let bad = |message: String| Error::InvalidRecord { line, message };
        if self.score < 0 {
            return Err(bad(format!("score {} is negative", self.score)));
        }
        if !self.duration_seconds.is_finite() || self.duration_seconds < 0.0 {
            return Err(bad(format!(
                "duration_seconds {} must be a non-negative number",
                self.duration_seconds
            )));
        }
        if !(0..=MAX_RANK).contains(&self.rank) {
            return Err(bad(format!(
                "rank {} out of range 0-{}",
                self.rank, MAX_RANK
            )));
        }
        if self.roles.is_empty() {
            return Err(bad("roles must name at least one role".into()));
        }
        if self.game_type.is_empty() || self.map_name.is_empty() {
            return Err(bad("game_type and map_name must be non-empty".into()));
        }
        Ok(MatchRecord {
            player_id: self.player_id,
            match_id: self.match_id,
            score: self.score as u64,
            duration: self.duration_seconds,
            rank: self.rank as u32,
            roles: self.roles.into_iter().collect(),
            game_type: self.game_type,
            map_name: self.map_name,
            timestamp: self.timestamp,
            extra: self.extra,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Intercept,
    Rank,
    Role,
    GameType,
    Map,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Intercept => "intercept",
            ColumnKind::Rank => "rank",
            ColumnKind::Role => "role",
            ColumnKind::GameType => "game_type",
            ColumnKind::Map => "map",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub kind: ColumnKind,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CovariateVocabulary {
    pub roles: Vec<String>,
    pub game_types: Vec<String>,
    pub maps: Vec<String>,
}

impl CovariateVocabulary {
    /// Builds a vocabulary from arbitrary name collections; names are
    /// deduplicated and sorted.
    pub fn new<I, S>(roles: I, game_types: I, maps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted = |it: I| -> Vec<String> {
            it.into_iter()
                .map(Into::into)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        };
        CovariateVocabulary {
            roles: sorted(roles),
            game_types: sorted(game_types),
            maps: sorted(maps),
        }
    }

    pub fn total_width(&self) -> usize {
        2 + self.roles.len() + self.game_types.len() + self.maps.len()
    }

    pub fn role_offset(&self) -> usize {
        2
    }

    pub fn game_offset(&self) -> usize {
        2 + self.roles.len()
    }

    pub fn map_offset(&self) -> usize {
        2 + self.roles.len() + self.game_types.len()
    }

    pub fn role_column(&self, name: &str) -> Option<usize> {
        find(&self.roles, name).map(|i| self.role_offset() + i)
    }

    pub fn game_column(&self, name: &str) -> Option<usize> {
        find(&self.game_types, name).map(|i| self.game_offset() + i)
    }

    pub fn map_column(&self, name: &str) -> Option<usize> {
        find(&self.maps, name).map(|i| self.map_offset() + i)
    }

    pub fn label(&self, column: usize) -> Option<ColumnLabel> {
        let (kind, name) = match column {
            0 => (ColumnKind::Intercept, "intercept".to_string()),
            1 => (ColumnKind::Rank, "rank".to_string()),
            c if c < self.game_offset() => (ColumnKind::Role, self.roles[c - 2].clone()),
            c if c < self.map_offset() => (
                ColumnKind::GameType,
                self.game_types[c - self.game_offset()].clone(),
            ),
            c if c < self.total_width() => {
                (ColumnKind::Map, self.maps[c - self.map_offset()].clone())
            }
            _ => return None,
        };
        Some(ColumnLabel { kind, name })
    }

    pub fn labels(&self) -> Vec<ColumnLabel> {
        (0..self.total_width())
            .map(|c| self.label(c).expect("column in range"))
            .collect()
    }

    /// Recovers the roles, game type and map encoded in a design row.
    pub fn decode(&self, row: &SparseRow) -> Result<DecodedChoices> {
        if row.width != self.total_width() {
            return Err(Error::WidthMismatch {
                expected: self.total_width(),
                got: row.width,
            });
        }
        let mut roles = BTreeSet::new();
        let mut games = Vec::new();
        let mut maps = Vec::new();
        for (c, v) in row.iter() {
            if v == 0.0 {
                continue;
            }
            let label = self.label(c).expect("width checked");
            match label.kind {
                ColumnKind::Role => {
                    roles.insert(label.name);
                }
                ColumnKind::GameType => games.push(label.name),
                ColumnKind::Map => maps.push(label.name),
                _ => {}
            }
        }
        if games.len() != 1 || maps.len() != 1 {
            return Err(Error::invalid(
                "row must carry exactly one game type and one map",
            ));
        }
        Ok(DecodedChoices {
            roles,
            game_type: games.pop().unwrap(),
            map_name: maps.pop().unwrap(),
        })
    }
}

fn find(names: &[String], name: &str) -> Option<usize> {
    names.binary_search_by(|n| n.as_str().cmp(name)).ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedChoices {
    pub roles: BTreeSet<String>,
    pub game_type: String,
    pub map_name: String,
}

/// Sparse covariate vector with strictly increasing column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub width: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseRow {
            width: dense.len(),
            indices,
            values,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn get(&self, column: usize) -> f64 {
        match self.indices.binary_search(&column) {
            Ok(i) => self.values[i],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        for (c, v) in self.iter() {
            out[c] = v;
        }
        out
    }

    pub fn dot(&self, coefficients: &[f64]) -> f64 {
        self.iter().map(|(c, v)| v * coefficients[c]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub player_id: String,
    pub match_id: String,
    /// Natural log of the match score.
    pub response: f64,
    pub covariates: SparseRow,
}

#[derive(Debug, Clone)]
pub enum VocabMode {
    Discover,
    Fixed(CovariateVocabulary),
}

/// Parses a JSONL match log. Blank lines are skipped; line numbers in errors
/// are 1-based.
pub fn parse_match_log<R: BufRead>(
    source: R,
    mode: VocabMode,
) -> Result<(Vec<MatchRecord>, CovariateVocabulary)> {
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = raw.validate(line_no)?;
        if let VocabMode::Fixed(vocab) = &mode {
            check_known(vocab, &record, line_no)?;
        }
        records.push(record);
    }
    let vocab = match mode {
        VocabMode::Fixed(vocab) => vocab,
        VocabMode::Discover => discover_vocabulary(&records),
    };
    Ok((records, vocab))
}

fn check_known(vocab: &CovariateVocabulary, record: &MatchRecord, line: usize) -> Result<()> {
    for role in &record.roles {
        if vocab.role_column(role).is_none() {
            return Err(Error::UnknownName {
                line,
                kind: "role",
                name: role.clone(),
            });
        }
    }
    if vocab.game_column(&record.game_type).is_none() {
        return Err(Error::UnknownName {
            line,
            kind: "game type",
            name: record.game_type.clone(),
        });
    }
    if vocab.map_column(&record.map_name).is_none() {
        return Err(Error::UnknownName {
            line,
            kind: "map",
            name: record.map_name.clone(),
        });
    }
    Ok(())
}

/// Sorted union of every role, game type and map named in `records`.
pub fn discover_vocabulary(records: &[MatchRecord]) -> CovariateVocabulary {
    let mut roles = BTreeSet::new();
    let mut games = BTreeSet::new();
    let mut maps = BTreeSet::new();
    for r in records {
        roles.extend(r.roles.iter().cloned());
        games.insert(r.game_type.clone());
        maps.insert(r.map_name.clone());
    }
    CovariateVocabulary {
        roles: roles.into_iter().collect(),
        game_types: games.into_iter().collect(),
        maps: maps.into_iter().collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<MatchRecord>,
    pub dropped: usize,
}

pub fn is_retained(record: &MatchRecord) -> bool {
    record.duration > MIN_DURATION_SECONDS && record.score > MIN_SCORE
}

/// Keeps matches longer than five minutes with more than 100 points.
pub fn filter_matches(records: Vec<MatchRecord>) -> FilterOutcome {
    let before = records.len();
    let kept: Vec<_> = records.into_iter().filter(is_retained).collect();
    FilterOutcome {
        dropped: before - kept.len(),
        kept,
    }
}

pub fn encode_match(record: &MatchRecord, vocab: &CovariateVocabulary) -> Result<DesignRow> {
    let fail = |message: String| Error::Encode {
        match_id: record.match_id.clone(),
        message,
    };
    if record.score == 0 {
        return Err(fail("score is zero; log score undefined".into()));
    }
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(4 + record.roles.len());
    entries.push((0, 1.0));
    if record.rank != 0 {
        entries.push((1, f64::from(record.rank)));
    }
    for role in &record.roles {
        let c = vocab
            .role_column(role)
            .ok_or_else(|| fail(format!("unknown role `{role}`")))?;
        entries.push((c, 1.0));
    }
    let g = vocab
        .game_column(&record.game_type)
        .ok_or_else(|| fail(format!("unknown game type `{}`", record.game_type)))?;
    entries.push((g, 1.0));
    let m = vocab
        .map_column(&record.map_name)
        .ok_or_else(|| fail(format!("unknown map `{}`", record.map_name)))?;
    entries.push((m, 1.0));
    // roles come from a BTreeSet and vocab blocks are sorted, so entries are ordered
    debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
    let (indices, values) = entries.into_iter().unzip();
    Ok(DesignRow {
        player_id: record.player_id.clone(),
        match_id: record.match_id.clone(),
        response: (record.score as f64).ln(),
        covariates: SparseRow {
            width: vocab.total_width(),
            indices,
            values,
        },
    })
}

pub fn encode_all(records: &[MatchRecord], vocab: &CovariateVocabulary) -> Result<Vec<DesignRow>> {
    records.iter().map(|r| encode_match(r, vocab)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(roles: &[&str], game: &str, map: &str, rank: i64) -> String {
        serde_json::json!({
            "player_id": "p1", "match_id": "m1", "score": 2981,
            "duration_seconds": 900.0, "rank": rank, "roles": roles,
            "game_type": game, "map_name": map
        })
        .to_string()
    }

    fn record(duration: f64, score: u64) -> MatchRecord {
        MatchRecord {
            player_id: "p".into(),
            match_id: "m".into(),
            score,
            duration,
            rank: 10,
            roles: ["assault".to_string()].into(),
            game_type: "conquest".into(),
            map_name: "Grand Bazaar".into(),
            timestamp: None,
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn parses_direct_field_mapping() {
        let src = line(&["assault"], "conquest", "Grand Bazaar", 12);
        let (recs, vocab) = parse_match_log(src.as_bytes(), VocabMode::Discover).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.roles, ["assault".to_string()].into());
        assert_eq!(r.game_type, "conquest");
        assert_eq!(r.map_name, "Grand Bazaar");
        assert_eq!(r.rank, 12);
        assert_eq!(vocab.total_width(), 5);
    }

    #[test]
    fn full_sized_vocabulary_has_58_columns() {
        let mut text = String::new();
        for i in 0..30 {
            let role = format!("role{}", i % 9);
            let game = format!("game{}", i % 17);
            let map = format!("map{i}");
            text.push_str(&line(&[&role], &game, &map, 0));
            text.push('\n');
        }
        let (_, vocab) = parse_match_log(text.as_bytes(), VocabMode::Discover).unwrap();
        assert_eq!(vocab.roles.len(), 9);
        assert_eq!(vocab.game_types.len(), 17);
        assert_eq!(vocab.maps.len(), 30);
        assert_eq!(vocab.total_width(), 58);
    }

    #[test]
    fn rank_out_of_range_is_rejected() {
        let src = line(&["assault"], "conquest", "Grand Bazaar", 200);
        let err = parse_match_log(src.as_bytes(), VocabMode::Discover).unwrap_err();
        assert!(matches!(err, Error::InvalidRecord { line: 1, .. }), "{err}");
        assert!(err.to_string().contains("rank 200"));
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let text = format!("{}\n\n{{\"player_id\": 3}}\n", line(&["a"], "g", "m", 1));
        let err = parse_match_log(text.as_bytes(), VocabMode::Discover).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 3, .. }), "{err}");
    }

    #[test]
    fn fixed_mode_rejects_unknown_names() {
        let vocab =
            CovariateVocabulary::new(vec!["assault"], vec!["conquest"], vec!["Grand Bazaar"]);
        let src = line(&["assault"], "rush", "Grand Bazaar", 1);
        let err = parse_match_log(src.as_bytes(), VocabMode::Fixed(vocab)).unwrap_err();
        match err {
            Error::UnknownName { name, kind, .. } => {
                assert_eq!(name, "rush");
                assert_eq!(kind, "game type");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn extra_fields_pass_through() {
        let src = r#"{"player_id":"p","match_id":"m","score":500,"duration_seconds":400,"rank":3,"roles":["recon"],"game_type":"rush","map_name":"Metro","kills":7}"#;
        let (recs, _) = parse_match_log(src.as_bytes(), VocabMode::Discover).unwrap();
        assert_eq!(recs[0].extra.get("kills"), Some(&Value::from(7)));
        let back = serde_json::to_value(&recs[0]).unwrap();
        assert_eq!(back["kills"], Value::from(7));
        assert_eq!(back["duration_seconds"], Value::from(400.0));
    }

    #[test]
    fn filter_boundaries() {
        let out = filter_matches(vec![
            record(240.0, 500),
            record(400.0, 100),
            record(301.0, 101),
            record(300.0, 5000),
        ]);
        assert_eq!(out.dropped, 3);
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].duration, 301.0);
    }

    #[test]
    fn encode_log_score_and_indicators() {
        let vocab = CovariateVocabulary::new(
            vec!["assault", "engineer", "helicopter"],
            vec!["conquest", "rush"],
            vec!["Grand Bazaar", "Operation Metro"],
        );
        let mut r = record(900.0, 2981);
        r.roles = ["helicopter".to_string()].into();
        let row = encode_match(&r, &vocab).unwrap();
        assert!((row.response - 2981f64.ln()).abs() < 1e-15);
        assert!((row.response - 8.0).abs() < 1e-3);
        let dense = row.covariates.to_dense();
        assert_eq!(dense[0], 1.0);
        assert_eq!(dense[1], 10.0);
        assert_eq!(&dense[2..5], &[0.0, 0.0, 1.0]);

        r.roles = ["assault".to_string(), "engineer".to_string()].into();
        let dense = encode_match(&r, &vocab).unwrap().covariates.to_dense();
        assert_eq!(&dense[2..5], &[1.0, 1.0, 0.0]);
        assert_eq!(&dense[5..7], &[1.0, 0.0]);
        assert_eq!(&dense[7..9], &[1.0, 0.0]);
    }

    #[test]
    fn encode_guards_zero_score_and_unknown_names() {
        let vocab =
            CovariateVocabulary::new(vec!["assault"], vec!["conquest"], vec!["Grand Bazaar"]);
        let r = record(900.0, 0);
        assert!(matches!(
            encode_match(&r, &vocab),
            Err(Error::Encode { .. })
        ));
        let mut r = record(900.0, 10);
        r.map_name = "Nowhere".into();
        assert!(encode_match(&r, &vocab)
            .unwrap_err()
            .to_string()
            .contains("Nowhere"));
    }

    #[test]
    fn labels_follow_layout() {
        let vocab = CovariateVocabulary::new(vec!["b", "a"], vec!["g"], vec!["m2", "m1"]);
        let labels = vocab.labels();
        let names: Vec<_> = labels.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["intercept", "rank", "a", "b", "g", "m1", "m2"]);
        assert_eq!(labels[4].kind, ColumnKind::GameType);
        assert!(vocab.label(7).is_none());
    }
}
