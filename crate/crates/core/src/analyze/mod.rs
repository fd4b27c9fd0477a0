//! Summaries of a finished sampler run: held-out error, cluster sizes and
//! coefficient reports, stability of player assignments, and per-player
//! performance profiles. The `write_*` functions emit plot-ready CSV.

mod clusters;
mod metrics;
mod profile;
mod stability;

use std::io::Write;

use serde_json::Value;

pub use clusters::{
    classify_pattern, cluster_report, cluster_size_distribution, top_cluster_reports,
    ClusterReport, LabeledCoefficient, SizeDistribution, StylePattern, TopClusters,
};
pub use metrics::{evaluate_models, ModelMetrics};
pub use profile::{
    one_sample_t_test, player_profile, quantile_sorted, summarize_category, CategorySummary,
    PlayerProfile, ProfileEntry, TTest, DEFAULT_ALPHA_LEVEL,
};
pub use stability::{
    classify_stability, summarize_stability, StabilityLabel, StabilityRecord, StabilitySummary,
    HYBRID_TRANSITIONS, STABLE_RESIDENCY, UNSTABLE_VISITS,
};

use crate::error::Result;
use crate::io::write_provenance;

/// `size,count` rows.
pub fn write_size_histogram<W: Write>(
    mut out: W,
    dist: &SizeDistribution,
    provenance: &Value,
) -> Result<()> {
    write_provenance(&mut out, provenance)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["size", "count"])?;
    for (size, count) in &dist.histogram {
        w.write_record([size.to_string(), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `cluster_id,size,column_kind,column_name,value` rows, one per coefficient.
pub fn write_cluster_bars<W: Write>(
    mut out: W,
    reports: &[ClusterReport],
    provenance: &Value,
) -> Result<()> {
    write_provenance(&mut out, provenance)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cluster_id", "size", "column_kind", "column_name", "value"])?;
    for r in reports {
        for c in &r.coefficients {
            w.write_record([
                r.cluster_id.to_string(),
                r.size.to_string(),
                c.kind.as_str().to_string(),
                c.name.clone(),
                c.value.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Box-plot rows. Absent categories keep their row with empty statistics.
pub fn write_profiles<W: Write>(
    mut out: W,
    profiles: &[PlayerProfile],
    provenance: &Value,
) -> Result<()> {
    write_provenance(&mut out, provenance)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "player_id",
        "category_kind",
        "category_name",
        "count",
        "mean",
        "q1",
        "median",
        "q3",
        "t",
        "p_value",
        "significant",
    ])?;
    for p in profiles {
        for e in &p.entries {
            let kind = if e.name == "overall" && e.kind == crate::ingest::ColumnKind::Intercept {
                "overall"
            } else {
                e.kind.as_str()
            };
            let mut rec = vec![p.player_id.clone(), kind.to_string(), e.name.clone()];
            match &e.summary {
                Some(s) => {
                    rec.push(s.count.to_string());
                    rec.extend([s.mean, s.q1, s.median, s.q3].iter().map(|v| v.to_string()));
                    match &s.test {
                        Some(t) => rec.extend([t.t.to_string(), t.p_value.to_string()]),
                        None => rec.extend([String::new(), String::new()]),
                    }
                    rec.push(s.significant.to_string());
                }
                None => {
                    rec.push("0".into());
                    rec.extend(std::iter::repeat_n(String::new(), 7));
                }
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `player_id,label,stable,hybrid,clusters_visited,max_residency_fraction,max_pair_transitions`.
pub fn write_stability<W: Write>(
    mut out: W,
    records: &[StabilityRecord],
    provenance: &Value,
) -> Result<()> {
    write_provenance(&mut out, provenance)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "player_id",
        "label",
        "stable",
        "hybrid",
        "clusters_visited",
        "max_residency_fraction",
        "max_pair_transitions",
    ])?;
    for r in records {
        let label = serde_json::to_value(r.label)?;
        w.write_record([
            r.player_id.clone(),
            label.as_str().unwrap_or_default().to_string(),
            r.stable.to_string(),
            r.hybrid.to_string(),
            r.clusters_visited.to_string(),
            r.max_residency_fraction.to_string(),
            r.max_pair_transitions.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpcluster::{BaseMeasure, PartitionState, PlayerData, TraceRecord};
    use crate::ingest::{ColumnKind, CovariateVocabulary};
    use crate::regress::SuffStats;

    fn state_with(labels: &[usize], p: usize) -> (PartitionState, PlayerData) {
        let n = labels.len();
        let data = PlayerData::from_parts(
            (0..n).map(|i| format!("p{i:02}")).collect(),
            vec![SuffStats::zeros(p); n],
            vec![vec![0.0; p]; n],
            1.0,
        )
        .unwrap();
        let base = BaseMeasure::new(vec![0.0; p], vec![1.0; p], 1e-6).unwrap();
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let state =
            PartitionState::from_labels(&data, labels, &vec![vec![0.0; p]; k], base, 1.0, 1.0)
                .unwrap();
        (state, data)
    }

    fn record(iteration: u64, assignment: Vec<u64>) -> TraceRecord {
        TraceRecord {
            iteration,
            score: 0.0,
            k: 0,
            sigma2: 1.0,
            assignment,
        }
    }

    #[test]
    fn size_histogram_drops_singletons() {
        let labels = [0, 0, 0, 0, 0, 0, 0, 1, 1, 2];
        let (state, _) = state_with(&labels, 2);
        let d = cluster_size_distribution(&state, 2, 1);
        assert_eq!(d.sizes, vec![7, 2]);
        assert_eq!(d.n_clusters, 2);
        assert_eq!(d.histogram, vec![(2, 1), (7, 1)]);
        assert!((d.top_share - 0.7).abs() < 1e-12);

        let (singletons, _) = state_with(&[0, 1, 2, 3], 2);
        assert!(cluster_size_distribution(&singletons, 2, 4)
            .sizes
            .is_empty());
    }

    #[test]
    fn reports_flag_truncation_and_patterns() {
        let vocab = CovariateVocabulary::new(vec!["r"], vec!["g"], vec!["m1", "m2", "m3"]);
        let p = vocab.total_width();
        let (mut state, _) = state_with(&[0, 0, 1], p);
        state.clusters[0].mean = vec![0.0; p];
        state.clusters[0].mean[0] = 1.5;
        state.clusters[1].mean = vec![0.0; p];
        state.clusters[1].mean[vocab.map_column("m1").unwrap()] = 0.9;
        state.clusters[1].mean[vocab.map_column("m3").unwrap()] = 0.8;
        let top = top_cluster_reports(&state, &vocab, 4, 0.1);
        assert!(top.truncated);
        assert_eq!(top.reports.len(), 2);
        assert_eq!(top.reports[0].pattern, StylePattern::AllStars);
        assert_eq!(top.reports[1].pattern, StylePattern::MapSpecialists);
        assert!(top.reports.iter().map(|r| r.share).sum::<f64>() <= 1.0 + 1e-12);
        for r in &top.reports {
            assert_eq!(r.coefficients.len(), p);
            for (c, l) in r.coefficients.iter().enumerate() {
                assert_eq!(l.column, c);
            }
        }

        state.clusters[0].mean = vec![0.0; p];
        let r = cluster_report(&state, 0, &vocab, 0.1);
        assert!(r.top.is_empty());
        assert_eq!(r.pattern, StylePattern::Flat);
        assert_eq!(r.coefficients[0].kind, ColumnKind::Intercept);
    }

    #[test]
    fn alternating_player_gets_both_flags() {
        let seq = [1u64, 2, 1, 2, 1, 2, 1, 2, 1];
        let records: Vec<TraceRecord> = seq
            .iter()
            .enumerate()
            .map(|(i, id)| record(i as u64 + 1, vec![*id, 7]))
            .collect();
        let players = vec!["a".to_string(), "b".to_string()];
        let out = classify_stability(&players, &records, 0).unwrap();
        let a = &out[0];
        assert_eq!(a.max_pair_transitions, 8);
        assert!((a.max_residency_fraction - 5.0 / 9.0).abs() < 1e-12);
        assert!(a.stable && a.hybrid);
        assert_eq!(a.label, StabilityLabel::Hybrid);
        let b = &out[1];
        assert!(b.stable && !b.hybrid);
        assert_eq!(b.clusters_visited, 1);
        assert_eq!(b.max_residency_fraction, 1.0);
        for r in &out {
            assert!((r.residency.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let summary = summarize_stability(&out);
        assert_eq!(summary.visit_distribution, vec![(1, 1), (2, 1)]);
        assert!(classify_stability(&players, &records, 9).is_err());
    }

    #[test]
    fn wanderer_is_unstable() {
        let records: Vec<TraceRecord> = (1..=6).map(|i| record(i, vec![i % 3])).collect();
        let out = classify_stability(&["w".to_string()], &records, 0).unwrap();
        assert_eq!(out[0].label, StabilityLabel::Unstable);
        assert_eq!(out[0].clusters_visited, 3);
    }

    #[test]
    fn csv_writers_emit_headers() {
        let labels = [0, 0, 1];
        let (state, _) = state_with(&labels, 2);
        let mut buf = Vec::new();
        write_size_histogram(
            &mut buf,
            &cluster_size_distribution(&state, 2, 4),
            &Value::Null,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "# null\nsize,count\n2,1\n");
    }
}
