//! Acceptance criteria, one line of output each. Runs as a plain binary so the
//! report is always printed; exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use playstyle::analyze::{classify_stability, evaluate_models};
use playstyle::dpcluster::{
    default_k, gibbs_sweep, normalize_log_weights, player_loglik, reassignment_probs, run_sampler,
    update_cluster_mean, BaseMeasure, MeanUpdate, PartitionState, PlayerData, Sampler,
    SamplerConfig,
};
use playstyle::ingest::{is_retained, MatchRecord, SparseRow};
use playstyle::regress::SuffStats;
use playstyle::synth::{adjusted_rand_index, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{dense_solve, rowloop_loglik, run_pipeline};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
/// Per-player `(covariates, residual)` rows.
type RawRows = Vec<Vec<(Vec<f64>, f64)>>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<(Vec<f64>, f64)> {
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            (x, rng.random_range(-1.5..1.5))
        })
        .collect()
}

fn stats_of(rows: &[(Vec<f64>, f64)], p: usize) -> SuffStats {
    let mut s = SuffStats::zeros(p);
    for (x, r) in rows {
        s.add_row(&SparseRow::from_dense(x), *r);
    }
    s
}

fn random_base(rng: &mut ChaCha8Rng, p: usize) -> BaseMeasure {
    BaseMeasure::new(
        (0..p).map(|_| rng.random_range(-0.5..0.5)).collect(),
        (0..p).map(|_| rng.random_range(0.2..2.0)).collect(),
        1e-6,
    )
    .unwrap()
}

/// Random clustered instance: raw rows per player plus a matching state.
fn random_instance(
    rng: &mut ChaCha8Rng,
    p: usize,
    k: usize,
) -> (RawRows, PlayerData, PartitionState) {
    let n = k + rng.random_range(0..4);
    let raw: Vec<Vec<(Vec<f64>, f64)>> = (0..n)
        .map(|_| {
            let m = rng.random_range(1..=10);
            random_rows(rng, m, p)
        })
        .collect();
    let data = PlayerData::from_parts(
        (0..n).map(|j| format!("p{j}")).collect(),
        raw.iter().map(|r| stats_of(r, p)).collect(),
        vec![vec![0.0; p]; n],
        1.0,
    )
    .unwrap();
    let labels: Vec<usize> = (0..n)
        .map(|j| if j < k { j } else { rng.random_range(0..k) })
        .collect();
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let base = random_base(rng, p);
    let sigma2 = rng.random_range(0.5..2.0);
    let omega = rng.random_range(0.1..5.0);
    let state = PartitionState::from_labels(&data, &labels, &means, base, sigma2, omega).unwrap();
    (raw, data, state)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p = rng.random_range(1..=6);
        let k = rng.random_range(1..=5);
        let (_, _, state) = random_instance(&mut rng, p, k);
        let m = rng.random_range(1..=10);
        let visitor = random_rows(&mut rng, m, p);
        let fresh = state.base.sample(&mut rng);
        let probs = reassignment_probs(&stats_of(&visitor, p), &state, &fresh).unwrap();

        let mut direct: Vec<f64> = state
            .clusters
            .iter()
            .map(|c| c.size() as f64 * rowloop_loglik(&visitor, &c.mean, state.sigma2).exp())
            .collect();
        direct.push(state.omega * rowloop_loglik(&visitor, &fresh, state.sigma2).exp());
        let total: f64 = direct.iter().sum();
        for (a, d) in probs.iter().zip(&direct) {
            let o = d / total;
            worst = worst.max((a - o).abs() / o);
        }
    }
    check(
        worst <= 1e-10,
        format!("worst relative error {worst:.2e} over 50 instances"),
    )
}

/// Two intercept-only players. Cluster means are the posterior mode of their
/// members, so after a sweep the last visitor faces a singleton cluster at
/// the other player's solo mode versus a fresh draw; the stationary
/// probability of sharing a cluster averages the two visit orders.
fn criterion_2() -> Outcome {
    let residuals = [vec![0.4, -0.2, 0.1], vec![0.9, 0.5]];
    let (mu, lambda, sigma2, omega) = (0.0, 1.0, 1.0, 1.0);
    let stats: Vec<SuffStats> = residuals
        .iter()
        .map(|r| stats_of(&r.iter().map(|v| (vec![1.0], *v)).collect::<Vec<_>>(), 1))
        .collect();
    let data = PlayerData::from_parts(
        vec!["a".into(), "b".into()],
        stats,
        vec![vec![0.0]; 2],
        sigma2,
    )
    .unwrap();
    let base = BaseMeasure::new(vec![mu], vec![lambda], 1e-6).unwrap();
    let mut state =
        PartitionState::from_labels(&data, &[0, 0], &[vec![0.0]], base, sigma2, omega).unwrap();

    let ll = |r: &[f64], b: f64| -r.iter().map(|v| (v - b).powi(2)).sum::<f64>() / (2.0 * sigma2);
    let solo_mode = |r: &[f64]| {
        (r.iter().sum::<f64>() / sigma2 + mu / lambda) / (r.len() as f64 / sigma2 + 1.0 / lambda)
    };
    let q = |last: &[f64], other: &[f64]| {
        let join = ll(last, solo_mode(other));
        // Simpson's rule over mu +- 12 sd of the base measure
        let (lo, hi, steps) = (mu - 12.0 * lambda.sqrt(), mu + 12.0 * lambda.sqrt(), 24_000);
        let h = (hi - lo) / steps as f64;
        let f = |b: f64| {
            let dens = (-(b - mu).powi(2) / (2.0 * lambda)).exp()
                / (2.0 * std::f64::consts::PI * lambda).sqrt();
            let fresh = ll(last, b);
            dens / (1.0 + omega * (fresh - join).exp())
        };
        let mut s = f(lo) + f(hi);
        for i in 1..steps {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let expected = 0.5 * q(&residuals[1], &residuals[0]) + 0.5 * q(&residuals[0], &residuals[1]);

    let sweeps = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut together = 0usize;
    for _ in 0..sweeps {
        gibbs_sweep(&mut state, &data, MeanUpdate::PosteriorMode, &mut rng).unwrap();
        if state.n_clusters() == 1 {
            together += 1;
        }
    }
    let freq = together as f64 / sweeps as f64;
    let se = (expected * (1.0 - expected) / sweeps as f64).sqrt();
    let z = (freq - expected) / se;
    check(
        z.abs() <= 3.0,
        format!("P(together) empirical {freq:.4} vs stationary {expected:.4}, z = {z:.2}"),
    )
}

fn benchmark() -> &'static common::Pipeline {
    use std::sync::OnceLock;
    static CELL: OnceLock<common::Pipeline> = OnceLock::new();
    CELL.get_or_init(|| run_pipeline(&SyntheticSpec::default(), 200, 1.0))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let run = benchmark();
    let ari = adjusted_rand_index(
        &run.truth.primary_labels(),
        &run.trace.map_state.assignment_map(),
    )
    .unwrap();
    check(
        ari >= 0.8,
        format!(
            "MAP ARI {ari:.3} (K = {}, MAP at sweep {}, {:.1?})",
            run.trace.map_state.n_clusters(),
            run.trace.map_iteration,
            start.elapsed()
        ),
    )
}

fn criterion_4() -> Outcome {
    let run = benchmark();
    let m = evaluate_models(
        &run.split,
        &run.global,
        &run.effects.styles,
        &run.trace.map_state,
    )
    .unwrap();
    check(
        m.rmse_global_mean > m.rmse_ols && m.rmse_clustered <= 1.05 * m.rmse_ols,
        format!(
            "RMSE global mean {:.4}, per-player {:.4}, clustered {:.4}",
            m.rmse_global_mean, m.rmse_ols, m.rmse_clustered
        ),
    )
}

fn criterion_5() -> Outcome {
    let run = benchmark();
    let m = evaluate_models(
        &run.split,
        &run.global,
        &run.effects.styles,
        &run.trace.map_state,
    )
    .unwrap();
    check(
        m.unique_coeff_ratio <= 0.25,
        format!(
            "K/n = {}/{} = {:.3}",
            m.n_clusters, m.n_players, m.unique_coeff_ratio
        ),
    )
}

fn criterion_6() -> Outcome {
    let (mut hybrids, mut hybrids_flagged, mut pure, mut pure_flagged) = (0, 0, 0, 0);
    for seed in 1..=3 {
        let spec = SyntheticSpec {
            hybrid_fraction: 0.1,
            matches_per_player: (40, 40),
            seed,
            ..Default::default()
        };
        let run = run_pipeline(&spec, 200, 4.0);
        let records = classify_stability(&run.trace.players, &run.trace.records, 20).unwrap();
        for r in records {
            if run.truth.labels[&r.player_id].is_hybrid() {
                hybrids += 1;
                hybrids_flagged += r.hybrid as usize;
            } else {
                pure += 1;
                pure_flagged += r.hybrid as usize;
            }
        }
    }
    let h = hybrids_flagged as f64 / hybrids as f64;
    let p = pure_flagged as f64 / pure as f64;
    check(
        h >= 0.7 && p <= 0.1,
        format!("hybrids flagged {hybrids_flagged}/{hybrids} ({h:.3}), pure flagged {pure_flagged}/{pure} ({p:.3})"),
    )
}

fn criterion_7() -> Outcome {
    let mut failures: Vec<&str> = Vec::new();

    // normalization under extreme spreads
    let probs = normalize_log_weights(&[700.0, -700.0, 0.0, 699.5, -1e300]).unwrap();
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        failures.push("normalization");
    }

    // empty-cluster removal
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (_, data, mut state) = random_instance(&mut rng, 3, 3);
    state.detach(0, &data);
    state.open_cluster(0, vec![0.0; 3], &data);
    let k_before = state.n_clusters();
    let gone = state.assignment[0];
    if state.detach(0, &data).is_some()
        || state.n_clusters() != k_before - 1
        || state.cluster_index(gone).is_some()
    {
        failures.push("empty-cluster removal");
    }

    // suffstat remove/re-add exactness
    let (_, data, mut state) = random_instance(&mut ChaCha8Rng::seed_from_u64(78), 4, 2);
    let j = (0..data.len())
        .find(|&j| state.cluster_of(j).size() >= 2)
        .unwrap();
    let id = state.assignment[j];
    let before = state.cluster_of(j).stats.clone();
    let idx = state.detach(j, &data).unwrap();
    state.attach(j, idx, &data);
    if state.cluster_of(j).stats != before
        || state.assignment[j] != id
        || state.check_invariants().is_err()
    {
        failures.push("suffstat remove/re-add");
    }

    // membership conservation on planted 2-cluster data
    let small = common::run_pipeline(
        &SyntheticSpec {
            n_players: 20,
            n_clusters: 2,
            matches_per_player: (60, 60),
            seed: 5,
            ..Default::default()
        },
        0,
        1.0,
    );
    let mut sampler = Sampler::initialize(
        &small.data,
        SamplerConfig {
            seed: 5,
            ..Default::default()
        },
    )
    .unwrap();
    for _ in 0..30 {
        sampler.step(&small.data).unwrap();
        let total: usize = sampler.state.sizes().iter().sum();
        if total != 20
            || sampler.state.check_invariants().is_err()
            || sampler.state.sizes().contains(&0)
        {
            failures.push("membership conservation");
            break;
        }
    }

    // filter boundaries
    let record = |duration: f64, score: u64| MatchRecord {
        player_id: "p".into(),
        match_id: "m".into(),
        score,
        duration,
        rank: 1,
        roles: BTreeSet::from(["assault".to_string()]),
        game_type: "conquest".into(),
        map_name: "Grand Bazaar".into(),
        timestamp: None,
        extra: Default::default(),
    };
    if is_retained(&record(300.0, 500))
        || is_retained(&record(400.0, 100))
        || !is_retained(&record(301.0, 101))
    {
        failures.push("filter boundaries");
    }

    if default_k(1221) != 25 {
        failures.push("K heuristic");
    }

    // determinism
    let config = SamplerConfig {
        iterations: 15,
        seed: 11,
        ..Default::default()
    };
    let a = run_sampler(&small.data, config.clone()).unwrap();
    let b = run_sampler(&small.data, config.clone()).unwrap();
    if a != b || serde_json::to_string(&a).unwrap() != serde_json::to_string(&b).unwrap() {
        failures.push("determinism");
    }

    // resume equivalence
    let mut first = Sampler::initialize(&small.data, config.clone()).unwrap();
    first.run(6, &small.data).unwrap();
    let mut buf = Vec::new();
    first.to_checkpoint(&mut buf).unwrap();
    let mut resumed = Sampler::from_checkpoint(buf.as_slice(), &small.data).unwrap();
    resumed.run(9, &small.data).unwrap();
    if resumed.trace != a {
        failures.push("resume equivalence");
    }

    check(
        failures.is_empty(),
        if failures.is_empty() {
            "normalization, empty-cluster removal, conservation, suffstat exactness, filter boundaries, K(1221) = 25, determinism, resume".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst_mean = 0.0f64;
    let mut worst_ll = 0.0f64;
    for _ in 0..20 {
        let p = rng.random_range(1..=6);
        let (raw, data, state) = random_instance(&mut rng, p, 1);
        let cluster = &state.clusters[0];
        let got = update_cluster_mean(cluster, &state).unwrap();

        let mut a = vec![0.0; p * p];
        let mut b = vec![0.0; p];
        for &j in &cluster.members {
            for (x, r) in &raw[j] {
                for u in 0..p {
                    b[u] += x[u] * r / state.sigma2;
                    for v in 0..p {
                        a[u * p + v] += x[u] * x[v] / state.sigma2;
                    }
                }
            }
        }
        for u in 0..p {
            a[u * p + u] += 1.0 / state.base.lambda_diag[u];
            b[u] += state.base.mu[u] / state.base.lambda_diag[u];
        }
        let oracle = dense_solve(&a, &b);
        for (g, o) in got.iter().zip(&oracle) {
            worst_mean = worst_mean.max((g - o).abs() / o.abs().max(1.0));
        }

        for (j, rows) in raw.iter().enumerate() {
            let fast = player_loglik(&data.stats[j], &cluster.mean, state.sigma2).unwrap();
            let slow = rowloop_loglik(rows, &cluster.mean, state.sigma2);
            worst_ll = worst_ll.max((fast - slow).abs() / slow.abs().max(1.0));
        }
    }
    check(
        worst_mean <= 1e-10 && worst_ll <= 1e-12,
        format!("cluster mean error {worst_mean:.2e}, loglik error {worst_ll:.2e}"),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "reassignment probabilities match direct evaluation",
            criterion_1,
        ),
        ("toy chain matches stationary distribution", criterion_2),
        ("synthetic recovery", criterion_3),
        ("RMSE ordering", criterion_4),
        ("parameter reduction", criterion_5),
        ("hybrid detection", criterion_6),
        ("invariant suite", criterion_7),
        ("numerical checks", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!(
                "criterion {} [PRIMARY] {name}: PASS ({detail}; {secs:.2}s)",
                i + 1
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "criterion {} [PRIMARY] {name}: FAIL ({detail}; {secs:.2}s)",
                    i + 1
                );
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
