use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use playstyle::analyze::{
    classify_stability, cluster_size_distribution, evaluate_models, player_profile,
    summarize_stability, top_cluster_reports, write_cluster_bars, write_profiles,
    write_size_histogram, write_stability,
};
use playstyle::dpcluster::{PartitionState, PlayerData, Sampler, SamplerConfig, SamplerTrace};
use playstyle::ingest::{encode_all, filter_matches, parse_match_log, DesignRow, VocabMode};
use playstyle::io::{read_design_csv, write_design_csv, VocabularyFile};
use playstyle::regress::{
    default_lambda_p, fit_global, fit_player_effects, split_from_manifest, split_holdout,
    GlobalFit, HoldoutSplit, PlayerEffects,
};
use playstyle::synth::{generate, write_match_log, SyntheticSpec};

use crate::{AnalyzeArgs, FitArgs, IngestArgs, SampleArgs, SimulateArgs};

const MATCHES: &str = "matches.jsonl";
const TRUTH: &str = "truth.json";
const DESIGN: &str = "design.csv";
const VOCAB: &str = "vocabulary.json";
const INGEST_SUMMARY: &str = "ingest.json";
const SPLIT: &str = "split.json";
const FIT: &str = "fit.json";
const TRACE: &str = "trace.jsonl";
const CHECKPOINT: &str = "checkpoint.json";
const MAP_STATE: &str = "map_state.json";
const ANALYSIS: &str = "analysis";

fn provenance(command: &str, settings: Value) -> Value {
    json!({
        "tool": "playstyle",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "settings": settings,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .with_context(|| format!("bad match count `{t}`"))
    };
    match s.split_once('-') {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TruthFile {
    provenance: Value,
    truth: playstyle::synth::GroundTruth,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut spec: SyntheticSpec = match &args.spec {
        Some(path) => read_json(path)?,
        None => SyntheticSpec::default(),
    };
    if let Some(v) = args.players {
        spec.n_players = v;
    }
    if let Some(v) = args.clusters {
        spec.n_clusters = v;
    }
    if let Some(v) = &args.matches {
        spec.matches_per_player = parse_range(v)?;
    }
    if let Some(v) = args.noise_sd {
        spec.noise_sd = v;
    }
    if let Some(v) = args.separation {
        spec.style_separation = v;
    }
    if let Some(v) = args.hybrid_fraction {
        spec.hybrid_fraction = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    let (records, truth) = generate(&spec)?;
    let mut out = create(&args.dir.join(MATCHES))?;
    write_match_log(&mut out, &records)?;
    out.flush()?;
    write_json(
        &args.dir.join(TRUTH),
        &TruthFile {
            provenance: provenance("simulate", serde_json::to_value(&spec)?),
            truth,
        },
    )?;
    info!(
        "wrote {} matches for {} players",
        records.len(),
        spec.n_players
    );
    Ok(())
}

#[derive(Serialize)]
struct IngestSummary {
    provenance: Value,
    parsed: usize,
    kept: usize,
    dropped: usize,
    players: usize,
    total_width: usize,
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let input = args.input.clone().unwrap_or_else(|| args.dir.join(MATCHES));
    let mode = match &args.vocab {
        Some(path) => VocabMode::Fixed(read_json::<VocabularyFile>(path)?.vocabulary()?),
        None => VocabMode::Discover,
    };
    let (records, vocab) = parse_match_log(open(&input)?, mode)?;
    let parsed = records.len();
    let outcome = filter_matches(records);
    if outcome.kept.is_empty() {
        return Err(
            playstyle::Error::Empty("no matches survive the duration and score filter").into(),
        );
    }
    let rows = encode_all(&outcome.kept, &vocab)?;
    let prov = provenance(
        "ingest",
        json!({"input": input, "fixed_vocabulary": args.vocab}),
    );
    write_design_csv(create(&args.dir.join(DESIGN))?, &rows, &vocab, &prov)?;
    write_json(
        &args.dir.join(VOCAB),
        &VocabularyFile::new(&vocab, prov.clone()),
    )?;
    let players: std::collections::BTreeSet<&str> =
        rows.iter().map(|r| r.player_id.as_str()).collect();
    write_json(
        &args.dir.join(INGEST_SUMMARY),
        &IngestSummary {
            provenance: prov,
            parsed,
            kept: outcome.kept.len(),
            dropped: outcome.dropped,
            players: players.len(),
            total_width: vocab.total_width(),
        },
    )?;
    info!(
        "kept {} of {parsed} matches ({} dropped), width {}",
        outcome.kept.len(),
        outcome.dropped,
        vocab.total_width()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    provenance: Value,
    seed: u64,
    fraction: f64,
    /// Held-out match ids per player.
    test: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct FitFile {
    provenance: Value,
    global: GlobalFit,
    effects: PlayerEffects,
}

fn load_design(dir: &Path) -> Result<Vec<DesignRow>> {
    let rows = read_design_csv(open(&dir.join(DESIGN))?)?;
    if rows.is_empty() {
        bail!("{} has no rows", dir.join(DESIGN).display());
    }
    Ok(rows)
}

fn load_split(dir: &Path, rows: &[DesignRow]) -> Result<HoldoutSplit> {
    let s: SplitFile = read_json(&dir.join(SPLIT))?;
    Ok(split_from_manifest(rows, &s.test, s.seed, s.fraction))
}

pub fn fit(args: FitArgs) -> Result<()> {
    let rows = load_design(&args.dir)?;
    let split = split_holdout(&rows, args.holdout, args.seed)?;
    let global = fit_global(&split.train)?;
    let lambda_p = match args.lambda_p {
        Some(v) => v,
        None => default_lambda_p(&split.train)?,
    };
    let effects = fit_player_effects(&split.train, &global, lambda_p)?;
    let prov = provenance(
        "fit",
        json!({"holdout": args.holdout, "seed": args.seed, "lambda_p": lambda_p}),
    );
    write_json(
        &args.dir.join(SPLIT),
        &SplitFile {
            provenance: prov.clone(),
            seed: split.seed,
            fraction: split.fraction,
            test: split.manifest(),
        },
    )?;
    info!(
        "train {} rows, test {} rows; global mse {:.4}, player mse {:.4}",
        split.train.len(),
        split.test.len(),
        global.mse,
        effects.mse
    );
    write_json(
        &args.dir.join(FIT),
        &FitFile {
            provenance: prov,
            global,
            effects,
        },
    )?;
    Ok(())
}

fn player_data(dir: &Path) -> Result<(HoldoutSplit, FitFile, PlayerData)> {
    let rows = load_design(dir)?;
    let split = load_split(dir, &rows)?;
    let fit: FitFile = read_json(&dir.join(FIT))?;
    let data = PlayerData::new(&split.train, &fit.global, &fit.effects)?;
    Ok((split, fit, data))
}

#[derive(Serialize, Deserialize)]
struct MapStateFile {
    provenance: Value,
    #[serde(with = "score")]
    score: f64,
    iteration: u64,
    state: PartitionState,
}

/// JSON has no infinities; a missing score is written as null.
mod score {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

pub fn sample(args: SampleArgs) -> Result<()> {
    let (_, _, data) = player_data(&args.dir)?;
    let sampler = if args.resume {
        let s = Sampler::from_checkpoint(open(&args.dir.join(CHECKPOINT))?, &data)?;
        let sweeps = args.iterations.unwrap_or(s.config.iterations);
        info!("resuming at sweep {} for {sweeps} more", s.state.iteration);
        let mut s = s;
        s.config.iterations += sweeps;
        s.run(sweeps, &data)?;
        s
    } else {
        let mut config: SamplerConfig = match &args.config {
            Some(path) => read_json(path)?,
            None => SamplerConfig::default(),
        };
        if let Some(v) = args.iterations {
            config.iterations = v;
        }
        if let Some(v) = args.burn_in {
            config.burn_in = v;
        }
        if let Some(v) = args.seed {
            config.seed = v;
        }
        if let Some(v) = args.omega {
            config.omega = v;
        }
        if args.sigma2.is_some() {
            config.sigma2 = args.sigma2;
        }
        if let Some(v) = args.thinning {
            config.thinning = v;
        }
        if args.k.is_some() {
            config.k = args.k;
        }
        if let Some(v) = args.mean_update {
            config.mean_update = v.into();
        }
        config.resample_sigma2 |= args.resample_sigma2;
        let iterations = config.iterations;
        let mut s = Sampler::initialize(&data, config)?;
        info!(
            "initialised {} players into {} clusters, sigma2 {:.4}",
            data.len(),
            s.state.n_clusters(),
            s.state.sigma2
        );
        s.run(iterations, &data)?;
        s
    };
    let config = serde_json::to_value(&sampler.config)?;
    let prov = provenance("sample", config.clone());
    let mut trace_out = create(&args.dir.join(TRACE))?;
    sampler.trace.write_jsonl(&mut trace_out, &prov)?;
    trace_out.flush()?;
    let mut ck = create(&args.dir.join(CHECKPOINT))?;
    sampler.to_checkpoint(&mut ck)?;
    ck.flush()?;
    let trace = &sampler.trace;
    write_json(
        &args.dir.join(MAP_STATE),
        &MapStateFile {
            provenance: prov,
            score: trace.map_score,
            iteration: trace.map_iteration,
            state: trace.map_state.clone(),
        },
    )?;
    info!(
        "MAP partition at sweep {} with {} clusters (score {:.3})",
        trace.map_iteration,
        trace.map_state.n_clusters(),
        trace.map_score
    );
    Ok(())
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let dir = &args.dir;
    let out = dir.join(ANALYSIS);
    let (split, fit, _) = player_data(dir)?;
    let vocab = read_json::<VocabularyFile>(&dir.join(VOCAB))?.vocabulary()?;
    let map: MapStateFile = read_json(&dir.join(MAP_STATE))?;
    let checkpoint_config = read_json::<Value>(&dir.join(CHECKPOINT))
        .ok()
        .and_then(|v| serde_json::from_value::<SamplerConfig>(v["config"].clone()).ok());
    let burn_in = args
        .burn_in
        .or(checkpoint_config.map(|c| c.burn_in as u64))
        .unwrap_or(0);
    let prov = provenance(
        "analyze",
        json!({"burn_in": burn_in, "top": args.top, "min_size": args.min_size, "threshold": args.threshold, "alpha": args.alpha}),
    );

    let metrics = evaluate_models(&split, &fit.global, &fit.effects.styles, &map.state)?;
    write_json(
        &out.join("metrics.json"),
        &json!({"provenance": prov, "metrics": metrics}),
    )?;
    info!(
        "held-out RMSE: global mean {:.4}, per-player {:.4}, clustered {:.4}; K/n = {:.3}",
        metrics.rmse_global_mean,
        metrics.rmse_ols,
        metrics.rmse_clustered,
        metrics.unique_coeff_ratio
    );

    let sizes = cluster_size_distribution(&map.state, args.min_size, args.top);
    write_size_histogram(create(&out.join("cluster_sizes.csv"))?, &sizes, &prov)?;
    let top = top_cluster_reports(&map.state, &vocab, args.top, args.threshold);
    if top.truncated {
        log::warn!(
            "only {} clusters exist, fewer than the {} requested",
            top.reports.len(),
            args.top
        );
    }
    write_cluster_bars(create(&out.join("cluster_bars.csv"))?, &top.reports, &prov)?;
    write_json(
        &out.join("clusters.json"),
        &json!({"provenance": prov, "sizes": sizes, "top": top}),
    )?;

    let (players, records) = SamplerTrace::read_jsonl_records(open(&dir.join(TRACE))?)?;
    let stability = classify_stability(&players, &records, burn_in)?;
    write_stability(create(&out.join("stability.csv"))?, &stability, &prov)?;
    let summary = summarize_stability(&stability);
    write_json(
        &out.join("stability.json"),
        &json!({"provenance": prov, "summary": summary, "players": stability}),
    )?;
    info!(
        "stable {:.1}%, hybrid {:.1}%",
        100.0 * summary.stable_fraction,
        100.0 * summary.hybrid_fraction
    );

    let rows: Vec<DesignRow> = split.train.iter().chain(&split.test).cloned().collect();
    let global_mean = rows.iter().map(|r| r.response).sum::<f64>() / rows.len() as f64;
    let ids: Vec<String> = if args.players.is_empty() {
        players
    } else {
        args.players.clone()
    };
    let profiles = ids
        .iter()
        .map(|id| player_profile(id, &rows, &vocab, global_mean, args.alpha))
        .collect::<playstyle::Result<Vec<_>>>()?;
    write_profiles(create(&out.join("profiles.csv"))?, &profiles, &prov)?;
    Ok(())
}
