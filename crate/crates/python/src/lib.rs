//! Python bindings. Pipeline objects are opaque handles; reports come back as
//! plain dicts and lists.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyList, PyString};
use serde::Serialize;
use serde_json::Value;

use playstyle::analyze;
use playstyle::dpcluster::{self, MeanUpdate, PlayerData, SamplerConfig};
use playstyle::ingest::{self, CovariateVocabulary, DesignRow, MatchRecord, VocabMode};
use playstyle::regress;
use playstyle::synth::{self, SyntheticSpec};

create_exception!(playstyle_py, PlaystyleError, PyException);

fn err(e: playstyle::Error) -> PyErr {
    PlaystyleError::new_err(format!("{}: {e}", e.kind()))
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => PyFloat::new(py, n.as_f64().unwrap_or(f64::NAN)).into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| err(e.into()))?;
    json_to_py(py, &v)
}

/// Parsed match records.
#[pyclass(module = "playstyle_py", frozen)]
struct MatchLog {
    records: Vec<MatchRecord>,
    vocab: CovariateVocabulary,
}

#[pymethods]
impl MatchLog {
    /// Reads a JSONL match log; the vocabulary is discovered from it.
    #[staticmethod]
    fn from_jsonl(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| err(e.into()))?;
        let (records, vocab) =
            ingest::parse_match_log(BufReader::new(file), VocabMode::Discover).map_err(err)?;
        Ok(MatchLog { records, vocab })
    }

    fn __len__(&self) -> usize {
        self.records.len()
    }

    /// Records passing the duration and score filter, and the drop count.
    fn filtered(&self) -> (MatchLog, usize) {
        let out = ingest::filter_matches(self.records.clone());
        (
            MatchLog {
                records: out.kept,
                vocab: self.vocab.clone(),
            },
            out.dropped,
        )
    }

    fn encode(&self) -> PyResult<Design> {
        Ok(Design {
            rows: ingest::encode_all(&self.records, &self.vocab).map_err(err)?,
            vocab: self.vocab.clone(),
        })
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.records)
    }

    /// Ordered role, game-type and map names.
    fn vocabulary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.vocab)
    }
}

/// Encoded design rows with their vocabulary.
#[pyclass(module = "playstyle_py", frozen)]
struct Design {
    rows: Vec<DesignRow>,
    vocab: CovariateVocabulary,
}

#[pymethods]
impl Design {
    fn __len__(&self) -> usize {
        self.rows.len()
    }

    #[getter]
    fn width(&self) -> usize {
        self.vocab.total_width()
    }

    /// `kind:name` label of every column.
    fn column_labels(&self) -> Vec<String> {
        self.vocab
            .labels()
            .into_iter()
            .map(|l| format!("{}:{}", l.kind.as_str(), l.name))
            .collect()
    }

    fn responses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.response).collect()
    }

    fn player_ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.player_id.clone()).collect()
    }

    /// Dense covariate matrix as a list of rows.
    fn dense(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.covariates.to_dense()).collect()
    }

    /// Per-player holdout: `(train, test)`.
    #[pyo3(signature = (fraction = 0.1, seed = 0))]
    fn split(&self, fraction: f64, seed: u64) -> PyResult<(Design, Design)> {
        let s = regress::split_holdout(&self.rows, fraction, seed).map_err(err)?;
        Ok((
            Design {
                rows: s.train,
                vocab: self.vocab.clone(),
            },
            Design {
                rows: s.test,
                vocab: self.vocab.clone(),
            },
        ))
    }
}

#[pyclass(module = "playstyle_py", frozen)]
struct GlobalFit {
    inner: regress::GlobalFit,
}

#[pymethods]
impl GlobalFit {
    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.clone()
    }
    #[getter]
    fn mse(&self) -> f64 {
        self.inner.mse
    }
    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank
    }
}

#[pyclass(module = "playstyle_py", frozen)]
struct PlayerEffects {
    inner: regress::PlayerEffects,
}

#[pymethods]
impl PlayerEffects {
    #[getter]
    fn mse(&self) -> f64 {
        self.inner.mse
    }
    #[getter]
    fn lambda_p(&self) -> f64 {
        self.inner.lambda_p
    }
    /// Player id to coefficient offsets.
    fn styles(&self) -> BTreeMap<String, Vec<f64>> {
        self.inner
            .styles
            .iter()
            .map(|(k, s)| (k.clone(), s.beta.clone()))
            .collect()
    }
}

#[pyfunction]
fn fit_global(design: &Design) -> PyResult<GlobalFit> {
    Ok(GlobalFit {
        inner: regress::fit_global(&design.rows).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (design, global_fit, lambda_p = None))]
fn fit_player_effects(
    design: &Design,
    global_fit: &GlobalFit,
    lambda_p: Option<f64>,
) -> PyResult<PlayerEffects> {
    let lambda_p = match lambda_p {
        Some(v) => v,
        None => regress::default_lambda_p(&design.rows).map_err(err)?,
    };
    Ok(PlayerEffects {
        inner: regress::fit_player_effects(&design.rows, &global_fit.inner, lambda_p)
            .map_err(err)?,
    })
}

#[pyclass(module = "playstyle_py", frozen)]
struct Trace {
    inner: dpcluster::SamplerTrace,
}

#[pymethods]
impl Trace {
    #[getter]
    fn map_score(&self) -> f64 {
        self.inner.map_score
    }
    #[getter]
    fn map_iteration(&self) -> u64 {
        self.inner.map_iteration
    }
    #[getter]
    fn n_clusters(&self) -> usize {
        self.inner.map_state.n_clusters()
    }
    fn map_assignment(&self) -> BTreeMap<String, u64> {
        self.inner.map_state.assignment_map()
    }
    fn scores(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.score).collect()
    }
    fn cluster_counts(&self) -> Vec<usize> {
        self.inner.records.iter().map(|r| r.k).collect()
    }
    fn players(&self) -> Vec<String> {
        self.inner.players.clone()
    }
    fn to_jsonl(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner
            .write_jsonl(&mut buf, &Value::Null)
            .map_err(err)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }
}

fn mean_update(name: &str) -> PyResult<MeanUpdate> {
    serde_json::from_value(Value::String(name.into()))
        .map_err(|_| PlaystyleError::new_err(format!("unknown mean update rule `{name}`")))
}

#[pyfunction]
#[pyo3(signature = (design, global_fit, effects, iterations = 200, burn_in = 20, seed = 0, omega = 1.0, sigma2 = None, mean_update_rule = "posterior_mode", k = None))]
#[allow(clippy::too_many_arguments)]
fn run_sampler(
    py: Python<'_>,
    design: &Design,
    global_fit: &GlobalFit,
    effects: &PlayerEffects,
    iterations: usize,
    burn_in: usize,
    seed: u64,
    omega: f64,
    sigma2: Option<f64>,
    mean_update_rule: &str,
    k: Option<usize>,
) -> PyResult<Trace> {
    let data = PlayerData::new(&design.rows, &global_fit.inner, &effects.inner).map_err(err)?;
    let config = SamplerConfig {
        iterations,
        burn_in,
        seed,
        omega,
        sigma2,
        k,
        mean_update: mean_update(mean_update_rule)?,
        ..Default::default()
    };
    let trace = py
        .detach(|| dpcluster::run_sampler(&data, config))
        .map_err(err)?;
    Ok(Trace { inner: trace })
}

#[pyfunction]
fn evaluate_models<'py>(
    py: Python<'py>,
    train: &Design,
    test: &Design,
    global_fit: &GlobalFit,
    effects: &PlayerEffects,
    trace: &Trace,
) -> PyResult<Bound<'py, PyAny>> {
    let split = regress::HoldoutSplit {
        train: train.rows.clone(),
        test: test.rows.clone(),
        seed: 0,
        fraction: 0.0,
    };
    let m = analyze::evaluate_models(
        &split,
        &global_fit.inner,
        &effects.inner.styles,
        &trace.inner.map_state,
    )
    .map_err(err)?;
    to_py(py, &m)
}

#[pyfunction]
#[pyo3(signature = (trace, burn_in = 20))]
fn classify_stability<'py>(
    py: Python<'py>,
    trace: &Trace,
    burn_in: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let records = analyze::classify_stability(&trace.inner.players, &trace.inner.records, burn_in)
        .map_err(err)?;
    to_py(py, &records)
}

#[pyfunction]
#[pyo3(signature = (trace, design, m = 4, threshold = 0.1))]
fn top_cluster_reports<'py>(
    py: Python<'py>,
    trace: &Trace,
    design: &Design,
    m: usize,
    threshold: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &analyze::top_cluster_reports(&trace.inner.map_state, &design.vocab, m, threshold),
    )
}

#[pyfunction]
#[pyo3(signature = (trace, min_size = 2, top_m = 4))]
fn cluster_size_distribution<'py>(
    py: Python<'py>,
    trace: &Trace,
    min_size: usize,
    top_m: usize,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &analyze::cluster_size_distribution(&trace.inner.map_state, min_size, top_m),
    )
}

#[pyfunction]
#[pyo3(signature = (player_id, design, global_mean, alpha_level = 0.05))]
fn player_profile<'py>(
    py: Python<'py>,
    player_id: &str,
    design: &Design,
    global_mean: f64,
    alpha_level: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let p = analyze::player_profile(
        player_id,
        &design.rows,
        &design.vocab,
        global_mean,
        alpha_level,
    )
    .map_err(err)?;
    to_py(py, &p)
}

/// Synthetic log with planted styles: `(MatchLog, primary style per player,
/// hybrid player ids)`.
#[pyfunction]
#[pyo3(signature = (n_players = 120, n_clusters = 5, matches = 150, noise_sd = 0.3, style_separation = 1.0, hybrid_fraction = 0.0, seed = 42))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    n_players: usize,
    n_clusters: usize,
    matches: usize,
    noise_sd: f64,
    style_separation: f64,
    hybrid_fraction: f64,
    seed: u64,
) -> PyResult<(MatchLog, BTreeMap<String, usize>, Vec<String>)> {
    let spec = SyntheticSpec {
        n_players,
        n_clusters,
        matches_per_player: (matches, matches),
        noise_sd,
        style_separation,
        hybrid_fraction,
        seed,
        ..Default::default()
    };
    let (records, truth) = synth::generate(&spec).map_err(err)?;
    let hybrids = truth
        .labels
        .iter()
        .filter(|(_, l)| l.is_hybrid())
        .map(|(k, _)| k.clone())
        .collect();
    Ok((
        MatchLog {
            records,
            vocab: truth.vocabulary.clone(),
        },
        truth.primary_labels(),
        hybrids,
    ))
}

#[pyfunction]
fn adjusted_rand_index(a: BTreeMap<String, i64>, b: BTreeMap<String, i64>) -> PyResult<f64> {
    synth::adjusted_rand_index(&a, &b).map_err(err)
}

#[pyfunction]
fn normalize_log_weights(weights: Vec<f64>) -> PyResult<Vec<f64>> {
    dpcluster::normalize_log_weights(&weights).map_err(err)
}

#[pymodule]
fn playstyle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PlaystyleError", m.py().get_type::<PlaystyleError>())?;
    m.add_class::<MatchLog>()?;
    m.add_class::<Design>()?;
    m.add_class::<GlobalFit>()?;
    m.add_class::<PlayerEffects>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_global, m)?)?;
    m.add_function(wrap_pyfunction!(fit_player_effects, m)?)?;
    m.add_function(wrap_pyfunction!(run_sampler, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_models, m)?)?;
    m.add_function(wrap_pyfunction!(classify_stability, m)?)?;
    m.add_function(wrap_pyfunction!(top_cluster_reports, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_size_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(player_profile, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_log_weights, m)?)?;
    Ok(())
}
