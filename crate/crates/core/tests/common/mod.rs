#![allow(dead_code)]

use playstyle::dpcluster::{run_sampler, PlayerData, SamplerConfig, SamplerTrace};
use playstyle::ingest::{encode_all, filter_matches, DesignRow};
use playstyle::regress::{
    default_lambda_p, fit_global, fit_player_effects, split_holdout, GlobalFit, HoldoutSplit,
    PlayerEffects,
};
use playstyle::synth::{generate, GroundTruth, SyntheticSpec};

pub struct Pipeline {
    pub truth: GroundTruth,
    pub rows: Vec<DesignRow>,
    pub split: HoldoutSplit,
    pub global: GlobalFit,
    pub effects: PlayerEffects,
    pub data: PlayerData,
    pub trace: SamplerTrace,
}

/// Generate, filter, encode, split 90/10, fit on train, sample. `sigma2_scale`
/// multiplies the plug-in residual variance handed to the sampler.
pub fn run_pipeline(spec: &SyntheticSpec, iterations: usize, sigma2_scale: f64) -> Pipeline {
    let (records, truth) = generate(spec).unwrap();
    let kept = filter_matches(records).kept;
    let rows = encode_all(&kept, &truth.vocabulary).unwrap();
    let split = split_holdout(&rows, 0.1, spec.seed).unwrap();
    let global = fit_global(&split.train).unwrap();
    let lambda_p = default_lambda_p(&split.train).unwrap();
    let effects = fit_player_effects(&split.train, &global, lambda_p).unwrap();
    let data = PlayerData::new(&split.train, &global, &effects).unwrap();
    let config = SamplerConfig {
        iterations,
        seed: spec.seed,
        sigma2: Some(effects.mse * sigma2_scale),
        ..Default::default()
    };
    let trace = run_sampler(&data, config).unwrap();
    Pipeline {
        truth,
        rows,
        split,
        global,
        effects,
        data,
        trace,
    }
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
pub fn dense_solve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a[i * n..(i + 1) * n].to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            let (top, bottom) = m.split_at_mut(r);
            for (dst, src) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *dst -= f * src;
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|c| m[i][c] * x[c]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// `-(1 / 2 sigma2) * sum (r - x . b)^2` by direct summation over rows.
pub fn rowloop_loglik(rows: &[(Vec<f64>, f64)], b: &[f64], sigma2: f64) -> f64 {
    let rss: f64 = rows
        .iter()
        .map(|(x, r)| {
            let fit: f64 = x.iter().zip(b).map(|(u, v)| u * v).sum();
            (r - fit).powi(2)
        })
        .sum();
    -rss / (2.0 * sigma2)
}
