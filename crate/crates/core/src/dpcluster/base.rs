use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal multivariate normal `N(mu, diag(lambda_diag))` from which brand
/// new styles are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasure {
    pub mu: Vec<f64>,
    pub lambda_diag: Vec<f64>,
    pub floor: f64,
}

impl BaseMeasure {
    pub fn new(mu: Vec<f64>, lambda_diag: Vec<f64>, floor: f64) -> Result<Self> {
        if mu.len() != lambda_diag.len() {
            return Err(Error::WidthMismatch {
                expected: mu.len(),
                got: lambda_diag.len(),
            });
        }
        if !(floor > 0.0) {
            return Err(Error::invalid("variance floor must be positive"));
        }
        if mu.iter().chain(&lambda_diag).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("base measure"));
        }
        let lambda_diag = lambda_diag.into_iter().map(|v| v.max(floor)).collect();
        Ok(BaseMeasure {
            mu,
            lambda_diag,
            floor,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.lambda_diag)
            .map(|(m, v)| {
                let z: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * z
            })
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        const LN_2PI: f64 = 1.837_877_066_409_345_5;
        x.iter()
            .zip(&self.mu)
            .zip(&self.lambda_diag)
            .map(|((x, m), v)| -0.5 * (LN_2PI + v.ln() + (x - m) * (x - m) / v))
            .sum()
    }
}

/// Elementwise mean and sample variance (n - 1 denominator) of the initial
/// centers, variances floored at `max(1e-6, 1e-3 * median variance)`.
pub fn estimate_base_measure(centers: &[Vec<f64>]) -> Result<BaseMeasure> {
    if centers.len() < 2 {
        return Err(Error::invalid(format!(
            "base measure needs at least 2 centers, got {}; supply one explicitly",
            centers.len()
        )));
    }
    let p = centers[0].len();
    if centers.iter().any(|c| c.len() != p) {
        return Err(Error::invalid("centers differ in dimension"));
    }
    let n = centers.len() as f64;
    let mut mu = vec![0.0; p];
    for c in centers {
        for (m, v) in mu.iter_mut().zip(c) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; p];
    for c in centers {
        for ((s, v), m) in var.iter_mut().zip(c).zip(&mu) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n - 1.0);

    let mut sorted = var.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if p == 0 {
        0.0
    } else if p % 2 == 1 {
        sorted[p / 2]
    } else {
        0.5 * (sorted[p / 2 - 1] + sorted[p / 2])
    };
    let floor = (1e-3 * median).max(1e-6);
    BaseMeasure::new(mu, var, floor)
}
