//! Lloyd's K-means with k-means++ seeding, used to initialise the partition.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

/// `round(sqrt(n / 2))`, at least one.
pub fn default_k(n: usize) -> usize {
    ((n as f64 / 2.0).sqrt().round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point already coincides with a center
            Err(_) => rng.random_range(0..n),
        };
        centers.push(points[next].clone());
        let c = centers.last().unwrap();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centers
}

pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Result<KMeansResult> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("k-means input"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("k-means points differ in dimension"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input"));
    }

    let mut centers = plus_plus(points, k, rng);
    let mut labels = vec![0usize; n];
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        for (l, p) in labels.iter_mut().zip(points) {
            *l = nearest(p, &centers).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (l, p) in labels.iter().zip(points) {
            counts[*l] += 1;
            for (s, v) in sums[*l].iter_mut().zip(p) {
                *s += v;
            }
        }
        // an empty cluster takes the point farthest from its current center
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let (far, _) = points
                .iter()
                .enumerate()
                .filter(|(i, _)| counts[labels[*i]] > 1)
                .map(|(i, p)| (i, sq_dist(p, &centers[labels[i]])))
                .fold((usize::MAX, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            if far == usize::MAX {
                continue;
            }
            let old = labels[far];
            counts[old] -= 1;
            for (s, v) in sums[old].iter_mut().zip(&points[far]) {
                *s -= v;
            }
            labels[far] = c;
            counts[c] = 1;
            sums[c] = points[far].clone();
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centers[c]).sqrt());
            centers[c] = new;
        }
        if shift < TOLERANCE {
            break;
        }
    }
    for (l, p) in labels.iter_mut().zip(points) {
        *l = nearest(p, &centers).0;
    }
    let inertia = labels
        .iter()
        .zip(points)
        .map(|(l, p)| sq_dist(p, &centers[*l]))
        .sum();
    Ok(KMeansResult {
        centers,
        labels,
        inertia,
        iterations,
    })
}
