//! Lloyd's k-means with k-means++ seeding.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each assignment step, starting with the seeded centroids.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; the lowest index wins ties.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every remaining point coincides with a centroid
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|i| !chosen[*i]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen[next] = true;
        centroids.push(points[next].clone());
        let c = centroids.last().unwrap();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centroids
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 {
        return Err(Error::Usage("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Usage(format!("k = {k} exceeds the number of points ({n})")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Usage("points have differing dimensions".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments = vec![0; n];
    let mut inertia_history = Vec::new();
    let mut iterations = 0;

    loop {
        let mut inertia = 0.0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (i, d) = nearest(p, &centroids);
            *a = i;
            inertia += d;
        }
        inertia_history.push(inertia);
        if iterations == MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut moved: f64 = 0.0;
        for ((c, s), &cnt) in centroids.iter_mut().zip(sums).zip(&counts) {
            // an empty cluster keeps its centroid
            if cnt == 0 {
                continue;
            }
            let new: Vec<f64> = s.into_iter().map(|v| v / cnt as f64).collect();
            moved = moved.max(sq_dist(c, &new).sqrt());
            *c = new;
        }
        if moved < TOLERANCE {
            // final assignment against the settled centroids
            let mut inertia = 0.0;
            for (a, p) in assignments.iter_mut().zip(points) {
                let (i, d) = nearest(p, &centroids);
                *a = i;
                inertia += d;
            }
            inertia_history.push(inertia);
            break;
        }
    }

    Ok(KMeansResult {
        assignments,
        centroids,
        inertia_history,
        iterations,
    })
}
