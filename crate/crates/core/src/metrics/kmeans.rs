use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::seeded_rng;
use crate::FrameMatrix;

pub const KMEANS_MAX_ITERS: usize = 300;
pub const KMEANS_REL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step of each run.
    pub traces: Vec<Vec<f64>>,
    pub best_run: usize,
}

impl KMeansResult {
    /// Nearest centroid of every row.
    pub fn predict(&self, x: &FrameMatrix) -> Vec<usize> {
        x.rows().into_iter().map(|r| nearest(r, &self.centroids).0).collect()
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: ArrayView1<f64>, c: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, row) in c.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus<R: Rng>(x: &FrameMatrix, k: usize, rng: &mut R) -> Array2<f64> {
    let n = x.nrows();
    let mut c = Array2::zeros((k, x.ncols()));
    c.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, c.row(0))).collect();
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        c.row_mut(j).assign(&x.row(pick));
        for (i, r) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, c.row(j)));
        }
    }
    c
}

fn lloyd(x: &FrameMatrix, mut c: Array2<f64>) -> (Array2<f64>, Vec<usize>, Vec<f64>) {
    let (n, dim) = x.dim();
    let k = c.nrows();
    let mut assign = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut inertia = 0.0;
        for (i, r) in x.rows().into_iter().enumerate() {
            let (best, d) = nearest(r, &c);
            // Keep the current centroid on exact ties.
            if assign[i] == usize::MAX || sq_dist(r, c.row(assign[i])) > d {
                assign[i] = best;
            }
            inertia += sq_dist(r, c.row(assign[i]));
        }
        let prev = trace.last().copied();
        trace.push(inertia);
        if let Some(p) = prev {
            if p - inertia <= KMEANS_REL_TOL * p.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (i, r) in x.rows().into_iter().enumerate() {
            sums.row_mut(assign[i]).scaled_add(1.0, &r);
            counts[assign[i]] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                c.row_mut(j).assign(&(&sums.row(j) / counts[j] as f64));
            }
        }
    }
    (c, assign, trace)
}

/// K-means with k-means++ seeding and Lloyd iterations until the relative
/// inertia change drops below `KMEANS_REL_TOL` (or `KMEANS_MAX_ITERS`).
/// Returns the best of `n_runs` runs by inertia.
pub fn kmeans(features: &FrameMatrix, k: usize, n_runs: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || n_runs == 0 {
        return Err(Error::spec("K", "K and n_runs must be positive"));
    }
    if k > features.nrows() {
        return Err(Error::spec(
            "K",
            format!("{k} clusters but only {} rows", features.nrows()),
        ));
    }
    let runs: Vec<_> = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeded_rng(seed, r as u64);
            let init = plus_plus(features, k, &mut rng);
            lloyd(features, init)
        })
        .collect();
    let best_run = (0..n_runs)
        .min_by(|&a, &b| {
            let ia = *runs[a].2.last().expect("one iteration");
            let ib = *runs[b].2.last().expect("one iteration");
            ia.total_cmp(&ib)
        })
        .expect("n_runs > 0");
    let traces: Vec<Vec<f64>> = runs.iter().map(|r| r.2.clone()).collect();
    let (centroids, assignments, trace) = runs.into_iter().nth(best_run).expect("index in range");
    Ok(KMeansResult {
        centroids,
        assignments,
        inertia: *trace.last().expect("one iteration"),
        traces,
        best_run,
    })
}
