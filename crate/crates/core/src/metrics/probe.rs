//! Linear speaker-identification probe: multinomial logistic regression on
//! standardized frames, trained full-batch on a random 80% of the frames
//! and scored on the rest.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{seeded_rng, softmax_rows};
use crate::FrameMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Frames are subsampled to at most this many before splitting.
    pub max_frames: usize,
    pub test_fraction: f64,
    pub max_iters: usize,
    /// Stop once the training loss changes by less than this between steps.
    pub tol: f64,
    pub lr: f64,
    /// L2 penalty; keeps the optimum finite on separable data.
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            max_frames: 5000,
            test_fraction: 0.2,
            max_iters: 2000,
            tol: 1e-6,
            lr: 0.05,
            l2: 1e-4,
        }
    }
}

pub fn speaker_probe(features: &FrameMatrix, speaker_labels: &[usize], split_seed: u64) -> Result<f64> {
    speaker_probe_with(features, speaker_labels, split_seed, &ProbeConfig::default())
}

pub fn speaker_probe_with(
    features: &FrameMatrix,
    speaker_labels: &[usize],
    split_seed: u64,
    config: &ProbeConfig,
) -> Result<f64> {
    let n = features.nrows();
    if speaker_labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "probe labels",
            expected: n,
            found: speaker_labels.len(),
        });
    }
    let mut classes: Vec<usize> = speaker_labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Undefined("speaker probe needs at least two speakers"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(split_seed, 0x70726f6265));
    idx.truncate(config.max_frames.min(n));
    let n_test = ((idx.len() as f64) * config.test_fraction).round() as usize;
    if n_test == 0 || n_test >= idx.len() {
        return Err(Error::Undefined("too few frames for a train/test split"));
    }
    let (test, train) = idx.split_at(n_test);
    let class_of = |s: usize| classes.binary_search(&s).expect("known class");

    let x_train = features.select(Axis(0), train);
    let mean = x_train.mean_axis(Axis(0)).expect("non-empty");
    let std = x_train.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-8 { s } else { 1.0 });
    let standardize = |m: FrameMatrix| (m - &mean) / &std;
    let x_train = standardize(x_train);
    let x_test = standardize(features.select(Axis(0), test));
    let y_train: Vec<usize> = train.iter().map(|&i| class_of(speaker_labels[i])).collect();
    let y_test: Vec<usize> = test.iter().map(|&i| class_of(speaker_labels[i])).collect();

    let (w, b) = fit(&x_train, &y_train, classes.len(), config);
    let logits = x_test.dot(&w.t()) + &b;
    let correct = logits
        .rows()
        .into_iter()
        .zip(&y_test)
        .filter(|(r, &y)| argmax(r.iter().copied()) == y)
        .count();
    Ok(correct as f64 / y_test.len() as f64)
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    it.enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b })
        .0
}

/// Full-batch Adam on the penalized cross-entropy.
fn fit(x: &FrameMatrix, y: &[usize], c: usize, cfg: &ProbeConfig) -> (Array2<f64>, Array1<f64>) {
    let (n, d) = x.dim();
    let mut w = Array2::<f64>::zeros((c, d));
    let mut b = Array1::<f64>::zeros(c);
    let (mut mw, mut vw) = (Array2::<f64>::zeros((c, d)), Array2::<f64>::zeros((c, d)));
    let (mut mb, mut vb) = (Array1::<f64>::zeros(c), Array1::<f64>::zeros(c));
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut prev = f64::INFINITY;
    for t in 1..=cfg.max_iters {
        let mut p = softmax_rows(&(x.dot(&w.t()) + &b));
        let mut loss = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            loss -= p[[i, yi]].max(1e-300).ln();
            p[[i, yi]] -= 1.0;
        }
        loss = loss / n as f64 + 0.5 * cfg.l2 * w.iter().map(|v| v * v).sum::<f64>();
        if (prev - loss).abs() < cfg.tol {
            break;
        }
        prev = loss;
        let gw = p.t().dot(x) / n as f64 + &(&w * cfg.l2);
        let gb = p.sum_axis(Axis(0)) / n as f64;
        let (c1, c2) = (1.0 - f64::powi(b1, t as i32), 1.0 - f64::powi(b2, t as i32));
        mw = mw * b1 + &(&gw * (1.0 - b1));
        vw = vw * b2 + &(&gw * &gw * (1.0 - b2));
        mb = mb * b1 + &(&gb * (1.0 - b1));
        vb = vb * b2 + &(&gb * &gb * (1.0 - b2));
        let step = |p: &mut f64, &m: &f64, &v: &f64| *p -= cfg.lr * (m / c1) / ((v / c2).sqrt() + eps);
        Zip::from(&mut w).and(&mw).and(&vw).for_each(step);
        Zip::from(&mut b).and(&mb).and(&vb).for_each(step);
    }
    (w, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn one_hot_speakers_are_separable() {
        let n = 600;
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let mut x = Array2::zeros((n, 4));
        for (i, &s) in labels.iter().enumerate() {
            x[[i, s]] = 1.0;
        }
        assert_eq!(speaker_probe(&x, &labels, 3).unwrap(), 1.0);
    }

    #[test]
    fn noise_is_at_chance() {
        let n = 4000;
        let labels: Vec<usize> = (0..n).map(|i| i % 5).collect();
        let mut rng = seeded_rng(2, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = Array2::from_shape_fn((n, 8), |_| normal.sample(&mut rng));
        let acc = speaker_probe(&x, &labels, 1).unwrap();
        assert!((acc - 0.2).abs() <= 0.05, "accuracy {acc}");
    }

    #[test]
    fn single_speaker_is_an_error() {
        let x = Array2::zeros((10, 2));
        assert!(speaker_probe(&x, &[3; 10], 0).is_err());
    }
}
