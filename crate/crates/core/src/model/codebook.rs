use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::assignment::AssignmentMatrix;
use crate::error::{Error, Result};
use crate::numeric::softmax_rows;
use crate::FrameMatrix;

/// Tolerance on `‖z_b‖ = 1` accepted by [`code_probabilities`].
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// `K × D` matrix of unit-norm codewords plus the softmax temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub codewords: Array2<f64>,
    pub tau: f64,
}

impl Codebook {
    pub fn new(codewords: Array2<f64>, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::spec("tau", format!("must be positive, got {tau}")));
        }
        let mut cb = Self { codewords, tau };
        cb.renormalize()?;
        Ok(cb)
    }

    /// Codewords drawn from a spherical Gaussian and projected to the sphere.
    pub fn random<R: Rng + ?Sized>(k: usize, dim: usize, tau: f64, rng: &mut R) -> Result<Self> {
        let c = Array2::from_shape_fn((k, dim), |_| StandardNormal.sample(rng));
        Self::new(c, tau)
    }

    pub fn k(&self) -> usize {
        self.codewords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.codewords.ncols()
    }

    /// Projects every codeword back onto the unit sphere.
    pub fn renormalize(&mut self) -> Result<()> {
        for (k, mut row) in self.codewords.axis_iter_mut(Axis(0)).enumerate() {
            let n = row.dot(&row).sqrt();
            if !n.is_finite() || n < 1e-12 {
                return Err(Error::DegenerateRow { row: k, norm: n });
            }
            row.mapv_inplace(|v| v / n);
        }
        Ok(())
    }

    pub fn max_norm_deviation(&self) -> f64 {
        self.codewords
            .rows()
            .into_iter()
            .map(|r| (r.dot(&r).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_unit_rows(z: &FrameMatrix) -> Result<()> {
    for (b, row) in z.rows().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if !n.is_finite() {
            return Err(Error::NonFinite("representation row"));
        }
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotNormalized { row: b, norm: n });
        }
    }
    Ok(())
}

/// Cosine logits `z_b · c_k / τ` for unit-norm `Z`.
pub fn code_logits(z: &FrameMatrix, codebook: &Codebook) -> Result<Array2<f64>> {
    if z.ncols() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            context: "representation width vs codebook",
            expected: codebook.dim(),
            found: z.ncols(),
        });
    }
    check_unit_rows(z)?;
    Ok(z.dot(&codebook.codewords.t()) / codebook.tau)
}

/// Softmax over the temperature-scaled cosine similarities.
pub fn code_probabilities(z: &FrameMatrix, codebook: &Codebook) -> Result<AssignmentMatrix> {
    let logits = code_logits(z, codebook)?;
    Ok(AssignmentMatrix::from_trusted(softmax_rows(&logits)))
}

/// Per-row argmax; ties go to the lowest index.
pub fn quantize_argmax(p: &AssignmentMatrix) -> Vec<usize> {
    p.view()
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::seeded_rng;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_unit_rows(rows: usize, dim: usize, seed: u64) -> FrameMatrix {
        let mut rng = seeded_rng(seed, 7);
        let mut z: FrameMatrix = Array2::from_shape_fn((rows, dim), |_| StandardNormal.sample(&mut rng));
        for mut r in z.rows_mut() {
            let n = r.dot(&r).sqrt();
            r.mapv_inplace(|v| v / n);
        }
        z
    }

    #[test]
    fn closed_form_softmax_for_orthogonal_codewords() {
        let cb = Codebook::new(Array2::eye(3), 0.1).unwrap();
        let z = array![[0.0, 1.0, 0.0]];
        let p = code_probabilities(&z, &cb).unwrap();
        let e10 = 10f64.exp();
        let expected = e10 / (e10 + 2.0);
        assert!((p.view()[[0, 1]] - expected).abs() < 1e-15);
        assert!((p.view()[[0, 0]] - 1.0 / (e10 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn huge_temperature_gives_uniform_rows() {
        let mut rng = seeded_rng(2, 0);
        let cb = Codebook::random(7, 5, 1e6, &mut rng).unwrap();
        let z = random_unit_rows(20, 5, 3);
        let p = code_probabilities(&z, &cb).unwrap();
        for v in p.view().iter() {
            assert!((v - 1.0 / 7.0).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_unnormalized_representations() {
        let cb = Codebook::new(Array2::eye(2), 0.1).unwrap();
        let z = array![[1.0, 1.0]];
        assert!(matches!(
            code_probabilities(&z, &cb),
            Err(Error::NotNormalized { row: 0, .. })
        ));
    }

    #[test]
    fn argmax_of_one_hot_rows_and_ties() {
        let p = AssignmentMatrix::new(array![[0.0, 1.0, 0.0], [0.5, 0.5, 0.0], [0.2, 0.4, 0.4]])
            .unwrap();
        assert_eq!(quantize_argmax(&p), vec![1, 0, 1]);
    }

    #[test]
    fn argmax_matches_linear_scan() {
        let mut rng = seeded_rng(5, 1);
        let raw: Array2<f64> = Array2::from_shape_fn((200, 9), |_| rng.random::<f64>());
        let p = AssignmentMatrix::new(&raw / &raw.sum_axis(Axis(1)).insert_axis(Axis(1))).unwrap();
        let ids = quantize_argmax(&p);
        for (b, row) in p.view().rows().into_iter().enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = row.iter().position(|&v| v == max).unwrap();
            assert_eq!(ids[b], first);
        }
    }

    #[test]
    fn codewords_are_unit_norm_after_construction() {
        let mut rng = seeded_rng(9, 0);
        let cb = Codebook::random(256, 256, 0.1, &mut rng).unwrap();
        assert_eq!(cb.codewords.dim(), (256, 256));
        assert!(cb.max_norm_deviation() <= 1e-6);
    }

    proptest! {
        #[test]
        fn rows_sum_to_one_over_temperature_range(seed in 0u64..1000, log_tau in -3.0f64..6.0) {
            let tau = 10f64.powf(log_tau);
            let mut rng = seeded_rng(seed, 0);
            let cb = Codebook::random(6, 4, tau, &mut rng).unwrap();
            let z = random_unit_rows(10, 4, seed);
            let p = code_probabilities(&z, &cb).unwrap();
            for row in p.view().rows() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn temperature_never_changes_argmax(seed in 0u64..1000) {
            let mut rng = seeded_rng(seed, 0);
            let mut cb = Codebook::random(8, 5, 0.1, &mut rng).unwrap();
            let z = random_unit_rows(16, 5, seed + 1);
            let a = quantize_argmax(&code_probabilities(&z, &cb).unwrap());
            cb.tau = 1.0;
            let b = quantize_argmax(&code_probabilities(&z, &cb).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}
