use ndarray::Array2;

use crate::assignment::AssignmentMatrix;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Probabilities are clamped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-30;

pub(crate) fn log_floor() -> f64 {
    PROB_FLOOR.ln()
}

/// Swapped cross-entropy between the two views:
///
/// `-(1/2B) Σ_b Σ_k [ Q̃*[b,k] log P[b,k] + Q*[b,k] log P̃[b,k] ]`
///
/// `p` and `p_tilde` are the code distributions of the original and
/// perturbed views; `q_star` and `q_tilde_star` are the smoothed targets
/// computed from those same views.
pub fn swapped_loss(
    p: &AssignmentMatrix,
    p_tilde: &AssignmentMatrix,
    q_star: &AssignmentMatrix,
    q_tilde_star: &AssignmentMatrix,
) -> Result<f64> {
    let dim = p.view().dim();
    for (m, name) in [(p_tilde, "P~"), (q_star, "Q*"), (q_tilde_star, "Q~*")] {
        if m.view().dim() != dim {
            return Err(Error::InvalidConfig(format!(
                "{name} is {:?} but P is {:?}",
                m.view().dim(),
                dim
            )));
        }
    }
    let b = dim.0;
    if b == 0 {
        return Err(Error::spec("B", "batch is empty"));
    }
    let mut acc = CompensatedSum::new();
    add_cross_entropy(&mut acc, q_tilde_star.as_array(), p.as_array());
    add_cross_entropy(&mut acc, q_star.as_array(), p_tilde.as_array());
    Ok(acc.value() / (2.0 * b as f64))
}

fn add_cross_entropy(acc: &mut CompensatedSum, target: &Array2<f64>, pred: &Array2<f64>) {
    for (t, p) in target.iter().zip(pred.iter()) {
        if *t != 0.0 {
            acc.add(-t * p.max(PROB_FLOOR).ln());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{entropy, seeded_rng};
    use ndarray::{array, Axis};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_stochastic(b: usize, k: usize, rng: &mut impl Rng) -> AssignmentMatrix {
        let raw: Array2<f64> = Array2::from_shape_fn((b, k), |_| rng.random::<f64>() + 1e-3);
        AssignmentMatrix::new(&raw / &raw.sum_axis(Axis(1)).insert_axis(Axis(1))).unwrap()
    }

    #[test]
    fn perfect_one_hot_prediction_has_zero_loss() {
        let a = AssignmentMatrix::one_hot(&[0, 2, 1], 3).unwrap();
        let b = AssignmentMatrix::one_hot(&[1, 1, 0], 3).unwrap();
        assert_eq!(swapped_loss(&a, &b, &b, &a).unwrap(), 0.0);
    }

    #[test]
    fn uniform_everything_gives_log_k() {
        let u = AssignmentMatrix::uniform(5, 7);
        let l = swapped_loss(&u, &u, &u, &u).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn matches_naive_double_sum() {
        let mut rng = seeded_rng(21, 0);
        let (b, k) = (3, 4);
        let p = random_stochastic(b, k, &mut rng);
        let pt = random_stochastic(b, k, &mut rng);
        let q = random_stochastic(b, k, &mut rng);
        let qt = random_stochastic(b, k, &mut rng);
        let mut naive = 0.0;
        for i in 0..b {
            for j in 0..k {
                naive += qt.view()[[i, j]] * p.view()[[i, j]].ln();
                naive += q.view()[[i, j]] * pt.view()[[i, j]].ln();
            }
        }
        naive *= -1.0 / (2.0 * b as f64);
        assert!((swapped_loss(&p, &pt, &q, &qt).unwrap() - naive).abs() < 1e-14);
    }

    #[test]
    fn zero_probabilities_are_floored() {
        let p = AssignmentMatrix::new(array![[1.0, 0.0]]).unwrap();
        let q = AssignmentMatrix::new(array![[0.0, 1.0]]).unwrap();
        let l = swapped_loss(&p, &p, &q, &q).unwrap();
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = AssignmentMatrix::uniform(2, 3);
        let b = AssignmentMatrix::uniform(3, 3);
        assert!(swapped_loss(&a, &a, &b, &a).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_under_view_swap(seed in 0u64..5000) {
            let mut rng = seeded_rng(seed, 3);
            let p = random_stochastic(6, 5, &mut rng);
            let pt = random_stochastic(6, 5, &mut rng);
            let q = random_stochastic(6, 5, &mut rng);
            let qt = random_stochastic(6, 5, &mut rng);
            let a = swapped_loss(&p, &pt, &q, &qt).unwrap();
            let b = swapped_loss(&pt, &p, &qt, &q).unwrap();
            prop_assert!((a - b).abs() < 1e-13);
        }

        #[test]
        fn bounded_below_by_target_entropy(seed in 0u64..5000) {
            let mut rng = seeded_rng(seed, 4);
            let p = random_stochastic(5, 4, &mut rng);
            let pt = random_stochastic(5, 4, &mut rng);
            let q = random_stochastic(5, 4, &mut rng);
            let qt = random_stochastic(5, 4, &mut rng);
            let mean_h = |m: &AssignmentMatrix| {
                m.view().rows().into_iter().map(|r| entropy(r.iter().copied())).sum::<f64>() / 5.0
            };
            let bound = 0.5 * (mean_h(&q) + mean_h(&qt));
            prop_assert!(swapped_loss(&p, &pt, &q, &qt).unwrap() >= bound - 1e-9);
            // Equality when each prediction equals its target.
            let eq = swapped_loss(&qt, &q, &q, &qt).unwrap();
            prop_assert!((eq - bound).abs() < 1e-12);
        }
    }
}
