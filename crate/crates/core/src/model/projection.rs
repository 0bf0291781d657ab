use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::FrameMatrix;

/// Rows whose projected norm falls below this are rejected as degenerate.
pub const MIN_PROJECTED_NORM: f64 = 1e-8;

/// Linear map to the D-dimensional code space. `weight` is `D × hidden`.
/// The bias is optional; when absent it is neither applied nor trained.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionParams {
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl ProjectionParams {
    pub fn glorot<R: Rng + ?Sized>(hidden: usize, dim: usize, with_bias: bool, rng: &mut R) -> Self {
        let limit = (6.0 / (hidden + dim) as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((dim, hidden), |_| rng.random_range(-limit..=limit)),
            bias: with_bias.then(|| Array1::zeros(dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    /// `W h + b` per row, before normalization.
    pub fn affine(&self, hidden: &FrameMatrix) -> Result<FrameMatrix> {
        if hidden.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "projection input columns",
                expected: self.input_dim(),
                found: hidden.ncols(),
            });
        }
        let mut u = hidden.dot(&self.weight.t());
        if let Some(b) = &self.bias {
            u += &b.view().insert_axis(Axis(0));
        }
        Ok(u)
    }
}

/// Divides every row by its L2 norm, returning the normalized rows and the
/// norms. Fails on rows with norm below [`MIN_PROJECTED_NORM`].
pub fn normalize_rows(u: &FrameMatrix) -> Result<(FrameMatrix, Array1<f64>)> {
    let mut z = u.clone();
    let mut norms = Array1::zeros(u.nrows());
    for (b, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !n.is_finite() {
            return Err(Error::NonFinite("projected representation"));
        }
        if n < MIN_PROJECTED_NORM {
            return Err(Error::DegenerateRow { row: b, norm: n });
        }
        row.mapv_inplace(|v| v / n);
        norms[b] = n;
    }
    Ok((z, norms))
}

/// Projects hidden frames into code space and L2-normalizes every row.
pub fn project_normalize(hidden: &FrameMatrix, proj: &ProjectionParams) -> Result<FrameMatrix> {
    let u = proj.affine(hidden)?;
    Ok(normalize_rows(&u)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::seeded_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rows_are_unit_norm() {
        let mut rng = seeded_rng(11, 0);
        let proj = ProjectionParams::glorot(6, 5, true, &mut rng);
        let h = Array2::from_shape_fn((40, 6), |_| StandardNormal.sample(&mut rng));
        let z = project_normalize(&h, &proj).unwrap();
        for row in z.rows() {
            let n = row.dot(&row).sqrt();
            assert!((n - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn scale_invariant_without_bias() {
        let mut rng = seeded_rng(12, 0);
        let proj = ProjectionParams {
            weight: Array2::eye(4),
            bias: Some(Array1::zeros(4)),
        };
        let h = Array2::from_shape_fn((7, 4), |_| StandardNormal.sample(&mut rng));
        let a = project_normalize(&h, &proj).unwrap();
        let b = project_normalize(&(&h * 10.0), &proj).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_direct_recomputation() {
        let mut rng = seeded_rng(13, 0);
        let x: Array2<f64> = Array2::from_shape_fn((4, 8), |_| StandardNormal.sample(&mut rng));
        let w: Array2<f64> = Array2::from_shape_fn((5, 8), |_| StandardNormal.sample(&mut rng));
        let b: Array1<f64> = Array1::from_shape_fn(5, |_| StandardNormal.sample(&mut rng));
        let proj = ProjectionParams {
            weight: w.clone(),
            bias: Some(b.clone()),
        };
        let z = project_normalize(&x, &proj).unwrap();
        for r in 0..4 {
            let mut v = [0.0; 5];
            for (o, vo) in v.iter_mut().enumerate() {
                *vo = b[o];
                for i in 0..8 {
                    *vo += w[[o, i]] * x[[r, i]];
                }
            }
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            for o in 0..5 {
                assert!((z[[r, o]] - v[o] / n).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_row_is_an_error() {
        let proj = ProjectionParams {
            weight: Array2::eye(3),
            bias: None,
        };
        let mut h = Array2::from_elem((3, 3), 1.0);
        h.row_mut(2).fill(0.0);
        assert!(matches!(
            project_normalize(&h, &proj),
            Err(Error::DegenerateRow { row: 2, .. })
        ));
    }
}
