use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// A `B × K` row-stochastic matrix: per-frame distributions over codewords.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMatrix(Array2<f64>);

impl AssignmentMatrix {
    /// Wraps `m` after checking every row is a distribution within `1e-6`.
    pub fn new(m: Array2<f64>) -> Result<Self> {
        for (b, row) in m.rows().into_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::NonFinite("assignment row"));
            }
            let s = compensated_sum(row.iter().copied());
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidConfig(format!(
                    "assignment row {b} sums to {s}, not 1"
                )));
            }
        }
        Ok(Self(m))
    }

    pub(crate) fn from_trusted(m: Array2<f64>) -> Self {
        Self(m)
    }

    /// Uniform `1/K` rows.
    pub fn uniform(rows: usize, k: usize) -> Self {
        Self(Array2::from_elem((rows, k), 1.0 / k as f64))
    }

    /// One-hot rows at the given code ids.
    pub fn one_hot(ids: &[usize], k: usize) -> Result<Self> {
        let mut m = Array2::zeros((ids.len(), k));
        for (b, &id) in ids.iter().enumerate() {
            if id >= k {
                return Err(Error::IdOutOfRange { id, bound: k });
            }
            m[[b, id]] = 1.0;
        }
        Ok(Self(m))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn codes(&self) -> usize {
        self.0.ncols()
    }

    /// Entropy (nats) of the batch-mean distribution.
    pub fn mean_entropy(&self) -> f64 {
        let b = self.rows().max(1) as f64;
        crate::numeric::entropy(
            self.0
                .columns()
                .into_iter()
                .map(|c| compensated_sum(c.iter().copied()) / b),
        )
    }

    /// Mean over rows of each row's entropy (nats).
    pub fn mean_row_entropy(&self) -> f64 {
        let b = self.rows().max(1) as f64;
        compensated_sum(
            self.0
                .rows()
                .into_iter()
                .map(|r| crate::numeric::entropy(r.iter().copied())),
        ) / b
    }
}
