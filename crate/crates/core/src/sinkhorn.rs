//! Entropy-regularized balanced assignment.
//!
//! Targets maximize `Tr(Q S^T) + ε H(Q)` over the transportation polytope
//! with uniform row marginals `1/B` and uniform column marginals `1/K`,
//! where `S = Z C^T` holds the cosine similarities between frames and
//! codewords. The solution has Gibbs form `diag(u) exp(S/ε) diag(v)` and is
//! found by alternating column and row scalings in the log domain. The plan
//! is finally multiplied by `B` so every row is a distribution over codes.
//!
//! Nothing here participates in differentiation: callers treat the returned
//! targets as constants.

use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentMatrix;
use crate::error::{Error, Result};
use crate::model::{code_logits, Codebook};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::FrameMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SinkhornMode {
    FixedIterations,
    ConvergeToTol,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub n_iters: usize,
    pub mode: SinkhornMode,
    pub tol: f64,
    /// Iteration cap in converge mode.
    pub max_iters: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            n_iters: 3,
            mode: SinkhornMode::FixedIterations,
            tol: 1e-8,
            max_iters: 200_000,
        }
    }
}

impl SinkhornConfig {
    pub fn converged(epsilon: f64, tol: f64) -> Self {
        Self {
            epsilon,
            mode: SinkhornMode::ConvergeToTol,
            tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::spec("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if self.n_iters == 0 {
            return Err(Error::spec("n_iters", "must be at least 1"));
        }
        if self.mode == SinkhornMode::ConvergeToTol && !(self.tol > 0.0) {
            return Err(Error::spec("tol", "must be positive"));
        }
        Ok(())
    }
}

/// Marginal violations measured after one full (column, row) round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarginalViolation {
    pub iteration: usize,
    pub row: f64,
    pub column: f64,
}

/// Transport plan before the final `× B` rescale: rows sum to `1/B`,
/// columns to approximately `1/K`.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    log_plan: Array2<f64>,
    pub iterations: usize,
    pub trace: Vec<MarginalViolation>,
}

impl TransportPlan {
    pub fn plan(&self) -> Array2<f64> {
        self.log_plan.mapv(f64::exp)
    }

    pub fn row_marginals(&self) -> Array1<f64> {
        self.log_plan
            .rows()
            .into_iter()
            .map(|r| compensated_sum(r.iter().map(|v| v.exp())))
            .collect()
    }

    pub fn column_marginals(&self) -> Array1<f64> {
        let (_, k) = self.log_plan.dim();
        let mut acc = vec![CompensatedSum::new(); k];
        for row in self.log_plan.rows() {
            for (a, v) in acc.iter_mut().zip(row.iter()) {
                a.add(v.exp());
            }
        }
        acc.iter().map(CompensatedSum::value).collect()
    }

    /// Largest deviation of any row or column sum from its target marginal.
    pub fn max_violation(&self) -> f64 {
        let (b, k) = self.log_plan.dim();
        let rows = self
            .row_marginals()
            .iter()
            .map(|s| (s - 1.0 / b as f64).abs())
            .fold(0.0, f64::max);
        let cols = self
            .column_marginals()
            .iter()
            .map(|s| (s - 1.0 / k as f64).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }

    /// `H(Q) = -Σ Q log Q` of the plan.
    pub fn entropy(&self) -> f64 {
        -compensated_sum(self.log_plan.iter().map(|&l| l.exp() * l))
    }

    /// `Tr(Q S^T) + ε H(Q)` for the given similarity matrix.
    pub fn objective(&self, scores: &Array2<f64>, epsilon: f64) -> f64 {
        let linear = compensated_sum(
            self.log_plan
                .iter()
                .zip(scores.iter())
                .map(|(l, s)| l.exp() * s),
        );
        linear + epsilon * self.entropy()
    }

    /// Rows rescaled by `B` into per-frame distributions over codes.
    pub fn into_assignment(self) -> AssignmentMatrix {
        let b = self.log_plan.nrows() as f64;
        let shift = b.ln();
        AssignmentMatrix::from_trusted(self.log_plan.mapv(|l| (l + shift).exp()))
    }

    /// Per-iteration marginal violations as CSV (`iteration,row,column`).
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,row_violation,column_violation")?;
        for t in &self.trace {
            writeln!(w, "{},{:e},{:e}", t.iteration, t.row, t.column)?;
        }
        Ok(())
    }
}

/// Runs log-domain Sinkhorn-Knopp on a `B × K` similarity matrix.
pub fn sinkhorn(scores: &Array2<f64>, config: &SinkhornConfig) -> Result<TransportPlan> {
    config.validate()?;
    let (b, k) = scores.dim();
    if k == 0 {
        return Err(Error::spec("K", "codebook is empty"));
    }
    if b == 0 {
        return Err(Error::spec("B", "batch is empty"));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity matrix"));
    }
    let inv_eps = 1.0 / config.epsilon;
    let mut lq = scores.mapv(|s| s * inv_eps);
    let total = log_sum_exp_all(&lq);
    lq.mapv_inplace(|v| v - total);

    let log_b = (b as f64).ln();
    let log_k = (k as f64).ln();
    let target_col = 1.0 / k as f64;
    let target_row = 1.0 / b as f64;
    let cap = match config.mode {
        SinkhornMode::FixedIterations => config.n_iters,
        SinkhornMode::ConvergeToTol => config.max_iters,
    };

    let mut trace = Vec::new();
    let mut row_violation = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let col_lse = column_log_sum_exp(&lq);
        if iterations > 0 {
            let column = col_lse
                .iter()
                .map(|l| (l.exp() - target_col).abs())
                .fold(0.0, f64::max);
            trace.push(MarginalViolation {
                iteration: iterations,
                row: row_violation,
                column,
            });
            let violation = column.max(row_violation);
            if !violation.is_finite() {
                return Err(Error::NonFinite("sinkhorn marginals"));
            }
            match config.mode {
                SinkhornMode::FixedIterations if iterations >= cap => break,
                SinkhornMode::ConvergeToTol if violation < config.tol => break,
                SinkhornMode::ConvergeToTol if iterations >= cap => {
                    return Err(Error::NonConvergence {
                        iterations,
                        violation,
                    })
                }
                _ => {}
            }
        }
        for mut row in lq.axis_iter_mut(Axis(0)) {
            for (v, l) in row.iter_mut().zip(col_lse.iter()) {
                *v -= l + log_k;
            }
        }
        row_violation = 0.0;
        for mut row in lq.axis_iter_mut(Axis(0)) {
            let l = row_log_sum_exp(row.view());
            row.mapv_inplace(|v| v - l - log_b);
            let s = compensated_sum(row.iter().map(|v| v.exp()));
            row_violation = f64::max(row_violation, (s - target_row).abs());
        }
        iterations += 1;
    }

    Ok(TransportPlan {
        log_plan: lq,
        iterations,
        trace,
    })
}

/// Smoothed targets `Q*` for unit-norm representations `Z` against the
/// codebook. Rows of the result are distributions over the `K` codes.
pub fn smooth_targets(
    z: &FrameMatrix,
    codebook: &Codebook,
    config: &SinkhornConfig,
) -> Result<AssignmentMatrix> {
    Ok(smooth_targets_plan(z, codebook, config)?.into_assignment())
}

/// As [`smooth_targets`] but keeps the transport plan and its diagnostics.
pub fn smooth_targets_plan(
    z: &FrameMatrix,
    codebook: &Codebook,
    config: &SinkhornConfig,
) -> Result<TransportPlan> {
    if codebook.k() == 0 {
        return Err(Error::spec("K", "codebook is empty"));
    }
    if z.nrows() < codebook.k() {
        log::warn!(
            "batch of {} frames is smaller than the codebook ({} codes); \
             balanced targets will be spread thin",
            z.nrows(),
            codebook.k()
        );
    }
    // code_logits divides by tau; similarities are wanted here.
    let scores = code_logits(z, codebook)? * codebook.tau;
    sinkhorn(&scores, config)
}

/// Converged reference solver: iterates until both marginals are within
/// `tol`, failing if the iteration cap is reached first.
pub fn sinkhorn_exact(scores: &Array2<f64>, epsilon: f64, tol: f64) -> Result<TransportPlan> {
    sinkhorn(scores, &SinkhornConfig::converged(epsilon, tol))
}

fn row_log_sum_exp(row: ndarray::ArrayView1<f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if !max.is_finite() {
        return max;
    }
    max + compensated_sum(row.iter().map(|v| (v - max).exp())).ln()
}

fn column_log_sum_exp(lq: &Array2<f64>) -> Vec<f64> {
    let k = lq.ncols();
    let mut max = vec![f64::NEG_INFINITY; k];
    for row in lq.rows() {
        for (m, &v) in max.iter_mut().zip(row.iter()) {
            *m = m.max(v);
        }
    }
    let mut acc = vec![CompensatedSum::new(); k];
    for row in lq.rows() {
        for ((a, &v), &m) in acc.iter_mut().zip(row.iter()).zip(max.iter()) {
            a.add((v - m).exp());
        }
    }
    acc.iter()
        .zip(max.iter())
        .map(|(a, m)| m + a.value().ln())
        .collect()
}

fn log_sum_exp_all(lq: &Array2<f64>) -> f64 {
    let max = lq.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + compensated_sum(lq.iter().map(|v| (v - max).exp())).ln()
}
