use crate::error::{Error, Result};

use super::TrainConfig;

/// Piecewise-linear learning rate: `0 → lr_peak` over `[0, warmup]`, then
/// `lr_peak → lr_final` over `[warmup, total]`.
pub fn lr_schedule(step: usize, config: &TrainConfig) -> Result<f64> {
    let total = config.total_steps;
    let warmup = config.warmup_steps;
    if step > total {
        return Err(Error::StepOutOfRange { step, total });
    }
    if step <= warmup {
        if warmup == 0 {
            return Ok(config.lr_peak);
        }
        return Ok(config.lr_peak * step as f64 / warmup as f64);
    }
    let t = (step - warmup) as f64 / (total - warmup) as f64;
    // Written as a convex combination so both endpoints are exact.
    Ok(config.lr_peak * (1.0 - t) + config.lr_final * t)
}

/// Hours of speech processed: steps × effective batch seconds / 3600.
/// The effective batch counts one view.
pub fn processed_speech_hours(steps: u64, effective_batch_seconds: f64) -> f64 {
    steps as f64 * effective_batch_seconds / 3600.0
}

/// Fraction of the `k` codes that appear at least once in `code_ids`.
pub fn codebook_utilization(code_ids: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::spec("K", "must be positive"));
    }
    let mut seen = vec![false; k];
    for &id in code_ids {
        if id >= k {
            return Err(Error::IdOutOfRange { id, bound: k });
        }
        seen[id] = true;
    }
    Ok(seen.iter().filter(|&&s| s).count() as f64 / k as f64)
}
