//! Swapped-prediction training: objective, gradients, optimizer, schedule
//! and the loop that ties them to a dataset.

mod gradients;
mod loss;
mod optim;
mod schedule;

pub use gradients::{
    forward_view, swapped_objective, view_targets, Gradients, LayerGradient, StepOutput, TargetMode,
    ViewForward,
};
pub use loss::{swapped_loss, PROB_FLOOR};
pub use optim::{Adam, AdamConfig};
pub use schedule::{codebook_utilization, lr_schedule, processed_speech_hours};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{batch_frames, FrameBatchPair};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{init_params, quantize_argmax, Checkpoint, ModelDims, ModelParams};
use crate::numeric::{entropy, mix_seed};
use crate::perturb::PerturbConfig;
use crate::sinkhorn::{SinkhornConfig, SinkhornMode};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    /// Parameters and inputs rounded to single precision at every step.
    F32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k: usize,
    pub d: usize,
    pub tau: f64,
    pub epsilon: f64,
    pub sinkhorn_iters: usize,
    pub batch_seconds: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub lr_peak: f64,
    pub lr_final: f64,
    pub optimizer: AdamConfig,
    pub seed: u64,
    pub targets: TargetMode,
    pub model: ModelDims,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 256,
            d: 256,
            tau: 0.1,
            epsilon: 0.02,
            sinkhorn_iters: 3,
            batch_seconds: 256.0,
            total_steps: 5000,
            warmup_steps: 2500,
            lr_peak: 1e-4,
            lr_final: 1e-6,
            optimizer: AdamConfig::default(),
            seed: 0,
            targets: TargetMode::Sinkhorn,
            model: ModelDims::default(),
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::spec("K", "must be positive"));
        }
        if self.d == 0 {
            return Err(Error::spec("D", "must be positive"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::spec("tau", "must be positive"));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::spec(
                "warmup_steps",
                format!("{} exceeds total_steps {}", self.warmup_steps, self.total_steps),
            ));
        }
        if !(self.lr_peak > self.lr_final && self.lr_final > 0.0) {
            return Err(Error::spec(
                "lr_peak",
                format!("need lr_peak > lr_final > 0, got {} and {}", self.lr_peak, self.lr_final),
            ));
        }
        if !(self.batch_seconds > 0.0) {
            return Err(Error::spec("batch_seconds", "must be positive"));
        }
        self.sinkhorn().validate()
    }

    pub fn sinkhorn(&self) -> SinkhornConfig {
        SinkhornConfig {
            epsilon: self.epsilon,
            n_iters: self.sinkhorn_iters,
            mode: SinkhornMode::FixedIterations,
            ..SinkhornConfig::default()
        }
    }

    pub fn init(&self) -> Result<ModelParams> {
        let mut p = init_params(&self.model, self.k, self.d, self.tau, self.seed)?;
        if self.precision == Precision::F32 {
            round_params(&mut p)?;
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub utilization: f64,
    /// Entropy (nats) of the batch-mean code distribution of the original view.
    pub mean_p_entropy: f64,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,loss,lr,utilization,mean_p_entropy,wall_clock_s")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{},{:.17e},{:.6}",
                r.step, r.loss, r.lr, r.utilization, r.mean_p_entropy, r.wall_clock_s
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}

/// Forward both views, derive both targets without gradient, and return
/// the swapped loss with its analytic gradients.
pub fn loss_gradients(pair: &FrameBatchPair, params: &ModelParams, config: &TrainConfig) -> Result<StepOutput> {
    let sk = config.sinkhorn();
    let view = |x| -> Result<_> {
        let f = forward_view(x, params)?;
        let q = view_targets(&f, params, config.targets, &sk)?;
        Ok((f, q))
    };
    let (o, p) = rayon::join(|| view(&pair.original), || view(&pair.perturbed));
    let (fo, q_star) = o?;
    let (fp, q_tilde_star) = p?;
    gradients::objective_from_views(params, fo, fp, &q_star, &q_tilde_star)
}

/// Runs `config.total_steps` updates. Update `n` (1-based) draws the next
/// batch, perturbs each of its utterances, and applies the gradient at
/// `lr_schedule(n)`; codewords are projected back to the sphere after
/// every update. Deterministic for a fixed seed.
pub fn train(dataset: &Dataset, config: &TrainConfig, perturb: &PerturbConfig) -> Result<(Checkpoint, TrainLog)> {
    train_with(dataset, config, perturb, |_| {})
}

/// As [`train`], calling `observe` after every step.
pub fn train_with(
    dataset: &Dataset,
    config: &TrainConfig,
    perturb: &PerturbConfig,
    mut observe: impl FnMut(&StepRecord),
) -> Result<(Checkpoint, TrainLog)> {
    config.validate()?;
    perturb.validate()?;
    if config.model.input_dim != dataset.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "model input_dim vs corpus features",
            expected: dataset.input_dim(),
            found: config.model.input_dim,
        });
    }
    let mut params = config.init()?;
    let mut log = TrainLog::default();
    if config.total_steps == 0 {
        return Ok((Checkpoint { params, step: 0 }, log));
    }
    if !dataset.can_perturb() {
        return Err(Error::NotSynthetic("training needs a perturbable corpus".into()));
    }
    let sampler = batch_frames(dataset.manifest(), config.batch_seconds, config.seed)?;
    let mut batches = sampler.stream();
    let mut adam = Adam::new(config.optimizer.clone(), &params);
    let start = Instant::now();
    for step in 1..=config.total_steps {
        let plan = batches.next().expect("endless stream");
        let mut pair = dataset.batch_pair(&plan, perturb, mix_seed(&[config.seed, step as u64]))?;
        if config.precision == Precision::F32 {
            round_f32(pair.original.view_mut());
            round_f32(pair.perturbed.view_mut());
        }
        let lr = lr_schedule(step, config)?;
        let out = loss_gradients(&pair, &params, config)?;
        let codes = quantize_argmax(&out.original.p);
        let utilization = codebook_utilization(&codes, config.k)?;
        let mean_p = out.original.p.as_array().mean_axis(ndarray::Axis(0)).expect("non-empty batch");
        let mean_p_entropy = entropy(mean_p.iter().copied());
        if !out.loss.is_finite() {
            return Err(Error::NanLoss {
                step,
                lr,
                entropy: mean_p_entropy,
                utilization,
            });
        }
        adam.step(&mut params, &out.gradients, lr);
        params.codebook.renormalize()?;
        if config.precision == Precision::F32 {
            round_params(&mut params)?;
        }
        let rec = StepRecord {
            step,
            loss: out.loss,
            lr,
            utilization,
            mean_p_entropy,
            wall_clock_s: start.elapsed().as_secs_f64(),
        };
        observe(&rec);
        log.records.push(rec);
    }
    Ok((
        Checkpoint {
            params,
            step: config.total_steps as u64,
        },
        log,
    ))
}

fn round_f32<D: ndarray::Dimension>(mut a: ndarray::ArrayViewMut<f64, D>) {
    a.mapv_inplace(|v| v as f32 as f64);
}

fn round_params(p: &mut ModelParams) -> Result<()> {
    for l in p.encoder.layers.iter_mut() {
        round_f32(l.weight.view_mut());
        round_f32(l.bias.view_mut());
    }
    round_f32(p.projection.weight.view_mut());
    if let Some(b) = p.projection.bias.as_mut() {
        round_f32(b.view_mut());
    }
    round_f32(p.codebook.codewords.view_mut());
    Ok(())
}
