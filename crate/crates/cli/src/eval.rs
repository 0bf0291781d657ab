//! Evaluation of one trained model against its own initialization and
//! against training-free baselines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spin_core::metrics::{
    abx_error, build_abx_task, code_phone_heatmap, contingency, kmeans, phone_tokens, purity_metrics,
    speaker_probe, AbxTask, Heatmap,
};
use spin_core::model::{quantize_argmax, ModelParams};
use spin_core::numeric::mix_seed;
use spin_core::training::forward_view;
use spin_core::{Dataset, FrameMatrix, StackedFrames};

use crate::config::RunConfig;
use crate::error::{at, Result};

/// Stream tag separating the evaluation perturbations from training draws.
const EVAL_STREAM: u64 = 0xE7A1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitMetrics {
    pub cluster_purity: f64,
    pub phone_purity: f64,
    pub pnmi: f64,
    /// Fraction of the K units that at least one frame maps to.
    pub utilization: f64,
    /// For each phone id, the number of units whose most likely phone it is.
    pub codes_per_phone: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbxScores {
    pub within: Option<f64>,
    pub across: Option<f64>,
    pub n_within: usize,
    pub n_across: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbxComparison {
    /// `perturbed` when the corpus could be re-voiced, else `original`.
    pub inputs: String,
    pub trained: AbxScores,
    pub raw: AbxScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeLayer {
    pub layer: String,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub layers: Vec<ProbeLayer>,
    /// Topmost encoder layer, the one quoted in reports.
    pub final_layer: String,
    pub chance: f64,
}

impl ProbeReport {
    pub fn layer(&self, name: &str) -> Option<&ProbeLayer> {
        self.layers.iter().find(|l| l.layer == name)
    }

    pub fn final_probe(&self) -> &ProbeLayer {
        self.layer(&self.final_layer).expect("final layer is probed")
    }
}

#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub units: Option<UnitMetrics>,
    pub units_init: Option<UnitMetrics>,
    pub kmeans_baseline: Option<UnitMetrics>,
    pub abx: Option<AbxComparison>,
    pub probe: Option<ProbeReport>,
    /// Heatmap of the trained units, for plotting.
    pub heatmap: Option<Heatmap>,
}

pub fn model_codes(x: &FrameMatrix, params: &ModelParams) -> Result<Vec<usize>> {
    let view = forward_view(x, params).map_err(at("eval"))?;
    Ok(quantize_argmax(&view.p))
}

pub fn unit_metrics(codes: &[usize], labels: &[usize], n_phones: usize, k: usize) -> Result<(UnitMetrics, Heatmap)> {
    let table = contingency(codes, labels, n_phones, k).map_err(at("eval"))?;
    let m = purity_metrics(&table).map_err(at("eval"))?;
    let heatmap = code_phone_heatmap(&table);
    let used = table.code_totals().iter().filter(|&&c| c > 0).count();
    let units = UnitMetrics {
        cluster_purity: m.cluster_purity,
        phone_purity: m.phone_purity,
        pnmi: m.pnmi,
        utilization: used as f64 / k as f64,
        codes_per_phone: (0..n_phones).map(|p| heatmap.codes_for_phone(p)).collect(),
    };
    Ok((units, heatmap))
}

pub fn abx_scores(features: &FrameMatrix, task: &AbxTask) -> Result<AbxScores> {
    let r = abx_error(&task.features_by_token(features), task).map_err(at("eval"))?;
    Ok(AbxScores {
        within: r.within,
        across: r.across,
        n_within: r.n_within,
        n_across: r.n_across,
    })
}

/// The input, every encoder layer and the normalized projection, named
/// `input`, `enc1`.., `z`.
pub fn layer_outputs(x: &FrameMatrix, params: &ModelParams) -> Result<Vec<(String, FrameMatrix)>> {
    let view = forward_view(x, params).map_err(at("eval"))?;
    let mut out: Vec<(String, FrameMatrix)> = view
        .trace
        .into_iter()
        .enumerate()
        .map(|(i, m)| (if i == 0 { "input".to_string() } else { format!("enc{i}") }, m))
        .collect();
    out.push(("z".into(), view.z));
    Ok(out)
}

pub fn probe_layers(
    x: &FrameMatrix,
    speakers: &[usize],
    n_speakers: usize,
    init: &ModelParams,
    trained: &ModelParams,
    seed: u64,
) -> Result<ProbeReport> {
    let before = layer_outputs(x, init)?;
    let after = layer_outputs(x, trained)?;
    // The input is the same under both models; probe it once.
    let mut jobs: Vec<&FrameMatrix> = vec![&before[0].1];
    jobs.extend(before[1..].iter().map(|(_, m)| m));
    jobs.extend(after[1..].iter().map(|(_, m)| m));
    let acc = jobs
        .par_iter()
        .map(|m| speaker_probe(m, speakers, seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(at("eval"))?;
    let n = before.len() - 1;
    let mut layers = vec![ProbeLayer {
        layer: "input".into(),
        before: acc[0],
        after: acc[0],
    }];
    for i in 0..n {
        layers.push(ProbeLayer {
            layer: before[i + 1].0.clone(),
            before: acc[1 + i],
            after: acc[1 + n + i],
        });
    }
    // `before` ends with z; the topmost encoder layer sits just below it.
    let final_layer = before[before.len() - 2].0.clone();
    Ok(ProbeReport {
        layers,
        final_layer,
        chance: 1.0 / n_speakers as f64,
    })
}

/// Runs every metric the config asks for.
pub fn evaluate(ds: &Dataset, cfg: &RunConfig, init: &ModelParams, trained: &ModelParams) -> Result<Evaluation> {
    let st = ds.stacked();
    let n_phones = ds.manifest().n_phones();
    let k = cfg.train.k;
    let e = &cfg.eval;
    let mut out = Evaluation::default();

    if e.units {
        let (units, heatmap) = unit_metrics(&model_codes(&st.features, trained)?, &st.labels, n_phones, k)?;
        let (units_init, _) = unit_metrics(&model_codes(&st.features, init)?, &st.labels, n_phones, k)?;
        out.units = Some(units);
        out.units_init = Some(units_init);
        out.heatmap = Some(heatmap);
    }
    if e.kmeans_baseline {
        let km = kmeans(&st.features, k, e.kmeans_runs, e.seed).map_err(at("eval"))?;
        out.kmeans_baseline = Some(unit_metrics(&km.assignments, &st.labels, n_phones, k)?.0);
    }
    if e.abx {
        out.abx = Some(abx_comparison(ds, cfg, &st, trained)?);
    }
    if e.probe {
        out.probe = Some(probe_layers(
            &st.features,
            &st.speakers,
            ds.manifest().n_speakers(),
            init,
            trained,
            e.seed,
        )?);
    }
    Ok(out)
}

/// ABX on raw inputs versus the trained projection of the same inputs.
/// Inputs are re-voiced when the corpus allows it.
fn abx_comparison(ds: &Dataset, cfg: &RunConfig, st: &StackedFrames, trained: &ModelParams) -> Result<AbxComparison> {
    let (inputs, raw) = if ds.can_perturb() {
        let seed = mix_seed(&[cfg.perturb.seed, cfg.eval.seed, EVAL_STREAM]);
        let p = ds.stacked_perturbed(&cfg.perturb, seed).map_err(at("eval"))?;
        ("perturbed", p.features)
    } else {
        ("original", st.features.clone())
    };
    let tokens = phone_tokens(&st.labels, &st.speakers, &st.offsets);
    let task = build_abx_task(tokens, cfg.eval.abx_per_pair, cfg.eval.seed).map_err(at("eval"))?;
    let z = forward_view(&raw, trained).map_err(at("eval"))?.z;
    Ok(AbxComparison {
        inputs: inputs.into(),
        trained: abx_scores(&z, &task)?,
        raw: abx_scores(&raw, &task)?,
    })
}
