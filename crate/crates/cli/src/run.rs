//! The `run` pipeline: corpus, training, evaluation and artifacts.
//!
//! A run directory holds `config.toml`, `checkpoint.bin`, `train_log.csv`,
//! `metrics.json` and SVG plots. A sweep writes one such directory per
//! (K, seed) under the experiment directory, plus `sweep.json` and
//! `pnmi_vs_k.svg`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spin_core::corpus::{generate_synthetic_corpus, load_corpus};
use spin_core::training::{processed_speech_hours, train_with, TrainLog};
use spin_core::Dataset;

use crate::config::{CorpusSection, RunConfig, SubRun};
use crate::error::{at, write_file, CliError, Result};
use crate::eval::{evaluate, AbxComparison, Evaluation, ProbeReport, UnitMetrics};
use crate::plot::{bar_chart, heatmap_chart, line_chart, Series};

pub const METRICS_FILE: &str = "metrics.json";
pub const SWEEP_FILE: &str = "sweep.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

/// Everything measured for one trained model. Contains no timings, so
/// identical configs give byte-identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Sweep member label, empty for a plain run.
    pub label: String,
    pub k: usize,
    pub seed: u64,
    pub total_steps: usize,
    pub batch_seconds: f64,
    pub processed_speech_hours: f64,
    pub n_frames: usize,
    pub n_phones: usize,
    pub n_speakers: usize,
    pub final_loss: Option<f64>,
    /// Units used by the last training batch.
    pub final_batch_utilization: Option<f64>,
    /// Units of the trained model over the whole corpus.
    pub units: Option<UnitMetrics>,
    /// Same, for the model before training.
    pub units_init: Option<UnitMetrics>,
    pub kmeans_baseline: Option<UnitMetrics>,
    pub abx: Option<AbxComparison>,
    pub probe: Option<ProbeReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub n_seeds: usize,
    pub pnmi: f64,
    pub phone_purity: f64,
    pub cluster_purity: f64,
    pub utilization: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    /// Seed-averaged unit metrics, ascending in K.
    pub by_k: Vec<SweepPoint>,
    pub runs: Vec<RunMetrics>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub runs: Vec<RunMetrics>,
}

pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let manifest = match &config.corpus {
        CorpusSection::Synthetic(spec) => generate_synthetic_corpus(spec).map_err(at("corpus"))?,
        CorpusSection::Manifest { path } => load_corpus(path).map_err(at("corpus"))?,
    };
    let ds = Dataset::new(manifest, &config.features).map_err(at("corpus"))?;
    config.check_input_dim(ds.input_dim())?;
    Ok(ds)
}

pub fn run_experiment_file(config_path: &Path) -> Result<RunOutcome> {
    run_experiment(&RunConfig::load(config_path)?)
}

/// Validates, then generates or loads the corpus, trains and evaluates
/// every (sub-)run. A failure names its stage; files already written stay.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let dir = config.output_dir();
    let ds = load_dataset(config)?;
    write_file("setup", &dir.join(CONFIG_FILE), config.run_copy())?;

    let subs = config.sub_runs();
    let runs = if config.is_sweep() {
        let runs = subs
            .par_iter()
            .map(|sub| run_one(&ds, sub, &dir.join(&sub.label)))
            .collect::<Result<Vec<_>>>()?;
        write_sweep(&dir, &runs)?;
        runs
    } else {
        vec![run_one(&ds, &subs[0], &dir)?]
    };
    Ok(RunOutcome { dir, runs })
}

fn run_one(ds: &Dataset, sub: &SubRun, dir: &Path) -> Result<RunMetrics> {
    let cfg = &sub.config;
    if !sub.label.is_empty() {
        write_file("setup", &dir.join(CONFIG_FILE), cfg.run_copy())?;
    }
    let init = cfg.train.init().map_err(at("train"))?;
    let (ck, log) = train_with(ds, &cfg.train, &cfg.perturb, |_| {}).map_err(at("train"))?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::output("train", dir, e))?;
    ck.save(dir.join(CHECKPOINT_FILE)).map_err(at("train"))?;
    if !log.records.is_empty() {
        log.save_csv(dir.join(TRAIN_LOG_FILE)).map_err(at("train"))?;
        write_file("train", &dir.join("utilization.svg"), utilization_plot(&log))?;
    }

    let ev = evaluate(ds, cfg, &init, &ck.params)?;
    let metrics = run_metrics(ds, sub, &log, &ev);
    write_file("eval", &dir.join(METRICS_FILE), to_json(&metrics))?;
    if let Some(h) = &ev.heatmap {
        let names: Vec<String> = h.phone_order.iter().map(|&p| ds.manifest().header.phones[p].clone()).collect();
        let title = format!("P(phone | code), K = {}", cfg.train.k);
        write_file("eval", &dir.join("heatmap.svg"), heatmap_chart(&title, &h.values, &names))?;
    }
    if let Some(p) = &ev.probe {
        write_file("eval", &dir.join("probe.svg"), probe_plot(p))?;
    }
    Ok(metrics)
}

fn run_metrics(ds: &Dataset, sub: &SubRun, log: &TrainLog, ev: &Evaluation) -> RunMetrics {
    let t = &sub.config.train;
    let m = ds.manifest();
    RunMetrics {
        label: sub.label.clone(),
        k: t.k,
        seed: t.seed,
        total_steps: t.total_steps,
        batch_seconds: t.batch_seconds,
        processed_speech_hours: processed_speech_hours(t.total_steps as u64, t.batch_seconds),
        n_frames: m.total_frames(),
        n_phones: m.n_phones(),
        n_speakers: m.n_speakers(),
        final_loss: log.last().map(|r| r.loss),
        final_batch_utilization: log.last().map(|r| r.utilization),
        units: ev.units.clone(),
        units_init: ev.units_init.clone(),
        kmeans_baseline: ev.kmeans_baseline.clone(),
        abx: ev.abx.clone(),
        probe: ev.probe.clone(),
    }
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn summarize_sweep(runs: &[RunMetrics]) -> SweepSummary {
    let mut ks: Vec<usize> = runs.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let by_k = ks
        .into_iter()
        .filter_map(|k| {
            let units: Vec<&UnitMetrics> = runs.iter().filter(|r| r.k == k).filter_map(|r| r.units.as_ref()).collect();
            if units.is_empty() {
                return None;
            }
            let mean = |f: fn(&UnitMetrics) -> f64| units.iter().map(|u| f(u)).sum::<f64>() / units.len() as f64;
            Some(SweepPoint {
                k,
                n_seeds: units.len(),
                pnmi: mean(|u| u.pnmi),
                phone_purity: mean(|u| u.phone_purity),
                cluster_purity: mean(|u| u.cluster_purity),
                utilization: mean(|u| u.utilization),
            })
        })
        .collect();
    SweepSummary {
        by_k,
        runs: runs.to_vec(),
    }
}

fn write_sweep(dir: &Path, runs: &[RunMetrics]) -> Result<()> {
    let summary = summarize_sweep(runs);
    write_file("report", &dir.join(SWEEP_FILE), to_json(&summary))?;
    let pick = |name: &str, f: fn(&SweepPoint) -> f64| Series {
        name: name.into(),
        points: summary.by_k.iter().map(|p| (p.k as f64, f(p))).collect(),
    };
    let series = [
        pick("PNMI", |p| p.pnmi),
        pick("phone purity", |p| p.phone_purity),
        pick("cluster purity", |p| p.cluster_purity),
    ];
    let svg = line_chart("Unit quality vs codebook size", "K", "mean over seeds", &series, true);
    write_file("report", &dir.join("pnmi_vs_k.svg"), svg)
}

fn utilization_plot(log: &TrainLog) -> String {
    let series = [Series {
        name: "utilization".into(),
        points: log.records.iter().map(|r| (r.step as f64, r.utilization)).collect(),
    }];
    line_chart("Codebook utilization per batch", "step", "fraction of codes used", &series, false)
}

fn probe_plot(p: &ProbeReport) -> String {
    let cats: Vec<String> = p.layers.iter().map(|l| l.layer.clone()).collect();
    let series = vec![
        ("before".to_string(), p.layers.iter().map(|l| l.before).collect()),
        ("after".to_string(), p.layers.iter().map(|l| l.after).collect()),
        ("chance".to_string(), vec![p.chance; p.layers.len()]),
    ];
    bar_chart("Speaker probe accuracy per layer", "accuracy", &cats, &series)
}
