//! Single-stage subcommands. Each reads its inputs, writes only into its
//! own output directory, and returns the main file it produced.

use std::path::{Path, PathBuf};

use serde::Serialize;
use spin_core::corpus::{
    generate_synthetic_corpus, load_corpus, write_feature_dump, write_wav, CorpusManifest, ManifestHeader, Source,
    SyntheticMode, SyntheticRenderer, SyntheticSpec,
};
use spin_core::metrics::{build_abx_task, kmeans, phone_tokens, speaker_probe};
use spin_core::model::{Checkpoint, ModelParams};
use spin_core::perturb::{PerturbConfig, PerturbParams};
use spin_core::training::{forward_view, train_with};
use spin_core::{perturbation_draw, Dataset};

use crate::config::RunConfig;
use crate::error::{at, write_file, CliError, Result};
use crate::eval::{abx_scores, layer_outputs, model_codes, unit_metrics};
use crate::run::{load_dataset, to_json, CHECKPOINT_FILE, CONFIG_FILE, TRAIN_LOG_FILE};

pub const MANIFEST_FILE: &str = "manifest.json";

fn manifest_header(m: &CorpusManifest) -> ManifestHeader {
    ManifestHeader {
        synthetic: None,
        ..m.header.clone()
    }
}

/// Writes a synthetic corpus. By default the manifest keeps the generator
/// record and renders frames on load; `export` writes each utterance to a
/// file (feature dumps or WAV) and drops the record.
pub fn gen_corpus(spec: &SyntheticSpec, out: &Path, export: bool) -> Result<PathBuf> {
    spec.validate().map_err(|e| CliError::config(format!("[corpus] {e}")))?;
    let m = generate_synthetic_corpus(spec).map_err(at("corpus"))?;
    let path = out.join(MANIFEST_FILE);
    if !export {
        write_file("corpus", &path, m.to_json())?;
        return Ok(path);
    }
    let header = m.header.synthetic.as_ref().expect("generated manifests carry their spec");
    let renderer = SyntheticRenderer::new(&header.spec).map_err(at("corpus"))?;
    let speakers = m.speaker_indices();
    let mut utterances = m.utterances.clone();
    for (i, u) in utterances.iter_mut().enumerate() {
        let Source::Synthetic { noise_seed } = u.source else {
            unreachable!("generated utterances are synthetic")
        };
        let voice = header.voices[speakers[i]];
        let (rel, file) = match spec.mode {
            SyntheticMode::FeatureLevel => (PathBuf::from(format!("features/{}.feat", u.utterance_id)), true),
            SyntheticMode::AudioLevel => (PathBuf::from(format!("audio/{}.wav", u.utterance_id)), false),
        };
        let abs = out.join(&rel);
        if let Some(dir) = abs.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::output("corpus", dir, e))?;
        }
        if file {
            let f = renderer.render_features(&u.frame_labels, voice, noise_seed).map_err(at("corpus"))?;
            write_feature_dump(&abs, &f.frames).map_err(at("corpus"))?;
            u.source = Source::Features { path: rel };
        } else {
            let wave = renderer.render_audio(&u.frame_labels, voice, noise_seed).map_err(at("corpus"))?;
            write_wav(&abs, &wave).map_err(at("corpus"))?;
            u.source = Source::Wav { path: rel };
        }
    }
    let exported = CorpusManifest::new(manifest_header(&m), utterances).map_err(at("corpus"))?;
    write_file("corpus", &path, exported.to_json())?;
    Ok(path)
}

fn open_dataset(manifest: &Path) -> Result<Dataset> {
    if !manifest.is_file() {
        return Err(CliError::config(format!("manifest {} does not exist", manifest.display())));
    }
    let m = load_corpus(manifest).map_err(at("corpus"))?;
    Dataset::new(m, &Default::default()).map_err(at("corpus"))
}

fn open_checkpoint(path: Option<&Path>, ds: &Dataset) -> Result<Option<ModelParams>> {
    let Some(path) = path else { return Ok(None) };
    if !path.is_file() {
        return Err(CliError::config(format!("checkpoint {} does not exist", path.display())));
    }
    let ck = Checkpoint::load(path).map_err(at("checkpoint"))?;
    let dim = ck.params.encoder.input_dim();
    if dim != ds.input_dim() {
        return Err(CliError::config(format!(
            "checkpoint expects {dim}-dimensional frames but the corpus yields {}",
            ds.input_dim()
        )));
    }
    Ok(Some(ck.params))
}

#[derive(Serialize)]
struct PerturbRecord<'a> {
    utterance_id: &'a str,
    params: PerturbParams,
}

/// Re-voices every utterance once and stores the resulting features with
/// the drawn parameters.
pub fn perturb(manifest: &Path, config: &PerturbConfig, seed: u64, out: &Path) -> Result<PathBuf> {
    config.validate().map_err(|e| CliError::config(format!("[perturb] {e}")))?;
    let ds = open_dataset(manifest)?;
    if !ds.can_perturb() {
        return Err(CliError::config("stored features cannot be perturbed; give audio or a synthetic manifest"));
    }
    let mut utterances = ds.manifest().utterances.clone();
    let mut records = Vec::with_capacity(utterances.len());
    for (i, u) in utterances.iter_mut().enumerate() {
        let (params, noise_seed) = perturbation_draw(config, seed, i);
        let frames = ds.perturbed_utterance(i, &params, noise_seed, config).map_err(at("perturb"))?;
        let rel = PathBuf::from(format!("features/{}.feat", u.utterance_id));
        let abs = out.join(&rel);
        std::fs::create_dir_all(abs.parent().unwrap()).map_err(|e| CliError::output("perturb", &abs, e))?;
        write_feature_dump(&abs, &frames).map_err(at("perturb"))?;
        u.source = Source::Features { path: rel };
        records.push(PerturbRecord {
            utterance_id: &ds.manifest().utterances[i].utterance_id,
            params,
        });
    }
    write_file("perturb", &out.join("perturbations.json"), to_json(&records))?;
    let m = CorpusManifest::new(manifest_header(ds.manifest()), utterances).map_err(at("perturb"))?;
    let path = out.join(MANIFEST_FILE);
    write_file("perturb", &path, m.to_json())?;
    Ok(path)
}

/// Trains without evaluating: config copy, checkpoint and step log.
pub fn train(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    config.validate()?;
    if config.is_sweep() {
        return Err(CliError::config("train runs a single model; use `run` for sweeps"));
    }
    let ds = load_dataset(config)?;
    write_file("setup", &out.join(CONFIG_FILE), config.run_copy())?;
    let (ck, log) = train_with(&ds, &config.train, &config.perturb, |_| {}).map_err(at("train"))?;
    let path = out.join(CHECKPOINT_FILE);
    ck.save(&path).map_err(at("train"))?;
    log.save_csv(out.join(TRAIN_LOG_FILE)).map_err(at("train"))?;
    Ok(path)
}

fn write_table(stage: &'static str, out: &Path, stem: &str, header: &str, rows: &[String], json: String) -> Result<PathBuf> {
    let mut csv = format!("{header}\n");
    for r in rows {
        csv.push_str(r);
        csv.push('\n');
    }
    write_file(stage, &out.join(format!("{stem}.csv")), csv)?;
    let path = out.join(format!("{stem}.json"));
    write_file(stage, &path, json)?;
    Ok(path)
}

/// Purity and PNMI of a checkpoint's units, or of K-means on the raw
/// features when no checkpoint is given.
pub fn eval_units(manifest: &Path, checkpoint: Option<&Path>, k: usize, seed: u64, out: &Path) -> Result<PathBuf> {
    let ds = open_dataset(manifest)?;
    let params = open_checkpoint(checkpoint, &ds)?;
    let st = ds.stacked();
    let (codes, k, source) = match &params {
        Some(p) => (model_codes(&st.features, p)?, p.k(), "checkpoint"),
        None => {
            if k == 0 {
                return Err(CliError::config("--k must be positive"));
            }
            let km = kmeans(&st.features, k, 3, seed).map_err(at("eval"))?;
            (km.assignments, k, "kmeans")
        }
    };
    let (u, _) = unit_metrics(&codes, &st.labels, ds.manifest().n_phones(), k)?;
    let row = format!(
        "{source},{k},{},{},{},{}",
        u.cluster_purity, u.phone_purity, u.pnmi, u.utilization
    );
    #[derive(Serialize)]
    struct Out<'a> {
        source: &'a str,
        k: usize,
        #[serde(flatten)]
        units: &'a crate::eval::UnitMetrics,
    }
    let json = to_json(&Out { source, k, units: &u });
    write_table("eval", out, "units", "source,k,cluster_purity,phone_purity,pnmi,utilization", &[row], json)
}

/// ABX within and across speakers on raw features, or on a checkpoint's
/// normalized projections.
pub fn eval_abx(manifest: &Path, checkpoint: Option<&Path>, per_pair: usize, seed: u64, out: &Path) -> Result<PathBuf> {
    if per_pair == 0 {
        return Err(CliError::config("--per-pair must be positive"));
    }
    let ds = open_dataset(manifest)?;
    let params = open_checkpoint(checkpoint, &ds)?;
    let st = ds.stacked();
    let task = build_abx_task(phone_tokens(&st.labels, &st.speakers, &st.offsets), per_pair, seed).map_err(at("eval"))?;
    let (features, source) = match &params {
        Some(p) => (forward_view(&st.features, p).map_err(at("eval"))?.z, "checkpoint"),
        None => (st.features.clone(), "raw"),
    };
    let s = abx_scores(&features, &task)?;
    let f = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let row = format!("{source},{},{},{},{}", f(s.within), f(s.across), s.n_within, s.n_across);
    write_table("eval", out, "abx", "source,within,across,n_within,n_across", &[row], to_json(&s))
}

/// Speaker probe on the input and, with a checkpoint, on every layer.
pub fn probe(manifest: &Path, checkpoint: Option<&Path>, seed: u64, out: &Path) -> Result<PathBuf> {
    let ds = open_dataset(manifest)?;
    let params = open_checkpoint(checkpoint, &ds)?;
    let st = ds.stacked();
    let layers = match &params {
        Some(p) => layer_outputs(&st.features, p)?,
        None => vec![("input".to_string(), st.features.clone())],
    };
    #[derive(Serialize)]
    struct Layer {
        layer: String,
        accuracy: f64,
    }
    let mut result = Vec::new();
    for (layer, m) in layers {
        let accuracy = speaker_probe(&m, &st.speakers, seed).map_err(at("eval"))?;
        result.push(Layer { layer, accuracy });
    }
    let rows: Vec<String> = result.iter().map(|l| format!("{},{}", l.layer, l.accuracy)).collect();
    write_table("eval", out, "probe", "layer,accuracy", &rows, to_json(&result))
}
