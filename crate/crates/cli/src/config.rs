//! Experiment configuration: one TOML file per run.
//!
//! ```toml
//! name = "desk"
//!
//! [corpus]
//! kind = "synthetic"        # or kind = "manifest", path = "corpus/manifest.json"
//! n_phones = 20
//! n_speakers = 16
//!
//! [perturb]
//! f0_hi = 2.0
//!
//! [train]
//! k = 64
//! total_steps = 1000
//!
//! [train.model]
//! input_dim = 40
//! hidden_dim = 128
//! n_frozen = 1
//! n_trainable = 2
//!
//! [eval]
//! abx_per_pair = 10
//!
//! [sweep]                   # optional: one sub-run per (k, seed)
//! k = [16, 64, 256]
//! seeds = [0, 1, 2]
//! ```
//!
//! Relative paths resolve against the config file's directory. Without an
//! explicit `output_dir` a run lands in `$SPIN_OUTPUT_ROOT/<name>`, with
//! `runs` as the default root.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spin_core::corpus::{FeatureConfig, SyntheticMode, SyntheticSpec};
use spin_core::perturb::PerturbConfig;
use spin_core::training::TrainConfig;

use crate::error::{invalid, CliError, Result};

pub const OUTPUT_ROOT_ENV: &str = "SPIN_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorpusSection {
    Synthetic(SyntheticSpec),
    Manifest { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Purity and PNMI of the codebook units, before and after training.
    pub units: bool,
    /// K-means with the same K on the raw input features.
    pub kmeans_baseline: bool,
    pub kmeans_runs: usize,
    pub abx: bool,
    /// Sampled triples per (phone pair, regime).
    pub abx_per_pair: usize,
    /// Speaker probe on every layer, before and after training.
    pub probe: bool,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            units: true,
            kmeans_baseline: true,
            kmeans_runs: 3,
            abx: true,
            abx_per_pair: 10,
            probe: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub k: Vec<usize>,
    /// Training seeds; empty means the single `train.seed`.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub perturb: PerturbConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn default_name() -> String {
    "run".into()
}

/// One training run inside an experiment. `label` is empty for a plain run
/// and names the subdirectory of a sweep member.
#[derive(Clone, Debug, PartialEq)]
pub struct SubRun {
    pub label: String,
    pub config: RunConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Parses and validates; relative paths are anchored at `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        if let CorpusSection::Manifest { path } = &mut cfg.corpus {
            let joined = base_dir.join(&*path);
            // Absolute, so the copy stored in a run directory still resolves.
            *path = std::fs::canonicalize(&joined).unwrap_or(joined);
        }
        if let Some(dir) = &mut cfg.output_dir {
            if dir.is_relative() {
                *dir = base_dir.join(&*dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// The copy kept inside a run directory: everything that determines the
    /// numbers, nothing about where they were written.
    pub fn run_copy(&self) -> String {
        Self {
            output_dir: None,
            ..self.clone()
        }
        .to_toml()
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::config(format!("name {:?} is not a plain directory name", self.name)));
        }
        match &self.corpus {
            CorpusSection::Synthetic(spec) => {
                spec.validate().map_err(invalid("corpus"))?;
                let dim = match spec.mode {
                    SyntheticMode::FeatureLevel => spec.feature_dim,
                    SyntheticMode::AudioLevel => self.features.n_mels,
                };
                self.check_input_dim(dim)?;
            }
            CorpusSection::Manifest { path } => {
                if !path.is_file() {
                    return Err(CliError::config(format!("[corpus] manifest {} does not exist", path.display())));
                }
            }
        }
        self.features.validate().map_err(invalid("features"))?;
        self.perturb.validate().map_err(invalid("perturb"))?;
        self.train.validate().map_err(invalid("train"))?;
        if self.eval.kmeans_baseline && self.eval.kmeans_runs == 0 {
            return Err(CliError::config("[eval] kmeans_runs must be positive"));
        }
        if self.eval.abx && self.eval.abx_per_pair == 0 {
            return Err(CliError::config("[eval] abx_per_pair must be positive"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.k.is_empty() {
                return Err(CliError::config("[sweep] k must list at least one codebook size"));
            }
            if sweep.k.contains(&0) {
                return Err(CliError::config("[sweep] k entries must be positive"));
            }
            if sweep.k.iter().collect::<HashSet<_>>().len() != sweep.k.len() {
                return Err(CliError::config("[sweep] k has duplicates"));
            }
            if sweep.seeds.iter().collect::<HashSet<_>>().len() != sweep.seeds.len() {
                return Err(CliError::config("[sweep] seeds has duplicates"));
            }
        }
        Ok(())
    }

    /// The encoder must read exactly the features the corpus produces.
    pub fn check_input_dim(&self, corpus_dim: usize) -> Result<()> {
        if corpus_dim != self.train.model.input_dim {
            return Err(CliError::config(format!(
                "[train.model] input_dim is {} but the corpus yields {corpus_dim}-dimensional frames",
                self.train.model.input_dim
            )));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.output_dir {
            Some(dir) => dir.clone(),
            None => {
                let root = std::env::var_os(OUTPUT_ROOT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
                root.join(&self.name)
            }
        }
    }

    pub fn is_sweep(&self) -> bool {
        self.sweep.is_some()
    }

    /// Expands a sweep into one config per (K, seed). Each member is a
    /// plain run whose config alone reproduces it.
    pub fn sub_runs(&self) -> Vec<SubRun> {
        let Some(sweep) = &self.sweep else {
            return vec![SubRun {
                label: String::new(),
                config: self.clone(),
            }];
        };
        let seeds = if sweep.seeds.is_empty() {
            vec![self.train.seed]
        } else {
            sweep.seeds.clone()
        };
        let mut out = Vec::new();
        for &k in &sweep.k {
            for &seed in &seeds {
                let mut config = self.clone();
                config.sweep = None;
                config.output_dir = None;
                config.train.k = k;
                config.train.seed = seed;
                out.push(SubRun {
                    label: format!("k{k:03}_s{seed}"),
                    config,
                });
            }
        }
        out
    }
}
