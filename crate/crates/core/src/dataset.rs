//! Materialized features of a corpus and the perturbed views drawn from it.
//!
//! Synthetic feature-level corpora are re-rendered in a scaled voice, which
//! is the exact counterpart of formant and F0 scaling; audio-backed corpora
//! (synthetic audio-level or WAV) go through the signal-processing
//! perturbation and feature extraction. Corpora that only carry stored
//! features cannot be perturbed.

use ndarray::{concatenate, Array2, Axis};
use rand::Rng;

use crate::corpus::{
    extract_features, read_feature_dump, read_wav, BatchPlan, CorpusManifest, FeatureConfig,
    FrameBatchPair, Source, SyntheticMode, SyntheticRenderer, Voice, SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::numeric::seeded_rng;
use crate::perturb::{perturb_waveform, sample_perturb_params, PerturbConfig, PerturbParams};
use crate::FrameMatrix;

#[derive(Clone, Debug)]
enum Backing {
    SyntheticFeatures {
        renderer: SyntheticRenderer,
        voices: Vec<Voice>,
    },
    Audio {
        waves: Vec<Vec<f64>>,
        features: FeatureConfig,
    },
    Stored,
}

/// A corpus with every utterance's original features in memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    manifest: CorpusManifest,
    backing: Backing,
    originals: Vec<FrameMatrix>,
    speakers: Vec<usize>,
}

/// Every frame of a corpus stacked in utterance order.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedFrames {
    pub features: FrameMatrix,
    pub labels: Vec<usize>,
    pub speakers: Vec<usize>,
    /// Row offset of each utterance; the last entry is the frame count.
    pub offsets: Vec<usize>,
}

/// Perturbation and re-rendering noise seed of utterance `i`, drawn from
/// stream `(seed, i)`.
pub fn perturbation_draw(config: &PerturbConfig, seed: u64, i: usize) -> (PerturbParams, u64) {
    let mut rng = seeded_rng(seed, i as u64);
    let params = sample_perturb_params(config, &mut rng);
    (params, rng.random())
}

impl Dataset {
    pub fn new(manifest: CorpusManifest, features: &FeatureConfig) -> Result<Self> {
        manifest.validate()?;
        features.validate()?;
        let speakers = manifest.speaker_indices();
        let (backing, originals) = match &manifest.header.synthetic {
            Some(h) if h.spec.mode == SyntheticMode::FeatureLevel => {
                let renderer = SyntheticRenderer::new(&h.spec)?;
                let voices = h.voices.clone();
                let originals = manifest
                    .utterances
                    .iter()
                    .zip(&speakers)
                    .map(|(u, &s)| {
                        let seed = synthetic_seed(&u.source, &u.utterance_id)?;
                        Ok(renderer.render_features(&u.frame_labels, voices[s], seed)?.frames)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (Backing::SyntheticFeatures { renderer, voices }, originals)
            }
            Some(h) => {
                let renderer = SyntheticRenderer::new(&h.spec)?;
                let waves = manifest
                    .utterances
                    .iter()
                    .zip(&speakers)
                    .map(|(u, &s)| {
                        let seed = synthetic_seed(&u.source, &u.utterance_id)?;
                        renderer.render_audio(&u.frame_labels, h.voices[s], seed)
                    })
                    .collect::<Result<Vec<_>>>()?;
                audio_backing(&manifest, waves, features)?
            }
            None => {
                let all_wav = manifest.utterances.iter().all(|u| matches!(u.source, Source::Wav { .. }));
                if all_wav {
                    let waves = manifest
                        .utterances
                        .iter()
                        .map(|u| match &u.source {
                            Source::Wav { path } => read_wav(manifest.resolve(path)),
                            _ => unreachable!(),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    audio_backing(&manifest, waves, features)?
                } else {
                    let originals = manifest
                        .utterances
                        .iter()
                        .map(|u| stored_features(&manifest, u))
                        .collect::<Result<Vec<_>>>()?;
                    (Backing::Stored, originals)
                }
            }
        };
        let dim = originals[0].ncols();
        for (u, m) in manifest.utterances.iter().zip(&originals) {
            if m.nrows() != u.frame_labels.len() {
                return Err(Error::LabelMismatch {
                    utterance: u.utterance_id.clone(),
                    expected: m.nrows(),
                    found: u.frame_labels.len(),
                });
            }
            if m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    context: "feature width",
                    expected: dim,
                    found: m.ncols(),
                });
            }
        }
        Ok(Self {
            manifest,
            backing,
            originals,
            speakers,
        })
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.originals[0].ncols()
    }

    pub fn utterance(&self, i: usize) -> &FrameMatrix {
        &self.originals[i]
    }

    /// Speaker index (header order) of every utterance.
    pub fn speakers(&self) -> &[usize] {
        &self.speakers
    }

    pub fn can_perturb(&self) -> bool {
        !matches!(self.backing, Backing::Stored)
    }

    /// Features of utterance `i` under `params`. `noise_seed` draws the
    /// fresh observation noise of re-rendered synthetic frames.
    pub fn perturbed_utterance(
        &self,
        i: usize,
        params: &PerturbParams,
        noise_seed: u64,
        config: &PerturbConfig,
    ) -> Result<FrameMatrix> {
        params.validate()?;
        match &self.backing {
            Backing::SyntheticFeatures { renderer, voices } => {
                let u = &self.manifest.utterances[i];
                let voice = voices[self.speakers[i]].scaled(params.formant_ratio, params.f0_ratio);
                let mut frames = renderer.render_features(&u.frame_labels, voice, noise_seed)?.frames;
                if config.feature_eq && !params.eq.is_flat() {
                    let gains: Vec<f64> = renderer.bin_hz().iter().map(|&f| params.eq.log_gain(f)).collect();
                    for mut row in frames.rows_mut() {
                        row.iter_mut().zip(&gains).for_each(|(v, g)| *v += g);
                    }
                }
                Ok(frames)
            }
            Backing::Audio { waves, features } => {
                let wave = perturb_waveform(&waves[i], SAMPLE_RATE, params)?;
                extract_features(&wave, features)
            }
            Backing::Stored => Err(Error::NotSynthetic(
                "stored features cannot be perturbed; provide audio or a synthetic manifest".into(),
            )),
        }
    }

    /// Original and perturbed views of a planned batch. Each utterance gets
    /// its own perturbation draw from stream `(seed, utterance index)`.
    pub fn batch_pair(&self, plan: &BatchPlan, config: &PerturbConfig, seed: u64) -> Result<FrameBatchPair> {
        let mut orig = Vec::with_capacity(plan.utterances.len());
        let mut pert = Vec::with_capacity(plan.utterances.len());
        for &u in &plan.utterances {
            let (params, noise_seed) = perturbation_draw(config, seed, u);
            orig.push(self.originals[u].view());
            pert.push(self.perturbed_utterance(u, &params, noise_seed, config)?);
        }
        let pert_views: Vec<_> = pert.iter().map(|m| m.view()).collect();
        FrameBatchPair::new(
            stack(&orig, self.input_dim()),
            stack(&pert_views, self.input_dim()),
            plan.labels.clone(),
            plan.speakers.clone(),
        )
    }

    pub fn stacked(&self) -> StackedFrames {
        let views: Vec<_> = self.originals.iter().map(|m| m.view()).collect();
        self.stack_with(stack(&views, self.input_dim()))
    }

    /// Every utterance perturbed once, with draws from stream `(seed, i)`.
    pub fn stacked_perturbed(&self, config: &PerturbConfig, seed: u64) -> Result<StackedFrames> {
        let mut parts = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let (params, noise_seed) = perturbation_draw(config, seed, i);
            parts.push(self.perturbed_utterance(i, &params, noise_seed, config)?);
        }
        let views: Vec<_> = parts.iter().map(|m| m.view()).collect();
        Ok(self.stack_with(stack(&views, self.input_dim())))
    }

    fn stack_with(&self, features: FrameMatrix) -> StackedFrames {
        let mut offsets = vec![0];
        let mut labels = Vec::with_capacity(features.nrows());
        let mut speakers = Vec::with_capacity(features.nrows());
        for (u, &s) in self.manifest.utterances.iter().zip(&self.speakers) {
            labels.extend_from_slice(&u.frame_labels);
            speakers.extend(std::iter::repeat_n(s, u.frame_labels.len()));
            offsets.push(labels.len());
        }
        StackedFrames {
            features,
            labels,
            speakers,
            offsets,
        }
    }
}

fn stack(parts: &[ndarray::ArrayView2<f64>], dim: usize) -> FrameMatrix {
    if parts.is_empty() {
        return Array2::zeros((0, dim));
    }
    concatenate(Axis(0), parts).expect("equal widths")
}

fn synthetic_seed(source: &Source, id: &str) -> Result<u64> {
    match source {
        Source::Synthetic { noise_seed } => Ok(*noise_seed),
        _ => Err(Error::Manifest(format!(
            "{id}: synthetic corpora need synthetic sources"
        ))),
    }
}

fn audio_backing(
    manifest: &CorpusManifest,
    waves: Vec<Vec<f64>>,
    features: &FeatureConfig,
) -> Result<(Backing, Vec<FrameMatrix>)> {
    let mut originals = Vec::with_capacity(waves.len());
    for (u, w) in manifest.utterances.iter().zip(&waves) {
        let mut m = extract_features(w, features)?;
        // Frame counts can differ from the label track by the rounding of
        // the last partial hop; anything more is a real mismatch.
        let n = u.frame_labels.len();
        if m.nrows() + 1 == n {
            let last = m.row(m.nrows() - 1).to_owned();
            m.push_row(last.view()).expect("same width");
        } else if m.nrows() == n + 1 {
            m = m.slice(ndarray::s![..n, ..]).to_owned();
        }
        originals.push(m);
    }
    Ok((
        Backing::Audio {
            waves,
            features: features.clone(),
        },
        originals,
    ))
}

fn stored_features(manifest: &CorpusManifest, u: &crate::corpus::Utterance) -> Result<FrameMatrix> {
    match &u.source {
        Source::Inline { features } => {
            let rows = features.len();
            let cols = features.first().map_or(0, Vec::len);
            if features.iter().any(|r| r.len() != cols) {
                return Err(Error::Manifest(format!("{}: ragged inline features", u.utterance_id)));
            }
            Ok(Array2::from_shape_vec((rows, cols), features.concat()).expect("shape checked"))
        }
        Source::Features { path } => read_feature_dump(manifest.resolve(path)),
        Source::Wav { .. } => Err(Error::Manifest(format!(
            "{}: corpus mixes WAV and feature sources",
            u.utterance_id
        ))),
        Source::Synthetic { .. } => Err(Error::Manifest(format!(
            "{}: synthetic source without a synthetic header",
            u.utterance_id
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{batch_frames, generate_synthetic_corpus, SyntheticSpec};

    fn small() -> Dataset {
        let spec = SyntheticSpec {
            n_phones: 5,
            n_speakers: 3,
            utterances_per_speaker: 2,
            phones_per_utterance: (4, 6),
            ..SyntheticSpec::default()
        };
        Dataset::new(generate_synthetic_corpus(&spec).unwrap(), &FeatureConfig::default()).unwrap()
    }

    #[test]
    fn batch_pairs_are_aligned_and_reproducible() {
        let d = small();
        let sampler = batch_frames(d.manifest(), 4.0, 0).unwrap();
        let plan = &sampler.epoch(0)[0];
        let cfg = PerturbConfig::default();
        let a = d.batch_pair(plan, &cfg, 11).unwrap();
        let b = d.batch_pair(plan, &cfg, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.original.dim(), a.perturbed.dim());
        assert_eq!(a.labels, plan.labels);
        assert_ne!(a.original, a.perturbed);
    }

    #[test]
    fn identity_perturbation_only_redraws_noise() {
        let d = small();
        let id = PerturbParams::identity();
        let cfg = PerturbConfig::identity();
        let u = &d.manifest().utterances[0];
        let Source::Synthetic { noise_seed } = u.source else { panic!() };
        assert_eq!(&d.perturbed_utterance(0, &id, noise_seed, &cfg).unwrap(), d.utterance(0));
    }

    #[test]
    fn stacked_offsets_cover_every_frame() {
        let d = small();
        let s = d.stacked();
        assert_eq!(*s.offsets.last().unwrap(), s.features.nrows());
        assert_eq!(s.labels.len(), d.manifest().total_frames());
        assert_eq!(s.offsets.len(), d.len() + 1);
    }

    #[test]
    fn stored_features_refuse_perturbation() {
        use crate::corpus::{ManifestHeader, Utterance};
        let header = ManifestHeader {
            frame_rate: 50.0,
            phones: vec!["a".into(), "b".into()],
            speakers: vec!["s".into()],
            synthetic: None,
        };
        let m = CorpusManifest::new(
            header,
            vec![Utterance {
                utterance_id: "u".into(),
                speaker_id: "s".into(),
                source: Source::Inline {
                    features: vec![vec![1.0, 2.0]; 3],
                },
                frame_labels: vec![0, 1, 1],
                duration_s: 0.06,
            }],
        )
        .unwrap();
        let d = Dataset::new(m, &FeatureConfig::default()).unwrap();
        assert!(!d.can_perturb());
        assert!(d
            .perturbed_utterance(0, &PerturbParams::identity(), 0, &PerturbConfig::default())
            .is_err());
    }
}
