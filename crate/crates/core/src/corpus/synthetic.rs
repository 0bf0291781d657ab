//! Synthetic two-factor corpora: every frame is a phone (content) rendered
//! in a voice (speaker). A voice is exactly a formant scale and an F0 scale,
//! so speaker and content factors are known for every frame.
//!
//! Phones are three-formant log-spectral envelopes. Scaling the formants by
//! a voice's formant ratio shifts the whole envelope along log frequency,
//! which leaves the ratios between formants (the content cue) intact.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::{mel_band_centers, FeatureConfig};
use super::manifest::{CorpusManifest, ManifestHeader, Source, SyntheticHeader, Utterance};
use super::{FRAME_RATE, SAMPLES_PER_FRAME, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::numeric::{mix_seed, seeded_rng};
use crate::FrameMatrix;

/// F0 of a voice with `f0_scale = 1`.
pub const BASE_F0_HZ: f64 = 120.0;
const FORMANT_WIDTH: f64 = 0.12;
const PITCH_WIDTH: f64 = 0.25;
const AUDIO_GAIN: f64 = 0.004;
const AUDIO_NOISE_GAIN: f64 = 0.01;
const CROSSFADE_SAMPLES: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Voice {
    pub formant_scale: f64,
    pub f0_scale: f64,
}

impl Voice {
    pub const NEUTRAL: Voice = Voice {
        formant_scale: 1.0,
        f0_scale: 1.0,
    };

    pub fn f0_hz(&self) -> f64 {
        BASE_F0_HZ * self.f0_scale
    }

    /// This voice after an additional formant and F0 scaling.
    pub fn scaled(&self, formant_ratio: f64, f0_ratio: f64) -> Voice {
        Voice {
            formant_scale: self.formant_scale * formant_ratio,
            f0_scale: self.f0_scale * f0_ratio,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticMode {
    FeatureLevel,
    AudioLevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_phones: usize,
    pub n_speakers: usize,
    /// Zipf exponent of the phone distribution (0 = uniform).
    pub phone_frequency_skew: f64,
    pub frames_per_phone: (usize, usize),
    pub feature_dim: usize,
    pub speaker_formant_scale_range: (f64, f64),
    pub speaker_f0_scale_range: (f64, f64),
    pub noise_std: f64,
    pub mode: SyntheticMode,
    pub seed: u64,
    pub utterances_per_speaker: usize,
    pub phones_per_utterance: (usize, usize),
    /// Scale of the formant envelope in feature-level frames.
    pub formant_gain: f64,
    /// Height of the F0 bump in feature-level frames.
    pub pitch_gain: f64,
    /// Minimum distance between phones in log formant-ratio space.
    pub phone_separation: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_phones: 20,
            n_speakers: 16,
            phone_frequency_skew: 1.0,
            frames_per_phone: (3, 8),
            feature_dim: 40,
            speaker_formant_scale_range: (1.0 / 1.5, 1.5),
            speaker_f0_scale_range: (1.0 / 1.6, 1.6),
            noise_std: 0.2,
            mode: SyntheticMode::FeatureLevel,
            seed: 0,
            utterances_per_speaker: 8,
            phones_per_utterance: (20, 40),
            formant_gain: 2.5,
            pitch_gain: 2.0,
            phone_separation: 0.15,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_phones < 2 {
            return Err(Error::spec("n_phones", "need at least 2 phones"));
        }
        if self.n_speakers < 1 {
            return Err(Error::spec("n_speakers", "need at least 1 speaker"));
        }
        if !(self.phone_frequency_skew >= 0.0) || !self.phone_frequency_skew.is_finite() {
            return Err(Error::spec("phone_frequency_skew", "must be a finite value >= 0"));
        }
        check_count_range("frames_per_phone", self.frames_per_phone)?;
        check_count_range("phones_per_utterance", self.phones_per_utterance)?;
        if self.feature_dim == 0 {
            return Err(Error::spec("feature_dim", "must be positive"));
        }
        check_ratio_range("speaker_formant_scale_range", self.speaker_formant_scale_range)?;
        check_ratio_range("speaker_f0_scale_range", self.speaker_f0_scale_range)?;
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::spec("noise_std", "must be a finite value >= 0"));
        }
        for (field, v) in [
            ("formant_gain", self.formant_gain),
            ("pitch_gain", self.pitch_gain),
            ("phone_separation", self.phone_separation),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::spec(field, "must be a finite value >= 0"));
            }
        }
        if self.utterances_per_speaker == 0 {
            return Err(Error::spec("utterances_per_speaker", "must be positive"));
        }
        Ok(())
    }

    /// Zipf draw probabilities; phone 0 is the most frequent.
    pub fn phone_probabilities(&self) -> Vec<f64> {
        let w: Vec<f64> = (1..=self.n_phones)
            .map(|r| (r as f64).powf(-self.phone_frequency_skew))
            .collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    fn fingerprint(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        let words: Vec<u64> = bytes.chunks(8).map(|c| {
            let mut b = [0u8; 8];
            b[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(b)
        }).collect();
        mix_seed(&words)
    }
}

fn check_count_range(field: &'static str, (lo, hi): (usize, usize)) -> Result<()> {
    if lo == 0 || lo > hi {
        return Err(Error::spec(field, format!("need 1 <= min <= max, got ({lo}, {hi})")));
    }
    Ok(())
}

fn check_ratio_range(field: &'static str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0) || !(lo <= hi) || !hi.is_finite() {
        return Err(Error::spec(field, format!("need 0 < lo <= hi, got ({lo}, {hi})")));
    }
    Ok(())
}

/// Formant frequencies (Hz) and log-amplitudes of one phone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhoneShape {
    pub formants_hz: [f64; 3],
    pub amplitudes: [f64; 3],
}

impl PhoneShape {
    /// Log-amplitude envelope at `f` Hz under `voice`.
    pub fn log_envelope(&self, f: f64, voice: Voice) -> f64 {
        let lf = f.max(1.0).ln();
        let shift = voice.formant_scale.ln();
        self.formants_hz
            .iter()
            .zip(self.amplitudes.iter())
            .map(|(&fm, &a)| {
                let d = lf - (fm.ln() + shift);
                a * (-d * d / (2.0 * FORMANT_WIDTH * FORMANT_WIDTH)).exp()
            })
            .sum()
    }

    fn ratio_coords(&self) -> [f64; 2] {
        let [f1, f2, f3] = self.formants_hz;
        [(f2 / f1).ln(), (f3 / f2).ln()]
    }
}

/// Rejection-samples `n` phones at least `min_sep` apart in ratio space,
/// relaxing the distance if the space runs out.
fn sample_inventory(n: usize, mut min_sep: f64, seed: u64) -> Vec<PhoneShape> {
    let mut rng = seeded_rng(seed, 0x70686f6e);
    let mut phones: Vec<PhoneShape> = Vec::with_capacity(n);
    let mut attempts = 0;
    while phones.len() < n {
        let f1 = rng.random_range(250.0..900.0);
        let f2 = rng.random_range((f1 + 250.0f64).max(800.0)..2600.0);
        let f3 = rng.random_range((f2 + 300.0f64).max(2200.0)..3800.0);
        let cand = PhoneShape {
            formants_hz: [f1, f2, f3],
            amplitudes: [
                rng.random_range(1.2..2.0),
                rng.random_range(0.9..1.6),
                rng.random_range(0.6..1.2),
            ],
        };
        let c = cand.ratio_coords();
        let ok = phones.iter().all(|p| {
            let q = p.ratio_coords();
            ((c[0] - q[0]).powi(2) + (c[1] - q[1]).powi(2)).sqrt() >= min_sep
        });
        if ok {
            phones.push(cand);
            attempts = 0;
        } else {
            attempts += 1;
            if attempts > 2000 {
                min_sep *= 0.8;
                attempts = 0;
            }
        }
    }
    phones
}

/// Latin-hypercube voices: each range is split into `n` strata and every
/// stratum holds exactly one speaker, per factor.
fn sample_voices(spec: &SyntheticSpec) -> Vec<Voice> {
    let n = spec.n_speakers;
    let mut rng = seeded_rng(spec.seed, 0x766f6963);
    let strata = |(lo, hi): (f64, f64), rng: &mut rand_chacha::ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        idx.into_iter()
            .map(|i| {
                let u: f64 = rng.random();
                // log-uniform within the range
                let (a, b) = (lo.ln(), hi.ln());
                (a + (b - a) * (i as f64 + u) / n as f64).exp()
            })
            .collect::<Vec<f64>>()
    };
    let formant = strata(spec.speaker_formant_scale_range, &mut rng);
    let f0 = strata(spec.speaker_f0_scale_range, &mut rng);
    formant
        .into_iter()
        .zip(f0)
        .map(|(formant_scale, f0_scale)| Voice {
            formant_scale,
            f0_scale,
        })
        .collect()
}

/// Renders phone sequences in a given voice, as feature frames or audio.
#[derive(Clone, Debug)]
pub struct SyntheticRenderer {
    spec: SyntheticSpec,
    phones: Vec<PhoneShape>,
    bin_hz: Vec<f64>,
    fingerprint: u64,
}

/// Feature frames with the provenance needed to re-render them.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFeatures {
    pub frames: FrameMatrix,
    pub labels: Vec<usize>,
    pub voice: Voice,
    pub fingerprint: u64,
}

impl SyntheticRenderer {
    pub fn new(spec: &SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let bins = FeatureConfig {
            n_mels: spec.feature_dim,
            f_min: 60.0,
            f_max: 7600.0,
            ..FeatureConfig::default()
        };
        Ok(Self {
            spec: spec.clone(),
            phones: sample_inventory(spec.n_phones, spec.phone_separation, spec.seed),
            bin_hz: mel_band_centers(&bins),
            fingerprint: spec.fingerprint(),
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn phones(&self) -> &[PhoneShape] {
        &self.phones
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Centre frequency in Hz of every feature dimension.
    pub fn bin_hz(&self) -> &[f64] {
        &self.bin_hz
    }

    /// Noise-free feature frame of `phone` in `voice`.
    pub fn clean_frame(&self, phone: usize, voice: Voice) -> Array1<f64> {
        let shape = &self.phones[phone];
        let lf0 = voice.f0_hz().ln();
        self.bin_hz
            .iter()
            .map(|&f| {
                let d = f.ln() - lf0;
                self.spec.formant_gain * shape.log_envelope(f, voice)
                    + self.spec.pitch_gain * (-d * d / (2.0 * PITCH_WIDTH * PITCH_WIDTH)).exp()
            })
            .collect()
    }

    pub fn render_features(&self, labels: &[usize], voice: Voice, noise_seed: u64) -> Result<SyntheticFeatures> {
        self.check_labels(labels)?;
        let dim = self.spec.feature_dim;
        let templates: Vec<Array1<f64>> = (0..self.phones.len())
            .map(|p| self.clean_frame(p, voice))
            .collect();
        let mut frames = Array2::zeros((labels.len(), dim));
        let noise = Normal::new(0.0, self.spec.noise_std.max(f64::MIN_POSITIVE))
            .expect("valid std");
        let mut rng = seeded_rng(noise_seed, 0x6e6f6973);
        for (t, &p) in labels.iter().enumerate() {
            let mut row = frames.row_mut(t);
            row.assign(&templates[p]);
            if self.spec.noise_std > 0.0 {
                row.mapv_inplace(|v| v + noise.sample(&mut rng));
            }
        }
        Ok(SyntheticFeatures {
            frames,
            labels: labels.to_vec(),
            voice,
            fingerprint: self.fingerprint,
        })
    }

    /// Additive harmonic synthesis at 16 kHz: harmonics of the voice's F0
    /// weighted by the phone envelope, with short cross-fades between
    /// phones. `SAMPLES_PER_FRAME` samples per label.
    pub fn render_audio(&self, labels: &[usize], voice: Voice, noise_seed: u64) -> Result<Vec<f64>> {
        self.check_labels(labels)?;
        let f0 = voice.f0_hz();
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        let n_harm = ((nyquist - 200.0) / f0).floor().max(1.0) as usize;
        let amps: Vec<Vec<f64>> = self
            .phones
            .iter()
            .map(|ph| {
                (1..=n_harm)
                    .map(|h| AUDIO_GAIN * ph.log_envelope(h as f64 * f0, voice).exp())
                    .collect()
            })
            .collect();
        let n = labels.len() * SAMPLES_PER_FRAME;
        let mut out = vec![0.0; n];
        let mut rng = seeded_rng(noise_seed, 0x61756469);
        let phase0: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let noise = Normal::new(0.0, (self.spec.noise_std * AUDIO_NOISE_GAIN).max(f64::MIN_POSITIVE))
            .expect("valid std");
        let w = 2.0 * PI * f0 / SAMPLE_RATE as f64;
        for (i, s) in out.iter_mut().enumerate() {
            let frame = i / SAMPLES_PER_FRAME;
            let cur = labels[frame];
            // Cross-fade from the previous phone at the start of a new one.
            let offset = i % SAMPLES_PER_FRAME;
            let prev = if frame > 0 && labels[frame - 1] != cur && offset < CROSSFADE_SAMPLES {
                Some((labels[frame - 1], offset as f64 / CROSSFADE_SAMPLES as f64))
            } else {
                None
            };
            let mut acc = 0.0;
            for h in 0..n_harm {
                let a = match prev {
                    Some((p, t)) => amps[p][h] * (1.0 - t) + amps[cur][h] * t,
                    None => amps[cur][h],
                };
                acc += a * (w * (h + 1) as f64 * i as f64 + phase0[h]).sin();
            }
            if self.spec.noise_std > 0.0 {
                acc += noise.sample(&mut rng);
            }
            *s = acc;
        }
        Ok(out)
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        if let Some(&bad) = labels.iter().find(|&&p| p >= self.phones.len()) {
            return Err(Error::IdOutOfRange {
                id: bad,
                bound: self.phones.len(),
            });
        }
        Ok(())
    }
}

/// Builds a deterministic synthetic corpus manifest. Utterance sources are
/// synthetic descriptors (a noise seed); features or audio are rendered on
/// demand from the header, which records the spec and every voice.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<CorpusManifest> {
    spec.validate()?;
    let voices = sample_voices(spec);
    let probs = spec.phone_probabilities();
    let cdf: Vec<f64> = probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut rng = seeded_rng(spec.seed, 0x75747473);
    let mut utterances = Vec::with_capacity(spec.n_speakers * spec.utterances_per_speaker);
    for s in 0..spec.n_speakers {
        for u in 0..spec.utterances_per_speaker {
            let n_seg = rng.random_range(spec.phones_per_utterance.0..=spec.phones_per_utterance.1);
            let mut labels = Vec::new();
            for _ in 0..n_seg {
                let x: f64 = rng.random();
                let phone = cdf.iter().position(|&c| x < c).unwrap_or(spec.n_phones - 1);
                let len = rng.random_range(spec.frames_per_phone.0..=spec.frames_per_phone.1);
                labels.extend(std::iter::repeat_n(phone, len));
            }
            let idx = utterances.len() as u64;
            utterances.push(Utterance {
                utterance_id: format!("spk{s:02}_utt{u:03}"),
                speaker_id: speaker_name(s),
                duration_s: labels.len() as f64 / FRAME_RATE,
                frame_labels: labels,
                source: Source::Synthetic {
                    noise_seed: mix_seed(&[spec.seed, idx]),
                },
            });
        }
    }
    let header = ManifestHeader {
        frame_rate: FRAME_RATE,
        phones: (0..spec.n_phones).map(|p| format!("ph{p:02}")).collect(),
        speakers: (0..spec.n_speakers).map(speaker_name).collect(),
        synthetic: Some(SyntheticHeader {
            spec: spec.clone(),
            voices,
        }),
    };
    CorpusManifest::new(header, utterances)
}

fn speaker_name(s: usize) -> String {
    format!("spk{s:02}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_phones: 6,
            n_speakers: 3,
            utterances_per_speaker: 2,
            phones_per_utterance: (5, 8),
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn zipf_probabilities_sum_to_one_and_decrease() {
        let p = SyntheticSpec::default().phone_probabilities();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.windows(2).all(|w| w[0] > w[1]));
        let flat = SyntheticSpec {
            phone_frequency_skew: 0.0,
            ..SyntheticSpec::default()
        }
        .phone_probabilities();
        assert!(flat.iter().all(|&x| (x - 0.05).abs() < 1e-15));
    }

    #[test]
    fn validation_names_the_offending_field() {
        let cases: Vec<(SyntheticSpec, &str)> = vec![
            (SyntheticSpec { n_phones: 1, ..small_spec() }, "n_phones"),
            (SyntheticSpec { noise_std: -1.0, ..small_spec() }, "noise_std"),
            (SyntheticSpec { frames_per_phone: (5, 2), ..small_spec() }, "frames_per_phone"),
            (
                SyntheticSpec { speaker_f0_scale_range: (1.2, 1.1), ..small_spec() },
                "speaker_f0_scale_range",
            ),
        ];
        for (spec, field) in cases {
            match generate_synthetic_corpus(&spec) {
                Err(Error::InvalidSpec { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected error on {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn voices_cover_every_stratum() {
        let spec = SyntheticSpec::default();
        let voices = sample_voices(&spec);
        let (lo, hi) = spec.speaker_formant_scale_range;
        let mut strata: Vec<usize> = voices
            .iter()
            .map(|v| ((v.formant_scale.ln() - lo.ln()) / (hi.ln() - lo.ln()) * 16.0) as usize)
            .collect();
        strata.sort();
        assert_eq!(strata, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn formant_scaling_preserves_formant_ratios() {
        let r = SyntheticRenderer::new(&small_spec()).unwrap();
        let ph = r.phones()[0];
        let v = Voice { formant_scale: 1.2, f0_scale: 1.0 };
        // The envelope under a scaled voice is the unscaled envelope read at f / scale.
        for f in [300.0, 1000.0, 2500.0] {
            let a = ph.log_envelope(f, v);
            let b = ph.log_envelope(f / 1.2, Voice::NEUTRAL);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn phone_inventory_is_separated() {
        let r = SyntheticRenderer::new(&SyntheticSpec::default()).unwrap();
        let coords: Vec<[f64; 2]> = r.phones().iter().map(PhoneShape::ratio_coords).collect();
        for i in 0..coords.len() {
            for j in 0..i {
                let d = ((coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2)).sqrt();
                assert!(d > 0.05, "phones {i} and {j} too close: {d}");
            }
        }
    }

    #[test]
    fn audio_has_one_hop_of_samples_per_label() {
        let spec = SyntheticSpec {
            mode: SyntheticMode::AudioLevel,
            ..small_spec()
        };
        let r = SyntheticRenderer::new(&spec).unwrap();
        let a = r.render_audio(&[0, 0, 1, 2, 2], Voice::NEUTRAL, 1).unwrap();
        assert_eq!(a.len(), 5 * SAMPLES_PER_FRAME);
        assert!(a.iter().all(|v| v.abs() < 1.0));
        assert!(r.render_audio(&[9], Voice::NEUTRAL, 1).is_err());
    }
}
