//! Content-preserving speaker perturbation: formant scaling, F0 scaling and
//! a random equalizer on audio, plus an exact re-rendering counterpart for
//! feature-level synthetic corpora.

mod eq;
mod vocoder;

pub use eq::Biquad;
pub use vocoder::{FFT_SIZE, HOP, LIFTER, WINDOW};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{SyntheticFeatures, SyntheticRenderer, Voice, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const MAX_RATIO: f64 = 2.0;
pub const MAX_EQ_GAIN_DB: f64 = 12.0;
pub const LOW_SHELF_HZ: f64 = 100.0;
pub const HIGH_SHELF_HZ: f64 = 6000.0;
const EQ_LO_HZ: f64 = 150.0;
const EQ_HI_HZ: f64 = 6000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    /// Formant ratio drawn from `U(1, formant_hi)`.
    pub formant_hi: f64,
    /// F0 ratio drawn from `U(1, f0_hi)`.
    pub f0_hi: f64,
    /// Probability of replacing a drawn ratio `x` with `1/x`.
    pub invert_prob: f64,
    pub n_eq_peaks: usize,
    /// Peak and shelf gains are drawn from `U(-eq_gain_db, eq_gain_db)`.
    pub eq_gain_db: f64,
    pub eq_q_range: (f64, f64),
    /// Apply the equalizer as a log-gain curve on synthetic feature frames.
    pub feature_eq: bool,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            formant_hi: 1.4,
            f0_hi: 2.0,
            invert_prob: 0.5,
            n_eq_peaks: 8,
            eq_gain_db: 12.0,
            eq_q_range: (0.7, 2.0),
            feature_eq: true,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, hi) in [("formant_hi", self.formant_hi), ("f0_hi", self.f0_hi)] {
            if !(1.0..=MAX_RATIO).contains(&hi) {
                return Err(Error::spec(field, format!("must lie in [1, {MAX_RATIO}], got {hi}")));
            }
        }
        if !(0.0..=1.0).contains(&self.invert_prob) {
            return Err(Error::spec("invert_prob", "must lie in [0, 1]"));
        }
        if !(0.0..=MAX_EQ_GAIN_DB).contains(&self.eq_gain_db) {
            return Err(Error::spec("eq_gain_db", format!("must lie in [0, {MAX_EQ_GAIN_DB}]")));
        }
        let (qlo, qhi) = self.eq_q_range;
        if !(qlo > 0.0 && qlo <= qhi && qhi.is_finite()) {
            return Err(Error::spec("eq_q_range", "need 0 < lo <= hi"));
        }
        Ok(())
    }

    /// The configuration that leaves every input unchanged.
    pub fn identity() -> Self {
        Self {
            formant_hi: 1.0,
            f0_hi: 1.0,
            invert_prob: 0.0,
            n_eq_peaks: 0,
            eq_gain_db: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqPeak {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub gain_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqParams {
    pub peaks: Vec<EqPeak>,
    pub low_shelf_db: f64,
    pub high_shelf_db: f64,
}

impl EqParams {
    pub fn flat() -> Self {
        Self {
            peaks: Vec::new(),
            low_shelf_db: 0.0,
            high_shelf_db: 0.0,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.low_shelf_db == 0.0 && self.high_shelf_db == 0.0 && self.peaks.iter().all(|p| p.gain_db == 0.0)
    }

    pub fn sections(&self, fs: f64) -> Vec<Biquad> {
        let mut s: Vec<Biquad> = self
            .peaks
            .iter()
            .map(|p| Biquad::peaking(p.center_hz, p.center_hz / p.bandwidth_hz, p.gain_db, fs))
            .collect();
        s.push(Biquad::low_shelf(LOW_SHELF_HZ, self.low_shelf_db, fs));
        s.push(Biquad::high_shelf(HIGH_SHELF_HZ, self.high_shelf_db, fs));
        s
    }

    /// Natural-log amplitude gain of the whole cascade at `f` Hz.
    pub fn log_gain(&self, f: f64) -> f64 {
        let fs = SAMPLE_RATE as f64;
        self.sections(fs).iter().map(|b| b.magnitude(f, fs).ln()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbParams {
    pub formant_ratio: f64,
    pub f0_ratio: f64,
    pub eq: EqParams,
}

impl PerturbParams {
    pub fn identity() -> Self {
        Self {
            formant_ratio: 1.0,
            f0_ratio: 1.0,
            eq: EqParams::flat(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, r) in [("formant_ratio", self.formant_ratio), ("f0_ratio", self.f0_ratio)] {
            if !(1.0 / MAX_RATIO..=MAX_RATIO).contains(&r) {
                return Err(Error::spec(field, format!("must lie in [0.5, 2], got {r}")));
            }
        }
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        let mut prev = 0.0;
        for p in &self.eq.peaks {
            if !(p.center_hz > prev && p.center_hz < nyquist) {
                return Err(Error::spec("eq", "centre frequencies must increase strictly within (0, 8000) Hz"));
            }
            if !(p.bandwidth_hz > 0.0) {
                return Err(Error::spec("eq", "bandwidth must be positive"));
            }
            prev = p.center_hz;
        }
        let gains = self.eq.peaks.iter().map(|p| p.gain_db).chain([self.eq.low_shelf_db, self.eq.high_shelf_db]);
        for g in gains {
            if !(g.abs() <= MAX_EQ_GAIN_DB) {
                return Err(Error::spec("eq", format!("|gain| must be <= {MAX_EQ_GAIN_DB} dB, got {g}")));
            }
        }
        Ok(())
    }
}

fn draw_ratio<R: Rng + ?Sized>(hi: f64, invert_prob: f64, rng: &mut R) -> f64 {
    let x = if hi > 1.0 { rng.random_range(1.0..hi) } else { 1.0 };
    if rng.random::<f64>() < invert_prob {
        1.0 / x
    } else {
        x
    }
}

/// Draws one perturbation. Peak `i` has its centre log-uniform within the
/// `i`-th of `n_eq_peaks` log-spaced bands over 150–6000 Hz, so centres
/// are strictly increasing; Q and gains are uniform in their ranges.
pub fn sample_perturb_params<R: Rng + ?Sized>(config: &PerturbConfig, rng: &mut R) -> PerturbParams {
    let formant_ratio = draw_ratio(config.formant_hi, config.invert_prob, rng);
    let f0_ratio = draw_ratio(config.f0_hi, config.invert_prob, rng);
    let g = config.eq_gain_db;
    let gain = |rng: &mut R| if g > 0.0 { rng.random_range(-g..=g) } else { 0.0 };
    let n = config.n_eq_peaks;
    let (lo, hi) = (EQ_LO_HZ.ln(), EQ_HI_HZ.ln());
    let (qlo, qhi) = config.eq_q_range;
    let peaks = (0..n)
        .map(|i| {
            let u: f64 = rng.random_range(0.05..0.95);
            let center_hz = (lo + (hi - lo) * (i as f64 + u) / n as f64).exp();
            let q = if qhi > qlo { rng.random_range(qlo..qhi) } else { qlo };
            EqPeak {
                center_hz,
                bandwidth_hz: center_hz / q,
                gain_db: gain(rng),
            }
        })
        .collect();
    let low_shelf_db = gain(rng);
    let high_shelf_db = gain(rng);
    PerturbParams {
        formant_ratio,
        f0_ratio,
        eq: EqParams {
            peaks,
            low_shelf_db,
            high_shelf_db,
        },
    }
}

/// Perturbs a 16 kHz mono waveform. The output has exactly as many samples
/// as the input, so frame labels stay aligned.
pub fn perturb_waveform(wave: &[f64], sample_rate: u32, params: &PerturbParams) -> Result<Vec<f64>> {
    if sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedAudio(format!("{sample_rate} Hz input; need {SAMPLE_RATE} Hz")));
    }
    if wave.is_empty() {
        return Err(Error::WaveformTooShort { samples: 0, window: 1 });
    }
    params.validate()?;
    let mut out = vocoder::warp_and_shift(wave, params.formant_ratio, params.f0_ratio);
    if !params.eq.is_flat() {
        for s in params.eq.sections(SAMPLE_RATE as f64) {
            s.filter(&mut out);
        }
    }
    Ok(out)
}

/// Re-renders synthetic feature frames under another voice: same phone
/// sequence and labels, fresh noise.
pub fn perturb_synthetic(
    features: &SyntheticFeatures,
    renderer: &SyntheticRenderer,
    voice_in: Voice,
    voice_out: Voice,
    noise_seed: u64,
) -> Result<SyntheticFeatures> {
    if features.fingerprint != renderer.fingerprint() {
        return Err(Error::NotSynthetic("features come from a different synthetic corpus".into()));
    }
    if features.voice != voice_in {
        return Err(Error::NotSynthetic(format!(
            "features were rendered with voice {:?}, not {:?}",
            features.voice, voice_in
        )));
    }
    renderer.render_features(&features.labels, voice_out, noise_seed)
}
