//! Log-mel frames at 50 Hz (25 ms Hann window, 20 ms hop) with
//! per-utterance mean/variance normalization.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::SAMPLE_RATE;
use crate::error::{Error, Result};
use crate::FrameMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub n_fft: usize,
    pub window: usize,
    pub hop: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Variance floor in normalization; silent inputs normalize to zeros.
    pub var_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_mels: 40,
            n_fft: 512,
            window: 400,
            hop: 320,
            f_min: 20.0,
            f_max: 8000.0,
            var_floor: 1e-8,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 {
            return Err(Error::spec("n_mels", "must be positive"));
        }
        if self.window == 0 || self.window > self.n_fft {
            return Err(Error::spec("window", format!("must lie in [1, n_fft = {}]", self.n_fft)));
        }
        if self.hop == 0 {
            return Err(Error::spec("hop", "must be positive"));
        }
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        if !(0.0 <= self.f_min && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::spec("f_max", format!("need 0 <= f_min < f_max <= {nyquist} Hz")));
        }
        if !(self.var_floor >= 0.0) {
            return Err(Error::spec("var_floor", "must be non-negative"));
        }
        Ok(())
    }

    /// Frames produced for `samples` input samples: `round(samples / hop)`,
    /// so 1 s of 16 kHz audio yields 50 frames.
    pub fn frame_count(&self, samples: usize) -> usize {
        (samples + self.hop / 2) / self.hop
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequencies (Hz) of the mel bands.
pub fn mel_band_centers(cfg: &FeatureConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    (1..=cfg.n_mels)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Triangular HTK-style filters, `n_mels × (n_fft/2 + 1)`.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Array2<f64> {
    let n_bins = cfg.n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = SAMPLE_RATE as f64 / cfg.n_fft as f64;
    let mut fb = Array2::zeros((cfg.n_mels, n_bins));
    for m in 0..cfg.n_mels {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f < r {
                (r - f) / (r - c)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Log mel energies, one row per 20 ms frame, before normalization.
pub fn log_mel_spectrogram(wave: &[f64], cfg: &FeatureConfig) -> Result<FrameMatrix> {
    if wave.len() < cfg.window {
        return Err(Error::WaveformTooShort {
            samples: wave.len(),
            window: cfg.window,
        });
    }
    let n_frames = cfg.frame_count(wave.len());
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    let win = hann(cfg.window);
    let fb = mel_filterbank(cfg);
    let n_bins = cfg.n_fft / 2 + 1;
    let mut power = Array2::zeros((n_frames, n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    for t in 0..n_frames {
        let start = t * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            let s = if i < cfg.window {
                wave.get(start + i).copied().unwrap_or(0.0) * win[i]
            } else {
                0.0
            };
            *b = Complex::new(s, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            power[[t, k]] = buf[k].norm_sqr();
        }
    }
    let mut mel = power.dot(&fb.t());
    mel.mapv_inplace(|e| (e + 1e-10).ln());
    Ok(mel)
}

/// Per-column mean/variance normalization. Columns whose variance does not
/// exceed `var_floor` become zeros.
pub fn normalize_utterance(frames: &mut FrameMatrix, var_floor: f64) {
    let n = frames.nrows().max(1) as f64;
    let mean = frames.sum_axis(Axis(0)) / n;
    let mut var = frames
        .axis_iter(Axis(0))
        .fold(ndarray::Array1::<f64>::zeros(frames.ncols()), |acc, row| {
            let d = &row - &mean;
            acc + &d * &d
        });
    var /= n;
    // Columns at or below the floor are constant up to rounding; they map
    // to zero rather than to amplified rounding residue.
    let scale = var.mapv(|v| if v <= var_floor { 0.0 } else { 1.0 / v.sqrt() });
    for mut row in frames.axis_iter_mut(Axis(0)) {
        row -= &mean;
        row *= &scale;
    }
}

/// Normalized log-mel features of a 16 kHz mono waveform.
pub fn extract_features(wave: &[f64], cfg: &FeatureConfig) -> Result<FrameMatrix> {
    let mut m = log_mel_spectrogram(wave, cfg)?;
    normalize_utterance(&mut m, cfg.var_floor);
    Ok(m)
}
