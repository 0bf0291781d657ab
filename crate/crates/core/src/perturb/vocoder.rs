//! Short-time source/filter manipulation. Each frame's log magnitude is
//! split into a smooth envelope (cepstral "true envelope") and a residual
//! excitation; the envelope is warped along frequency by the formant ratio
//! and the excitation is moved by the F0 ratio with a phase vocoder.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::corpus::hann;

/// Analysis/synthesis window length (64 ms).
pub const WINDOW: usize = 1024;
/// Zero-padded transform length; the denser bins sample harmonic peaks
/// closely enough for the envelope to land on them.
pub const FFT_SIZE: usize = 4 * WINDOW;
pub const HOP: usize = 256;
/// Minimum cepstral cutoff in samples (1.25 ms at 16 kHz).
pub const LIFTER: usize = 20;
/// Pitch search range of the cepstral voicing detector, in samples.
const MIN_PERIOD: usize = 32;
const MAX_PERIOD: usize = 320;
/// Cepstral peak height above which a frame counts as voiced.
const VOICING_THRESHOLD: f64 = 0.1;
const ENVELOPE_ITERS: usize = 40;
const ENVELOPE_TOL: f64 = 0.01;
const MAG_FLOOR: f64 = 1e-12;

pub(crate) struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Plans {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }
}

fn real_cepstrum(log_mag: &[f64], plans: &Plans, buf: &mut [Complex<f64>]) {
    let n = buf.len();
    let half = n / 2;
    for k in 0..=half {
        buf[k] = Complex::new(log_mag[k], 0.0);
    }
    for k in half + 1..n {
        buf[k] = buf[n - k];
    }
    plans.inv.process(buf);
    for c in buf.iter_mut() {
        *c /= n as f64;
    }
}

/// Cepstral cutoff for one frame: 0.3 pitch periods when the frame is
/// voiced, never below `LIFTER`. Envelope detail finer than a fixed 1.25 ms
/// lifter resolves would otherwise stay behind in the residual and not
/// follow the formant warp; going much past 0.3 periods lets the envelope
/// ripple between harmonics, which is exactly where the warp reads it.
pub(crate) fn adaptive_cutoff(log_mag: &[f64], plans: &Plans, buf: &mut [Complex<f64>]) -> usize {
    real_cepstrum(log_mag, plans, buf);
    let (period, peak) = (MIN_PERIOD..=MAX_PERIOD.min(buf.len() / 2 - 1))
        .map(|q| (q, buf[q].re))
        .fold((0, f64::NEG_INFINITY), |b, (q, v)| if v > b.1 { (q, v) } else { b });
    if peak > VOICING_THRESHOLD {
        (3 * period / 10).max(LIFTER)
    } else {
        LIFTER
    }
}

/// Cepstrally smoothed copy of a half spectrum (`n/2 + 1` log values).
fn lifter(log_mag: &[f64], cutoff: usize, plans: &Plans, buf: &mut [Complex<f64>]) -> Vec<f64> {
    let n = buf.len();
    let half = n / 2;
    for k in 0..=half {
        buf[k] = Complex::new(log_mag[k], 0.0);
    }
    for k in half + 1..n {
        buf[k] = buf[n - k];
    }
    plans.inv.process(buf);
    for (q, c) in buf.iter_mut().enumerate() {
        if q >= cutoff && q <= n - cutoff {
            *c = Complex::new(0.0, 0.0);
        } else {
            *c /= n as f64;
        }
    }
    plans.fwd.process(buf);
    buf[..=half].iter().map(|c| c.re).collect()
}

/// Iterated cepstral smoothing that rides on the harmonic peaks rather
/// than averaging them with the valleys between harmonics.
pub(crate) fn true_envelope(log_mag: &[f64], cutoff: usize, plans: &Plans, buf: &mut [Complex<f64>]) -> Vec<f64> {
    let mut a = log_mag.to_vec();
    let mut v = lifter(&a, cutoff, plans, buf);
    for _ in 0..ENVELOPE_ITERS {
        let mut gap: f64 = 0.0;
        for (ai, &vi) in a.iter_mut().zip(&v) {
            gap = gap.max(*ai - vi);
            *ai = ai.max(vi);
        }
        if gap < ENVELOPE_TOL {
            break;
        }
        v = lifter(&a, cutoff, plans, buf);
    }
    v
}

fn interp(x: &[f64], pos: f64) -> f64 {
    let last = x.len() - 1;
    if pos <= 0.0 {
        return x[0];
    }
    if pos >= last as f64 {
        return x[last];
    }
    let i = pos.floor() as usize;
    let t = pos - i as f64;
    x[i] * (1.0 - t) + x[i + 1] * t
}

fn princarg(phi: f64) -> f64 {
    phi - 2.0 * PI * ((phi + PI) / (2.0 * PI)).floor()
}

/// Analysis, per-frame modification and weighted overlap-add
/// resynthesis. Output length equals input length.
pub(crate) fn warp_and_shift(wave: &[f64], formant_ratio: f64, f0_ratio: f64) -> Vec<f64> {
    let n = FFT_SIZE;
    let half = n / 2;
    let plans = Plans::new(n);
    let win = hann(WINDOW);
    let mut padded = vec![0.0; WINDOW];
    padded.extend_from_slice(wave);
    padded.extend(std::iter::repeat_n(0.0, WINDOW + HOP));
    let n_frames = (padded.len() - WINDOW) / HOP + 1;
    let mut out = vec![0.0; padded.len()];
    let mut wsum = vec![0.0; padded.len()];

    let warp = formant_ratio != 1.0;
    let shift = f0_ratio != 1.0;
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); n];
    let mut prev_phase = vec![0.0; half + 1];
    let mut acc_phase = vec![0.0; half + 1];

    for t in 0..n_frames {
        let start = t * HOP;
        for (i, b) in buf.iter_mut().enumerate() {
            let s = if i < WINDOW { padded[start + i] * win[i] } else { 0.0 };
            *b = Complex::new(s, 0.0);
        }
        plans.fwd.process(&mut buf);
        if warp || shift {
            let mag: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();
            let phase: Vec<f64> = buf[..=half].iter().map(|c| c.arg()).collect();
            let log_mag: Vec<f64> = mag.iter().map(|m| (m + MAG_FLOOR).ln()).collect();
            let cutoff = adaptive_cutoff(&log_mag, &plans, &mut scratch);

            let env = true_envelope(&log_mag, cutoff, &plans, &mut scratch);
            let resid: Vec<f64> = log_mag.iter().zip(&env).map(|(l, e)| l - e).collect();
            let inst: Vec<f64> = (0..=half)
                .map(|j| {
                    let expected = 2.0 * PI * j as f64 * HOP as f64 / n as f64;
                    let dev = princarg(phase[j] - prev_phase[j] - expected);
                    (expected + dev) / HOP as f64
                })
                .collect();
            for k in 0..=half {
                let e = if warp { interp(&env, k as f64 / formant_ratio) } else { env[k] };
                let (r, ph) = if shift {
                    let j = k as f64 / f0_ratio;
                    if j > half as f64 {
                        (f64::NEG_INFINITY, 0.0)
                    } else {
                        let jn = (j.round() as usize).min(half);
                        let ph = if t == 0 {
                            phase[jn]
                        } else {
                            acc_phase[k] + f0_ratio * inst[jn] * HOP as f64
                        };
                        (interp(&resid, j), ph)
                    }
                } else {
                    (resid[k], phase[k])
                };
                acc_phase[k] = princarg(ph);
                let m = if r.is_finite() { (e + r).exp() } else { 0.0 };
                buf[k] = Complex::from_polar(m, ph);
            }
            prev_phase.copy_from_slice(&phase);
            for k in half + 1..n {
                buf[k] = buf[n - k].conj();
            }
        }
        plans.inv.process(&mut buf);
        for i in 0..WINDOW {
            out[start + i] += buf[i].re / n as f64 * win[i];
            wsum[start + i] += win[i] * win[i];
        }
    }
    out.iter()
        .zip(&wsum)
        .skip(WINDOW)
        .take(wave.len())
        .map(|(&y, &w)| if w > 1e-8 { y / w } else { 0.0 })
        .collect()
}
