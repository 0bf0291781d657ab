use std::f64::consts::PI;

use spin_core::corpus::{extract_features, FeatureConfig, SyntheticRenderer, SyntheticSpec, Voice};
use spin_core::numeric::seeded_rng;
use spin_core::perturb::{
    perturb_synthetic, perturb_waveform, sample_perturb_params, EqParams, PerturbConfig, PerturbParams,
};
use rand::Rng;

const FS: f64 = 16_000.0;

/// Harmonic complex at `f0` whose log amplitude follows `log_env`.
fn harmonic(f0: f64, seconds: f64, log_env: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = (seconds * FS) as usize;
    let n_harm = (7600.0 / f0) as usize;
    let amps: Vec<f64> = (1..=n_harm).map(|h| log_env(h as f64 * f0).exp()).collect();
    let peak: f64 = amps.iter().sum();
    (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            amps.iter()
                .enumerate()
                .map(|(h, a)| a * (2.0 * PI * f0 * (h + 1) as f64 * t + 0.3 * h as f64).sin())
                .sum::<f64>()
                * 0.5
                / peak
        })
        .collect()
}

fn vowel_envelope(f: f64) -> f64 {
    [500.0, 1500.0, 2500.0]
        .iter()
        .map(|&fm| 3.0 * (-(f - fm) * (f - fm) / (2.0 * 200.0 * 200.0)).exp())
        .sum()
}

/// Windowed DTFT magnitude at `f` over the middle of the signal.
fn amplitude_at(x: &[f64], f: f64) -> f64 {
    let (lo, hi) = (x.len() / 4, 3 * x.len() / 4);
    let n = hi - lo;
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..n {
        let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
        let ph = 2.0 * PI * f * (lo + i) as f64 / FS;
        re += w * x[lo + i] * ph.cos();
        im -= w * x[lo + i] * ph.sin();
    }
    (re * re + im * im).sqrt()
}

/// Envelope peak near `guess`: the loudest harmonic in ±20 %, refined by a
/// parabola through the log amplitudes of it and its neighbours.
fn envelope_peak(x: &[f64], f0: f64, guess: f64) -> f64 {
    let h_lo = ((guess * 0.8) / f0).ceil() as usize;
    let h_hi = ((guess * 1.2) / f0).floor() as usize;
    let la = |h: usize| amplitude_at(x, h as f64 * f0).ln();
    let best = (h_lo..=h_hi).max_by(|&a, &b| la(a).total_cmp(&la(b))).unwrap();
    let (l, c, r) = (la(best - 1), la(best), la(best + 1));
    let offset = 0.5 * (l - r) / (l - 2.0 * c + r);
    (best as f64 + offset) * f0
}

/// Autocorrelation pitch estimate over the middle of the signal: the
/// shortest-lag local maximum within 10 % of the strongest one, so integer
/// lag rounding cannot promote a multiple of the period.
fn pitch(x: &[f64]) -> f64 {
    let seg = &x[x.len() / 4..3 * x.len() / 4];
    let energy: f64 = seg.iter().map(|v| v * v).sum();
    let r = |lag: usize| seg.iter().zip(&seg[lag..]).map(|(a, b)| a * b).sum::<f64>() / energy;
    let (min_lag, max_lag) = ((FS / 500.0) as usize, (FS / 60.0) as usize);
    let acf: Vec<f64> = (0..=max_lag + 1).map(r).collect();
    let strongest = acf[min_lag..=max_lag].iter().cloned().fold(f64::MIN, f64::max);
    let best = (min_lag..=max_lag)
        .find(|&l| acf[l] >= acf[l - 1] && acf[l] >= acf[l + 1] && acf[l] >= 0.9 * strongest)
        .unwrap();
    let (l, c, rr) = (r(best - 1), r(best), r(best + 1));
    let lag = best as f64 + 0.5 * (l - rr) / (l - 2.0 * c + rr);
    FS / lag
}

fn ratios(formant: f64, f0: f64) -> PerturbParams {
    PerturbParams {
        formant_ratio: formant,
        f0_ratio: f0,
        eq: EqParams::flat(),
    }
}

#[test]
fn formant_ratio_moves_envelope_peaks() {
    let f0 = 100.0;
    let x = harmonic(f0, 1.0, vowel_envelope);
    for (target, guess) in [500.0, 1500.0, 2500.0].iter().map(|&f| (f, f)) {
        let measured = envelope_peak(&x, f0, guess);
        assert!((measured / target - 1.0).abs() < 0.01, "input peak {measured} vs {target}");
    }
    let y = perturb_waveform(&x, 16_000, &ratios(1.2, 1.0)).unwrap();
    for target in [600.0, 1800.0, 3000.0] {
        let measured = envelope_peak(&y, f0, target);
        let rel = (measured / target - 1.0).abs();
        assert!(rel < 0.03, "output peak {measured:.1} Hz vs {target} Hz ({:.2}%)", rel * 100.0);
    }
}

#[test]
fn f0_ratio_doubles_pitch() {
    let x = harmonic(110.0, 1.0, |f| -f / 2000.0);
    assert!((pitch(&x) / 110.0 - 1.0).abs() < 0.01);
    let y = perturb_waveform(&x, 16_000, &ratios(1.0, 2.0)).unwrap();
    let p = pitch(&y);
    assert!((p / 220.0 - 1.0).abs() < 0.03, "pitch {p}");
}

#[test]
fn length_is_preserved_exactly() {
    let cfg = PerturbConfig::default();
    let mut rng = seeded_rng(2024, 0);
    for _ in 0..100 {
        let n = rng.random_range(1..12_000);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let p = sample_perturb_params(&cfg, &mut rng);
        let y = perturb_waveform(&x, 16_000, &p).unwrap();
        assert_eq!(y.len(), n);
        assert!(y.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn identity_round_trip_below_minus_40_db() {
    let mut rng = seeded_rng(5, 0);
    let x: Vec<f64> = (0..16_000)
        .map(|i| (i as f64 * 0.07).sin() * 0.3 + rng.random_range(-0.05..0.05))
        .collect();
    let y = perturb_waveform(&x, 16_000, &PerturbParams::identity()).unwrap();
    let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
    let sig: f64 = x.iter().map(|a| a * a).sum();
    let db = 10.0 * (err / sig).log10();
    assert!(db <= -40.0, "{db} dB");
}

#[test]
fn perturbation_is_deterministic() {
    let x = harmonic(150.0, 0.3, vowel_envelope);
    let p = sample_perturb_params(&PerturbConfig::default(), &mut seeded_rng(1, 1));
    let a = perturb_waveform(&x, 16_000, &p).unwrap();
    let b = perturb_waveform(&x, 16_000, &p).unwrap();
    assert_eq!(a, b);
}

#[test]
fn eq_only_keeps_frame_alignment() {
    let x = harmonic(130.0, 0.77, vowel_envelope);
    let mut p = sample_perturb_params(&PerturbConfig::default(), &mut seeded_rng(3, 0));
    p.formant_ratio = 1.0;
    p.f0_ratio = 1.0;
    let y = perturb_waveform(&x, 16_000, &p).unwrap();
    let cfg = FeatureConfig::default();
    let fx = extract_features(&x, &cfg).unwrap();
    let fy = extract_features(&y, &cfg).unwrap();
    assert_eq!(fx.dim(), fy.dim());
    assert!(fx != fy);
}

#[test]
fn formant_draws_are_uniform() {
    let cfg = PerturbConfig {
        invert_prob: 0.0,
        formant_hi: 1.4,
        ..PerturbConfig::default()
    };
    let mut rng = seeded_rng(77, 0);
    let mut draws: Vec<f64> = (0..10_000)
        .map(|_| sample_perturb_params(&cfg, &mut rng).formant_ratio)
        .collect();
    draws.sort_by(f64::total_cmp);
    assert!(draws[0] >= 1.0 && draws[draws.len() - 1] <= 1.4);
    let n = draws.len() as f64;
    // Kolmogorov-Smirnov statistic against U(1, 1.4).
    let d = draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = (x - 1.0) / 0.4;
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.63 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn synthetic_swap_is_exact_without_noise() {
    let spec = SyntheticSpec {
        n_speakers: 2,
        noise_std: 0.0,
        ..SyntheticSpec::default()
    };
    let r = SyntheticRenderer::new(&spec).unwrap();
    let v1 = Voice { formant_scale: 0.9, f0_scale: 1.3 };
    let v2 = Voice { formant_scale: 1.2, f0_scale: 0.8 };
    let labels = vec![0, 0, 3, 3, 3, 7, 1];
    let a = r.render_features(&labels, v1, 11).unwrap();
    let same = perturb_synthetic(&a, &r, v1, v1, 12).unwrap();
    assert_eq!(same.frames, a.frames);
    let b = r.render_features(&labels, v2, 11).unwrap();
    let b_to_1 = perturb_synthetic(&b, &r, v2, v1, 13).unwrap();
    assert_eq!(b_to_1.labels, labels);
    assert_eq!(b_to_1.frames, a.frames);
}


