//! Second-order IIR sections from the RBJ audio-EQ cookbook.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;

/// Normalized biquad (`a0 = 1`), direct form I.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    pub fn peaking(fc: f64, q: f64, gain_db: f64, fs: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w0 = 2.0 * PI * fc / fs;
        let alpha = w0.sin() / (2.0 * q);
        let c = w0.cos();
        Self::normalized(
            [1.0 + alpha * a, -2.0 * c, 1.0 - alpha * a],
            [1.0 + alpha / a, -2.0 * c, 1.0 - alpha / a],
        )
    }

    /// Shelf with slope 1.
    pub fn low_shelf(fc: f64, gain_db: f64, fs: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w0 = 2.0 * PI * fc / fs;
        let c = w0.cos();
        let k = 2.0 * a.sqrt() * w0.sin() / 2.0 * 2f64.sqrt();
        Self::normalized(
            [
                a * ((a + 1.0) - (a - 1.0) * c + k),
                2.0 * a * ((a - 1.0) - (a + 1.0) * c),
                a * ((a + 1.0) - (a - 1.0) * c - k),
            ],
            [
                (a + 1.0) + (a - 1.0) * c + k,
                -2.0 * ((a - 1.0) + (a + 1.0) * c),
                (a + 1.0) + (a - 1.0) * c - k,
            ],
        )
    }

    pub fn high_shelf(fc: f64, gain_db: f64, fs: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w0 = 2.0 * PI * fc / fs;
        let c = w0.cos();
        let k = 2.0 * a.sqrt() * w0.sin() / 2.0 * 2f64.sqrt();
        Self::normalized(
            [
                a * ((a + 1.0) + (a - 1.0) * c + k),
                -2.0 * a * ((a - 1.0) + (a + 1.0) * c),
                a * ((a + 1.0) + (a - 1.0) * c - k),
            ],
            [
                (a + 1.0) - (a - 1.0) * c + k,
                2.0 * ((a - 1.0) - (a + 1.0) * c),
                (a + 1.0) - (a - 1.0) * c - k,
            ],
        )
    }

    pub fn filter(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for s in x.iter_mut() {
            let x0 = *s;
            let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            *s = y0;
        }
    }

    /// Magnitude response at `f` Hz.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let z1 = Complex::from_polar(1.0, -2.0 * PI * f / fs);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z1 * self.a[0] + z2 * self.a[1];
        (num / den).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 16_000.0;

    fn sine_gain(bq: &Biquad, f: f64) -> f64 {
        let n = 32_000;
        let mut x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / FS).sin()).collect();
        bq.filter(&mut x);
        // Steady-state amplitude over the second half.
        let rms = (x[n / 2..].iter().map(|v| v * v).sum::<f64>() / (n / 2) as f64).sqrt();
        rms * 2f64.sqrt()
    }

    #[test]
    fn peaking_gain_at_centre() {
        for g in [-12.0, -3.0, 6.0, 12.0] {
            let bq = Biquad::peaking(1000.0, 1.0, g, FS);
            let expected = 10f64.powf(g / 20.0);
            assert!((bq.magnitude(1000.0, FS) - expected).abs() < 1e-9);
            assert!((sine_gain(&bq, 1000.0) - expected).abs() < 1e-2 * expected);
            // Far from the centre the section is transparent.
            assert!((bq.magnitude(20.0, FS) - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn shelves_reach_their_gain() {
        let lo = Biquad::low_shelf(100.0, 9.0, FS);
        let hi = Biquad::high_shelf(5000.0, -6.0, FS);
        assert!((lo.magnitude(0.0, FS) - 10f64.powf(9.0 / 20.0)).abs() < 1e-9);
        assert!((lo.magnitude(7000.0, FS) - 1.0).abs() < 1e-2);
        assert!((hi.magnitude(8000.0, FS) - 10f64.powf(-6.0 / 20.0)).abs() < 1e-9);
        assert!((hi.magnitude(50.0, FS) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn zero_gain_is_identity() {
        let mut x: Vec<f64> = (0..100).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let orig = x.clone();
        for bq in [
            Biquad::peaking(500.0, 2.0, 0.0, FS),
            Biquad::low_shelf(100.0, 0.0, FS),
            Biquad::high_shelf(6000.0, 0.0, FS),
        ] {
            bq.filter(&mut x);
        }
        for (a, b) in x.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
