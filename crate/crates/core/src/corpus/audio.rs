//! 16 kHz mono PCM-16 WAV input and output.

use std::path::Path;

use super::SAMPLE_RATE;
use crate::error::{Error, Result};

pub fn read_wav(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    check_spec(path, reader.spec())?;
    reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))
}

/// Validates the header without decoding samples.
pub fn probe_wav(path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    check_spec(path, reader.spec())?;
    Ok(reader.len() as usize)
}

/// Writes samples in `[-1, 1]` as PCM-16; out-of-range values are clipped.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    w.finalize().map_err(|e| wav_error(path, e))
}

fn check_spec(path: &Path, spec: hound::WavSpec) -> Result<()> {
    if spec.channels != 1
        || spec.sample_rate != SAMPLE_RATE
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(Error::UnsupportedAudio(format!(
            "{}: {} ch, {} Hz, {}-bit {:?}; need mono 16 kHz PCM-16",
            path.display(),
            spec.channels,
            spec.sample_rate,
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    Ok(())
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::UnsupportedAudio(format!("{}: {other}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x: Vec<f64> = (0..1600).map(|i| (i as f64 * 0.01).sin() * 0.5).collect();
        write_wav(&p, &x).unwrap();
        let y = read_wav(&p).unwrap();
        assert_eq!(y.len(), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
        assert_eq!(probe_wav(&p).unwrap(), 1600);
    }

    #[test]
    fn rejects_stereo_and_wrong_rate() {
        let dir = tempfile::tempdir().unwrap();
        for (ch, rate) in [(2u16, 16_000u32), (1, 44_100)] {
            let p = dir.path().join(format!("{ch}_{rate}.wav"));
            let spec = hound::WavSpec {
                channels: ch,
                sample_rate: rate,
                bits_per_sample: 16,
                sample_format: hound::SampleFormat::Int,
            };
            let mut w = hound::WavWriter::create(&p, spec).unwrap();
            for _ in 0..(ch as usize * 10) {
                w.write_sample(0i16).unwrap();
            }
            w.finalize().unwrap();
            assert!(matches!(read_wav(&p), Err(Error::UnsupportedAudio(_))));
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_wav("/nonexistent/x.wav"), Err(Error::Io { .. })));
    }
}
