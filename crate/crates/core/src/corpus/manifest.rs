//! JSON corpus manifests.
//!
//! ```json
//! {
//!   "header": { "frame_rate": 50.0, "phones": ["a", "b"], "speakers": ["s1"] },
//!   "utterances": [
//!     { "utterance_id": "u1", "speaker_id": "s1", "duration_s": 0.06,
//!       "frame_labels": [0, 0, 1],
//!       "source": { "kind": "wav", "path": "u1.wav" } }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Sources may
//! also be `features` (a binary feature dump), `inline` (frames in the
//! JSON) or `synthetic` (rendered from the header's generator record).

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synthetic::{SyntheticSpec, Voice};
use super::{probe_wav, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticHeader {
    pub spec: SyntheticSpec,
    /// Voice of each registered speaker, in header order.
    pub voices: Vec<Voice>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub frame_rate: f64,
    pub phones: Vec<String>,
    pub speakers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticHeader>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Source {
    Wav { path: PathBuf },
    Features { path: PathBuf },
    Inline { features: Vec<Vec<f64>> },
    Synthetic { noise_seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utterance_id: String,
    pub speaker_id: String,
    pub source: Source,
    pub frame_labels: Vec<usize>,
    pub duration_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub header: ManifestHeader,
    pub utterances: Vec<Utterance>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl CorpusManifest {
    /// Validates an in-memory manifest (no file checks).
    pub fn new(header: ManifestHeader, utterances: Vec<Utterance>) -> Result<Self> {
        let m = Self {
            header,
            utterances,
            base_dir: PathBuf::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.utterances.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let rate = self.header.frame_rate;
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Manifest(format!("frame_rate must be positive, got {rate}")));
        }
        let speakers: HashSet<&str> = self.header.speakers.iter().map(String::as_str).collect();
        if speakers.len() != self.header.speakers.len() {
            return Err(Error::Manifest("duplicate speaker in header".into()));
        }
        if let Some(syn) = &self.header.synthetic {
            if syn.voices.len() != self.header.speakers.len() {
                return Err(Error::Manifest(format!(
                    "{} synthetic voices for {} speakers",
                    syn.voices.len(),
                    self.header.speakers.len()
                )));
            }
        }
        let n_phones = self.header.phones.len();
        let mut ids = HashSet::new();
        for u in &self.utterances {
            if !ids.insert(u.utterance_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate utterance_id {}", u.utterance_id)));
            }
            if !speakers.contains(u.speaker_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "{}: speaker {} is not registered",
                    u.utterance_id, u.speaker_id
                )));
            }
            if let Some(&p) = u.frame_labels.iter().find(|&&p| p >= n_phones) {
                return Err(Error::Manifest(format!(
                    "{}: phone id {p} is not registered ({n_phones} phones)",
                    u.utterance_id
                )));
            }
            let expected = (u.duration_s * rate).round();
            if !(expected >= 0.0) || expected as usize != u.frame_labels.len() {
                return Err(Error::LabelMismatch {
                    utterance: u.utterance_id.clone(),
                    expected: expected.max(0.0) as usize,
                    found: u.frame_labels.len(),
                });
            }
            match &u.source {
                Source::Inline { features } => {
                    if features.len() != u.frame_labels.len() {
                        return Err(Error::LabelMismatch {
                            utterance: u.utterance_id.clone(),
                            expected: u.frame_labels.len(),
                            found: features.len(),
                        });
                    }
                    let w = features.first().map_or(0, Vec::len);
                    if features.iter().any(|r| r.len() != w) {
                        return Err(Error::Manifest(format!("{}: ragged inline features", u.utterance_id)));
                    }
                }
                Source::Synthetic { .. } if self.header.synthetic.is_none() => {
                    return Err(Error::Manifest(format!(
                        "{}: synthetic source without a synthetic header",
                        u.utterance_id
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn n_phones(&self) -> usize {
        self.header.phones.len()
    }

    pub fn n_speakers(&self) -> usize {
        self.header.speakers.len()
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.frame_labels.len()).sum()
    }

    /// Header index of every utterance's speaker.
    pub fn speaker_indices(&self) -> Vec<usize> {
        let map: HashMap<&str, usize> = self
            .header
            .speakers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        self.utterances.iter().map(|u| map[u.speaker_id.as_str()]).collect()
    }

    /// Resolves a source path against the manifest directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = dir.into();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a manifest, including referenced files: WAV
/// headers must be mono 16 kHz PCM-16 and agree with `duration_s`.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = manifest_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    m.validate()?;
    for u in &m.utterances {
        match &u.source {
            Source::Wav { path: p } => {
                let full = m.resolve(p);
                let samples = probe_wav(&full)?;
                let secs = samples as f64 / SAMPLE_RATE as f64;
                if (secs - u.duration_s).abs() > 1.0 / m.header.frame_rate {
                    return Err(Error::Manifest(format!(
                        "{}: audio lasts {secs:.3} s but duration_s is {}",
                        u.utterance_id, u.duration_s
                    )));
                }
            }
            Source::Features { path: p } => {
                let full = m.resolve(p);
                if !full.is_file() {
                    return Err(Error::io(
                        &full,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "feature dump not found"),
                    ));
                }
            }
            _ => {}
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str, labels: Vec<usize>) -> Utterance {
        Utterance {
            utterance_id: id.into(),
            speaker_id: "s".into(),
            duration_s: labels.len() as f64 / 50.0,
            source: Source::Inline {
                features: vec![vec![0.0; 2]; labels.len()],
            },
            frame_labels: labels,
        }
    }

    fn header() -> ManifestHeader {
        ManifestHeader {
            frame_rate: 50.0,
            phones: vec!["a".into(), "b".into()],
            speakers: vec!["s".into()],
            synthetic: None,
        }
    }

    fn write(dir: &Path, m: &CorpusManifest) -> PathBuf {
        let p = dir.join("m.json");
        m.save(&p).unwrap();
        p
    }

    #[test]
    fn three_utterances_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = CorpusManifest::new(
            header(),
            vec![utt("u1", vec![0, 1]), utt("u2", vec![1; 5]), utt("u3", vec![0])],
        )
        .unwrap();
        let loaded = load_corpus(write(dir.path(), &m)).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.utterances, m.utterances);
    }

    #[test]
    fn short_labels_name_the_utterance() {
        let mut bad = utt("short_one", vec![0, 1, 1]);
        bad.duration_s = 0.08;
        match CorpusManifest::new(header(), vec![utt("ok", vec![0]), bad]) {
            Err(Error::LabelMismatch { utterance, expected, found }) => {
                assert_eq!(utterance, "short_one");
                assert_eq!((expected, found), (4, 3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_corpus() {
        let e = CorpusManifest::new(header(), vec![]).unwrap_err();
        assert_eq!(e.to_string(), "empty corpus");
    }

    #[test]
    fn unregistered_ids_are_rejected() {
        let mut u = utt("u", vec![0]);
        u.speaker_id = "nobody".into();
        assert!(CorpusManifest::new(header(), vec![u]).is_err());
        assert!(CorpusManifest::new(header(), vec![utt("u", vec![2])]).is_err());
    }

    #[test]
    fn missing_audio_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut u = utt("u", vec![0]);
        u.source = Source::Wav { path: "missing.wav".into() };
        let m = CorpusManifest::new(header(), vec![u]).unwrap();
        assert!(matches!(load_corpus(write(dir.path(), &m)), Err(Error::Io { .. })));
        assert!(matches!(load_corpus(dir.path().join("nope.json")), Err(Error::Io { .. })));
    }

    #[test]
    fn wav_sources_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        super::super::write_wav(dir.path().join("a.wav"), &vec![0.0; 1600]).unwrap();
        let mut u = utt("u", vec![0; 5]);
        u.duration_s = 0.1;
        u.source = Source::Wav { path: "a.wav".into() };
        let m = CorpusManifest::new(header(), vec![u]).unwrap();
        assert!(load_corpus(write(dir.path(), &m)).is_ok());
    }
}
