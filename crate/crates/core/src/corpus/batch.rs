//! Deterministic batch packing. Each epoch shuffles the utterances with a
//! seed derived from `(seed, epoch)` and packs them greedily, in order,
//! into batches of at most `batch_seconds × frame_rate` frames. Utterances
//! are never split.

use rand::seq::SliceRandom;

use super::manifest::CorpusManifest;
use crate::error::{Error, Result};
use crate::numeric::seeded_rng;
use crate::FrameMatrix;

/// Utterances of one batch plus the per-frame labels they carry.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPlan {
    pub utterances: Vec<usize>,
    pub labels: Vec<usize>,
    pub speakers: Vec<usize>,
}

impl BatchPlan {
    pub fn frames(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Clone, Debug)]
pub struct BatchSampler {
    lengths: Vec<usize>,
    labels: Vec<Vec<usize>>,
    speakers: Vec<usize>,
    capacity: usize,
    seed: u64,
}

pub fn batch_frames(corpus: &CorpusManifest, batch_seconds: f64, seed: u64) -> Result<BatchSampler> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(batch_seconds > 0.0) || !batch_seconds.is_finite() {
        return Err(Error::InvalidConfig(format!("batch_seconds must be positive, got {batch_seconds}")));
    }
    let capacity = (batch_seconds * corpus.header.frame_rate).floor() as usize;
    for u in &corpus.utterances {
        if u.frame_labels.len() > capacity {
            return Err(Error::UtteranceTooLong {
                utterance: u.utterance_id.clone(),
                frames: u.frame_labels.len(),
                capacity,
            });
        }
    }
    Ok(BatchSampler {
        lengths: corpus.utterances.iter().map(|u| u.frame_labels.len()).collect(),
        labels: corpus.utterances.iter().map(|u| u.frame_labels.clone()).collect(),
        speakers: corpus.speaker_indices(),
        capacity,
        seed,
    })
}

impl BatchSampler {
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn epoch(&self, epoch: u64) -> Vec<BatchPlan> {
        let mut order: Vec<usize> = (0..self.lengths.len()).collect();
        order.shuffle(&mut seeded_rng(self.seed, epoch));
        let mut out = Vec::new();
        let mut cur = BatchPlan {
            utterances: Vec::new(),
            labels: Vec::new(),
            speakers: Vec::new(),
        };
        for u in order {
            if cur.frames() + self.lengths[u] > self.capacity {
                out.push(std::mem::replace(
                    &mut cur,
                    BatchPlan {
                        utterances: Vec::new(),
                        labels: Vec::new(),
                        speakers: Vec::new(),
                    },
                ));
            }
            cur.utterances.push(u);
            cur.labels.extend_from_slice(&self.labels[u]);
            cur.speakers.extend(std::iter::repeat_n(self.speakers[u], self.lengths[u]));
        }
        if !cur.utterances.is_empty() {
            out.push(cur);
        }
        out
    }

    /// Endless stream of batches, epoch after epoch.
    pub fn stream(&self) -> impl Iterator<Item = BatchPlan> + '_ {
        (0u64..).flat_map(move |e| self.epoch(e))
    }
}

/// Aligned original and perturbed views of one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBatchPair {
    pub original: FrameMatrix,
    pub perturbed: FrameMatrix,
    pub labels: Vec<usize>,
    pub speakers: Vec<usize>,
}

impl FrameBatchPair {
    pub fn new(
        original: FrameMatrix,
        perturbed: FrameMatrix,
        labels: Vec<usize>,
        speakers: Vec<usize>,
    ) -> Result<Self> {
        let b = original.nrows();
        for (context, found) in [
            ("perturbed frames", perturbed.nrows()),
            ("frame labels", labels.len()),
            ("frame speakers", speakers.len()),
        ] {
            if found != b {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: b,
                    found,
                });
            }
        }
        if perturbed.ncols() != original.ncols() {
            return Err(Error::DimensionMismatch {
                context: "perturbed feature width",
                expected: original.ncols(),
                found: perturbed.ncols(),
            });
        }
        Ok(Self {
            original,
            perturbed,
            labels,
            speakers,
        })
    }

    pub fn frames(&self) -> usize {
        self.original.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ManifestHeader, Source, Utterance};

    fn corpus(lengths: &[usize]) -> CorpusManifest {
        let header = ManifestHeader {
            frame_rate: 50.0,
            phones: vec!["a".into()],
            speakers: vec!["s0".into(), "s1".into()],
            synthetic: None,
        };
        let utts = lengths
            .iter()
            .enumerate()
            .map(|(i, &n)| Utterance {
                utterance_id: format!("u{i}"),
                speaker_id: format!("s{}", i % 2),
                source: Source::Inline {
                    features: vec![vec![0.0]; n],
                },
                frame_labels: vec![0; n],
                duration_s: n as f64 / 50.0,
            })
            .collect();
        CorpusManifest::new(header, utts).unwrap()
    }

    #[test]
    fn one_short_utterance_is_one_batch() {
        let s = batch_frames(&corpus(&[500]), 256.0, 0).unwrap();
        assert_eq!(s.capacity(), 12_800);
        let e = s.epoch(0);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].frames(), 500);
    }

    #[test]
    fn capacity_respected_and_every_utterance_once() {
        let lengths: Vec<usize> = (0..200).map(|i| 100 + (i * 37) % 900).collect();
        let s = batch_frames(&corpus(&lengths), 20.0, 3).unwrap();
        for epoch in 0..3 {
            let batches = s.epoch(epoch);
            let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.utterances.clone()).collect();
            assert!(batches.iter().all(|b| b.frames() <= 1000));
            seen.sort();
            assert_eq!(seen, (0..200).collect::<Vec<_>>());
        }
        assert_eq!(s.epoch(1), s.epoch(1));
        assert_ne!(s.epoch(0), s.epoch(1));
    }

    #[test]
    fn too_long_utterance_is_an_error() {
        assert!(matches!(
            batch_frames(&corpus(&[10, 600]), 10.0, 0),
            Err(Error::UtteranceTooLong { frames: 600, capacity: 500, .. })
        ));
    }

    #[test]
    fn speakers_follow_frames() {
        let s = batch_frames(&corpus(&[2, 3]), 1.0, 0).unwrap();
        let b = &s.epoch(0)[0];
        let expected: Vec<usize> = b
            .utterances
            .iter()
            .flat_map(|&u| std::iter::repeat_n(u % 2, [2, 3][u]))
            .collect();
        assert_eq!(b.speakers, expected);
    }
}
