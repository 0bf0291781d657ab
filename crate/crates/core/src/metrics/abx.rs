//! ABX phone discrimination over phone-segment tokens. A token is a
//! maximal run of frames with one phone label inside one utterance.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::seeded_rng;
use crate::FrameMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    WithinSpeaker,
    AcrossSpeaker,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub phone: usize,
    pub speaker: usize,
    /// Frame range `start..end` in the stacked corpus.
    pub start: usize,
    pub end: usize,
}

/// Token indices of one triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbxTriple {
    pub a: usize,
    pub b: usize,
    pub x: usize,
    pub regime: Regime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbxTask {
    pub tokens: Vec<Token>,
    pub triples: Vec<AbxTriple>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbxResult {
    /// Macro-averaged error per regime; `None` when the regime has no triples.
    pub within: Option<f64>,
    pub across: Option<f64>,
    pub n_within: usize,
    pub n_across: usize,
}

/// Cuts stacked frames into phone tokens. `offsets` delimit utterances.
pub fn phone_tokens(labels: &[usize], speakers: &[usize], offsets: &[usize]) -> Vec<Token> {
    let mut out = Vec::new();
    for w in offsets.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mut start = lo;
        for t in lo + 1..=hi {
            if t == hi || labels[t] != labels[start] {
                out.push(Token {
                    phone: labels[start],
                    speaker: speakers[start],
                    start,
                    end: t,
                });
                start = t;
            }
        }
    }
    out
}

impl AbxTask {
    /// Checks the category and speaker constraints of every triple.
    pub fn validate(&self) -> Result<()> {
        if self.triples.is_empty() {
            return Err(Error::EmptyTask);
        }
        for t in &self.triples {
            let n = self.tokens.len();
            if t.a >= n || t.b >= n || t.x >= n {
                return Err(Error::IdOutOfRange {
                    id: t.a.max(t.b).max(t.x),
                    bound: n,
                });
            }
            let (a, b, x) = (self.tokens[t.a], self.tokens[t.b], self.tokens[t.x]);
            let speakers_ok = match t.regime {
                Regime::WithinSpeaker => a.speaker == b.speaker && b.speaker == x.speaker,
                Regime::AcrossSpeaker => a.speaker == b.speaker && x.speaker != a.speaker,
            };
            if a.phone != x.phone || b.phone == a.phone || !speakers_ok || t.a == t.x {
                return Err(Error::InvalidConfig(format!("malformed ABX triple {t:?}")));
            }
        }
        Ok(())
    }

    pub fn features_by_token(&self, stacked: &FrameMatrix) -> Vec<FrameMatrix> {
        self.tokens
            .iter()
            .map(|t| stacked.slice(ndarray::s![t.start..t.end, ..]).to_owned())
            .collect()
    }
}

/// Samples up to `per_pair` triples for every ordered phone pair and both
/// regimes.
pub fn build_abx_task(tokens: Vec<Token>, per_pair: usize, seed: u64) -> Result<AbxTask> {
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, t) in tokens.iter().enumerate() {
        groups.entry((t.phone, t.speaker)).or_default().push(i);
    }
    let phones: Vec<usize> = {
        let mut p: Vec<usize> = tokens.iter().map(|t| t.phone).collect();
        p.sort_unstable();
        p.dedup();
        p
    };
    let speakers: Vec<usize> = {
        let mut s: Vec<usize> = tokens.iter().map(|t| t.speaker).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let get = |p: usize, s: usize| groups.get(&(p, s)).map_or(&[][..], Vec::as_slice);
    let mut rng = seeded_rng(seed, 0x616278);
    let mut triples = Vec::new();
    for &p in &phones {
        for &q in &phones {
            if p == q {
                continue;
            }
            let within: Vec<usize> = speakers
                .iter()
                .copied()
                .filter(|&s| get(p, s).len() >= 2 && !get(q, s).is_empty())
                .collect();
            let base: Vec<usize> = speakers
                .iter()
                .copied()
                .filter(|&s| !get(p, s).is_empty() && !get(q, s).is_empty())
                .collect();
            for _ in 0..per_pair {
                if let Some(&s) = within.choose(&mut rng) {
                    let ax: Vec<usize> = get(p, s).choose_multiple(&mut rng, 2).copied().collect();
                    let b = *get(q, s).choose(&mut rng).expect("non-empty");
                    triples.push(AbxTriple {
                        a: ax[0],
                        b,
                        x: ax[1],
                        regime: Regime::WithinSpeaker,
                    });
                }
                if let Some(&s) = base.choose(&mut rng) {
                    let others: Vec<usize> = speakers
                        .iter()
                        .copied()
                        .filter(|&o| o != s && !get(p, o).is_empty())
                        .collect();
                    if let Some(&o) = others.choose(&mut rng) {
                        triples.push(AbxTriple {
                            a: *get(p, s).choose(&mut rng).expect("non-empty"),
                            b: *get(q, s).choose(&mut rng).expect("non-empty"),
                            x: *get(p, o).choose(&mut rng).expect("non-empty"),
                            regime: Regime::AcrossSpeaker,
                        });
                    }
                }
            }
        }
    }
    let task = AbxTask { tokens, triples };
    task.validate()?;
    Ok(task)
}

fn unit_rows(m: &FrameMatrix) -> (Array2<f64>, Vec<bool>) {
    let mut out = m.clone();
    let mut zero = Vec::with_capacity(m.nrows());
    for mut r in out.axis_iter_mut(Axis(0)) {
        let n = r.dot(&r).sqrt();
        zero.push(n == 0.0);
        if n > 0.0 {
            r /= n;
        }
    }
    (out, zero)
}

fn angle(a: ndarray::ArrayView1<f64>, za: bool, b: ndarray::ArrayView1<f64>, zb: bool) -> f64 {
    match (za, zb) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 0.5,
        _ => a.dot(&b).clamp(-1.0, 1.0).acos() / std::f64::consts::PI,
    }
}

/// Mean angular distance (angle / π) along the minimum-cost DTW path with
/// unit horizontal, vertical and diagonal steps.
pub fn dtw_angular(a: &FrameMatrix, b: &FrameMatrix) -> Result<f64> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::InvalidConfig("DTW needs non-empty sequences".into()));
    }
    let (ua, za) = unit_rows(a);
    let (ub, zb) = unit_rows(b);
    Ok(dtw_units(&ua, &za, &ub, &zb))
}

fn dtw_units(ua: &Array2<f64>, za: &[bool], ub: &Array2<f64>, zb: &[bool]) -> f64 {
    let (n, m) = (ua.nrows(), ub.nrows());
    // (cumulative cost, path length)
    let mut prev = vec![(f64::INFINITY, 0usize); m + 1];
    let mut cur = vec![(f64::INFINITY, 0usize); m + 1];
    prev[0] = (0.0, 0);
    for i in 1..=n {
        cur[0] = (f64::INFINITY, 0);
        for j in 1..=m {
            let c = angle(ua.row(i - 1), za[i - 1], ub.row(j - 1), zb[j - 1]);
            // Diagonal first so ties prefer the shorter path.
            let mut best = prev[j - 1];
            for cand in [prev[j], cur[j - 1]] {
                if cand.0 < best.0 {
                    best = cand;
                }
            }
            cur[j] = (best.0 + c, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, len) = prev[m];
    cost / len as f64
}

/// Error rates per regime: each triple scores 1 if `d(A,X) > d(B,X)`, 0.5
/// on a tie and 0 otherwise; scores are averaged per (phone pair, regime)
/// and those averages are averaged within each regime.
pub fn abx_error(features_by_token: &[FrameMatrix], task: &AbxTask) -> Result<AbxResult> {
    task.validate()?;
    if features_by_token.len() != task.tokens.len() {
        return Err(Error::DimensionMismatch {
            context: "ABX token features",
            expected: task.tokens.len(),
            found: features_by_token.len(),
        });
    }
    if features_by_token.iter().any(|f| f.nrows() == 0) {
        return Err(Error::InvalidConfig("ABX tokens must have at least one frame".into()));
    }
    let units: Vec<(Array2<f64>, Vec<bool>)> = features_by_token.iter().map(unit_rows).collect();
    let d = |i: usize, j: usize| dtw_units(&units[i].0, &units[i].1, &units[j].0, &units[j].1);
    let scores: Vec<f64> = task
        .triples
        .par_iter()
        .map(|t| {
            let (dax, dbx) = (d(t.a, t.x), d(t.b, t.x));
            if dax > dbx {
                1.0
            } else if dax == dbx {
                0.5
            } else {
                0.0
            }
        })
        .collect();
    let mut cells: BTreeMap<(Regime, usize, usize), (f64, usize)> = BTreeMap::new();
    for (t, s) in task.triples.iter().zip(&scores) {
        let key = (t.regime, task.tokens[t.a].phone, task.tokens[t.b].phone);
        let e = cells.entry(key).or_insert((0.0, 0));
        e.0 += s;
        e.1 += 1;
    }
    let macro_avg = |r: Regime| {
        let v: Vec<f64> = cells
            .iter()
            .filter(|(k, _)| k.0 == r)
            .map(|(_, (s, n))| s / *n as f64)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let count = |r: Regime| task.triples.iter().filter(|t| t.regime == r).count();
    Ok(AbxResult {
        within: macro_avg(Regime::WithinSpeaker),
        across: macro_avg(Regime::AcrossSpeaker),
        n_within: count(Regime::WithinSpeaker),
        n_across: count(Regime::AcrossSpeaker),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tok(phone: usize, speaker: usize) -> Token {
        Token {
            phone,
            speaker,
            start: 0,
            end: 1,
        }
    }

    #[test]
    fn tokens_split_on_label_and_utterance_boundaries() {
        let labels = [0, 0, 1, 1, 1, 1, 2];
        let speakers = [0, 0, 0, 0, 1, 1, 1];
        let t = phone_tokens(&labels, &speakers, &[0, 4, 7]);
        let spans: Vec<(usize, usize, usize)> = t.iter().map(|t| (t.phone, t.start, t.end)).collect();
        assert_eq!(spans, vec![(0, 0, 2), (1, 2, 4), (1, 4, 6), (2, 6, 7)]);
    }

    #[test]
    fn identical_probe_scores_zero_and_ties_score_half() {
        let task = AbxTask {
            tokens: vec![tok(0, 0), tok(1, 0), tok(0, 0)],
            triples: vec![AbxTriple {
                a: 0,
                b: 1,
                x: 2,
                regime: Regime::WithinSpeaker,
            }],
        };
        let x = array![[1.0, 0.0, 0.2]];
        let f = vec![x.clone(), array![[0.0, 1.0, 0.0]], x.clone()];
        assert_eq!(abx_error(&f, &task).unwrap().within, Some(0.0));
        // A and B mirror each other around X.
        let f = vec![array![[1.0, 1.0]], array![[1.0, -1.0]], array![[1.0, 0.0]]];
        let r = abx_error(&f, &task).unwrap();
        assert_eq!(r.within, Some(0.5));
        assert_eq!(r.across, None);
    }

    #[test]
    fn dtw_of_identical_sequences_is_zero() {
        let a = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        assert!(dtw_angular(&a, &a).unwrap().abs() < 1e-7);
        let b = array![[-1.0, -2.0]];
        assert!((dtw_angular(&array![[1.0, 2.0]], &b).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn malformed_triples_are_rejected() {
        let task = AbxTask {
            tokens: vec![tok(0, 0), tok(0, 0), tok(0, 1)],
            triples: vec![AbxTriple {
                a: 0,
                b: 1,
                x: 2,
                regime: Regime::AcrossSpeaker,
            }],
        };
        assert!(task.validate().is_err());
        let empty = AbxTask {
            tokens: vec![],
            triples: vec![],
        };
        assert!(matches!(empty.validate(), Err(Error::EmptyTask)));
    }
}
