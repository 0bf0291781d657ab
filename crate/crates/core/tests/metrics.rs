use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use spin_core::metrics::*;
use spin_core::numeric::seeded_rng;

/// Entropies and purities straight from the definitions, with no shared code.
fn brute_force(counts: &Array2<u64>) -> (f64, f64, f64) {
    let (np, nk) = counts.dim();
    let n: f64 = counts.iter().map(|&c| c as f64).sum();
    let mut p_phone = vec![0.0; np];
    let mut p_code = vec![0.0; nk];
    for i in 0..np {
        for k in 0..nk {
            p_phone[i] += counts[[i, k]] as f64 / n;
            p_code[k] += counts[[i, k]] as f64 / n;
        }
    }
    let mut mi = 0.0;
    for i in 0..np {
        for k in 0..nk {
            let pj = counts[[i, k]] as f64 / n;
            if pj > 0.0 {
                mi += pj * (pj / (p_phone[i] * p_code[k])).ln();
            }
        }
    }
    let h: f64 = p_phone.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum();
    let mut phone_pur = 0.0;
    for k in 0..nk {
        let best = (0..np).map(|i| counts[[i, k]]).max().unwrap();
        phone_pur += best as f64 / n;
    }
    let mut cls_pur = 0.0;
    for i in 0..np {
        let best = (0..nk).map(|k| counts[[i, k]]).max().unwrap();
        cls_pur += best as f64 / n;
    }
    (cls_pur, phone_pur, mi / h)
}

#[test]
fn purity_and_pnmi_match_definitions_on_random_tables() {
    let mut rng = seeded_rng(11, 0);
    let mut checked = 0;
    while checked < 1000 {
        let np = rng.random_range(2..9);
        let nk = rng.random_range(1..12);
        let sparse = rng.random_bool(0.5);
        let counts = Array2::from_shape_fn((np, nk), |_| {
            if sparse && rng.random_bool(0.6) {
                0
            } else {
                rng.random_range(0..50u64)
            }
        });
        let occupied = counts.rows().into_iter().filter(|r| r.sum() > 0).count();
        if occupied < 2 {
            continue;
        }
        let table = ContingencyTable::from_counts(counts.clone()).unwrap();
        let m = purity_metrics(&table).unwrap();
        let (c, p, pnmi) = brute_force(&counts);
        assert!((m.cluster_purity - c).abs() <= 1e-9);
        assert!((m.phone_purity - p).abs() <= 1e-9);
        assert!((m.pnmi - pnmi).abs() <= 1e-9, "{} vs {pnmi}", m.pnmi);
        checked += 1;
    }
}

#[test]
fn contingency_counts_pairs() {
    let t = contingency(&[0, 1, 1, 2, 0], &[1, 1, 0, 0, 1], 2, 3).unwrap();
    assert_eq!(t.counts(), &ndarray::array![[0, 1, 1], [2, 1, 0]]);
    assert_eq!(t.total(), 5);
}

#[test]
fn heatmap_columns_are_conditionals() {
    let t = contingency(&[0, 0, 0, 1, 1, 3], &[2, 2, 1, 0, 0, 2], 3, 4).unwrap();
    let h = code_phone_heatmap(&t);
    assert_eq!(h.phone_order, vec![2, 0, 1]);
    assert_eq!(h.unused_codes, vec![2]);
    for k in [0, 1, 3] {
        assert!((h.values.column(k).sum() - 1.0).abs() < 1e-15);
    }
    assert!((h.values[[0, 0]] - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(h.codes_for_phone(2), 2);
    assert_eq!(h.codes_for_phone(0), 1);
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn spearman_matches_rank_difference_formula() {
    // Without ties rho = 1 - 6 Σ d² / (n (n² - 1)).
    let mut rng = seeded_rng(3, 0);
    for _ in 0..200 {
        let n = rng.random_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter().map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64).collect()
        };
        let (rx, ry) = (rank(&x), rank(&y));
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        let nf = n as f64;
        let expected = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
        assert!((spearman(&x, &y).unwrap() - expected).abs() <= 1e-9);
        assert!((pearson(&rx, &ry) - expected).abs() <= 1e-9);
    }
}

#[test]
fn spearman_with_ties_matches_reference() {
    let c = [1.0, 2.0, 2.0, 3.5, -1.0, 7.0, 7.0, 0.5];
    let d = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
    // Midranks by hand.
    let rc = [3.0, 4.5, 4.5, 6.0, 1.0, 7.5, 7.5, 2.0];
    let rd = [4.0, 1.5, 5.0, 1.5, 6.0, 8.0, 3.0, 7.0];
    let rho = spearman(&c, &d).unwrap();
    assert!((rho - pearson(&rc, &rd)).abs() <= 1e-9);
    assert!((rho - -0.2242465426740479).abs() <= 1e-9);
}

#[test]
fn welch_t_test_matches_reference_p_values() {
    let a = [2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8];
    let b = [6.2, 5.1, 7.7, 4.9, 6.6];
    assert!((ttest_two_sample(&a, &b).unwrap() - 0.003518954691958972).abs() <= 1e-9);
    let x = [0.3, 0.1, 0.9, 0.4, 0.5, 0.2];
    let y = [10.0, 11.0, 9.5, 12.0, 8.0, 14.0];
    assert!((ttest_two_sample(&x, &y).unwrap() - 5.572364162534104e-05).abs() <= 1e-9);
    // Symmetric in its arguments.
    assert_eq!(ttest_two_sample(&a, &b).unwrap(), ttest_two_sample(&b, &a).unwrap());
}

#[test]
fn welch_large_samples_approach_normal_tail() {
    // With many samples the t statistic is close to normal: a mean shift of
    // 1.96 standard errors gives p ≈ 0.05.
    let n = 20_000;
    let a: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let se = (2.0 / n as f64 * (n as f64 / (n as f64 - 1.0))).sqrt();
    let b: Vec<f64> = a.iter().map(|v| v + 1.959964 * se).collect();
    let p = ttest_two_sample(&a, &b).unwrap();
    assert!((p - 0.05).abs() < 1e-3, "p = {p}");
}

#[test]
fn abx_on_noise_is_chance() {
    let mut rng = seeded_rng(21, 0);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (n_phones, n_speakers, per_cell, dim) = (10, 4, 40, 8);
    let mut tokens = Vec::new();
    let mut feats = Vec::new();
    let mut offset = 0;
    for p in 0..n_phones {
        for s in 0..n_speakers {
            for _ in 0..per_cell {
                let len = rng.random_range(2..7);
                tokens.push(Token {
                    phone: p,
                    speaker: s,
                    start: offset,
                    end: offset + len,
                });
                offset += len;
                feats.push(Array2::from_shape_fn((len, dim), |_| normal.sample(&mut rng)));
            }
        }
    }
    let task = build_abx_task(tokens, 56, 4).unwrap();
    assert!(task.triples.len() >= 10_000);
    let r = abx_error(&feats, &task).unwrap();
    for e in [r.within.unwrap(), r.across.unwrap()] {
        assert!((e - 0.5).abs() <= 0.02, "error {e} ({r:?})");
    }
}

#[test]
fn abx_separates_clean_categories() {
    let tokens: Vec<Token> = (0..16)
        .map(|i| Token {
            phone: i % 2,
            speaker: (i / 2) % 2,
            start: 2 * i,
            end: 2 * i + 2,
        })
        .collect();
    let feats: Vec<Array2<f64>> = tokens
        .iter()
        .map(|t| {
            let mut m = Array2::zeros((2, 2));
            m.column_mut(t.phone).fill(1.0);
            m[[0, 1 - t.phone]] = 0.1 * t.speaker as f64;
            m
        })
        .collect();
    let task = build_abx_task(tokens, 20, 0).unwrap();
    let r = abx_error(&feats, &task).unwrap();
    assert_eq!(r.within, Some(0.0));
    assert_eq!(r.across, Some(0.0));
}

#[test]
fn dtw_of_a_sequence_with_itself_is_zero() {
    let mut rng = seeded_rng(1, 1);
    let a = Array2::from_shape_fn((7, 5), |_| rng.random::<f64>() - 0.5);
    assert!(dtw_angular(&a, &a).unwrap().abs() < 1e-7);
    // Repeating frames does not change an otherwise identical alignment.
    let mut stretched = Array2::zeros((14, 5));
    for i in 0..14 {
        stretched.row_mut(i).assign(&a.row(i / 2));
    }
    assert!(dtw_angular(&a, &stretched).unwrap().abs() < 1e-7);
}

#[test]
fn kmeans_inertia_is_monotone_within_runs() {
    let mut rng = seeded_rng(8, 0);
    let x = Array2::from_shape_fn((400, 3), |_| rng.random::<f64>());
    let r = kmeans(&x, 8, 3, 2).unwrap();
    for trace in &r.traces {
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }
    let best = r.traces.iter().map(|t| *t.last().unwrap()).fold(f64::INFINITY, f64::min);
    assert_eq!(r.inertia, best);
    let direct: f64 = x
        .rows()
        .into_iter()
        .zip(&r.assignments)
        .map(|(row, &c)| (&row - &r.centroids.row(c)).mapv(|v| v * v).sum())
        .sum();
    assert!((direct - r.inertia).abs() < 1e-9 * direct);
    assert_eq!(kmeans(&x, 8, 3, 2).unwrap(), r);
}

#[test]
fn speaker_probe_reads_linear_speaker_offsets() {
    let mut rng = seeded_rng(4, 0);
    let normal = Normal::new(0.0, 0.1).unwrap();
    let n = 2000;
    let labels: Vec<usize> = (0..n).map(|i| i % 8).collect();
    let x = Array2::from_shape_fn((n, 8), |(i, j)| {
        let s = labels[i];
        (if j == s { 1.0 } else { 0.0 }) + normal.sample(&mut rng)
    });
    assert!(speaker_probe(&x, &labels, 0).unwrap() > 0.95);
}

#[test]
fn textbook_examples() {
    // Ranks differ by one in every position: 1 - 6·4 / (4·15) = 0.6.
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap() - 0.6).abs() <= 1e-12);
    // Equal variances and sizes give t = -0.5 / sqrt(2/3) with 4 degrees of
    // freedom, where the Student CDF has the closed form
    // F(t) = 1/2 + (3/4) a (1 - a²/3), a = t / sqrt(4 + t²).
    let t = -0.5 / (2.0f64 / 3.0).sqrt();
    let a = t / (4.0 + t * t).sqrt();
    let p = 2.0 * (0.5 + 0.75 * a * (1.0 - a * a / 3.0));
    assert!((ttest_two_sample(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).unwrap() - p).abs() <= 1e-9);
}

#[test]
fn spearman_ignores_monotone_transforms() {
    let x = [0.3, -1.2, 4.5, 2.2, 0.0, 9.1];
    let y = [1.0, 3.0, 2.0, 6.0, 5.0, 4.0];
    let ex: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
    let cy: Vec<f64> = y.iter().map(|v: &f64| v.powi(3)).collect();
    assert!((spearman(&x, &y).unwrap() - spearman(&ex, &cy).unwrap()).abs() < 1e-15);
}
