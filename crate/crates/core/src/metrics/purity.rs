use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Joint phone × code frame counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    counts: Array2<u64>,
    phone_totals: Vec<u64>,
    code_totals: Vec<u64>,
    total: u64,
}

impl ContingencyTable {
    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        let phone_totals: Vec<u64> = counts.rows().into_iter().map(|r| r.sum()).collect();
        let code_totals: Vec<u64> = counts.columns().into_iter().map(|c| c.sum()).collect();
        let total = phone_totals.iter().sum();
        if total == 0 {
            return Err(Error::Undefined("contingency table has no frames"));
        }
        Ok(Self {
            counts,
            phone_totals,
            code_totals,
            total,
        })
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn phone_totals(&self) -> &[u64] {
        &self.phone_totals
    }

    pub fn code_totals(&self) -> &[u64] {
        &self.code_totals
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_phones(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_codes(&self) -> usize {
        self.counts.ncols()
    }
}

/// `counts[i, k]` = number of frames with phone `i` and code `k`.
pub fn contingency(code_ids: &[usize], phone_labels: &[usize], n_phones: usize, k: usize) -> Result<ContingencyTable> {
    if code_ids.len() != phone_labels.len() {
        return Err(Error::DimensionMismatch {
            context: "code ids vs phone labels",
            expected: phone_labels.len(),
            found: code_ids.len(),
        });
    }
    let mut counts = Array2::zeros((n_phones, k));
    for (&c, &p) in code_ids.iter().zip(phone_labels) {
        if c >= k {
            return Err(Error::IdOutOfRange { id: c, bound: k });
        }
        if p >= n_phones {
            return Err(Error::IdOutOfRange { id: p, bound: n_phones });
        }
        counts[[p, c]] += 1;
    }
    ContingencyTable::from_counts(counts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PurityMetrics {
    pub cluster_purity: f64,
    pub phone_purity: f64,
    pub pnmi: f64,
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Phone purity `Σ_k p(k) max_i p(i|k)`, cluster purity
/// `Σ_i p(i) max_k p(k|i)` and PNMI `I(phone; code) / H(phone)`.
pub fn purity_metrics(table: &ContingencyTable) -> Result<PurityMetrics> {
    let n = table.total as f64;
    let h_phone = -compensated_sum(table.phone_totals.iter().map(|&c| plogp(c as f64 / n)));
    if h_phone <= 0.0 || table.phone_totals.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Undefined("PNMI undefined: only one phone occurs"));
    }
    let h_code = -compensated_sum(table.code_totals.iter().map(|&c| plogp(c as f64 / n)));
    let h_joint = -compensated_sum(table.counts.iter().map(|&c| plogp(c as f64 / n)));
    let mutual = (h_phone + h_code - h_joint).max(0.0);

    let phone_purity = table
        .counts
        .columns()
        .into_iter()
        .map(|c| c.iter().copied().max().unwrap_or(0))
        .sum::<u64>() as f64
        / n;
    let cluster_purity = table
        .counts
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum::<u64>() as f64
        / n;
    Ok(PurityMetrics {
        cluster_purity,
        phone_purity,
        pnmi: (mutual / h_phone).min(1.0),
    })
}

/// `P(phone | code)` with phones ordered by descending frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    /// `values[r, k]` for the phone at `phone_order[r]`.
    pub values: Array2<f64>,
    pub phone_order: Vec<usize>,
    /// Codes that no frame maps to; their columns are zero.
    pub unused_codes: Vec<usize>,
}

impl Heatmap {
    /// Number of codes whose most likely phone is `phone`.
    pub fn codes_for_phone(&self, phone: usize) -> usize {
        let Some(row) = self.phone_order.iter().position(|&p| p == phone) else {
            return 0;
        };
        self.values
            .columns()
            .into_iter()
            .enumerate()
            .filter(|(k, _)| !self.unused_codes.contains(k))
            .filter(|(_, c)| {
                let best = c
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
                best.0 == row
            })
            .count()
    }
}

pub fn code_phone_heatmap(table: &ContingencyTable) -> Heatmap {
    let mut order: Vec<usize> = (0..table.n_phones()).collect();
    // Stable sort keeps ties in phone-id order.
    order.sort_by(|&a, &b| table.phone_totals[b].cmp(&table.phone_totals[a]));
    let mut values = Array2::zeros((table.n_phones(), table.n_codes()));
    let mut unused = Vec::new();
    for k in 0..table.n_codes() {
        let total = table.code_totals[k];
        if total == 0 {
            unused.push(k);
            continue;
        }
        for (r, &p) in order.iter().enumerate() {
            values[[r, k]] = table.counts[[p, k]] as f64 / total as f64;
        }
    }
    Heatmap {
        values,
        phone_order: order,
        unused_codes: unused,
    }
}
