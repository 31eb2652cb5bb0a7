use alloc::collections::BTreeMap;

use crate::error::{Error, Result};

/// Cramér's V between obligations and class labels, one event per
/// (obligation, label) hit.
pub fn cramers_v(events: &[(u64, usize)]) -> Result<f64> {
    cramers_v_counts(events.iter().map(|&(o, l)| (o, l, 1)))
}

/// Cramér's V from aggregated `(obligation, label, count)` cells. Repeated
/// cells are summed.
pub fn cramers_v_counts(cells: impl IntoIterator<Item = (u64, usize, u64)>) -> Result<f64> {
    let mut table: BTreeMap<(u64, usize), f64> = BTreeMap::new();
    let mut rows: BTreeMap<u64, f64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for (o, l, c) in cells {
        if c == 0 {
            continue;
        }
        let c = c as f64;
        *table.entry((o, l)).or_insert(0.0) += c;
        *rows.entry(o).or_insert(0.0) += c;
        *cols.entry(l).or_insert(0.0) += c;
    }
    let (r, c) = (rows.len(), cols.len());
    if r < 2 || c < 2 {
        return Err(Error::UndefinedAssociation(alloc::format!(
            "contingency table is {r} x {c}; need at least 2 x 2"
        )));
    }
    let n: f64 = rows.values().sum();
    // χ² = n (Σ O² / (row · col) − 1); empty cells contribute nothing to the sum.
    let s: f64 = table.iter().map(|(&(o, l), &v)| v * v / (rows[&o] * cols[&l])).sum();
    let chi2 = (n * (s - 1.0)).max(0.0);
    let v = libm::sqrt(chi2 / (n * (r.min(c) - 1) as f64));
    Ok(v.min(1.0))
}
