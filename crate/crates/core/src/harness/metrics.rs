use std::collections::BTreeMap;

use serde::Serialize;

use super::HarnessError;

fn check_lengths(predictions: &[f64], actuals: &[f64]) -> Result<(), HarnessError> {
    if predictions.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    if predictions.len() != actuals.len() {
        return Err(HarnessError::LengthMismatch {
            left: predictions.len(),
            right: actuals.len(),
        });
    }
    Ok(())
}

pub fn mae(predictions: &[f64], actuals: &[f64]) -> Result<f64, HarnessError> {
    check_lengths(predictions, actuals)?;
    Ok(predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / predictions.len() as f64)
}

pub fn mse(predictions: &[f64], actuals: &[f64]) -> Result<f64, HarnessError> {
    check_lengths(predictions, actuals)?;
    Ok(predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / predictions.len() as f64)
}

/// Average ranks (1-based), ties share their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks. Two
/// constant vectors correlate perfectly; one constant vector against a
/// varying one gives 0.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    if ra == rb {
        return 1.0;
    }
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    match (va == 0.0, vb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0),
    }
}

/// Indices of the `k` largest-magnitude entries, ties by lower index.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub group: f64,
    pub n_rows: usize,
    pub mae: f64,
    pub mean_signed_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupFairnessReport {
    /// Per group in ascending label order.
    pub groups: Vec<GroupStats>,
    /// Largest pairwise gap between group mean signed errors.
    pub disparity: f64,
}

impl GroupFairnessReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,n_rows,mae,mean_signed_error\n");
        for g in &self.groups {
            out.push_str(&format!(
                "{},{},{},{}\n",
                g.group, g.n_rows, g.mae, g.mean_signed_error
            ));
        }
        out.push_str(&format!("disparity,,,{}\n", self.disparity));
        out
    }
}

/// Signed error is prediction minus actual.
pub fn group_disparity(
    predictions: &[f64],
    actuals: &[f64],
    group_labels: &[f64],
) -> Result<GroupFairnessReport, HarnessError> {
    check_lengths(predictions, actuals)?;
    if group_labels.len() != predictions.len() {
        return Err(HarnessError::LengthMismatch {
            left: predictions.len(),
            right: group_labels.len(),
        });
    }
    let mut by_group: BTreeMap<u64, (f64, Vec<usize>)> = BTreeMap::new();
    for (i, &g) in group_labels.iter().enumerate() {
        if !g.is_finite() {
            return Err(HarnessError::Invalid(format!("row {i} has no group label")));
        }
        // order groups by value: map to an order-preserving key
        let key = ordered_key(g);
        by_group.entry(key).or_insert((g, Vec::new())).1.push(i);
    }
    if by_group.len() < 2 {
        return Err(HarnessError::Invalid(format!(
            "need at least 2 groups, found {}",
            by_group.len()
        )));
    }
    let groups: Vec<GroupStats> = by_group
        .into_values()
        .map(|(group, rows)| {
            let n = rows.len() as f64;
            let signed: f64 = rows.iter().map(|&i| predictions[i] - actuals[i]).sum();
            let abs: f64 = rows.iter().map(|&i| (predictions[i] - actuals[i]).abs()).sum();
            GroupStats {
                group,
                n_rows: rows.len(),
                mae: abs / n,
                mean_signed_error: signed / n,
            }
        })
        .collect();
    let mut disparity: f64 = 0.0;
    for a in &groups {
        for b in &groups {
            disparity = disparity.max((a.mean_signed_error - b.mean_signed_error).abs());
        }
    }
    Ok(GroupFairnessReport { groups, disparity })
}

fn ordered_key(v: f64) -> u64 {
    let v = if v == 0.0 { 0.0 } else { v };
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}
