use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{fmt_num, AttributeKind, CaseTable, LogError, Result, Value};

/// How to cut one numeric attribute into intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Binning {
    /// `k` bins holding (as near as possible) the same number of distinct
    /// values.
    EqualFrequency { k: usize },
    /// Upper-inclusive cut points: `(-inf, b0], (b0, b1], ..., (bn, +inf)`.
    Boundaries { boundaries: Vec<f64> },
}

/// Interval boundaries and the label assigned to each interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    pub boundaries: Vec<f64>,
    pub labels: Vec<String>,
}

impl Bins {
    pub fn index_of(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&b| b < x)
    }
}

/// Cut points between `k` groups of consecutive distinct values. Group
/// sizes differ by at most one, larger groups first.
fn equal_frequency_boundaries(distinct: &[f64], k: usize) -> Vec<f64> {
    let n = distinct.len();
    let k = k.min(n);
    if k <= 1 {
        return Vec::new();
    }
    let (base, extra) = (n / k, n % k);
    let mut cuts = Vec::with_capacity(k - 1);
    let mut end = 0;
    for g in 0..k - 1 {
        end += base + usize::from(g < extra);
        cuts.push((distinct[end - 1] + distinct[end]) / 2.0);
    }
    cuts
}

/// Labels built from the values observed in each bin: `[lo-hi]` (or `[v]`
/// for a single value), and `>x` for the top open bin where `x` is the
/// largest value observed in the bin just below it (or the cut point when
/// that bin is empty).
fn labels(boundaries: &[f64], values: &[f64]) -> Vec<String> {
    let nbins = boundaries.len() + 1;
    let mut lo = vec![f64::INFINITY; nbins];
    let mut hi = vec![f64::NEG_INFINITY; nbins];
    for &x in values {
        let b = boundaries.partition_point(|&c| c < x);
        lo[b] = lo[b].min(x);
        hi[b] = hi[b].max(x);
    }
    (0..nbins)
        .map(|b| {
            let top = b == nbins - 1 && b > 0;
            if top {
                let edge = if hi[b - 1].is_finite() {
                    hi[b - 1]
                } else {
                    boundaries[b - 1]
                };
                return format!(">{}", fmt_num(edge));
            }
            if lo[b] > hi[b] {
                let left = if b == 0 {
                    "-inf".to_string()
                } else {
                    fmt_num(boundaries[b - 1])
                };
                let right = boundaries
                    .get(b)
                    .map_or("+inf".to_string(), |&x| fmt_num(x));
                return format!("({left}-{right}]");
            }
            if lo[b] == hi[b] {
                format!("[{}]", fmt_num(lo[b]))
            } else {
                format!("[{}-{}]", fmt_num(lo[b]), fmt_num(hi[b]))
            }
        })
        .collect()
}

/// Replaces the named numeric features by interval labels. The original
/// numbers are kept alongside the labels; missing values stay missing and
/// read as the `missing` label.
pub fn discretize(table: &CaseTable, spec: &BTreeMap<String, Binning>) -> Result<CaseTable> {
    let mut out = table.clone();
    for (name, binning) in spec {
        let a = table
            .attribute_index(name)
            .ok_or_else(|| LogError::UnknownAttribute(name.clone()))?;
        if table.schema[a].kind != AttributeKind::Numeric {
            return Err(LogError::NotNumeric(name.clone()));
        }
        let values: Vec<f64> = table
            .rows
            .iter()
            .filter_map(|r| r.features[a].numeric())
            .collect();
        let boundaries = match binning {
            Binning::EqualFrequency { k } => {
                if *k < 2 {
                    return Err(LogError::BinCount {
                        attribute: name.clone(),
                        k: *k,
                    });
                }
                let mut distinct = values.clone();
                distinct.sort_by(f64::total_cmp);
                distinct.dedup();
                if distinct.is_empty() {
                    let msg = format!("attribute {name:?}: no numeric values, using a single bin");
                    log::warn!("{msg}");
                    out.warnings.push(msg);
                } else if distinct.len() == 1 {
                    let msg =
                        format!("attribute {name:?}: all values identical, using a single bin");
                    log::warn!("{msg}");
                    out.warnings.push(msg);
                } else if distinct.len() < *k {
                    let msg = format!(
                        "attribute {name:?}: only {} distinct values for {k} bins",
                        distinct.len()
                    );
                    log::warn!("{msg}");
                    out.warnings.push(msg);
                }
                equal_frequency_boundaries(&distinct, *k)
            }
            Binning::Boundaries { boundaries } => {
                let ok = boundaries.iter().all(|b| b.is_finite())
                    && boundaries.windows(2).all(|w| w[0] < w[1]);
                if !ok {
                    return Err(LogError::Boundaries(name.clone()));
                }
                boundaries.clone()
            }
        };
        let bins = Bins {
            labels: labels(&boundaries, &values),
            boundaries,
        };
        for row in &mut out.rows {
            if let Some(x) = row.features[a].numeric() {
                row.features[a] = Value::Binned {
                    label: bins.labels[bins.index_of(x)].clone(),
                    raw: x,
                };
            }
        }
        out.bins.insert(name.clone(), bins);
    }
    Ok(out)
}
