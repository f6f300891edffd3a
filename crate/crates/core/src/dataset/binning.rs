use serde::{Deserialize, Serialize};

use super::{Codes, ColumnOrigin, FeatureColumn, MISSING};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum BinStrategy {
    EqualWidth {
        k: usize,
    },
    Quantile {
        k: usize,
    },
    /// Interior cut points, optionally with one label per resulting bin.
    Edges {
        edges: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
}

impl Default for BinStrategy {
    fn default() -> Self {
        BinStrategy::Quantile { k: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct Binned {
    pub column: FeatureColumn,
    pub warning: Option<String>,
}

pub fn bin_continuous(name: &str, values: &[f64], strategy: &BinStrategy) -> Result<Binned> {
    let opt: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
    bin_optional(name, &opt, strategy)
}

/// Bins values where `None` marks a missing entry; missing entries get an
/// extra trailing category.
pub fn bin_optional(name: &str, values: &[Option<f64>], strategy: &BinStrategy) -> Result<Binned> {
    for (row, v) in values.iter().enumerate() {
        if let Some(v) = v {
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row,
                    column: name.to_string(),
                    message: format!("non-finite value {v}"),
                });
            }
        }
    }
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let mut warning = None;

    let (edges, labels) = match strategy {
        BinStrategy::EqualWidth { k } => {
            if *k < 2 {
                return Err(Error::InvalidArgument(format!(
                    "equal-width binning needs k >= 2, got {k}"
                )));
            }
            let (lo, hi) = min_max(&present);
            let w = (hi - lo) / *k as f64;
            let edges: Vec<f64> = (1..*k).map(|i| lo + w * i as f64).collect();
            (clean_edges(edges, lo), None)
        }
        BinStrategy::Quantile { k } => {
            if *k < 2 {
                return Err(Error::InvalidArgument(format!(
                    "quantile binning needs k >= 2, got {k}"
                )));
            }
            let mut sorted = present.clone();
            sorted.sort_by(f64::total_cmp);
            let lo = sorted.first().copied().unwrap_or(0.0);
            let edges: Vec<f64> = (1..*k)
                .map(|i| quantile(&sorted, i as f64 / *k as f64))
                .collect();
            (clean_edges(edges, lo), None)
        }
        BinStrategy::Edges { edges, labels } => {
            if edges.is_empty() {
                return Err(Error::InvalidArgument(
                    "explicit binning needs at least one edge".into(),
                ));
            }
            if edges.windows(2).any(|w| w[0] >= w[1]) || edges.iter().any(|e| !e.is_finite()) {
                return Err(Error::InvalidArgument(
                    "explicit bin edges must be finite and strictly increasing".into(),
                ));
            }
            if let Some(l) = labels {
                if l.len() != edges.len() + 1 {
                    return Err(Error::InvalidArgument(format!(
                        "{} edges need {} labels, got {}",
                        edges.len(),
                        edges.len() + 1,
                        l.len()
                    )));
                }
            }
            (edges.clone(), labels.clone())
        }
    };

    let degenerate = edges.is_empty();
    if degenerate {
        warning = Some(format!(
            "column {name:?} is constant; binned into a single category"
        ));
    }
    let mut vocabulary = labels.unwrap_or_else(|| interval_labels(&edges, &present));
    let has_missing = values.iter().any(Option::is_none);
    let missing_code = vocabulary.len() as u32;
    if has_missing {
        vocabulary.push(MISSING.to_string());
    }
    let codes: Vec<u32> = values
        .iter()
        .map(|v| match v {
            Some(v) => edges.partition_point(|e| *e <= *v) as u32,
            None => missing_code,
        })
        .collect();
    let column = FeatureColumn::new(
        name,
        Codes::from_vec(codes),
        vocabulary,
        ColumnOrigin::Binned { edges },
    )?;
    Ok(Binned { column, warning })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 0.0)
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Drops edges that would leave the first bin empty and collapses duplicates.
fn clean_edges(mut edges: Vec<f64>, lo: f64) -> Vec<f64> {
    edges.retain(|e| *e > lo);
    edges.dedup_by(|a, b| a <= b);
    edges
}

fn fmt_num(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    format!("{r}")
}

fn interval_labels(edges: &[f64], present: &[f64]) -> Vec<String> {
    if edges.is_empty() {
        let (lo, hi) = min_max(present);
        return vec![if lo == hi {
            fmt_num(lo)
        } else {
            format!("[{}, {}]", fmt_num(lo), fmt_num(hi))
        }];
    }
    let mut out = Vec::with_capacity(edges.len() + 1);
    out.push(format!("<{}", fmt_num(edges[0])));
    for w in edges.windows(2) {
        out.push(format!("[{}, {})", fmt_num(w[0]), fmt_num(w[1])));
    }
    out.push(format!(">={}", fmt_num(*edges.last().unwrap())));
    out
}
