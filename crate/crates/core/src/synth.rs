//! Seeded synthetic tables for tests, benchmarks and demos.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Codes, ColumnOrigin, FeatureColumn, FeatureMatrix, OutcomeVector};
use crate::error::{Error, Result};
use crate::rules::Rule;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedGroup {
    /// Number of predicates of the planted rule.
    pub length: usize,
    /// Fraction of rows forced to satisfy the rule.
    pub size: f64,
    /// Outcome rate among rows satisfying the rule.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTable {
    pub n_rows: usize,
    pub n_features: usize,
    /// Values per feature.
    pub vocab: usize,
    pub groups: Vec<PlantedGroup>,
    pub base_rate: f64,
    pub seed: u64,
}

impl PlantedTable {
    pub fn new(n_rows: usize, n_features: usize, groups: Vec<PlantedGroup>, seed: u64) -> Self {
        PlantedTable {
            n_rows,
            n_features,
            vocab: 4,
            groups,
            base_rate: 0.1,
            seed,
        }
    }
}

const VALUES: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

/// Categorical table with rules planted on disjoint feature sets. Rows
/// matching a planted rule draw the outcome `y` at that rule's rate, all
/// others at the base rate. Returns the matrix (default split) and the
/// planted rules.
pub fn planted_table(spec: &PlantedTable) -> Result<(FeatureMatrix, Vec<Rule>)> {
    let needed: usize = spec.groups.iter().map(|g| g.length).sum();
    if needed > spec.n_features {
        return Err(Error::InvalidArgument(format!(
            "{needed} planted predicates need at least that many features, got {}",
            spec.n_features
        )));
    }
    if !(2..=VALUES.len()).contains(&spec.vocab) {
        return Err(Error::InvalidArgument(format!(
            "vocab must be in 2..=8, got {}",
            spec.vocab
        )));
    }
    let total_size: f64 = spec.groups.iter().map(|g| g.size).sum();
    if total_size > 1.0 {
        return Err(Error::InvalidArgument(
            "planted sizes exceed the table".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_rows;
    let v = spec.vocab as u8;
    let mut cols: Vec<Vec<u8>> = (0..spec.n_features)
        .map(|_| (0..n).map(|_| rng.gen_range(0..v)).collect())
        .collect();

    let mut feats: Vec<usize> = (0..spec.n_features).collect();
    feats.shuffle(&mut rng);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    let mut planted: Vec<Vec<(usize, u8)>> = Vec::new();
    let mut next_feat = 0;
    let mut next_row = 0;
    for g in &spec.groups {
        let preds: Vec<(usize, u8)> = feats[next_feat..next_feat + g.length]
            .iter()
            .map(|&f| (f, rng.gen_range(0..v)))
            .collect();
        next_feat += g.length;
        let take = (g.size * n as f64).round() as usize;
        for &r in &rows[next_row..(next_row + take).min(n)] {
            for &(f, c) in &preds {
                cols[f][r] = c;
            }
        }
        next_row += take;
        planted.push(preds);
    }

    let y: Vec<u8> = (0..n)
        .map(|r| {
            let rate = spec
                .groups
                .iter()
                .zip(&planted)
                .filter(|(_, preds)| preds.iter().all(|&(f, c)| cols[f][r] == c))
                .map(|(g, _)| g.rate)
                .fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.max(b))))
                .unwrap_or(spec.base_rate);
            rng.gen_bool(rate) as u8
        })
        .collect();

    let vocabulary: Vec<String> = VALUES[..spec.vocab].iter().map(|s| s.to_string()).collect();
    let width = spec.n_features.to_string().len();
    let name = |f: usize| format!("x{f:0width$}");
    let features = cols
        .into_iter()
        .enumerate()
        .map(|(f, c)| {
            FeatureColumn::new(
                name(f),
                Codes::from_vec(c.into_iter().map(u32::from).collect()),
                vocabulary.clone(),
                ColumnOrigin::Categorical,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let rules = planted
        .iter()
        .map(|preds| Rule::from_pairs(preds.iter().map(|&(f, c)| (name(f), VALUES[c as usize]))))
        .collect::<Result<Vec<_>>>()?;
    let mut outcomes = IndexMap::new();
    outcomes.insert("y".to_string(), OutcomeVector::Binary(y));
    let matrix = FeatureMatrix::with_default_split(features, outcomes, spec.seed)?;
    Ok((matrix, rules))
}

/// Sparse binary matrix resembling a bag-of-words table: feature
/// frequencies are log-uniform in `[0.0005, 0.05]`. The outcome `y` is
/// likelier when any of a handful of moderately common features is present.
pub fn sparse_binary(n_rows: usize, n_features: usize, seed: u64) -> Result<FeatureMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (0.0005f64.ln(), 0.05f64.ln());
    let freqs: Vec<f64> = (0..n_features)
        .map(|_| rng.gen_range(lo..hi).exp())
        .collect();
    let mut by_freq: Vec<usize> = (0..n_features).collect();
    by_freq.sort_by(|&a, &b| freqs[b].total_cmp(&freqs[a]).then(a.cmp(&b)));
    let signal: Vec<usize> = by_freq
        .iter()
        .copied()
        .skip(n_features / 20)
        .take(5.min(n_features))
        .collect();

    let mut flagged = vec![false; n_rows];
    let width = n_features.saturating_sub(1).to_string().len();
    let mut features = Vec::with_capacity(n_features);
    for (f, &p) in freqs.iter().enumerate() {
        let mut entries = Vec::new();
        // Geometric gaps between successive ones.
        let ln_q = (1.0 - p).ln();
        let mut r = 0usize;
        loop {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            r += (u.ln() / ln_q).floor() as usize;
            if r >= n_rows {
                break;
            }
            entries.push((r as u32, 1u32));
            r += 1;
        }
        if signal.contains(&f) {
            for &(r, _) in &entries {
                flagged[r as usize] = true;
            }
        }
        features.push(FeatureColumn::new(
            format!("w{f:0width$}"),
            Codes::sparse(n_rows, 0, entries),
            vec!["0".into(), "1".into()],
            ColumnOrigin::Categorical,
        )?);
    }
    let y: Vec<u8> = flagged
        .iter()
        .map(|&s| rng.gen_bool(if s { 0.7 } else { 0.15 }) as u8)
        .collect();
    let mut outcomes = IndexMap::new();
    outcomes.insert("y".to_string(), OutcomeVector::Binary(y));
    FeatureMatrix::with_default_split(features, outcomes, seed)
}

/// Dense binary matrix with per-feature frequencies uniform in
/// `[0.05, 0.5]`. The outcome `y` has rate 0.85 where the first two features
/// are both 1 and 0.2 elsewhere.
pub fn binary_matrix(n_rows: usize, n_features: usize, seed: u64) -> Result<FeatureMatrix> {
    if n_features < 2 {
        return Err(Error::InvalidArgument(
            "binary_matrix needs at least two features".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_features.saturating_sub(1).to_string().len();
    let mut cols: Vec<Vec<u8>> = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        let p: f64 = rng.gen_range(0.05..0.5);
        let threshold = (p * u32::MAX as f64) as u32;
        cols.push(
            (0..n_rows)
                .map(|_| (rng.gen::<u32>() < threshold) as u8)
                .collect(),
        );
    }
    let y: Vec<u8> = (0..n_rows)
        .map(|r| {
            rng.gen_bool(if cols[0][r] == 1 && cols[1][r] == 1 {
                0.85
            } else {
                0.2
            }) as u8
        })
        .collect();
    let features = cols
        .into_iter()
        .enumerate()
        .map(|(f, c)| {
            FeatureColumn::new(
                format!("b{f:0width$}"),
                Codes::from_vec(c.into_iter().map(u32::from).collect()),
                vec!["0".into(), "1".into()],
                ColumnOrigin::Categorical,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut outcomes = IndexMap::new();
    outcomes.insert("y".to_string(), OutcomeVector::Binary(y));
    FeatureMatrix::with_default_split(features, outcomes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::evaluate_mask;

    #[test]
    fn planted_rule_has_requested_size_and_rate() {
        let spec = PlantedTable::new(
            4000,
            8,
            vec![PlantedGroup {
                length: 3,
                size: 0.1,
                rate: 0.9,
            }],
            3,
        );
        let (m, rules) = planted_table(&spec).unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].len(), 3);
        let mask = evaluate_mask(&rules[0], &m).unwrap();
        let frac = mask.count() as f64 / 4000.0;
        assert!((0.1..0.13).contains(&frac), "{frac}");
        let OutcomeVector::Binary(y) = m.outcome("y").unwrap() else {
            panic!()
        };
        let pos = mask.rows().filter(|&r| y[r] == 1).count() as f64;
        assert!((pos / mask.count() as f64 - 0.9).abs() < 0.05);
    }

    #[test]
    fn sparse_binary_density() {
        let m = sparse_binary(2000, 300, 1).unwrap();
        assert_eq!(m.n_features(), 300);
        let nnz: usize = m
            .features()
            .iter()
            .map(|c| (0..c.len()).filter(|&r| c.codes.get(r) == 1).count())
            .sum();
        let per_row = nnz as f64 / 2000.0;
        assert!((1.0..8.0).contains(&per_row), "{per_row}");
    }

    #[test]
    fn generators_are_seeded() {
        let a = binary_matrix(200, 5, 9).unwrap();
        let b = binary_matrix(200, 5, 9).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
