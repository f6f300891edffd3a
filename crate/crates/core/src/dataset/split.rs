use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitset::BitSet;
use crate::error::{Error, Result};

/// Disjoint, exhaustive partition of row ids into discovery and evaluation
/// rows. Both lists are sorted ascending.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawSplit")]
pub struct SplitAssignment {
    discovery_rows: Vec<usize>,
    evaluation_rows: Vec<usize>,
    pub seed: u64,
    pub fraction: f64,
    #[serde(default)]
    pub stratify_on: Option<String>,
    #[serde(skip)]
    is_discovery: BitSet,
}

#[derive(Deserialize)]
struct RawSplit {
    discovery_rows: Vec<usize>,
    evaluation_rows: Vec<usize>,
    seed: u64,
    fraction: f64,
    #[serde(default)]
    stratify_on: Option<String>,
}

impl TryFrom<RawSplit> for SplitAssignment {
    type Error = Error;

    fn try_from(raw: RawSplit) -> Result<Self> {
        let n = raw.discovery_rows.len() + raw.evaluation_rows.len();
        let split = SplitAssignment::from_parts(
            n,
            raw.discovery_rows,
            raw.seed,
            raw.fraction,
            raw.stratify_on,
        )?;
        if split.evaluation_rows != raw.evaluation_rows {
            return Err(Error::InvalidArgument(
                "split rows are not a partition".into(),
            ));
        }
        Ok(split)
    }
}

impl PartialEq for SplitAssignment {
    fn eq(&self, other: &Self) -> bool {
        self.discovery_rows == other.discovery_rows
            && self.evaluation_rows == other.evaluation_rows
            && self.seed == other.seed
            && self.fraction == other.fraction
            && self.stratify_on == other.stratify_on
    }
}

impl SplitAssignment {
    pub fn from_parts(
        n_rows: usize,
        mut discovery_rows: Vec<usize>,
        seed: u64,
        fraction: f64,
        stratify_on: Option<String>,
    ) -> Result<Self> {
        discovery_rows.sort_unstable();
        discovery_rows.dedup();
        if discovery_rows.last().is_some_and(|&r| r >= n_rows) {
            return Err(Error::InvalidArgument(
                "discovery row id out of range".into(),
            ));
        }
        let is_discovery = BitSet::from_indices(n_rows, discovery_rows.iter().copied());
        let evaluation_rows = (0..n_rows).filter(|&r| !is_discovery.contains(r)).collect();
        Ok(SplitAssignment {
            discovery_rows,
            evaluation_rows,
            seed,
            fraction,
            stratify_on,
            is_discovery,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.discovery_rows.len() + self.evaluation_rows.len()
    }

    pub fn discovery_rows(&self) -> &[usize] {
        &self.discovery_rows
    }

    pub fn evaluation_rows(&self) -> &[usize] {
        &self.evaluation_rows
    }

    pub fn is_discovery(&self, row: usize) -> bool {
        self.is_discovery.contains(row)
    }

    pub fn discovery_mask(&self) -> &BitSet {
        &self.is_discovery
    }
}

/// Seeded split. With `stratify`, positives and negatives are shuffled
/// separately so each side's positive count is within one row of its share.
pub fn make_split(
    n_rows: usize,
    seed: u64,
    fraction: f64,
    stratify: Option<(&str, &[u8])>,
) -> Result<SplitAssignment> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n_disc = (fraction * n_rows as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let discovery = match stratify {
        None => {
            let mut rows: Vec<usize> = (0..n_rows).collect();
            rows.shuffle(&mut rng);
            rows.truncate(n_disc);
            rows
        }
        Some((name, y)) => {
            if y.len() != n_rows {
                return Err(Error::InvalidArgument(format!(
                    "stratification outcome {name:?} has {} rows, expected {n_rows}",
                    y.len()
                )));
            }
            let mut pos: Vec<usize> = (0..n_rows).filter(|&i| y[i] != 0).collect();
            let mut neg: Vec<usize> = (0..n_rows).filter(|&i| y[i] == 0).collect();
            pos.shuffle(&mut rng);
            neg.shuffle(&mut rng);
            let mut n_pos = ((fraction * pos.len() as f64).round() as usize).min(n_disc);
            let mut n_neg = n_disc - n_pos;
            if n_neg > neg.len() {
                n_neg = neg.len();
                n_pos = n_disc - n_neg;
            }
            pos.truncate(n_pos);
            neg.truncate(n_neg);
            pos.extend(neg);
            pos
        }
    };
    SplitAssignment::from_parts(
        n_rows,
        discovery,
        seed,
        fraction,
        stratify.map(|(name, _)| name.to_string()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_are_disjoint_and_exhaustive() {
        let s = make_split(10, 1, 0.5, None).unwrap();
        assert_eq!(s.discovery_rows().len(), 5);
        assert_eq!(s.evaluation_rows().len(), 5);
        let mut all: Vec<usize> = s
            .discovery_rows()
            .iter()
            .chain(s.evaluation_rows())
            .copied()
            .collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_for_same_inputs() {
        assert_eq!(
            make_split(100, 9, 0.3, None).unwrap(),
            make_split(100, 9, 0.3, None).unwrap()
        );
        assert_ne!(
            make_split(100, 9, 0.3, None).unwrap().discovery_rows(),
            make_split(100, 10, 0.3, None).unwrap().discovery_rows()
        );
    }

    #[test]
    fn stratified_positive_counts_within_one_row() {
        let y: Vec<u8> = (0..1000).map(|i| (i % 10 == 0) as u8).collect();
        for seed in 0..5 {
            let s = make_split(1000, seed, 0.5, Some(("y", &y))).unwrap();
            let disc_pos = s.discovery_rows().iter().filter(|&&r| y[r] == 1).count();
            let eval_pos = s.evaluation_rows().iter().filter(|&&r| y[r] == 1).count();
            assert!(disc_pos.abs_diff(50) <= 1, "{disc_pos}");
            assert!(eval_pos.abs_diff(50) <= 1, "{eval_pos}");
            assert_eq!(s.discovery_rows().len(), 500);
        }
    }

    #[test]
    fn fraction_outside_unit_interval_rejected() {
        for f in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(make_split(10, 0, f, None).is_err());
        }
    }
}
