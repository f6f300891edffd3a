use serde::{Deserialize, Serialize};

use super::Rule;
use crate::bitset::BitSet;
use crate::dataset::{FeatureMatrix, SplitAssignment};
use crate::error::{Error, Result};

/// Row membership over the whole matrix with population counts per split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    bits: BitSet,
    discovery_count: usize,
    evaluation_count: usize,
}

impl Mask {
    pub fn new(bits: BitSet, split: &SplitAssignment) -> Mask {
        let discovery_count = bits.and_count(split.discovery_mask());
        let evaluation_count = bits.count_ones() - discovery_count;
        Mask {
            bits,
            discovery_count,
            evaluation_count,
        }
    }

    pub fn from_rows(rows: impl IntoIterator<Item = usize>, split: &SplitAssignment) -> Mask {
        Mask::new(BitSet::from_indices(split.n_rows(), rows), split)
    }

    pub fn full(split: &SplitAssignment) -> Mask {
        Mask::new(BitSet::full(split.n_rows()), split)
    }

    pub fn bits(&self) -> &BitSet {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.bits.contains(row)
    }

    pub fn count(&self) -> usize {
        self.discovery_count + self.evaluation_count
    }

    pub fn discovery_count(&self) -> usize {
        self.discovery_count
    }

    pub fn evaluation_count(&self) -> usize {
        self.evaluation_count
    }

    pub fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter()
    }

    pub fn and(&self, other: &Mask, split: &SplitAssignment) -> Mask {
        Mask::new(self.bits.and(&other.bits), split)
    }
}

/// Rows matching every predicate of `rule`.
pub fn evaluate_mask(rule: &Rule, matrix: &FeatureMatrix) -> Result<Mask> {
    let n = matrix.n_rows();
    let mut bits = BitSet::full(n);
    for (name, values) in rule.predicates() {
        let idx = matrix
            .feature_index(name)
            .ok_or_else(|| Error::UnknownFeature {
                name: name.to_string(),
                position: 0,
                suggestions: super::parse::near_matches(
                    name,
                    matrix.features().iter().map(|c| c.name.as_str()),
                ),
            })?;
        let col = matrix.feature(idx);
        let mut allowed = vec![false; col.vocabulary.len()];
        for v in values {
            let code = col.code_of(v).ok_or_else(|| Error::UnknownValue {
                feature: name.to_string(),
                value: v.clone(),
                position: 0,
                suggestions: super::parse::near_matches(
                    v,
                    col.vocabulary.iter().map(String::as_str),
                ),
            })?;
            allowed[code as usize] = true;
        }
        let mut pred = BitSet::new(n);
        col.codes.for_each(|row, c| {
            if allowed[c as usize] {
                pred.insert(row);
            }
        });
        bits.intersect_with(&pred);
    }
    Ok(Mask::new(bits, matrix.split()))
}
