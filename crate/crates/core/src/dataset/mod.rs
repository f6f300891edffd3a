//! Discrete-coded feature tables, outcome vectors and the discovery/evaluation
//! split.

mod binning;
mod codes;
mod load;
mod schema;
mod split;

use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

pub use binning::{bin_continuous, bin_optional, BinStrategy, Binned};
pub use codes::Codes;
pub use load::{load_table, load_table_from_reader};
pub use schema::{ColumnRole, ColumnSpec, ColumnType, Schema, SplitSpec};
pub use split::{make_split, SplitAssignment};

use crate::error::{Error, Result};

/// Vocabulary label for absent feature values.
pub const MISSING: &str = "⟨missing⟩";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnOrigin {
    Categorical,
    /// Interior cut points; bin `i` holds values in `[edges[i-1], edges[i])`.
    Binned {
        edges: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub codes: Codes,
    pub vocabulary: Vec<String>,
    pub origin: ColumnOrigin,
}

impl FeatureColumn {
    pub fn new(
        name: impl Into<String>,
        codes: Codes,
        vocabulary: Vec<String>,
        origin: ColumnOrigin,
    ) -> Result<Self> {
        let col = FeatureColumn {
            name: name.into(),
            codes,
            vocabulary,
            origin,
        };
        col.validate()?;
        Ok(col)
    }

    /// Codes labels in first-appearance order.
    pub fn from_labels<S: AsRef<str>>(name: impl Into<String>, labels: &[S]) -> Result<Self> {
        let mut vocab: Vec<String> = Vec::new();
        let mut lookup: FxHashMap<&str, u32> = FxHashMap::default();
        let mut codes = Vec::with_capacity(labels.len());
        for l in labels {
            let l = l.as_ref();
            let code = *lookup.entry(l).or_insert_with(|| {
                vocab.push(l.to_string());
                (vocab.len() - 1) as u32
            });
            codes.push(code);
        }
        Self::new(
            name,
            Codes::from_vec(codes),
            vocab,
            ColumnOrigin::Categorical,
        )
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.len() == 0
    }

    pub fn code_of(&self, value: &str) -> Option<u32> {
        self.vocabulary
            .iter()
            .position(|v| v == value)
            .map(|p| p as u32)
    }

    pub fn label(&self, code: u32) -> &str {
        &self.vocabulary[code as usize]
    }

    fn validate(&self) -> Result<()> {
        if self.vocabulary.is_empty() && !self.codes.is_empty() {
            return Err(Error::Schema(format!(
                "feature {:?} has an empty vocabulary",
                self.name
            )));
        }
        if let Some(max) = self.codes.max_code() {
            if max as usize >= self.vocabulary.len() {
                return Err(Error::Schema(format!(
                    "feature {:?} has code {} outside vocabulary of size {}",
                    self.name,
                    max,
                    self.vocabulary.len()
                )));
            }
        }
        if let ColumnOrigin::Binned { edges } = &self.origin {
            if edges.windows(2).any(|w| w[0] >= w[1]) || edges.iter().any(|e| !e.is_finite()) {
                return Err(Error::Schema(format!(
                    "feature {:?} has non-increasing bin edges",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum OutcomeVector {
    Binary(Vec<u8>),
    Continuous(Vec<f64>),
}

impl OutcomeVector {
    pub fn binary_from_bools(v: &[bool]) -> Self {
        OutcomeVector::Binary(v.iter().map(|&b| b as u8).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            OutcomeVector::Binary(v) => v.len(),
            OutcomeVector::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, OutcomeVector::Binary(_))
    }

    pub fn value(&self, row: usize) -> f64 {
        match self {
            OutcomeVector::Binary(v) => v[row] as f64,
            OutcomeVector::Continuous(v) => v[row],
        }
    }
}

/// Immutable N×M table of discrete codes plus named outcomes and the split.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    n_rows: usize,
    features: Arc<Vec<FeatureColumn>>,
    outcomes: IndexMap<String, OutcomeVector>,
    split: SplitAssignment,
    by_name: Arc<FxHashMap<String, usize>>,
}

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    n_rows: usize,
    features: Vec<FeatureColumn>,
    outcomes: IndexMap<String, OutcomeVector>,
    split: SplitAssignment,
}

impl FeatureMatrix {
    pub fn new(
        features: Vec<FeatureColumn>,
        outcomes: IndexMap<String, OutcomeVector>,
        split: SplitAssignment,
    ) -> Result<Self> {
        let n_rows = split.n_rows();
        let mut by_name = FxHashMap::default();
        for (i, f) in features.iter().enumerate() {
            f.validate()?;
            if f.len() != n_rows {
                return Err(Error::Schema(format!(
                    "feature {:?} has {} rows, expected {}",
                    f.name,
                    f.len(),
                    n_rows
                )));
            }
            if f.vocabulary.is_empty() {
                return Err(Error::Schema(format!(
                    "feature {:?} has an empty vocabulary",
                    f.name
                )));
            }
            if by_name.insert(f.name.clone(), i).is_some() {
                return Err(Error::Schema(format!(
                    "duplicate feature name {:?}",
                    f.name
                )));
            }
        }
        for (name, o) in &outcomes {
            if o.len() != n_rows {
                return Err(Error::Schema(format!(
                    "outcome {:?} has {} rows, expected {}",
                    name,
                    o.len(),
                    n_rows
                )));
            }
            match o {
                OutcomeVector::Binary(v) if v.iter().any(|&b| b > 1) => {
                    return Err(Error::Schema(format!(
                        "binary outcome {name:?} contains values other than 0/1"
                    )));
                }
                OutcomeVector::Continuous(v) if v.iter().any(|x| !x.is_finite()) => {
                    return Err(Error::Schema(format!(
                        "continuous outcome {name:?} contains non-finite values"
                    )));
                }
                _ => {}
            }
        }
        Ok(FeatureMatrix {
            n_rows,
            features: Arc::new(features),
            outcomes,
            split,
            by_name: Arc::new(by_name),
        })
    }

    /// Builds a matrix with the default split: half the rows, stratified on
    /// the first binary outcome when there is one.
    pub fn with_default_split(
        features: Vec<FeatureColumn>,
        outcomes: IndexMap<String, OutcomeVector>,
        seed: u64,
    ) -> Result<Self> {
        let n = features
            .first()
            .map(|f| f.len())
            .or_else(|| outcomes.values().next().map(|o| o.len()))
            .unwrap_or(0);
        let strat = outcomes.iter().find_map(|(name, o)| match o {
            OutcomeVector::Binary(v) => Some((name.clone(), v.clone())),
            _ => None,
        });
        let split = match &strat {
            Some((name, v)) => make_split(n, seed, 0.5, Some((name.as_str(), v.as_slice())))?,
            None => make_split(n, seed, 0.5, None)?,
        };
        Self::new(features, outcomes, split)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[FeatureColumn] {
        &self.features
    }

    pub fn feature(&self, idx: usize) -> &FeatureColumn {
        &self.features[idx]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn outcomes(&self) -> &IndexMap<String, OutcomeVector> {
        &self.outcomes
    }

    pub fn outcome(&self, name: &str) -> Result<&OutcomeVector> {
        self.outcomes
            .get(name)
            .ok_or_else(|| Error::UnknownOutcome(name.to_string()))
    }

    pub fn split(&self) -> &SplitAssignment {
        &self.split
    }

    /// Returns a copy of the matrix with an additional (or replaced) outcome.
    /// Shares the feature columns.
    pub fn with_outcome(&self, name: &str, outcome: OutcomeVector) -> Result<Self> {
        if outcome.len() != self.n_rows {
            return Err(Error::Schema(format!(
                "outcome {name:?} has {} rows, expected {}",
                outcome.len(),
                self.n_rows
            )));
        }
        let mut next = self.clone();
        next.outcomes.insert(name.to_string(), outcome);
        Ok(next)
    }

    pub fn with_split(&self, split: SplitAssignment) -> Result<Self> {
        if split.n_rows() != self.n_rows {
            return Err(Error::Schema("split does not cover every row".into()));
        }
        let mut next = self.clone();
        next.split = split;
        Ok(next)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MatrixFile {
            n_rows: self.n_rows,
            features: self.features.as_ref().clone(),
            outcomes: self.outcomes.clone(),
            split: self.split.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MatrixFile = serde_json::from_str(text)?;
        if file.split.n_rows() != file.n_rows {
            return Err(Error::Schema("split does not cover every row".into()));
        }
        Self::new(file.features, file.outcomes, file.split)
    }

    pub fn export_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn import_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FeatureMatrix {
        let a = FeatureColumn::from_labels("a", &["x", "y", "x", "z"]).unwrap();
        let mut outcomes = IndexMap::new();
        outcomes.insert("err".to_string(), OutcomeVector::Binary(vec![1, 0, 0, 1]));
        FeatureMatrix::with_default_split(vec![a], outcomes, 3).unwrap()
    }

    #[test]
    fn vocabulary_in_first_appearance_order() {
        let m = tiny();
        assert_eq!(m.feature(0).vocabulary, vec!["x", "y", "z"]);
        assert_eq!(m.feature(0).codes.to_vec(), vec![0, 1, 0, 2]);
    }

    #[test]
    fn json_round_trip_preserves_codes_and_vocabulary() {
        let m = tiny();
        let back = FeatureMatrix::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.features(), m.features());
        assert_eq!(back.outcomes(), m.outcomes());
        assert_eq!(back.split(), m.split());
    }

    #[test]
    fn rejects_length_mismatch() {
        let a = FeatureColumn::from_labels("a", &["x", "y"]).unwrap();
        let split = make_split(3, 0, 0.5, None).unwrap();
        assert!(FeatureMatrix::new(vec![a], IndexMap::new(), split).is_err());
    }

    #[test]
    fn rejects_non_binary_outcome() {
        let a = FeatureColumn::from_labels("a", &["x", "y"]).unwrap();
        let mut o = IndexMap::new();
        o.insert("e".into(), OutcomeVector::Binary(vec![0, 2]));
        let split = make_split(2, 0, 0.5, None).unwrap();
        assert!(FeatureMatrix::new(vec![a], o, split).is_err());
    }
}
