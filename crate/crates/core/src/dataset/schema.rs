use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BinStrategy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Feature,
    Outcome,
    #[default]
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    #[default]
    Categorical,
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
    #[serde(default, rename = "type")]
    pub kind: ColumnType,
    /// Binning for continuous features; defaults to quantile with k = 5.
    #[serde(default)]
    pub binning: Option<BinStrategy>,
    /// Raw values counted as positive for a binary outcome. When absent the
    /// usual spellings of 0/1 and true/false are accepted.
    #[serde(default)]
    pub positive: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Binary outcome to stratify on; defaults to the first binary outcome.
    #[serde(default)]
    pub stratify_on: Option<String>,
}

fn default_fraction() -> f64 {
    0.5
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0,
            fraction: 0.5,
            stratify_on: None,
        }
    }
}

/// Column roles and types for [`super::load_table`]. Readable from JSON or TOML.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub delimiter: Option<char>,
    /// Role for columns not listed in `columns`: `ignored` (default) or
    /// `feature` (categorical).
    #[serde(default)]
    pub default_role: ColumnRole,
    #[serde(default)]
    pub columns: Vec<ColumnSpec>,
    /// Raw strings treated as missing.
    #[serde(default = "default_missing")]
    pub missing_values: Vec<String>,
    #[serde(default)]
    pub split: SplitSpec,
}

fn default_missing() -> Vec<String> {
    vec![String::new(), "NA".into(), "?".into()]
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a schema, choosing the format from the file extension.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            Some("json") | None => Self::from_json(&text),
            Some(other) => Err(Error::Schema(format!(
                "unsupported schema extension {other:?}"
            ))),
        }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let json = r#"{
            "columns": [
                {"name": "age", "role": "feature", "type": "continuous", "binning": {"strategy": "quantile", "k": 4}},
                {"name": "err", "role": "outcome", "type": "binary"}
            ],
            "split": {"seed": 3}
        }"#;
        let toml = r#"
            [[columns]]
            name = "age"
            role = "feature"
            type = "continuous"
            binning = { strategy = "quantile", k = 4 }

            [[columns]]
            name = "err"
            role = "outcome"
            type = "binary"

            [split]
            seed = 3
        "#;
        let a = Schema::from_json(json).unwrap();
        let b = Schema::from_toml(toml).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.split.fraction, 0.5);
        assert_eq!(a.default_role, ColumnRole::Ignored);
    }
}
