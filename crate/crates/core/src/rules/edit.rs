use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Rule;
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// A rule being edited interactively. Features toggled off are remembered
/// so toggling them back on restores their previous values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditableRule {
    pub rule: Rule,
    #[serde(default)]
    pub disabled: BTreeMap<String, BTreeSet<String>>,
}

impl From<Rule> for EditableRule {
    fn from(rule: Rule) -> Self {
        EditableRule {
            rule,
            disabled: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum RuleEdit {
    ToggleFeature {
        feature: String,
    },
    /// Replaces the allowed value set (adding the predicate if absent).
    SetValues {
        feature: String,
        values: Vec<String>,
    },
}

pub fn edit_rule(
    current: &EditableRule,
    edit: &RuleEdit,
    matrix: &FeatureMatrix,
) -> Result<EditableRule> {
    let mut next = current.clone();
    match edit {
        RuleEdit::ToggleFeature { feature } => {
            if let Some(values) = current.rule.get(feature) {
                next.disabled.insert(feature.clone(), values.clone());
                next.rule = current.rule.without(feature);
            } else if let Some(values) = current.disabled.get(feature) {
                next.rule = current.rule.with_values(feature, values.clone())?;
                next.disabled.remove(feature);
            } else {
                return Err(Error::InvalidArgument(format!(
                    "feature {feature:?} is not part of the rule"
                )));
            }
        }
        RuleEdit::SetValues { feature, values } => {
            if values.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "empty value set for feature {feature:?}"
                )));
            }
            let values: BTreeSet<String> = values.iter().cloned().collect();
            let candidate = Rule::empty().with_values(feature, values.clone())?;
            candidate.validate(matrix)?;
            next.rule = current.rule.with_values(feature, values)?;
            next.disabled.remove(feature);
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureColumn;
    use indexmap::IndexMap;

    fn m() -> FeatureMatrix {
        let ms =
            FeatureColumn::from_labels("marital-status", &["Married-civ-spouse", "Never-married"])
                .unwrap();
        let ed = FeatureColumn::from_labels("education", &["Some-college", "HS-grad"]).unwrap();
        FeatureMatrix::with_default_split(vec![ms, ed], IndexMap::new(), 0).unwrap()
    }

    fn start() -> EditableRule {
        Rule::from_pairs([
            ("marital-status", "Married-civ-spouse"),
            ("education", "Some-college"),
        ])
        .unwrap()
        .into()
    }

    #[test]
    fn toggle_off_removes_feature() {
        let e = edit_rule(
            &start(),
            &RuleEdit::ToggleFeature {
                feature: "education".into(),
            },
            &m(),
        )
        .unwrap();
        assert_eq!(
            e.rule,
            Rule::from_pairs([("marital-status", "Married-civ-spouse")]).unwrap()
        );
    }

    #[test]
    fn toggle_round_trip_restores_rule() {
        let t = RuleEdit::ToggleFeature {
            feature: "education".into(),
        };
        let off = edit_rule(&start(), &t, &m()).unwrap();
        let on = edit_rule(&off, &t, &m()).unwrap();
        assert_eq!(on, start());
    }

    #[test]
    fn set_values_replaces() {
        let e = edit_rule(
            &start(),
            &RuleEdit::SetValues {
                feature: "marital-status".into(),
                values: vec!["Never-married".into()],
            },
            &m(),
        )
        .unwrap();
        assert_eq!(
            e.rule.get("marital-status").unwrap().iter().next().unwrap(),
            "Never-married"
        );
        assert_eq!(e.rule.len(), 2);
    }

    #[test]
    fn set_values_errors() {
        let empty = RuleEdit::SetValues {
            feature: "education".into(),
            values: vec![],
        };
        assert!(edit_rule(&start(), &empty, &m()).is_err());
        let unknown = RuleEdit::SetValues {
            feature: "education".into(),
            values: vec!["PhD".into()],
        };
        assert!(matches!(
            edit_rule(&start(), &unknown, &m()),
            Err(Error::UnknownValue { .. })
        ));
        let absent = RuleEdit::ToggleFeature {
            feature: "age".into(),
        };
        assert!(edit_rule(&start(), &absent, &m()).is_err());
    }
}
