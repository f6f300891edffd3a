//! Conjunctive rules over feature columns: text grammar, canonical form,
//! membership masks and interactive edits.

mod edit;
mod mask;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use edit::{edit_rule, EditableRule, RuleEdit};
pub use mask::{evaluate_mask, Mask};
pub use parse::{parse_rule, parse_rule_text};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// One `feature ∈ values` condition in the JSON wire form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub feature: String,
    pub values: Vec<String>,
}

/// Conjunction of set-membership predicates, at most one per feature, kept
/// in feature-name order. The empty rule matches every row.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Predicate>", into = "Vec<Predicate>")]
pub struct Rule {
    predicates: BTreeMap<String, BTreeSet<String>>,
}

impl Rule {
    pub fn empty() -> Rule {
        Rule::default()
    }

    pub fn from_pairs<F: Into<String>, V: Into<String>>(
        pairs: impl IntoIterator<Item = (F, V)>,
    ) -> Result<Rule> {
        let mut r = Rule::empty();
        for (f, v) in pairs {
            let f = f.into();
            if r.predicates.contains_key(&f) {
                return Err(Error::DuplicateFeature(f));
            }
            r.predicates.insert(f, BTreeSet::from([v.into()]));
        }
        Ok(r)
    }

    /// Builds a single-value rule from `(feature index, code)` pairs.
    pub fn from_codes(matrix: &FeatureMatrix, pairs: &[(u32, u32)]) -> Rule {
        let mut predicates = BTreeMap::new();
        for &(f, c) in pairs {
            let col = matrix.feature(f as usize);
            predicates.insert(col.name.clone(), BTreeSet::from([col.label(c).to_string()]));
        }
        Rule { predicates }
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.predicates.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn get(&self, feature: &str) -> Option<&BTreeSet<String>> {
        self.predicates.get(feature)
    }

    pub fn contains_feature(&self, feature: &str) -> bool {
        self.predicates.contains_key(feature)
    }

    /// Replaces (or adds) the allowed values for `feature`.
    pub fn with_values(&self, feature: &str, values: BTreeSet<String>) -> Result<Rule> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "empty value set for feature {feature:?}"
            )));
        }
        let mut r = self.clone();
        r.predicates.insert(feature.to_string(), values);
        Ok(r)
    }

    pub fn without(&self, feature: &str) -> Rule {
        let mut r = self.clone();
        r.predicates.remove(feature);
        r
    }

    /// Conjunction of two rules over disjoint features.
    pub fn and(&self, other: &Rule) -> Result<Rule> {
        let mut r = self.clone();
        for (f, v) in &other.predicates {
            if r.predicates.insert(f.clone(), v.clone()).is_some() {
                return Err(Error::DuplicateFeature(f.clone()));
            }
        }
        Ok(r)
    }

    /// True when every predicate names a single value.
    pub fn is_single_valued(&self) -> bool {
        self.predicates.values().all(|v| v.len() == 1)
    }

    /// Checks every feature and value against the matrix vocabulary.
    pub fn validate(&self, matrix: &FeatureMatrix) -> Result<()> {
        for (f, vals) in &self.predicates {
            let idx = matrix
                .feature_index(f)
                .ok_or_else(|| Error::UnknownFeature {
                    name: f.clone(),
                    position: 0,
                    suggestions: parse::near_matches(
                        f,
                        matrix.features().iter().map(|c| c.name.as_str()),
                    ),
                })?;
            let col = matrix.feature(idx);
            for v in vals {
                if col.code_of(v).is_none() {
                    return Err(Error::UnknownValue {
                        feature: f.clone(),
                        value: v.clone(),
                        position: 0,
                        suggestions: parse::near_matches(
                            v,
                            col.vocabulary.iter().map(String::as_str),
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse_rule_text(&r.to_string())` returns `r`.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

fn quote(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        if ch == '"' || ch == '\\' {
            out.push('\\');
        }
        out.push(ch);
    }
    out.push('"');
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for (i, (feat, vals)) in self.predicates.iter().enumerate() {
            if i > 0 {
                out.push_str(" & ");
            }
            quote(feat, &mut out);
            out.push_str(" = ");
            for (j, v) in vals.iter().enumerate() {
                if j > 0 {
                    out.push('|');
                }
                quote(v, &mut out);
            }
        }
        f.write_str(&out)
    }
}

impl TryFrom<Vec<Predicate>> for Rule {
    type Error = Error;

    fn try_from(preds: Vec<Predicate>) -> Result<Rule> {
        let mut r = Rule::empty();
        for p in preds {
            if p.values.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "empty value set for feature {:?}",
                    p.feature
                )));
            }
            if r.predicates.contains_key(&p.feature) {
                return Err(Error::DuplicateFeature(p.feature));
            }
            r.predicates
                .insert(p.feature, p.values.into_iter().collect());
        }
        Ok(r)
    }
}

impl From<Rule> for Vec<Predicate> {
    fn from(r: Rule) -> Self {
        r.predicates
            .into_iter()
            .map(|(feature, values)| Predicate {
                feature,
                values: values.into_iter().collect(),
            })
            .collect()
    }
}

/// All proper sub-rules (including the empty rule), smallest first.
pub fn rule_subsets(rule: &Rule) -> Vec<Rule> {
    let preds: Vec<(&String, &BTreeSet<String>)> = rule.predicates.iter().collect();
    let k = preds.len();
    if k == 0 {
        return Vec::new();
    }
    let mut masks: Vec<u32> = (0..(1u32 << k) - 1).collect();
    masks.sort_by_key(|&m| {
        let members: Vec<usize> = (0..k).filter(|i| m >> i & 1 == 1).collect();
        (m.count_ones(), members)
    });
    masks
        .into_iter()
        .map(|m| Rule {
            predicates: preds
                .iter()
                .enumerate()
                .filter(|(i, _)| m >> i & 1 == 1)
                .map(|(_, (f, v))| ((*f).clone(), (*v).clone()))
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(pairs: &[(&str, &str)]) -> Rule {
        Rule::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn subsets_of_pair_rule() {
        let subs = rule_subsets(&r(&[("A", "1"), ("B", "3")]));
        assert_eq!(
            subs,
            vec![Rule::empty(), r(&[("A", "1")]), r(&[("B", "3")])]
        );
    }

    #[test]
    fn subsets_counts() {
        assert_eq!(rule_subsets(&r(&[("A", "1")])), vec![Rule::empty()]);
        assert_eq!(
            rule_subsets(&r(&[("A", "1"), ("B", "2"), ("C", "3")])).len(),
            7
        );
        assert!(rule_subsets(&Rule::empty()).is_empty());
    }

    #[test]
    fn canonical_order_is_by_feature_name() {
        assert_eq!(r(&[("b", "1"), ("a", "2")]), r(&[("a", "2"), ("b", "1")]));
        assert_eq!(
            r(&[("b", "1"), ("a", "2")]).to_string(),
            r#""a" = "2" & "b" = "1""#
        );
    }

    #[test]
    fn json_form() {
        let rule = r(&[("Class", "eco")])
            .with_values("Class", ["eco".into(), "business".into()].into())
            .unwrap();
        let json = serde_json::to_string(&rule).unwrap();
        assert_eq!(json, r#"[{"feature":"Class","values":["business","eco"]}]"#);
        let back: Rule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rule);
        assert!(serde_json::from_str::<Rule>(r#"[{"feature":"a","values":[]}]"#).is_err());
        assert!(serde_json::from_str::<Rule>(
            r#"[{"feature":"a","values":["1"]},{"feature":"a","values":["2"]}]"#
        )
        .is_err());
    }
}
