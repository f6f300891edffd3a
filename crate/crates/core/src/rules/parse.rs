//! Rule text grammar:
//!
//! ```text
//! rule     := pred ("&" pred)*
//! pred     := string "=" valueset
//! valueset := string ("|" string)*
//! string   := '"' (char | '\"' | '\\')* '"' | bare
//! bare     := one or more chars other than whitespace, '"', '=', '&', '|'
//! ```
//!
//! Whitespace between tokens is ignored. Blank text is the empty rule.
//! Positions in errors are character offsets.

use std::collections::{BTreeMap, BTreeSet};

use super::Rule;
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    _src: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().collect(),
            pos: 0,
            _src: src,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.chars.len()
    }

    fn err<T>(&self, position: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::RuleSyntax {
            position,
            message: message.into(),
        })
    }

    fn expect(&mut self, ch: char) -> Result<()> {
        self.skip_ws();
        match self.chars.get(self.pos) {
            Some(&c) if c == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(&c) => self.err(self.pos, format!("expected '{ch}', found '{c}'")),
            None => self.err(self.pos, format!("expected '{ch}', found end of input")),
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    /// Returns the unescaped string and the offset of its opening quote.
    fn string(&mut self, what: &str) -> Result<(String, usize)> {
        self.skip_ws();
        let start = self.pos;
        match self.chars.get(self.pos) {
            Some('"') => self.pos += 1,
            Some(&c) if is_bare(c) => {
                while self.chars.get(self.pos).is_some_and(|&c| is_bare(c)) {
                    self.pos += 1;
                }
                return Ok((self.chars[start..self.pos].iter().collect(), start));
            }
            Some(&c) => return self.err(start, format!("expected {what}, found '{c}'")),
            None => return self.err(start, format!("expected {what}, found end of input")),
        }
        let mut out = String::new();
        loop {
            match self.chars.get(self.pos) {
                None => return self.err(start, "unterminated string"),
                Some('"') => {
                    self.pos += 1;
                    return Ok((out, start));
                }
                Some('\\') => {
                    match self.chars.get(self.pos + 1) {
                        Some(&c) if c == '"' || c == '\\' => out.push(c),
                        _ => return self.err(self.pos, "invalid escape"),
                    }
                    self.pos += 2;
                }
                Some(&c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }
}

fn is_bare(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '"' | '=' | '&' | '|')
}

/// A parsed predicate with source positions for error reporting.
struct RawPred {
    feature: String,
    feature_pos: usize,
    values: Vec<(String, usize)>,
}

fn parse_raw(text: &str) -> Result<Vec<RawPred>> {
    let mut lx = Lexer::new(text);
    let mut preds = Vec::new();
    if lx.at_end() {
        return Ok(preds);
    }
    loop {
        let (feature, feature_pos) = lx.string("feature name")?;
        lx.expect('=')?;
        let mut values = vec![lx.string("value")?];
        while lx.peek() == Some('|') {
            lx.pos += 1;
            values.push(lx.string("value")?);
        }
        preds.push(RawPred {
            feature,
            feature_pos,
            values,
        });
        if lx.at_end() {
            break;
        }
        lx.expect('&')?;
    }
    Ok(preds)
}

fn assemble(preds: Vec<RawPred>) -> Result<Rule> {
    let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for p in preds {
        if map.contains_key(&p.feature) {
            return Err(Error::DuplicateFeature(p.feature));
        }
        map.insert(p.feature, p.values.into_iter().map(|(v, _)| v).collect());
    }
    Ok(Rule { predicates: map })
}

/// Parses rule text without checking names against a dataset.
pub fn parse_rule_text(text: &str) -> Result<Rule> {
    assemble(parse_raw(text)?)
}

/// Parses rule text and validates every feature and value against `matrix`.
pub fn parse_rule(text: &str, matrix: &FeatureMatrix) -> Result<Rule> {
    let preds = parse_raw(text)?;
    for p in &preds {
        let Some(idx) = matrix.feature_index(&p.feature) else {
            return Err(Error::UnknownFeature {
                name: p.feature.clone(),
                position: p.feature_pos,
                suggestions: near_matches(
                    &p.feature,
                    matrix.features().iter().map(|c| c.name.as_str()),
                ),
            });
        };
        let col = matrix.feature(idx);
        for (v, pos) in &p.values {
            if col.code_of(v).is_none() {
                return Err(Error::UnknownValue {
                    feature: p.feature.clone(),
                    value: v.clone(),
                    position: *pos,
                    suggestions: near_matches(v, col.vocabulary.iter().map(String::as_str)),
                });
            }
        }
    }
    assemble(preds)
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.to_lowercase().chars().collect();
    let b: Vec<char> = b.to_lowercase().chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for i in 1..=a.len() {
        let mut cur = vec![i; b.len() + 1];
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Up to five candidates close to `target`, closest first.
pub(crate) fn near_matches<'a>(
    target: &str,
    candidates: impl Iterator<Item = &'a str>,
) -> Vec<String> {
    let lower = target.to_lowercase();
    let mut scored: Vec<(usize, &str)> = candidates
        .map(|c| {
            let cl = c.to_lowercase();
            let d = if !lower.is_empty() && (cl.contains(&lower) || lower.contains(&cl)) {
                0
            } else {
                edit_distance(target, c)
            };
            (d, c)
        })
        .filter(|(d, c)| *d <= (c.chars().count().max(target.chars().count()) / 2).max(2))
        .collect();
    scored.sort();
    scored
        .into_iter()
        .take(5)
        .map(|(_, c)| c.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureColumn, FeatureMatrix};
    use indexmap::IndexMap;
    use proptest::prelude::*;

    fn census_like() -> FeatureMatrix {
        let ms = FeatureColumn::from_labels(
            "marital-status",
            &[
                "Married-civ-spouse",
                "Never-married",
                "Divorced",
                "Married-civ-spouse",
            ],
        )
        .unwrap();
        let ed = FeatureColumn::from_labels(
            "education",
            &["Some-college", "HS-grad", "Bachelors", "HS-grad"],
        )
        .unwrap();
        FeatureMatrix::with_default_split(vec![ms, ed], IndexMap::new(), 0).unwrap()
    }

    #[test]
    fn parses_two_predicate_rule() {
        let m = census_like();
        let r = parse_rule(
            r#""marital-status" = "Married-civ-spouse" & "education" = "Some-college""#,
            &m,
        )
        .unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(
            r.get("education").unwrap().iter().next().unwrap(),
            "Some-college"
        );
    }

    #[test]
    fn multi_value_predicate() {
        let r = parse_rule_text(r#""Class" = "business"|"eco plus""#).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.get("Class").unwrap().len(), 2);
    }

    #[test]
    fn empty_value_set_is_syntax_error_at_end() {
        let err = parse_rule_text(r#""age" = "#).unwrap_err();
        match err {
            Error::RuleSyntax { position, .. } => assert_eq!(position, 8),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_feature_rejected() {
        assert!(matches!(
            parse_rule_text(r#""a" = "1" & "a" = "2""#),
            Err(Error::DuplicateFeature(_))
        ));
    }

    #[test]
    fn unknown_value_lists_near_matches() {
        let m = census_like();
        let err = parse_rule(r#""education" = "HS grad""#, &m).unwrap_err();
        match err {
            Error::UnknownValue {
                suggestions,
                position,
                ..
            } => {
                assert_eq!(position, 14);
                assert_eq!(suggestions.first().map(String::as_str), Some("HS-grad"));
            }
            other => panic!("unexpected {other}"),
        }
        let err = parse_rule(r#""educaton" = "HS-grad""#, &m).unwrap_err();
        assert!(
            matches!(err, Error::UnknownFeature { position: 0, .. }),
            "{err}"
        );
    }

    #[test]
    fn whitespace_insensitive_and_escapes() {
        let a = parse_rule_text("\"x\"=\"1\"&\"y\"=\"a\\\"b\"").unwrap();
        let b = parse_rule_text("  \"y\" =  \"a\\\"b\"  &  \"x\" = \"1\" ").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get("y").unwrap().iter().next().unwrap(), "a\"b");
    }

    #[test]
    fn bare_words_allowed() {
        let a = parse_rule_text(r#"relationship = "Husband" & age = "45 - 65""#).unwrap();
        let b = parse_rule_text(r#""age" = "45 - 65" & "relationship" = Husband"#).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            parse_rule_text("a = & b = c"),
            Err(Error::RuleSyntax { position: 4, .. })
        ));
    }

    #[test]
    fn blank_text_is_empty_rule() {
        assert!(parse_rule_text("   ").unwrap().is_empty());
    }

    fn arb_rule() -> impl Strategy<Value = Rule> {
        proptest::collection::btree_map(
            "[a-zA-Z\"\\\\ &|=-]{1,8}",
            proptest::collection::btree_set("[a-z0-9\"\\\\ <>&|]{0,6}", 1..4),
            0..5,
        )
        .prop_map(|predicates| Rule { predicates })
    }

    proptest! {
        #[test]
        fn parse_format_identity(rule in arb_rule()) {
            prop_assert_eq!(parse_rule_text(&rule.to_string()).unwrap(), rule);
        }
    }
}
