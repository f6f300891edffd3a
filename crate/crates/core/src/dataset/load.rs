use std::io::Read;
use std::path::Path;

use indexmap::IndexMap;
use log::warn;
use rustc_hash::FxHashMap;

use super::schema::{ColumnRole, ColumnType, Schema};
use super::{
    bin_optional, make_split, Codes, ColumnOrigin, FeatureColumn, FeatureMatrix, OutcomeVector,
    MISSING,
};
use crate::error::{Error, Result};

/// Loads a delimited text file (header row required) according to `schema`.
/// `.tsv` files default to tab-separated.
pub fn load_table(path: impl AsRef<Path>, schema: &Schema) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let mut schema = schema.clone();
    if schema.delimiter.is_none() && path.extension().and_then(|e| e.to_str()) == Some("tsv") {
        schema.delimiter = Some('\t');
    }
    let file = std::fs::File::open(path)?;
    load_table_from_reader(file, &schema)
}

pub fn load_table_from_reader(reader: impl Read, schema: &Schema) -> Result<FeatureMatrix> {
    let delim = schema.delimiter.unwrap_or(',');
    if !delim.is_ascii() {
        return Err(Error::Schema(format!("delimiter {delim:?} must be ASCII")));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delim as u8)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    for spec in &schema.columns {
        if !headers.contains(&spec.name) {
            return Err(Error::Schema(format!(
                "column {:?} declared in schema is missing from the table",
                spec.name
            )));
        }
    }

    // (header index, role, type)
    let mut plan = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let (role, kind) = match schema.column(h) {
            Some(c) => (c.role, c.kind),
            None => (schema.default_role, ColumnType::Categorical),
        };
        if role != ColumnRole::Ignored {
            plan.push((i, role, kind));
        }
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); plan.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (slot, (i, _, _)) in plan.iter().enumerate() {
            let v = rec.get(*i).ok_or_else(|| Error::Ingestion {
                row,
                column: headers[*i].clone(),
                message: "record is shorter than the header".into(),
            })?;
            raw[slot].push(v.to_string());
        }
    }
    let n_rows = raw.first().map_or(0, Vec::len);
    if n_rows == 0 {
        return Err(Error::EmptyTable("table has no data rows".into()));
    }

    let is_missing = |v: &str| schema.missing_values.iter().any(|m| m == v);
    let mut features = Vec::new();
    let mut outcomes = IndexMap::new();
    for (slot, (i, role, kind)) in plan.iter().enumerate() {
        let name = &headers[*i];
        let values = &raw[slot];
        let spec = schema.column(name);
        match role {
            ColumnRole::Feature => match kind {
                ColumnType::Continuous => {
                    let mut parsed = Vec::with_capacity(n_rows);
                    for (row, v) in values.iter().enumerate() {
                        if is_missing(v) {
                            parsed.push(None);
                        } else {
                            let x: f64 = v.parse().map_err(|_| Error::Ingestion {
                                row,
                                column: name.clone(),
                                message: format!("non-numeric value {v:?} in continuous column"),
                            })?;
                            parsed.push(Some(x));
                        }
                    }
                    let strategy = spec.and_then(|s| s.binning.clone()).unwrap_or_default();
                    let binned = bin_optional(name, &parsed, &strategy)?;
                    if let Some(w) = &binned.warning {
                        warn!("{w}");
                    }
                    features.push(binned.column);
                }
                ColumnType::Categorical | ColumnType::Binary => {
                    features.push(categorical(name, values, &is_missing)?);
                }
            },
            ColumnRole::Outcome => {
                let outcome = match kind {
                    ColumnType::Continuous => {
                        let mut out = Vec::with_capacity(n_rows);
                        for (row, v) in values.iter().enumerate() {
                            let x: f64 =
                                v.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(
                                    || Error::Ingestion {
                                        row,
                                        column: name.clone(),
                                        message: format!("invalid continuous outcome {v:?}"),
                                    },
                                )?;
                            out.push(x);
                        }
                        OutcomeVector::Continuous(out)
                    }
                    _ => {
                        let positive = spec.and_then(|s| s.positive.as_ref());
                        let mut out = Vec::with_capacity(n_rows);
                        for (row, v) in values.iter().enumerate() {
                            let b = match positive {
                                Some(p) => p.iter().any(|x| x == v),
                                None => parse_bool(v).ok_or_else(|| Error::Ingestion {
                                    row,
                                    column: name.clone(),
                                    message: format!("cannot read {v:?} as a binary outcome"),
                                })?,
                            };
                            out.push(b as u8);
                        }
                        OutcomeVector::Binary(out)
                    }
                };
                outcomes.insert(name.clone(), outcome);
            }
            ColumnRole::Ignored => unreachable!(),
        }
    }

    let split_spec = &schema.split;
    let stratify_name = split_spec.stratify_on.clone().or_else(|| {
        outcomes
            .iter()
            .find(|(_, o)| o.is_binary())
            .map(|(n, _)| n.clone())
    });
    let split = match &stratify_name {
        Some(name) => match outcomes.get(name) {
            Some(OutcomeVector::Binary(y)) => make_split(
                n_rows,
                split_spec.seed,
                split_spec.fraction,
                Some((name, y)),
            )?,
            Some(_) => {
                return Err(Error::Schema(format!(
                    "cannot stratify on continuous outcome {name:?}"
                )))
            }
            None => return Err(Error::UnknownOutcome(name.clone())),
        },
        None => make_split(n_rows, split_spec.seed, split_spec.fraction, None)?,
    };
    FeatureMatrix::new(features, outcomes, split)
}

fn categorical(
    name: &str,
    values: &[String],
    is_missing: &impl Fn(&str) -> bool,
) -> Result<FeatureColumn> {
    let mut vocab: Vec<String> = Vec::new();
    let mut lookup: FxHashMap<&str, u32> = FxHashMap::default();
    let mut codes = Vec::with_capacity(values.len());
    for v in values {
        let key = if is_missing(v) { MISSING } else { v.as_str() };
        let code = *lookup.entry(key).or_insert_with(|| {
            vocab.push(key.to_string());
            (vocab.len() - 1) as u32
        });
        codes.push(code);
    }
    FeatureColumn::new(
        name,
        Codes::from_vec(codes),
        vocab,
        ColumnOrigin::Categorical,
    )
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "t" | "yes" | "y" => Some(true),
        "0" | "0.0" | "false" | "f" | "no" | "n" => Some(false),
        _ => None,
    }
}
