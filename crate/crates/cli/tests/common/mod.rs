#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SCHEMA: &str = r#"{
  "columns": [
    {"name": "relationship", "role": "feature"},
    {"name": "age", "role": "feature"},
    {"name": "education", "role": "feature"},
    {"name": "capital-gain", "role": "feature"},
    {"name": "error", "role": "outcome", "type": "binary"}
  ],
  "split": {"seed": 3, "fraction": 0.5}
}"#;

/// Census-flavoured table; husbands aged 45-65 are mispredicted more often.
/// A small LCG keeps it reproducible without extra dependencies.
pub fn write_census(dir: &Path, rows: usize) -> (PathBuf, PathBuf) {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 33) as f64 / (1u64 << 31) as f64
    };
    let rel = ["Husband", "Wife", "Not-in-family", "Own-child"];
    let age = ["18 - 25", "25 - 45", "45 - 65", "65+"];
    let edu = ["HS-grad", "Some-college", "Bachelors", "Masters"];
    let gain = ["0", "1-5000", ">5000"];
    let pick = |u: f64, n: usize| ((u * n as f64) as usize).min(n - 1);
    let mut csv = String::from("relationship,age,education,capital-gain,error\n");
    for _ in 0..rows {
        let r = pick(next(), 4);
        let a = pick(next(), 4);
        let e = pick(next(), 4);
        let g = pick(next(), 3);
        let p = if r == 0 && a == 2 { 0.6 } else { 0.1 };
        let y = u8::from(next() < p);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            rel[r], age[a], edu[e], gain[g], y
        ));
    }
    let data = dir.join("census.csv");
    let schema = dir.join("census.json");
    std::fs::write(&data, csv).unwrap();
    std::fs::write(&schema, SCHEMA).unwrap();
    (data, schema)
}

pub fn slicewise(args: &[&str]) -> Output {
    slicewise_env(args, &[])
}

pub fn slicewise_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_slicewise"));
    c.args(args)
        .env_remove("SLICEWISE_DATA_ROOT")
        .env("RUST_LOG", "warn");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("spawn slicewise")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
