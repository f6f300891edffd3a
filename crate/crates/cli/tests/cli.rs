mod common;

use common::{slicewise, slicewise_env, stderr, stdout, write_census};
use serde_json::Value;

use slicewise::dataset::{load_table, Schema};
use slicewise::rules::{evaluate_mask, parse_rule};
use slicewise_cli::{DiscoverOutput, EvaluateOutput};

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero_without_touching_data() {
    let o = slicewise_env(
        &["--help"],
        &[("SLICEWISE_DATA_ROOT", "/definitely/missing")],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("discover"));
    let o = slicewise(&["discover", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("--min-size"));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["discover", "--data", "x.csv", "--n", "0"],
        vec!["discover", "--data", "x.csv", "--min-size", "1.5"],
        vec!["discover", "--data", "x.csv", "--frobnicate"],
        vec!["no-such-command"],
        vec!["oracle-sweep"],
    ] {
        let o = slicewise(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn missing_file_is_runtime_error() {
    let o = slicewise(&[
        "discover",
        "--data",
        "/no/such.csv",
        "--schema",
        "/no/such.json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such.json"));
}

#[test]
fn discover_echoes_defaults_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_census(dir.path(), 3000);
    let run = |out: &str, threads: &str| {
        let out = dir.path().join(out);
        let o = slicewise(&[
            "discover",
            "--data",
            s(&data),
            "--schema",
            s(&schema),
            "--outcome",
            "error",
            "--seed",
            "42",
            "--threads",
            threads,
            "--out",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (stdout(&o), std::fs::read(out).unwrap())
    };
    let (text, a) = run("a.json", "1");
    assert!(
        text.starts_with("n=100, p_min=0.01, k=50, L=3, seed=42"),
        "{text}"
    );
    let (_, b) = run("b.json", "1");
    let (_, c) = run("c.json", "8");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let parsed: DiscoverOutput = serde_json::from_slice(&a).unwrap();
    assert_eq!(parsed.seed, 42);
    assert!(!parsed.results.is_empty());
    let top = parsed.results[0].rule.to_text();
    assert!(top.contains("Husband") || top.contains("45 - 65"), "{top}");
}

#[test]
fn discover_writes_json_to_stdout_without_out() {
    let dir = tempfile::tempdir().unwrap();
    write_census(dir.path(), 1500);
    let root = s(dir.path());
    let o = slicewise_env(
        &[
            "discover",
            "--data",
            "census.csv",
            "--schema",
            "census.json",
            "--n",
            "10",
        ],
        &[("SLICEWISE_DATA_ROOT", root)],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["config"], "n=10, p_min=0.01, k=50, L=3, seed=0");
    assert!(stderr(&o).contains("n=10"));
}

#[test]
fn invalid_specs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_census(dir.path(), 500);
    let specs = dir.path().join("specs.json");
    std::fs::write(&specs, r#"[{"kind": "group-size"}]"#).unwrap();
    let o = slicewise(&[
        "discover",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--specs",
        s(&specs),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = slicewise(&[
        "discover",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--outcome",
        "nope",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn evaluate_rule_matches_direct_count() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_census(dir.path(), 4000);
    let text = r#"relationship = "Husband" & age = "45 - 65""#;
    let out = dir.path().join("m.json");
    let o = slicewise(&[
        "evaluate-rule",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--rule",
        text,
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let m = load_table(&data, &Schema::from_path(&schema).unwrap()).unwrap();
    let mask = evaluate_mask(&parse_rule(text, &m).unwrap(), &m).unwrap();
    let y = m.outcome("error").unwrap();
    let rows: Vec<usize> = (0..m.n_rows()).filter(|&r| mask.contains(r)).collect();
    let pos = rows.iter().filter(|&&r| y.value(r) == 1.0).count();
    let frac = format!("{:.1}%", 100.0 * rows.len() as f64 / m.n_rows() as f64);
    let rate = format!("{:.1}%", 100.0 * pos as f64 / rows.len() as f64);
    let table = stdout(&o);
    let all = table.lines().find(|l| l.starts_with("all")).unwrap();
    assert!(
        all.contains(&frac) && all.contains(&rate),
        "{all} vs {frac} {rate}"
    );

    let parsed: EvaluateOutput = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    assert_eq!(parsed.all.size, rows.len());
    let eval_size = m
        .split()
        .evaluation_rows()
        .iter()
        .filter(|&&r| mask.contains(r))
        .count();
    assert_eq!(parsed.evaluation.size as usize, eval_size);
}

#[test]
fn bad_rule_exits_two_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_census(dir.path(), 300);
    let o = slicewise(&[
        "evaluate-rule",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--rule",
        "relation = Husband",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("position 0") && err.contains("relationship"),
        "{err}"
    );
}

#[test]
fn map_layout_json() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_census(dir.path(), 2000);
    let out = dir.path().join("map.json");
    let args = [
        "map",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--rule",
        r#"relationship = "Husband""#,
        "--rule",
        r#"age = "45 - 65""#,
        "--seed",
        "4",
        "--out",
        s(&out),
    ];
    let o = slicewise(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = std::fs::read(&out).unwrap();
    assert_eq!(slicewise(&args).status.code(), Some(0));
    assert_eq!(a, std::fs::read(&out).unwrap());
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["seed"], 4);
    assert_eq!(v["outcome"], "error");
    let total: u64 = v["bubbles"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["count"].as_u64().unwrap())
        .sum();
    let m = load_table(&data, &Schema::from_path(&schema).unwrap()).unwrap();
    assert_eq!(total as usize, m.split().evaluation_rows().len());

    let mut many = vec!["map", "--data", s(&data), "--schema", s(&schema)];
    for _ in 0..9 {
        many.extend(["--rule", r#"education = "Masters""#]);
    }
    assert_eq!(slicewise(&many).status.code(), Some(2));
}

#[test]
fn oracle_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = slicewise(&[
        "oracle-sweep",
        "--planted",
        "4000x14",
        "--n",
        "5,40",
        "--min-size",
        "0.05",
        "--trials",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n_samples,p_min,trial,runtime_s,recall_at_50");
    assert_eq!(lines.len(), 1 + 2 * 2);
    for l in &lines[1..] {
        let recall: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&recall));
    }
    assert!(stdout(&o).contains("recall@50"));
}

#[test]
fn airline_schema_bins_ratings() {
    const RATINGS: usize = 14;
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from(
        ",id,Gender,Customer Type,Age,Type of Travel,Class,Flight Distance,Inflight wifi service,\
         Departure/Arrival time convenient,Ease of Online booking,Gate location,Food and drink,Online boarding,\
         Seat comfort,Inflight entertainment,On-board service,Leg room service,Baggage handling,Checkin service,\
         Inflight service,Cleanliness,Departure Delay in Minutes,Arrival Delay in Minutes,satisfaction\n",
    );
    // Ratings are scrambled 0-5 values; wifi is column 0, online booking 2,
    // gate location 3.
    let n = 60;
    let mut expected = (0, 0, 0);
    for i in 0..n {
        let mut r: Vec<usize> = (0..RATINGS)
            .map(|j| (i * 7 + j * 13 + (i * j) % 5) % 6)
            .collect();
        if i % 4 == 0 {
            r[0] = 1 + i % 2;
            r[2] = 2;
            r[3] = 3;
        }
        let unhappy = i % 3 != 0;
        let hit = (1..=2).contains(&r[0]) && (1..=2).contains(&r[2]) && r[3] == 3;
        expected.0 += usize::from(hit);
        expected.1 += usize::from(hit && unhappy);
        expected.2 += usize::from(unhappy);
        let ratings: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        let arrival = if i % 7 == 0 {
            String::new()
        } else {
            (i % 11).to_string()
        };
        csv.push_str(&format!(
            "{i},{},{},Loyal Customer,{},Business travel,Eco,{},{},{},{},{}\n",
            1000 + i,
            if i % 2 == 0 { "Male" } else { "Female" },
            20 + i,
            100 * i,
            ratings.join(","),
            i % 5,
            arrival,
            if unhappy {
                "neutral or dissatisfied"
            } else {
                "satisfied"
            }
        ));
    }
    let data = dir.path().join("airline.csv");
    std::fs::write(&data, csv).unwrap();
    let schema =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/airline.schema.json");
    let out = dir.path().join("rule.json");
    let rule = r#""Gate location" = "neutral" & "Inflight wifi service" = "not satisfied" & "Ease of Online booking" = "not satisfied""#;
    let o = slicewise(&[
        "evaluate-rule",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--rule",
        rule,
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: EvaluateOutput = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    assert!(expected.0 > 0);
    assert_eq!(r.all.size, expected.0);
    let (name, rate, base) = &r.all.outcomes[0];
    assert_eq!(name, "satisfaction");
    assert_eq!(*rate, Some(expected.1 as f64 / expected.0 as f64));
    assert_eq!(*base, expected.2 as f64 / n as f64);
}
