use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slicewise::bitset::BitSet;
use slicewise::dataset::{FeatureColumn, FeatureMatrix, OutcomeVector, SplitAssignment};
use slicewise::map::{
    build_layout, distinguishing_feature, embed, intersection_summary, overlap_tolerance,
    overlay_subgroups, BubbleLayout, MapOptions,
};
use slicewise::rules::{evaluate_mask, Mask, Rule};
use slicewise::synth::{planted_table, PlantedGroup, PlantedTable};

fn all_evaluation(n: usize) -> SplitAssignment {
    SplitAssignment::from_parts(n, Vec::new(), 0, 0.0, None).unwrap()
}

fn table(columns: &[(&str, Vec<&str>)], y: Vec<u8>) -> FeatureMatrix {
    let n = y.len();
    let features = columns
        .iter()
        .map(|(name, labels)| FeatureColumn::from_labels(*name, labels).unwrap())
        .collect();
    let mut outcomes = IndexMap::new();
    outcomes.insert("y".to_string(), OutcomeVector::Binary(y));
    FeatureMatrix::new(features, outcomes, all_evaluation(n)).unwrap()
}

fn rule(pairs: &[(&str, &str)]) -> Rule {
    Rule::from_pairs(pairs.iter().copied()).unwrap()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Partition, purity and non-overlap, checked against the matrix directly.
fn check_invariants(matrix: &FeatureMatrix, layout: &BubbleLayout, subgroups: &[Rule]) {
    let eval = matrix.split().evaluation_rows();
    let mut seen = vec![0u32; matrix.n_rows()];
    for b in &layout.bubbles {
        assert!(b.r > 0.0);
        assert_eq!(b.count, b.members.len());
        for &r in &b.members {
            seen[r] += 1;
        }
    }
    for r in 0..matrix.n_rows() {
        let expected = u32::from(!matrix.split().is_discovery(r));
        assert_eq!(seen[r], expected, "row {r}");
    }
    assert_eq!(
        layout.bubbles.iter().map(|b| b.count).sum::<usize>(),
        eval.len()
    );

    let y = matrix.outcome(&layout.outcome).unwrap();
    let masks: Vec<BitSet> = subgroups
        .iter()
        .map(|s| evaluate_mask(s, matrix).unwrap().bits().clone())
        .collect();
    for b in &layout.bubbles {
        let first = b.members[0];
        let sig: Vec<usize> = (0..masks.len())
            .filter(|&i| masks[i].contains(first))
            .collect();
        assert_eq!(b.signature, sig);
        for &r in &b.members {
            assert_eq!(y.value(r), y.value(first));
            for (i, m) in masks.iter().enumerate() {
                assert_eq!(m.contains(r), m.contains(first), "subgroup {i}");
            }
        }
    }

    let tol = overlap_tolerance(&layout.bubbles);
    for (i, a) in layout.bubbles.iter().enumerate() {
        for b in &layout.bubbles[i + 1..] {
            assert!(dist([a.x, a.y], [b.x, b.y]) >= a.r + b.r - tol);
        }
    }
}

#[test]
fn single_row_sits_at_origin() {
    let m = table(&[("a", vec!["x"])], vec![1]);
    let e = embed(&m, 3).unwrap();
    assert_eq!(e.coords, vec![[0.0, 0.0]]);
}

#[test]
fn identical_rows_coincide() {
    let m = table(
        &[("a", vec!["x", "x", "y"]), ("b", vec!["p", "p", "q"])],
        vec![0, 1, 0],
    );
    let e = embed(&m, 3).unwrap();
    assert_eq!(e.coords[0], e.coords[1]);
    assert!(e
        .coords
        .iter()
        .all(|p| p[0].is_finite() && p[1].is_finite()));
}

#[test]
fn embedding_separates_blocks_and_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 300;
    let m_features = 12;
    let block: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let mut columns = Vec::new();
    for f in 0..m_features {
        let labels: Vec<String> = (0..n)
            .map(|i| {
                let base = if block[i] { 0 } else { 2 };
                format!("v{}", base + rng.gen_range(0..2))
            })
            .collect();
        columns.push(FeatureColumn::from_labels(format!("f{f}"), &labels).unwrap());
    }
    let mut outcomes = IndexMap::new();
    outcomes.insert("y".to_string(), OutcomeVector::Binary(vec![0; n]));
    let m = FeatureMatrix::new(columns, outcomes, all_evaluation(n)).unwrap();

    let e = embed(&m, 9).unwrap();
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0, 0.0, 0);
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(e.coords[i], e.coords[j]);
            if block[i] == block[j] {
                within += d;
                nw += 1;
            } else {
                between += d;
                nb += 1;
            }
        }
    }
    assert!(between / nb as f64 > within / nw as f64);
    assert_eq!(embed(&m, 9).unwrap(), e);
}

#[test]
fn embedding_needs_evaluation_rows() {
    let features = vec![FeatureColumn::from_labels("a", &["x", "y"]).unwrap()];
    let split = SplitAssignment::from_parts(2, vec![0, 1], 0, 1.0, None).unwrap();
    let m = FeatureMatrix::new(features, IndexMap::new(), split).unwrap();
    assert!(embed(&m, 0).is_err());
}

fn arcs_of(signature: &[usize]) -> Vec<(usize, f64, f64)> {
    let m = table(&[("a", vec!["x"])], vec![1]);
    let e = embed(&m, 0).unwrap();
    let mut layout = build_layout(&m, &e, "y", &[], &MapOptions::default()).unwrap();
    let masks: Vec<BitSet> = (0..4)
        .map(|i| {
            if signature.contains(&i) {
                BitSet::full(1)
            } else {
                BitSet::new(1)
            }
        })
        .collect();
    overlay_subgroups(&mut layout.bubbles, &masks).unwrap();
    layout.bubbles[0]
        .arcs
        .iter()
        .map(|a| (a.subgroup, a.start, a.fraction))
        .collect()
}

#[test]
fn overlay_arcs_split_the_border_equally() {
    assert_eq!(arcs_of(&[0, 1]), vec![(0, 0.0, 0.5), (1, 0.5, 0.5)]);
    assert_eq!(arcs_of(&[]), vec![]);
    let third = arcs_of(&[0, 2, 3]);
    assert_eq!(third.len(), 3);
    assert!(third.iter().all(|a| a.2 == 1.0 / 3.0));
}

#[test]
fn overlay_rejects_more_than_eight() {
    let m = table(&[("a", vec!["x"])], vec![1]);
    let e = embed(&m, 0).unwrap();
    let nine = vec![rule(&[("a", "x")]); 9];
    assert!(build_layout(&m, &e, "y", &nine, &MapOptions::default()).is_err());
    let mut layout = build_layout(&m, &e, "y", &[], &MapOptions::default()).unwrap();
    assert!(overlay_subgroups(&mut layout.bubbles, &vec![BitSet::new(1); 9]).is_err());
}

#[test]
fn intersections_follow_subset_structure() {
    let m = table(
        &[
            ("a", vec!["1", "1", "0", "0", "0", "0"]),
            ("b", vec!["0", "0", "1", "1", "0", "0"]),
        ],
        vec![1, 0, 1, 1, 0, 0],
    );
    let disjoint =
        intersection_summary(&m, &[rule(&[("a", "1")]), rule(&[("b", "1")])], "y").unwrap();
    let sigs: Vec<Vec<usize>> = disjoint.cells.iter().map(|c| c.signature.clone()).collect();
    assert_eq!(sigs, vec![vec![], vec![0], vec![1]]);
    assert_eq!(disjoint.cells.iter().map(|c| c.size).sum::<usize>(), 6);
    assert_eq!(disjoint.cells[1].rate, 0.5);
    assert_eq!(disjoint.cells[2].rate, 1.0);

    let m = table(
        &[
            ("a", vec!["1", "1", "0", "0", "0", "0"]),
            ("b", vec!["1", "1", "1", "1", "0", "0"]),
        ],
        vec![1, 0, 1, 1, 0, 0],
    );
    let nested =
        intersection_summary(&m, &[rule(&[("a", "1")]), rule(&[("b", "1")])], "y").unwrap();
    let sigs: Vec<Vec<usize>> = nested.cells.iter().map(|c| c.signature.clone()).collect();
    assert_eq!(sigs, vec![vec![], vec![1], vec![0, 1]]);
    assert!(intersection_summary(&m, &[], "y").is_err());
}

#[test]
fn intersection_rate_can_exceed_both_groups() {
    // 40 rows: a=1 on rows 0..20, b=1 on rows 10..30. Positives are dense in
    // the overlap 10..20 and sparse elsewhere.
    let n = 40;
    let a: Vec<&str> = (0..n).map(|i| if i < 20 { "1" } else { "0" }).collect();
    let b: Vec<&str> = (0..n)
        .map(|i| if (10..30).contains(&i) { "1" } else { "0" })
        .collect();
    let y: Vec<u8> = (0..n)
        .map(|i| u8::from((10..19).contains(&i) || i == 0 || i == 29))
        .collect();
    let m = table(&[("a", a), ("b", b)], y.clone());
    let s = intersection_summary(&m, &[rule(&[("a", "1")]), rule(&[("b", "1")])], "y").unwrap();
    let rate =
        |lo: usize, hi: usize| (lo..hi).filter(|&i| y[i] == 1).count() as f64 / (hi - lo) as f64;
    let both = s.cells.iter().find(|c| c.signature == vec![0, 1]).unwrap();
    assert_eq!(both.size, 10);
    assert_eq!(both.rate, rate(10, 20));
    assert!(both.rate > rate(0, 20) && both.rate > rate(10, 30));
}

#[test]
fn distinguishing_feature_finds_perfect_separator() {
    let m = table(
        &[
            ("a", vec!["1", "1", "0", "0", "1", "0"]),
            ("b", vec!["x", "y", "x", "y", "x", "x"]),
        ],
        vec![0; 6],
    );
    let sel = Mask::from_rows([0, 1, 4], m.split());
    let d = distinguishing_feature(&sel, &m).unwrap();
    assert_eq!((d.feature.as_str(), d.value.as_str()), ("a", "1"));
    assert_eq!((d.precision, d.recall, d.score), (1.0, 1.0, 1.0));
    assert!(distinguishing_feature(&Mask::from_rows([], m.split()), &m).is_err());
}

#[test]
fn distinguishing_feature_on_constant_columns() {
    let n = 10;
    let m = table(&[("c", vec!["k"; n]), ("d", vec!["z"; n])], vec![0; n]);
    let sel = Mask::from_rows([0, 2, 4, 6, 8], m.split());
    let d = distinguishing_feature(&sel, &m).unwrap();
    assert_eq!((d.feature.as_str(), d.value.as_str()), ("c", "k"));
    assert_eq!(d.precision, 1.0);
    assert_eq!(d.recall, 0.5);
}

#[test]
fn distinguishing_feature_matches_scan_on_planted_clusters() {
    let spec = PlantedTable::new(
        2000,
        6,
        vec![PlantedGroup {
            length: 1,
            size: 0.3,
            rate: 0.9,
        }],
        5,
    );
    let (m, planted) = planted_table(&spec).unwrap();
    let cluster = evaluate_mask(&planted[0], &m).unwrap();
    let d = distinguishing_feature(&cluster, &m).unwrap();
    let (feature, values) = planted[0].predicates().next().unwrap();
    assert_eq!(d.feature, feature);
    assert_eq!(&d.value, values.iter().next().unwrap());

    let eval = m.split().evaluation_rows();
    let n_sel = eval.iter().filter(|&&r| cluster.contains(r)).count() as f64;
    let mut best = 0.0f64;
    for col in m.features() {
        for (code, _) in col.vocabulary.iter().enumerate() {
            let with: Vec<usize> = eval
                .iter()
                .copied()
                .filter(|&r| col.codes.get(r) as usize == code)
                .collect();
            let hit = with.iter().filter(|&&r| cluster.contains(r)).count() as f64;
            if hit > 0.0 {
                let (p, r) = (hit / n_sel, hit / with.len() as f64);
                best = best.max(2.0 * p * r / (p + r));
            }
        }
    }
    assert_eq!(d.score, best);
}

fn random_layout(seed: u64, n_rows: usize) -> (FeatureMatrix, BubbleLayout, Vec<Rule>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = (0..3)
        .map(|_| PlantedGroup {
            length: rng.gen_range(1..=2),
            size: rng.gen_range(0.05..0.2),
            rate: rng.gen_range(0.5..0.9),
        })
        .collect();
    let mut spec = PlantedTable::new(n_rows, rng.gen_range(6..14), groups, seed);
    spec.vocab = rng.gen_range(2..5);
    let (m, planted) = planted_table(&spec).unwrap();
    let e = embed(&m, seed).unwrap();
    let selected: Vec<Rule> = planted[..rng.gen_range(0..=planted.len())].to_vec();
    let layout = build_layout(&m, &e, "y", &selected, &MapOptions::default()).unwrap();
    (m, layout, selected)
}

#[test]
fn random_layouts_keep_invariants() {
    for (seed, n) in [(1, 1000), (2, 3000), (3, 8000), (4, 20000)] {
        let (m, layout, selected) = random_layout(seed, n);
        check_invariants(&m, &layout, &selected);
        if !selected.is_empty() {
            let total: usize = layout.intersections.iter().map(|c| c.size).sum();
            assert_eq!(total, m.split().evaluation_rows().len());
        }
        let shadow: usize = layout.bubbles.iter().map(|b| b.shadow.len()).sum();
        assert_eq!(shadow, m.split().discovery_rows().len());
    }
}

#[test]
fn hover_matches_direct_intersection() {
    let (m, layout, _) = random_layout(12, 3000);
    let r = m.features()[0].name.clone();
    let v = m.features()[0].vocabulary[0].clone();
    let mask = evaluate_mask(&rule(&[(&r, &v)]), &m).unwrap();
    let direct: Vec<usize> = layout
        .bubbles
        .iter()
        .enumerate()
        .filter(|(_, b)| b.members.iter().any(|&row| mask.contains(row)))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(layout.hover(mask.bits()), direct);
    assert!(!direct.is_empty());
}

#[test]
fn selection_expands_with_shadow_rows() {
    let (m, layout, _) = random_layout(13, 2000);
    let b = &layout.bubbles[0];
    let widened = layout.expand_selection(&b.members);
    assert!(b.members.iter().all(|r| widened.contains(r)));
    assert!(b.shadow.iter().all(|r| widened.contains(r)));
    assert!(widened.iter().all(|&r| r < m.n_rows()));
}

#[test]
fn continuous_outcome_layout() {
    let spec = PlantedTable::new(1500, 5, vec![], 8);
    let (m, _) = planted_table(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<f64> = (0..m.n_rows()).map(|_| rng.gen_range(0.0..10.0)).collect();
    let m = m
        .with_outcome("score", OutcomeVector::Continuous(v.clone()))
        .unwrap();
    let e = embed(&m, 1).unwrap();
    let layout = build_layout(&m, &e, "score", &[], &MapOptions::default()).unwrap();
    let eval = m.split().evaluation_rows();
    let min = eval.iter().map(|&r| v[r]).fold(f64::INFINITY, f64::min);
    let max = eval.iter().map(|&r| v[r]).fold(f64::NEG_INFINITY, f64::max);
    let w = (max - min) / 5.0;
    let cls = |r: usize| (((v[r] - min) / w).floor().max(0.0) as i32).min(4);
    for b in &layout.bubbles {
        assert!(b.members.iter().all(|&r| cls(r) == cls(b.members[0])));
    }
    assert_eq!(
        layout.bubbles.iter().map(|b| b.count).sum::<usize>(),
        m.split().evaluation_rows().len()
    );
}

#[test]
fn layout_json_shape() {
    let (_, layout, _) = random_layout(21, 1000);
    let json: serde_json::Value = serde_json::from_str(&layout.to_json().unwrap()).unwrap();
    for key in ["bubbles", "extent", "intersections", "seed"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let b = &json["bubbles"][0];
    for key in ["x", "y", "r", "count", "outcome", "signature", "members"] {
        assert!(b.get(key).is_some(), "{key}");
    }
    let back: BubbleLayout = serde_json::from_str(&layout.to_json().unwrap()).unwrap();
    assert_eq!(back, layout);
}
