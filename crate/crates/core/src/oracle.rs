//! Exhaustive lattice search, the ground truth for measuring how much the
//! sampled search misses, and the recall/runtime harness built on it.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::bitset::BitSet;
use crate::dataset::FeatureMatrix;
use crate::discovery::{
    conj_metrics, min_count_for, DiscoveryConfig, DiscoveryEngine, SplitPair, SplitSizes,
    SubgroupResult,
};
use crate::error::{Error, Result};
use crate::index::{Conj, RowStats, SplitIndex};
use crate::ranking::{metrics_from_stats, rank_raw, raw_score, RankingKind, RankingSpec};
use crate::rules::Rule;
use crate::scalar::Scalar;

pub const DEFAULT_CAP: u128 = 10_000_000;

/// Number of single-value rules with 1..=`max_length` predicates, before
/// any size filtering.
pub fn estimate_rule_count(matrix: &FeatureMatrix, max_length: usize) -> u128 {
    let mut e = vec![0u128; max_length + 1];
    e[0] = 1;
    for col in matrix.features() {
        let v = col.vocabulary.len() as u128;
        for j in (1..=max_length).rev() {
            e[j] = e[j].saturating_add(e[j - 1].saturating_mul(v));
        }
    }
    e[1..].iter().fold(0u128, |a, &b| a.saturating_add(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveOptions {
    /// Refuse when the estimated rule count exceeds this.
    pub cap: u128,
    /// Materialize only the best `keep` results (all when `None`).
    pub keep: Option<usize>,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
}

impl Default for ExhaustiveOptions {
    fn default() -> Self {
        ExhaustiveOptions {
            cap: DEFAULT_CAP,
            keep: None,
            threads: 0,
        }
    }
}

struct Found {
    conj: Conj,
    eval: RowStats,
}

fn descend(
    disc: &SplitIndex,
    eval: &SplitIndex,
    min_count: u32,
    max_length: usize,
    prefix: &mut Conj,
    dmask: &BitSet,
    emask: &BitSet,
    out: &mut Vec<Found>,
) {
    let start = prefix.last().map_or(0, |&(f, _)| f + 1);
    for f in start..disc.n_features() as u32 {
        for s in disc.feature_slots(f) {
            let code = s - disc.feature_slots(f).start;
            let d = dmask.and(disc.bitmap(s));
            if (d.count_ones() as u32) < min_count {
                continue;
            }
            let e = emask.and(eval.bitmap(eval.slot(f, code)));
            prefix.push((f, code));
            out.push(Found {
                conj: prefix.clone(),
                eval: eval.stats_of_mask(&e),
            });
            if prefix.len() < max_length {
                descend(disc, eval, min_count, max_length, prefix, &d, &e, out);
            }
            prefix.pop();
        }
    }
}

/// Every single-value rule of length `1..=max_length` whose discovery-split
/// size fraction is at least `p_min`, ranked on evaluation metrics with the
/// same combination used for discovery results.
pub fn exhaustive_search<T: Scalar>(
    matrix: &FeatureMatrix,
    p_min: f64,
    max_length: usize,
    specs: &[RankingSpec<T>],
    options: &ExhaustiveOptions,
) -> Result<Vec<SubgroupResult<T>>> {
    check_space(matrix, max_length, options.cap)?;
    let engine = DiscoveryEngine::new(matrix.clone())?;
    exhaustive_search_with(&engine, p_min, max_length, specs, options)
}

fn check_space(matrix: &FeatureMatrix, max_length: usize, cap: u128) -> Result<()> {
    let estimated = estimate_rule_count(matrix, max_length);
    if estimated > cap {
        return Err(Error::SearchSpaceTooLarge { estimated, cap });
    }
    Ok(())
}

pub fn exhaustive_search_with<T: Scalar>(
    engine: &DiscoveryEngine,
    p_min: f64,
    max_length: usize,
    specs: &[RankingSpec<T>],
    options: &ExhaustiveOptions,
) -> Result<Vec<SubgroupResult<T>>> {
    let matrix = engine.matrix();
    if !(p_min > 0.0 && p_min <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p_min must be in (0, 1], got {p_min}"
        )));
    }
    if max_length == 0 {
        return Err(Error::InvalidArgument(
            "max_length must be at least 1".into(),
        ));
    }
    for s in specs {
        s.validate(matrix)?;
    }
    check_space(matrix, max_length, options.cap)?;
    let disc = engine.discovery_index();
    let eval = engine.evaluation_index();
    let min_count = min_count_for(p_min, disc.len());

    let run = |f: u32| {
        let mut out = Vec::new();
        let mut prefix = Conj::new();
        for s in disc.feature_slots(f) {
            let code = s - disc.feature_slots(f).start;
            let d = disc.bitmap(s).clone();
            if (d.count_ones() as u32) < min_count {
                continue;
            }
            let e = eval.bitmap(eval.slot(f, code)).clone();
            prefix.push((f, code));
            out.push(Found {
                conj: prefix.clone(),
                eval: eval.stats_of_mask(&e),
            });
            if max_length > 1 {
                descend(
                    disc,
                    eval,
                    min_count,
                    max_length,
                    &mut prefix,
                    &d,
                    &e,
                    &mut out,
                );
            }
            prefix.pop();
        }
        out
    };
    let features: Vec<u32> = (0..disc.n_features() as u32).collect();
    let per_feature: Vec<Vec<Found>> = if options.threads == 1 {
        features.iter().map(|&f| run(f)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        pool.install(|| features.par_iter().map(|&f| run(f)).collect())
    };
    let found: Vec<Found> = per_feature.into_iter().flatten().collect();

    let needs_subsets = specs
        .iter()
        .any(|s| s.kind == RankingKind::InteractionEffect);
    let mut memo: FxHashMap<Conj, RowStats> = FxHashMap::default();
    let mut raw = Vec::with_capacity(found.len());
    for c in &found {
        let subs: Option<Vec<RowStats>> = needs_subsets.then(|| {
            let k = c.conj.len();
            (0u32..(1 << k) - 1)
                .map(|bits| {
                    let sub: Conj = (0..k)
                        .filter(|i| bits >> i & 1 == 1)
                        .map(|i| c.conj[i])
                        .collect();
                    if sub.is_empty() {
                        eval.total_stats()
                    } else {
                        memo.entry(sub.clone())
                            .or_insert_with(|| eval.stats_of_conj(&sub))
                            .clone()
                    }
                })
                .collect()
        });
        let m = metrics_from_stats::<T>(eval, &c.eval, subs.as_deref());
        raw.push(
            specs
                .iter()
                .map(|s| raw_score(s, &m, c.conj.len()))
                .collect::<Vec<_>>(),
        );
    }
    let weights: Vec<u8> = specs.iter().map(|s| s.weight).collect();
    let sizes: Vec<u32> = found.iter().map(|c| c.eval.count).collect();
    let texts: Vec<String> = found
        .iter()
        .map(|c| Rule::from_codes(matrix, &c.conj).to_string())
        .collect();
    let (order, mut scores) = rank_raw(&raw, &weights, &sizes, &texts)?;
    let keep = options.keep.unwrap_or(order.len()).min(order.len());

    let mut disc_memo = FxHashMap::default();
    let mut eval_memo = FxHashMap::default();
    Ok(order[..keep]
        .iter()
        .map(|&i| {
            let conj = &found[i].conj;
            let discovery = conj_metrics(disc, conj, &mut disc_memo);
            let evaluation = conj_metrics(eval, conj, &mut eval_memo);
            SubgroupResult {
                rule: Rule::from_codes(matrix, conj),
                size: SplitSizes {
                    discovery: discovery.size,
                    evaluation: evaluation.size,
                },
                metrics: SplitPair {
                    discovery,
                    evaluation,
                },
                scores: std::mem::take(&mut scores[i]),
                provenance: Vec::new(),
            }
        })
        .collect())
}

/// Share of the exact top `k` that also appears in the approximate top `k`,
/// matching rules by identity.
pub fn recall_at_k<T: Scalar>(
    approx: &[SubgroupResult<T>],
    exact: &[SubgroupResult<T>],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if exact.len() < k {
        return Err(Error::InvalidArgument(format!(
            "exact result list has {} entries, fewer than k = {k}",
            exact.len()
        )));
    }
    let truth: std::collections::HashSet<&Rule> = exact[..k].iter().map(|r| &r.rule).collect();
    let hits = approx
        .iter()
        .take(k)
        .filter(|r| truth.contains(&r.rule))
        .count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub recall: f64,
    pub k: usize,
    pub approx_time: f64,
    pub exact_time: f64,
    pub config: String,
}

/// Times one discovery run and one exhaustive run with the same ranking and
/// compares their top `k`.
pub fn measure_recall<T: Scalar>(
    matrix: &FeatureMatrix,
    config: &DiscoveryConfig<T>,
    k: usize,
) -> Result<RecallReport> {
    let engine = DiscoveryEngine::new(matrix.clone())?;
    let t = Instant::now();
    let approx = engine.discover(config)?;
    let approx_time = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let options = ExhaustiveOptions {
        keep: Some(k),
        threads: config.threads,
        ..Default::default()
    };
    let exact = exhaustive_search_with(
        &engine,
        config.min_size,
        config.max_length,
        &config.specs,
        &options,
    )?;
    let exact_time = t.elapsed().as_secs_f64();
    Ok(RecallReport {
        recall: recall_at_k(&approx, &exact, k)?,
        k,
        approx_time,
        exact_time,
        config: config.echo(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n_samples: Vec<usize>,
    pub p_min: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_samples: usize,
    pub p_min: f64,
    pub trial: usize,
    pub runtime_s: f64,
    pub recall_at_50: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n_samples: usize,
    pub p_min: f64,
    pub trials: usize,
    pub runtime_mean: f64,
    pub runtime_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
}

pub const SWEEP_K: usize = 50;

/// Runs discovery for every grid cell and trial (trial `t` uses seed
/// `base.seed + t`) and scores each run against the exhaustive top 50 for
/// its `p_min`.
pub fn run_sweep<T: Scalar>(
    matrix: &FeatureMatrix,
    grid: &SweepGrid,
    trials: usize,
    base: &DiscoveryConfig<T>,
) -> Result<Vec<SweepRow>> {
    if grid.n_samples.is_empty() || grid.p_min.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if let Some(p) = grid.p_min.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "p_min must be in (0, 1], got {p}"
        )));
    }
    if grid.n_samples.contains(&0) {
        return Err(Error::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    let engine = DiscoveryEngine::new(matrix.clone())?;
    let mut rows = Vec::new();
    for &p_min in &grid.p_min {
        let options = ExhaustiveOptions {
            keep: Some(SWEEP_K),
            threads: base.threads,
            ..Default::default()
        };
        let exact = exhaustive_search_with(&engine, p_min, base.max_length, &base.specs, &options)?;
        for &n in &grid.n_samples {
            for trial in 0..trials {
                let mut c = base.clone();
                c.n_samples = n;
                c.min_size = p_min;
                c.seed = base.seed.wrapping_add(trial as u64);
                let t = Instant::now();
                let approx = engine.discover(&c)?;
                let runtime_s = t.elapsed().as_secs_f64();
                let k = SWEEP_K.min(exact.len()).max(1);
                let recall = if exact.is_empty() {
                    1.0
                } else {
                    recall_at_k(&approx, &exact, k)?
                };
                rows.push(SweepRow {
                    n_samples: n,
                    p_min,
                    trial,
                    runtime_s,
                    recall_at_50: recall,
                });
            }
        }
    }
    Ok(rows)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and standard deviation per grid cell, in first-seen order.
pub fn summarize_sweep(rows: &[SweepRow]) -> Vec<SweepCell> {
    let mut cells: Vec<((usize, u64), Vec<&SweepRow>)> = Vec::new();
    for r in rows {
        let key = (r.n_samples, r.p_min.to_bits());
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => cells.push((key, vec![r])),
        }
    }
    cells
        .into_iter()
        .map(|(_, v)| {
            let (runtime_mean, runtime_std) =
                mean_std(&v.iter().map(|r| r.runtime_s).collect::<Vec<_>>());
            let (recall_mean, recall_std) =
                mean_std(&v.iter().map(|r| r.recall_at_50).collect::<Vec<_>>());
            SweepCell {
                n_samples: v[0].n_samples,
                p_min: v[0].p_min,
                trials: v.len(),
                runtime_mean,
                runtime_std,
                recall_mean,
                recall_std,
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
