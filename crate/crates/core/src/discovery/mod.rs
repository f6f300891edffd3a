//! Sampled beam-search subgroup discovery.
//!
//! A small number of source rows is drawn from the discovery split. From
//! each, a beam search explores conjunctions that the row satisfies,
//! keeping the top `k` rules per ranking function at every level. The
//! surviving pool gets evaluation-split metrics and is ranked on those.

mod beam;
mod expand;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::bitset::BitSet;
use crate::dataset::{FeatureMatrix, OutcomeVector};
use crate::error::{Error, Result};
use crate::index::{Conj, RowStats, SplitIndex};
use crate::ranking::{
    combine_and_rank, metrics_from_stats, RankingSpec, ScoreVector, SplitMetrics,
};
use crate::rules::{rule_subsets, Rule};
use crate::scalar::Scalar;

use beam::{CollectAll, Context, RetainTop, TopK};
use expand::ExpansionCache;

pub(crate) use beam::min_count_for;

/// Weight given to the selection-membership ranking in targeted search.
pub const SELECTION_WEIGHT: u8 = 4;

fn default_n_samples() -> usize {
    100
}
fn default_min_size() -> f64 {
    0.01
}
fn default_beam_width() -> usize {
    50
}
fn default_max_length() -> usize {
    3
}
fn default_results_per_spec() -> usize {
    500
}
fn default_cache_mb() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DiscoveryConfig<T: Scalar> {
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// Rows eligible as source rows, over all rows of the matrix.
    #[serde(skip)]
    pub source_mask: Option<BitSet>,
    #[serde(default = "default_min_size")]
    pub min_size: f64,
    #[serde(default = "default_beam_width")]
    pub beam_width: usize,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub specs: Vec<RankingSpec<T>>,
    /// Rules kept per ranking function in the returned pool.
    #[serde(default = "default_results_per_spec")]
    pub results_per_spec: usize,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_cache_mb")]
    pub cache_mb: usize,
}

impl<T: Scalar> DiscoveryConfig<T> {
    pub fn new(specs: Vec<RankingSpec<T>>) -> Self {
        DiscoveryConfig {
            n_samples: default_n_samples(),
            source_mask: None,
            min_size: default_min_size(),
            beam_width: default_beam_width(),
            max_length: default_max_length(),
            seed: 0,
            specs,
            results_per_spec: default_results_per_spec(),
            threads: 0,
            cache_mb: default_cache_mb(),
        }
    }

    /// One-line summary of the search parameters.
    pub fn echo(&self) -> String {
        format!(
            "n={}, p_min={}, k={}, L={}, seed={}",
            self.n_samples, self.min_size, self.beam_width, self.max_length, self.seed
        )
    }

    pub fn validate(&self, matrix: &FeatureMatrix) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1".into());
        }
        if !(self.min_size > 0.0 && self.min_size <= 1.0) {
            return bad(format!("min_size must be in (0, 1], got {}", self.min_size));
        }
        if self.beam_width == 0 {
            return bad("beam_width must be at least 1".into());
        }
        if self.max_length == 0 {
            return bad("max_length must be at least 1".into());
        }
        if self.results_per_spec == 0 {
            return bad("results_per_spec must be at least 1".into());
        }
        for s in &self.specs {
            s.validate(matrix)?;
        }
        if !self
            .specs
            .iter()
            .any(|s| s.enabled() && s.kind.guides_search())
        {
            return bad("at least one enabled outcome-based ranking function is required to guide the search".into());
        }
        if let Some(m) = &self.source_mask {
            if m.len() != matrix.n_rows() {
                return bad(format!(
                    "source mask covers {} rows, matrix has {}",
                    m.len(),
                    matrix.n_rows()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub discovery: u32,
    pub evaluation: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SplitPair<T: Scalar> {
    pub discovery: SplitMetrics<T>,
    pub evaluation: SplitMetrics<T>,
}

/// A rule with its metrics on both splits, ranking breakdown and the source
/// rows whose searches produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SubgroupResult<T: Scalar> {
    pub rule: Rule,
    pub size: SplitSizes,
    pub metrics: SplitPair<T>,
    #[serde(default)]
    pub scores: ScoreVector<T>,
    #[serde(default)]
    pub provenance: Vec<usize>,
}

impl<T: Scalar> SubgroupResult<T> {
    pub fn evaluation(&self) -> &SplitMetrics<T> {
        &self.metrics.evaluation
    }

    pub fn discovery(&self) -> &SplitMetrics<T> {
        &self.metrics.discovery
    }
}

/// One evaluated rule from a single beam search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Candidate<T: Scalar> {
    pub rule: Rule,
    /// Size on the discovery split.
    pub count: u32,
    /// Discovery-split score per ranking function, in config order.
    pub scores: Vec<Option<T>>,
}

/// Everything a single beam search looked at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BeamTrace<T: Scalar> {
    /// Config positions of the ranking functions that steer the beams.
    pub guiding: Vec<usize>,
    /// `levels[l][g]` is the beam of guiding function `g` after level `l+1`,
    /// best first.
    pub levels: Vec<Vec<Vec<Rule>>>,
    pub candidates: Vec<Candidate<T>>,
}

/// Draws up to `n_samples` distinct source rows from the discovery split,
/// restricted to the source mask when one is set. Sorted ascending.
pub fn sample_source_rows<T: Scalar>(
    matrix: &FeatureMatrix,
    config: &DiscoveryConfig<T>,
) -> Result<Vec<usize>> {
    if config.n_samples == 0 {
        return Err(Error::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    let pool: Vec<usize> = match &config.source_mask {
        Some(m) => {
            if m.len() != matrix.n_rows() {
                return Err(Error::InvalidArgument(format!(
                    "source mask covers {} rows, matrix has {}",
                    m.len(),
                    matrix.n_rows()
                )));
            }
            matrix
                .split()
                .discovery_rows()
                .iter()
                .copied()
                .filter(|&r| m.contains(r))
                .collect()
        }
        None => matrix.split().discovery_rows().to_vec(),
    };
    if pool.is_empty() {
        return Err(Error::EmptySource(
            "no discovery-split rows are eligible as source rows".into(),
        ));
    }
    let amount = config.n_samples.min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), amount)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    rows.sort_unstable();
    Ok(rows)
}

/// Split indexes over one matrix, reusable across discovery runs and rule
/// evaluations.
pub struct DiscoveryEngine {
    matrix: FeatureMatrix,
    discovery: SplitIndex,
    evaluation: SplitIndex,
}

impl DiscoveryEngine {
    pub fn new(matrix: FeatureMatrix) -> Result<Self> {
        let names: Vec<String> = matrix.outcomes().keys().cloned().collect();
        let discovery = SplitIndex::discovery(&matrix, &names)?;
        let evaluation = SplitIndex::evaluation(&matrix, &names)?;
        Ok(DiscoveryEngine {
            matrix,
            discovery,
            evaluation,
        })
    }

    pub fn matrix(&self) -> &FeatureMatrix {
        &self.matrix
    }

    pub fn discovery_index(&self) -> &SplitIndex {
        &self.discovery
    }

    pub fn evaluation_index(&self) -> &SplitIndex {
        &self.evaluation
    }

    /// Runs one beam search from `row` (a global id in the discovery split)
    /// and returns every rule it evaluated together with the beams.
    pub fn beam_search_from_row<T: Scalar>(
        &self,
        row: usize,
        config: &DiscoveryConfig<T>,
    ) -> Result<BeamTrace<T>> {
        config.validate(&self.matrix)?;
        let local = self.discovery.local_row(row).ok_or_else(|| {
            Error::InvalidArgument(format!("row {row} is not in the discovery split"))
        })?;
        let cache = ExpansionCache::new(config.cache_mb << 20);
        let ctx = Context::new(
            &self.discovery,
            &cache,
            &config.specs,
            config.min_size,
            config.beam_width,
            config.max_length,
        );
        let mut sink = CollectAll::<T>::default();
        let mut levels = Vec::new();
        ctx.search(local, &mut sink, Some(&mut levels));
        let to_rule = |c: &Conj| Rule::from_codes(&self.matrix, c);
        Ok(BeamTrace {
            guiding: (0..config.specs.len())
                .filter(|&i| ctx.plans[i].drives)
                .collect(),
            levels: levels
                .iter()
                .map(|l| l.iter().map(|b| b.iter().map(to_rule).collect()).collect())
                .collect(),
            candidates: sink
                .rules
                .into_iter()
                .map(|(c, st, sc)| Candidate {
                    rule: to_rule(&c),
                    count: st.count,
                    scores: sc.into_vec(),
                })
                .collect(),
        })
    }

    /// Sampled beam search from every source row, merged, scored on the
    /// evaluation split and ranked.
    pub fn discover<T: Scalar>(
        &self,
        config: &DiscoveryConfig<T>,
    ) -> Result<Vec<SubgroupResult<T>>> {
        config.validate(&self.matrix)?;
        let rows = sample_source_rows(&self.matrix, config)?;
        let cache = ExpansionCache::new(config.cache_mb << 20);
        let ctx = Context::new(
            &self.discovery,
            &cache,
            &config.specs,
            config.min_size,
            config.beam_width,
            config.max_length,
        );
        let n_specs = config.specs.len();
        let cap = config.results_per_spec;
        let run = |&g: &usize| {
            let local = self
                .discovery
                .local_row(g)
                .expect("sampled from discovery rows");
            let mut sink = RetainTop::<T>::new(n_specs, cap);
            ctx.search(local, &mut sink, None);
            sink.per_spec
                .into_iter()
                .map(|t| t.into_sorted())
                .collect::<Vec<_>>()
        };
        let per_row: Vec<Vec<Vec<(Conj, T, u32, beam::Retained<T>)>>> = if config.threads == 1 {
            rows.iter().map(run).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
            pool.install(|| rows.par_iter().map(run).collect())
        };

        // Merge in source-row order.
        struct Merged<T: Scalar> {
            key: Conj,
            stats: RowStats,
            scores: beam::Scores<T>,
            provenance: Vec<usize>,
        }
        let mut slot_of: FxHashMap<Conj, usize> = FxHashMap::default();
        let mut merged: Vec<Merged<T>> = Vec::new();
        for (&row, lists) in rows.iter().zip(per_row) {
            for list in lists {
                for (key, _, _, (stats, scores)) in list {
                    let i = *slot_of.entry(key.clone()).or_insert_with(|| {
                        merged.push(Merged {
                            key,
                            stats,
                            scores,
                            provenance: Vec::new(),
                        });
                        merged.len() - 1
                    });
                    if merged[i].provenance.last() != Some(&row) {
                        merged[i].provenance.push(row);
                    }
                }
            }
        }

        let mut keep = vec![false; merged.len()];
        for s in 0..n_specs {
            let mut top: TopK<T, usize> = TopK::new(cap);
            for (i, m) in merged.iter().enumerate() {
                if let Some(sc) = m.scores[s] {
                    top.offer(sc, m.stats.count, &mut || m.key.clone(), || i);
                }
            }
            for (_, _, _, i) in top.into_sorted() {
                keep[i] = true;
            }
        }

        let mut disc_memo = FxHashMap::default();
        let mut eval_memo = FxHashMap::default();
        let results: Vec<SubgroupResult<T>> = merged
            .into_iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(m, _)| {
                let discovery = conj_metrics(&self.discovery, &m.key, &mut disc_memo);
                let evaluation = conj_metrics(&self.evaluation, &m.key, &mut eval_memo);
                SubgroupResult {
                    rule: Rule::from_codes(&self.matrix, &m.key),
                    size: SplitSizes {
                        discovery: discovery.size,
                        evaluation: evaluation.size,
                    },
                    metrics: SplitPair {
                        discovery,
                        evaluation,
                    },
                    scores: ScoreVector::default(),
                    provenance: m.provenance,
                }
            })
            .collect();
        combine_and_rank(results, &config.specs)
    }

    /// Metrics of an arbitrary (possibly multi-valued) rule on both splits.
    pub fn evaluate_rule<T: Scalar>(&self, rule: &Rule) -> Result<SubgroupResult<T>> {
        let discovery = rule_metrics(&self.discovery, &self.matrix, rule)?;
        let evaluation = rule_metrics(&self.evaluation, &self.matrix, rule)?;
        Ok(SubgroupResult {
            rule: rule.clone(),
            size: SplitSizes {
                discovery: discovery.size,
                evaluation: evaluation.size,
            },
            metrics: SplitPair {
                discovery,
                evaluation,
            },
            scores: ScoreVector::default(),
            provenance: Vec::new(),
        })
    }
}

fn memo_stats(index: &SplitIndex, conj: &Conj, memo: &mut FxHashMap<Conj, RowStats>) -> RowStats {
    if conj.is_empty() {
        return index.total_stats();
    }
    memo.entry(conj.clone())
        .or_insert_with(|| index.stats_of_conj(conj))
        .clone()
}

pub(crate) fn conj_metrics<T: Scalar>(
    index: &SplitIndex,
    conj: &Conj,
    memo: &mut FxHashMap<Conj, RowStats>,
) -> SplitMetrics<T> {
    let stats = memo_stats(index, conj, memo);
    let k = conj.len();
    let subs: Vec<RowStats> = (0u32..(1 << k) - 1)
        .map(|bits| {
            let sub: Conj = (0..k)
                .filter(|i| bits >> i & 1 == 1)
                .map(|i| conj[i])
                .collect();
            memo_stats(index, &sub, memo)
        })
        .collect();
    metrics_from_stats(index, &stats, Some(&subs))
}

fn rule_metrics<T: Scalar>(
    index: &SplitIndex,
    matrix: &FeatureMatrix,
    rule: &Rule,
) -> Result<SplitMetrics<T>> {
    let mut memo: HashMap<Rule, RowStats> = HashMap::new();
    let mut stats_of = |r: &Rule| -> Result<RowStats> {
        if let Some(s) = memo.get(r) {
            return Ok(s.clone());
        }
        let s = index.stats_of_mask(&index.rule_mask(r, matrix)?);
        memo.insert(r.clone(), s.clone());
        Ok(s)
    };
    let stats = stats_of(rule)?;
    let subs = rule_subsets(rule)
        .iter()
        .map(&mut stats_of)
        .collect::<Result<Vec<_>>>()?;
    Ok(metrics_from_stats(index, &stats, Some(&subs)))
}

/// Convenience wrapper building the split indexes for a single run.
pub fn discover<T: Scalar>(
    matrix: &FeatureMatrix,
    config: &DiscoveryConfig<T>,
) -> Result<Vec<SubgroupResult<T>>> {
    config.validate(matrix)?;
    DiscoveryEngine::new(matrix.clone())?.discover(config)
}

pub fn beam_search_from_row<T: Scalar>(
    row: usize,
    matrix: &FeatureMatrix,
    config: &DiscoveryConfig<T>,
) -> Result<BeamTrace<T>> {
    DiscoveryEngine::new(matrix.clone())?.beam_search_from_row(row, config)
}

/// Name under which targeted search registers selection membership.
pub fn selection_outcome_name(matrix: &FeatureMatrix) -> String {
    let mut name = "selection".to_string();
    let mut i = 2;
    while matrix.outcomes().contains_key(&name) {
        name = format!("selection_{i}");
        i += 1;
    }
    name
}

/// The config and matrix that targeted search runs with: selection
/// membership becomes a binary outcome ranked by its rate, and source rows
/// are drawn from the selection only.
pub fn targeted_setup<T: Scalar>(
    matrix: &FeatureMatrix,
    config: &DiscoveryConfig<T>,
    selection: &BitSet,
) -> Result<(FeatureMatrix, DiscoveryConfig<T>)> {
    if selection.len() != matrix.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "selection covers {} rows, matrix has {}",
            selection.len(),
            matrix.n_rows()
        )));
    }
    if selection.count_ones() == 0 {
        return Err(Error::EmptySource("selection is empty".into()));
    }
    let name = selection_outcome_name(matrix);
    let y: Vec<u8> = (0..matrix.n_rows())
        .map(|r| selection.contains(r) as u8)
        .collect();
    let m = matrix.with_outcome(&name, OutcomeVector::Binary(y))?;
    let mut c = config.clone();
    c.specs
        .push(RankingSpec::selection(&name).with_weight(SELECTION_WEIGHT));
    c.source_mask = Some(selection.clone());
    Ok((m, c))
}

pub fn targeted_discover<T: Scalar>(
    matrix: &FeatureMatrix,
    config: &DiscoveryConfig<T>,
    selection: &BitSet,
) -> Result<Vec<SubgroupResult<T>>> {
    let (m, c) = targeted_setup(matrix, config, selection)?;
    discover(&m, &c)
}
