//! Ranking functions and their weighted combination.
//!
//! Every score is a non-negative function of a subgroup's metrics on one
//! split. Scores that cannot be computed (empty subgroup, no positives in
//! the split) are `None` and count as zero once normalized.

use std::cmp::Ordering;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureMatrix, OutcomeVector};
use crate::discovery::SubgroupResult;
use crate::error::{Error, Result};
use crate::index::{RowStats, SplitIndex};
use crate::rules::{evaluate_mask, rule_subsets, Mask, Rule};
use crate::scalar::Scalar;

pub const MAX_WEIGHT: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingKind {
    OutcomeRateHigh,
    OutcomeRateLow,
    OutcomeCoverage,
    InteractionEffect,
    MeanDifference,
    GroupSize,
    SimpleRule,
    SelectionScore,
}

impl RankingKind {
    pub fn needs_outcome(self) -> bool {
        !matches!(self, RankingKind::GroupSize | RankingKind::SimpleRule)
    }

    pub fn needs_binary_outcome(self) -> bool {
        self.needs_outcome() && self != RankingKind::MeanDifference
    }

    /// Whether this kind can steer the beam. Size and rule-length scores only
    /// take part in the final ranking.
    pub fn guides_search(self) -> bool {
        self.needs_outcome()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RankingKind::OutcomeRateHigh => "outcome-rate-high",
            RankingKind::OutcomeRateLow => "outcome-rate-low",
            RankingKind::OutcomeCoverage => "outcome-coverage",
            RankingKind::InteractionEffect => "interaction-effect",
            RankingKind::MeanDifference => "mean-difference",
            RankingKind::GroupSize => "group-size",
            RankingKind::SimpleRule => "simple-rule",
            RankingKind::SelectionScore => "selection-score",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GroupSizeParams<T: Scalar> {
    pub ideal: T,
    pub spread: T,
}

impl<T: Scalar> Default for GroupSizeParams<T> {
    fn default() -> Self {
        GroupSizeParams {
            ideal: T::from_f64_lossy(0.1),
            spread: T::from_f64_lossy(0.1),
        }
    }
}

fn default_weight() -> u8 {
    1
}

/// A ranking function instance. Weight 0 disables it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RankingSpec<T: Scalar> {
    pub kind: RankingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default = "default_weight")]
    pub weight: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<GroupSizeParams<T>>,
}

impl<T: Scalar> RankingSpec<T> {
    pub fn new(kind: RankingKind, outcome: Option<&str>) -> Self {
        RankingSpec {
            kind,
            outcome: outcome.map(str::to_string),
            weight: 1,
            params: None,
        }
    }

    pub fn rate_high(outcome: &str) -> Self {
        Self::new(RankingKind::OutcomeRateHigh, Some(outcome))
    }

    pub fn rate_low(outcome: &str) -> Self {
        Self::new(RankingKind::OutcomeRateLow, Some(outcome))
    }

    pub fn coverage(outcome: &str) -> Self {
        Self::new(RankingKind::OutcomeCoverage, Some(outcome))
    }

    pub fn interaction(outcome: &str) -> Self {
        Self::new(RankingKind::InteractionEffect, Some(outcome))
    }

    pub fn mean_difference(outcome: &str) -> Self {
        Self::new(RankingKind::MeanDifference, Some(outcome))
    }

    pub fn group_size() -> Self {
        Self::new(RankingKind::GroupSize, None)
    }

    pub fn group_size_with(ideal: T, spread: T) -> Self {
        RankingSpec {
            params: Some(GroupSizeParams { ideal, spread }),
            ..Self::group_size()
        }
    }

    pub fn simple_rule() -> Self {
        Self::new(RankingKind::SimpleRule, None)
    }

    pub fn selection(outcome: &str) -> Self {
        Self::new(RankingKind::SelectionScore, Some(outcome))
    }

    pub fn with_weight(mut self, weight: u8) -> Self {
        self.weight = weight;
        self
    }

    pub fn enabled(&self) -> bool {
        self.weight > 0
    }

    pub fn group_params(&self) -> GroupSizeParams<T> {
        self.params.unwrap_or_default()
    }

    pub fn label(&self) -> String {
        match &self.outcome {
            Some(o) => format!("{}({o})", self.kind.as_str()),
            None => self.kind.as_str().to_string(),
        }
    }

    pub fn validate(&self, matrix: &FeatureMatrix) -> Result<()> {
        if self.weight > MAX_WEIGHT {
            return Err(Error::InvalidArgument(format!(
                "weight {} for {} exceeds {MAX_WEIGHT}",
                self.weight,
                self.label()
            )));
        }
        if self.kind.needs_outcome() {
            let name = self.outcome.as_deref().ok_or_else(|| {
                Error::InvalidArgument(format!("{} needs an outcome", self.kind.as_str()))
            })?;
            let o = matrix.outcome(name)?;
            if self.kind.needs_binary_outcome() != o.is_binary() {
                return Err(Error::InvalidArgument(format!(
                    "{} cannot use {} outcome {name:?}",
                    self.kind.as_str(),
                    if o.is_binary() {
                        "binary"
                    } else {
                        "continuous"
                    }
                )));
            }
        }
        if self.kind == RankingKind::GroupSize {
            let p = self.group_params();
            if !(p.ideal > T::zero() && p.ideal <= T::one()) || !(p.spread > T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "group-size needs ideal in (0, 1] and spread > 0, got {} and {}",
                    p.ideal, p.spread
                )));
            }
        }
        Ok(())
    }
}

/// Per-outcome metrics of a subgroup on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", bound = "")]
pub enum OutcomeMetrics<T: Scalar> {
    Binary {
        positives: u32,
        rate: Option<T>,
        coverage: Option<T>,
        /// Highest rate among sub-rules, including the empty rule.
        max_subset_rate: Option<T>,
    },
    Continuous {
        mean: Option<T>,
        mean_difference: Option<T>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SplitMetrics<T: Scalar> {
    pub size: u32,
    pub size_fraction: Option<T>,
    pub outcomes: IndexMap<String, OutcomeMetrics<T>>,
}

pub fn rate_of<T: Scalar>(positives: u32, count: u32) -> Option<T> {
    (count > 0).then(|| T::from_count(positives as usize) / T::from_count(count as usize))
}

pub fn coverage_of<T: Scalar>(positives: u32, total_positives: u32) -> Option<T> {
    (total_positives > 0)
        .then(|| T::from_count(positives as usize) / T::from_count(total_positives as usize))
}

/// `exp(-(p - ideal)^2 / (2 spread^2))`.
pub fn gaussian_size<T: Scalar>(fraction: T, ideal: T, spread: T) -> T {
    let d = fraction - ideal;
    (-(d * d) / (T::from_f64_lossy(2.0) * spread * spread)).exp()
}

/// `1 / (1 + ln k)`, and 1 for the empty rule.
pub fn simple_rule_of_len<T: Scalar>(k: usize) -> T {
    if k == 0 {
        return T::one();
    }
    T::one() / (T::one() + T::from_count(k).ln())
}

/// Ratio of a rule's rate to the best rate among its sub-rules.
pub fn interaction_of<T: Scalar>(rate: Option<T>, max_subset_rate: Option<T>) -> Option<T> {
    let (r, m) = (rate?, max_subset_rate?);
    if m > T::zero() {
        Some(r / m)
    } else {
        // every sub-rule has rate 0, so the rule itself does too
        Some(T::zero())
    }
}

/// Metrics for a row set given its stats and the stats of its proper
/// sub-rules (needed only for the interaction effect).
pub fn metrics_from_stats<T: Scalar>(
    index: &SplitIndex,
    stats: &RowStats,
    subsets: Option<&[RowStats]>,
) -> SplitMetrics<T> {
    let total = index.total_stats();
    let size_fraction = (total.count > 0)
        .then(|| T::from_count(stats.count as usize) / T::from_count(total.count as usize));
    let mut outcomes = IndexMap::new();
    let mut b = 0;
    let mut c = 0;
    for o in index.outcomes() {
        let m = match o.data {
            crate::index::LocalOutcome::Binary { .. } => {
                let pos = stats.positives[b];
                let max_subset_rate = subsets.and_then(|subs| {
                    if subs.is_empty() {
                        return None;
                    }
                    let mut best: Option<T> = None;
                    for s in subs {
                        let r = rate_of::<T>(s.positives[b], s.count)?;
                        best = Some(best.map_or(r, |x: T| x.max(r)));
                    }
                    best
                });
                let m = OutcomeMetrics::Binary {
                    positives: pos,
                    rate: rate_of(pos, stats.count),
                    coverage: coverage_of(pos, total.positives[b]),
                    max_subset_rate,
                };
                b += 1;
                m
            }
            crate::index::LocalOutcome::Continuous { .. } => {
                let mean = (stats.count > 0)
                    .then(|| T::from_f64_lossy(stats.sums[c] / stats.count as f64));
                let overall = (total.count > 0)
                    .then(|| T::from_f64_lossy(total.sums[c] / total.count as f64));
                let m = OutcomeMetrics::Continuous {
                    mean,
                    mean_difference: mean.zip(overall).map(|(a, o)| (a - o).abs()),
                };
                c += 1;
                m
            }
        };
        outcomes.insert(o.name.clone(), m);
    }
    SplitMetrics {
        size: stats.count,
        size_fraction,
        outcomes,
    }
}

/// Raw score of one ranking function from split metrics.
pub fn raw_score<T: Scalar>(
    spec: &RankingSpec<T>,
    metrics: &SplitMetrics<T>,
    rule_len: usize,
) -> Option<T> {
    let outcome = || {
        spec.outcome
            .as_deref()
            .and_then(|o| metrics.outcomes.get(o))
    };
    match spec.kind {
        RankingKind::OutcomeRateHigh | RankingKind::SelectionScore => match outcome()? {
            OutcomeMetrics::Binary { rate, .. } => *rate,
            _ => None,
        },
        RankingKind::OutcomeRateLow => match outcome()? {
            OutcomeMetrics::Binary { rate, .. } => rate.map(|r| T::one() - r),
            _ => None,
        },
        RankingKind::OutcomeCoverage => match outcome()? {
            OutcomeMetrics::Binary { coverage, .. } => *coverage,
            _ => None,
        },
        RankingKind::InteractionEffect => match outcome()? {
            OutcomeMetrics::Binary {
                rate,
                max_subset_rate,
                ..
            } if rule_len > 0 => interaction_of(*rate, *max_subset_rate),
            _ => None,
        },
        RankingKind::MeanDifference => match outcome()? {
            OutcomeMetrics::Continuous {
                mean_difference, ..
            } => *mean_difference,
            _ => None,
        },
        RankingKind::GroupSize => {
            let p = spec.group_params();
            metrics
                .size_fraction
                .filter(|_| metrics.size > 0)
                .map(|f| gaussian_size(f, p.ideal, p.spread))
        }
        RankingKind::SimpleRule => Some(simple_rule_of_len(rule_len)),
    }
}

// Mask-level entry points. `rows` is the split the score is computed on.

fn binary_counts(mask: &Mask, y: &[u8], rows: &[usize]) -> (u32, u32) {
    let mut count = 0;
    let mut pos = 0;
    for &r in rows {
        if mask.contains(r) {
            count += 1;
            pos += (y[r] != 0) as u32;
        }
    }
    (count, pos)
}

/// Share of positive outcomes inside the subgroup.
pub fn outcome_rate<T: Scalar>(mask: &Mask, y: &[u8], rows: &[usize]) -> Result<T> {
    let (count, pos) = binary_counts(mask, y, rows);
    rate_of(pos, count).ok_or_else(|| Error::UndefinedScore("empty subgroup".into()))
}

pub fn outcome_rate_low<T: Scalar>(mask: &Mask, y: &[u8], rows: &[usize]) -> Result<T> {
    outcome_rate::<T>(mask, y, rows).map(|r| T::one() - r)
}

/// Share of all positives in `rows` that fall inside the subgroup.
pub fn outcome_coverage<T: Scalar>(mask: &Mask, y: &[u8], rows: &[usize]) -> Result<T> {
    let (_, pos) = binary_counts(mask, y, rows);
    let total = rows.iter().filter(|&&r| y[r] != 0).count() as u32;
    coverage_of(pos, total)
        .ok_or_else(|| Error::UndefinedScore("no positive outcomes in split".into()))
}

pub fn mean_difference<T: Scalar>(mask: &Mask, y: &[f64], rows: &[usize]) -> Result<T> {
    let mut n = 0usize;
    let mut s = 0.0;
    for &r in rows {
        if mask.contains(r) {
            n += 1;
            s += y[r];
        }
    }
    if n == 0 || rows.is_empty() {
        return Err(Error::UndefinedScore("empty subgroup".into()));
    }
    let overall: f64 = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    Ok(T::from_f64_lossy((s / n as f64 - overall).abs()))
}

pub fn group_size_score<T: Scalar>(mask: &Mask, rows: &[usize], ideal: T, spread: T) -> Result<T> {
    if !(spread > T::zero()) {
        return Err(Error::InvalidArgument("spread must be positive".into()));
    }
    if rows.is_empty() {
        return Err(Error::UndefinedScore("empty split".into()));
    }
    let n = rows.iter().filter(|&&r| mask.contains(r)).count();
    let p = T::from_count(n) / T::from_count(rows.len());
    Ok(gaussian_size(p, ideal, spread))
}

pub fn simple_rule_score<T: Scalar>(rule: &Rule) -> T {
    simple_rule_of_len(rule.len())
}

/// Rate of `rule` divided by the highest rate among its proper sub-rules.
pub fn interaction_effect<T: Scalar>(
    rule: &Rule,
    outcome: &str,
    matrix: &FeatureMatrix,
    rows: &[usize],
) -> Result<T> {
    if rule.is_empty() {
        return Err(Error::UndefinedScore(
            "interaction effect needs at least one predicate".into(),
        ));
    }
    let y = match matrix.outcome(outcome)? {
        OutcomeVector::Binary(y) => y,
        OutcomeVector::Continuous(_) => {
            return Err(Error::InvalidArgument(format!(
                "outcome {outcome:?} is not binary"
            )))
        }
    };
    let rate: T = outcome_rate(&evaluate_mask(rule, matrix)?, y, rows)?;
    let mut best: Option<T> = None;
    for sub in rule_subsets(rule) {
        let r: T = outcome_rate(&evaluate_mask(&sub, matrix)?, y, rows)?;
        best = Some(best.map_or(r, |b: T| b.max(r)));
    }
    Ok(interaction_of(Some(rate), best).expect("defined"))
}

/// Per-candidate score breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ScoreVector<T: Scalar> {
    pub raw: Vec<Option<T>>,
    pub normalized: Vec<T>,
    pub total: T,
}

impl<T: Scalar> Default for ScoreVector<T> {
    fn default() -> Self {
        ScoreVector {
            raw: Vec::new(),
            normalized: Vec::new(),
            total: T::zero(),
        }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Min-max normalizes each enabled column of `raw` over the pool and sums
/// the weighted results. Returns the descending order plus the breakdowns.
///
/// Ties are broken by larger `sizes`, then by `texts`. The ordering key
/// leaves out functions that are constant over the pool and divides the
/// remaining weights by their gcd, so uniformly scaling the weights can never
/// reorder candidates.
pub fn rank_raw<T: Scalar>(
    raw: &[Vec<Option<T>>],
    weights: &[u8],
    sizes: &[u32],
    texts: &[String],
) -> Result<(Vec<usize>, Vec<ScoreVector<T>>)> {
    if !weights.iter().any(|&w| w > 0) {
        return Err(Error::InvalidArgument("no enabled ranking function".into()));
    }
    let n = raw.len();
    let n_specs = weights.len();
    let mut normalized = vec![vec![T::zero(); n_specs]; n];
    let mut constant = vec![false; n_specs];
    for s in 0..n_specs {
        if weights[s] == 0 {
            continue;
        }
        let defined = raw.iter().filter_map(|r| r[s]);
        let (lo, hi) = defined.fold((None, None), |(lo, hi): (Option<T>, Option<T>), v| {
            (
                Some(lo.map_or(v, |l| l.min(v))),
                Some(hi.map_or(v, |h| h.max(v))),
            )
        });
        let (Some(lo), Some(hi)) = (lo, hi) else {
            constant[s] = true;
            continue;
        };
        constant[s] = !(hi > lo);
        for (i, r) in raw.iter().enumerate() {
            normalized[i][s] = match r[s] {
                None => T::zero(),
                Some(_) if constant[s] => T::half(),
                Some(v) => (v - lo) / (hi - lo),
            };
        }
        if constant[s] && raw.iter().any(|r| r[s].is_none()) {
            constant[s] = false;
        }
    }
    let g = (0..n_specs)
        .filter(|&s| weights[s] > 0 && !constant[s])
        .fold(0u32, |g, s| gcd(g, weights[s] as u32))
        .max(1);
    let mut keys = vec![T::zero(); n];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut total = T::zero();
        let mut key = T::zero();
        for s in 0..n_specs {
            if weights[s] == 0 {
                continue;
            }
            total = total + T::from_count(weights[s] as usize) * normalized[i][s];
            if !constant[s] {
                key = key + T::from_count((weights[s] as u32 / g) as usize) * normalized[i][s];
            }
        }
        keys[i] = key;
        out.push(ScoreVector {
            raw: raw[i].clone(),
            normalized: std::mem::take(&mut normalized[i]),
            total,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .partial_cmp(&keys[a])
            .unwrap_or(Ordering::Equal)
            .then(sizes[b].cmp(&sizes[a]))
            .then_with(|| texts[a].cmp(&texts[b]))
    });
    Ok((order, out))
}

/// Scores every candidate on its evaluation metrics, fills in its score
/// breakdown and returns the candidates in ranked order.
pub fn combine_and_rank<T: Scalar>(
    candidates: Vec<SubgroupResult<T>>,
    specs: &[RankingSpec<T>],
) -> Result<Vec<SubgroupResult<T>>> {
    let raw: Vec<Vec<Option<T>>> = candidates
        .iter()
        .map(|c| {
            specs
                .iter()
                .map(|s| raw_score(s, &c.metrics.evaluation, c.rule.len()))
                .collect()
        })
        .collect();
    let weights: Vec<u8> = specs.iter().map(|s| s.weight).collect();
    let sizes: Vec<u32> = candidates
        .iter()
        .map(|c| c.metrics.evaluation.size)
        .collect();
    let texts: Vec<String> = candidates.iter().map(|c| c.rule.to_string()).collect();
    let (order, scores) = rank_raw(&raw, &weights, &sizes, &texts)?;
    let mut slots: Vec<Option<SubgroupResult<T>>> = candidates.into_iter().map(Some).collect();
    let mut scores: Vec<Option<ScoreVector<T>>> = scores.into_iter().map(Some).collect();
    Ok(order
        .into_iter()
        .map(|i| {
            let mut c = slots[i].take().expect("each index once");
            c.scores = scores[i].take().expect("each index once");
            c
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitset::BitSet;
    use crate::dataset::make_split;
    use approx::assert_relative_eq;

    fn mask_of(bits: &[bool]) -> Mask {
        let split = make_split(bits.len(), 0, 0.5, None).unwrap();
        Mask::new(BitSet::from_bools(bits), &split)
    }

    #[test]
    fn rate_examples() {
        let m = mask_of(&[true, true, false, false]);
        let y = [1, 0, 1, 0];
        let rows = [0, 1, 2, 3];
        assert_eq!(outcome_rate::<f64>(&m, &y, &rows).unwrap(), 0.5);
        assert_eq!(outcome_rate_low::<f64>(&m, &y, &rows).unwrap(), 0.5);
        let full = mask_of(&[true; 4]);
        assert_eq!(
            outcome_rate_low::<f64>(&full, &[1, 1, 1, 1], &rows).unwrap(),
            0.0
        );
        assert_eq!(
            outcome_rate_low::<f64>(&full, &[0, 0, 0, 0], &rows).unwrap(),
            1.0
        );
        let empty = mask_of(&[false; 4]);
        assert!(matches!(
            outcome_rate::<f64>(&empty, &y, &rows),
            Err(Error::UndefinedScore(_))
        ));
    }

    #[test]
    fn coverage_examples() {
        let y = [1, 1, 1, 1, 0, 0];
        let rows: Vec<usize> = (0..6).collect();
        assert_eq!(
            outcome_coverage::<f64>(&mask_of(&[true; 6]), &y, &rows).unwrap(),
            1.0
        );
        let half = mask_of(&[true, true, false, false, true, false]);
        assert_eq!(outcome_coverage::<f64>(&half, &y, &rows).unwrap(), 0.5);
        let none = mask_of(&[false, false, false, false, true, true]);
        assert_eq!(outcome_coverage::<f64>(&none, &y, &rows).unwrap(), 0.0);
        assert!(outcome_coverage::<f64>(&none, &[0; 6], &rows).is_err());
    }

    #[test]
    fn mean_difference_examples() {
        let y = [0.0, 0.0, 10.0, 10.0];
        let rows = [0, 1, 2, 3];
        assert_eq!(
            mean_difference::<f64>(&mask_of(&[true; 4]), &y, &rows).unwrap(),
            0.0
        );
        assert_eq!(
            mean_difference::<f64>(&mask_of(&[false, false, true, true]), &y, &rows).unwrap(),
            5.0
        );
        assert_eq!(
            mean_difference::<f64>(&mask_of(&[true, false, true, false]), &[3.0; 4], &rows)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn group_size_examples() {
        let rows: Vec<usize> = (0..10).collect();
        let one = mask_of(&[
            true, false, false, false, false, false, false, false, false, false,
        ]);
        assert_eq!(
            group_size_score::<f64>(&one, &rows, 0.1, 0.05).unwrap(),
            1.0
        );
        let two = mask_of(&[
            true, true, false, false, false, false, false, false, false, false,
        ]);
        assert_relative_eq!(
            group_size_score::<f64>(&two, &rows, 0.1, 0.1).unwrap(),
            (-0.5f64).exp(),
            epsilon = 1e-12
        );
        let none = mask_of(&[false; 10]);
        assert_relative_eq!(
            group_size_score::<f64>(&none, &rows, 0.1, 0.05).unwrap(),
            (-2.0f64).exp(),
            epsilon = 1e-12
        );
        assert_relative_eq!((-2.0f64).exp(), 0.1353, epsilon = 1e-4);
    }

    #[test]
    fn simple_rule_examples() {
        assert_eq!(simple_rule_of_len::<f64>(1), 1.0);
        assert_relative_eq!(simple_rule_of_len::<f64>(3), 0.4765, epsilon = 1e-4);
        assert!(simple_rule_of_len::<f64>(2) > simple_rule_of_len::<f64>(3));
        assert_eq!(simple_rule_of_len::<f64>(0), 1.0);
        assert_eq!(simple_rule_of_len::<f32>(1), 1.0f32);
    }

    #[test]
    fn rank_raw_single_spec_follows_raw_order() {
        let raw = vec![
            vec![Some(0.2)],
            vec![Some(0.9)],
            vec![Some(0.5)],
            vec![None],
        ];
        let (order, scores) = rank_raw::<f64>(
            &raw,
            &[3],
            &[1, 1, 1, 1],
            &["a".into(), "b".into(), "c".into(), "d".into()],
        )
        .unwrap();
        assert_eq!(order, vec![1, 2, 0, 3]);
        assert_eq!(scores[1].normalized[0], 1.0);
        assert_eq!(scores[0].normalized[0], 0.0);
        assert_eq!(scores[3].normalized[0], 0.0);
        assert_eq!(scores[1].total, 3.0);
    }

    #[test]
    fn constant_pool_normalizes_to_half() {
        let raw = vec![vec![Some(0.3)], vec![Some(0.3)]];
        let (order, scores) =
            rank_raw::<f64>(&raw, &[1], &[5, 7], &["a".into(), "b".into()]).unwrap();
        assert_eq!(scores[0].normalized[0], 0.5);
        assert_eq!(order, vec![1, 0]);
    }

    #[test]
    fn no_enabled_spec_is_error() {
        assert!(rank_raw::<f64>(&[vec![Some(1.0)]], &[0], &[1], &["a".into()]).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let s: RankingSpec<f64> = serde_json::from_str(
            r#"{"kind":"group-size","weight":2,"params":{"ideal":0.2,"spread":0.05}}"#,
        )
        .unwrap();
        assert_eq!(s.kind, RankingKind::GroupSize);
        assert_eq!(s.group_params().ideal, 0.2);
        let r: RankingSpec<f64> =
            serde_json::from_str(r#"{"kind":"outcome-rate-high","outcome":"err"}"#).unwrap();
        assert_eq!(r.weight, 1);
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"kind":"outcome-rate-high","outcome":"err","weight":1}"#
        );
    }
}
