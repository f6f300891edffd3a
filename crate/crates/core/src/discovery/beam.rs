//! Per-source-row beam search over conjunctions matching that row.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};
use smallvec::SmallVec;

use super::expand::{expand_all, Expansion, ExpansionCache};
use crate::index::{Conj, RowStats, SplitIndex};
use crate::ranking::{
    coverage_of, gaussian_size, interaction_of, rate_of, simple_rule_of_len, RankingKind,
    RankingSpec,
};
use crate::scalar::Scalar;

pub(crate) type Scores<T> = SmallVec<[Option<T>; 4]>;

#[derive(Debug, Clone)]
pub(crate) struct SpecPlan<T: Scalar> {
    pub kind: RankingKind,
    /// Index into the binary positives or the continuous sums.
    pub stat: usize,
    pub ideal: T,
    pub spread: T,
    pub drives: bool,
}

/// `a` ranks before `b`: higher score, then larger count, then smaller key.
fn better<T: Scalar>(a: (T, u32), b: (T, u32)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(b.1.cmp(&a.1))
}

struct Entry<T, P> {
    score: T,
    count: u32,
    key: Conj,
    payload: P,
}

impl<T: Scalar, P> Entry<T, P> {
    /// `Less` when `self` ranks before `other`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        better((self.score, self.count), (other.score, other.count))
            .then_with(|| self.key.cmp(&other.key))
    }
}

impl<T: Scalar, P> PartialEq for Entry<T, P> {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar, P> Eq for Entry<T, P> {}

impl<T: Scalar, P> PartialOrd for Entry<T, P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Max-heap order puts the lowest-ranked entry on top.
impl<T: Scalar, P> Ord for Entry<T, P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

/// Bounded best-k set under the total order (score desc, count desc,
/// key asc). A rule offered twice is kept once.
pub(crate) struct TopK<T: Scalar, P> {
    cap: usize,
    heap: BinaryHeap<Entry<T, P>>,
    members: FxHashSet<Conj>,
}

impl<T: Scalar, P> TopK<T, P> {
    pub fn new(cap: usize) -> Self {
        TopK {
            cap,
            heap: BinaryHeap::new(),
            members: FxHashSet::default(),
        }
    }

    /// Offers a candidate; `key` and `payload` are only built when needed.
    pub fn offer(
        &mut self,
        score: T,
        count: u32,
        key: &mut dyn FnMut() -> Conj,
        payload: impl FnOnce() -> P,
    ) -> bool {
        if self.cap == 0 {
            return false;
        }
        let full = self.heap.len() == self.cap;
        if full {
            let w = self.heap.peek().expect("full heap");
            match better((score, count), (w.score, w.count)) {
                Ordering::Greater => return false,
                Ordering::Less => {}
                Ordering::Equal => {
                    if key() >= w.key {
                        return false;
                    }
                }
            }
        }
        let k = key();
        if self.members.contains(&k) {
            return false;
        }
        self.members.insert(k.clone());
        let e = Entry {
            score,
            count,
            key: k,
            payload: payload(),
        };
        if full {
            let mut top = self.heap.peek_mut().expect("full heap");
            let old = std::mem::replace(&mut *top, e);
            drop(top);
            self.members.remove(&old.key);
        } else {
            self.heap.push(e);
        }
        true
    }

    /// Entries best first.
    pub fn into_sorted(self) -> Vec<(Conj, T, u32, P)> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| (e.key, e.score, e.count, e.payload))
            .collect()
    }

    pub fn keys_sorted(&self) -> Vec<Conj> {
        let mut v: Vec<&Entry<T, P>> = self.heap.iter().collect();
        v.sort();
        v.into_iter().map(|e| e.key.clone()).collect()
    }
}

/// Receives every rule evaluated during a search.
pub(crate) trait Sink<T: Scalar> {
    fn accept(
        &mut self,
        key: &mut dyn FnMut() -> Conj,
        count: u32,
        pos: &[u32],
        sums: &[f64],
        scores: &Scores<T>,
    );
}

/// Keeps every evaluated rule.
#[derive(Default)]
pub(crate) struct CollectAll<T: Scalar> {
    pub seen: FxHashSet<Conj>,
    pub rules: Vec<(Conj, RowStats, Scores<T>)>,
}

impl<T: Scalar> Sink<T> for CollectAll<T> {
    fn accept(
        &mut self,
        key: &mut dyn FnMut() -> Conj,
        count: u32,
        pos: &[u32],
        sums: &[f64],
        scores: &Scores<T>,
    ) {
        let k = key();
        if self.seen.insert(k.clone()) {
            self.rules.push((
                k,
                RowStats {
                    count,
                    positives: pos.iter().copied().collect(),
                    sums: sums.iter().copied().collect(),
                },
                scores.clone(),
            ));
        }
    }
}

pub(crate) type Retained<T> = (RowStats, Scores<T>);

/// Keeps the best `cap` rules per ranking function.
pub(crate) struct RetainTop<T: Scalar> {
    pub per_spec: Vec<TopK<T, Retained<T>>>,
}

impl<T: Scalar> RetainTop<T> {
    pub fn new(n_specs: usize, cap: usize) -> Self {
        RetainTop {
            per_spec: (0..n_specs).map(|_| TopK::new(cap)).collect(),
        }
    }
}

impl<T: Scalar> Sink<T> for RetainTop<T> {
    fn accept(
        &mut self,
        key: &mut dyn FnMut() -> Conj,
        count: u32,
        pos: &[u32],
        sums: &[f64],
        scores: &Scores<T>,
    ) {
        for (i, top) in self.per_spec.iter_mut().enumerate() {
            if let Some(s) = scores[i] {
                top.offer(s, count, key, || {
                    (
                        RowStats {
                            count,
                            positives: pos.iter().copied().collect(),
                            sums: sums.iter().copied().collect(),
                        },
                        scores.clone(),
                    )
                });
            }
        }
    }
}

/// Read-only state shared by all beam searches of one discovery run.
pub(crate) struct Context<'a, T: Scalar> {
    pub index: &'a SplitIndex,
    pub all: Arc<Expansion>,
    pub cache: &'a ExpansionCache,
    pub plans: Vec<SpecPlan<T>>,
    pub min_count: u32,
    pub beam_width: usize,
    pub max_length: usize,
    total_pos: Vec<u32>,
    total_mean: Vec<f64>,
    has_interaction: bool,
}

/// Smallest count whose fraction of `n` is at least `p_min`.
pub(crate) fn min_count_for(p_min: f64, n: usize) -> u32 {
    let mut c = (p_min * n as f64).ceil().max(0.0) as u64;
    while c > 0 && (c - 1) as f64 / n as f64 >= p_min {
        c -= 1;
    }
    while (c as f64) / (n as f64) < p_min && c <= n as u64 {
        c += 1;
    }
    c.max(1).min(u32::MAX as u64) as u32
}

impl<'a, T: Scalar> Context<'a, T> {
    pub fn new(
        index: &'a SplitIndex,
        cache: &'a ExpansionCache,
        specs: &[RankingSpec<T>],
        p_min: f64,
        beam_width: usize,
        max_length: usize,
    ) -> Self {
        let plans: Vec<SpecPlan<T>> = specs
            .iter()
            .map(|s| {
                let stat = s
                    .outcome
                    .as_deref()
                    .and_then(|o| index.stats_slot(o))
                    .map(|(_, i)| i)
                    .unwrap_or(0);
                let p = s.group_params();
                SpecPlan {
                    kind: s.kind,
                    stat,
                    ideal: p.ideal,
                    spread: p.spread,
                    drives: s.enabled() && s.kind.guides_search(),
                }
            })
            .collect();
        let total = index.total_stats();
        let n = index.len().max(1) as f64;
        let has_interaction = plans
            .iter()
            .any(|p| p.kind == RankingKind::InteractionEffect);
        Context {
            index,
            all: Arc::new(expand_all(index)),
            cache,
            min_count: min_count_for(p_min, index.len()),
            beam_width,
            max_length,
            total_pos: total.positives.to_vec(),
            total_mean: total.sums.iter().map(|s| s / n).collect(),
            plans,
            has_interaction,
        }
    }

    pub fn score(
        &self,
        p: &SpecPlan<T>,
        count: u32,
        pos: &[u32],
        sums: &[f64],
        len: usize,
        maxsub: &dyn Fn(usize) -> Option<T>,
    ) -> Option<T> {
        if count == 0 && p.kind != RankingKind::SimpleRule {
            return None;
        }
        match p.kind {
            RankingKind::OutcomeRateHigh | RankingKind::SelectionScore => {
                rate_of(pos[p.stat], count)
            }
            RankingKind::OutcomeRateLow => rate_of::<T>(pos[p.stat], count).map(|r| T::one() - r),
            RankingKind::OutcomeCoverage => coverage_of(pos[p.stat], self.total_pos[p.stat]),
            RankingKind::InteractionEffect => {
                if len == 0 {
                    None
                } else {
                    interaction_of(rate_of(pos[p.stat], count), maxsub(p.stat))
                }
            }
            RankingKind::MeanDifference => {
                let mean = T::from_f64_lossy(sums[p.stat] / count as f64);
                Some((mean - T::from_f64_lossy(self.total_mean[p.stat])).abs())
            }
            RankingKind::GroupSize => {
                let f = T::from_count(count as usize) / T::from_count(self.index.len());
                Some(gaussian_size(f, p.ideal, p.spread))
            }
            RankingKind::SimpleRule => Some(simple_rule_of_len(len)),
        }
    }

    fn expansion(&self, conj: &Conj) -> Arc<Expansion> {
        if conj.is_empty() {
            self.all.clone()
        } else {
            self.cache.get_or_compute(self.index, &self.all, conj)
        }
    }

    /// Row values as one slot per feature.
    fn row_slots(&self, local: usize) -> Vec<u32> {
        let mut xs: Vec<u32> = (0..self.index.n_features() as u32)
            .map(|f| self.index.default_slot(f))
            .collect();
        for &s in self.index.row_slots(local) {
            xs[self.index.slot_feature(s) as usize] = s;
        }
        xs
    }

    /// Runs the search from one discovery row (local id). When `trace` is
    /// given it receives, per level, the beam of each guiding function.
    pub fn search(
        &self,
        local: usize,
        sink: &mut dyn Sink<T>,
        mut trace: Option<&mut Vec<Vec<Vec<Conj>>>>,
    ) {
        let xs = self.row_slots(local);
        let m = xs.len();
        let driving: Vec<usize> = (0..self.plans.len())
            .filter(|&i| self.plans[i].drives)
            .collect();
        let mut memo: FxHashMap<Conj, RowStats> = FxHashMap::default();
        let mut parents: Vec<Conj> = vec![Conj::new()];

        for level in 1..=self.max_length {
            let mut beams: Vec<TopK<T, ()>> =
                driving.iter().map(|_| TopK::new(self.beam_width)).collect();
            for parent in &parents {
                let exp = self.expansion(parent);
                // Interaction needs the best rate among all proper sub-rules of
                // each candidate: sub-rules of the parent, and sub-rules of the
                // parent extended by the new predicate.
                let (sub_exps, parent_max): (Vec<Arc<Expansion>>, Vec<Option<T>>) =
                    if self.has_interaction {
                        self.subset_context(parent, &mut memo)
                    } else {
                        (Vec::new(), Vec::new())
                    };
                for f in 0..m {
                    if parent.iter().any(|&(pf, _)| pf as usize == f) {
                        continue;
                    }
                    let s = xs[f];
                    let count = exp.counts[s as usize];
                    if count < self.min_count {
                        continue;
                    }
                    let pos = exp.pos_row(s);
                    let sums = exp.sum_row(s);
                    let maxsub = |b: usize| -> Option<T> {
                        let mut best = parent_max.get(b).copied().flatten()?;
                        for e in &sub_exps {
                            let r = rate_of::<T>(e.pos(s, b), e.counts[s as usize])?;
                            best = best.max(r);
                        }
                        Some(best)
                    };
                    let scores: Scores<T> = self
                        .plans
                        .iter()
                        .map(|p| self.score(p, count, pos, sums, level, &maxsub))
                        .collect();
                    let code = s - self.index.feature_slots(f as u32).start;
                    let mut cached: Option<Conj> = None;
                    let mut key = || {
                        cached
                            .get_or_insert_with(|| {
                                let mut k = parent.clone();
                                let at = k
                                    .iter()
                                    .position(|&(pf, _)| pf as usize > f)
                                    .unwrap_or(k.len());
                                k.insert(at, (f as u32, code));
                                k
                            })
                            .clone()
                    };
                    if level < self.max_length || trace.is_some() {
                        for (bi, &pi) in driving.iter().enumerate() {
                            if let Some(sc) = scores[pi] {
                                beams[bi].offer(sc, count, &mut key, || ());
                            }
                        }
                    }
                    sink.accept(&mut key, count, pos, sums, &scores);
                }
            }
            let level_beams: Vec<Vec<Conj>> = beams.iter().map(|b| b.keys_sorted()).collect();
            let mut next: Vec<Conj> = level_beams.iter().flatten().cloned().collect();
            next.sort();
            next.dedup();
            if let Some(t) = trace.as_deref_mut() {
                t.push(level_beams);
            }
            if next.is_empty() {
                break;
            }
            parents = next;
        }
    }

    fn conj_stats(&self, conj: &Conj, memo: &mut FxHashMap<Conj, RowStats>) -> RowStats {
        if conj.is_empty() {
            return self.index.total_stats();
        }
        if let Some(s) = memo.get(conj) {
            return s.clone();
        }
        let s = self.index.stats_of_conj(conj);
        memo.insert(conj.clone(), s.clone());
        s
    }

    /// Expansions of every proper sub-rule of `parent`, and per binary
    /// outcome the best rate over all sub-rules of `parent` including itself.
    fn subset_context(
        &self,
        parent: &Conj,
        memo: &mut FxHashMap<Conj, RowStats>,
    ) -> (Vec<Arc<Expansion>>, Vec<Option<T>>) {
        let k = parent.len();
        let nb = self.total_pos.len();
        let mut exps = Vec::new();
        let mut best: Vec<Option<T>> = vec![None; nb];
        let mut defined = vec![true; nb];
        for bits in 0u32..(1 << k) {
            let sub: Conj = (0..k)
                .filter(|i| bits >> i & 1 == 1)
                .map(|i| parent[i])
                .collect();
            if (bits as usize) < (1 << k) - 1 {
                exps.push(self.expansion(&sub));
            }
            let st = self.conj_stats(&sub, memo);
            for b in 0..nb {
                match rate_of::<T>(st.positives[b], st.count) {
                    Some(r) => best[b] = Some(best[b].map_or(r, |x: T| x.max(r))),
                    None => defined[b] = false,
                }
            }
        }
        for b in 0..nb {
            if !defined[b] {
                best[b] = None;
            }
        }
        (exps, best)
    }
}
