//! Columnar index over one side of the split.
//!
//! Rows are renumbered `0..len` in ascending global order. Every
//! `(feature, code)` pair gets a *slot* with a bitmap over local rows. For
//! each feature the most frequent code is its default; the non-default slots
//! of every row are also kept in CSR form so that counting all one-predicate
//! extensions of a small row set touches only its non-default entries.

use smallvec::SmallVec;

use crate::bitset::BitSet;
use crate::dataset::{Codes, FeatureMatrix, OutcomeVector};
use crate::error::{Error, Result};
use crate::rules::Rule;

pub type Slot = u32;

/// Single-valued conjunction as `(feature index, code)` pairs sorted by
/// feature index.
pub type Conj = SmallVec<[(u32, u32); 4]>;

#[derive(Debug, Clone)]
pub enum LocalOutcome {
    Binary { bits: BitSet, positives: u32 },
    Continuous { values: Vec<f64>, sum: f64 },
}

#[derive(Debug, Clone)]
pub struct IndexedOutcome {
    pub name: String,
    pub data: LocalOutcome,
}

/// Counts (and sums) of a row set restricted to the indexed split. Binary
/// positives and continuous sums follow the order of the index's outcome list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowStats {
    pub count: u32,
    pub positives: SmallVec<[u32; 4]>,
    pub sums: SmallVec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct SplitIndex {
    len: usize,
    global_rows: Vec<usize>,
    /// Global row → local row, `u32::MAX` when the row is on the other side.
    local_of: Vec<u32>,
    slot_offset: Vec<u32>,
    slot_feature: Vec<u32>,
    default_slot: Vec<Slot>,
    bitmaps: Vec<BitSet>,
    slot_count: Vec<u32>,
    row_ptr: Vec<u32>,
    row_slots: Vec<Slot>,
    outcomes: Vec<IndexedOutcome>,
    binary_ids: Vec<usize>,
    continuous_ids: Vec<usize>,
}

impl SplitIndex {
    /// Indexes `rows` (sorted ascending global ids) with the named outcomes.
    pub fn build(
        matrix: &FeatureMatrix,
        rows: &[usize],
        outcome_names: &[String],
    ) -> Result<SplitIndex> {
        let n_global = matrix.n_rows();
        let len = rows.len();
        let mut local_of = vec![u32::MAX; n_global];
        for (l, &g) in rows.iter().enumerate() {
            local_of[g] = l as u32;
        }

        let mut slot_offset = Vec::with_capacity(matrix.n_features() + 1);
        let mut slot_feature = Vec::new();
        let mut total = 0u32;
        for (f, col) in matrix.features().iter().enumerate() {
            slot_offset.push(total);
            total += col.vocabulary.len() as u32;
            slot_feature.extend(std::iter::repeat_n(f as u32, col.vocabulary.len()));
        }
        slot_offset.push(total);

        let mut bitmaps: Vec<BitSet> = Vec::with_capacity(total as usize);
        let mut slot_count = vec![0u32; total as usize];
        let mut default_slot = Vec::with_capacity(matrix.n_features());
        // (local row, slot) pairs of non-default values, gathered feature by feature.
        let mut row_nnz = vec![0u32; len];
        let mut entries: Vec<(u32, Slot)> = Vec::new();

        for (f, col) in matrix.features().iter().enumerate() {
            let base = slot_offset[f];
            let vocab = col.vocabulary.len();
            let mut maps: Vec<BitSet> = (0..vocab).map(|_| BitSet::new(len)).collect();
            let mut counts = vec![0u32; vocab];
            match &col.codes {
                Codes::Sparse {
                    default,
                    rows: srows,
                    codes,
                    ..
                } => {
                    let mut explicit = BitSet::new(len);
                    for (&g, &c) in srows.iter().zip(codes) {
                        let l = local_of[g as usize];
                        if l != u32::MAX {
                            maps[c as usize].insert(l as usize);
                            explicit.insert(l as usize);
                            counts[c as usize] += 1;
                        }
                    }
                    let d = *default as usize;
                    let rest = explicit.complement();
                    counts[d] += rest.count_ones() as u32;
                    maps[d].union_with(&rest);
                }
                codes => {
                    for (l, &g) in rows.iter().enumerate() {
                        let c = codes.get(g) as usize;
                        maps[c].insert(l);
                        counts[c] += 1;
                    }
                }
            }
            let def = (0..vocab)
                .max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))
                .unwrap_or(0);
            default_slot.push(base + def as u32);
            for (c, map) in maps.iter().enumerate() {
                slot_count[(base as usize) + c] = counts[c];
                if c != def {
                    for l in map.iter() {
                        entries.push((l as u32, base + c as u32));
                        row_nnz[l] += 1;
                    }
                }
            }
            bitmaps.extend(maps);
        }

        let mut row_ptr = Vec::with_capacity(len + 1);
        let mut acc = 0u32;
        row_ptr.push(0);
        for &n in &row_nnz {
            acc += n;
            row_ptr.push(acc);
        }
        let mut fill = row_ptr[..len].to_vec();
        let mut row_slots = vec![0 as Slot; acc as usize];
        // entries are grouped by feature, so each row's slots come out in slot order
        for (l, s) in entries {
            row_slots[fill[l as usize] as usize] = s;
            fill[l as usize] += 1;
        }

        let mut outcomes = Vec::new();
        let mut binary_ids = Vec::new();
        let mut continuous_ids = Vec::new();
        for name in outcome_names {
            let o = matrix.outcome(name)?;
            let data = match o {
                OutcomeVector::Binary(v) => {
                    let mut bits = BitSet::new(len);
                    for (l, &g) in rows.iter().enumerate() {
                        if v[g] != 0 {
                            bits.insert(l);
                        }
                    }
                    let positives = bits.count_ones() as u32;
                    binary_ids.push(outcomes.len());
                    LocalOutcome::Binary { bits, positives }
                }
                OutcomeVector::Continuous(v) => {
                    let values: Vec<f64> = rows.iter().map(|&g| v[g]).collect();
                    let sum = values.iter().sum();
                    continuous_ids.push(outcomes.len());
                    LocalOutcome::Continuous { values, sum }
                }
            };
            outcomes.push(IndexedOutcome {
                name: name.clone(),
                data,
            });
        }

        Ok(SplitIndex {
            len,
            global_rows: rows.to_vec(),
            local_of,
            slot_offset,
            slot_feature,
            default_slot,
            bitmaps,
            slot_count,
            row_ptr,
            row_slots,
            outcomes,
            binary_ids,
            continuous_ids,
        })
    }

    pub fn discovery(matrix: &FeatureMatrix, outcome_names: &[String]) -> Result<SplitIndex> {
        Self::build(matrix, matrix.split().discovery_rows(), outcome_names)
    }

    pub fn evaluation(matrix: &FeatureMatrix, outcome_names: &[String]) -> Result<SplitIndex> {
        Self::build(matrix, matrix.split().evaluation_rows(), outcome_names)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_features(&self) -> usize {
        self.default_slot.len()
    }

    pub fn n_slots(&self) -> usize {
        self.bitmaps.len()
    }

    pub fn global_rows(&self) -> &[usize] {
        &self.global_rows
    }

    pub fn local_row(&self, global: usize) -> Option<usize> {
        match self.local_of.get(global) {
            Some(&l) if l != u32::MAX => Some(l as usize),
            _ => None,
        }
    }

    #[inline]
    pub fn slot(&self, feature: u32, code: u32) -> Slot {
        self.slot_offset[feature as usize] + code
    }

    #[inline]
    pub fn slot_feature(&self, slot: Slot) -> u32 {
        self.slot_feature[slot as usize]
    }

    pub fn feature_slots(&self, feature: u32) -> std::ops::Range<Slot> {
        self.slot_offset[feature as usize]..self.slot_offset[feature as usize + 1]
    }

    #[inline]
    pub fn default_slot(&self, feature: u32) -> Slot {
        self.default_slot[feature as usize]
    }

    #[inline]
    pub fn bitmap(&self, slot: Slot) -> &BitSet {
        &self.bitmaps[slot as usize]
    }

    #[inline]
    pub fn slot_count(&self, slot: Slot) -> u32 {
        self.slot_count[slot as usize]
    }

    #[inline]
    pub fn row_slots(&self, local: usize) -> &[Slot] {
        &self.row_slots[self.row_ptr[local] as usize..self.row_ptr[local + 1] as usize]
    }

    pub fn nnz(&self) -> usize {
        self.row_slots.len()
    }

    pub fn outcomes(&self) -> &[IndexedOutcome] {
        &self.outcomes
    }

    pub fn outcome_position(&self, name: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o.name == name)
    }

    /// Positions (into [`Self::outcomes`]) of binary outcomes, in stats order.
    pub fn binary_ids(&self) -> &[usize] {
        &self.binary_ids
    }

    pub fn continuous_ids(&self) -> &[usize] {
        &self.continuous_ids
    }

    /// Index into `RowStats::positives` / `RowStats::sums` for an outcome.
    pub fn stats_slot(&self, name: &str) -> Option<(bool, usize)> {
        let pos = self.outcome_position(name)?;
        if let Some(i) = self.binary_ids.iter().position(|&p| p == pos) {
            return Some((true, i));
        }
        self.continuous_ids
            .iter()
            .position(|&p| p == pos)
            .map(|i| (false, i))
    }

    pub fn binary_bits(&self, i: usize) -> (&BitSet, u32) {
        match &self.outcomes[self.binary_ids[i]].data {
            LocalOutcome::Binary { bits, positives } => (bits, *positives),
            LocalOutcome::Continuous { .. } => unreachable!(),
        }
    }

    pub fn continuous_values(&self, i: usize) -> (&[f64], f64) {
        match &self.outcomes[self.continuous_ids[i]].data {
            LocalOutcome::Continuous { values, sum } => (values, *sum),
            LocalOutcome::Binary { .. } => unreachable!(),
        }
    }

    /// Local rows of a single-valued conjunction.
    pub fn conj_mask(&self, conj: &[(u32, u32)]) -> BitSet {
        let mut it = conj.iter();
        match it.next() {
            None => BitSet::full(self.len),
            Some(&(f, c)) => {
                let mut m = self.bitmap(self.slot(f, c)).clone();
                for &(f, c) in it {
                    m.intersect_with(self.bitmap(self.slot(f, c)));
                }
                m
            }
        }
    }

    /// Local rows of an arbitrary rule, resolving names against `matrix`.
    pub fn rule_mask(&self, rule: &Rule, matrix: &FeatureMatrix) -> Result<BitSet> {
        rule.validate(matrix)?;
        let mut m = BitSet::full(self.len);
        for (name, values) in rule.predicates() {
            let f = matrix
                .feature_index(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown feature {name:?}")))?
                as u32;
            let col = matrix.feature(f as usize);
            let mut pred = BitSet::new(self.len);
            for v in values {
                let c = col.code_of(v).expect("validated");
                pred.union_with(self.bitmap(self.slot(f, c)));
            }
            m.intersect_with(&pred);
        }
        Ok(m)
    }

    /// Restricts a global bitset to this split's local rows.
    pub fn localize(&self, global: &BitSet) -> BitSet {
        let mut out = BitSet::new(self.len);
        for (l, &g) in self.global_rows.iter().enumerate() {
            if global.contains(g) {
                out.insert(l);
            }
        }
        out
    }

    pub fn stats_of_mask(&self, mask: &BitSet) -> RowStats {
        let count = mask.count_ones() as u32;
        let positives = (0..self.binary_ids.len())
            .map(|i| mask.and_count(self.binary_bits(i).0) as u32)
            .collect();
        let sums = (0..self.continuous_ids.len())
            .map(|i| {
                let (vals, _) = self.continuous_values(i);
                mask.iter().map(|l| vals[l]).sum()
            })
            .collect();
        RowStats {
            count,
            positives,
            sums,
        }
    }

    pub fn stats_of_conj(&self, conj: &[(u32, u32)]) -> RowStats {
        if conj.len() == 1 && self.continuous_ids.is_empty() {
            let s = self.slot(conj[0].0, conj[0].1);
            let b = self.bitmap(s);
            return RowStats {
                count: self.slot_count(s),
                positives: (0..self.binary_ids.len())
                    .map(|i| b.and_count(self.binary_bits(i).0) as u32)
                    .collect(),
                sums: SmallVec::new(),
            };
        }
        self.stats_of_mask(&self.conj_mask(conj))
    }

    pub fn total_stats(&self) -> RowStats {
        RowStats {
            count: self.len as u32,
            positives: (0..self.binary_ids.len())
                .map(|i| self.binary_bits(i).1)
                .collect(),
            sums: (0..self.continuous_ids.len())
                .map(|i| self.continuous_values(i).1)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_split, FeatureColumn, OutcomeVector};
    use indexmap::IndexMap;

    fn matrix() -> FeatureMatrix {
        let a = FeatureColumn::from_labels("a", &["x", "y", "x", "x", "z", "y"]).unwrap();
        let b = FeatureColumn::new(
            "b",
            Codes::sparse(6, 0, vec![(1, 1), (4, 1)]),
            vec!["0".into(), "1".into()],
            crate::dataset::ColumnOrigin::Categorical,
        )
        .unwrap();
        let mut o = IndexMap::new();
        o.insert(
            "y".to_string(),
            OutcomeVector::Binary(vec![1, 0, 1, 0, 1, 1]),
        );
        o.insert(
            "v".to_string(),
            OutcomeVector::Continuous(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        );
        let split =
            crate::dataset::SplitAssignment::from_parts(6, vec![0, 1, 2, 4], 0, 0.5, None).unwrap();
        let _ = make_split;
        FeatureMatrix::new(vec![a, b], o, split).unwrap()
    }

    #[test]
    fn slots_and_defaults() {
        let m = matrix();
        let idx = SplitIndex::discovery(&m, &["y".into(), "v".into()]).unwrap();
        assert_eq!(idx.len(), 4);
        // discovery rows 0,1,2,4: a = x,y,x,z ; b = 0,1,0,1
        assert_eq!(idx.default_slot(0), idx.slot(0, 0));
        assert_eq!(idx.slot_count(idx.slot(0, 0)), 2);
        assert_eq!(idx.slot_count(idx.slot(1, 1)), 2);
        // row 1 (local 1) has a=y and b=1 as non-default entries
        assert_eq!(idx.row_slots(1), &[idx.slot(0, 1), idx.slot(1, 1)]);
        assert_eq!(idx.nnz(), 4);
    }

    #[test]
    fn stats_match_direct_counting() {
        let m = matrix();
        let idx = SplitIndex::discovery(&m, &["y".into(), "v".into()]).unwrap();
        let st = idx.stats_of_conj(&[(0, 0)]);
        // a = x on rows 0 and 2: y = 1,1 ; v = 1,3
        assert_eq!(st.count, 2);
        assert_eq!(st.positives.as_slice(), &[2]);
        assert_eq!(st.sums.as_slice(), &[4.0]);
        let tot = idx.total_stats();
        assert_eq!(tot.count, 4);
        assert_eq!(tot.positives.as_slice(), &[3]);
        assert_eq!(tot.sums.as_slice(), &[1.0 + 2.0 + 3.0 + 5.0]);
    }
}
