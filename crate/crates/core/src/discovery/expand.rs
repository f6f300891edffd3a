//! Counting every one-predicate extension of a row set at once.

use std::sync::{Arc, Mutex};

use rustc_hash::FxHashMap;

use crate::bitset::BitSet;
use crate::index::{Conj, SplitIndex};

/// Per-slot counts of `R ∧ slot` for a base conjunction `R`. Positives are
/// stored slot-major (`slot * n_binary + b`), sums likewise.
#[derive(Debug)]
pub(crate) struct Expansion {
    pub counts: Vec<u32>,
    pub positives: Vec<u32>,
    pub sums: Vec<f64>,
    nb: usize,
    nc: usize,
}

impl Expansion {
    #[inline]
    pub fn pos(&self, slot: u32, b: usize) -> u32 {
        self.positives[slot as usize * self.nb + b]
    }

    #[inline]
    pub fn pos_row(&self, slot: u32) -> &[u32] {
        let s = slot as usize * self.nb;
        &self.positives[s..s + self.nb]
    }

    #[inline]
    pub fn sum_row(&self, slot: u32) -> &[f64] {
        let s = slot as usize * self.nc;
        &self.sums[s..s + self.nc]
    }

    pub fn bytes(&self) -> usize {
        self.counts.len() * 4 + self.positives.len() * 4 + self.sums.len() * 8 + 64
    }
}

struct Scratch {
    counts: Vec<u32>,
    positives: Vec<u32>,
    sums: Vec<f64>,
}

impl Scratch {
    fn new(index: &SplitIndex) -> Scratch {
        let n = index.n_slots();
        Scratch {
            counts: vec![0; n],
            positives: vec![0; n * index.binary_ids().len()],
            sums: vec![0.0; n * index.continuous_ids().len()],
        }
    }
}

/// Adds the non-default slot entries of every row in `rows` to `out`.
fn accumulate_rows(index: &SplitIndex, rows: &BitSet, out: &mut Scratch) {
    let nb = index.binary_ids().len();
    let nc = index.continuous_ids().len();
    let ys: Vec<&BitSet> = (0..nb).map(|b| index.binary_bits(b).0).collect();
    let vs: Vec<&[f64]> = (0..nc).map(|c| index.continuous_values(c).0).collect();
    for l in rows.iter() {
        let slots = index.row_slots(l);
        for &s in slots {
            out.counts[s as usize] += 1;
        }
        for (b, y) in ys.iter().enumerate() {
            if y.contains(l) {
                for &s in slots {
                    out.positives[s as usize * nb + b] += 1;
                }
            }
        }
        for (c, v) in vs.iter().enumerate() {
            let x = v[l];
            for &s in slots {
                out.sums[s as usize * nc + c] += x;
            }
        }
    }
}

/// Fills the default slot of each feature as the remainder of the totals.
fn fill_defaults(index: &SplitIndex, out: &mut Scratch, count: u32, pos: &[u32], sums: &[f64]) {
    let nb = pos.len();
    let nc = sums.len();
    for f in 0..index.n_features() as u32 {
        let d = index.default_slot(f) as usize;
        let mut c = count;
        let mut p: smallvec::SmallVec<[u32; 4]> = pos.iter().copied().collect();
        let mut x: smallvec::SmallVec<[f64; 2]> = sums.iter().copied().collect();
        for s in index.feature_slots(f) {
            let s = s as usize;
            if s == d {
                continue;
            }
            c -= out.counts[s];
            for b in 0..nb {
                p[b] -= out.positives[s * nb + b];
            }
            for k in 0..nc {
                x[k] -= out.sums[s * nc + k];
            }
        }
        out.counts[d] = c;
        for b in 0..nb {
            out.positives[d * nb + b] = p[b];
        }
        for k in 0..nc {
            out.sums[d * nc + k] = x[k];
        }
    }
}

fn finish(
    index: &SplitIndex,
    mut out: Scratch,
    count: u32,
    pos: &[u32],
    sums: &[f64],
) -> Expansion {
    fill_defaults(index, &mut out, count, pos, sums);
    Expansion {
        counts: out.counts,
        positives: out.positives,
        sums: out.sums,
        nb: pos.len(),
        nc: sums.len(),
    }
}

/// The extension table of the empty conjunction.
pub(crate) fn expand_all(index: &SplitIndex) -> Expansion {
    let mut out = Scratch::new(index);
    accumulate_rows(index, &BitSet::full(index.len()), &mut out);
    let total = index.total_stats();
    finish(index, out, total.count, &total.positives, &total.sums)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Method {
    Rows,
    Complement,
    Bitmap,
}

/// The extension table of `conj`, choosing between walking rows (of the set
/// or of its complement) and intersecting slot bitmaps, whichever is cheaper.
pub(crate) fn expand(index: &SplitIndex, all: &Expansion, conj: &[(u32, u32)]) -> Expansion {
    expand_using(index, all, conj, None)
}

pub(crate) fn expand_using(
    index: &SplitIndex,
    all: &Expansion,
    conj: &[(u32, u32)],
    method: Option<Method>,
) -> Expansion {
    if conj.is_empty() {
        return expand_all(index);
    }
    let mask = index.conj_mask(conj);
    let n = index.len();
    let m = mask.count_ones();
    let nb = index.binary_ids().len();
    let nc = index.continuous_ids().len();
    let pos: Vec<u32> = (0..nb)
        .map(|b| mask.and_count(index.binary_bits(b).0) as u32)
        .collect();

    let avg_nnz = index.nnz() as f64 / n.max(1) as f64;
    let walk = m.min(n - m);
    let walk_cost =
        walk as f64 * avg_nnz * (1.0 + nb as f64 + nc as f64) * 3.0 + index.n_slots() as f64;
    let nz_words: Vec<usize> = mask
        .words()
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0)
        .map(|(i, _)| i)
        .collect();
    let nd_slots = index.n_slots() - index.n_features();
    let bitmap_cost = (nd_slots * nz_words.len() * (1 + nb)) as f64;

    let method = method.unwrap_or(if nc == 0 && bitmap_cost < walk_cost {
        Method::Bitmap
    } else if m <= n - m {
        Method::Rows
    } else {
        Method::Complement
    });
    if method == Method::Bitmap && nc == 0 {
        return expand_bitmap(index, &mask, &nz_words, m as u32, &pos);
    }

    let mut out = Scratch::new(index);
    if method == Method::Rows {
        let sums: Vec<f64> = (0..nc)
            .map(|c| {
                let v = index.continuous_values(c).0;
                mask.iter().map(|l| v[l]).sum()
            })
            .collect();
        accumulate_rows(index, &mask, &mut out);
        finish(index, out, m as u32, &pos, &sums)
    } else {
        let rest = mask.complement();
        accumulate_rows(index, &rest, &mut out);
        let mut sums = Vec::with_capacity(nc);
        for c in 0..nc {
            let (v, total) = index.continuous_values(c);
            sums.push(total - rest.iter().map(|l| v[l]).sum::<f64>());
        }
        for f in 0..index.n_features() as u32 {
            let d = index.default_slot(f);
            for s in index.feature_slots(f) {
                if s == d {
                    continue;
                }
                let s = s as usize;
                out.counts[s] = all.counts[s] - out.counts[s];
                for b in 0..nb {
                    out.positives[s * nb + b] =
                        all.positives[s * nb + b] - out.positives[s * nb + b];
                }
                for k in 0..nc {
                    out.sums[s * nc + k] = all.sums[s * nc + k] - out.sums[s * nc + k];
                }
            }
        }
        finish(index, out, m as u32, &pos, &sums)
    }
}

fn expand_bitmap(
    index: &SplitIndex,
    mask: &BitSet,
    nz_words: &[usize],
    m: u32,
    pos: &[u32],
) -> Expansion {
    let nb = pos.len();
    let masked_y: Vec<BitSet> = (0..nb).map(|b| mask.and(index.binary_bits(b).0)).collect();
    let dense = nz_words.len() * 4 >= mask.words().len() * 3;
    let mut out = Scratch::new(index);
    let rw = mask.words();
    for f in 0..index.n_features() as u32 {
        let d = index.default_slot(f);
        for s in index.feature_slots(f) {
            if s == d {
                continue;
            }
            let sw = index.bitmap(s).words();
            let si = s as usize;
            if dense {
                out.counts[si] = crate::bitset::and_count(rw, sw) as u32;
                for (b, y) in masked_y.iter().enumerate() {
                    out.positives[si * nb + b] = crate::bitset::and_count(y.words(), sw) as u32;
                }
            } else {
                out.counts[si] = nz_words.iter().map(|&i| (rw[i] & sw[i]).count_ones()).sum();
                for (b, y) in masked_y.iter().enumerate() {
                    let yw = y.words();
                    out.positives[si * nb + b] =
                        nz_words.iter().map(|&i| (yw[i] & sw[i]).count_ones()).sum();
                }
            }
        }
    }
    finish(index, out, m, pos, &[])
}

/// Expansion tables shared between beam searches. Stored values depend only
/// on the key, so what is cached never changes results.
pub(crate) struct ExpansionCache {
    map: Mutex<(FxHashMap<Conj, Arc<Expansion>>, usize)>,
    capacity: usize,
}

impl ExpansionCache {
    pub fn new(capacity_bytes: usize) -> Self {
        ExpansionCache {
            map: Mutex::new((FxHashMap::default(), 0)),
            capacity: capacity_bytes,
        }
    }

    pub fn get_or_compute(
        &self,
        index: &SplitIndex,
        all: &Expansion,
        conj: &Conj,
    ) -> Arc<Expansion> {
        if let Some(e) = self.map.lock().expect("cache lock").0.get(conj) {
            return e.clone();
        }
        let e = Arc::new(expand(index, all, conj));
        let mut guard = self.map.lock().expect("cache lock");
        let (map, used) = &mut *guard;
        let b = e.bytes();
        if b > self.capacity {
            return e;
        }
        if *used + b > self.capacity {
            map.clear();
            *used = 0;
        }
        if map.insert(conj.clone(), e.clone()).is_none() {
            *used += b;
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        Codes, ColumnOrigin, FeatureColumn, FeatureMatrix, OutcomeVector, SplitAssignment,
    };
    use indexmap::IndexMap;
    use proptest::prelude::*;
    use smallvec::smallvec;

    fn random_matrix(seed: u64, n: usize, vocab: &[usize], with_cont: bool) -> FeatureMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let features = vocab
            .iter()
            .enumerate()
            .map(|(f, &v)| {
                let skew: f64 = rng.gen_range(0.0..1.0);
                let codes: Vec<u32> = (0..n)
                    .map(|_| {
                        if rng.gen_bool(skew) {
                            0
                        } else {
                            rng.gen_range(0..v as u32)
                        }
                    })
                    .collect();
                let vocabulary = (0..v).map(|c| c.to_string()).collect();
                FeatureColumn::new(
                    format!("f{f}"),
                    Codes::from_vec(codes),
                    vocabulary,
                    ColumnOrigin::Categorical,
                )
                .unwrap()
            })
            .collect();
        let mut o = IndexMap::new();
        o.insert(
            "y".into(),
            OutcomeVector::Binary((0..n).map(|_| rng.gen_range(0..2)).collect()),
        );
        if with_cont {
            o.insert(
                "v".into(),
                OutcomeVector::Continuous((0..n).map(|_| rng.gen_range(0..8) as f64).collect()),
            );
        }
        let disc: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.6)).collect();
        let split = SplitAssignment::from_parts(n, disc, 0, 0.6, None).unwrap();
        FeatureMatrix::new(features, o, split).unwrap()
    }

    fn check(matrix: &FeatureMatrix, conj: &[(u32, u32)]) {
        let names: Vec<String> = matrix.outcomes().keys().cloned().collect();
        let idx = SplitIndex::discovery(matrix, &names).unwrap();
        let all = expand_all(&idx);
        for method in [
            None,
            Some(Method::Rows),
            Some(Method::Complement),
            Some(Method::Bitmap),
        ] {
            let e = expand_using(&idx, &all, conj, method);
            for f in 0..matrix.n_features() as u32 {
                for s in idx.feature_slots(f) {
                    let c = s - idx.feature_slots(f).start;
                    let mut full: Conj = conj.iter().copied().collect();
                    full.push((f, c));
                    let direct = idx.stats_of_mask(&idx.conj_mask(&full));
                    assert_eq!(e.counts[s as usize], direct.count);
                    assert_eq!(e.pos_row(s), &direct.positives[..]);
                    for (a, b) in e.sum_row(s).iter().zip(&direct.sums) {
                        assert!((a - b).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn empty_and_small_conjunctions() {
        let m = random_matrix(1, 300, &[2, 3, 5, 2], true);
        check(&m, &[]);
        check(&m, &[(0, 1)]);
        check(&m, &[(1, 0), (3, 1)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn extension_counts_match_direct_counting(seed in 0u64..1000, f in 0u32..4, c in 0u32..2, cont in any::<bool>()) {
            let m = random_matrix(seed, 257, &[2, 4, 3, 2], cont);
            let conj: Conj = smallvec![(f, c)];
            check(&m, &conj);
        }
    }
}
