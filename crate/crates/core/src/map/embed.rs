//! Neighbour-preserving 2-D coordinates for every row.
//!
//! Rows are one-hot encoded and, when the encoding is wider than
//! [`MAX_DIMS`], randomly projected down to it. Identical rows collapse to one
//! point. Up to [`MAX_LANDMARKS`] distinct evaluation rows are laid out with
//! exact t-SNE; every other distinct row is placed at the inverse-distance
//! weighted mean of its nearest landmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::dataset::{Codes, FeatureMatrix};
use crate::error::{Error, Result};

pub const MAX_DIMS: usize = 50;
pub const MAX_LANDMARKS: usize = 400;
const NEIGHBOURS: usize = 3;
const ITERATIONS: usize = 600;
const EXAGGERATED: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub seed: u64,
    /// One point per matrix row, discovery rows included.
    pub coords: Vec<[f64; 2]>,
}

impl Embedding {
    pub fn point(&self, row: usize) -> [f64; 2] {
        self.coords[row]
    }
}

pub fn embed(matrix: &FeatureMatrix, seed: u64) -> Result<Embedding> {
    let eval = matrix.split().evaluation_rows();
    if eval.is_empty() {
        return Err(Error::EmptyTable("evaluation split has no rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (vectors, dims) = project(matrix, &mut rng);
    let n = matrix.n_rows();

    // Equal code vectors produce bit-equal sums since features are added in
    // the same order, so bit patterns identify distinct rows.
    let mut ids: FxHashMap<Vec<u32>, usize> = FxHashMap::default();
    let mut unique_of_row = Vec::with_capacity(n);
    let mut first_row = Vec::new();
    for r in 0..n {
        let key: Vec<u32> = vectors[r * dims..(r + 1) * dims]
            .iter()
            .map(|v| v.to_bits())
            .collect();
        let next = first_row.len();
        let u = *ids.entry(key).or_insert(next);
        if u == next {
            first_row.push(r);
        }
        unique_of_row.push(u);
    }
    drop(ids);
    let vec_of = |u: usize| &vectors[first_row[u] * dims..(first_row[u] + 1) * dims];

    let mut order = eval.to_vec();
    order.shuffle(&mut rng);
    let mut landmark_of = vec![usize::MAX; first_row.len()];
    let mut landmarks = Vec::new();
    for r in order {
        let u = unique_of_row[r];
        if landmark_of[u] == usize::MAX {
            landmark_of[u] = landmarks.len();
            landmarks.push(u);
            if landmarks.len() == MAX_LANDMARKS {
                break;
            }
        }
    }
    let points: Vec<&[f32]> = landmarks.iter().map(|&u| vec_of(u)).collect();
    let layout = tsne(&points, &mut rng);

    let placed: Vec<[f64; 2]> = (0..first_row.len())
        .into_par_iter()
        .map(|u| {
            if landmark_of[u] != usize::MAX {
                layout[landmark_of[u]]
            } else {
                interpolate(vec_of(u), &points, &layout)
            }
        })
        .collect();
    let coords = unique_of_row.iter().map(|&u| placed[u]).collect();
    Ok(Embedding { seed, coords })
}

/// Row-major `n_rows x dims` matrix of encoded rows.
fn project(matrix: &FeatureMatrix, rng: &mut ChaCha8Rng) -> (Vec<f32>, usize) {
    let n = matrix.n_rows();
    let widths: Vec<usize> = matrix
        .features()
        .iter()
        .map(|c| c.vocabulary.len().max(1))
        .collect();
    let total: usize = widths.iter().sum();
    let dims = total.clamp(1, MAX_DIMS);
    let exact = total <= MAX_DIMS;
    let scale = 1.0 / (dims as f64).sqrt();

    let mut base = vec![0f64; dims];
    let mut out = vec![0f64; n * dims];
    let mut offset = 0;
    for (col, &width) in matrix.features().iter().zip(&widths) {
        let table: Vec<f64> = if exact {
            let mut t = vec![0.0; width * dims];
            for c in 0..width {
                t[c * dims + offset + c] = 1.0;
            }
            t
        } else {
            (0..width * dims)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                .collect()
        };
        offset += width;
        let default = most_common(&col.codes, width);
        let d0 = &table[default * dims..(default + 1) * dims];
        for (b, v) in base.iter_mut().zip(d0) {
            *b += v;
        }
        let mut add = |row: usize, code: u32| {
            let code = code as usize;
            if code != default {
                let dst = &mut out[row * dims..(row + 1) * dims];
                let src = &table[code * dims..(code + 1) * dims];
                for ((o, s), z) in dst.iter_mut().zip(src).zip(d0) {
                    *o += s - z;
                }
            }
        };
        match &col.codes {
            Codes::Sparse { rows, codes, .. } => rows
                .iter()
                .zip(codes)
                .for_each(|(&r, &c)| add(r as usize, c)),
            codes => codes.for_each(add),
        }
    }
    let vectors = out
        .chunks_exact(dims)
        .flat_map(|row| row.iter().zip(&base).map(|(d, b)| (b + d) as f32))
        .collect();
    (vectors, dims)
}

fn most_common(codes: &Codes, width: usize) -> usize {
    if let Codes::Sparse { default, .. } = codes {
        return *default as usize;
    }
    let mut counts = vec![0usize; width];
    codes.for_each(|_, c| counts[c as usize] += 1);
    let best = counts.iter().max().copied().unwrap_or(0);
    counts.iter().position(|&c| c == best).unwrap_or(0)
}

fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn interpolate(v: &[f32], landmarks: &[&[f32]], layout: &[[f64; 2]]) -> [f64; 2] {
    let mut near: Vec<(f32, usize)> = Vec::with_capacity(NEIGHBOURS + 1);
    for (j, l) in landmarks.iter().enumerate() {
        let d = sq_dist(v, l);
        if near.len() < NEIGHBOURS || d < near[near.len() - 1].0 {
            let at = near.partition_point(|&(e, _)| e <= d);
            near.insert(at, (d, j));
            near.truncate(NEIGHBOURS);
        }
    }
    if near[0].0 == 0.0 {
        return layout[near[0].1];
    }
    let (mut x, mut y, mut w) = (0.0, 0.0, 0.0);
    for &(d, j) in &near {
        let wj = 1.0 / (d as f64 * d as f64);
        x += wj * layout[j][0];
        y += wj * layout[j][1];
        w += wj;
    }
    [x / w, y / w]
}

/// Exact t-SNE, centred on the origin.
fn tsne(points: &[&[f32]], rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = points.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![[0.0, 0.0]],
        2 => return vec![[-1.0, 0.0], [1.0, 0.0]],
        _ => {}
    }
    let mut dist = vec![0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(points[i], points[j]) as f64;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let perplexity = ((n - 1) as f64 / 3.0).clamp(1.0, 30.0);
    let p = affinities(&dist, n, perplexity);

    let mut y: Vec<f64> = (0..2 * n)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * 1e-2)
        .collect();
    let mut velocity = vec![0f64; 2 * n];
    let mut gains = vec![1f64; 2 * n];
    let mut num = vec![0f64; n * n];
    let mut grad = vec![0f64; 2 * n];
    let rate = (n as f64 / 12.0).max(50.0);
    for it in 0..ITERATIONS {
        let exaggeration = if it < EXAGGERATED { 12.0 } else { 1.0 };
        let momentum = if it < EXAGGERATED { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let m = (exaggeration * p[i * n + j] - q / z) * q;
                gx += m * (y[2 * i] - y[2 * j]);
                gy += m * (y[2 * i + 1] - y[2 * j + 1]);
            }
            grad[2 * i] = 4.0 * gx;
            grad[2 * i + 1] = 4.0 * gy;
        }
        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (velocity[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            velocity[k] = momentum * velocity[k] - rate * gains[k] * grad[k];
            y[k] += velocity[k];
        }
    }
    let (mx, my) = (0..n).fold((0.0, 0.0), |(a, b), i| (a + y[2 * i], b + y[2 * i + 1]));
    let (mx, my) = (mx / n as f64, my / n as f64);
    (0..n).map(|i| [y[2 * i] - mx, y[2 * i + 1] - my]).collect()
}

/// Symmetrised joint probabilities with a per-point bandwidth matching the
/// requested perplexity.
fn affinities(dist: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0f64; n * n];
    let mut row = vec![0f64; n];
    for i in 0..n {
        let d = &dist[i * n..(i + 1) * n];
        let floor = (0..n)
            .filter(|&j| j != i)
            .map(|j| d[j])
            .fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        for _ in 0..64 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                row[j] = if j == i {
                    0.0
                } else {
                    (-(d[j] - floor) * beta).exp()
                };
                sum += row[j];
                weighted += row[j] * (d[j] - floor);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            if (entropy - target).abs() < 1e-5 {
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi.is_finite() {
                    (beta + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        let sum: f64 = row.iter().sum();
        for j in 0..n {
            p[i * n + j] = row[j] / sum;
        }
    }
    let mut sym = vec![0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    sym
}
