//! Single-linkage point aggregation and circle overlap removal.

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

pub const MAX_RELAX_ITERATIONS: usize = 50;

/// Points merged into one bubble. `members` index into the input slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGroup {
    pub members: Vec<usize>,
    pub centroid: [f64; 2],
    pub property: u64,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Extent {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Extent {
    pub fn of_points(points: impl IntoIterator<Item = [f64; 2]>) -> Extent {
        let mut e = Extent {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for [x, y] in points {
            e.min_x = e.min_x.min(x);
            e.min_y = e.min_y.min(y);
            e.max_x = e.max_x.max(x);
            e.max_y = e.max_y.max(y);
        }
        if !e.min_x.is_finite() {
            e = Extent {
                min_x: 0.0,
                min_y: 0.0,
                max_x: 0.0,
                max_y: 0.0,
            };
        }
        e
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            let (lo, hi) = (a.min(b), a.max(b));
            self.0[hi] = lo;
        }
    }
}

/// Merges points that share a property and are chained by hops of at most
/// `threshold` times the extent diagonal. Groups come out ordered by their
/// smallest member.
pub fn aggregate_bubbles(
    coords: &[[f64; 2]],
    properties: &[u64],
    threshold: f64,
) -> Result<Vec<PointGroup>> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    if coords.len() != properties.len() {
        return Err(Error::InvalidArgument(
            "one property per point is required".into(),
        ));
    }
    let n = coords.len();
    let extent = Extent::of_points(coords.iter().copied());
    let reach = threshold * extent.diagonal();
    let mut uf = UnionFind((0..n).collect());

    // Cells of side reach/√2 have diagonal `reach`, so equal-property points
    // sharing a cell always merge. Other merges come from cells at most two
    // steps away.
    let cell = if reach > 0.0 {
        reach / std::f64::consts::SQRT_2
    } else {
        1.0
    };
    let mut cells: FxHashMap<(i64, i64, u64), Vec<usize>> = FxHashMap::default();
    for (i, &[x, y]) in coords.iter().enumerate() {
        let key = (
            ((x - extent.min_x) / cell).floor() as i64,
            ((y - extent.min_y) / cell).floor() as i64,
            properties[i],
        );
        cells.entry(key).or_default().push(i);
    }
    let mut keys: Vec<_> = cells.keys().copied().collect();
    keys.sort_unstable();
    for key in &keys {
        let pts = &cells[key];
        for &p in &pts[1..] {
            uf.union(pts[0], p);
        }
    }
    let limit = reach * reach;
    for &(cx, cy, prop) in &keys {
        let here = &cells[&(cx, cy, prop)];
        for dx in -2i64..=2 {
            for dy in -2i64..=2 {
                if (dx, dy) <= (0, 0) {
                    continue;
                }
                let Some(there) = cells.get(&(cx + dx, cy + dy, prop)) else {
                    continue;
                };
                if uf.find(here[0]) == uf.find(there[0]) {
                    continue;
                }
                'pairs: for &a in here {
                    for &b in there {
                        let (ex, ey) = (coords[a][0] - coords[b][0], coords[a][1] - coords[b][1]);
                        if ex * ex + ey * ey <= limit {
                            uf.union(a, b);
                            break 'pairs;
                        }
                    }
                }
            }
        }
    }

    let mut slot_of_root: FxHashMap<usize, usize> = FxHashMap::default();
    let mut groups: Vec<PointGroup> = Vec::new();
    for i in 0..n {
        let root = uf.find(i);
        let g = *slot_of_root.entry(root).or_insert_with(|| {
            groups.push(PointGroup {
                members: Vec::new(),
                centroid: [0.0, 0.0],
                property: properties[i],
            });
            groups.len() - 1
        });
        groups[g].members.push(i);
    }
    for g in &mut groups {
        let k = g.members.len() as f64;
        let (sx, sy) = g.members.iter().fold((0.0, 0.0), |(a, b), &m| {
            (a + coords[m][0], b + coords[m][1])
        });
        g.centroid = [sx / k, sy / k];
    }
    Ok(groups)
}

/// Circle as `[x, y, r]`.
pub type Circle = [f64; 3];

/// Outcome of [`relax_circles`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelaxReport {
    pub iterations: usize,
    /// Whether the final uniform spread about the centroid was needed.
    pub scaled: bool,
}

/// Overlapping pairs, as index pairs `i < j`, ignoring overlaps up to `tol`.
fn overlapping(circles: &[Circle], tol: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..circles.len()).collect();
    order.sort_by(|&a, &b| {
        (circles[a][0] - circles[a][2])
            .total_cmp(&(circles[b][0] - circles[b][2]))
            .then(a.cmp(&b))
    });
    let mut out = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let right = circles[i][0] + circles[i][2];
        for &j in &order[k + 1..] {
            if circles[j][0] - circles[j][2] > right {
                break;
            }
            let (dx, dy) = (circles[j][0] - circles[i][0], circles[j][1] - circles[i][1]);
            let need = circles[i][2] + circles[j][2] - tol;
            if need > 0.0 && dx * dx + dy * dy < need * need {
                out.push((i.min(j), i.max(j)));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Pushes overlapping circles apart along their centre line, the smaller
/// circle moving further. After [`MAX_RELAX_ITERATIONS`] passes any
/// remaining overlap is removed by spreading all centres away from their
/// mean, which keeps relative placement. Afterwards every pair satisfies
/// `distance >= r1 + r2 - tol`.
pub fn relax_circles(circles: &mut [Circle], tol: f64) -> RelaxReport {
    let mut iterations = 0;
    while iterations < MAX_RELAX_ITERATIONS {
        let pairs = overlapping(circles, tol);
        if pairs.is_empty() {
            return RelaxReport {
                iterations,
                scaled: false,
            };
        }
        iterations += 1;
        for (i, j) in pairs {
            let (dx, dy) = (circles[j][0] - circles[i][0], circles[j][1] - circles[i][1]);
            let d = dx.hypot(dy);
            let need = circles[i][2] + circles[j][2];
            if d >= need {
                continue;
            }
            let (ux, uy) = if d > 0.0 {
                (dx / d, dy / d)
            } else {
                let angle = (i * 31 + j * 17) as f64 * 2.399_963_229_728_653;
                (angle.cos(), angle.sin())
            };
            let (ai, aj) = (circles[i][2].powi(2), circles[j][2].powi(2));
            let push = need - d;
            let (wi, wj) = if ai + aj > 0.0 {
                (aj / (ai + aj), ai / (ai + aj))
            } else {
                (0.5, 0.5)
            };
            circles[i][0] -= ux * push * wi;
            circles[i][1] -= uy * push * wi;
            circles[j][0] += ux * push * wj;
            circles[j][1] += uy * push * wj;
        }
    }
    let mut scaled = false;
    loop {
        let pairs = overlapping(circles, tol);
        if pairs.is_empty() {
            return RelaxReport { iterations, scaled };
        }
        scaled = true;
        let mut factor: f64 = 1.0;
        let mut nudged = false;
        for (i, j) in pairs {
            let d = (circles[j][0] - circles[i][0]).hypot(circles[j][1] - circles[i][1]);
            if d > 0.0 {
                factor = factor.max((circles[i][2] + circles[j][2]) / d);
            } else {
                let step = 1e-6 * (circles[i][2] + circles[j][2]).max(f64::MIN_POSITIVE);
                let angle = (i * 31 + j * 17) as f64 * 2.399_963_229_728_653;
                circles[j][0] += step * angle.cos();
                circles[j][1] += step * angle.sin();
                nudged = true;
            }
        }
        if nudged {
            continue;
        }
        factor *= 1.0 + 1e-9;
        let n = circles.len() as f64;
        let (mx, my) = circles
            .iter()
            .fold((0.0, 0.0), |(a, b), c| (a + c[0], b + c[1]));
        let (mx, my) = (mx / n, my / n);
        for c in circles.iter_mut() {
            c[0] = mx + (c[0] - mx) * factor;
            c[1] = my + (c[1] - my) * factor;
        }
    }
}
