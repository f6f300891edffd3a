//! Subgroup map: an aggregated 2-D scatter of evaluation rows, with
//! subgroup overlays, intersection counts and a distinguishing-feature
//! readout. Everything here is plain data for a renderer.

mod bubbles;
mod embed;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

pub use bubbles::{
    aggregate_bubbles, relax_circles, Circle, Extent, PointGroup, RelaxReport, MAX_RELAX_ITERATIONS,
};
pub use embed::{embed, Embedding, MAX_DIMS, MAX_LANDMARKS};

use crate::bitset::BitSet;
use crate::dataset::{FeatureMatrix, OutcomeVector};
use crate::error::{Error, Result};
use crate::rules::{evaluate_mask, Mask, Rule};

/// Most subgroups that can be drawn on the map at once.
pub const MAX_OVERLAY: usize = 8;
/// Continuous outcomes are cut into this many equal-width classes for grouping.
pub const CONTINUOUS_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapOptions {
    /// Merge distance as a fraction of the extent diagonal.
    pub threshold: f64,
    /// Share of the point extent covered by bubble area before relaxation.
    pub fill: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            threshold: 1.0 / 60.0,
            fill: 0.3,
        }
    }
}

/// Border segment, in fractions of a full turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSegment {
    pub subgroup: usize,
    pub start: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub count: usize,
    /// Outcome value shared by all members (member mean for continuous outcomes).
    pub outcome: f64,
    /// Indices of the overlaid subgroups containing the members.
    pub signature: Vec<usize>,
    pub arcs: Vec<ArcSegment>,
    /// Evaluation rows, ascending.
    pub members: Vec<usize>,
    /// Discovery rows nearest to this bubble, used to widen map selections
    /// into sources for targeted search.
    pub shadow: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionCell {
    pub signature: Vec<usize>,
    pub size: usize,
    /// Positive rate, or mean for a continuous outcome.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSummary {
    pub outcome: String,
    pub total: usize,
    pub cells: Vec<IntersectionCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguishingFeature {
    pub feature: String,
    pub value: String,
    pub precision: f64,
    pub recall: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleLayout {
    pub seed: u64,
    pub threshold: f64,
    pub outcome: String,
    /// Rule text of each overlaid subgroup; signatures index into this.
    pub subgroups: Vec<String>,
    pub extent: Extent,
    pub bubbles: Vec<Bubble>,
    pub intersections: Vec<IntersectionCell>,
    #[serde(default)]
    pub distinguishing: Option<DistinguishingFeature>,
}

impl BubbleLayout {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn circles(&self) -> Vec<Circle> {
        self.bubbles.iter().map(|b| [b.x, b.y, b.r]).collect()
    }

    /// Indices of bubbles holding at least one row of `mask`.
    pub fn hover(&self, mask: &BitSet) -> Vec<usize> {
        (0..self.bubbles.len())
            .filter(|&b| self.bubbles[b].members.iter().any(|&r| mask.contains(r)))
            .collect()
    }

    /// The given rows plus the shadow rows of every bubble they touch,
    /// sorted and deduplicated.
    pub fn expand_selection(&self, rows: &[usize]) -> Vec<usize> {
        let wanted: rustc_hash::FxHashSet<usize> = rows.iter().copied().collect();
        let mut out: Vec<usize> = rows.to_vec();
        for b in &self.bubbles {
            if b.members.iter().any(|r| wanted.contains(r)) {
                out.extend_from_slice(&b.shadow);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Grouping class of each row under `outcome`.
fn outcome_classes(matrix: &FeatureMatrix, outcome: &str) -> Result<Vec<u64>> {
    Ok(match matrix.outcome(outcome)? {
        OutcomeVector::Binary(v) => v.iter().map(|&b| b as u64).collect(),
        OutcomeVector::Continuous(v) => {
            let eval = matrix.split().evaluation_rows();
            let lo = eval.iter().map(|&r| v[r]).fold(f64::INFINITY, f64::min);
            let hi = eval.iter().map(|&r| v[r]).fold(f64::NEG_INFINITY, f64::max);
            let width = (hi - lo) / CONTINUOUS_CLASSES as f64;
            v.iter()
                .map(|&x| {
                    if width > 0.0 {
                        (((x - lo) / width).floor().max(0.0) as u64)
                            .min(CONTINUOUS_CLASSES as u64 - 1)
                    } else {
                        0
                    }
                })
                .collect()
        }
    })
}

fn subgroup_masks(matrix: &FeatureMatrix, subgroups: &[Rule], cap: usize) -> Result<Vec<BitSet>> {
    if subgroups.len() > cap {
        return Err(Error::InvalidArgument(format!(
            "at most {cap} subgroups can be selected, got {}",
            subgroups.len()
        )));
    }
    subgroups
        .iter()
        .map(|r| evaluate_mask(r, matrix).map(|m| m.bits().clone()))
        .collect()
}

fn signature_bits(masks: &[BitSet], row: usize) -> u64 {
    masks.iter().enumerate().fold(
        0,
        |acc, (i, m)| if m.contains(row) { acc | (1 << i) } else { acc },
    )
}

fn bits_to_list(bits: u64) -> Vec<usize> {
    (0..64).filter(|&i| bits & (1 << i) != 0).collect()
}

/// Builds the map for the evaluation split. Rows are grouped by outcome
/// class and by their membership signature over `subgroups`, so the layout
/// is rebuilt whenever the selection changes.
pub fn build_layout(
    matrix: &FeatureMatrix,
    embedding: &Embedding,
    outcome: &str,
    subgroups: &[Rule],
    options: &MapOptions,
) -> Result<BubbleLayout> {
    if embedding.coords.len() != matrix.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "embedding has {} points for {} rows",
            embedding.coords.len(),
            matrix.n_rows()
        )));
    }
    if !(options.fill > 0.0 && options.fill.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "fill must be positive, got {}",
            options.fill
        )));
    }
    let masks = subgroup_masks(matrix, subgroups, MAX_OVERLAY)?;
    let classes = outcome_classes(matrix, outcome)?;
    let property = |row: usize| classes[row] << MAX_OVERLAY | signature_bits(&masks, row);
    let values = matrix.outcome(outcome)?;

    let eval = matrix.split().evaluation_rows();
    let coords: Vec<[f64; 2]> = eval.iter().map(|&r| embedding.coords[r]).collect();
    let props: Vec<u64> = eval.iter().map(|&r| property(r)).collect();
    let groups = aggregate_bubbles(&coords, &props, options.threshold)?;

    let extent = Extent::of_points(coords.iter().copied());
    let mut area = extent.width() * extent.height();
    if area <= 0.0 {
        area = extent.diagonal().powi(2).max(1.0);
    }
    let unit = (options.fill * area / (std::f64::consts::PI * eval.len().max(1) as f64)).sqrt();

    let mut bubbles: Vec<Bubble> = groups
        .iter()
        .map(|g| {
            let members: Vec<usize> = g.members.iter().map(|&i| eval[i]).collect();
            let outcome =
                members.iter().map(|&r| values.value(r)).sum::<f64>() / members.len() as f64;
            Bubble {
                x: g.centroid[0],
                y: g.centroid[1],
                r: unit * (members.len() as f64).sqrt(),
                count: members.len(),
                outcome,
                signature: Vec::new(),
                arcs: Vec::new(),
                members,
                shadow: Vec::new(),
            }
        })
        .collect();

    let mut by_property: FxHashMap<u64, Vec<usize>> = FxHashMap::default();
    for (b, g) in groups.iter().enumerate() {
        by_property.entry(g.property).or_default().push(b);
    }
    let all: Vec<usize> = (0..bubbles.len()).collect();
    for &row in matrix.split().discovery_rows() {
        let [x, y] = embedding.coords[row];
        let pool = by_property.get(&property(row)).unwrap_or(&all);
        let nearest = pool.iter().copied().min_by(|&a, &b| {
            let da = (bubbles[a].x - x).powi(2) + (bubbles[a].y - y).powi(2);
            let db = (bubbles[b].x - x).powi(2) + (bubbles[b].y - y).powi(2);
            da.total_cmp(&db).then(a.cmp(&b))
        });
        if let Some(b) = nearest {
            bubbles[b].shadow.push(row);
        }
    }

    overlay_subgroups(&mut bubbles, &masks)?;
    relax_overlaps(&mut bubbles);

    let intersections = if subgroups.is_empty() {
        Vec::new()
    } else {
        summary_from_masks(matrix, &masks, outcome)?.cells
    };
    Ok(BubbleLayout {
        seed: embedding.seed,
        threshold: options.threshold,
        outcome: outcome.to_string(),
        subgroups: subgroups.iter().map(Rule::to_text).collect(),
        extent: extent_of_bubbles(&bubbles),
        bubbles,
        intersections,
        distinguishing: None,
    })
}

fn extent_of_bubbles(bubbles: &[Bubble]) -> Extent {
    if bubbles.is_empty() {
        return Extent::of_points(std::iter::empty());
    }
    let mut e = Extent::of_points(bubbles.iter().map(|b| [b.x, b.y]));
    for b in bubbles {
        e.min_x = e.min_x.min(b.x - b.r);
        e.min_y = e.min_y.min(b.y - b.r);
        e.max_x = e.max_x.max(b.x + b.r);
        e.max_y = e.max_y.max(b.y + b.r);
    }
    e
}

/// Tolerance used for the non-overlap guarantee.
pub fn overlap_tolerance(bubbles: &[Bubble]) -> f64 {
    1e-6 * extent_of_bubbles(bubbles).diagonal()
}

/// Separates overlapping bubbles in place; see [`relax_circles`].
pub fn relax_overlaps(bubbles: &mut [Bubble]) -> RelaxReport {
    let tol = overlap_tolerance(bubbles);
    let mut circles: Vec<Circle> = bubbles.iter().map(|b| [b.x, b.y, b.r]).collect();
    let report = relax_circles(&mut circles, tol);
    for (b, c) in bubbles.iter_mut().zip(&circles) {
        b.x = c[0];
        b.y = c[1];
    }
    report
}

/// Sets each bubble's signature from its first member and splits its border
/// into equal arcs, one per containing subgroup.
pub fn overlay_subgroups(bubbles: &mut [Bubble], masks: &[BitSet]) -> Result<()> {
    if masks.len() > MAX_OVERLAY {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_OVERLAY} subgroups can be overlaid, got {}",
            masks.len()
        )));
    }
    for b in bubbles {
        let Some(&first) = b.members.first() else {
            continue;
        };
        b.signature = bits_to_list(signature_bits(masks, first));
        let share = 1.0 / b.signature.len().max(1) as f64;
        b.arcs = b
            .signature
            .iter()
            .enumerate()
            .map(|(k, &s)| ArcSegment {
                subgroup: s,
                start: k as f64 * share,
                fraction: share,
            })
            .collect();
    }
    Ok(())
}

/// Size and outcome rate of every non-empty membership combination over the
/// evaluation split, the empty signature included. Cells are ordered by
/// signature bits.
pub fn intersection_summary(
    matrix: &FeatureMatrix,
    subgroups: &[Rule],
    outcome: &str,
) -> Result<IntersectionSummary> {
    if subgroups.is_empty() {
        return Err(Error::InvalidArgument(
            "intersection summary needs at least one subgroup".into(),
        ));
    }
    let masks = subgroup_masks(matrix, subgroups, 64)?;
    summary_from_masks(matrix, &masks, outcome)
}

fn summary_from_masks(
    matrix: &FeatureMatrix,
    masks: &[BitSet],
    outcome: &str,
) -> Result<IntersectionSummary> {
    let values = matrix.outcome(outcome)?;
    let eval = matrix.split().evaluation_rows();
    let mut cells: FxHashMap<u64, (usize, f64)> = FxHashMap::default();
    for &r in eval {
        let e = cells.entry(signature_bits(masks, r)).or_default();
        e.0 += 1;
        e.1 += values.value(r);
    }
    let mut keys: Vec<u64> = cells.keys().copied().collect();
    keys.sort_unstable();
    Ok(IntersectionSummary {
        outcome: outcome.to_string(),
        total: eval.len(),
        cells: keys
            .into_iter()
            .map(|k| {
                let (size, sum) = cells[&k];
                IntersectionCell {
                    signature: bits_to_list(k),
                    size,
                    rate: sum / size as f64,
                }
            })
            .collect(),
    })
}

/// The `(feature, value)` pair over the evaluation split maximising the
/// harmonic mean of P(value | selection) and P(selection | value). Ties go to
/// higher precision, then to the smaller `(feature, value)` name.
pub fn distinguishing_feature(
    selection: &Mask,
    matrix: &FeatureMatrix,
) -> Result<DistinguishingFeature> {
    let eval = matrix.split().evaluation_rows();
    let selected: Vec<bool> = eval.iter().map(|&r| selection.contains(r)).collect();
    let n_sel = selected.iter().filter(|&&s| s).count();
    if n_sel == 0 {
        return Err(Error::EmptySource(
            "selection has no evaluation rows".into(),
        ));
    }
    let mut best: Option<DistinguishingFeature> = None;
    for col in matrix.features() {
        let width = col.vocabulary.len();
        let mut total = vec![0usize; width];
        let mut hits = vec![0usize; width];
        for (k, &r) in eval.iter().enumerate() {
            let c = col.codes.get(r) as usize;
            total[c] += 1;
            if selected[k] {
                hits[c] += 1;
            }
        }
        for c in 0..width {
            if hits[c] == 0 {
                continue;
            }
            let precision = hits[c] as f64 / n_sel as f64;
            let recall = hits[c] as f64 / total[c] as f64;
            let score = 2.0 * precision * recall / (precision + recall);
            let cand = DistinguishingFeature {
                feature: col.name.clone(),
                value: col.vocabulary[c].clone(),
                precision,
                recall,
                score,
            };
            let better = match &best {
                None => true,
                Some(b) => score
                    .total_cmp(&b.score)
                    .then(precision.total_cmp(&b.precision))
                    .then_with(|| (&b.feature, &b.value).cmp(&(&cand.feature, &cand.value)))
                    .is_gt(),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("matrix has no features".into()))
}
