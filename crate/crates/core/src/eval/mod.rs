//! Instance matching, AP at IoU thresholds, size histograms and gas
//! volume fractions.

mod study;

use serde::{Deserialize, Serialize};

use crate::ellipse::Ellipse;
use crate::geometry::{
    equivalent_diameter, polygon_area, sphere_volume_from_area, GeometryError, LabelMap, PixelScale, PixelSet,
    StarPolygon, Unit,
};

pub use study::{
    evaluate_image, summarize, write_histogram_csv, write_images_csv, GroupSummary, ImageEval, MeanSd, StudyConfig,
    StudySummary,
};

/// IoU thresholds 0.50, 0.55, ..., 0.90.
pub fn default_thresholds() -> Vec<f64> {
    (0..=8).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Pairs taken in descending IoU order.
    #[default]
    Greedy,
    /// Maximum number of pairs above the threshold.
    MaxCardinality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    /// Index into the prediction list.
    pub pred: usize,
    /// Index into the ground-truth list.
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub threshold: f64,
    pub pairs: Vec<MatchPair>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MatchResult {
    /// `TP / (TP + FP + FN)`, 1 when both sides are empty.
    pub fn average_precision(&self) -> f64 {
        let d = self.tp + self.fp + self.fn_;
        if d == 0 {
            1.0
        } else {
            self.tp as f64 / d as f64
        }
    }
}

pub fn average_precision(m: &MatchResult) -> f64 {
    m.average_precision()
}

/// Non-zero IoUs between every prediction and ground truth, as
/// `(pred, gt, iou)` in ascending index order.
pub fn iou_pairs(pred: &[PixelSet], gt: &[PixelSet], width: usize) -> Vec<(usize, usize, f64)> {
    let rows = |s: &PixelSet| {
        let ix = s.indices();
        (ix.first().map_or(usize::MAX, |&i| i as usize / width), ix.last().map_or(0, |&i| i as usize / width))
    };
    let gt_rows: Vec<_> = gt.iter().map(rows).collect();
    let mut out = Vec::new();
    for (p, ps) in pred.iter().enumerate() {
        let (p0, p1) = rows(ps);
        for (g, gs) in gt.iter().enumerate() {
            let (g0, g1) = gt_rows[g];
            if p0 > g1 || g0 > p1 {
                continue;
            }
            let iou = ps.iou(gs);
            if iou > 0.0 {
                out.push((p, g, iou));
            }
        }
    }
    out
}

/// One-to-one matching at IoU `>= threshold` from precomputed IoUs.
pub fn match_from_ious(
    ious: &[(usize, usize, f64)],
    n_pred: usize,
    n_gt: usize,
    threshold: f64,
    strategy: Matching,
) -> MatchResult {
    let mut cand: Vec<(usize, usize, f64)> = ious.iter().copied().filter(|c| c.2 >= threshold).collect();
    cand.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let pairs = match strategy {
        Matching::Greedy => {
            let (mut pu, mut gu) = (vec![false; n_pred], vec![false; n_gt]);
            let mut pairs = Vec::new();
            for (p, g, iou) in cand {
                if !pu[p] && !gu[g] {
                    pu[p] = true;
                    gu[g] = true;
                    pairs.push(MatchPair { pred: p, gt: g, iou });
                }
            }
            pairs
        }
        Matching::MaxCardinality => max_cardinality(&cand, n_pred, n_gt),
    };
    let tp = pairs.len();
    MatchResult {
        threshold,
        pairs,
        tp,
        fp: n_pred - tp,
        fn_: n_gt - tp,
    }
}

/// Augmenting-path bipartite matching; candidates are tried in the given order.
fn max_cardinality(cand: &[(usize, usize, f64)], n_pred: usize, n_gt: usize) -> Vec<MatchPair> {
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_pred];
    for &(p, g, iou) in cand {
        adj[p].push((g, iou));
    }
    let mut owner: Vec<Option<usize>> = vec![None; n_gt];
    fn augment(p: usize, adj: &[Vec<(usize, f64)>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &(g, _) in &adj[p] {
            if seen[g] {
                continue;
            }
            seen[g] = true;
            if owner[g].is_none_or(|q| augment(q, adj, seen, owner)) {
                owner[g] = Some(p);
                return true;
            }
        }
        false
    }
    for p in 0..n_pred {
        let mut seen = vec![false; n_gt];
        augment(p, &adj, &mut seen, &mut owner);
    }
    let mut pairs: Vec<MatchPair> = owner
        .iter()
        .enumerate()
        .filter_map(|(g, o)| {
            o.map(|p| MatchPair {
                pred: p,
                gt: g,
                iou: adj[p].iter().find(|e| e.0 == g).expect("edge exists").1,
            })
        })
        .collect();
    pairs.sort_by(|a, b| b.iou.total_cmp(&a.iou).then(a.pred.cmp(&b.pred)));
    pairs
}

/// Matches possibly overlapping instance pixel sets.
pub fn match_sets(pred: &[PixelSet], gt: &[PixelSet], width: usize, threshold: f64, strategy: Matching) -> MatchResult {
    match_from_ious(&iou_pairs(pred, gt, width), pred.len(), gt.len(), threshold, strategy)
}

/// Matches the instances of two label maps; pair indices refer to the
/// instances in ascending id order.
pub fn match_instances(pred: &LabelMap, gt: &LabelMap, threshold: f64) -> Result<MatchResult, GeometryError> {
    if pred.dims() != gt.dims() {
        return Err(GeometryError::DimensionMismatch { a: pred.dims(), b: gt.dims() });
    }
    let sets = |m: &LabelMap| m.regions().into_iter().map(|r| r.pixels).collect::<Vec<_>>();
    Ok(match_sets(&sets(pred), &sets(gt), pred.width(), threshold, Matching::Greedy))
}

/// AP at every threshold, computing IoUs once.
pub fn ap_curve(pred: &[PixelSet], gt: &[PixelSet], width: usize, thresholds: &[f64], strategy: Matching) -> Vec<f64> {
    let ious = iou_pairs(pred, gt, width);
    thresholds
        .iter()
        .map(|&t| match_from_ious(&ious, pred.len(), gt.len(), t, strategy).average_precision())
        .collect()
}

/// Area-bearing description of one instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    /// Pixel count of a mask.
    Mask(usize),
    Polygon(StarPolygon),
    /// Pixel-unit ellipse.
    Ellipse(Ellipse),
}

impl Instance {
    pub fn area_mm2(&self, scale: PixelScale) -> f64 {
        let s2 = scale.mm_per_px * scale.mm_per_px;
        match self {
            Instance::Mask(n) => *n as f64 * s2,
            Instance::Polygon(p) => match p.unit {
                Unit::Px => polygon_area(&p.radii) * s2,
                Unit::Mm => polygon_area(&p.radii),
            },
            Instance::Ellipse(e) => e.area() * s2,
        }
    }

    pub fn volume_mm3(&self, scale: PixelScale) -> f64 {
        sphere_volume_from_area(self.area_mm2(scale))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeHistogram {
    pub bin_width_mm: f64,
    pub counts: Vec<usize>,
}

impl SizeHistogram {
    pub fn bin_left_mm(&self, i: usize) -> f64 {
        i as f64 * self.bin_width_mm
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, d_eq_mm: f64) {
        let bin = (d_eq_mm / self.bin_width_mm).floor().max(0.0) as usize;
        if self.counts.len() <= bin {
            self.counts.resize(bin + 1, 0);
        }
        self.counts[bin] += 1;
    }

    pub fn merge(&mut self, other: &SizeHistogram) {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Histogram of equivalent diameters in fixed-width bins starting at 0.
pub fn size_histogram(instances: &[Instance], scale: PixelScale, bin_width_mm: f64) -> SizeHistogram {
    assert!(bin_width_mm > 0.0, "bin width must be positive");
    let mut h = SizeHistogram { bin_width_mm, counts: Vec::new() };
    for inst in instances {
        h.add(equivalent_diameter(inst.area_mm2(scale)));
    }
    h
}

/// Sum of area-equivalent sphere volumes over the `width x height x depth` domain.
pub fn gas_fraction(instances: &[Instance], scale: PixelScale, depth_mm: f64, canvas: (usize, usize)) -> f64 {
    let s = scale.mm_per_px;
    let domain = canvas.0 as f64 * s * canvas.1 as f64 * s * depth_mm;
    instances.iter().map(|i| i.volume_mm3(scale)).sum::<f64>() / domain
}

pub fn alpha_rel_error(predicted: f64, reference: f64) -> f64 {
    predicted / reference
}
