//! Greedy non-maximum suppression of star-polygon candidates.

use super::{rasterize_set, GeometryError, StarPolygon};
use crate::par;

pub const DEFAULT_NMS_THRESHOLD: f64 = 0.3;

/// Greedy NMS over rasterized polygons.
///
/// Candidates are visited by descending score (equal scores by ascending
/// index); a candidate is dropped when its IoU with any already selected
/// polygon exceeds `overlap_threshold`. Returns the selected candidate
/// indices in selection order.
pub fn nms_polygons(
    candidates: &[(StarPolygon, f64)],
    overlap_threshold: f64,
    width: usize,
    height: usize,
) -> Result<Vec<usize>, GeometryError> {
    let sets = par::map(candidates, |(p, _)| rasterize_set(p, width, height))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].1.total_cmp(&candidates[a].1).then(a.cmp(&b)));
    let mut selected: Vec<usize> = Vec::new();
    for i in order {
        let keep = selected
            .iter()
            .all(|&j| sets[i].iou(&sets[j]) <= overlap_threshold);
        if keep {
            selected.push(i);
        }
    }
    Ok(selected)
}
