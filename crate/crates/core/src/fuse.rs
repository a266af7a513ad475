//! Fusion of seed instances with a foreground mask, and training weight maps.

use crate::geometry::{squared_edt, GeometryError, LabelMap, Mask, Raster};
use crate::par;

/// Counts reported by [`grow_instances`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GrowReport {
    /// Foreground pixels newly assigned to an instance.
    pub claimed: usize,
    /// Foreground pixels with no seed in their connected component.
    pub unreached: usize,
}

const N8: [(i64, i64); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// 8-connected components of `inside`; returns per-pixel component index
/// (`u32::MAX` outside) and the inclusive bbox of every component.
fn components(width: usize, height: usize, inside: &[bool]) -> (Vec<u32>, Vec<(usize, usize, usize, usize)>) {
    let mut comp = vec![u32::MAX; inside.len()];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..inside.len() {
        if !inside[start] || comp[start] != u32::MAX {
            continue;
        }
        let cid = boxes.len() as u32;
        let (r, c) = (start / width, start % width);
        let mut bbox = (r, c, r, c);
        comp[start] = cid;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / width, i % width);
            bbox = (bbox.0.min(r), bbox.1.min(c), bbox.2.max(r), bbox.3.max(c));
            for (dr, dc) in N8 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= height as i64 || nc >= width as i64 {
                    continue;
                }
                let j = nr as usize * width + nc as usize;
                if inside[j] && comp[j] == u32::MAX {
                    comp[j] = cid;
                    stack.push(j);
                }
            }
        }
        boxes.push(bbox);
    }
    (comp, boxes)
}

/// Grows every seed instance over the unclaimed foreground.
///
/// Each unlabeled foreground pixel goes to the instance whose seed region is
/// Euclidean-nearest, ties to the lower id, considering only seeds in the
/// same 8-connected component of `foreground ∪ seeds`. This is the fixed
/// point of synchronous dilation with nearest-region conflict resolution,
/// computed directly. Seed pixels are never relabeled.
pub fn grow_instances(seeds: &LabelMap, foreground: &Mask) -> Result<(LabelMap, GrowReport), GeometryError> {
    if seeds.dims() != foreground.dims() {
        return Err(GeometryError::DimensionMismatch {
            a: seeds.dims(),
            b: foreground.dims(),
        });
    }
    let (w, h) = seeds.dims();
    let ids = seeds.ids();
    let fg = foreground.as_slice();
    let inside: Vec<bool> = ids.iter().zip(fg).map(|(&id, &f)| id != 0 || f).collect();
    let (comp, boxes) = components(w, h, &inside);

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); boxes.len()];
    for (i, &id) in ids.iter().enumerate() {
        if id != 0 {
            let m = &mut members[comp[i] as usize];
            if !m.contains(&id) {
                m.push(id);
            }
        }
    }
    // (component index, bbox, instance ids) with work to do
    let jobs: Vec<(usize, (usize, usize, usize, usize), Vec<u32>)> = members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(c, mut m)| {
            m.sort_unstable();
            (c, boxes[c], m)
        })
        .collect();

    let assigned = par::map(&jobs, |(cid, (r0, c0, r1, c1), inst)| {
        let (bw, bh) = (c1 - c0 + 1, r1 - r0 + 1);
        let mut best = vec![(f64::INFINITY, 0u32); bw * bh];
        for &id in inst {
            // same-id pixels of another component may share the bbox
            let d = squared_edt(bw, bh, |r, c| {
                let i = (r0 + r) * w + c0 + c;
                ids[i] == id && comp[i] == *cid as u32
            });
            for (b, &di) in best.iter_mut().zip(&d) {
                // ids ascend, so strict < keeps the lower id on ties
                if di < b.0 {
                    *b = (di, id);
                }
            }
        }
        let mut out = Vec::new();
        for r in 0..bh {
            for c in 0..bw {
                let i = (r0 + r) * w + c0 + c;
                if comp[i] == *cid as u32 && ids[i] == 0 {
                    out.push((i, best[r * bw + c].1));
                }
            }
        }
        out
    });

    let mut grown = seeds.clone();
    let mut report = GrowReport::default();
    for job in assigned {
        for (i, id) in job {
            grown.ids_mut()[i] = id;
            report.claimed += 1;
        }
    }
    report.unreached = grown.ids().iter().zip(fg).filter(|(&id, &f)| f && id == 0).count();
    Ok((grown, report))
}

pub const WEIGHT_INSIDE: f64 = 1.0;
pub const WEIGHT_GAP: f64 = 10.0;
pub const WEIGHT_ELSE: f64 = 0.05;
pub const DEFAULT_GAP_THRESHOLD: f64 = 10.0;

/// Per-pixel loss weight emphasizing narrow gaps between instances: 1 inside
/// any instance; 10 where the nearest and the second-nearest distinct
/// instance are both closer than `threshold` px; 0.05 elsewhere.
pub fn weight_map(labels: &LabelMap, threshold: f64) -> Raster<f64> {
    let (w, h) = labels.dims();
    let ids = labels.ids();
    let t2 = threshold * threshold;
    let pad = threshold.max(0.0).ceil() as usize;
    let regions = labels.regions();
    // only pixels within `threshold` of an instance can matter, so each
    // transform runs on the instance bbox padded by the threshold
    let fields = par::map(&regions, |reg| {
        let (r0, c0) = (reg.bbox.0.saturating_sub(pad), reg.bbox.1.saturating_sub(pad));
        let (r1, c1) = ((reg.bbox.2 + pad).min(h - 1), (reg.bbox.3 + pad).min(w - 1));
        let (bw, bh) = (c1 - c0 + 1, r1 - r0 + 1);
        let d = squared_edt(bw, bh, |r, c| ids[(r0 + r) * w + c0 + c] == reg.id);
        (r0, c0, bw, bh, d)
    });
    let mut d1 = vec![f64::INFINITY; w * h];
    let mut d2 = vec![f64::INFINITY; w * h];
    for (r0, c0, bw, bh, d) in fields {
        for r in 0..bh {
            for c in 0..bw {
                let i = (r0 + r) * w + c0 + c;
                let v = d[r * bw + c];
                if v < d1[i] {
                    d2[i] = d1[i];
                    d1[i] = v;
                } else if v < d2[i] {
                    d2[i] = v;
                }
            }
        }
    }
    let data = (0..w * h)
        .map(|i| {
            if ids[i] != 0 {
                WEIGHT_INSIDE
            } else if d1[i] < t2 && d2[i] < t2 {
                WEIGHT_GAP
            } else {
                WEIGHT_ELSE
            }
        })
        .collect();
    Raster::from_vec(w, h, data).expect("label map dims are valid")
}
