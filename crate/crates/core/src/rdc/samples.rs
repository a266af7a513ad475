//! Training samples: visible and true radial distances of scene bubbles.

use serde::{Deserialize, Serialize};

use crate::geometry::{march_rays, LabelMap, PixelSet, RayHit};
use crate::synthgen::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdcSample {
    /// Visible radial distances, mm.
    pub input: Vec<f64>,
    /// True radial distances from the same center, mm.
    pub target: Vec<f64>,
    /// Directions whose visible ray ended on another instance.
    pub occluded: Vec<bool>,
    pub bubble_id: u32,
    pub center: (f64, f64),
    pub visible_area_px: usize,
    pub full_area_px: usize,
}

impl RdcSample {
    pub fn is_occluded(&self) -> bool {
        self.occluded.iter().any(|&o| o)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<RdcSample>,
    /// Bubbles skipped because nothing of them is visible.
    pub skipped: usize,
}

/// Centroid of a segment, moved to the nearest member pixel when the centroid
/// itself falls outside (crescent-shaped visible parts).
pub fn segment_center(pixels: &PixelSet, width: usize) -> Option<(f64, f64)> {
    let (cr, cc) = pixels.centroid(width)?;
    let idx = (cr.round() as usize) * width + cc.round() as usize;
    if pixels.contains(idx as u32) {
        return Some((cr, cc));
    }
    let nearest = pixels
        .indices()
        .iter()
        .map(|&i| ((i as usize / width) as f64, (i as usize % width) as f64))
        .min_by(|a, b| {
            let da = (a.0 - cr).powi(2) + (a.1 - cc).powi(2);
            let db = (b.0 - cr).powi(2) + (b.1 - cc).powi(2);
            da.total_cmp(&db)
        })?;
    Some(nearest)
}

/// Visible rays of instance `id` from `center` and their occlusion flags.
pub fn visible_rays(labels: &LabelMap, id: u32, center: (f64, f64), k: usize) -> (Vec<RayHit>, Vec<bool>) {
    let hits = march_rays(center, k, labels.width(), labels.height(), |r, c| {
        labels.get_signed(r, c) == Some(id)
    });
    let flags = hits
        .iter()
        .map(|h| h.exit_pixel.is_some_and(|(r, c)| {
            let v = labels.get(r, c);
            v != 0 && v != id
        }))
        .collect();
    (hits, flags)
}

/// One sample per bubble with a non-empty visible part.
pub fn extract_samples(scene: &Scene, k: usize) -> SampleSet {
    let (w, h) = (scene.width, scene.height);
    let s = scene.pixel_scale.mm_per_px;
    let mut set = SampleSet::default();
    for b in &scene.bubbles {
        let Some(center) = segment_center(&b.visible, w) else {
            set.skipped += 1;
            continue;
        };
        let (hits, occluded) = visible_rays(&scene.labels, b.id, center, k);
        let full = march_rays(center, k, w, h, |r, c| b.full.contains((r as usize * w + c as usize) as u32));
        set.samples.push(RdcSample {
            input: hits.iter().map(|h| h.radius * s).collect(),
            target: full.iter().map(|h| h.radius * s).collect(),
            occluded,
            bubble_id: b.id,
            center,
            visible_area_px: b.visible.len(),
            full_area_px: b.full.len(),
        });
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{compose_rdc_scene, SceneConfig, SceneSeed};

    #[test]
    fn front_bubble_input_equals_target() {
        let scene = compose_rdc_scene(&SceneConfig::rdc(), SceneSeed::new(8, 0)).unwrap();
        let set = extract_samples(&scene, 64);
        assert_eq!(set.skipped, 0);
        assert_eq!(set.samples.len(), scene.bubbles.len());
        let front = &set.samples[0];
        // nothing of the front bubble is hidden, though rays touching a
        // neighbor are still flagged
        assert_eq!(front.input, front.target);
    }

    #[test]
    fn occluded_directions_are_shorter() {
        let step_mm = 0.5 * 0.05;
        for i in 0..10 {
            let scene = compose_rdc_scene(&SceneConfig::rdc(), SceneSeed::new(8, i)).unwrap();
            for smp in extract_samples(&scene, 64).samples {
                for j in 0..64 {
                    assert!(smp.input[j] <= smp.target[j] + step_mm);
                    if !smp.occluded[j] {
                        assert!((smp.input[j] - smp.target[j]).abs() <= step_mm, "{j}");
                    }
                }
                if smp.bubble_id > 1 {
                    assert!(smp.is_occluded());
                }
            }
        }
    }

    #[test]
    fn crescent_center_falls_back_to_member_pixel() {
        let w = 20;
        let ring: Vec<u32> = (0..w * w)
            .filter(|&i| {
                let (r, c) = ((i / w) as f64 - 10.0, (i % w) as f64 - 10.0);
                let d = (r * r + c * c).sqrt();
                (6.0..8.0).contains(&d) && c < 0.0
            })
            .map(|i| i as u32)
            .collect();
        let set = PixelSet::from_sorted(ring);
        let (r, c) = segment_center(&set, w).unwrap();
        assert!(set.contains((r as usize * w + c as usize) as u32));
    }
}
