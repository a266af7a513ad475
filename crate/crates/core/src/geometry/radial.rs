//! Ray marching of radial distances.

use super::{GeometryError, LabelMap, StarPolygon, Unit};

const STEP: f64 = 0.5;
const REFINE_ITERS: usize = 40;

#[inline]
fn pixel_of(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Where one ray left its region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub radius: f64,
    /// First pixel outside the region along the ray; `None` if the ray left
    /// the raster.
    pub exit_pixel: Option<(usize, usize)>,
}

/// Marches `k` rays from `center` in steps of half a pixel until the sample
/// pixel is no longer `inside`, then bisects between the last two samples to
/// locate the crossing.
pub fn march_rays<F>(center: (f64, f64), k: usize, width: usize, height: usize, inside: F) -> Vec<RayHit>
where
    F: Fn(i64, i64) -> bool,
{
    let diag = ((width * width + height * height) as f64).sqrt();
    let in_region = |t: f64, dr: f64, dc: f64| -> Option<bool> {
        let (r, c) = (pixel_of(center.0 + t * dr), pixel_of(center.1 + t * dc));
        if r < 0 || c < 0 || r >= height as i64 || c >= width as i64 {
            None
        } else {
            Some(inside(r, c))
        }
    };
    (0..k)
        .map(|i| {
            let (dr, dc) = StarPolygon::direction(i, k);
            let mut prev = 0.0;
            let mut t = STEP;
            loop {
                let state = in_region(t, dr, dc);
                if state != Some(true) {
                    let (mut lo, mut hi) = (prev, t);
                    for _ in 0..REFINE_ITERS {
                        let mid = 0.5 * (lo + hi);
                        if in_region(mid, dr, dc) == Some(true) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let exit_pixel = {
                        let (r, c) = (pixel_of(center.0 + t * dr), pixel_of(center.1 + t * dc));
                        (r >= 0 && c >= 0 && r < height as i64 && c < width as i64)
                            .then_some((r as usize, c as usize))
                    };
                    return RayHit {
                        radius: hi.min(diag),
                        exit_pixel,
                    };
                }
                prev = t;
                t += STEP;
            }
        })
        .collect()
}

/// Radial distances (pixels) from `center` to the boundary of instance `id`
/// along `k` equally spaced directions. Pixels of other instances end a ray
/// just like background.
pub fn radial_distances(
    labels: &LabelMap,
    center: (f64, f64),
    id: u32,
    k: usize,
) -> Result<StarPolygon, GeometryError> {
    let own = labels.get_signed(pixel_of(center.0), pixel_of(center.1));
    if id == 0 || own != Some(id) {
        return Err(GeometryError::CenterOutsideInstance {
            row: center.0,
            col: center.1,
            id,
        });
    }
    let hits = march_rays(center, k, labels.width(), labels.height(), |r, c| {
        labels.get_signed(r, c) == Some(id)
    });
    Ok(StarPolygon {
        center,
        radii: hits.into_iter().map(|h| h.radius).collect(),
        unit: Unit::Px,
    })
}
