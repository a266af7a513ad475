//! Exact Euclidean distance transforms (separable lower-envelope method).

use super::{LabelMap, ProbabilityMap, Raster, Region};
use crate::par;

const FAR: f64 = 1e20;

/// One-dimensional squared distance transform of sampled function `f`.
fn envelope_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let mut s;
        loop {
            let p = v[k];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] {
                // z[0] is -inf, so k never underflows here
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every cell of a `width x height`
/// grid to the nearest cell for which `is_feature(row, col)` holds.
///
/// Cells with no feature anywhere in the grid get a value `>= 1e20`.
pub fn squared_edt<F>(width: usize, height: usize, is_feature: F) -> Vec<f64>
where
    F: Fn(usize, usize) -> bool,
{
    let n = width.max(height);
    let mut grid = vec![FAR; width * height];
    for r in 0..height {
        for c in 0..width {
            if is_feature(r, c) {
                grid[r * width + c] = 0.0;
            }
        }
    }
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for c in 0..width {
        for r in 0..height {
            f[r] = grid[r * width + c];
        }
        envelope_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for r in 0..height {
            grid[r * width + c] = out[r];
        }
    }
    for r in 0..height {
        let row = &mut grid[r * width..(r + 1) * width];
        f[..width].copy_from_slice(row);
        envelope_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    grid
}

/// Distances of one region's pixels to the nearest pixel with another label.
/// Pixels outside the raster count as background.
fn region_distances(labels: &LabelMap, region: &Region) -> Vec<f64> {
    let (r0, c0, r1, c1) = region.bbox;
    // One pixel of padding holds the nearest non-member for every member.
    let (lr0, lc0) = (r0 as i64 - 1, c0 as i64 - 1);
    let (lw, lh) = (c1 - c0 + 3, r1 - r0 + 3);
    let sq = squared_edt(lw, lh, |r, c| {
        labels.get_signed(lr0 + r as i64, lc0 + c as i64) != Some(region.id)
    });
    let w = labels.width();
    region
        .pixels
        .indices()
        .iter()
        .map(|&i| {
            let (r, c) = (i as usize / w, i as usize % w);
            let lr = (r as i64 - lr0) as usize;
            let lc = (c as i64 - lc0) as usize;
            sq[lr * lw + lc].sqrt()
        })
        .collect()
}

/// Exact Euclidean distance from each foreground pixel to the nearest pixel
/// that is background or belongs to a different instance; 0 on background.
///
/// The ring of pixels just outside the raster counts as background.
pub fn distance_to_background(labels: &LabelMap) -> Raster<f64> {
    let regions = labels.regions();
    let per_region = par::map(&regions, |reg| region_distances(labels, reg));
    let mut out = Raster::filled(labels.width(), labels.height(), 0.0).expect("valid dims");
    let data = out.as_mut_slice();
    for (reg, dists) in regions.iter().zip(per_region) {
        for (&i, d) in reg.pixels.indices().iter().zip(dists) {
            data[i as usize] = d;
        }
    }
    out
}

/// Distance to background normalised per instance by that instance's maximum.
pub fn object_probability(labels: &LabelMap) -> ProbabilityMap {
    let regions = labels.regions();
    let per_region = par::map(&regions, |reg| region_distances(labels, reg));
    let mut out = Raster::filled(labels.width(), labels.height(), 0.0).expect("valid dims");
    let data = out.as_mut_slice();
    for (reg, dists) in regions.iter().zip(per_region) {
        let max = dists.iter().copied().fold(0.0, f64::max);
        for (&i, d) in reg.pixels.indices().iter().zip(dists) {
            data[i as usize] = if max > 0.0 { d / max } else { 0.0 };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive oracle: nearest pixel with a different label, including the
    /// one-pixel ring around the raster.
    fn brute(labels: &LabelMap) -> Vec<f64> {
        let (w, h) = labels.dims();
        let mut out = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                let id = labels.get(r, c);
                if id == 0 {
                    continue;
                }
                let mut best = f64::INFINITY;
                for rr in -1..=h as i64 {
                    for cc in -1..=w as i64 {
                        if labels.get_signed(rr, cc) != Some(id) {
                            let d = ((rr - r as i64).pow(2) + (cc - c as i64).pow(2)) as f64;
                            best = best.min(d);
                        }
                    }
                }
                out[r * w + c] = best.sqrt();
            }
        }
        out
    }

    fn disk(size: usize, radius: f64) -> LabelMap {
        let mut lm = LabelMap::new(size, size).unwrap();
        let c = (size / 2) as f64;
        for r in 0..size {
            for col in 0..size {
                let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
                if d2 < radius * radius {
                    lm.set(r, col, 1);
                }
            }
        }
        lm
    }

    #[test]
    fn all_background_is_zero() {
        let lm = LabelMap::new(7, 5).unwrap();
        assert!(distance_to_background(&lm).as_slice().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn isolated_pixel_is_one() {
        let mut lm = LabelMap::new(5, 5).unwrap();
        lm.set(2, 2, 4);
        let d = distance_to_background(&lm);
        assert_eq!(*d.get(2, 2), 1.0);
        let p = object_probability(&lm);
        assert_eq!(*p.get(2, 2), 1.0);
    }

    #[test]
    fn disk_center_matches_oracle() {
        let lm = disk(41, 10.0);
        let d = distance_to_background(&lm);
        assert!((d.get(20, 20) - 10.0).abs() <= 0.5);
        let oracle = brute(&lm);
        for (a, b) in d.as_slice().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn touching_instances_normalised_independently() {
        let mut lm = LabelMap::new(20, 10).unwrap();
        for r in 0..10 {
            for c in 0..20 {
                lm.set(r, c, if c < 8 { 1 } else { 2 });
            }
        }
        let p = object_probability(&lm);
        for id in [1, 2] {
            let max = lm
                .region(id)
                .unwrap()
                .pixels
                .indices()
                .iter()
                .map(|&i| p.as_slice()[i as usize])
                .fold(0.0, f64::max);
            assert_eq!(max, 1.0);
        }
        assert!(p.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn disk_probability_monotone_along_rays() {
        let lm = disk(61, 20.0);
        let p = object_probability(&lm);
        let (mut ar, mut ac, mut best) = (0, 0, -1.0);
        for r in 0..61 {
            for c in 0..61 {
                if *p.get(r, c) > best {
                    best = *p.get(r, c);
                    (ar, ac) = (r, c);
                }
            }
        }
        assert_eq!(best, 1.0);
        for i in 0..32 {
            let a = std::f64::consts::TAU * i as f64 / 32.0;
            let mut last = f64::INFINITY;
            for step in 0..40 {
                let t = step as f64;
                let (r, c) = (
                    (ar as f64 - t * a.sin()).round() as i64,
                    (ac as f64 + t * a.cos()).round() as i64,
                );
                let Some(&v) = p.get_signed(r, c) else { break };
                // rounding to the pixel grid allows a one-pixel jitter
                let tol = 1.5 / 20.0;
                assert!(v <= last + tol, "ray {i} step {step}: {v} after {last}");
                last = last.min(v);
            }
        }
    }

    #[test]
    fn squared_edt_no_features() {
        let g = squared_edt(3, 2, |_, _| false);
        assert!(g.iter().all(|&v| v >= 1e20));
    }
}
