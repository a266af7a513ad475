//! Raster and polygon primitives.
//!
//! Coordinates are `(row, col)` with the center of pixel `(r, c)` at exactly
//! `(r as f64, c as f64)`; a pixel covers `[r - 0.5, r + 0.5) x [c - 0.5, c + 0.5)`.
//! Direction `i` of a `k`-ray star polygon has angle `2*pi*i/k`, measured from
//! the `+col` axis and increasing counter-clockwise on screen, i.e. its unit
//! vector is `(drow, dcol) = (-sin a, cos a)`.

mod edt;
mod measure;
mod nms;
mod radial;
mod rasterize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use edt::{distance_to_background, object_probability, squared_edt};
pub use measure::{equivalent_diameter, polygon_area, sphere_volume_from_area};
pub use nms::{nms_polygons, DEFAULT_NMS_THRESHOLD};
pub use radial::{march_rays, radial_distances, RayHit};
pub use rasterize::{rasterize, rasterize_set, rasterize_spans, Span};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("raster must have positive dimensions, got {width}x{height}")]
    EmptyRaster { width: usize, height: usize },
    #[error("buffer holds {got} values but {width}x{height} needs {expected}")]
    BufferSize {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("center ({row:.2}, {col:.2}) does not lie inside instance {id}")]
    CenterOutsideInstance { row: f64, col: f64, id: u32 },
    #[error("radii length {got} does not match k = {k}")]
    RadiiLength { k: usize, got: usize },
    #[error("invalid radius {0}")]
    InvalidRadius(f64),
    #[error("polygon unit must be px for this operation")]
    NotPixelUnit,
}

/// Dense row-major raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyRaster { width, height });
        }
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyRaster { width, height });
        }
        if data.len() != width * height {
            return Err(GeometryError::BufferSize {
                width,
                height,
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    /// Signed lookup; `None` outside the raster.
    #[inline]
    pub fn get_signed(&self, row: i64, col: i64) -> Option<&T> {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            None
        } else {
            Some(&self.data[row as usize * self.width + col as usize])
        }
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let w = self.width;
        self.data[row * w + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

/// Per-pixel object probability in `[0, 1]`.
pub type ProbabilityMap = Raster<f64>;

/// Binary mask.
pub type Mask = Raster<bool>;

impl Mask {
    pub fn empty(width: usize, height: usize) -> Result<Self, GeometryError> {
        Raster::filled(width, height, false)
    }

    pub fn count(&self) -> usize {
        self.as_slice().iter().filter(|&&b| b).count()
    }

    pub fn to_set(&self) -> PixelSet {
        PixelSet::from_sorted(
            self.as_slice()
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i as u32)
                .collect(),
        )
    }

    /// Intersection over union; 0 when both masks are empty.
    pub fn iou(&self, other: &Mask) -> Result<f64, GeometryError> {
        iou(self, other)
    }
}

/// Intersection over union of two same-sized masks; 0 when both are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64, GeometryError> {
    if a.dims() != b.dims() {
        return Err(GeometryError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Sparse pixel set: sorted, deduplicated linear indices into a raster.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PixelSet(Vec<u32>);

impl PixelSet {
    /// Wraps indices that are already sorted and unique.
    pub fn from_sorted(indices: Vec<u32>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self(indices)
    }

    pub fn from_unsorted(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn contains(&self, index: u32) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn intersection_len(&self, other: &PixelSet) -> usize {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn iou(&self, other: &PixelSet) -> f64 {
        let inter = self.intersection_len(other);
        let union = self.len() + other.len() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn is_subset_of(&self, other: &PixelSet) -> bool {
        self.intersection_len(other) == self.len()
    }

    /// Mean `(row, col)` of the set, `None` when empty.
    pub fn centroid(&self, width: usize) -> Option<(f64, f64)> {
        if self.0.is_empty() {
            return None;
        }
        let (mut sr, mut sc) = (0.0, 0.0);
        for &i in &self.0 {
            sr += (i as usize / width) as f64;
            sc += (i as usize % width) as f64;
        }
        let n = self.0.len() as f64;
        Some((sr / n, sc / n))
    }

    pub fn to_mask(&self, width: usize, height: usize) -> Result<Mask, GeometryError> {
        let mut m = Mask::empty(width, height)?;
        for &i in &self.0 {
            m.as_mut_slice()[i as usize] = true;
        }
        Ok(m)
    }
}

/// Instance-id raster: 0 is background, `k > 0` labels instance `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap(Raster<u32>);

/// Pixels and bounding box of one instance of a [`LabelMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: u32,
    pub pixels: PixelSet,
    /// Inclusive `(row_min, col_min, row_max, col_max)`.
    pub bbox: (usize, usize, usize, usize),
}

impl LabelMap {
    pub fn new(width: usize, height: usize) -> Result<Self, GeometryError> {
        Ok(Self(Raster::filled(width, height, 0)?))
    }

    pub fn from_vec(width: usize, height: usize, ids: Vec<u32>) -> Result<Self, GeometryError> {
        Ok(Self(Raster::from_vec(width, height, ids)?))
    }

    pub fn raster(&self) -> &Raster<u32> {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        *self.0.get(row, col)
    }

    #[inline]
    pub fn get_signed(&self, row: i64, col: i64) -> Option<u32> {
        self.0.get_signed(row, col).copied()
    }

    pub fn set(&mut self, row: usize, col: usize, id: u32) {
        self.0.set(row, col, id);
    }

    pub fn ids(&self) -> &[u32] {
        self.0.as_slice()
    }

    pub fn ids_mut(&mut self) -> &mut [u32] {
        self.0.as_mut_slice()
    }

    /// Distinct instance ids, ascending.
    pub fn instance_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.ids().iter().copied().filter(|&v| v != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// All instances with their pixel sets, ascending by id.
    pub fn regions(&self) -> Vec<Region> {
        let w = self.width();
        let mut map: BTreeMap<u32, (Vec<u32>, (usize, usize, usize, usize))> = BTreeMap::new();
        for (i, &id) in self.ids().iter().enumerate() {
            if id == 0 {
                continue;
            }
            let (r, c) = (i / w, i % w);
            let e = map
                .entry(id)
                .or_insert_with(|| (Vec::new(), (r, c, r, c)));
            e.0.push(i as u32);
            let b = &mut e.1;
            b.0 = b.0.min(r);
            b.1 = b.1.min(c);
            b.2 = b.2.max(r);
            b.3 = b.3.max(c);
        }
        map.into_iter()
            .map(|(id, (px, bbox))| Region {
                id,
                pixels: PixelSet::from_sorted(px),
                bbox,
            })
            .collect()
    }

    pub fn region(&self, id: u32) -> Option<Region> {
        if id == 0 {
            return None;
        }
        let w = self.width();
        let mut px = Vec::new();
        let mut bbox = (usize::MAX, usize::MAX, 0, 0);
        for (i, &v) in self.ids().iter().enumerate() {
            if v == id {
                let (r, c) = (i / w, i % w);
                px.push(i as u32);
                bbox = (bbox.0.min(r), bbox.1.min(c), bbox.2.max(r), bbox.3.max(c));
            }
        }
        if px.is_empty() {
            None
        } else {
            Some(Region {
                id,
                pixels: PixelSet::from_sorted(px),
                bbox,
            })
        }
    }

    pub fn foreground(&self) -> Mask {
        Raster::from_vec(
            self.width(),
            self.height(),
            self.ids().iter().map(|&v| v != 0).collect(),
        )
        .expect("dimensions already validated")
    }

    pub fn instance_mask(&self, id: u32) -> Mask {
        Raster::from_vec(
            self.width(),
            self.height(),
            self.ids().iter().map(|&v| v == id && id != 0).collect(),
        )
        .expect("dimensions already validated")
    }
}

/// Physical size of one (square) pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelScale {
    pub mm_per_px: f64,
}

impl PixelScale {
    pub fn new(mm_per_px: f64) -> Option<Self> {
        (mm_per_px.is_finite() && mm_per_px > 0.0).then_some(Self { mm_per_px })
    }

    pub fn area_mm2(&self, pixels: usize) -> f64 {
        pixels as f64 * self.mm_per_px * self.mm_per_px
    }
}

impl Default for PixelScale {
    fn default() -> Self {
        Self { mm_per_px: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Px,
    Mm,
}

/// Star-convex polygon: a center plus `k` radial distances at fixed angles.
///
/// The center is always in pixel coordinates; `unit` applies to the radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarPolygon {
    pub center: (f64, f64),
    pub radii: Vec<f64>,
    pub unit: Unit,
}

impl StarPolygon {
    pub fn new(center: (f64, f64), radii: Vec<f64>, unit: Unit) -> Result<Self, GeometryError> {
        if let Some(&r) = radii.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(GeometryError::InvalidRadius(r));
        }
        Ok(Self {
            center,
            radii,
            unit,
        })
    }

    pub fn k(&self) -> usize {
        self.radii.len()
    }

    /// Unit direction `(drow, dcol)` of ray `i` out of `k`.
    #[inline]
    pub fn direction(i: usize, k: usize) -> (f64, f64) {
        let a = std::f64::consts::TAU * i as f64 / k as f64;
        (-a.sin(), a.cos())
    }

    /// Vertices `(row, col)`; only meaningful for pixel units.
    pub fn vertices(&self) -> Vec<(f64, f64)> {
        let k = self.k();
        self.radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let (dr, dc) = Self::direction(i, k);
                (self.center.0 + r * dr, self.center.1 + r * dc)
            })
            .collect()
    }

    /// Polygon area in squared radius units.
    pub fn area(&self) -> f64 {
        polygon_area(&self.radii)
    }

    pub fn to_px(&self, scale: PixelScale) -> StarPolygon {
        match self.unit {
            Unit::Px => self.clone(),
            Unit::Mm => StarPolygon {
                center: self.center,
                radii: self.radii.iter().map(|r| r / scale.mm_per_px).collect(),
                unit: Unit::Px,
            },
        }
    }

    pub fn to_mm(&self, scale: PixelScale) -> StarPolygon {
        match self.unit {
            Unit::Mm => self.clone(),
            Unit::Px => StarPolygon {
                center: self.center,
                radii: self.radii.iter().map(|r| r * scale.mm_per_px).collect(),
                unit: Unit::Mm,
            },
        }
    }

    pub fn translated(&self, drow: f64, dcol: f64) -> StarPolygon {
        StarPolygon {
            center: (self.center.0 + drow, self.center.1 + dcol),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(w: usize, h: usize, r0: usize, c0: usize, side: usize, id: u32, lm: &mut LabelMap) {
        for r in r0..(r0 + side).min(h) {
            for c in c0..(c0 + side).min(w) {
                lm.set(r, c, id);
            }
        }
    }

    #[test]
    fn iou_examples() {
        let mut a = LabelMap::new(30, 30).unwrap();
        let mut b = LabelMap::new(30, 30).unwrap();
        square(30, 30, 0, 0, 10, 1, &mut a);
        square(30, 30, 0, 5, 10, 1, &mut b);
        let (ma, mb) = (a.foreground(), b.foreground());
        assert_eq!(iou(&ma, &ma).unwrap(), 1.0);
        // 10x5 overlap strip: 50 / 150
        assert!((iou(&ma, &mb).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((ma.to_set().iou(&mb.to_set()) - 1.0 / 3.0).abs() < 1e-15);

        let mut c = LabelMap::new(30, 30).unwrap();
        square(30, 30, 20, 20, 5, 1, &mut c);
        assert_eq!(iou(&ma, &c.foreground()).unwrap(), 0.0);

        let e = Mask::empty(30, 30).unwrap();
        assert_eq!(iou(&e, &e).unwrap(), 0.0);
        let small = Mask::empty(3, 3).unwrap();
        assert!(matches!(
            iou(&e, &small),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn regions_and_bboxes() {
        let mut lm = LabelMap::new(8, 6).unwrap();
        square(8, 6, 1, 1, 2, 3, &mut lm);
        lm.set(5, 7, 9);
        let regs = lm.regions();
        assert_eq!(regs.len(), 2);
        assert_eq!(regs[0].id, 3);
        assert_eq!(regs[0].pixels.len(), 4);
        assert_eq!(regs[0].bbox, (1, 1, 2, 2));
        assert_eq!(regs[1].bbox, (5, 7, 5, 7));
        assert_eq!(lm.region(9).unwrap(), regs[1]);
        assert!(lm.region(4).is_none());
        assert_eq!(lm.instance_ids(), vec![3, 9]);
    }

    #[test]
    fn rejects_empty_and_bad_buffers() {
        assert!(LabelMap::new(0, 4).is_err());
        assert!(LabelMap::from_vec(2, 2, vec![0; 3]).is_err());
        assert!(StarPolygon::new((0.0, 0.0), vec![1.0, -1.0], Unit::Px).is_err());
    }

    #[test]
    fn direction_convention() {
        let (dr, dc) = StarPolygon::direction(0, 4);
        assert!((dr - 0.0).abs() < 1e-15 && (dc - 1.0).abs() < 1e-15);
        // a quarter turn counter-clockwise on screen points up (towards -row)
        let (dr, dc) = StarPolygon::direction(1, 4);
        assert!((dr + 1.0).abs() < 1e-15 && dc.abs() < 1e-15);
    }
}
