//! Scanline rasterization of star polygons.

use super::{GeometryError, Mask, PixelSet, StarPolygon, Unit};

/// Run of set pixels `[col_start, col_end)` on one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub row: usize,
    pub col_start: usize,
    pub col_end: usize,
}

/// Spans of pixels whose centers lie inside the polygon (even-odd rule),
/// clipped to the raster, ordered by row then column.
pub fn rasterize_spans(poly: &StarPolygon, width: usize, height: usize) -> Result<Vec<Span>, GeometryError> {
    if poly.unit != Unit::Px {
        return Err(GeometryError::NotPixelUnit);
    }
    let verts = poly.vertices();
    let n = verts.len();
    if n < 3 {
        return Ok(Vec::new());
    }
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(r, _) in &verts {
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    let row_lo = rmin.ceil().max(0.0);
    let row_hi = rmax.floor().min(height as f64 - 1.0);
    if !(row_lo <= row_hi) {
        return Ok(Vec::new());
    }
    let mut spans = Vec::new();
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for row in row_lo as usize..=row_hi as usize {
        let y = row as f64;
        xs.clear();
        for i in 0..n {
            let (ay, ax) = verts[i];
            let (by, bx) = verts[(i + 1) % n];
            if (ay <= y) != (by <= y) {
                xs.push(ax + (y - ay) * (bx - ax) / (by - ay));
            }
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        for pair in xs.chunks_exact(2) {
            // pixel centers c with x0 <= c < x1
            let c0 = pair[0].ceil().max(0.0);
            let c1 = pair[1].ceil().min(width as f64);
            if c0 < c1 {
                spans.push(Span {
                    row,
                    col_start: c0 as usize,
                    col_end: c1 as usize,
                });
            }
        }
    }
    Ok(spans)
}

/// Binary mask of pixels whose centers lie inside the polygon.
pub fn rasterize(poly: &StarPolygon, width: usize, height: usize) -> Result<Mask, GeometryError> {
    let mut mask = Mask::empty(width, height)?;
    for s in rasterize_spans(poly, width, height)? {
        let base = s.row * width;
        mask.as_mut_slice()[base + s.col_start..base + s.col_end].fill(true);
    }
    Ok(mask)
}

/// Like [`rasterize`] but returns the sparse pixel set.
pub fn rasterize_set(poly: &StarPolygon, width: usize, height: usize) -> Result<PixelSet, GeometryError> {
    let spans = rasterize_spans(poly, width, height)?;
    let mut idx = Vec::new();
    let mut last_row = None;
    for s in &spans {
        // spans on a row come sorted and disjoint; rows ascend
        debug_assert!(last_row.is_none_or(|r| r <= s.row));
        last_row = Some(s.row);
        let base = (s.row * width) as u32;
        idx.extend((s.col_start as u32..s.col_end as u32).map(|c| base + c));
    }
    Ok(PixelSet::from_unsorted(idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{radial_distances, LabelMap};

    #[test]
    fn zero_radii_is_empty() {
        let p = StarPolygon::new((10.0, 10.0), vec![0.0; 16], Unit::Px).unwrap();
        assert_eq!(rasterize(&p, 20, 20).unwrap().count(), 0);
    }

    #[test]
    fn off_canvas_is_empty() {
        let p = StarPolygon::new((10.0, 10.0), vec![5.0; 16], Unit::Px).unwrap();
        assert!(rasterize(&p, 20, 20).unwrap().count() > 0);
        for (dr, dc) in [(-100.0, 0.0), (100.0, 0.0), (0.0, -100.0), (0.0, 100.0)] {
            assert_eq!(rasterize(&p.translated(dr, dc), 20, 20).unwrap().count(), 0);
        }
    }

    #[test]
    fn mm_polygons_are_rejected() {
        let p = StarPolygon::new((1.0, 1.0), vec![1.0; 8], Unit::Mm).unwrap();
        assert_eq!(rasterize(&p, 4, 4), Err(GeometryError::NotPixelUnit));
    }

    #[test]
    fn disk_round_trip() {
        let mut lm = LabelMap::new(64, 64).unwrap();
        for r in 0..64 {
            for c in 0..64 {
                if (r as f64 - 32.0).powi(2) + (c as f64 - 31.0).powi(2) <= 400.0 {
                    lm.set(r, c, 1);
                }
            }
        }
        let p = radial_distances(&lm, (32.0, 31.0), 1, 64).unwrap();
        let m = rasterize(&p, 64, 64).unwrap();
        let iou = m.iou(&lm.foreground()).unwrap();
        assert!(iou >= 0.95, "{iou}");
        assert_eq!(rasterize_set(&p, 64, 64).unwrap(), m.to_set());
    }
}
