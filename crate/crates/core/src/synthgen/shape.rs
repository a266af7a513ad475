//! Parametric bubble outlines: an ellipse modulated by low-order harmonics.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::geometry::{equivalent_diameter, sphere_volume_from_area, StarPolygon, Unit};
use crate::DEFAULT_K;

/// Samples used for the quadrature of the continuous outline area.
const AREA_SAMPLES: usize = 4096;
/// Upper bound on any single relative harmonic amplitude.
pub const MAX_WOBBLE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Spherical,
    Ellipsoidal,
    Wobbling,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Spherical, ShapeClass::Ellipsoidal, ShapeClass::Wobbling];
}

/// Relative radius modulation `amplitude * cos(order * theta + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleShape {
    pub class: ShapeClass,
    pub equivalent_diameter_mm: f64,
    pub semi_major_mm: f64,
    pub semi_minor_mm: f64,
    pub orientation_rad: f64,
    pub wobble: Vec<Harmonic>,
    /// Outline sampled at `k` equally spaced directions, in mm.
    pub radii_mm: Vec<f64>,
}

/// Polar radius of an origin-centred ellipse at angle `phi` from its major axis.
fn ellipse_radius(a: f64, b: f64, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    a * b / ((b * c).powi(2) + (a * s).powi(2)).sqrt()
}

impl BubbleShape {
    pub fn new(
        class: ShapeClass,
        semi_major_mm: f64,
        semi_minor_mm: f64,
        orientation_rad: f64,
        wobble: Vec<Harmonic>,
        k: usize,
    ) -> Result<Self, SynthError> {
        if !(semi_minor_mm > 0.0 && semi_major_mm >= semi_minor_mm && semi_major_mm.is_finite()) {
            return Err(SynthError::InvalidRange(format!(
                "semi-axes must satisfy a >= b > 0, got a = {semi_major_mm}, b = {semi_minor_mm}"
            )));
        }
        if let Some(h) = wobble.iter().find(|h| h.amplitude.abs() > MAX_WOBBLE) {
            return Err(SynthError::InvalidRange(format!(
                "wobble amplitude {} exceeds {MAX_WOBBLE}",
                h.amplitude
            )));
        }
        let mut shape = Self {
            class,
            equivalent_diameter_mm: 0.0,
            semi_major_mm,
            semi_minor_mm,
            orientation_rad,
            wobble,
            radii_mm: Vec::new(),
        };
        shape.radii_mm = (0..k)
            .map(|i| shape.radius_at(TAU * i as f64 / k as f64))
            .collect();
        shape.equivalent_diameter_mm = equivalent_diameter(shape.area_mm2());
        Ok(shape)
    }

    /// Continuous outline radius (mm) in direction `theta`.
    pub fn radius_at(&self, theta: f64) -> f64 {
        let base = ellipse_radius(self.semi_major_mm, self.semi_minor_mm, theta - self.orientation_rad);
        let m: f64 = self
            .wobble
            .iter()
            .map(|h| h.amplitude * (h.order as f64 * theta + h.phase).cos())
            .sum();
        base * (1.0 + m)
    }

    /// Area enclosed by the continuous outline, `0.5 * integral r(theta)^2`.
    pub fn area_mm2(&self) -> f64 {
        let h = TAU / AREA_SAMPLES as f64;
        let sum: f64 = (0..AREA_SAMPLES)
            .map(|i| self.radius_at(i as f64 * h).powi(2))
            .sum();
        0.5 * sum * h
    }

    pub fn max_radius_mm(&self) -> f64 {
        self.radii_mm.iter().copied().fold(0.0, f64::max)
    }

    /// The sampled outline placed at `center` (pixel coordinates), radii in mm.
    pub fn polygon_at(&self, center: (f64, f64)) -> StarPolygon {
        StarPolygon {
            center,
            radii: self.radii_mm.clone(),
            unit: Unit::Mm,
        }
    }
}

/// Draws a bubble of the given class with nominal equivalent diameter uniform
/// in `size_range_mm`.
pub fn sample_shape<R: Rng + ?Sized>(
    size_range_mm: (f64, f64),
    class: ShapeClass,
    rng: &mut R,
) -> Result<BubbleShape, SynthError> {
    let (lo, hi) = size_range_mm;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(SynthError::InvalidRange(format!("size range [{lo}, {hi}] mm")));
    }
    let d = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let aspect: f64 = match class {
        ShapeClass::Spherical => 1.0,
        _ => rng.random_range(0.5..=1.0),
    };
    let orientation = rng.random_range(0.0..PI);
    let wobble = match class {
        ShapeClass::Wobbling => (2..=4)
            .map(|order| Harmonic {
                order,
                amplitude: rng.random_range(0.02..=0.12),
                phase: rng.random_range(0.0..TAU),
            })
            .collect(),
        _ => Vec::new(),
    };
    // nominal diameter fixes the ellipse area: a * b = (d / 2)^2
    let r = d / 2.0;
    let (a, b) = (r / aspect.sqrt(), r * aspect.sqrt());
    BubbleShape::new(class, a, b, orientation, wobble, DEFAULT_K)
}

/// Volume of the area-equivalent sphere of the outline's projected area.
pub fn bubble_volume(shape: &BubbleShape) -> f64 {
    sphere_volume_from_area(shape.area_mm2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polygon_area;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sphere_has_equal_radii() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_shape((4.0, 4.0), ShapeClass::Spherical, &mut rng).unwrap();
        assert_eq!(s.radii_mm.len(), 64);
        for r in &s.radii_mm {
            assert!((r - 2.0).abs() < 1e-12);
        }
        assert!((bubble_volume(&s) - PI / 6.0 * 64.0).abs() < 1e-9);
    }

    #[test]
    fn ellipse_axes() {
        let s = BubbleShape::new(ShapeClass::Ellipsoidal, 2.0, 1.0, 0.0, vec![], 64).unwrap();
        assert!((s.radius_at(0.0) - 2.0).abs() < 1e-12);
        assert!((s.radius_at(PI / 2.0) - 1.0).abs() < 1e-12);
        assert!((s.radii_mm[16] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ellipse_volume_matches_analytic_and_polygon_routes() {
        let s = BubbleShape::new(ShapeClass::Ellipsoidal, 2.0, 1.0, 0.3, vec![], 64).unwrap();
        let analytic = PI / 6.0 * (2.0 * 2f64.sqrt()).powi(3);
        assert!((bubble_volume(&s) - analytic).abs() < 1e-9 * analytic);
        // 64-gon quadrature of the same outline
        let poly = sphere_volume_from_area(polygon_area(&s.radii_mm));
        assert!((poly / analytic - 1.0).abs() < 0.005);
    }

    #[test]
    fn wobble_ratio_bound() {
        let s = BubbleShape::new(
            ShapeClass::Wobbling,
            3.0,
            3.0,
            0.0,
            vec![Harmonic { order: 2, amplitude: 0.2, phase: 0.0 }],
            64,
        )
        .unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..10_000 {
            let r = s.radius_at(TAU * i as f64 / 10_000.0);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        // (1 - c) / (1 + c) for a single harmonic on a circle
        assert!((lo / hi - 0.8 / 1.2).abs() < 1e-6);
    }

    #[test]
    fn degenerate_shape_volume_is_zero() {
        let s = BubbleShape::new(ShapeClass::Spherical, 1.0, 1.0, 0.0, vec![], 0).unwrap();
        assert!(s.radii_mm.is_empty());
        assert_eq!(sphere_volume_from_area(polygon_area(&s.radii_mm)), 0.0);
    }

    #[test]
    fn invalid_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_shape((0.0, 3.0), ShapeClass::Spherical, &mut rng).is_err());
        assert!(sample_shape((5.0, 3.0), ShapeClass::Spherical, &mut rng).is_err());
        assert!(BubbleShape::new(ShapeClass::Ellipsoidal, 1.0, 2.0, 0.0, vec![], 8).is_err());
    }

    #[test]
    fn sampled_classes_respect_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            for class in ShapeClass::ALL {
                let s = sample_shape((2.0, 7.0), class, &mut rng).unwrap();
                assert!(s.semi_major_mm >= s.semi_minor_mm && s.semi_minor_mm > 0.0);
                let q = s.semi_minor_mm / s.semi_major_mm;
                assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&q));
                assert!(s.wobble.iter().all(|h| h.amplitude <= MAX_WOBBLE));
                assert!(s.radii_mm.iter().all(|&r| r > 0.0));
                if class != ShapeClass::Wobbling {
                    assert!(s.wobble.is_empty());
                }
            }
        }
    }
}
