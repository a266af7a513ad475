//! Area and volume conversions shared by scene generation and evaluation.

use std::f64::consts::PI;

/// Area of a star polygon with equally spaced rays.
pub fn polygon_area(radii: &[f64]) -> f64 {
    let k = radii.len();
    if k < 3 {
        return 0.0;
    }
    let s = (std::f64::consts::TAU / k as f64).sin();
    let mut acc = 0.0;
    for i in 0..k {
        acc += radii[i] * radii[(i + 1) % k];
    }
    0.5 * s * acc
}

/// Diameter of the circle with the given area.
pub fn equivalent_diameter(area: f64) -> f64 {
    if area <= 0.0 {
        0.0
    } else {
        2.0 * (area / PI).sqrt()
    }
}

/// Volume of the sphere whose great circle has the given projected area.
pub fn sphere_volume_from_area(area: f64) -> f64 {
    let d = equivalent_diameter(area);
    PI / 6.0 * d * d * d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_polygon_area() {
        // square with circumradius 1 has area 2
        assert!((polygon_area(&[1.0; 4]) - 2.0).abs() < 1e-12);
        let a = polygon_area(&[10.0; 64]);
        assert!((a / (PI * 100.0) - 1.0).abs() < 2e-3);
    }

    #[test]
    fn sphere_from_area() {
        let v = sphere_volume_from_area(PI * 4.0);
        assert!((v - PI / 6.0 * 64.0).abs() < 1e-12);
        assert_eq!(sphere_volume_from_area(0.0), 0.0);
        assert!((equivalent_diameter(PI * 4.0) - 4.0).abs() < 1e-12);
    }
}
