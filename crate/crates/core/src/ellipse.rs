//! Ellipse-based reconstruction of partially hidden segments.
//!
//! The fit is the direct, discriminant-constrained algebraic least-squares
//! conic fit (reduced 3x3 eigenproblem). Coordinates are `(row, col)` pixels
//! throughout; internally the conic is fitted in `x = col`, `y = row`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LabelMap, StarPolygon, Unit};

/// Reciprocal condition number below which the scatter system is treated
/// as rank deficient (collinear or repeated points).
pub const RCOND_MIN: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipseError {
    #[error("instance {0} has no pixels")]
    DegenerateSegment(u32),
    #[error("ellipse fit needs at least 5 well-spread points, got {0}")]
    InsufficientPoints(usize),
    #[error("no ellipse satisfies the constrained fit")]
    NonEllipseConic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// (row, col) in pixels.
    pub center: (f64, f64),
    pub a: f64,
    pub b: f64,
    /// Major-axis angle from +col, counter-clockwise as seen on screen, in [0, pi).
    pub theta: f64,
}

impl Ellipse {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.a * self.b
    }

    /// Distance from the center to the outline in screen direction `phi`.
    pub fn radius_at(&self, phi: f64) -> f64 {
        let (s, c) = (phi - self.theta).sin_cos();
        self.a * self.b / ((self.b * c).powi(2) + (self.a * s).powi(2)).sqrt()
    }

    pub fn to_polygon(&self, k: usize) -> StarPolygon {
        let radii = (0..k)
            .map(|i| self.radius_at(std::f64::consts::TAU * i as f64 / k as f64))
            .collect();
        StarPolygon {
            center: self.center,
            radii,
            unit: Unit::Px,
        }
    }
}

/// Pixels of `id` with at least one 4-neighbor outside the instance (the
/// canvas border counts as outside).
pub fn contour_points(labels: &LabelMap, id: u32) -> Result<Vec<(usize, usize)>, EllipseError> {
    let region = labels.region(id).ok_or(EllipseError::DegenerateSegment(id))?;
    let w = labels.width();
    Ok(region
        .pixels
        .indices()
        .iter()
        .map(|&i| (i as usize / w, i as usize % w))
        .filter(|&(r, c)| {
            N4.iter()
                .any(|&(dr, dc)| labels.get_signed(r as i64 + dr, c as i64 + dc) != Some(id))
        })
        .collect())
}

/// Contour pixels of `id` whose 8-neighborhood holds no other instance.
pub fn free_contour_points(labels: &LabelMap, id: u32) -> Result<Vec<(usize, usize)>, EllipseError> {
    Ok(contour_points(labels, id)?
        .into_iter()
        .filter(|&(r, c)| {
            N8.iter().all(|&(dr, dc)| {
                let v = labels.get_signed(r as i64 + dr, c as i64 + dc).unwrap_or(0);
                v == 0 || v == id
            })
        })
        .collect())
}

const N4: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const N8: [(i64, i64); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Midpoints of the pixel edges between contour pixels and the outside.
///
/// Fitting through these rather than through pixel centers places the
/// outline on the segment boundary, so a fit of an unoccluded segment has
/// about the segment's pixel area instead of systematically less.
pub fn boundary_points(labels: &LabelMap, id: u32, contour: &[(usize, usize)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(contour.len() * 2);
    for &(r, c) in contour {
        for &(dr, dc) in &N4 {
            if labels.get_signed(r as i64 + dr, c as i64 + dc) != Some(id) {
                out.push((r as f64 + 0.5 * dr as f64, c as f64 + 0.5 * dc as f64));
            }
        }
    }
    out
}

/// Direct constrained least-squares ellipse through `(row, col)` points.
pub fn fit_ellipse(points: &[(f64, f64)]) -> Result<Ellipse, EllipseError> {
    let n = points.len();
    if n < 5 {
        return Err(EllipseError::InsufficientPoints(n));
    }
    // isotropic normalization keeps the geometry and the conditioning sane
    let (my, mx) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r, b + c));
    let (my, mx) = (my / n as f64, mx / n as f64);
    let spread = (points
        .iter()
        .map(|&(r, c)| (r - my).powi(2) + (c - mx).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    if !(spread > 0.0) {
        return Err(EllipseError::InsufficientPoints(n));
    }
    let s = spread / std::f64::consts::SQRT_2;

    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    // sum in input order; permutations only change rounding
    for &(r, c) in points {
        let (x, y) = ((c - mx) / s, (r - my) / s);
        let d1 = Vector3::new(x * x, x * y, y * y);
        let d2 = Vector3::new(x, y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let ev = SymmetricEigen::new(s3).eigenvalues;
    let (lo, hi) = (ev.min(), ev.max());
    if !(hi > 0.0) || lo / hi < RCOND_MIN {
        return Err(EllipseError::InsufficientPoints(n));
    }
    let s3_inv = s3.try_inverse().ok_or(EllipseError::InsufficientPoints(n))?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // premultiply by the inverse of the 4ac - b^2 constraint block
    let mm = Matrix3::from_rows(&[
        m.row(2) / 2.0,
        -m.row(1),
        m.row(0) / 2.0,
    ]);

    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in mm.complex_eigenvalues().iter() {
        if lambda.im.abs() > 1e-9 * (1.0 + lambda.re.abs()) {
            continue;
        }
        let Some(a1) = null_vector(&(mm - Matrix3::identity() * lambda.re)) else {
            continue;
        };
        let cond = 4.0 * a1[0] * a1[2] - a1[1] * a1[1];
        if cond <= 0.0 {
            continue;
        }
        // algebraic residual under the normalization 4ac - b^2 = 1
        let cost = (a1.transpose() * m * a1)[0] / cond;
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, a1));
        }
    }
    let (_, a1) = best.ok_or(EllipseError::NonEllipseConic)?;
    let a2 = t * a1;
    let e = conic_to_ellipse([a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]])?;
    Ok(Ellipse {
        center: (my + s * e.center.0, mx + s * e.center.1),
        a: e.a * s,
        b: e.b * s,
        theta: e.theta,
    })
}

/// Null vector of a rank-2 3x3 matrix from the largest cross product of its rows.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let rows = [m.row(0).transpose(), m.row(1).transpose(), m.row(2).transpose()];
    let cands = [rows[0].cross(&rows[1]), rows[0].cross(&rows[2]), rows[1].cross(&rows[2])];
    let best = cands
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))?;
    let n = best.norm();
    (n > 0.0 && n.is_finite()).then(|| best / n)
}

/// Geometric form of `A x^2 + B xy + C y^2 + D x + E y + F = 0` with
/// `x = col`, `y = row`.
fn conic_to_ellipse(p: [f64; 6]) -> Result<Ellipse, EllipseError> {
    let [a, b, c, d, e, f] = p;
    let det = 4.0 * a * c - b * b;
    if !(det > 0.0) {
        return Err(EllipseError::NonEllipseConic);
    }
    let x0 = (b * e - 2.0 * c * d) / det;
    let y0 = (b * d - 2.0 * a * e) / det;
    let f0 = f + 0.5 * (d * x0 + e * y0);
    let q = nalgebra::Matrix2::new(a, b / 2.0, b / 2.0, c);
    let eig = SymmetricEigen::new(q);
    let (l0, l1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let (r0, r1) = (-f0 / l0, -f0 / l1);
    if !(r0 > 0.0 && r1 > 0.0 && r0.is_finite() && r1.is_finite()) {
        return Err(EllipseError::NonEllipseConic);
    }
    // major axis belongs to the smaller eigenvalue
    let (major, semi_a, semi_b) = if r0 >= r1 {
        (eig.eigenvectors.column(0), r0.sqrt(), r1.sqrt())
    } else {
        (eig.eigenvectors.column(1), r1.sqrt(), r0.sqrt())
    };
    // angle in (x right, y down) is clockwise on screen
    let phi = major[1].atan2(major[0]);
    let theta = (-phi).rem_euclid(std::f64::consts::PI);
    Ok(Ellipse {
        center: (y0, x0),
        a: semi_a,
        b: semi_b,
        theta: if theta >= std::f64::consts::PI { 0.0 } else { theta },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseReconstruction {
    pub ellipse: Ellipse,
    /// The complete contour was used.
    pub fallback: bool,
    /// Both fits came out smaller than the segment; the larger was kept.
    pub fallback_exhausted: bool,
}

/// Free-contour fit with the complete-contour fallback.
pub fn reconstruct_ellipse(labels: &LabelMap, id: u32) -> Result<EllipseReconstruction, EllipseError> {
    let region = labels.region(id).ok_or(EllipseError::DegenerateSegment(id))?;
    let seg_area = region.pixels.len() as f64;
    let free = free_contour_points(labels, id)?;
    let free_fit = fit_ellipse(&boundary_points(labels, id, &free));
    if let Ok(e) = free_fit {
        if e.area() >= seg_area {
            return Ok(EllipseReconstruction {
                ellipse: e,
                fallback: false,
                fallback_exhausted: false,
            });
        }
    }
    let all = contour_points(labels, id)?;
    let full_fit = fit_ellipse(&boundary_points(labels, id, &all));
    match (free_fit, full_fit) {
        (_, Ok(e)) if e.area() >= seg_area => Ok(EllipseReconstruction {
            ellipse: e,
            fallback: true,
            fallback_exhausted: false,
        }),
        (Ok(a), Ok(b)) => Ok(EllipseReconstruction {
            ellipse: if a.area() >= b.area() { a } else { b },
            fallback: true,
            fallback_exhausted: true,
        }),
        (Ok(e), Err(_)) | (Err(_), Ok(e)) => Ok(EllipseReconstruction {
            ellipse: e,
            fallback: true,
            fallback_exhausted: true,
        }),
        (Err(_), Err(err)) => Err(err),
    }
}

/// One JSON line of ellipse output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseRecord {
    pub id: u32,
    pub center: [f64; 2],
    pub a_px: f64,
    pub b_px: f64,
    pub theta_rad: f64,
    pub fallback: bool,
    #[serde(default)]
    pub fallback_exhausted: bool,
}

impl EllipseRecord {
    pub fn new(id: u32, rec: &EllipseReconstruction) -> Self {
        let e = rec.ellipse;
        Self {
            id,
            center: [e.center.0, e.center.1],
            a_px: e.a,
            b_px: e.b,
            theta_rad: e.theta,
            fallback: rec.fallback,
            fallback_exhausted: rec.fallback_exhausted,
        }
    }

    pub fn ellipse(&self) -> Ellipse {
        Ellipse {
            center: (self.center[0], self.center[1]),
            a: self.a_px,
            b: self.b_px,
            theta: self.theta_rad,
        }
    }
}
