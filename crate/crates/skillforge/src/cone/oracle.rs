//! Brute-force reference classifier.
//!
//! Feasibility is evaluated only through [`screw_lhs`] on sampled axes: a
//! near-uniform sphere grid detects full-dimensional cones, great circles
//! orthogonal to each constraint detect planar cones, and pairwise
//! intersection lines detect one-dimensional cones. No rank or linear
//! programming code from the main classifier is reused.

use nalgebra::Vector3;

use super::{screw_lhs, ContactSet, DofProfile, Motion, MotionKind};
use crate::error::GeometryError;
use crate::scalar::Real;

const CIRCLE_SAMPLES: usize = 3600;
const SIGN_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleVerdict {
    Determinate(DofProfile),
    /// Only feasible directions within a hair of the boundary were found.
    Indeterminate,
}

/// Fibonacci lattice with `n` points on the unit sphere.
pub fn sphere_grid(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

struct Sampler {
    /// Constraint functionals as row vectors, rescaled to unit norm.
    rows: Vec<Vector3<f64>>,
}

impl Sampler {
    fn new<T: Real>(set: &ContactSet<T>) -> Result<Self, GeometryError> {
        let center = match set.kind {
            MotionKind::Translation => None,
            MotionKind::Rotation => Some(set.center.ok_or(GeometryError::MissingCenter)?),
        };
        let motion = |axis: Vector3<T>| match center {
            None => Motion::Translation { axis },
            Some(center) => Motion::Rotation { axis, center },
        };
        let mut rows = Vec::new();
        for c in &set.contacts {
            // Linear in the axis, so three evaluations recover the functional.
            let mut row = Vector3::zeros();
            for k in 0..3 {
                let mut e = Vector3::<T>::zeros();
                e[k] = T::one();
                row[k] = screw_lhs(c, &motion(e)).as_f64();
            }
            let len = row.norm();
            if len > SIGN_TOL {
                rows.push(row / len);
            }
        }
        Ok(Self { rows })
    }

    fn min_value(&self, d: &Vector3<f64>) -> f64 {
        self.rows.iter().map(|r| r.dot(d)).fold(f64::INFINITY, f64::min)
    }

    fn max_abs(&self, d: &Vector3<f64>) -> f64 {
        self.rows.iter().map(|r| r.dot(d).abs()).fold(0.0, f64::max)
    }

    fn feasible(&self, d: &Vector3<f64>) -> bool {
        self.min_value(d) >= -SIGN_TOL
    }

    fn circle(&self, normal: &Vector3<f64>) -> Vec<Vector3<f64>> {
        let a = normal.cross(&if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() }).normalize();
        let b = normal.cross(&a);
        (0..CIRCLE_SAMPLES)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / CIRCLE_SAMPLES as f64;
                a * t.cos() + b * t.sin()
            })
            .collect()
    }

    fn lines(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::new();
        for i in 0..self.rows.len() {
            for j in (i + 1)..self.rows.len() {
                let c = self.rows[i].cross(&self.rows[j]);
                let len = c.norm();
                if len > 1e-6 {
                    out.push(c / len);
                    out.push(-c / len);
                }
            }
        }
        out
    }
}

fn spans_plane(points: &[Vector3<f64>]) -> bool {
    let Some(first) = points.first() else { return false };
    points.iter().any(|p| first.cross(p).norm() > 1e-3)
}

/// Classifies the cone of `set` by sampling. `grid` is the number of
/// sphere-grid directions.
pub fn oracle_classify_sampled<T: Real>(
    set: &ContactSet<T>,
    grid: usize,
) -> Result<OracleVerdict, GeometryError> {
    let s = Sampler::new(set)?;
    if s.rows.is_empty() {
        return Ok(OracleVerdict::Determinate(DofProfile::new(3, 0, 0)));
    }

    let sphere = sphere_grid(grid);
    let best_margin = sphere.iter().map(|d| s.min_value(d)).fold(f64::NEG_INFINITY, f64::max);
    let mut span = if best_margin > SIGN_TOL { 3 } else { 0 };
    if span == 0 && best_margin > -SIGN_TOL {
        return Ok(OracleVerdict::Indeterminate);
    }

    let circles: Vec<Vec<Vector3<f64>>> = s.rows.iter().map(|r| s.circle(r)).collect();
    if span < 3 {
        // A facet of a thin full-dimensional cone also shows up on a circle;
        // nudging off the plane separates the two cases.
        'outer: for (row, circle) in s.rows.iter().zip(&circles) {
            for d in circle.iter().filter(|d| s.feasible(d)) {
                let probe = (d + row * 1e-6).normalize();
                if s.min_value(&probe) > SIGN_TOL * 1e-3 {
                    span = 3;
                    break 'outer;
                }
            }
        }
    }
    if span < 3 {
        let planar = circles.iter().any(|c| {
            let feasible: Vec<Vector3<f64>> = c.iter().copied().filter(|d| s.feasible(d)).collect();
            spans_plane(&feasible)
        });
        if planar {
            span = 2;
        } else if s.lines().iter().any(|d| s.feasible(d)) {
            span = 1;
        }
    }

    let lineality = if circles.iter().any(|c| c.iter().all(|d| s.max_abs(d) <= SIGN_TOL)) {
        2
    } else if s.lines().iter().any(|d| s.max_abs(d) <= SIGN_TOL) {
        1
    } else {
        0
    };

    if lineality > span {
        return Ok(OracleVerdict::Indeterminate);
    }
    Ok(OracleVerdict::Determinate(DofProfile::new(
        lineality,
        span - lineality,
        3 - span,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::ContactPoint;

    fn set(normals: &[[f64; 3]]) -> ContactSet<f64> {
        ContactSet::translation(
            normals
                .iter()
                .map(|n| ContactPoint::normalized(Vector3::zeros(), Vector3::from(*n)).unwrap())
                .collect(),
        )
    }

    #[test]
    fn grid_is_unit_and_balanced() {
        let g = sphere_grid(2562);
        assert!(g.iter().all(|d| (d.norm() - 1.0).abs() < 1e-12));
        let mean: Vector3<f64> = g.iter().sum::<Vector3<f64>>() / g.len() as f64;
        assert!(mean.norm() < 1e-3);
    }

    #[test]
    fn canonical_rows() {
        let cases: &[(&[[f64; 3]], (usize, usize, usize))] = &[
            (&[[0., 0., 1.]], (2, 1, 0)),
            (&[[0., 0., 1.], [0., 0., -1.]], (2, 0, 1)),
            (&[[0., 0., 1.], [1., 0., 0.]], (1, 2, 0)),
            (&[[0., 0., 1.], [0., 0., -1.], [1., 0., 0.]], (1, 1, 1)),
            (&[[1., 0., 0.], [-1., 0., 0.], [0., 1., 0.], [0., -1., 0.]], (1, 0, 2)),
            (&[[1., 0., 0.], [0., 1., 0.], [0., 0., 1.]], (0, 3, 0)),
            (&[[0., 0., 1.], [0., 0., -1.], [1., 0., 0.], [0., 1., 0.]], (0, 2, 1)),
            (&[[1., 0., 0.], [-1., 0., 0.], [0., 1., 0.], [0., -1., 0.], [0., 0., 1.]], (0, 1, 2)),
            (
                &[[1., 0., 0.], [-1., 0., 0.], [0., 1., 0.], [0., -1., 0.], [0., 0., 1.], [0., 0., -1.]],
                (0, 0, 3),
            ),
        ];
        for (normals, (m, d, c)) in cases {
            assert_eq!(
                oracle_classify_sampled(&set(normals), 2562).unwrap(),
                OracleVerdict::Determinate(DofProfile::new(*m, *d, *c)),
                "{normals:?}"
            );
        }
    }

    #[test]
    fn thin_wedge_is_full_dimensional() {
        let a = 2.5f64.to_radians();
        let n = set(&[[a.sin(), 0.0, a.cos()], [a.sin(), 0.0, -a.cos()]]);
        assert_eq!(
            oracle_classify_sampled(&n, 2562).unwrap(),
            OracleVerdict::Determinate(DofProfile::new(1, 2, 0))
        );
    }
}
