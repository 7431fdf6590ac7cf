use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parametric surface of a roof primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Points `p` with `normal · p = offset`.
    Plane { normal: Vector3<f64>, offset: f64 },
    Sphere { center: Vector3<f64>, radius: f64 },
    Cylinder {
        axis_point: Vector3<f64>,
        axis_dir: Vector3<f64>,
        radius: f64,
    },
}

/// A fitted surface together with the mean color of the points it was
/// estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub seed_color: Vector3<f64>,
}

/// Flips `v` so that z >= 0, breaking z == 0 ties by making the first
/// nonzero component positive. Returns the sign applied.
pub fn canonical_sign(v: &Vector3<f64>) -> f64 {
    if v.z > 0.0 {
        1.0
    } else if v.z < 0.0 {
        -1.0
    } else if v.x != 0.0 {
        v.x.signum()
    } else if v.y != 0.0 {
        v.y.signum()
    } else {
        1.0
    }
}

impl Primitive {
    pub fn plane(normal: Vector3<f64>, offset: f64, seed_color: Vector3<f64>) -> Result<Self> {
        let len = normal.norm();
        if !(len > 1e-12) || !offset.is_finite() {
            return Err(Error::Degenerate("plane normal has zero length".into()));
        }
        let n = normal / len;
        let d = offset / len;
        let s = canonical_sign(&n);
        Ok(Self {
            shape: Shape::Plane {
                normal: n * s,
                offset: d * s,
            },
            seed_color,
        })
    }

    /// Plane through `point` with the given normal.
    pub fn plane_through(
        point: &Vector3<f64>,
        normal: Vector3<f64>,
        seed_color: Vector3<f64>,
    ) -> Result<Self> {
        let n = normal.normalize();
        Self::plane(n, n.dot(point), seed_color)
    }

    pub fn sphere(center: Vector3<f64>, radius: f64, seed_color: Vector3<f64>) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Degenerate(format!("sphere radius {radius}")));
        }
        Ok(Self {
            shape: Shape::Sphere { center, radius },
            seed_color,
        })
    }

    pub fn cylinder(
        axis_point: Vector3<f64>,
        axis_dir: Vector3<f64>,
        radius: f64,
        seed_color: Vector3<f64>,
    ) -> Result<Self> {
        let len = axis_dir.norm();
        if !(len > 1e-12) {
            return Err(Error::Degenerate("cylinder axis has zero length".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Degenerate(format!("cylinder radius {radius}")));
        }
        let u = axis_dir / len;
        let u = u * canonical_sign(&u);
        // store the axis point closest to the origin
        let a = axis_point - u * u.dot(&axis_point);
        Ok(Self {
            shape: Shape::Cylinder {
                axis_point: a,
                axis_dir: u,
                radius,
            },
            seed_color,
        })
    }

    pub fn is_plane(&self) -> bool {
        matches!(self.shape, Shape::Plane { .. })
    }

    /// Signed distance: positive outside (above for planes).
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match self.shape {
            Shape::Plane { normal, offset } => normal.dot(p) - offset,
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
            Shape::Cylinder {
                axis_point,
                axis_dir,
                radius,
            } => {
                let w = p - axis_point;
                (w - axis_dir * w.dot(&axis_dir)).norm() - radius
            }
        }
    }

    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Outward surface normal at the surface point closest to `p`.
    pub fn normal_at(&self, p: &Vector3<f64>) -> Vector3<f64> {
        match self.shape {
            Shape::Plane { normal, .. } => normal,
            Shape::Sphere { center, .. } => {
                let w = p - center;
                let len = w.norm();
                if len > 1e-12 {
                    w / len
                } else {
                    Vector3::z()
                }
            }
            Shape::Cylinder {
                axis_point,
                axis_dir,
                ..
            } => {
                let w = p - axis_point;
                let radial = w - axis_dir * w.dot(&axis_dir);
                let len = radial.norm();
                if len > 1e-12 {
                    radial / len
                } else {
                    let up = Vector3::z() - axis_dir * axis_dir.z;
                    if up.norm() > 1e-12 {
                        up.normalize()
                    } else {
                        Vector3::x()
                    }
                }
            }
        }
    }

    /// Height of the upper sheet of the surface above `(x, y)`, if the
    /// vertical line through it meets the surface.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        match self.shape {
            Shape::Plane { normal, offset } => {
                if normal.z.abs() < 1e-9 {
                    None
                } else {
                    Some((offset - normal.x * x - normal.y * y) / normal.z)
                }
            }
            Shape::Sphere { center, radius } => {
                let dx = x - center.x;
                let dy = y - center.y;
                let h2 = radius * radius - dx * dx - dy * dy;
                (h2 >= 0.0).then(|| center.z + h2.sqrt())
            }
            Shape::Cylinder {
                axis_point,
                axis_dir,
                radius,
            } => {
                let u = axis_dir;
                let w0 = Vector3::new(x - axis_point.x, y - axis_point.y, -axis_point.z);
                let a = 1.0 - u.z * u.z;
                if a < 1e-9 {
                    return None;
                }
                let wu = w0.dot(&u);
                let b = 2.0 * (w0.z - u.z * wu);
                let c = w0.norm_squared() - wu * wu - radius * radius;
                let disc = b * b - 4.0 * a * c;
                (disc >= 0.0).then(|| (-b + disc.sqrt()) / (2.0 * a))
            }
        }
    }

    /// Height above `(x, y)`, falling back to the surface's highest point
    /// over the nearest covered location for curved shapes.
    pub fn height_at_clamped(&self, x: f64, y: f64) -> f64 {
        if let Some(z) = self.height_at(x, y) {
            return z;
        }
        match self.shape {
            Shape::Plane { offset, .. } => offset,
            Shape::Sphere { center, .. } => center.z,
            Shape::Cylinder {
                axis_point,
                axis_dir,
                ..
            } => {
                let w = Vector3::new(x, y, 0.0) - axis_point;
                (axis_point + axis_dir * w.dot(&axis_dir)).z
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_is_canonicalized_upward() {
        let p = Primitive::plane(Vector3::new(0.0, 0.0, -2.0), -6.0, Vector3::zeros()).unwrap();
        match p.shape {
            Shape::Plane { normal, offset } => {
                assert_eq!(normal, Vector3::new(0.0, 0.0, 1.0));
                assert!((offset - 3.0).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
        let v = Primitive::plane(Vector3::new(-1.0, 0.0, 0.0), 2.0, Vector3::zeros()).unwrap();
        match v.shape {
            Shape::Plane { normal, offset } => {
                assert_eq!(normal, Vector3::new(1.0, 0.0, 0.0));
                assert_eq!(offset, -2.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn cylinder_height_matches_surface() {
        let c = Primitive::cylinder(
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(1.0, 1.0, 0.0),
            5.0,
            Vector3::zeros(),
        )
        .unwrap();
        let z = c.height_at(3.0, -1.0).unwrap();
        assert!(c.distance(&Vector3::new(3.0, -1.0, z)) < 1e-12);
        assert!(c.height_at(30.0, -30.0).is_none());
    }

    #[test]
    fn degenerate_radius_rejected() {
        assert!(Primitive::sphere(Vector3::zeros(), 0.0, Vector3::zeros()).is_err());
        assert!(Primitive::cylinder(Vector3::zeros(), Vector3::x(), -1.0, Vector3::zeros()).is_err());
    }
}
