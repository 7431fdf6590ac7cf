use std::fmt;
use std::sync::OnceLock;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::GridIndex;

/// A photogrammetric sample: position in meters plus 8-bit RGB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, r: u8, g: u8, b: u8) -> Self {
        Self { x, y, z, r, g, b }
    }

    /// A point with neutral grey color.
    pub fn xyz(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, 128, 128, 128)
    }

    pub fn pos(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn color(&self) -> Vector3<f64> {
        Vector3::new(self.r as f64, self.g as f64, self.b as f64)
    }

    pub fn with_pos(&self, p: Vector3<f64>) -> Self {
        Self {
            x: p.x,
            y: p.y,
            z: p.z,
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Per-point roof shape class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShapeLabel {
    Flat,
    Sloped,
    Cylindrical,
    Spherical,
}

impl ShapeLabel {
    pub const ALL: [ShapeLabel; 4] = [
        ShapeLabel::Flat,
        ShapeLabel::Sloped,
        ShapeLabel::Cylindrical,
        ShapeLabel::Spherical,
    ];

    pub fn code(self) -> u8 {
        match self {
            ShapeLabel::Flat => 0,
            ShapeLabel::Sloped => 1,
            ShapeLabel::Cylindrical => 2,
            ShapeLabel::Spherical => 3,
        }
    }

    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            0 => Ok(ShapeLabel::Flat),
            1 => Ok(ShapeLabel::Sloped),
            2 => Ok(ShapeLabel::Cylindrical),
            3 => Ok(ShapeLabel::Spherical),
            other => Err(Error::UnknownLabel(other)),
        }
    }

    pub fn is_planar(self) -> bool {
        matches!(self, ShapeLabel::Flat | ShapeLabel::Sloped)
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeLabel::Flat => "flat",
            ShapeLabel::Sloped => "sloped",
            ShapeLabel::Cylindrical => "cylindrical",
            ShapeLabel::Spherical => "spherical",
        }
    }
}

impl fmt::Display for ShapeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An unordered set of points with optional per-point attributes.
///
/// Normals are `None` where the neighborhood was degenerate. The spatial
/// index is built on first use and cached.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    points: Vec<Point>,
    normals: Option<Vec<Option<Vector3<f64>>>>,
    labels: Option<Vec<ShapeLabel>>,
    synthetic: Option<Vec<bool>>,
    index: OnceLock<GridIndex>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self {
            points,
            ..Default::default()
        }
    }

    pub fn try_new(points: Vec<Point>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "point {i} has non-finite coordinates"
            )));
        }
        Ok(Self::new(points))
    }

    pub fn with_normals(mut self, normals: Vec<Option<Vector3<f64>>>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                expected: self.points.len(),
                actual: normals.len(),
            });
        }
        for (i, n) in normals.iter().enumerate() {
            if let Some(n) = n {
                if (n.norm() - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidArgument(format!(
                        "normal {i} is not unit length"
                    )));
                }
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<ShapeLabel>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                expected: self.points.len(),
                actual: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_synthetic(mut self, synthetic: Vec<bool>) -> Result<Self> {
        if synthetic.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                expected: self.points.len(),
                actual: synthetic.len(),
            });
        }
        self.synthetic = Some(synthetic);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn normals(&self) -> Option<&[Option<Vector3<f64>>]> {
        self.normals.as_deref()
    }

    pub fn normal(&self, i: usize) -> Option<Vector3<f64>> {
        self.normals.as_ref().and_then(|n| n[i])
    }

    pub fn labels(&self) -> Option<&[ShapeLabel]> {
        self.labels.as_deref()
    }

    pub fn synthetic(&self) -> Option<&[bool]> {
        self.synthetic.as_deref()
    }

    pub fn is_synthetic(&self, i: usize) -> bool {
        self.synthetic.as_ref().is_some_and(|s| s[i])
    }

    pub fn index(&self) -> &GridIndex {
        self.index.get_or_init(|| GridIndex::build(&self.points))
    }

    pub fn positions(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.points.iter().map(Point::pos)
    }

    /// Sub-cloud over `indices`, carrying every attribute along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            synthetic: self
                .synthetic
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
            index: OnceLock::new(),
        }
    }

    /// Replaces positions while keeping colors and attributes. Normals are
    /// dropped since they no longer describe the moved surface.
    pub fn with_points(&self, points: Vec<Point>) -> Result<PointCloud> {
        if points.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                expected: self.points.len(),
                actual: points.len(),
            });
        }
        Ok(PointCloud {
            points,
            normals: None,
            labels: self.labels.clone(),
            synthetic: self.synthetic.clone(),
            index: OnceLock::new(),
        })
    }

    /// Concatenates clouds. An attribute survives only if every part has it,
    /// except the synthetic flag which defaults to `false`.
    pub fn concat(parts: &[PointCloud]) -> PointCloud {
        let points: Vec<Point> = parts.iter().flat_map(|c| c.points.iter().copied()).collect();
        let normals = if parts.iter().all(|c| c.normals.is_some()) && !parts.is_empty() {
            Some(
                parts
                    .iter()
                    .flat_map(|c| c.normals.as_ref().unwrap().iter().copied())
                    .collect(),
            )
        } else {
            None
        };
        let labels = if parts.iter().all(|c| c.labels.is_some()) && !parts.is_empty() {
            Some(
                parts
                    .iter()
                    .flat_map(|c| c.labels.as_ref().unwrap().iter().copied())
                    .collect(),
            )
        } else {
            None
        };
        let synthetic = if parts.iter().any(|c| c.synthetic.is_some()) {
            Some(
                parts
                    .iter()
                    .flat_map(|c| match &c.synthetic {
                        Some(s) => s.clone(),
                        None => vec![false; c.len()],
                    })
                    .collect(),
            )
        } else {
            None
        };
        PointCloud {
            points,
            normals,
            labels,
            synthetic,
            index: OnceLock::new(),
        }
    }

    /// Axis-aligned (x, y) bounds as `[min_x, min_y, max_x, max_y]`.
    pub fn bounds_2d(&self) -> Option<[f64; 4]> {
        let first = self.points.first()?;
        let mut b = [first.x, first.y, first.x, first.y];
        for p in &self.points {
            b[0] = b[0].min(p.x);
            b[1] = b[1].min(p.y);
            b[2] = b[2].max(p.x);
            b[3] = b[3].max(p.y);
        }
        Some(b)
    }

    pub fn label_histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        if let Some(labels) = &self.labels {
            for l in labels {
                h[l.code() as usize] += 1;
            }
        }
        h
    }
}
