//! Roof boundaries, neighbour intersection, facades and mesh output.

mod boundary;
mod mesh;
mod topology;

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use boundary::{alpha_shape, offset_ring, regularize, trace_boundary, trace_boundary_with, SNAP_ANGLE_DEG};
pub use mesh::{densify_ring, triangle_deviation, triangulate_roof, Mesh};
pub use topology::{crease_between, intersect_adjacent, Crease};

use crate::error::{Error, Result};
use crate::geom::{ensure_ccw, is_simple, Vec2};
use crate::point::{PointCloud, ShapeLabel};
use crate::primitive::{Primitive, Shape};
use crate::ransac::FitResult;
use crate::raster::RasterGrid;

/// Planes steeper than this (|n_z| below it) are walls, not roofs.
const MIN_ROOF_NZ: f64 = 0.26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoofSegment {
    pub primitive: Primitive,
    /// Simple CCW ring in the ground plane; heights come from `primitive`.
    pub boundary: Vec<Vec2>,
    pub label: ShapeLabel,
    /// Inlier positions the segment was traced from.
    #[serde(skip)]
    pub support: Vec<Vector3<f64>>,
    /// Per boundary edge `k -> k+1`: lies on a crease with a neighbour and
    /// gets no facade.
    pub shared: Vec<bool>,
    /// Coplanar neighbours that touch this segment.
    #[serde(default)]
    pub merge_with: Vec<usize>,
}

impl RoofSegment {
    pub fn new(primitive: Primitive, mut boundary: Vec<Vec2>, label: ShapeLabel, support: Vec<Vector3<f64>>) -> Result<Self> {
        if boundary.len() < 3 || !is_simple(&boundary) {
            return Err(Error::Degenerate("roof boundary must be a simple ring".into()));
        }
        ensure_ccw(&mut boundary);
        let m = boundary.len();
        Ok(Self {
            primitive,
            boundary,
            label,
            support,
            shared: vec![false; m],
            merge_with: Vec::new(),
        })
    }

    pub fn height(&self, p: &Vec2) -> f64 {
        self.primitive.height_at_clamped(p.x, p.y)
    }
}

/// Vertical wall below one roof edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Facade {
    pub top: [Vector3<f64>; 2],
    pub bottom: [Vector3<f64>; 2],
}

impl Facade {
    pub fn height(&self) -> f64 {
        0.5 * (self.top[0].z + self.top[1].z) - self.bottom[0].z
    }
}

/// Serialized without the mesh, which is written separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingModel {
    pub roofs: Vec<RoofSegment>,
    pub facades: Vec<Facade>,
    pub ground_height: f64,
    #[serde(skip)]
    pub mesh: Mesh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Alpha-shape radius; `None` means twice [`point_spacing`].
    pub alpha: Option<f64>,
    /// Outward shift of traced rings; `None` means half of
    /// [`point_spacing`], the typical gap between the outermost points and
    /// the true edge.
    pub boundary_offset: Option<f64>,
    pub adjacency_gap: f64,
    /// Boundary vertices this close to a crease are moved onto it.
    pub snap_distance: f64,
    pub max_chord_deviation: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            boundary_offset: None,
            adjacency_gap: 1.0,
            snap_distance: 1.5,
            max_chord_deviation: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(Error::InvalidArgument("alpha must be positive".into()));
            }
        }
        if self.boundary_offset.is_some_and(|d| !d.is_finite()) {
            return Err(Error::InvalidArgument("boundary offset must be finite".into()));
        }
        if !(self.adjacency_gap >= 0.0) || !(self.snap_distance >= 0.0) {
            return Err(Error::InvalidArgument("adjacency gap and snap distance must be >= 0".into()));
        }
        if !(self.max_chord_deviation > 0.0) {
            return Err(Error::InvalidArgument("chord deviation must be positive".into()));
        }
        Ok(())
    }
}

/// Shape class implied by a fitted primitive.
pub fn label_of(prim: &Primitive) -> ShapeLabel {
    match prim.shape {
        Shape::Plane { normal, .. } if normal.z.abs() > 10f64.to_radians().cos() => ShapeLabel::Flat,
        Shape::Plane { .. } => ShapeLabel::Sloped,
        Shape::Cylinder { .. } => ShapeLabel::Cylindrical,
        Shape::Sphere { .. } => ShapeLabel::Spherical,
    }
}

/// Builds facades down to one ground height per building and a closed
/// triangle mesh of roofs, facades and ground. Curved roofs are refined
/// until every triangle is within `max_chord_deviation` of the surface.
pub fn assemble(roofs: Vec<RoofSegment>, dtm: &RasterGrid, max_chord_deviation: f64) -> Result<BuildingModel> {
    if roofs.is_empty() {
        return Err(Error::InvalidArgument("no roof segments to assemble".into()));
    }
    let mut roofs = roofs;
    for r in &mut roofs {
        let (dense, origin) = densify_ring(&r.primitive, &r.boundary, max_chord_deviation);
        r.shared = origin.iter().map(|&k| r.shared[k]).collect();
        r.boundary = dense;
    }

    let mut samples = Vec::new();
    for r in &roofs {
        let m = r.boundary.len();
        for k in 0..m {
            let (a, b) = (r.boundary[k], r.boundary[(k + 1) % m]);
            if !dtm.contains(a.x, a.y) {
                return Err(Error::OutOfExtent(format!("roof vertex ({}, {}) outside the DTM", a.x, a.y)));
            }
            if !r.shared[k] {
                let mid = (a + b) * 0.5;
                let z = dtm
                    .sample_clamped(mid.x, mid.y)
                    .ok_or_else(|| Error::OutOfExtent("DTM has no data under the footprint".into()))?;
                samples.push(z);
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::Degenerate("building has no exterior edges".into()));
    }
    let ground = samples.iter().sum::<f64>() / samples.len() as f64;

    let mut mesh = Mesh::new();
    let mut facades = Vec::new();
    for r in &roofs {
        let tops: Vec<Vector3<f64>> = r.boundary.iter().map(|p| Vector3::new(p.x, p.y, r.height(p))).collect();
        if let Some(low) = tops.iter().find(|t| !(t.z > ground)) {
            return Err(Error::Degenerate(format!(
                "roof at ({}, {}) is not above the ground ({} <= {ground})",
                low.x, low.y, low.z
            )));
        }
        for t in triangulate_roof(&r.primitive, &r.boundary, max_chord_deviation)? {
            mesh.triangle(t[0], t[1], t[2]);
        }
        let m = tops.len();
        for k in 0..m {
            if r.shared[k] {
                continue;
            }
            let (at, bt) = (tops[k], tops[(k + 1) % m]);
            let ab = Vector3::new(at.x, at.y, ground);
            let bb = Vector3::new(bt.x, bt.y, ground);
            mesh.triangle(ab, bb, bt);
            mesh.triangle(ab, bt, at);
            facades.push(Facade {
                top: [at, bt],
                bottom: [ab, bb],
            });
        }
        let floor = Primitive::plane(Vector3::z(), ground, Vector3::zeros())?;
        for t in triangulate_roof(&floor, &r.boundary, max_chord_deviation)? {
            mesh.triangle(t[0], t[2], t[1]);
        }
    }
    Ok(BuildingModel {
        roofs,
        facades,
        ground_height: ground,
        mesh,
    })
}

/// Square root of the ground area per point, the area taken as the cells
/// of a grid four nearest-neighbour spacings wide that hold any point.
pub fn point_spacing(cloud: &PointCloud) -> f64 {
    let cell = 4.0 * cloud.index().mean_spacing();
    if cloud.is_empty() || !(cell > 0.0) {
        return 0.0;
    }
    let occupied: std::collections::HashSet<(i64, i64)> = cloud
        .points()
        .iter()
        .map(|p| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64))
        .collect();
    (occupied.len() as f64 * cell * cell / cloud.len() as f64).sqrt()
}

/// Traces, intersects and assembles the roofs of one building cluster from
/// its fitted primitives. Near-vertical planes and fits whose boundary
/// cannot be traced are skipped.
pub fn reconstruct_building(
    cluster: &PointCloud,
    fits: &[FitResult],
    dtm: &RasterGrid,
    cfg: &ModelConfig,
) -> Result<BuildingModel> {
    cfg.validate()?;
    let spacing = point_spacing(cluster);
    let alpha = cfg.alpha.unwrap_or(2.0 * spacing);
    let offset = cfg.boundary_offset.unwrap_or(0.5 * spacing);
    let mut roofs = Vec::new();
    for fit in fits {
        if let Shape::Plane { normal, .. } = fit.primitive.shape {
            if normal.z.abs() < MIN_ROOF_NZ {
                continue;
            }
        }
        let support: Vec<Vector3<f64>> = fit.inliers.iter().map(|&i| cluster.point(i).pos()).collect();
        let flat: Vec<Vec2> = support.iter().map(|p| Vec2::new(p.x, p.y)).collect();
        let label = label_of(&fit.primitive);
        let regularize = label != ShapeLabel::Spherical;
        let Ok(ring) = trace_boundary_with(&flat, alpha, regularize) else {
            continue;
        };
        let ring = offset_ring(&ring, offset);
        if let Ok(seg) = RoofSegment::new(fit.primitive, ring, label, support) {
            roofs.push(seg);
        }
    }
    intersect_adjacent(&mut roofs, cfg.adjacency_gap, cfg.snap_distance);
    assemble(roofs, dtm, cfg.max_chord_deviation)
}

/// Writes the model's triangle mesh.
pub fn export_mesh(model: &BuildingModel, path: impl AsRef<Path>) -> Result<()> {
    model.mesh.write(path)
}

pub fn import_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    Mesh::read(path)
}
