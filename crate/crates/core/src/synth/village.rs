//! A small synthetic village with known footprints and roof surfaces, used
//! for end-to-end runs of the pipeline.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::point::{Point, PointCloud, ShapeLabel};
use crate::raster::RasterGrid;
use crate::ransac::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VillageConfig {
    pub buildings: usize,
    /// Vertical noise, meters.
    pub noise: f64,
    /// Share of each roof removed as a void.
    pub hole_fraction: f64,
    /// Points per m^2.
    pub density: f64,
    /// Cell size of the masks and DSM, meters.
    pub resolution: f64,
    pub seed: u64,
}

impl Default for VillageConfig {
    fn default() -> Self {
        Self {
            buildings: 10,
            noise: 0.1,
            hole_fraction: 0.05,
            density: 6.0,
            resolution: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoofKind {
    Flat,
    Gable,
    Hip,
    Barrel,
    Dome,
}

impl RoofKind {
    pub const CYCLE: [RoofKind; 5] = [
        RoofKind::Flat,
        RoofKind::Gable,
        RoofKind::Hip,
        RoofKind::Barrel,
        RoofKind::Dome,
    ];
}

/// Ground geometry of one generated building. Rectangular footprints are
/// axis-aligned with the long side along x; domes sit on a disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildingTruth {
    pub kind: RoofKind,
    pub center: [f64; 2],
    /// Half extents along x and y; for domes both equal the disk radius.
    pub half: [f64; 2],
    pub eave: f64,
    /// Roof pitch for gables and hips, radians.
    pub pitch: f64,
    /// Curvature radius of barrels and domes.
    pub radius: f64,
}

impl BuildingTruth {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        match self.kind {
            RoofKind::Dome => dx.hypot(dy) <= self.half[0],
            _ => dx.abs() <= self.half[0] && dy.abs() <= self.half[1],
        }
    }

    /// Roof height above (x, y), or `None` off the footprint.
    pub fn roof_height(&self, x: f64, y: f64) -> Option<f64> {
        if !self.contains(x, y) {
            return None;
        }
        let dx = (x - self.center[0]).abs();
        let dy = (y - self.center[1]).abs();
        let [a, b] = self.half;
        let t = self.pitch.tan();
        Some(match self.kind {
            RoofKind::Flat => self.eave,
            RoofKind::Gable => self.eave + (b - dy) * t,
            RoofKind::Hip => self.eave + (a - dx).min(b - dy) * t,
            RoofKind::Barrel => {
                let r = self.radius;
                self.eave - (r * r - b * b).sqrt() + (r * r - dy * dy).sqrt()
            }
            RoofKind::Dome => {
                let r = self.radius;
                let rho2 = dx * dx + dy * dy;
                self.eave - (r * r - a * a).sqrt() + (r * r - rho2).sqrt()
            }
        })
    }

    pub fn label(&self) -> ShapeLabel {
        match self.kind {
            RoofKind::Flat => ShapeLabel::Flat,
            RoofKind::Gable | RoofKind::Hip => ShapeLabel::Sloped,
            RoofKind::Barrel => ShapeLabel::Cylindrical,
            RoofKind::Dome => ShapeLabel::Spherical,
        }
    }

    pub fn area(&self) -> f64 {
        match self.kind {
            RoofKind::Dome => std::f64::consts::PI * self.half[0] * self.half[0],
            _ => 4.0 * self.half[0] * self.half[1],
        }
    }
}

/// Gently tilted terrain.
pub fn ground_height(x: f64, y: f64) -> f64 {
    0.01 * x + 0.005 * y
}

#[derive(Debug, Clone)]
pub struct Village {
    /// Ground and roof points, unlabeled.
    pub cloud: PointCloud,
    /// True shape of each roof point, `None` for ground.
    pub roof_labels: Vec<Option<ShapeLabel>>,
    pub buildings: Vec<BuildingTruth>,
    /// Building mask for the pipeline: the footprint grown by one cell, as
    /// a roughly drawn mask would be.
    pub mask: RasterGrid,
    pub truth_mask: RasterGrid,
    pub truth_dsm: RasterGrid,
}

impl Village {
    /// Roof points of each flat building and of each gable or hip building,
    /// for use as training source roofs.
    pub fn source_roofs(&self) -> (Vec<PointCloud>, Vec<PointCloud>) {
        let (mut flat, mut sloped) = (Vec::new(), Vec::new());
        for b in &self.buildings {
            let idx: Vec<usize> = (0..self.cloud.len())
                .filter(|&i| {
                    let p = self.cloud.point(i);
                    self.roof_labels[i].is_some() && b.contains(p.x, p.y)
                })
                .collect();
            match b.kind {
                RoofKind::Flat => flat.push(self.cloud.select(&idx)),
                RoofKind::Gable | RoofKind::Hip => sloped.push(self.cloud.select(&idx)),
                RoofKind::Barrel | RoofKind::Dome => {}
            }
        }
        (flat, sloped)
    }
}

const PITCH_X: f64 = 30.0;
const PITCH_Y: f64 = 28.0;
const MARGIN: f64 = 12.0;

pub fn generate_village(cfg: &VillageConfig) -> Result<Village> {
    if cfg.buildings == 0 || !(cfg.density > 0.0) || !(cfg.resolution > 0.0) || cfg.noise < 0.0 {
        return Err(Error::InvalidArgument("village needs buildings, density and resolution".into()));
    }
    if !(0.0..0.5).contains(&cfg.hole_fraction) {
        return Err(Error::InvalidArgument("hole fraction must be in [0, 0.5)".into()));
    }
    let mut rng = stream_rng(cfg.seed, &[0x7111]);
    let cols = cfg.buildings.div_ceil(2).max(1);
    let rows = if cfg.buildings > 1 { 2 } else { 1 };
    let mut buildings = Vec::with_capacity(cfg.buildings);
    for k in 0..cfg.buildings {
        let kind = RoofKind::CYCLE[k % RoofKind::CYCLE.len()];
        let (c, r) = (k % cols, k / cols);
        let center = [
            MARGIN + PITCH_X * (c as f64 + 0.5) + rng.gen_range(-1.5..1.5),
            MARGIN + PITCH_Y * (r as f64 + 0.5) + rng.gen_range(-1.5..1.5),
        ];
        let half = if kind == RoofKind::Dome {
            let r = rng.gen_range(6.5..8.0);
            [r, r]
        } else {
            [rng.gen_range(7.0..10.0), rng.gen_range(5.5..7.5)]
        };
        let eave = rng.gen_range(5.0..9.0) + ground_height(center[0], center[1]);
        let pitch = rng.gen_range(22f64..35.0).to_radians();
        let curvature = match kind {
            RoofKind::Barrel => half[1] * rng.gen_range(1.1..1.5),
            RoofKind::Dome => half[0] * rng.gen_range(1.1..1.4),
            _ => 0.0,
        };
        buildings.push(BuildingTruth {
            kind,
            center,
            half,
            eave,
            pitch,
            radius: curvature,
        });
    }
    let width = 2.0 * MARGIN + PITCH_X * cols as f64;
    let height = 2.0 * MARGIN + PITCH_Y * rows as f64;

    let noise = Normal::new(0.0, cfg.noise.max(1e-12)).unwrap();
    let tint = Normal::new(0.0, 8.0).unwrap();
    let jitter = |rng: &mut rand_chacha::ChaCha8Rng, base: [f64; 3]| -> [u8; 3] {
        base.map(|c| (c + tint.sample(rng)).round().clamp(0.0, 255.0) as u8)
    };
    let mut points = Vec::new();
    let mut labels = Vec::new();

    let n_ground = (width * height * cfg.density).round() as usize;
    for _ in 0..n_ground {
        let x = rng.gen_range(0.0..width);
        let y = rng.gen_range(0.0..height);
        if buildings.iter().any(|b| b.contains(x, y)) {
            continue;
        }
        let dz = if cfg.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        let z = ground_height(x, y) + dz;
        let [r, g, b] = jitter(&mut rng, [96.0, 118.0, 84.0]);
        points.push(Point::new(x, y, z, r, g, b));
        labels.push(None);
    }
    for b in &buildings {
        let base = [
            rng.gen_range(110.0..200.0),
            rng.gen_range(60.0..140.0),
            rng.gen_range(50.0..120.0),
        ];
        // one interior void covering the configured share of the roof
        let void_r = (cfg.hole_fraction * b.area() / std::f64::consts::PI).sqrt();
        let reach = [
            (b.half[0] - void_r - 1.0).max(0.0) * 0.7,
            (b.half[1] - void_r - 1.0).max(0.0) * 0.7,
        ];
        let void_c = [
            b.center[0] + rng.gen_range(-1.0..=1.0) * reach[0],
            b.center[1] + rng.gen_range(-1.0..=1.0) * reach[1],
        ];
        let n = (4.0 * b.half[0] * b.half[1] * cfg.density).round() as usize;
        for _ in 0..n {
            let x = b.center[0] + rng.gen_range(-b.half[0]..b.half[0]);
            let y = b.center[1] + rng.gen_range(-b.half[1]..b.half[1]);
            let Some(z) = b.roof_height(x, y) else { continue };
            let dz = if cfg.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let col = jitter(&mut rng, base);
            if (x - void_c[0]).hypot(y - void_c[1]) < void_r {
                continue;
            }
            points.push(Point::new(x, y, z + dz, col[0], col[1], col[2]));
            labels.push(Some(b.label()));
        }
    }

    let res = cfg.resolution;
    let w = (width / res).ceil() as usize;
    let h = (height / res).ceil() as usize;
    let mut truth_mask = RasterGrid::new(0.0, 0.0, res, w, h, 0.0)?;
    let mut truth_dsm = RasterGrid::new(0.0, 0.0, res, w, h, 0.0)?;
    for row in 0..h {
        for col in 0..w {
            let (x, y) = truth_mask.center(col, row);
            let roof = buildings
                .iter()
                .filter_map(|b| b.roof_height(x, y))
                .fold(None, |m: Option<f64>, z| Some(m.map_or(z, |m| m.max(z))));
            truth_mask.set(col, row, roof.is_some() as u8 as f64);
            truth_dsm.set(col, row, roof.unwrap_or_else(|| ground_height(x, y)));
        }
    }
    let mut mask = truth_mask.clone();
    for row in 0..h {
        for col in 0..w {
            if truth_mask.get(col, row) < 0.5 {
                continue;
            }
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (c2, r2) = (col as i64 + dc, row as i64 + dr);
                    if c2 >= 0 && r2 >= 0 && (c2 as usize) < w && (r2 as usize) < h {
                        mask.set(c2 as usize, r2 as usize, 1.0);
                    }
                }
            }
        }
    }
    Ok(Village {
        cloud: PointCloud::try_new(points)?,
        roof_labels: labels,
        buildings,
        mask,
        truth_mask,
        truth_dsm,
    })
}
