//! The computations behind the page, in plain Rust so they run natively too.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rooffit::cluster::BuildingCluster;
use rooffit::ransac::{hierarchical_segment, iterative_planes, point_weight, FitResult, RansacConfig};
use rooffit::synth::{bend, crop_flat_region, BendSpec};
use rooffit::{Point, PointCloud, Primitive, Result};
use serde::Serialize;

/// Cross-section of a flat roof before and after bending.
#[derive(Debug, Serialize)]
pub struct BendProfile {
    /// Position across the bend axis, meters.
    pub across: Vec<f64>,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    /// Target surface height at each `across`.
    pub surface: Vec<f64>,
    /// Largest change of any point's vertical residual, over the whole crop.
    pub max_residual_change: f64,
    pub points: usize,
}

pub fn bend_profile(spherical: bool, radius_factor: f64, noise: f64, seed: u64) -> Result<BendProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, noise.max(0.0)).expect("finite sigma");
    let pts: Vec<Point> = (0..4000)
        .map(|_| Point::xyz(rng.gen_range(0.0..20.0), rng.gen_range(0.0..12.0), 6.0 + z.sample(&mut rng)))
        .collect();
    let roof = PointCloud::new(pts);
    let half = 5.0;
    let spec = if spherical {
        BendSpec::Sphere {
            center: [10.0, 6.0],
            disk_radius: half,
            radius: half * radius_factor.max(1.0),
        }
    } else {
        BendSpec::Cylinder {
            center: [10.0, 6.0],
            axis_angle: 0.0,
            half_length: 8.0,
            half_span: half,
            radius: half * radius_factor.max(1.0),
        }
    };
    let (crop, h0) = crop_flat_region(&roof, &spec)?;
    let bent = bend(&crop, h0, &spec)?;
    let mut out = BendProfile {
        across: Vec::new(),
        before: Vec::new(),
        after: Vec::new(),
        surface: Vec::new(),
        max_residual_change: 0.0,
        points: crop.len(),
    };
    let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (a, b) in crop.points().iter().zip(bent.points()) {
        let g = spec.surface_height(b.x, b.y, h0).unwrap_or(f64::NAN);
        out.max_residual_change = out.max_residual_change.max(((b.z - g) - (a.z - h0)).abs());
        if (a.x - 10.0).abs() < 0.6 {
            rows.push((a.y - 6.0, a.z, b.z, g));
        }
    }
    rows.sort_by(|p, q| p.0.total_cmp(&q.0));
    for (s, before, after, g) in rows {
        out.across.push(s);
        out.before.push(before);
        out.after.push(after);
        out.surface.push(g);
    }
    Ok(out)
}

/// Point weight against a horizontal plane over a grid of distance (x)
/// and normal tilt (y), at a fixed color difference.
#[derive(Debug, Serialize)]
pub struct WeightField {
    pub width: usize,
    pub height: usize,
    pub max_distance: f64,
    pub max_tilt_deg: f64,
    /// Row-major, row 0 at zero tilt.
    pub values: Vec<f64>,
}

pub fn weight_field(sigma_dis: f64, sigma_nv: f64, sigma_rgb: f64, color_diff: f64) -> Result<WeightField> {
    let cfg = RansacConfig {
        sigma_dis,
        sigma_nv,
        sigma_rgb,
        ..RansacConfig::default()
    };
    cfg.validate()?;
    let seed = Vector3::new(100.0, 100.0, 100.0);
    let plane = Primitive::plane(Vector3::z(), 0.0, seed)?;
    let (width, height, max_distance, max_tilt_deg) = (96, 64, 1.5, 90.0);
    let shade = (100.0 + color_diff).clamp(0.0, 255.0).round() as u8;
    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        let tilt = (row as f64 / (height - 1) as f64 * max_tilt_deg).to_radians();
        let n = Vector3::new(tilt.sin(), 0.0, tilt.cos());
        for col in 0..width {
            let d = col as f64 / (width - 1) as f64 * max_distance;
            values.push(point_weight(&Point::new(0.0, 0.0, d, shade, 100, 100), Some(n), &plane, &cfg));
        }
    }
    Ok(WeightField {
        width,
        height,
        max_distance,
        max_tilt_deg,
        values,
    })
}

/// One roof segmented coarse-to-fine and at a single level.
#[derive(Debug, Serialize)]
pub struct Comparison {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Segment of each point, -1 when unassigned.
    pub hierarchical: Vec<i32>,
    pub single_level: Vec<i32>,
    pub hierarchical_count: usize,
    pub single_level_count: usize,
}

/// Hip-like roof of a flat middle between two 25 degree slopes, with a
/// sinusoidal height ripple of amplitude `wave`.
pub fn three_plane_roof(wave: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).expect("finite sigma");
    let slope = 25f64.to_radians().tan();
    let phase = rng.gen_range(0.0..TAU);
    PointCloud::new(
        (0..3600)
            .map(|_| {
                let x: f64 = rng.gen_range(0.0..30.0);
                let y: f64 = rng.gen_range(0.0..20.0);
                let base = 5.0 + slope * x.min(10.0).min(30.0 - x);
                let ripple = wave * (TAU * (x + 0.6 * y) / 7.0 + phase).sin();
                Point::xyz(x, y, base + ripple + noise.sample(&mut rng))
            })
            .collect(),
    )
}

fn assignment(n: usize, fits: &[FitResult]) -> Vec<i32> {
    let mut out = vec![-1; n];
    for (k, f) in fits.iter().enumerate() {
        for &i in &f.inliers {
            out[i] = k as i32;
        }
    }
    out
}

pub fn compare_segmentation(wave: f64, seed: u64) -> Result<Comparison> {
    let cloud = three_plane_roof(wave, seed);
    let cluster = BuildingCluster::from_cloud(0, cloud)?;
    let cfg = RansacConfig {
        rng_seed: seed,
        ..RansacConfig::default()
    };
    let hier = hierarchical_segment(&cluster, &cfg)?;
    let flat = iterative_planes(&cluster, &cfg)?;
    let n = cluster.cloud.len();
    Ok(Comparison {
        x: cluster.cloud.points().iter().map(|p| p.x).collect(),
        y: cluster.cloud.points().iter().map(|p| p.y).collect(),
        hierarchical: assignment(n, &hier),
        single_level: assignment(n, &flat),
        hierarchical_count: hier.len(),
        single_level_count: flat.len(),
    })
}
