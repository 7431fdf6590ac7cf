//! Curved-roof synthesis by bending real flat roofs, multi-part roof
//! composition, and a small synthetic village for end-to-end runs.

pub mod village;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Vector2, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::io::write_point_cloud;
use crate::point::{Point, PointCloud, ShapeLabel};
use crate::ransac::stream_rng;

/// Fewest cropped points that still carry the source noise pattern.
pub const MIN_CROP_POINTS: usize = 50;

/// Region of a flat roof to crop and the surface it is bent onto.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BendSpec {
    /// Rectangle centered at `center` with its long side along
    /// `axis_angle` (radians from +x). Its two long edges lie on the
    /// cylinder, so the rectangle is a horizontal chord section.
    Cylinder {
        center: [f64; 2],
        axis_angle: f64,
        half_length: f64,
        half_span: f64,
        radius: f64,
    },
    /// Disk whose rim lies on the sphere.
    Sphere {
        center: [f64; 2],
        disk_radius: f64,
        radius: f64,
    },
}

impl BendSpec {
    pub fn label(&self) -> ShapeLabel {
        match self {
            BendSpec::Cylinder { .. } => ShapeLabel::Cylindrical,
            BendSpec::Sphere { .. } => ShapeLabel::Spherical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (half, radius) = match *self {
            BendSpec::Cylinder {
                half_length,
                half_span,
                radius,
                ..
            } => {
                if !(half_length > 0.0) {
                    return Err(Error::InvalidArgument("crop half length must be positive".into()));
                }
                (half_span, radius)
            }
            BendSpec::Sphere {
                disk_radius, radius, ..
            } => (disk_radius, radius),
        };
        if !(half > 0.0) {
            return Err(Error::InvalidArgument("crop size must be positive".into()));
        }
        if !(radius >= half) {
            return Err(Error::InvalidArgument(format!(
                "radius {radius} is smaller than the crop half-width {half}"
            )));
        }
        Ok(())
    }

    fn axis(&self) -> Vector2<f64> {
        match *self {
            BendSpec::Cylinder { axis_angle, .. } => Vector2::new(axis_angle.cos(), axis_angle.sin()),
            BendSpec::Sphere { .. } => Vector2::x(),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            BendSpec::Cylinder {
                center,
                half_length,
                half_span,
                ..
            } => {
                let d = Vector2::new(x - center[0], y - center[1]);
                let a = self.axis();
                let along = d.dot(&a);
                let across = d.perp(&a);
                along.abs() <= half_length && across.abs() <= half_span
            }
            BendSpec::Sphere {
                center, disk_radius, ..
            } => (x - center[0]).hypot(y - center[1]) <= disk_radius,
        }
    }

    /// Height of the target surface above (x, y), given the crop height.
    pub fn surface_height(&self, x: f64, y: f64, h0: f64) -> Option<f64> {
        let (rho2, half, radius) = match *self {
            BendSpec::Cylinder {
                center,
                half_span,
                radius,
                ..
            } => {
                let across = Vector2::new(x - center[0], y - center[1]).perp(&self.axis());
                (across * across, half_span, radius)
            }
            BendSpec::Sphere {
                center,
                disk_radius,
                radius,
            } => {
                let dx = x - center[0];
                let dy = y - center[1];
                (dx * dx + dy * dy, disk_radius, radius)
            }
        };
        let h2 = radius * radius - rho2;
        if h2 < 0.0 {
            return None;
        }
        Some(h0 - (radius * radius - half * half).sqrt() + h2.sqrt())
    }

    /// Axis point and direction (cylinder) or center (sphere) of the target
    /// surface for a crop at height `h0`.
    pub fn surface_center(&self, h0: f64) -> (Vector3<f64>, Vector3<f64>) {
        match *self {
            BendSpec::Cylinder {
                center,
                half_span,
                radius,
                ..
            } => {
                let a = self.axis();
                let z = h0 - (radius * radius - half_span * half_span).sqrt();
                (Vector3::new(center[0], center[1], z), Vector3::new(a.x, a.y, 0.0))
            }
            BendSpec::Sphere {
                center,
                disk_radius,
                radius,
            } => {
                let z = h0 - (radius * radius - disk_radius * disk_radius).sqrt();
                (Vector3::new(center[0], center[1], z), Vector3::zeros())
            }
        }
    }

    /// Random bend over a roof with the given (x, y) bounds: crop spans 40
    /// to 90 % of the roof, radius uniform in [half-width, 3 x half-width].
    pub fn random<R: Rng>(label: ShapeLabel, bounds: [f64; 4], rng: &mut R) -> Result<Self> {
        let w = bounds[2] - bounds[0];
        let h = bounds[3] - bounds[1];
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::Degenerate("roof has no extent".into()));
        }
        let cx = bounds[0] + w * rng.gen_range(0.4..0.6);
        let cy = bounds[1] + h * rng.gen_range(0.4..0.6);
        match label {
            ShapeLabel::Cylindrical => {
                let axis_angle = rng.gen_range(0.0..std::f64::consts::PI);
                let (c, s) = (axis_angle.cos().abs(), axis_angle.sin().abs());
                // largest rectangle of this orientation that fits the bounds
                let fit = |frac_len: f64, frac_span: f64| {
                    let mut l = 0.5 * w.max(h) * frac_len;
                    let mut sp = 0.5 * w.min(h) * frac_span;
                    for _ in 0..40 {
                        let ex = l * c + sp * s;
                        let ey = l * s + sp * c;
                        if ex <= 0.5 * w && ey <= 0.5 * h {
                            break;
                        }
                        l *= 0.9;
                        sp *= 0.9;
                    }
                    (l, sp)
                };
                let (half_length, half_span) = fit(rng.gen_range(0.6..0.9), rng.gen_range(0.6..0.9));
                let radius = half_span * rng.gen_range(1.0..3.0);
                Ok(BendSpec::Cylinder {
                    center: [cx, cy],
                    axis_angle,
                    half_length,
                    half_span,
                    radius,
                })
            }
            ShapeLabel::Spherical => {
                let disk_radius = 0.5 * w.min(h) * rng.gen_range(0.5..0.8);
                let radius = disk_radius * rng.gen_range(1.0..3.0);
                Ok(BendSpec::Sphere {
                    center: [cx, cy],
                    disk_radius,
                    radius,
                })
            }
            other => Err(Error::InvalidArgument(format!("cannot bend into a {other} roof"))),
        }
    }
}

/// Points of `cloud` inside the crop region and their mean height.
pub fn crop_flat_region(cloud: &PointCloud, spec: &BendSpec) -> Result<(PointCloud, f64)> {
    spec.validate()?;
    let inside: Vec<usize> = cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| spec.contains(p.x, p.y))
        .map(|(i, _)| i)
        .collect();
    if inside.len() < MIN_CROP_POINTS {
        return Err(Error::TooFewPoints {
            required: MIN_CROP_POINTS,
            actual: inside.len(),
        });
    }
    let crop = cloud.select(&inside);
    let h0 = crop.points().iter().map(|p| p.z).sum::<f64>() / crop.len() as f64;
    Ok((crop, h0))
}

/// Moves every point to `z - h0 + g(x, y)`, `g` being the target surface.
/// Labels become the curved class; normals are dropped.
pub fn bend(cropped: &PointCloud, h0: f64, spec: &BendSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut pts = Vec::with_capacity(cropped.len());
    for (i, p) in cropped.points().iter().enumerate() {
        let g = spec.surface_height(p.x, p.y, h0).ok_or_else(|| {
            Error::OutOfExtent(format!("point {i} at ({}, {}) is off the bend surface", p.x, p.y))
        })?;
        pts.push(Point { z: p.z - h0 + g, ..*p });
    }
    cropped
        .with_points(pts)?
        .with_labels(vec![spec.label(); cropped.len()])
}

/// Random similarity applied to each part before composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    /// Rotation about z is drawn from `[0, max_rotation)` radians.
    pub max_rotation: f64,
    /// Horizontal scale is drawn from `[min_scale, max_scale]`.
    pub min_scale: f64,
    pub max_scale: f64,
    /// Parts after the first are placed this fraction of the summed part
    /// radii away from the first; smaller values overlap them more.
    pub spacing: (f64, f64),
    /// Vertical offset range of each part, meters.
    pub max_lift: f64,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self {
            max_rotation: std::f64::consts::TAU,
            min_scale: 0.8,
            max_scale: 1.2,
            spacing: (0.6, 0.9),
            max_lift: 1.0,
        }
    }
}

impl Augmentation {
    /// Leaves a single part exactly where it is.
    pub fn identity() -> Self {
        Self {
            max_rotation: 0.0,
            min_scale: 1.0,
            max_scale: 1.0,
            spacing: (1.0, 1.0),
            max_lift: 0.0,
        }
    }
}

fn draw<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Unions 1 to 3 labeled parts after rotating, scaling and translating
/// each. The first part stays centered where it was.
pub fn compose_complex_roof(parts: &[PointCloud], seed: u64) -> Result<PointCloud> {
    compose_with(parts, &Augmentation::default(), seed)
}

pub fn compose_with(parts: &[PointCloud], aug: &Augmentation, seed: u64) -> Result<PointCloud> {
    if parts.is_empty() || parts.len() > 3 {
        return Err(Error::InvalidArgument(format!(
            "composition takes 1 to 3 parts, got {}",
            parts.len()
        )));
    }
    let mut rng = stream_rng(seed, &[0xc0]);
    let mut anchor = Vector2::zeros();
    let mut anchor_radius = 0.0;
    let mut out = Vec::with_capacity(parts.len());
    for (k, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::TooFewPoints { required: 1, actual: 0 });
        }
        let n = part.len() as f64;
        let c = part.points().iter().fold(Vector2::zeros(), |a, p| a + Vector2::new(p.x, p.y)) / n;
        let radius = part
            .points()
            .iter()
            .map(|p| (p.x - c.x).hypot(p.y - c.y))
            .fold(0.0, f64::max);
        let theta = draw(&mut rng, 0.0, aug.max_rotation);
        let scale = draw(&mut rng, aug.min_scale, aug.max_scale);
        let lift = draw(&mut rng, -aug.max_lift, aug.max_lift);
        let target = if k == 0 {
            anchor = c;
            anchor_radius = radius * scale;
            c
        } else {
            let dir = draw(&mut rng, 0.0, std::f64::consts::TAU);
            let dist = (anchor_radius + radius * scale) * draw(&mut rng, aug.spacing.0, aug.spacing.1);
            anchor + Vector2::new(dir.cos(), dir.sin()) * dist
        };
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), theta);
        let pts: Vec<Point> = part
            .points()
            .iter()
            .map(|p| {
                let local = rot * Vector3::new(p.x - c.x, p.y - c.y, 0.0) * scale;
                Point {
                    x: target.x + local.x,
                    y: target.y + local.y,
                    z: p.z + lift,
                    ..*p
                }
            })
            .collect();
        if theta == 0.0 && scale == 1.0 && lift == 0.0 && target == c {
            out.push(part.clone());
        } else {
            out.push(part.with_points(pts)?);
        }
    }
    Ok(PointCloud::concat(&out))
}

/// One generated training sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    /// Class the sample was generated for.
    pub class: ShapeLabel,
    /// Points per label code.
    pub counts: [usize; 4],
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// One line per sample: `path class=<name> flat=<n> sloped=<n>
    /// cylindrical=<n> spherical=<n>`. Paths are written relative to
    /// `base` when possible.
    pub fn format(&self, base: &Path) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let p = e.path.strip_prefix(base).unwrap_or(&e.path);
            let _ = write!(s, "{} class={}", p.display(), e.class);
            for l in ShapeLabel::ALL {
                let _ = write!(s, " {}={}", l, e.counts[l.code() as usize]);
            }
            s.push('\n');
        }
        s
    }

    pub fn per_class(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for e in &self.entries {
            h[e.class.code() as usize] += 1;
        }
        h
    }
}

pub const MANIFEST_NAME: &str = "manifest.txt";

fn labeled(cloud: &PointCloud, label: ShapeLabel) -> Result<PointCloud> {
    cloud.clone().with_labels(vec![label; cloud.len()])
}

fn bent_sample<R: Rng>(flats: &[PointCloud], label: ShapeLabel, rng: &mut R) -> Result<PointCloud> {
    let mut last = None;
    for _ in 0..20 {
        let src = &flats[rng.gen_range(0..flats.len())];
        let Some(bounds) = src.bounds_2d() else { continue };
        let spec = BendSpec::random(label, bounds, rng)?;
        match crop_flat_region(src, &spec) {
            Ok((crop, h0)) => return bend(&crop, h0, &spec),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or(Error::Degenerate("no usable flat source roof".into())))
}

fn simple_sample<R: Rng>(
    flats: &[PointCloud],
    sloped: &[PointCloud],
    label: ShapeLabel,
    rng: &mut R,
) -> Result<PointCloud> {
    match label {
        ShapeLabel::Flat => labeled(&flats[rng.gen_range(0..flats.len())], label),
        ShapeLabel::Sloped => labeled(&sloped[rng.gen_range(0..sloped.len())], label),
        curved => bent_sample(flats, curved, rng),
    }
}

/// Writes `count_per_class` labeled samples for each class into `out_dir`,
/// plus `manifest.txt`. Each sample is led by a roof of its class and may
/// be joined by up to two random roofs of any class.
pub fn generate_training_set(
    flat_roofs: &[PointCloud],
    sloped_roofs: &[PointCloud],
    count_per_class: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<Manifest> {
    if flat_roofs.is_empty() || sloped_roofs.is_empty() {
        return Err(Error::InvalidArgument(
            "both flat and sloped source roofs are required".into(),
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let jobs: Vec<(ShapeLabel, usize)> = ShapeLabel::ALL
        .iter()
        .flat_map(|&l| (0..count_per_class).map(move |i| (l, i)))
        .collect();
    let make = |&(label, i): &(ShapeLabel, usize)| -> Result<ManifestEntry> {
        let mut rng = stream_rng(seed, &[label.code() as u64, i as u64]);
        let extra = rng.gen_range(0..3);
        let mut parts = vec![simple_sample(flat_roofs, sloped_roofs, label, &mut rng)?];
        for _ in 0..extra {
            let other = ShapeLabel::ALL[rng.gen_range(0..4)];
            parts.push(simple_sample(flat_roofs, sloped_roofs, other, &mut rng)?);
        }
        let cloud = compose_complex_roof(&parts, rng.gen())?;
        let path = out_dir.join(format!("{}_{:04}.txt", label, i));
        write_point_cloud(&cloud, &path)?;
        Ok(ManifestEntry {
            path,
            class: label,
            counts: cloud.label_histogram(),
        })
    };
    #[cfg(feature = "parallel")]
    let entries: Result<Vec<ManifestEntry>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(make).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let entries: Result<Vec<ManifestEntry>> = jobs.iter().map(make).collect();
    let manifest = Manifest { entries: entries? };
    let mpath = out_dir.join(MANIFEST_NAME);
    std::fs::write(&mpath, manifest.format(out_dir)).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn flat_roof(z: f64, sigma: f64, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
        let pts = (0..1200)
            .map(|i| {
                let x = (i % 40) as f64 * 0.5;
                let y = (i / 40) as f64 * 0.5;
                let dz = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                Point::new(x, y, z + dz, 90, 90, 100)
            })
            .collect();
        PointCloud::new(pts)
    }

    fn cyl_spec() -> BendSpec {
        BendSpec::Cylinder {
            center: [10.0, 7.0],
            axis_angle: 0.3,
            half_length: 6.0,
            half_span: 4.0,
            radius: 5.0,
        }
    }

    #[test]
    fn crop_height() {
        let (crop, h0) = crop_flat_region(&flat_roof(7.0, 0.0, 0), &cyl_spec()).unwrap();
        assert!(crop.len() >= MIN_CROP_POINTS);
        assert!((h0 - 7.0).abs() < 1e-12);

        let sigma = 0.2;
        let (crop, h0) = crop_flat_region(&flat_roof(7.0, sigma, 1), &cyl_spec()).unwrap();
        assert!((h0 - 7.0).abs() < 3.0 * sigma / (crop.len() as f64).sqrt());
    }

    #[test]
    fn empty_crop_is_an_error() {
        let spec = BendSpec::Sphere {
            center: [500.0, 500.0],
            disk_radius: 3.0,
            radius: 5.0,
        };
        assert!(crop_flat_region(&flat_roof(7.0, 0.0, 0), &spec).is_err());
    }

    #[test]
    fn exact_plane_lands_on_cylinder() {
        let spec = cyl_spec();
        let (crop, h0) = crop_flat_region(&flat_roof(7.0, 0.0, 0), &spec).unwrap();
        let out = bend(&crop, h0, &spec).unwrap();
        let (a, u) = spec.surface_center(h0);
        for p in out.points() {
            let w = p.pos() - a;
            let r = (w - u * w.dot(&u)).norm();
            assert!((r - 5.0).abs() < 1e-9, "{r}");
            assert!(p.z >= 7.0 - 1e-9);
        }
        assert!(out.labels().unwrap().iter().all(|&l| l == ShapeLabel::Cylindrical));
    }

    #[test]
    fn residuals_survive_the_sphere_bend() {
        let spec = BendSpec::Sphere {
            center: [10.0, 7.0],
            disk_radius: 5.0,
            radius: 9.0,
        };
        let (crop, h0) = crop_flat_region(&flat_roof(7.0, 0.3, 2), &spec).unwrap();
        let out = bend(&crop, h0, &spec).unwrap();
        for (a, b) in crop.points().iter().zip(out.points()) {
            let g = spec.surface_height(b.x, b.y, h0).unwrap();
            assert!(((b.z - g) - (a.z - h0)).abs() < 1e-9);
            assert_eq!((a.x, a.y, a.r, a.g, a.b), (b.x, b.y, b.r, b.g, b.b));
        }
    }

    #[test]
    fn radius_below_half_span_is_rejected() {
        let spec = BendSpec::Sphere {
            center: [0.0, 0.0],
            disk_radius: 5.0,
            radius: 4.0,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn identity_composition() {
        let part = labeled(&flat_roof(5.0, 0.1, 3), ShapeLabel::Flat).unwrap();
        let out = compose_with(std::slice::from_ref(&part), &Augmentation::identity(), 9).unwrap();
        assert_eq!(out.points(), part.points());
        assert_eq!(out.labels(), part.labels());
    }

    #[test]
    fn composition_keeps_labels_and_is_seeded() {
        let a = labeled(&flat_roof(5.0, 0.1, 3), ShapeLabel::Flat).unwrap();
        let spec = cyl_spec();
        let (crop, h0) = crop_flat_region(&flat_roof(5.0, 0.1, 4), &spec).unwrap();
        let b = bend(&crop, h0, &spec).unwrap();
        let out = compose_complex_roof(&[a.clone(), b.clone()], 11).unwrap();
        let (ha, hb) = (a.label_histogram(), b.label_histogram());
        let sum: Vec<usize> = (0..4).map(|i| ha[i] + hb[i]).collect();
        assert_eq!(out.label_histogram().to_vec(), sum);
        let again = compose_complex_roof(&[a, b], 11).unwrap();
        assert_eq!(out.points(), again.points());
        assert!(compose_complex_roof(&[], 0).is_err());
    }

    #[test]
    fn training_set_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let flat = flat_roof(6.0, 0.1, 5);
        let sloped = PointCloud::new(
            flat.points()
                .iter()
                .map(|p| Point { z: 6.0 + 0.5 * p.y, ..*p })
                .collect(),
        );
        let m = generate_training_set(&[flat.clone()], &[sloped.clone()], 1, dir.path(), 3).unwrap();
        assert_eq!(m.entries.len(), 4);
        assert_eq!(m.per_class(), [1, 1, 1, 1]);
        let files = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(files, 5);
        let first = std::fs::read(dir.path().join(MANIFEST_NAME)).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        generate_training_set(&[flat], &[sloped], 1, dir2.path(), 3).unwrap();
        assert_eq!(first, std::fs::read(dir2.path().join(MANIFEST_NAME)).unwrap());
    }
}
