use nalgebra::{DVector, Matrix2, Matrix3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::Rng;

use super::lsq::levenberg_marquardt;
use super::plane::{best_index, mean_squared_distance, score_all};
use super::weight::{score_indices, score_only, Samples};
use super::{stream_rng, FitResult, RansacConfig};
use crate::error::{Error, Result};
use crate::point::{PointCloud, ShapeLabel};
use crate::primitive::{Primitive, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Sphere,
    Cylinder,
}

pub fn ransac_sphere(cloud: &PointCloud, cfg: &RansacConfig) -> Result<FitResult> {
    cfg.validate()?;
    let samples = Samples::from_cloud(cloud);
    let all: Vec<usize> = (0..samples.len()).collect();
    let mut rng = stream_rng(cfg.rng_seed, &[0, 0, 0]);
    fit_curved_subset(&samples, &all, Kind::Sphere, cfg, &mut rng)
}

pub fn ransac_cylinder(cloud: &PointCloud, cfg: &RansacConfig) -> Result<FitResult> {
    cfg.validate()?;
    let samples = Samples::from_cloud(cloud);
    let all: Vec<usize> = (0..samples.len()).collect();
    let mut rng = stream_rng(cfg.rng_seed, &[0, 0, 0]);
    fit_curved_subset(&samples, &all, Kind::Cylinder, cfg, &mut rng)
}

/// Repeated sphere or cylinder extraction: fit, remove inliers, repeat until
/// fewer than `min_roof_points` remain or the best fit is rejected.
/// `stream` seeds the per-extraction RNG streams, typically the cluster id.
pub fn extract_curved(
    cloud: &PointCloud,
    label: ShapeLabel,
    cfg: &RansacConfig,
    stream: u64,
) -> Result<Vec<FitResult>> {
    cfg.validate()?;
    let kind = match label {
        ShapeLabel::Spherical => Kind::Sphere,
        ShapeLabel::Cylindrical => Kind::Cylinder,
        other => {
            return Err(Error::InvalidArgument(format!(
                "curved extraction needs a curved label, got {other}"
            )))
        }
    };
    let samples = Samples::from_cloud(cloud);
    let mut remaining: Vec<usize> = (0..samples.len()).collect();
    let mut out = Vec::new();
    let mut e = 0u64;
    while remaining.len() >= cfg.min_roof_points {
        let mut rng = stream_rng(cfg.rng_seed, &[stream, 0, e]);
        e += 1;
        let Ok(fit) = fit_curved_subset(&samples, &remaining, kind, cfg, &mut rng) else {
            break;
        };
        if fit.mse > cfg.max_mse || fit.inliers.len() < cfg.min_roof_points {
            break;
        }
        let taken: std::collections::HashSet<usize> = fit.inliers.iter().copied().collect();
        remaining.retain(|i| !taken.contains(i));
        out.push(fit);
    }
    Ok(out)
}

fn circumsphere(p: [Vector3<f64>; 4]) -> Option<(Vector3<f64>, f64)> {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for i in 0..3 {
        let d = p[i + 1] - p[0];
        a.set_row(i, &(d * 2.0).transpose());
        b[i] = p[i + 1].norm_squared() - p[0].norm_squared();
    }
    let scale: f64 = (1..4).map(|i| (p[i] - p[0]).norm()).product();
    if !(a.determinant().abs() > 1e-9 * 8.0 * scale) {
        return None;
    }
    let c = a.lu().solve(&b)?;
    Some((c, (p[0] - c).norm()))
}

/// Axis from the cross product of the two normals; center where the normal
/// lines meet in the plane across the axis.
fn cylinder_from_two(
    p: [Vector3<f64>; 2],
    n: [Vector3<f64>; 2],
) -> Option<(Vector3<f64>, Vector3<f64>, f64)> {
    let u = n[0].cross(&n[1]);
    // normals less than ~2 degrees apart give no usable axis
    if u.norm() < 0.035 {
        return None;
    }
    let u = u.normalize();
    let (e1, e2) = plane_basis(&u);
    let to2 = |v: &Vector3<f64>| Vector2::new(v.dot(&e1), v.dot(&e2));
    let (q1, q2) = (to2(&p[0]), to2(&p[1]));
    let (m1, m2) = (to2(&n[0]), to2(&n[1]));
    let a = Matrix2::from_columns(&[m1, -m2]);
    let ts = a.lu().solve(&(q2 - q1))?;
    let c2 = ((q1 + m1 * ts[0]) + (q2 + m2 * ts[1])) * 0.5;
    let r = ((q1 - c2).norm() + (q2 - c2).norm()) * 0.5;
    let axis_point = e1 * c2.x + e2 * c2.y;
    Some((axis_point, u, r))
}

fn plane_basis(u: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if u.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = u.cross(&helper).normalize();
    (e1, u.cross(&e1))
}

fn hypothesis<R: Rng>(
    samples: &Samples,
    pool: &[usize],
    kind: Kind,
    cfg: &RansacConfig,
    rng: &mut R,
) -> Option<Primitive> {
    match kind {
        Kind::Sphere => {
            let pick = sample(rng, pool.len(), 4);
            let idx = [0, 1, 2, 3].map(|k| pool[pick.index(k)]);
            let (c, r) = circumsphere(idx.map(|i| samples.pos[i]))?;
            if r > cfg.max_radius {
                return None;
            }
            Primitive::sphere(c, r, samples.mean_color(&idx)).ok()
        }
        Kind::Cylinder => {
            let pick = sample(rng, pool.len(), 2);
            let idx = [pool[pick.index(0)], pool[pick.index(1)]];
            let n = idx.map(|i| samples.normal[i].unwrap());
            let (a, u, r) = cylinder_from_two(idx.map(|i| samples.pos[i]), n)?;
            if r > cfg.max_radius {
                return None;
            }
            Primitive::cylinder(a, u, r, samples.mean_color(&idx)).ok()
        }
    }
}

fn refine(samples: &Samples, inliers: &[usize], guess: &Primitive) -> Option<Primitive> {
    let pts: Vec<Vector3<f64>> = inliers.iter().map(|&i| samples.pos[i]).collect();
    let color = samples.mean_color(inliers);
    match guess.shape {
        Shape::Sphere { center, radius } => {
            if pts.len() < 4 {
                return None;
            }
            let out = levenberg_marquardt(
                |x| {
                    let c = Vector3::new(x[0], x[1], x[2]);
                    DVector::from_iterator(pts.len(), pts.iter().map(|p| (p - c).norm() - x[3]))
                },
                DVector::from_vec(vec![center.x, center.y, center.z, radius]),
            );
            let x = out.params;
            Primitive::sphere(Vector3::new(x[0], x[1], x[2]), x[3].abs(), color).ok()
        }
        Shape::Cylinder {
            axis_point,
            axis_dir,
            radius,
        } => {
            if pts.len() < 5 {
                return None;
            }
            // axis as a point in the plane across the initial axis plus a
            // tilt of the direction, so there are no redundant parameters
            let (e1, e2) = plane_basis(&axis_dir);
            let frame = move |x: &DVector<f64>| {
                let u = (axis_dir + e1 * x[2] + e2 * x[3]).normalize();
                let a = axis_point + e1 * x[0] + e2 * x[1];
                (a, u)
            };
            let out = levenberg_marquardt(
                |x| {
                    let (a, u) = frame(x);
                    DVector::from_iterator(
                        pts.len(),
                        pts.iter().map(|p| {
                            let w = p - a;
                            (w - u * w.dot(&u)).norm() - x[4]
                        }),
                    )
                },
                DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, radius]),
            );
            let (a, u) = frame(&out.params);
            Primitive::cylinder(a, u, out.params[4].abs(), color).ok()
        }
        Shape::Plane { .. } => None,
    }
}

fn fit_curved_subset<R: Rng>(
    samples: &Samples,
    subset: &[usize],
    kind: Kind,
    cfg: &RansacConfig,
    rng: &mut R,
) -> Result<FitResult> {
    let band = cfg.inlier_distance;
    let pool: Vec<usize> = match kind {
        Kind::Sphere => subset.to_vec(),
        Kind::Cylinder => subset
            .iter()
            .copied()
            .filter(|&i| samples.normal[i].is_some())
            .collect(),
    };
    let required = if kind == Kind::Sphere { 4 } else { 2 };
    if pool.len() < required {
        if kind == Kind::Cylinder && subset.len() >= required {
            return Err(Error::MissingNormals);
        }
        return Err(Error::TooFewPoints {
            required,
            actual: pool.len(),
        });
    }
    let hypotheses: Vec<Option<Primitive>> = (0..cfg.max_iterations)
        .map(|_| hypothesis(samples, &pool, kind, cfg, rng))
        .collect();
    let scores = score_all(&hypotheses, |p| score_only(samples, subset, p, cfg, band));
    let best = best_index(&scores)
        .ok_or_else(|| Error::Degenerate("every curved hypothesis was degenerate".into()))?;
    let guess = hypotheses[best].unwrap();
    let (_, inliers) = score_indices(samples, subset, &guess, cfg, band);

    // a couple of refit rounds let the support grow into the refined surface
    let mut prim = guess;
    let mut support = inliers;
    for _ in 0..3 {
        let Some(next) = refine(samples, &support, &prim) else {
            break;
        };
        if radius_of(&next) > cfg.max_radius {
            break;
        }
        let (_, s) = score_indices(samples, subset, &next, cfg, band);
        if s.len() < support.len() / 2 {
            break;
        }
        let same = s == support;
        prim = next;
        support = s;
        if same {
            break;
        }
    }
    let (score, inliers) = score_indices(samples, subset, &prim, cfg, band);
    let mse = mean_squared_distance(samples, &inliers, &prim);
    Ok(FitResult {
        primitive: prim,
        inliers,
        score,
        mse,
        level: 0,
        inlier_distance: band,
    })
}

fn radius_of(p: &Primitive) -> f64 {
    match p.shape {
        Shape::Sphere { radius, .. } | Shape::Cylinder { radius, .. } => radius,
        Shape::Plane { .. } => f64::INFINITY,
    }
}
