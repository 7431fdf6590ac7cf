//! Acceptance criteria, one PASS or FAIL line each. Runs without the test
//! harness so the lines are always printed.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rooffit::cluster::BuildingCluster;
use rooffit::eval::{score2d, score3d, EvalReport, Scores};
use rooffit::normals::estimate_normals;
use rooffit::ransac::{
    build_pyramid, fit_score, hierarchical_segment, iterative_planes, point_weight, ransac_cylinder, ransac_plane,
    ransac_sphere, RansacConfig,
};
use rooffit::synth::village::{generate_village, VillageConfig};
use rooffit::synth::{bend, crop_flat_region, BendSpec};
use rooffit::{Point, PointCloud, Primitive, RasterGrid, Shape, ShapeLabel};
use rooffit_cli::manifest::{sha256_hex, MANIFEST_NAME};
use rooffit_cli::pipeline::Settings;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cluster_of(cloud: PointCloud) -> BuildingCluster {
    BuildingCluster::from_cloud(0, cloud).unwrap()
}

fn gray() -> Vector3<f64> {
    Vector3::new(128.0, 128.0, 128.0)
}

// Target surface height of a bend, worked out from the crop geometry alone.
fn bend_surface(spec: &BendSpec, x: f64, y: f64, h0: f64) -> f64 {
    let (rho2, half, r) = match *spec {
        BendSpec::Cylinder {
            center,
            axis_angle,
            half_span,
            radius,
            ..
        } => {
            let across = -(x - center[0]) * axis_angle.sin() + (y - center[1]) * axis_angle.cos();
            (across * across, half_span, radius)
        }
        BendSpec::Sphere {
            center,
            disk_radius,
            radius,
        } => ((x - center[0]).powi(2) + (y - center[1]).powi(2), disk_radius, radius),
    };
    h0 - (r * r - half * half).sqrt() + (r * r - rho2).sqrt()
}

fn bend_identity() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut done, mut worst, mut moved) = (0, 0.0f64, 0);
    while done < 1000 {
        let (w, h) = (r.gen_range(8.0..20.0), r.gen_range(8.0..20.0));
        let (ox, oy, top) = (r.gen_range(-50.0..50.0), r.gen_range(-50.0..50.0), r.gen_range(3.0..15.0));
        let noise = Normal::new(0.0, r.gen_range(0.02..0.3)).unwrap();
        let pts: Vec<Point> = (0..400)
            .map(|_| {
                let c = r.gen_range(60..200u8);
                Point::new(ox + r.gen_range(0.0..w), oy + r.gen_range(0.0..h), top + noise.sample(&mut r), c, c, c)
            })
            .collect();
        let roof = PointCloud::new(pts);
        let label = if r.gen_bool(0.5) {
            ShapeLabel::Cylindrical
        } else {
            ShapeLabel::Spherical
        };
        let spec = BendSpec::random(label, [ox, oy, ox + w, oy + h], &mut r).unwrap();
        let Ok((crop, h0)) = crop_flat_region(&roof, &spec) else {
            continue;
        };
        let bent = bend(&crop, h0, &spec).unwrap();
        for (a, b) in crop.points().iter().zip(bent.points()) {
            let before = a.z - h0;
            let after = b.z - bend_surface(&spec, b.x, b.y, h0);
            worst = worst.max((before - after).abs());
            if (a.x, a.y, a.r, a.g, a.b) != (b.x, b.y, b.r, b.g, b.b) {
                moved += 1;
            }
        }
        done += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && moved == 0 && secs < 10.0,
        format!("1000 crops, max residual change {worst:.1e} m, {moved} points moved in x/y/color, {secs:.2} s"),
    )
}

fn weight_closed_forms() -> Outcome {
    let c0 = gray();
    let horiz = Primitive::plane(Vector3::z(), 0.0, c0).unwrap();
    let tilted = Primitive::plane(Vector3::new(0.0, 0.6, 0.8), 0.0, c0).unwrap();
    let sphere = Primitive::sphere(Vector3::zeros(), 5.0, c0).unwrap();
    let cyl = Primitive::cylinder(Vector3::zeros(), Vector3::x(), 4.0, c0).unwrap();
    let default = RansacConfig::default();
    let unit = RansacConfig {
        sigma_dis: 1.0,
        sigma_nv: 1.0,
        sigma_rgb: 10.0,
        ..default
    };
    let z = Some(Vector3::z());
    let tip = Some(Vector3::new(0.6, 0.0, 0.8));
    let e = f64::exp;
    let p = |x, y, z| Point::new(x, y, z, 128, 128, 128);
    let colored = |x, y, z, r, g, b| Point::new(x, y, z, r, g, b);
    // (point, normal, primitive, config, hand-worked weight)
    let cases: Vec<(Point, Option<Vector3<f64>>, &Primitive, RansacConfig, f64)> = vec![
        (p(1.0, 2.0, 0.0), z, &horiz, default, 1.0),
        (p(1.0, 2.0, 0.5), z, &horiz, default, e(-1.0)),
        (p(1.0, 2.0, 0.0), Some(-Vector3::z()), &horiz, default, e(-4.0 / 0.49)),
        (p(0.0, 0.0, 0.25), z, &horiz, default, e(-0.25)),
        (p(0.0, 0.0, -0.5), z, &horiz, default, e(-1.0)),
        (colored(0.0, 0.0, 0.0, 158, 128, 128), z, &horiz, default, e(-1.0)),
        (colored(0.0, 0.0, 0.0, 138, 148, 148), z, &horiz, default, e(-1.0)),
        (p(0.0, 0.0, 0.0), tip, &horiz, default, e(-0.4 / 0.49)),
        (p(3.0, 3.0, 0.5), None, &horiz, default, e(-1.0)),
        (colored(0.0, 0.0, 0.25, 158, 128, 128), tip, &horiz, default, e(-(0.25 + 0.4 / 0.49 + 1.0))),
        (p(0.0, 0.3, 0.4), Some(Vector3::new(0.0, 0.6, 0.8)), &tilted, default, e(-1.0)),
        (p(0.0, 0.0, 3.0), z, &horiz, default, e(-36.0)),
        (p(0.0, 0.0, 5.5), z, &sphere, default, e(-1.0)),
        (p(3.0, 0.0, 4.0), tip, &sphere, default, 1.0),
        (p(3.0, 0.0, 4.0), z, &sphere, default, e(-0.4 / 0.49)),
        (p(7.0, 0.0, 4.25), z, &cyl, default, e(-0.25)),
        (p(2.0, -2.4, 3.2), Some(Vector3::new(0.0, -0.6, 0.8)), &cyl, default, 1.0),
        (p(0.0, 0.0, 0.5), z, &horiz, unit, e(-0.25)),
        (colored(0.0, 0.0, 0.0, 134, 136, 128), z, &horiz, unit, e(-1.0)),
        (p(0.0, 0.0, 0.0), Some(-Vector3::z()), &horiz, unit, e(-4.0)),
    ];
    let worst = cases
        .iter()
        .map(|(pt, n, prim, cfg, w)| (point_weight(pt, *n, prim, cfg) - w).abs())
        .fold(0.0, f64::max);
    outcome(
        cases.len() == 20 && worst <= 1e-12,
        format!("{} cases, max error {worst:.1e}", cases.len()),
    )
}

fn conventional_limit() -> Outcome {
    let mut r = rng(3);
    let cfg = RansacConfig::default().conventional();
    let mut worst = 0.0f64;
    for pair in 0..100 {
        let n = Vector3::new(r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5), 1.0).normalize();
        let d = r.gen_range(-5.0..5.0);
        let with_normals = pair % 2 == 0;
        let mut pts = Vec::new();
        let mut normals = Vec::new();
        for _ in 0..200 {
            let (x, y) = (r.gen_range(-10.0..10.0), r.gen_range(-10.0..10.0));
            let z = (d - n.x * x - n.y * y) / n.z + r.gen_range(-1.0..1.0);
            pts.push(Point::new(x, y, z, r.gen(), r.gen(), r.gen()));
            normals.push(Some(Vector3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), 1.0).normalize()));
        }
        let mut cloud = PointCloud::new(pts);
        if with_normals {
            cloud = cloud.with_normals(normals).unwrap();
        }
        let prim = Primitive::plane(n, d, Vector3::new(r.gen(), r.gen(), r.gen())).unwrap();
        let count = cloud
            .points()
            .iter()
            .filter(|p| (n.x * p.x + n.y * p.y + n.z * p.z - d).abs() <= cfg.inlier_distance)
            .count();
        let (score, _) = fit_score(&cloud, &prim, &cfg);
        worst = worst.max((score - count as f64).abs());
    }
    outcome(worst < 1e-3, format!("100 pairs, max |score - count| {worst:.1e}"))
}

fn plane_recovery() -> Outcome {
    let start = Instant::now();
    let mut passed = 0;
    let (mut worst_angle, mut worst_recall) = (0.0f64, 1.0f64);
    for trial in 0..50u64 {
        let mut r = rng(400 + trial);
        let tilt = r.gen_range(0.0..35f64).to_radians();
        let az = r.gen_range(0.0..TAU);
        let n = Vector3::new(tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos());
        let anchor = Vector3::new(15.0, 15.0, 10.0);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let jitter = Normal::new(0.0, 10.0).unwrap();
        let mut pts = Vec::with_capacity(2000);
        for _ in 0..1600 {
            let (x, y) = (r.gen_range(0.0..30.0), r.gen_range(0.0..30.0));
            let z = anchor.z - (n.x * (x - anchor.x) + n.y * (y - anchor.y)) / n.z;
            let q = Vector3::new(x, y, z) + n * noise.sample(&mut r);
            let c = (150.0f64 + jitter.sample(&mut r)).clamp(0.0, 255.0) as u8;
            pts.push(Point::new(q.x, q.y, q.z, c, c, c));
        }
        for _ in 0..400 {
            let q = Vector3::new(r.gen_range(0.0..30.0), r.gen_range(0.0..30.0), r.gen_range(0.0..25.0));
            pts.push(Point::new(q.x, q.y, q.z, r.gen(), r.gen(), r.gen()));
        }
        let cloud = PointCloud::new(pts);
        let cfg = RansacConfig {
            rng_seed: trial,
            ..RansacConfig::default()
        };
        let fit = ransac_plane(&cloud, &cfg).unwrap();
        let Shape::Plane { normal, .. } = fit.primitive.shape else {
            continue;
        };
        let angle = normal.dot(&n).abs().min(1.0).acos().to_degrees();
        let recall = fit.inliers.iter().filter(|&&i| i < 1600).count() as f64 / 1600.0;
        worst_angle = worst_angle.max(angle);
        worst_recall = worst_recall.min(recall);
        passed += (angle <= 2.0 && recall >= 0.95) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        passed >= 48 && secs < 30.0,
        format!("{passed}/50 trials, worst normal error {worst_angle:.2} deg, worst recall {worst_recall:.3}, {secs:.2} s"),
    )
}

fn three_plane_roof(seed: u64) -> BuildingCluster {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let slope = 25f64.to_radians().tan();
    let phase = r.gen_range(0.0..TAU);
    let pts = (0..3600)
        .map(|_| {
            let x: f64 = r.gen_range(0.0..30.0);
            let y: f64 = r.gen_range(0.0..20.0);
            let base = 5.0 + slope * x.min(10.0).min(30.0 - x);
            let wave = 0.3 * (TAU * (x + 0.6 * y) / 7.0 + phase).sin();
            Point::xyz(x, y, base + wave + noise.sample(&mut r))
        })
        .collect();
    cluster_of(PointCloud::new(pts))
}

fn hierarchical_vs_flat() -> Outcome {
    let (mut hier_three, mut flat_other) = (0, 0);
    for s in 0..50u64 {
        let c = three_plane_roof(s);
        let cfg = RansacConfig {
            rng_seed: s,
            ..RansacConfig::default()
        };
        hier_three += (hierarchical_segment(&c, &cfg).unwrap().len() == 3) as usize;
        flat_other += (iterative_planes(&c, &cfg).unwrap().len() != 3) as usize;
    }
    outcome(
        hier_three >= 45 && flat_other >= 20,
        format!("hierarchical 3 segments in {hier_three}/50, single level not 3 in {flat_other}/50"),
    )
}

fn pyramid_contract() -> Outcome {
    let mut r = rng(6);
    let pts = (0..20_000)
        .map(|_| {
            // heights on a 0.1 m lattice so cells hold ties
            let z = (r.gen_range(0.0..5.0f64) * 10.0).round() / 10.0;
            Point::xyz(r.gen_range(-20.0..20.0), r.gen_range(-20.0..20.0), z)
        })
        .collect();
    let cloud = PointCloud::new(pts);
    let pyr = build_pyramid(&cloud, 0.5, 3).unwrap();
    let mut problems = Vec::new();
    if pyr.levels.len() != 3 || pyr.grid_sizes != [0.5, 1.0] {
        problems.push(format!("levels {} grids {:?}", pyr.levels.len(), pyr.grid_sizes));
    }
    let mut unreal = 0;
    for k in 0..pyr.levels.len() - 1 {
        for j in 0..pyr.levels[k + 1].len() {
            let q = pyr.levels[k + 1].point(j);
            if pyr.levels[k].point(pyr.representatives[k][j]) != q || cloud.point(pyr.to_level0[k + 1][j]) != q {
                unreal += 1;
            }
        }
    }
    let mut cells = 0;
    let mut wrong = 0;
    for k in 0..2 {
        let g = 0.5 * 2f64.powi(k as i32);
        let key = |p: &Point| ((p.x / g).floor() as i64, (p.y / g).floor() as i64);
        let level = &pyr.levels[k];
        let next = &pyr.levels[k + 1];
        let mut seen = BTreeSet::new();
        while seen.len() < 500 {
            let cell = key(level.point(r.gen_range(0..level.len())));
            if !seen.insert(cell) {
                continue;
            }
            let mut members: Vec<usize> = (0..level.len()).filter(|&i| key(level.point(i)) == cell).collect();
            members.sort_by(|&a, &b| level.point(a).z.total_cmp(&level.point(b).z).then(a.cmp(&b)));
            let expected = members[(members.len() - 1) / 2];
            let reps: Vec<usize> = (0..next.len()).filter(|&j| key(next.point(j)) == cell).collect();
            if reps.len() != 1 || pyr.representatives[k][reps[0]] != expected {
                wrong += 1;
            }
            cells += 1;
        }
    }
    if unreal > 0 {
        problems.push(format!("{unreal} coarse points not found one level down"));
    }
    if wrong > 0 {
        problems.push(format!("{wrong} cells with the wrong representative"));
    }
    let detail = if problems.is_empty() {
        format!("3 levels, grids 0.5/1.0 m, every coarse point real, {cells} cells match the brute-force median")
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty() && cells >= 1000, detail)
}

fn curved_fitting() -> Outcome {
    let (mut spheres, mut cylinders) = (0, 0);
    for s in 0..50u64 {
        let mut r = rng(700 + s);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let cfg = RansacConfig {
            rng_seed: s,
            ..RansacConfig::default()
        };

        let c = Vector3::new(0.0, 0.0, 10.0);
        let mut pts = Vec::new();
        while pts.len() < 1200 {
            let (x, y): (f64, f64) = (r.gen_range(-8.0..8.0), r.gen_range(-8.0..8.0));
            if x * x + y * y >= 64.0 {
                continue;
            }
            let q = Vector3::new(x, y, c.z + (64.0 - x * x - y * y).sqrt());
            let q = q + (q - c).normalize() * noise.sample(&mut r);
            pts.push(Point::xyz(q.x, q.y, q.z));
        }
        let fit = ransac_sphere(&PointCloud::new(pts), &cfg).unwrap();
        if let Shape::Sphere { center, radius } = fit.primitive.shape {
            spheres += ((radius - 8.0).abs() <= 0.02 * 8.0 && (center - c).norm() <= 0.1) as usize;
        }

        let pts: Vec<Point> = (0..1500)
            .map(|_| {
                let (x, y): (f64, f64) = (r.gen_range(0.0..20.0), r.gen_range(-6.0..6.0));
                let q = Vector3::new(x, y, 4.0 + (36.0 - y * y).sqrt());
                let radial = Vector3::new(0.0, q.y, q.z - 4.0).normalize();
                let q = q + radial * noise.sample(&mut r);
                Point::xyz(q.x, q.y, q.z)
            })
            .collect();
        let cloud = estimate_normals(&PointCloud::new(pts), 16).unwrap();
        let fit = ransac_cylinder(&cloud, &cfg).unwrap();
        if let Shape::Cylinder {
            axis_point,
            axis_dir,
            radius,
        } = fit.primitive.shape
        {
            let angle = axis_dir.x.abs().min(1.0).acos().to_degrees();
            // the stored axis point is the one nearest the origin, so its
            // offset from the true axis is its (y, z - 4) part
            let offset = axis_point.y.hypot(axis_point.z - 4.0);
            cylinders += ((radius - 6.0).abs() <= 0.02 * 6.0 && angle <= 2.0 && offset <= 0.1) as usize;
        }
    }
    outcome(
        spheres >= 48 && cylinders >= 48,
        format!("hemisphere {spheres}/50, half-cylinder {cylinders}/50"),
    )
}

fn oracle_scores(tp: usize, fp: usize, fn_: usize) -> Scores {
    if tp + fp + fn_ == 0 {
        return Scores {
            comp: 1.0,
            corr: 1.0,
            iou: 1.0,
        };
    }
    let frac = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    Scores {
        comp: frac(tp, tp + fn_),
        corr: frac(tp, tp + fp),
        iou: frac(tp, tp + fp + fn_),
    }
}

fn grid(w: usize, h: usize, values: Vec<f64>) -> RasterGrid {
    let mut g = RasterGrid::new(0.0, 0.0, 1.0, w, h, 0.0).unwrap();
    g.values = values;
    g
}

fn metrics_oracle() -> Outcome {
    let mut r = rng(8);
    let tol = 1.0;
    let mut mismatches = 0;
    for _ in 0..100 {
        let (w, h) = (r.gen_range(1..40), r.gen_range(1..40));
        let n = w * h;
        let (pp, pt) = (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0));
        let mut mask = |p: f64| -> Vec<f64> {
            (0..n)
                .map(|_| match r.gen_range(0..20) {
                    0 => -9999.0,
                    _ if r.gen_bool(p) => 1.0,
                    _ => 0.0,
                })
                .collect()
        };
        let (pm, tm) = (mask(pp), mask(pt));
        // half-meter heights put some differences exactly on the tolerance
        let mut dsm = || -> Vec<f64> {
            (0..n)
                .map(|_| if r.gen_range(0..25) == 0 { -9999.0 } else { r.gen_range(0..12) as f64 * 0.5 })
                .collect()
        };
        let (pd, td) = (dsm(), dsm());
        let (mut tp2, mut fp2, mut fn2, mut tp3) = (0, 0, 0, 0);
        for i in 0..n {
            let (p, t) = (pm[i] == 1.0, tm[i] == 1.0);
            match (p, t) {
                (true, true) => tp2 += 1,
                (true, false) => fp2 += 1,
                (false, true) => fn2 += 1,
                _ => {}
            }
            if p && t && pd[i] != -9999.0 && td[i] != -9999.0 && (pd[i] - td[i]).abs() <= tol {
                tp3 += 1;
            }
        }
        let np = tp2 + fp2;
        let nt = tp2 + fn2;
        let (gpm, gtm, gpd, gtd) = (grid(w, h, pm), grid(w, h, tm), grid(w, h, pd), grid(w, h, td));
        let s2 = score2d(&gpm, &gtm).unwrap();
        let s3 = score3d(&gpm, &gpd, &gtm, &gtd, tol).unwrap();
        if s2 != oracle_scores(tp2, fp2, fn2) || s3 != oracle_scores(tp3, np - tp3, nt - tp3) {
            mismatches += 1;
        }
    }

    let ones = |f: &dyn Fn(usize) -> bool| grid(10, 10, (0..100).map(|i| if f(i) { 1.0 } else { 0.0 }).collect());
    let left = ones(&|i| i % 10 < 5);
    let right = ones(&|i| i % 10 >= 5);
    let half_of_left = ones(&|i| i % 10 < 5 && i / 10 < 5);
    let s = |comp, corr, iou| Scores { comp, corr, iou };
    let trivial = [
        score2d(&left, &left).unwrap() == s(1.0, 1.0, 1.0),
        score2d(&right, &left).unwrap() == s(0.0, 0.0, 0.0),
        score2d(&half_of_left, &left).unwrap() == s(0.5, 1.0, 0.5),
    ];
    let dsm = grid(10, 10, vec![6.0; 100]);
    let off = grid(10, 10, vec![6.0 + 2.0 * tol; 100]);
    let trivial3 = [
        score3d(&left, &dsm, &left, &dsm, tol).unwrap() == s(1.0, 1.0, 1.0),
        score3d(&left, &off, &left, &dsm, tol).unwrap() == s(0.0, 0.0, 0.0),
    ];
    let closed = trivial.iter().chain(&trivial3).filter(|&&b| b).count();
    outcome(
        mismatches == 0 && closed == 5,
        format!("{} of 100 random pairs match the cell count, {closed}/5 closed-form cases hold", 100 - mismatches),
    )
}

fn tree_hashes(root: &Path) -> BTreeMap<PathBuf, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != MANIFEST_NAME) {
                let key = p.strip_prefix(root).unwrap().to_path_buf();
                out.insert(key, sha256_hex(&std::fs::read(&p).unwrap()));
            }
        }
    }
    out
}

fn rooffit(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rooffit"))
        .args(args)
        .output()
        .expect("binary runs");
    (out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn village_end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let (ok, err) = rooffit(&["synth-scene", "--seed", "0", "--out", &s(dir)]);
    if !ok {
        return outcome(false, format!("synth-scene failed: {err}"));
    }
    let cfg = s(&dir.join("rooffit.cfg"));
    let mut slowest = Duration::ZERO;
    for jobs in ["1", "8"] {
        let start = Instant::now();
        let (ok, err) = rooffit(&["run", "--config", &cfg, "--jobs", jobs, "--out", &s(&dir.join(format!("run{jobs}")))]);
        slowest = slowest.max(start.elapsed());
        if !ok {
            return outcome(false, format!("run --jobs {jobs} failed: {err}"));
        }
    }
    let report_path = dir.join("run1/report.txt");
    let report = EvalReport::parse(&std::fs::read_to_string(&report_path).unwrap(), &report_path).unwrap();
    let same = tree_hashes(&dir.join("run1")) == tree_hashes(&dir.join("run8"));
    let secs = slowest.as_secs_f64();
    outcome(
        report.d2.iou >= 0.90 && report.d3.iou >= 0.85 && same && secs < 300.0,
        format!(
            "iou2d {:.3}, iou3d {:.3}, jobs 1 and 8 {}, slowest run {secs:.1} s",
            report.d2.iou,
            report.d3.iou,
            if same { "identical" } else { "DIFFER" }
        ),
    )
}

fn geometric_fallback() -> Outcome {
    let settings = Settings::new();
    let (mut hits, mut total) = (0, 0);
    let mut per_class = [[0usize; 2]; 4];
    for seed in 0..3 {
        let v = generate_village(&VillageConfig {
            noise: 0.0,
            hole_fraction: 0.0,
            seed,
            ..Default::default()
        })
        .unwrap();
        for (id, b) in v.buildings.iter().enumerate() {
            let idx: Vec<usize> = (0..v.cloud.len())
                .filter(|&i| v.roof_labels[i].is_some() && b.contains(v.cloud.point(i).x, v.cloud.point(i).y))
                .collect();
            let truth: Vec<ShapeLabel> = idx.iter().map(|&i| v.roof_labels[i].unwrap()).collect();
            let cluster = BuildingCluster::from_cloud(id, v.cloud.select(&idx)).unwrap();
            let labeled = rooffit_cli::pipeline::segment(&cluster, settings.normals_k, &settings.fallback).unwrap();
            for (t, l) in truth.iter().zip(labeled.cloud.labels().unwrap()) {
                let c = t.code() as usize;
                per_class[c][1] += 1;
                if t == l {
                    per_class[c][0] += 1;
                    hits += 1;
                }
                total += 1;
            }
        }
    }
    let acc = hits as f64 / total as f64;
    let classes: Vec<String> = ShapeLabel::ALL
        .iter()
        .zip(per_class)
        .map(|(l, [h, n])| format!("{} {:.3}", l.name(), h as f64 / n.max(1) as f64))
        .collect();
    outcome(acc >= 0.85, format!("accuracy {acc:.3} over {total} points ({})", classes.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("bend identity", bend_identity),
        ("weight closed forms", weight_closed_forms),
        ("conventional RANSAC limit", conventional_limit),
        ("plane recovery", plane_recovery),
        ("hierarchical vs single-level", hierarchical_vs_flat),
        ("pyramid contract", pyramid_contract),
        ("curved fitting", curved_fitting),
        ("metrics oracle", metrics_oracle),
        ("synthetic village end to end", village_end_to_end),
        ("geometric fallback", geometric_fallback),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {} [{:.1} s]", result.detail, start.elapsed().as_secs_f64());
        failed += !result.pass as usize;
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
