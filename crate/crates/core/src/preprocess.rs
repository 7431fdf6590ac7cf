//! Cloud cleaning and terrain extraction.
//!
//! Smoothing projects each point onto a locally fitted plane and then
//! median-filters the projected heights. Hole filling triangulates the
//! (x, y) projection and seeds large triangles with grid points. The
//! terrain model is a progressive morphological ground filter over a
//! minimum-height grid.

use std::collections::{HashSet, VecDeque};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::normals::{fit_normal, local_plane};
use crate::point::{Point, PointCloud, ShapeLabel};
use crate::raster::{RasterGrid, DEFAULT_NODATA};
use crate::stats::median;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub smoothing_radius: f64,
    /// Project onto the best-fitting plane among the neighbours'
    /// neighbourhoods instead of the point's own, so creases stay sharp.
    pub preserve_creases: bool,
    pub median_grid_size: f64,
    pub hole_area_threshold: f64,
    pub fill_grid_spacing: f64,
    /// Triangles with an edge longer than this are not filled; they span
    /// concave notches of the footprint rather than voids.
    pub hole_max_edge: f64,
    pub dtm_resolution: f64,
    /// Largest opening window, meters.
    pub dtm_max_window: f64,
    /// Terrain slope tolerated by the ground test, rise over run.
    pub dtm_slope: f64,
    pub dtm_initial_height: f64,
    pub dtm_max_height: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            smoothing_radius: 1.5,
            preserve_creases: true,
            median_grid_size: 0.5,
            hole_area_threshold: 1.0,
            fill_grid_spacing: 0.5,
            hole_max_edge: 6.0,
            dtm_resolution: 1.0,
            dtm_max_window: 40.0,
            dtm_slope: 0.3,
            dtm_initial_height: 0.3,
            dtm_max_height: 2.5,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("smoothing_radius", self.smoothing_radius),
            ("median_grid_size", self.median_grid_size),
            ("hole_area_threshold", self.hole_area_threshold),
            ("fill_grid_spacing", self.fill_grid_spacing),
            ("hole_max_edge", self.hole_max_edge),
            ("dtm_resolution", self.dtm_resolution),
            ("dtm_max_window", self.dtm_max_window),
            ("dtm_slope", self.dtm_slope),
            ("dtm_initial_height", self.dtm_initial_height),
            ("dtm_max_height", self.dtm_max_height),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Moving-least-squares plane projection followed by a median filter of z.
/// With `preserve_creases`, each point goes onto whichever neighbour's plane
/// fits it and its own neighbourhood best, which keeps ridges from being
/// rounded off. Only z changes; points with fewer than three neighbors stay
/// as they are.
pub fn smooth(cloud: &PointCloud, cfg: &PreprocessConfig) -> Result<PointCloud> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(Error::TooFewPoints { required: 1, actual: 0 });
    }
    let index = cloud.index();
    let pts = cloud.points();
    let neighborhoods: Vec<Vec<usize>> = map_indices(pts.len(), |i| {
        index.within(&pts[i].pos(), cfg.smoothing_radius)
    });

    let planes: Vec<Option<(Vector3<f64>, Vector3<f64>, f64)>> = map_indices(pts.len(), |i| {
        let nb = &neighborhoods[i];
        if nb.len() < 3 {
            return None;
        }
        let local: Vec<Vector3<f64>> = nb.iter().map(|&j| pts[j].pos()).collect();
        local_plane(&local).filter(|(_, n, _)| n.z.abs() >= 0.2)
    });
    let projected: Vec<Option<f64>> = map_indices(pts.len(), |i| {
        let p = pts[i].pos();
        let fit = |j: usize| planes[j].map(|(c, n, r)| (r + n.dot(&(p - c)).powi(2), c, n));
        let candidates: &[usize] = if cfg.preserve_creases {
            &neighborhoods[i]
        } else {
            std::slice::from_ref(&i)
        };
        let (_, c, n) = candidates
            .iter()
            .filter_map(|&j| fit(j))
            .min_by(|a, b| a.0.total_cmp(&b.0))?;
        Some(c.z - (n.x * (p.x - c.x) + n.y * (p.y - c.y)) / n.z)
    });

    let r2 = cfg.median_grid_size * cfg.median_grid_size;
    let out: Vec<Point> = map_indices(pts.len(), |i| {
        let p = pts[i];
        if projected[i].is_none() {
            return p;
        }
        let mut zs: Vec<f64> = neighborhoods[i]
            .iter()
            .filter(|&&j| {
                let dx = pts[j].x - p.x;
                let dy = pts[j].y - p.y;
                dx * dx + dy * dy <= r2
            })
            .filter_map(|&j| projected[j])
            .collect();
        let z = if zs.is_empty() { projected[i].unwrap() } else { median(&mut zs) };
        Point { z, ..p }
    });
    cloud.with_points(out)
}

#[derive(Clone, Copy)]
struct Vertex {
    pos: Point2<f64>,
    idx: usize,
}

impl HasPosition for Vertex {
    type Scalar = f64;
    fn position(&self) -> Point2<f64> {
        self.pos
    }
}

/// Delaunay triangles over the (x, y) projection, as point-index triples.
pub fn triangulate_xy(points: &[Point]) -> Vec<[usize; 3]> {
    let vertices: Vec<Vertex> = points
        .iter()
        .enumerate()
        .map(|(idx, p)| Vertex {
            pos: Point2::new(p.x, p.y),
            idx,
        })
        .collect();
    let Ok(tri) = DelaunayTriangulation::<Vertex>::bulk_load_stable(vertices) else {
        return Vec::new();
    };
    tri.inner_faces()
        .map(|f| {
            let [a, b, c] = f.vertices();
            [a.data().idx, b.data().idx, c.data().idx]
        })
        .collect()
}

fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs()
}

/// Seeds triangles larger than the area threshold with points on a fixed
/// grid, heights and colors interpolated from the triangle. Inserted points
/// carry the synthetic flag.
pub fn fill_holes(cloud: &PointCloud, cfg: &PreprocessConfig) -> Result<PointCloud> {
    cfg.validate()?;
    if cloud.len() < 3 {
        return Ok(cloud.clone());
    }
    let pts = cloud.points();
    let triangles = triangulate_xy(pts);
    let s = cfg.fill_grid_spacing;
    let mut seen: HashSet<(i64, i64)> = HashSet::new();
    let mut added: Vec<Point> = Vec::new();
    let mut added_labels: Vec<ShapeLabel> = Vec::new();
    let mut added_normals: Vec<Option<Vector3<f64>>> = Vec::new();

    for t in &triangles {
        let [a, b, c] = [pts[t[0]], pts[t[1]], pts[t[2]]];
        let area = triangle_area(&a, &b, &c);
        if area <= cfg.hole_area_threshold {
            continue;
        }
        let longest = [(a, b), (b, c), (c, a)]
            .iter()
            .map(|(p, q)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt())
            .fold(0.0, f64::max);
        if longest > cfg.hole_max_edge {
            continue;
        }
        let i0 = (a.x.min(b.x).min(c.x) / s).floor() as i64;
        let i1 = (a.x.max(b.x).max(c.x) / s).ceil() as i64;
        let j0 = (a.y.min(b.y).min(c.y) / s).floor() as i64;
        let j1 = (a.y.max(b.y).max(c.y) / s).ceil() as i64;
        let det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
        let color = (a.color() + b.color() + c.color()) / 3.0;
        let plane_normal = fit_normal(&[a.pos(), b.pos(), c.pos()]);
        let label = cloud.labels().map(|l| majority3(l[t[0]], l[t[1]], l[t[2]]));
        for i in i0..=i1 {
            for j in j0..=j1 {
                let (x, y) = (i as f64 * s, j as f64 * s);
                let w0 = ((b.y - c.y) * (x - c.x) + (c.x - b.x) * (y - c.y)) / det;
                let w1 = ((c.y - a.y) * (x - c.x) + (a.x - c.x) * (y - c.y)) / det;
                let w2 = 1.0 - w0 - w1;
                if w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12 {
                    continue;
                }
                if !seen.insert((i, j)) {
                    continue;
                }
                let z = w0 * a.z + w1 * b.z + w2 * c.z;
                added.push(Point::new(
                    x,
                    y,
                    z,
                    color.x.round() as u8,
                    color.y.round() as u8,
                    color.z.round() as u8,
                ));
                if let Some(l) = label {
                    added_labels.push(l);
                }
                added_normals.push(plane_normal);
            }
        }
    }
    if added.is_empty() {
        return Ok(cloud.clone());
    }
    let n_added = added.len();
    let mut points = pts.to_vec();
    points.extend(added);
    let mut synthetic: Vec<bool> = (0..cloud.len()).map(|i| cloud.is_synthetic(i)).collect();
    synthetic.extend(std::iter::repeat(true).take(n_added));
    let mut out = PointCloud::new(points).with_synthetic(synthetic)?;
    if let Some(labels) = cloud.labels() {
        let mut l = labels.to_vec();
        l.extend(added_labels);
        out = out.with_labels(l)?;
    }
    if let Some(normals) = cloud.normals() {
        let mut n = normals.to_vec();
        n.extend(added_normals);
        out = out.with_normals(n)?;
    }
    Ok(out)
}

fn majority3(a: ShapeLabel, b: ShapeLabel, c: ShapeLabel) -> ShapeLabel {
    if b == c {
        b
    } else {
        a
    }
}

/// Ground-height raster via a progressive morphological filter.
///
/// Per-cell minimum heights are opened with square windows of growing size;
/// cells that drop by more than the slope-scaled threshold are rejected as
/// off-terrain. Rejected and empty cells take the nearest ground value,
/// capped by the cell's own minimum.
pub fn extract_dtm(cloud: &PointCloud, cfg: &PreprocessConfig) -> Result<RasterGrid> {
    cfg.validate()?;
    let bounds = cloud
        .bounds_2d()
        .ok_or(Error::TooFewPoints { required: 1, actual: 0 })?;
    let res = cfg.dtm_resolution;
    let mut minz = RasterGrid::covering(bounds, res, DEFAULT_NODATA)?;
    let (w, h) = (minz.width, minz.height);
    let mut occupied = vec![false; w * h];
    for p in cloud.points() {
        if let Some((c, r)) = minz.cell_of(p.x, p.y) {
            let i = minz.idx(c, r);
            if !occupied[i] || p.z < minz.values[i] {
                minz.values[i] = p.z;
                occupied[i] = true;
            }
        }
    }

    let mut surface = nearest_fill(&minz.values, &occupied, w, h);
    let mut ground = occupied.clone();
    let mut prev_window = 1usize;
    let mut k = 1u32;
    loop {
        let window = 2usize.pow(k) + 1; // 3, 5, 9, 17, 33, ...
        if window as f64 * res > cfg.dtm_max_window && k > 1 {
            break;
        }
        let threshold = (cfg.dtm_initial_height
            + cfg.dtm_slope * (window - prev_window) as f64 * res)
            .min(cfg.dtm_max_height);
        let opened = opening(&surface, w, h, window / 2);
        for i in 0..w * h {
            if surface[i] - opened[i] > threshold {
                ground[i] = false;
            }
        }
        surface = opened;
        prev_window = window;
        k += 1;
        if window >= w.max(h) {
            break;
        }
    }

    let mut out = if ground.iter().any(|&g| g) {
        nearest_fill(&minz.values, &ground, w, h)
    } else {
        surface
    };
    for i in 0..w * h {
        if occupied[i] {
            out[i] = out[i].min(minz.values[i]);
        }
    }
    let mut dtm = RasterGrid::like(&minz, DEFAULT_NODATA);
    dtm.values = out;
    Ok(dtm)
}

/// Copies `values` where `known`, filling the rest from the nearest known
/// cell by breadth-first distance over 8-neighborhoods.
fn nearest_fill(values: &[f64], known: &[bool], w: usize, h: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    let mut done = known.to_vec();
    let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| known[i]).collect();
    if queue.is_empty() {
        return out;
    }
    while let Some(i) = queue.pop_front() {
        let (c, r) = ((i % w) as i64, (i / w) as i64);
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                let (nc, nr) = (c + dc, r + dr);
                if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if !done[j] {
                    done[j] = true;
                    out[j] = out[i];
                    queue.push_back(j);
                }
            }
        }
    }
    out
}

fn sliding(values: &[f64], w: usize, h: usize, half: usize, horizontal: bool, take_min: bool) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let pick = |a: f64, b: f64| if take_min { a.min(b) } else { a.max(b) };
    for r in 0..h {
        for c in 0..w {
            let (lo, hi, fixed) = if horizontal {
                (c.saturating_sub(half), (c + half).min(w - 1), r)
            } else {
                (r.saturating_sub(half), (r + half).min(h - 1), c)
            };
            let mut acc = if take_min { f64::INFINITY } else { f64::NEG_INFINITY };
            for t in lo..=hi {
                let v = if horizontal { values[fixed * w + t] } else { values[t * w + fixed] };
                acc = pick(acc, v);
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Grey-scale opening with a square window of half-width `half` cells.
fn opening(values: &[f64], w: usize, h: usize, half: usize) -> Vec<f64> {
    let eroded = sliding(&sliding(values, w, h, half, true, true), w, h, half, false, true);
    sliding(&sliding(&eroded, w, h, half, true, false), w, h, half, false, false)
}

pub(crate) fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::rms;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid_points(nx: usize, ny: usize, step: f64, z: impl Fn(f64, f64) -> f64) -> Vec<Point> {
        let mut v = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                let (x, y) = (i as f64 * step, j as f64 * step);
                v.push(Point::new(x, y, z(x, y), 100, 110, 120));
            }
        }
        v
    }

    #[test]
    fn exact_plane_is_a_fixed_point() {
        let c = PointCloud::new(grid_points(30, 30, 0.4, |_, _| 4.25));
        let s = smooth(&c, &PreprocessConfig::default()).unwrap();
        for (a, b) in c.points().iter().zip(s.points()) {
            assert!((a.z - b.z).abs() < 1e-9);
            assert_eq!((a.x, a.y, a.r, a.g, a.b), (b.x, b.y, b.r, b.g, b.b));
        }
    }

    #[test]
    fn smoothing_reduces_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let pts: Vec<Point> = (0..3000)
            .map(|_| {
                Point::xyz(
                    rng.gen_range(0.0..25.0),
                    rng.gen_range(0.0..25.0),
                    noise.sample(&mut rng),
                )
            })
            .collect();
        let c = PointCloud::new(pts);
        let before = rms(&c.points().iter().map(|p| p.z).collect::<Vec<_>>());
        let s = smooth(&c, &PreprocessConfig::default()).unwrap();
        let after = rms(&s.points().iter().map(|p| p.z).collect::<Vec<_>>());
        assert!(after < before, "{after} !< {before}");
        assert_eq!(s.len(), c.len());
    }

    #[test]
    fn isolated_point_unchanged() {
        let c = PointCloud::new(vec![Point::xyz(1.0, 2.0, 3.0)]);
        let s = smooth(&c, &PreprocessConfig::default()).unwrap();
        assert_eq!(s.points(), c.points());
    }

    #[test]
    fn dense_grid_needs_no_fill() {
        let c = PointCloud::new(grid_points(20, 20, 0.4, |_, _| 3.0));
        let f = fill_holes(&c, &PreprocessConfig::default()).unwrap();
        assert_eq!(f.len(), c.len());
        assert_eq!(f.points(), c.points());
    }

    #[test]
    fn void_in_flat_roof_is_filled_at_roof_height() {
        // roof samples offset from the fill lattice so no node coincides
        let mut pts = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                let (x, y) = (0.25 + i as f64 * 0.5, 0.25 + j as f64 * 0.5);
                let in_void = (8.0..12.0).contains(&x) && (8.0..12.0).contains(&y);
                if !in_void {
                    pts.push(Point::new(x, y, 9.5, 50, 60, 70));
                }
            }
        }
        let c = PointCloud::new(pts);
        let cfg = PreprocessConfig::default();
        let f = fill_holes(&c, &cfg).unwrap();
        let synth: Vec<&Point> = (0..f.len()).filter(|&i| f.is_synthetic(i)).map(|i| f.point(i)).collect();
        assert!(!synth.is_empty());
        for p in &synth {
            assert!((p.z - 9.5).abs() < 1e-6);
            // the void spans (7.75, 12.25) between the surviving samples
            assert!(p.x > 7.75 - 1e-9 && p.x < 12.25 + 1e-9 && p.y > 7.75 - 1e-9 && p.y < 12.25 + 1e-9);
        }
        // independent count: lattice nodes inside some triangle above the threshold
        let tris = triangulate_xy(c.points());
        let mut expected = 0;
        for i in 0..=40 {
            for j in 0..=40 {
                let (x, y) = (i as f64 * 0.5, j as f64 * 0.5);
                let hit = tris.iter().any(|t| {
                    let [a, b, d] = [c.point(t[0]), c.point(t[1]), c.point(t[2])];
                    triangle_area(a, b, d) > cfg.hole_area_threshold && inside(a, b, d, x, y)
                });
                if hit {
                    expected += 1;
                }
            }
        }
        assert_eq!(synth.len(), expected);
        // the 4 m x 4 m void holds 9 x 9 interior lattice nodes
        assert!(expected <= 81 && expected >= 40, "{expected}");
    }

    fn inside(a: &Point, b: &Point, c: &Point, x: f64, y: f64) -> bool {
        let s = |p: &Point, q: &Point| (q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x);
        let (d1, d2, d3) = (s(a, b), s(b, c), s(c, a));
        let neg = d1 < -1e-12 || d2 < -1e-12 || d3 < -1e-12;
        let pos = d1 > 1e-12 || d2 > 1e-12 || d3 > 1e-12;
        !(neg && pos)
    }

    #[test]
    fn single_big_triangle_is_interpolated() {
        let c = PointCloud::new(vec![
            Point::new(0.0, 0.0, 0.0, 0, 0, 0),
            Point::new(4.0, 0.0, 4.0, 90, 90, 90),
            Point::new(0.0, 4.0, 0.0, 180, 180, 180),
        ]);
        let f = fill_holes(&c, &PreprocessConfig::default()).unwrap();
        assert!(f.len() > 3);
        for i in 3..f.len() {
            let p = f.point(i);
            assert!(f.is_synthetic(i));
            assert!((p.z - p.x).abs() < 1e-9, "z = x on this triangle");
            assert_eq!(p.r, 90);
        }
        assert!(!f.is_synthetic(0));
    }

    #[test]
    fn dtm_on_flat_ground() {
        let c = PointCloud::new(grid_points(40, 40, 0.5, |_, _| 10.0));
        let d = extract_dtm(&c, &PreprocessConfig::default()).unwrap();
        assert!(d.values.iter().all(|v| (v - 10.0).abs() < 1e-6));
    }

    #[test]
    fn dtm_under_box_building() {
        let pts = grid_points(120, 120, 0.5, |x, y| {
            if (20.0..40.0).contains(&x) && (20.0..40.0).contains(&y) {
                15.0
            } else {
                0.0
            }
        });
        let d = extract_dtm(&PointCloud::new(pts), &PreprocessConfig::default()).unwrap();
        for r in 0..d.height {
            for c in 0..d.width {
                let (x, y) = d.center(c, r);
                if (20.0..40.0).contains(&x) && (20.0..40.0).contains(&y) {
                    assert!(d.get(c, r).abs() < 0.5, "({x},{y}) = {}", d.get(c, r));
                }
            }
        }
    }

    #[test]
    fn dtm_on_sloped_ground() {
        let grade = 5f64.to_radians().tan();
        let pts = grid_points(120, 100, 0.5, |x, _| grade * x);
        let d = extract_dtm(&PointCloud::new(pts), &PreprocessConfig::default()).unwrap();
        for r in 0..d.height {
            for c in 0..d.width {
                let (x, _) = d.center(c, r);
                assert!((d.get(c, r) - grade * x).abs() < 0.2);
            }
        }
    }

    #[test]
    fn dtm_is_a_lower_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point> = (0..4000)
            .map(|_| {
                let (x, y) = (rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0));
                let z = if x > 15.0 && x < 25.0 { 8.0 } else { 0.0 } + rng.gen_range(-0.2..0.2);
                Point::xyz(x, y, z)
            })
            .collect();
        let c = PointCloud::new(pts);
        let d = extract_dtm(&c, &PreprocessConfig::default()).unwrap();
        let mut cellmin = vec![f64::INFINITY; d.len()];
        for p in c.points() {
            let (cc, rr) = d.cell_of(p.x, p.y).unwrap();
            let i = d.idx(cc, rr);
            cellmin[i] = cellmin[i].min(p.z);
        }
        for i in 0..d.len() {
            assert!(d.values[i] <= cellmin[i] + 1e-6);
        }
    }

    #[test]
    fn empty_cloud_is_an_error() {
        assert!(extract_dtm(&PointCloud::new(vec![]), &PreprocessConfig::default()).is_err());
    }
}
