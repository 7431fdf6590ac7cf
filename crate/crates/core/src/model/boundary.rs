use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::geom::{cross, is_simple, line_intersection, signed_area, simplify_ring, Vec2};
use crate::point::Point;
use crate::preprocess::triangulate_xy;

/// Edges within this angle of the dominant directions are snapped.
pub const SNAP_ANGLE_DEG: f64 = 15.0;

fn circumradius(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    let ab = (b - a).norm();
    let bc = (c - b).norm();
    let ca = (a - c).norm();
    let area2 = cross(&(b - a), &(c - a)).abs();
    if area2 == 0.0 {
        return f64::INFINITY;
    }
    ab * bc * ca / (2.0 * area2)
}

/// Outer boundary of the alpha shape: Delaunay triangles with circumradius
/// at most `alpha`, largest counter-clockwise loop of their boundary edges.
pub fn alpha_shape(points: &[Vec2], alpha: f64) -> Result<Vec<Vec2>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must be positive")));
    }
    let mut uniq: Vec<Vec2> = Vec::with_capacity(points.len());
    let mut seen = HashSet::new();
    for p in points {
        if seen.insert((p.x.to_bits(), p.y.to_bits())) {
            uniq.push(*p);
        }
    }
    let pts: Vec<Point> = uniq.iter().map(|p| Point::xyz(p.x, p.y, 0.0)).collect();
    let tris = triangulate_xy(&pts);
    if tris.is_empty() {
        return Err(Error::Degenerate("fewer than 3 non-collinear points".into()));
    }
    let mut a = alpha;
    for _ in 0..30 {
        if let Some(ring) = outer_loop(&uniq, &tris, a) {
            return Ok(ring);
        }
        a *= 2.0;
    }
    Err(Error::Degenerate("alpha shape has no interior".into()))
}

fn outer_loop(pts: &[Vec2], tris: &[[usize; 3]], alpha: f64) -> Option<Vec<Vec2>> {
    let mut directed: HashSet<(usize, usize)> = HashSet::new();
    for t in tris {
        let [i, j, k] = *t;
        if circumradius(&pts[i], &pts[j], &pts[k]) > alpha {
            continue;
        }
        let (i, j, k) = if cross(&(pts[j] - pts[i]), &(pts[k] - pts[i])) > 0.0 {
            (i, j, k)
        } else {
            (i, k, j)
        };
        directed.insert((i, j));
        directed.insert((j, k));
        directed.insert((k, i));
    }
    let mut out: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut edges: Vec<(usize, usize)> = directed
        .iter()
        .copied()
        .filter(|&(a, b)| !directed.contains(&(b, a)))
        .collect();
    edges.sort_unstable();
    for &(a, b) in &edges {
        out.entry(a).or_default().push(b);
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    for &(start, first) in &edges {
        if used.contains(&(start, first)) {
            continue;
        }
        let mut ring = vec![start];
        let (mut prev, mut cur) = (start, first);
        used.insert((start, first));
        let mut guard = 0;
        while cur != start && guard <= edges.len() {
            guard += 1;
            ring.push(cur);
            let back = pts[prev] - pts[cur];
            let base = back.y.atan2(back.x);
            let ang = |n: usize| {
                let d = pts[n] - pts[cur];
                (d.y.atan2(d.x) - base).rem_euclid(std::f64::consts::TAU)
            };
            // the largest turn keeps to the loop we arrived on at pinch points
            let Some(next) = out
                .get(&cur)
                .into_iter()
                .flatten()
                .copied()
                .filter(|&n| !used.contains(&(cur, n)))
                .max_by(|&a, &b| ang(a).total_cmp(&ang(b)).then(b.cmp(&a)))
            else {
                break;
            };
            used.insert((cur, next));
            prev = cur;
            cur = next;
        }
        if cur != start {
            continue;
        }
        let poly: Vec<Vec2> = ring.iter().map(|&i| pts[i]).collect();
        let area = signed_area(&poly);
        if area > 0.0 && best.as_ref().is_none_or(|(a, _)| area > *a) {
            best = Some((area, ring));
        }
    }
    best.map(|(_, r)| r.into_iter().map(|i| pts[i]).collect())
}

/// Traces the outer boundary of `points` (alpha shape, simplified at
/// `alpha / 2`) and snaps it to its dominant orthogonal directions. Corner
/// chamfers shorter than `2 * alpha` are cut away.
pub fn trace_boundary(points: &[Vec2], alpha: f64) -> Result<Vec<Vec2>> {
    trace_boundary_with(points, alpha, true)
}

/// Alpha shape, simplified and optionally regularized. A shape that pinches
/// into a non-simple ring is retraced with a larger alpha.
pub fn trace_boundary_with(points: &[Vec2], alpha: f64, regularize_edges: bool) -> Result<Vec<Vec2>> {
    let mut last = Err(Error::Degenerate("boundary is not a simple ring".into()));
    for grow in [1.0, 1.5, 2.0, 3.0] {
        let a = alpha * grow;
        let raw = match alpha_shape(points, a) {
            Ok(r) => r,
            Err(e) => {
                last = Err(e);
                continue;
            }
        };
        let mut ring = simplify_ring(&raw, a / 2.0);
        if !is_simple(&ring) {
            ring = raw;
        }
        if !is_simple(&ring) {
            continue;
        }
        if regularize_edges && ring.len() > 3 {
            ring = regularize(&ring, SNAP_ANGLE_DEG, 2.0 * a);
        }
        return Ok(ring);
    }
    last
}

#[derive(Debug, Clone, Copy)]
struct Line {
    point: Vec2,
    dir: Vec2,
    /// Dominant direction class (0 or 1) when snapped.
    class: Option<u8>,
    length: f64,
}

fn dir_of(theta: f64) -> Vec2 {
    Vec2::new(theta.cos(), theta.sin())
}

/// Rotates edges lying within `max_angle_deg` of the ring's dominant
/// direction (or its perpendicular) onto it, merges collinear neighbours and
/// drops short unsnapped edges between snapped ones. The input is returned
/// unchanged if the result would not be a simple polygon.
pub fn regularize(ring: &[Vec2], max_angle_deg: f64, min_edge: f64) -> Vec<Vec2> {
    let n = ring.len();
    let mut s = 0.0;
    let mut c = 0.0;
    let mut lines: Vec<Line> = Vec::with_capacity(n);
    for i in 0..n {
        let d = ring[(i + 1) % n] - ring[i];
        let l = d.norm();
        let a = d.y.atan2(d.x);
        s += l * (4.0 * a).sin();
        c += l * (4.0 * a).cos();
        lines.push(Line {
            point: (ring[i] + ring[(i + 1) % n]) * 0.5,
            dir: if l > 0.0 { d / l } else { Vec2::x() },
            class: None,
            length: l,
        });
    }
    let theta0 = s.atan2(c) / 4.0;
    let tol = max_angle_deg.to_radians();
    for line in &mut lines {
        let a = line.dir.y.atan2(line.dir.x);
        let quarter = std::f64::consts::FRAC_PI_2;
        let k = ((a - theta0) / quarter).round();
        if ((a - theta0) - k * quarter).abs() <= tol {
            let snapped = dir_of(theta0 + k * quarter);
            line.dir = snapped;
            line.class = Some((k as i64).rem_euclid(2) as u8);
        }
    }

    let merge = |a: &Line, b: &Line| -> Line {
        let w = a.length + b.length;
        let normal = Vec2::new(-a.dir.y, a.dir.x);
        let off = (a.length * a.point.dot(&normal) + b.length * b.point.dot(&normal)) / w.max(1e-300);
        let along = b.point.dot(&a.dir);
        Line {
            point: normal * off + a.dir * along,
            dir: a.dir,
            class: a.class,
            length: w,
        }
    };
    let same_class = |a: &Line, b: &Line| a.class.is_some() && a.class == b.class && a.dir.dot(&b.dir) > 0.0;
    loop {
        let m = lines.len();
        if m <= 3 {
            break;
        }
        let mut changed = false;
        for i in 0..m {
            let j = (i + 1) % m;
            if same_class(&lines[i], &lines[j]) {
                let merged = merge(&lines[i], &lines[j]);
                lines[i] = merged;
                lines.remove(j);
                changed = true;
                break;
            }
        }
        if changed {
            continue;
        }
        for i in 0..m {
            let prev = (i + m - 1) % m;
            let next = (i + 1) % m;
            let l = &lines[i];
            if l.class.is_none()
                && l.length < min_edge
                && lines[prev].class.is_some()
                && lines[next].class.is_some()
            {
                lines.remove(i);
                changed = true;
                break;
            }
        }
        if !changed {
            break;
        }
    }
    let m = lines.len();
    if m < 3 {
        return ring.to_vec();
    }
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let a = &lines[(i + m - 1) % m];
        let b = &lines[i];
        let v = match line_intersection(&a.point, &a.dir, &b.point, &b.dir) {
            Some(v) if cross(&a.dir, &b.dir).abs() > 1e-6 => v,
            _ => (a.point + a.dir * (a.length * 0.5) + b.point - b.dir * (b.length * 0.5)) * 0.5,
        };
        out.push(v);
    }
    let max_shift = 2.0 * min_edge.max(1e-9) + 1.0;
    let near = out
        .iter()
        .all(|v| crate::geom::distance_to_ring(v, ring) <= max_shift);
    if is_simple(&out) && signed_area(&out) > 0.0 && near {
        out
    } else {
        ring.to_vec()
    }
}

/// Moves every edge of a CCW ring outward by `d` and re-joins neighbouring
/// edges at their intersection. Returns the input when the result would not
/// be a simple CCW ring.
pub fn offset_ring(ring: &[Vec2], d: f64) -> Vec<Vec2> {
    let n = ring.len();
    if n < 3 || d == 0.0 {
        return ring.to_vec();
    }
    let edges: Vec<(Vec2, Vec2)> = (0..n)
        .map(|k| {
            let e = ring[(k + 1) % n] - ring[k];
            let len = e.norm().max(1e-300);
            let out = Vec2::new(e.y, -e.x) / len;
            (ring[k] + out * d, e / len)
        })
        .collect();
    let out: Vec<Vec2> = (0..n)
        .map(|k| {
            let (p, u) = edges[(k + n - 1) % n];
            let (q, v) = edges[k];
            match line_intersection(&p, &u, &q, &v) {
                // nearly straight corners would shoot far away
                Some(x) if cross(&u, &v).abs() > 0.05 || (x - ring[k]).norm() <= 2.0 * d.abs() => x,
                _ => ring[k] + (Vec2::new(u.y, -u.x) + Vec2::new(v.y, -v.x)).normalize() * d,
            }
        })
        .collect();
    let limit = 4.0 * d.abs();
    let bounded = out.iter().zip(ring).all(|(a, b)| (a - b).norm() <= limit);
    if bounded && is_simple(&out) && signed_area(&out) > 0.0 {
        out
    } else {
        ring.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_in(f: impl Fn(&Vec2) -> bool, bounds: [f64; 4], n: usize, seed: u64) -> Vec<Vec2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vec::new();
        while v.len() < n {
            let p = Vec2::new(rng.gen_range(bounds[0]..bounds[2]), rng.gen_range(bounds[1]..bounds[3]));
            if f(&p) {
                v.push(p);
            }
        }
        v
    }

    fn matches_corners(ring: &[Vec2], truth: &[Vec2], tol: f64) {
        assert_eq!(ring.len(), truth.len(), "{ring:?}");
        for t in truth {
            let d = ring.iter().map(|v| (v - t).norm()).fold(f64::INFINITY, f64::min);
            assert!(d <= tol, "corner {t} off by {d}: {ring:?}");
        }
    }

    #[test]
    fn dense_square() {
        let pts = random_in(|_| true, [0.0, 0.0, 10.0, 10.0], 1200, 1);
        let ring = trace_boundary(&pts, 1.0).unwrap();
        let truth = [
            Vec2::new(0.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(10.0, 10.0),
            Vec2::new(0.0, 10.0),
        ];
        matches_corners(&ring, &truth, 0.5);
        assert!(signed_area(&ring) > 0.0);
        for i in 0..4 {
            let a = ring[(i + 3) % 4] - ring[i];
            let b = ring[(i + 1) % 4] - ring[i];
            assert!(a.dot(&b).abs() < 1e-9 * a.norm() * b.norm());
        }
    }

    #[test]
    fn l_shape() {
        let inside = |p: &Vec2| p.x < 4.0 || p.y < 4.0;
        let pts = random_in(inside, [0.0, 0.0, 10.0, 10.0], 1500, 2);
        let ring = trace_boundary(&pts, 1.0).unwrap();
        let truth = [
            Vec2::new(0.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(10.0, 4.0),
            Vec2::new(4.0, 4.0),
            Vec2::new(4.0, 10.0),
            Vec2::new(0.0, 10.0),
        ];
        matches_corners(&ring, &truth, 0.5);
    }

    #[test]
    fn offset_grows_a_square() {
        let sq = [Vec2::new(0.0, 0.0), Vec2::new(4.0, 0.0), Vec2::new(4.0, 4.0), Vec2::new(0.0, 4.0)];
        let big = offset_ring(&sq, 0.5);
        let expect = [Vec2::new(-0.5, -0.5), Vec2::new(4.5, -0.5), Vec2::new(4.5, 4.5), Vec2::new(-0.5, 4.5)];
        for (a, b) in big.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
        assert!((signed_area(&offset_ring(&sq, -1.0)) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn three_points() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(5.0, 0.0), Vec2::new(0.0, 3.0)];
        let ring = trace_boundary(&pts, 1.0).unwrap();
        assert_eq!(ring.len(), 3);
        for p in &pts {
            assert!(ring.contains(p));
        }
    }

    #[test]
    fn collinear_points_fail() {
        let pts: Vec<Vec2> = (0..10).map(|i| Vec2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(trace_boundary(&pts, 1.0).is_err());
        assert!(trace_boundary(&pts[..2], 1.0).is_err());
    }

    #[test]
    fn rotated_rectangle_keeps_orientation() {
        let t = 0.4f64;
        let (c, s) = (t.cos(), t.sin());
        let pts: Vec<Vec2> = random_in(|_| true, [0.0, 0.0, 12.0, 6.0], 1000, 3)
            .into_iter()
            .map(|p| Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y))
            .collect();
        let ring = trace_boundary(&pts, 1.0).unwrap();
        assert_eq!(ring.len(), 4);
        let e = ring[1] - ring[0];
        let ang = (e.y.atan2(e.x) - t).rem_euclid(std::f64::consts::FRAC_PI_2);
        let ang = ang.min(std::f64::consts::FRAC_PI_2 - ang);
        assert!(ang < 2f64.to_radians(), "{ang}");
    }
}
