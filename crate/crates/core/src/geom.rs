//! Planar polygon helpers over `Vector2<f64>` rings (closing vertex implied).

use nalgebra::Vector2;

pub type Vec2 = Vector2<f64>;

pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Shoelace area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Vec2]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        s += cross(&ring[i], &ring[(i + 1) % n]);
    }
    0.5 * s
}

pub fn ensure_ccw(ring: &mut [Vec2]) {
    if signed_area(ring) < 0.0 {
        ring.reverse();
    }
}

/// Even-odd containment test; points on the boundary may go either way.
pub fn point_in_polygon(p: &Vec2, ring: &[Vec2]) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (&ring[i], &ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn point_segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to the boundary of `ring`.
pub fn distance_to_ring(p: &Vec2, ring: &[Vec2]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| point_segment_distance(p, &ring[i], &ring[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

fn orient(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    cross(&(b - a), &(c - a))
}

fn on_segment(a: &Vec2, b: &Vec2, p: &Vec2) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

pub fn segments_intersect(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// True if no two non-adjacent edges touch and no vertex repeats.
pub fn is_simple(ring: &[Vec2]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        if (ring[i] - ring[(i + 1) % n]).norm() == 0.0 {
            return false;
        }
    }
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(&a, &b, &c, &d) {
                return false;
            }
        }
    }
    signed_area(ring).abs() > 0.0
}

/// Intersection of the infinite lines `p + t u` and `q + s v`.
pub fn line_intersection(p: &Vec2, u: &Vec2, q: &Vec2, v: &Vec2) -> Option<Vec2> {
    let den = cross(u, v);
    if den.abs() < 1e-12 * u.norm() * v.norm() {
        return None;
    }
    let t = cross(&(q - p), v) / den;
    Some(p + u * t)
}

fn douglas_peucker_open(pts: &[Vec2], tol: f64, keep: &mut [bool], lo: usize, hi: usize) {
    if hi <= lo + 1 {
        return;
    }
    let (a, b) = (pts[lo], pts[hi]);
    let mut best = (lo, -1.0);
    for (i, p) in pts.iter().enumerate().take(hi).skip(lo + 1) {
        let d = point_segment_distance(p, &a, &b);
        if d > best.1 {
            best = (i, d);
        }
    }
    if best.1 > tol {
        keep[best.0] = true;
        douglas_peucker_open(pts, tol, keep, lo, best.0);
        douglas_peucker_open(pts, tol, keep, best.0, hi);
    }
}

/// Douglas-Peucker on a closed ring. The ring is split at vertex 0 and at
/// the vertex farthest from it, each half simplified independently.
pub fn simplify_ring(ring: &[Vec2], tol: f64) -> Vec<Vec2> {
    let n = ring.len();
    if n <= 3 {
        return ring.to_vec();
    }
    let far = (1..n)
        .max_by(|&a, &b| {
            (ring[a] - ring[0])
                .norm_squared()
                .total_cmp(&(ring[b] - ring[0]).norm_squared())
        })
        .unwrap();
    let mut closed: Vec<Vec2> = ring.to_vec();
    closed.push(ring[0]);
    let mut keep = vec![false; n + 1];
    keep[0] = true;
    keep[far] = true;
    keep[n] = true;
    douglas_peucker_open(&closed, tol, &mut keep, 0, far);
    douglas_peucker_open(&closed, tol, &mut keep, far, n);
    let mut out: Vec<Vec2> = (0..n).filter(|&i| keep[i]).map(|i| ring[i]).collect();
    // vertex 0 is an arbitrary split point; drop it if it is redundant
    if out.len() > 3 {
        let m = out.len();
        if point_segment_distance(&out[0], &out[m - 1], &out[1]) <= tol {
            out.remove(0);
        }
    }
    out
}
