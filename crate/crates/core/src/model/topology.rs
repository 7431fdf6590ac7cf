use nalgebra::Vector3;

use super::RoofSegment;
use crate::geom::{is_simple, line_intersection, Vec2};
use crate::index::GridIndex;
use crate::primitive::Shape;

/// Planes closer than this in orientation are treated as parallel, degrees.
const PARALLEL_DEG: f64 = 3.0;

/// A ground-plane line where two roof planes have the same height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crease {
    pub point: Vec2,
    pub dir: Vec2,
}

impl Crease {
    fn distance(&self, p: &Vec2) -> f64 {
        let d = p - self.point;
        (d.x * self.dir.y - d.y * self.dir.x).abs()
    }

    fn project(&self, p: &Vec2) -> Vec2 {
        self.point + self.dir * (p - self.point).dot(&self.dir)
    }
}

fn plane_of(seg: &RoofSegment) -> Option<(Vector3<f64>, f64)> {
    match seg.primitive.shape {
        Shape::Plane { normal, offset } if normal.z.abs() > 1e-6 => Some((normal, offset)),
        _ => None,
    }
}

/// Ground projection of the intersection of two non-vertical planes.
pub fn crease_between(a: (Vector3<f64>, f64), b: (Vector3<f64>, f64)) -> Option<Crease> {
    let (na, da) = a;
    let (nb, db) = b;
    let ga = Vec2::new(na.x / na.z, na.y / na.z);
    let gb = Vec2::new(nb.x / nb.z, nb.y / nb.z);
    let g = ga - gb;
    let c = da / na.z - db / nb.z;
    let len2 = g.norm_squared();
    if len2 < 1e-12 {
        return None;
    }
    Some(Crease {
        point: g * (c / len2),
        dir: Vec2::new(-g.y, g.x) / len2.sqrt(),
    })
}

fn near(a: &[Vector3<f64>], b: &GridIndex, gap: f64) -> bool {
    a.iter().any(|p| !b.within(p, gap).is_empty())
}

/// For every pair of adjacent, non-parallel planar roofs, moves boundary
/// vertices lying within `snap` of the planes' crease line onto it (onto the
/// meeting point of two creases where a vertex is near both) and marks
/// edges running along a crease as shared. Coplanar adjacent pairs are
/// recorded in `merge_with` and left untouched. Boundaries that would stop
/// being simple are kept as traced.
pub fn intersect_adjacent(roofs: &mut [RoofSegment], adjacency_gap: f64, snap: f64) {
    let n = roofs.len();
    let indexes: Vec<Option<GridIndex>> = roofs
        .iter()
        .map(|r| (!r.support.is_empty()).then(|| GridIndex::from_positions(r.support.clone())))
        .collect();
    let mut creases: Vec<Vec<Crease>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let (Some(pi), Some(pj)) = (plane_of(&roofs[i]), plane_of(&roofs[j])) else {
                continue;
            };
            let Some(index_j) = &indexes[j] else { continue };
            if !near(&roofs[i].support, index_j, adjacency_gap) {
                continue;
            }
            let angle = pi.0.dot(&pj.0).clamp(-1.0, 1.0).acos().to_degrees();
            if angle < PARALLEL_DEG {
                let c = roofs[j].support.iter().sum::<Vector3<f64>>() / roofs[j].support.len() as f64;
                if (pi.0.dot(&c) - pi.1).abs() <= adjacency_gap {
                    roofs[i].merge_with.push(j);
                    roofs[j].merge_with.push(i);
                }
                continue;
            }
            if let Some(c) = crease_between(pi, pj) {
                creases[i].push(c);
                creases[j].push(c);
            }
        }
    }
    for (roof, lines) in roofs.iter_mut().zip(&creases) {
        if lines.is_empty() {
            continue;
        }
        let moved: Vec<Vec2> = roof.boundary.iter().map(|v| snap_vertex(v, lines, snap)).collect();
        let mut ring: Vec<Vec2> = Vec::with_capacity(moved.len());
        for v in moved {
            if ring.last() != Some(&v) {
                ring.push(v);
            }
        }
        while ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() < 3 || !is_simple(&ring) {
            continue;
        }
        let m = ring.len();
        roof.shared = (0..m)
            .map(|k| {
                let (a, b) = (ring[k], ring[(k + 1) % m]);
                lines.iter().any(|l| l.distance(&a) < 1e-6 && l.distance(&b) < 1e-6)
            })
            .collect();
        roof.boundary = ring;
    }
}

fn snap_vertex(v: &Vec2, lines: &[Crease], snap: f64) -> Vec2 {
    let mut close: Vec<(f64, &Crease)> = lines
        .iter()
        .map(|l| (l.distance(v), l))
        .filter(|(d, _)| *d <= snap)
        .collect();
    close.sort_by(|a, b| a.0.total_cmp(&b.0));
    match close.as_slice() {
        [] => *v,
        [(_, l)] => l.project(v),
        [(_, a), rest @ ..] => {
            for (_, b) in rest {
                if let Some(x) = line_intersection(&a.point, &a.dir, &b.point, &b.dir) {
                    if (x - v).norm() <= 2.0 * snap {
                        return x;
                    }
                }
            }
            a.project(v)
        }
    }
}
