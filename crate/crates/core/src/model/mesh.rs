use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use spade::{ConstrainedDelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::geom::{distance_to_ring, point_in_polygon, Vec2};
use crate::primitive::{Primitive, Shape};

/// Indexed triangle mesh. Vertices are deduplicated on their exact bit
/// pattern, so faces built from the same coordinates share indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    lookup: HashMap<[u64; 3], usize>,
}

fn key(v: &Vector3<f64>) -> [u64; 3] {
    // +0.0 and -0.0 are the same vertex
    [v.x + 0.0, v.y + 0.0, v.z + 0.0].map(f64::to_bits)
}

impl Mesh {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn vertex(&mut self, v: Vector3<f64>) -> usize {
        let next = self.vertices.len();
        let idx = *self.lookup.entry(key(&v)).or_insert(next);
        if idx == next {
            self.vertices.push(v);
        }
        idx
    }

    /// Adds a triangle, dropping it when two corners coincide.
    pub fn triangle(&mut self, a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) {
        let f = [self.vertex(a), self.vertex(b), self.vertex(c)];
        if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
            self.faces.push(f);
        }
    }

    pub fn append(&mut self, other: &Mesh) {
        for f in &other.faces {
            let [a, b, c] = f.map(|i| other.vertices[i]);
            self.triangle(a, b, c);
        }
    }

    /// Counts of faces using each undirected edge.
    pub fn edge_use(&self) -> HashMap<(usize, usize), usize> {
        let mut uses = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *uses.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        uses
    }

    /// Every edge is used by exactly two faces, once in each direction.
    pub fn is_closed(&self) -> bool {
        let mut directed: HashMap<(usize, usize), i32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if a < b {
                    *directed.entry((a, b)).or_insert(0) += 1;
                } else {
                    *directed.entry((b, a)).or_insert(0) -= 1;
                }
            }
        }
        directed.values().all(|&v| v == 0) && self.edge_use().values().all(|&n| n == 2)
    }

    /// Signed volume; positive for a closed mesh wound outward.
    pub fn volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn format(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.is_empty() {
            return Err(Error::InvalidArgument("refusing to write an empty mesh".into()));
        }
        std::fs::write(path, self.format()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let mut it = line.split_whitespace();
            match it.next() {
                None => continue,
                Some(tag) if tag.starts_with('#') => continue,
                Some("v") => {
                    let c: Vec<f64> = it
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::parse(path, line_no, format!("bad vertex: {e}")))?;
                    if c.len() != 3 {
                        return Err(Error::parse(path, line_no, "vertex needs 3 coordinates"));
                    }
                    vertices.push(Vector3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let c: Vec<usize> = it
                        .map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::parse(path, line_no, format!("bad face: {e}")))?;
                    if c.len() != 3 || c.iter().any(|&i| i == 0) {
                        return Err(Error::parse(path, line_no, "face needs 3 indices starting at 1"));
                    }
                    faces.push([c[0] - 1, c[1] - 1, c[2] - 1]);
                }
                Some(tag) => return Err(Error::parse(path, line_no, format!("unknown record {tag:?}"))),
            }
        }
        if let Some(bad) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
            return Err(Error::parse(path, 0, format!("face index {} out of range", bad + 1)));
        }
        let mut mesh = Mesh::new();
        for v in vertices {
            // keep file order even for duplicate coordinates
            let idx = mesh.vertices.len();
            mesh.lookup.entry(key(&v)).or_insert(idx);
            mesh.vertices.push(v);
        }
        mesh.faces = faces;
        Ok(mesh)
    }
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

/// Distance from the flat triangle to the surface, sampled on a barycentric
/// lattice.
pub fn triangle_deviation(prim: &Primitive, tri: [Vector3<f64>; 3], steps: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..=steps {
        for j in 0..=steps - i {
            let k = steps - i - j;
            let p = (tri[0] * i as f64 + tri[1] * j as f64 + tri[2] * k as f64) / steps as f64;
            worst = worst.max(surface_gap(prim, &p));
        }
    }
    worst
}

/// Distance to the lifted surface. Past the rim of a curved primitive the
/// lift is clamped flat, so the vertical gap bounds the error there.
fn surface_gap(prim: &Primitive, p: &Vector3<f64>) -> f64 {
    prim.distance(p).min((p.z - prim.height_at_clamped(p.x, p.y)).abs())
}

fn lift(prim: &Primitive, p: &Vec2) -> Vector3<f64> {
    Vector3::new(p.x, p.y, prim.height_at_clamped(p.x, p.y))
}

fn segment_deviation(prim: &Primitive, a: &Vec2, b: &Vec2) -> f64 {
    let (pa, pb) = (lift(prim, a), lift(prim, b));
    (1..8)
        .map(|k| surface_gap(prim, &(pa + (pb - pa) * (k as f64 / 8.0))))
        .fold(0.0, f64::max)
}

/// Splits ring edges until each lifted edge stays within `tol` of a curved
/// surface. Also returns, per output edge, the input edge it came from.
/// Planar rings are returned unchanged.
pub fn densify_ring(prim: &Primitive, ring: &[Vec2], tol: f64) -> (Vec<Vec2>, Vec<usize>) {
    if matches!(prim.shape, Shape::Plane { .. }) {
        return (ring.to_vec(), (0..ring.len()).collect());
    }
    let mut out = Vec::new();
    let mut origin = Vec::new();
    for k in 0..ring.len() {
        let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
        let mut pieces = 1usize;
        while pieces < 256 {
            let ok = (0..pieces).all(|s| {
                let p = a + (b - a) * (s as f64 / pieces as f64);
                let q = a + (b - a) * ((s + 1) as f64 / pieces as f64);
                segment_deviation(prim, &p, &q) <= tol
            });
            if ok {
                break;
            }
            pieces *= 2;
        }
        for s in 0..pieces {
            out.push(a + (b - a) * (s as f64 / pieces as f64));
            origin.push(k);
        }
    }
    (out, origin)
}

/// Triangles covering a simple CCW ring, lifted onto the primitive. Curved
/// surfaces are refined with interior points until every triangle is within
/// `tol` of the surface. The ring vertices are used exactly as given.
pub fn triangulate_roof(prim: &Primitive, ring: &[Vec2], tol: f64) -> Result<Vec<[Vector3<f64>; 3]>> {
    let curved = !matches!(prim.shape, Shape::Plane { .. });
    let mut steiner: Vec<Vec2> = if curved { seed_grid(prim, ring, tol) } else { Vec::new() };
    for _round in 0..24 {
        let tris = constrained(ring, &steiner)?;
        let lifted: Vec<[Vector3<f64>; 3]> = tris.iter().map(|t| t.map(|p| lift(prim, &p))).collect();
        if !curved {
            return Ok(lifted);
        }
        let mut added = false;
        for (t2, t3) in tris.iter().zip(&lifted) {
            if triangle_deviation(prim, *t3, 6) > tol {
                steiner.push((t2[0] + t2[1] + t2[2]) / 3.0);
                added = true;
            }
        }
        if !added {
            return Ok(lifted);
        }
    }
    Err(Error::Degenerate("curved roof tessellation did not converge".into()))
}

/// Interior lattice at the chord spacing of the primitive's curvature.
fn seed_grid(prim: &Primitive, ring: &[Vec2], tol: f64) -> Vec<Vec2> {
    let radius = match prim.shape {
        Shape::Sphere { radius, .. } | Shape::Cylinder { radius, .. } => radius,
        Shape::Plane { .. } => return Vec::new(),
    };
    let step = (8.0 * radius * tol).sqrt().max(1e-3);
    let (lo, hi) = ring.iter().fold(
        (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let (nx, ny) = (((hi.x - lo.x) / step).ceil() as usize, ((hi.y - lo.y) / step).ceil() as usize);
    if nx * ny > 100_000 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 1..nx {
        for j in 1..ny {
            let p = lo + Vec2::new(i as f64 * step, j as f64 * step);
            if point_in_polygon(&p, ring) && distance_to_ring(&p, ring) > 0.25 * step {
                out.push(p);
            }
        }
    }
    out
}

fn constrained(ring: &[Vec2], steiner: &[Vec2]) -> Result<Vec<[Vec2; 3]>> {
    let mut cdt = ConstrainedDelaunayTriangulation::<Vertex>::new();
    let mut handles = Vec::with_capacity(ring.len());
    for (idx, p) in ring.iter().chain(steiner).enumerate() {
        let h = cdt
            .insert(Vertex {
                pos: Point2::new(p.x, p.y),
                idx,
            })
            .map_err(|e| Error::Degenerate(format!("triangulation failed: {e:?}")))?;
        if idx < ring.len() {
            handles.push(h);
        }
    }
    for k in 0..ring.len() {
        let (a, b) = (handles[k], handles[(k + 1) % ring.len()]);
        if a == b || !cdt.can_add_constraint(a, b) {
            return Err(Error::Degenerate("roof boundary cannot be constrained".into()));
        }
        cdt.add_constraint(a, b);
    }
    // faces reachable from the hull without crossing the ring are outside
    let mut outside = vec![false; cdt.num_all_faces()];
    let mut stack = Vec::new();
    for f in cdt.inner_faces() {
        let escapes = f
            .adjacent_edges()
            .iter()
            .any(|e| e.rev().face().is_outer() && !e.is_constraint_edge());
        if escapes {
            outside[f.fix().index()] = true;
            stack.push(f);
        }
    }
    while let Some(f) = stack.pop() {
        for e in f.adjacent_edges() {
            if e.is_constraint_edge() {
                continue;
            }
            if let Some(g) = e.rev().face().as_inner() {
                if !outside[g.fix().index()] {
                    outside[g.fix().index()] = true;
                    stack.push(g);
                }
            }
        }
    }
    let points: Vec<Vec2> = ring.iter().chain(steiner).copied().collect();
    Ok(cdt
        .inner_faces()
        .filter(|f| !outside[f.fix().index()])
        .map(|f| f.vertices().map(|v| points[v.data().idx]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let mut m = Mesh::new();
        m.triangle(Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.5, 0.0, 0.25), Vector3::new(0.0, 2.0, 1e-5));
        m.triangle(Vector3::new(1.5, 0.0, 0.25), Vector3::new(3.0, 1.0, -2.0), Vector3::new(0.0, 2.0, 1e-5));
        let back = Mesh::parse(&m.format(), Path::new("m")).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.faces, m.faces);
        assert_eq!(m.vertices.len(), 4);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = Mesh::parse("v 0 0 0\nv 1 0\n", Path::new("m")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(Mesh::parse("v 0 0 0\nf 1 2 3\n", Path::new("m")).is_err());
        assert!(Mesh::parse("f 0 1 2\n", Path::new("m")).is_err());
    }

    #[test]
    fn empty_mesh_is_not_written() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Mesh::new().write(dir.path().join("x.obj")).is_err());
    }

    #[test]
    fn square_roof_is_two_triangles() {
        let p = Primitive::plane(Vector3::z(), 4.0, Vector3::zeros()).unwrap();
        let ring = [Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(3.0, 2.0), Vec2::new(0.0, 2.0)];
        let tris = triangulate_roof(&p, &ring, 0.5).unwrap();
        assert_eq!(tris.len(), 2);
        let area: f64 = tris.iter().map(|t| 0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).z).sum();
        assert!((area - 6.0).abs() < 1e-12);
    }

    #[test]
    fn concave_ring_keeps_only_interior() {
        let p = Primitive::plane(Vector3::z(), 4.0, Vector3::zeros()).unwrap();
        let ring = [
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(4.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 4.0),
            Vec2::new(0.0, 4.0),
        ];
        let tris = triangulate_roof(&p, &ring, 0.5).unwrap();
        let area: f64 = tris.iter().map(|t| 0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).z).sum();
        assert!((area - 7.0).abs() < 1e-12);
    }
}
