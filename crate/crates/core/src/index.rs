//! Uniform grid hash over 3D positions.
//!
//! The cell side is twice the mean nearest-neighbor spacing, which keeps
//! neighbor queries to a handful of cells for the near-uniform densities
//! produced by stereo matching.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::point::Point;

type Cell = [i64; 3];

#[derive(Debug, Clone)]
pub struct GridIndex {
    positions: Vec<Vector3<f64>>,
    cells: HashMap<Cell, Vec<usize>>,
    side: f64,
    cell_min: Cell,
    cell_max: Cell,
    mean_spacing: f64,
}

impl GridIndex {
    pub fn build(points: &[Point]) -> Self {
        let positions: Vec<Vector3<f64>> = points.iter().map(Point::pos).collect();
        Self::from_positions(positions)
    }

    pub fn from_positions(positions: Vec<Vector3<f64>>) -> Self {
        let guess = density_spacing(&positions);
        let coarse = Self::with_side(positions, 2.0 * guess, guess);
        let spacing = coarse.sampled_mean_nn_spacing().unwrap_or(guess);
        let spacing = if spacing > 0.0 && spacing.is_finite() {
            spacing
        } else {
            guess
        };
        Self::with_side(coarse.positions, 2.0 * spacing, spacing)
    }

    /// Index with an explicit cell side.
    pub fn with_side(positions: Vec<Vector3<f64>>, side: f64, mean_spacing: f64) -> Self {
        let side = if side > 0.0 && side.is_finite() { side } else { 1.0 };
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        let mut cell_min = [i64::MAX; 3];
        let mut cell_max = [i64::MIN; 3];
        for (i, p) in positions.iter().enumerate() {
            let c = cell_of(p, side);
            for a in 0..3 {
                cell_min[a] = cell_min[a].min(c[a]);
                cell_max[a] = cell_max[a].max(c[a]);
            }
            cells.entry(c).or_default().push(i);
        }
        Self {
            positions,
            cells,
            side,
            cell_min,
            cell_max,
            mean_spacing,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Mean nearest-neighbor spacing the index was sized from.
    pub fn mean_spacing(&self) -> f64 {
        self.mean_spacing
    }

    pub fn position(&self, i: usize) -> &Vector3<f64> {
        &self.positions[i]
    }

    /// Indices within Euclidean distance `radius` of `query`, ascending.
    pub fn within(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.positions.is_empty() {
            return out;
        }
        let lo = cell_of(&(query - Vector3::repeat(radius)), self.side);
        let hi = cell_of(&(query + Vector3::repeat(radius)), self.side);
        let r2 = radius * radius;
        for cx in lo[0].max(self.cell_min[0])..=hi[0].min(self.cell_max[0]) {
            for cy in lo[1].max(self.cell_min[1])..=hi[1].min(self.cell_max[1]) {
                for cz in lo[2].max(self.cell_min[2])..=hi[2].min(self.cell_max[2]) {
                    if let Some(ids) = self.cells.get(&[cx, cy, cz]) {
                        out.extend(
                            ids.iter()
                                .copied()
                                .filter(|&i| (self.positions[i] - query).norm_squared() <= r2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest indices with their distances, ordered by
    /// (distance, index). Includes the query point itself if indexed.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.positions.is_empty() {
            return Vec::new();
        }
        let k = k.min(self.positions.len());
        let center = cell_of(query, self.side);
        let max_ring = (0..3)
            .map(|a| {
                (center[a] - self.cell_min[a])
                    .abs()
                    .max((self.cell_max[a] - center[a]).abs())
            })
            .max()
            .unwrap_or(0);
        let mut found: Vec<(usize, f64)> = Vec::new();
        for ring in 0..=max_ring {
            self.visit_ring(center, ring, |i| {
                found.push((i, (self.positions[i] - query).norm()));
            });
            if found.len() >= k {
                found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                // everything outside the visited rings is at least this far
                if found[k - 1].1 <= ring as f64 * self.side {
                    break;
                }
            }
        }
        found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        found.truncate(k);
        found
    }

    fn visit_ring(&self, center: Cell, ring: i64, mut f: impl FnMut(usize)) {
        let r = ring;
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    if dx.abs() != r && dy.abs() != r && dz.abs() != r {
                        continue;
                    }
                    let c = [center[0] + dx, center[1] + dy, center[2] + dz];
                    if let Some(ids) = self.cells.get(&c) {
                        ids.iter().copied().for_each(&mut f);
                    }
                }
            }
        }
    }

    fn sampled_mean_nn_spacing(&self) -> Option<f64> {
        let n = self.positions.len();
        if n < 2 {
            return None;
        }
        let stride = (n / 2000).max(1);
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in (0..n).step_by(stride) {
            let nn = self.knn(&self.positions[i], 2);
            if let Some(&(_, d)) = nn.iter().find(|(j, _)| *j != i) {
                sum += d;
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

fn cell_of(p: &Vector3<f64>, side: f64) -> Cell {
    [
        (p.x / side).floor() as i64,
        (p.y / side).floor() as i64,
        (p.z / side).floor() as i64,
    ]
}

/// Spacing implied by spreading the points evenly over their (x, y) extent.
fn density_spacing(positions: &[Vector3<f64>]) -> f64 {
    if positions.len() < 2 {
        return 1.0;
    }
    let mut lo = positions[0];
    let mut hi = positions[0];
    for p in positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = hi - lo;
    let n = positions.len() as f64;
    let area = ext.x * ext.y;
    let s = if area > 1e-12 {
        (area / n).sqrt()
    } else {
        ext.norm() / n
    };
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}
