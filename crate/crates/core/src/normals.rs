use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::point::PointCloud;

pub const DEFAULT_NEIGHBORS: usize = 16;

/// Ratio of the middle to the largest covariance eigenvalue below which a
/// neighborhood counts as collinear.
const COLLINEAR_RATIO: f64 = 1e-10;

/// Estimates per-point normals from the covariance of the `k` nearest
/// neighbors (including the point). Normals point upward; degenerate
/// neighborhoods get `None`.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("k = {k} must be >= 3")));
    }
    if cloud.len() < k {
        return Err(Error::TooFewPoints {
            required: k,
            actual: cloud.len(),
        });
    }
    let index = cloud.index();
    let compute = |i: usize| {
        let q = index.position(i);
        let nbrs = index.knn(q, k);
        let pts: Vec<Vector3<f64>> = nbrs.iter().map(|&(j, _)| *index.position(j)).collect();
        fit_normal(&pts)
    };
    #[cfg(feature = "parallel")]
    let normals: Vec<Option<Vector3<f64>>> = {
        use rayon::prelude::*;
        (0..cloud.len()).into_par_iter().map(compute).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let normals: Vec<Option<Vector3<f64>>> = (0..cloud.len()).map(compute).collect();
    cloud.clone().with_normals(normals)
}

/// Smallest-eigenvalue direction of the covariance of `pts`, oriented with
/// z >= 0. `None` if the points are (numerically) collinear.
pub fn fit_normal(pts: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    if pts.len() < 3 {
        return None;
    }
    let (_, cov) = covariance(pts);
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, hi) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(hi > 0.0) || mid <= COLLINEAR_RATIO * hi {
        return None;
    }
    let n: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    let len = n.norm();
    if !(len > 0.0) {
        return None;
    }
    let n = n / len;
    Some(n * crate::primitive::canonical_sign(&n))
}

/// Least-squares plane through `pts` as (centroid, upward unit normal,
/// mean squared residual).
pub fn local_plane(pts: &[Vector3<f64>]) -> Option<(Vector3<f64>, Vector3<f64>, f64)> {
    let n = fit_normal(pts)?;
    let (c, cov) = covariance(pts);
    Some((c, n, (n.transpose() * cov * n)[(0, 0)].max(0.0)))
}

/// Centroid and (biased) covariance of `pts`.
pub fn covariance(pts: &[Vector3<f64>]) -> (Vector3<f64>, Matrix3<f64>) {
    let n = pts.len() as f64;
    let centroid = pts.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    (centroid, cov / n)
}
