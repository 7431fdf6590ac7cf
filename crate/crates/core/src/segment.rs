//! Per-point roof shape labels: exchange with an external labeler, a
//! geometric fallback classifier, and accuracy scoring.

use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::cluster::BuildingCluster;
use crate::error::{Error, Result};
use crate::io::{read_labels, write_point_cloud};
use crate::point::ShapeLabel;
use crate::preprocess::map_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Neural,
    Geometric,
    File,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub labels: Vec<ShapeLabel>,
    pub source: LabelSource,
}

/// Settings of the geometric fallback classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FallbackConfig {
    /// Neighborhood radius for the normal statistics, meters.
    pub radius: f64,
    /// Largest normal variance still treated as constant.
    pub planar_variance: f64,
    /// Flat if the mean normal is within this angle of vertical, degrees.
    pub flat_angle: f64,
    /// Two-cluster split of the normals below this within/total variance
    /// ratio marks a crease between planes.
    pub crease_ratio: f64,
    /// Second/first variance ratio below which normals vary along one
    /// direction only.
    pub line_ratio: f64,
    /// Largest tilt of a cylinder axis from horizontal, degrees.
    pub axis_tilt: f64,
    /// Radius of the majority smoothing pass, meters.
    pub smoothing_radius: f64,
}

impl Default for FallbackConfig {
    fn default() -> Self {
        Self {
            radius: 2.0,
            planar_variance: 4f64.to_radians().sin().powi(2),
            flat_angle: 10.0,
            crease_ratio: 0.15,
            line_ratio: 0.3,
            axis_tilt: 20.0,
            smoothing_radius: 2.0,
        }
    }
}

/// Writes the cluster in point order for an external labeler.
pub fn export_cluster(cluster: &BuildingCluster, path: impl AsRef<Path>) -> Result<()> {
    write_point_cloud(&cluster.cloud.clone().without_labels(), path)
}

/// Reads a label file written for a previously exported cluster.
pub fn load_labels(cluster: &BuildingCluster, path: impl AsRef<Path>) -> Result<Segmentation> {
    let labels = read_labels(path)?;
    if labels.len() != cluster.cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cluster.cloud.len(),
            actual: labels.len(),
        });
    }
    Ok(Segmentation {
        labels,
        source: LabelSource::File,
    })
}

/// Cluster with the segmentation attached as point labels.
pub fn apply(cluster: &BuildingCluster, seg: &Segmentation) -> Result<BuildingCluster> {
    Ok(BuildingCluster {
        cloud: cluster.cloud.clone().with_labels(seg.labels.clone())?,
        ..cluster.clone()
    })
}

pub fn score_segmentation(pred: &Segmentation, truth: &Segmentation) -> Result<f64> {
    if pred.labels.len() != truth.labels.len() {
        return Err(Error::LengthMismatch {
            expected: truth.labels.len(),
            actual: pred.labels.len(),
        });
    }
    if truth.labels.is_empty() {
        return Ok(1.0);
    }
    let hits = pred.labels.iter().zip(&truth.labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.labels.len() as f64)
}

fn classify_normals(own: &Vector3<f64>, normals: &[Vector3<f64>], cfg: &FallbackConfig) -> ShapeLabel {
    let planar = |n: &Vector3<f64>| {
        if n.z.abs() > cfg.flat_angle.to_radians().cos() {
            ShapeLabel::Flat
        } else {
            ShapeLabel::Sloped
        }
    };
    if normals.len() < 3 {
        return planar(own);
    }
    let k = normals.len() as f64;
    let mean = normals.iter().sum::<Vector3<f64>>() / k;
    let mut cov = Matrix3::zeros();
    for n in normals {
        let d = n - mean;
        cov += d * d.transpose();
    }
    cov /= k;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]].max(0.0);
    let l2 = eig.eigenvalues[order[1]].max(0.0);
    if l1 < cfg.planar_variance {
        return planar(&mean);
    }
    let e1: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    if two_means_ratio(normals.iter().map(|n| (n - mean).dot(&e1)).collect()) < cfg.crease_ratio {
        return planar(own);
    }
    if l2 / l1 < cfg.line_ratio {
        let axis = mean.cross(&e1);
        if axis.norm() > 1e-9 && axis.normalize().z.abs() < cfg.axis_tilt.to_radians().sin() {
            return ShapeLabel::Cylindrical;
        }
    }
    ShapeLabel::Spherical
}

/// Within-cluster over total variance of the best split of `v` into two
/// groups; small values mean two well separated modes.
fn two_means_ratio(mut v: Vec<f64>) -> f64 {
    let n = v.len();
    if n < 2 {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / n as f64;
    let total: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    if !(total > 0.0) {
        return 1.0;
    }
    let mut prefix = vec![0.0; n + 1];
    let mut prefix2 = vec![0.0; n + 1];
    for (i, x) in v.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
        prefix2[i + 1] = prefix2[i] + x * x;
    }
    let sse = |a: usize, b: usize| {
        let m = (b - a) as f64;
        let s = prefix[b] - prefix[a];
        prefix2[b] - prefix2[a] - s * s / m
    };
    (1..n)
        .map(|cut| sse(0, cut) + sse(cut, n))
        .fold(f64::INFINITY, f64::min)
        / total
}

/// Labels each point from the spread of the normals around it, then takes
/// a neighborhood majority vote.
pub fn geometric_fallback_classify(cluster: &BuildingCluster) -> Result<Segmentation> {
    geometric_fallback_with(cluster, &FallbackConfig::default())
}

pub fn geometric_fallback_with(cluster: &BuildingCluster, cfg: &FallbackConfig) -> Result<Segmentation> {
    let cloud = &cluster.cloud;
    if cloud.normals().is_none() {
        return Err(Error::MissingNormals);
    }
    let index = cloud.index();
    let raw: Vec<ShapeLabel> = map_indices(cloud.len(), |i| {
        let nbrs = index.within(index.position(i), cfg.radius);
        let normals: Vec<Vector3<f64>> = nbrs.iter().filter_map(|&j| cloud.normal(j)).collect();
        let own = cloud.normal(i).unwrap_or_else(Vector3::z);
        classify_normals(&own, &normals, cfg)
    });
    let labels = map_indices(cloud.len(), |i| {
        let mut votes = [0usize; 4];
        for j in index.within(index.position(i), cfg.smoothing_radius) {
            votes[raw[j].code() as usize] += 1;
        }
        let own = raw[i].code() as usize;
        let mut best = own;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        ShapeLabel::ALL[best]
    });
    Ok(Segmentation {
        labels,
        source: LabelSource::Geometric,
    })
}
