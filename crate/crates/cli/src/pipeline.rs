//! The pipeline stages as plain functions over in-memory data.

use rayon::prelude::*;
use rooffit::cluster::{euclidean_cluster, mask_indices, BuildingCluster};
use rooffit::model::{reconstruct_building, BuildingModel, ModelConfig};
use rooffit::normals::estimate_normals;
use rooffit::preprocess::{extract_dtm, fill_holes, smooth, PreprocessConfig};
use rooffit::ransac::{extract_curved, hierarchical_segment, FitResult, RansacConfig};
use rooffit::segment::{apply, geometric_fallback_with, FallbackConfig, Segmentation};
use rooffit::{PointCloud, RasterGrid, Result, ShapeLabel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub tolerance: f64,
    pub min_points: usize,
    /// Points less than this far above the DTM are dropped as ground.
    pub min_height: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            tolerance: rooffit::cluster::DEFAULT_TOLERANCE,
            min_points: rooffit::cluster::DEFAULT_MIN_POINTS,
            min_height: 2.0,
        }
    }
}

/// Terrain from the raw cloud, then smoothing and hole filling.
pub fn preprocess(cloud: &PointCloud, cfg: &PreprocessConfig) -> Result<(PointCloud, RasterGrid)> {
    let dtm = extract_dtm(cloud, cfg)?;
    let smoothed = smooth(cloud, cfg)?;
    let filled = fill_holes(&smoothed, cfg)?;
    Ok((filled, dtm))
}

/// Masked points standing clear of the terrain, grouped per building.
pub fn cluster(cloud: &PointCloud, mask: &RasterGrid, dtm: &RasterGrid, cfg: &ClusterConfig) -> Result<Vec<BuildingCluster>> {
    let keep: Vec<usize> = mask_indices(cloud, mask)
        .into_iter()
        .filter(|&i| {
            let p = cloud.point(i);
            dtm.sample_clamped(p.x, p.y).is_some_and(|g| p.z - g >= cfg.min_height)
        })
        .collect();
    euclidean_cluster(&cloud.select(&keep), cfg.tolerance, cfg.min_points)
}

/// Normals and geometric shape labels for one cluster.
pub fn segment(cluster: &BuildingCluster, k: usize, cfg: &FallbackConfig) -> Result<BuildingCluster> {
    let with_normals = BuildingCluster {
        cloud: estimate_normals(&cluster.cloud, k)?,
        ..cluster.clone()
    };
    let seg = geometric_fallback_with(&with_normals, cfg)?;
    apply(&with_normals, &seg)
}

/// Attaches externally produced labels, estimating normals if missing.
pub fn attach_labels(cluster: &BuildingCluster, seg: &Segmentation, k: usize) -> Result<BuildingCluster> {
    let base = if cluster.cloud.normals().is_some() {
        cluster.clone()
    } else {
        BuildingCluster {
            cloud: estimate_normals(&cluster.cloud, k)?,
            ..cluster.clone()
        }
    };
    apply(&base, seg)
}

/// Planes through the pyramid for planar points; sphere or cylinder
/// extraction for each curved class. Inliers index `cluster.cloud`.
pub fn fit(cluster: &BuildingCluster, cfg: &RansacConfig) -> Result<Vec<FitResult>> {
    let mut fits = hierarchical_segment(cluster, cfg)?;
    let Some(labels) = cluster.cloud.labels() else {
        return Ok(fits);
    };
    for label in [ShapeLabel::Cylindrical, ShapeLabel::Spherical] {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if idx.len() < cfg.min_roof_points {
            continue;
        }
        let sub = cluster.cloud.select(&idx);
        for mut f in extract_curved(&sub, label, cfg, cluster.id as u64)? {
            for i in &mut f.inliers {
                *i = idx[*i];
            }
            fits.push(f);
        }
    }
    Ok(prefer_planes(&cluster.cloud, fits, PLANE_EXPLAINED))
}

/// Share of a curved fit's support that planes must explain to replace it.
pub const PLANE_EXPLAINED: f64 = 0.8;

/// Drops curved fits whose inliers mostly lie within the band of a planar
/// fit; those points join the nearest such plane. Creases between roof
/// planes blend the normals around them and can look curved to the labeler.
pub fn prefer_planes(cloud: &PointCloud, fits: Vec<FitResult>, share: f64) -> Vec<FitResult> {
    let (mut planes, curved): (Vec<FitResult>, Vec<FitResult>) =
        fits.into_iter().partition(|f| f.primitive.is_plane());
    if planes.is_empty() {
        return curved;
    }
    let mut kept = Vec::new();
    for c in curved {
        let owner: Vec<Option<usize>> = c
            .inliers
            .iter()
            .map(|&i| {
                let p = cloud.point(i).pos();
                planes
                    .iter()
                    .enumerate()
                    .map(|(k, f)| (k, f.primitive.distance(&p), f.inlier_distance))
                    .filter(|(_, d, band)| d <= band)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(k, _, _)| k)
            })
            .collect();
        let explained = owner.iter().flatten().count();
        if explained as f64 >= share * c.inliers.len() as f64 {
            for (&i, o) in c.inliers.iter().zip(&owner) {
                if let Some(k) = o {
                    planes[*k].inliers.push(i);
                }
            }
        } else {
            kept.push(c);
        }
    }
    for p in &mut planes {
        p.inliers.sort_unstable();
        p.inliers.dedup();
    }
    planes.extend(kept);
    planes
}

pub fn assemble(cluster: &BuildingCluster, fits: &[FitResult], dtm: &RasterGrid, cfg: &ModelConfig) -> Result<BuildingModel> {
    reconstruct_building(&cluster.cloud, fits, dtm, cfg)
}

#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub preprocess: PreprocessConfig,
    pub cluster: ClusterConfig,
    pub normals_k: usize,
    pub fallback: FallbackConfig,
    pub ransac: RansacConfig,
    pub model: ModelConfig,
}

impl Settings {
    pub fn new() -> Self {
        Self {
            normals_k: 16,
            ..Default::default()
        }
    }
}

/// One building that could not be reconstructed.
#[derive(Debug, Clone)]
pub struct Skipped {
    pub cluster: usize,
    pub reason: String,
}

/// All stages in memory, building-parallel. Buildings that fail in the
/// fit or assembly stages are skipped and reported.
pub fn reconstruct_scene(
    cloud: &PointCloud,
    mask: &RasterGrid,
    s: &Settings,
) -> Result<(Vec<BuildingModel>, RasterGrid, Vec<Skipped>)> {
    let (clean, dtm) = preprocess(cloud, &s.preprocess)?;
    let clusters = cluster(&clean, mask, &dtm, &s.cluster)?;
    let results: Vec<std::result::Result<BuildingModel, Skipped>> = clusters
        .par_iter()
        .map(|c| {
            let run = || -> Result<BuildingModel> {
                let labeled = segment(c, s.normals_k, &s.fallback)?;
                let fits = fit(&labeled, &s.ransac)?;
                assemble(&labeled, &fits, &dtm, &s.model)
            };
            run().map_err(|e| Skipped {
                cluster: c.id,
                reason: e.to_string(),
            })
        })
        .collect();
    let mut models = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(m) => models.push(m),
            Err(s) => skipped.push(s),
        }
    }
    Ok((models, dtm, skipped))
}
