use super::plane::{fit_plane_subset, mean_squared_distance, refine_plane};
use super::pyramid::build_pyramid;
use super::weight::{score_indices, Samples};
use super::{stream_rng, FitResult, RansacConfig};
use crate::cluster::BuildingCluster;
use crate::error::Result;
use crate::primitive::Primitive;

/// Acceptance thresholds at one pyramid level.
#[derive(Debug, Clone, Copy)]
struct LevelRule {
    band: f64,
    min_points: usize,
    max_mse: f64,
}

fn level_rule(cfg: &RansacConfig, level: usize, top: usize, n_level: usize, n0: usize) -> LevelRule {
    let band = if top == 0 {
        cfg.inlier_distance
    } else {
        let t = level as f64 / top as f64;
        cfg.inlier_distance + t * (cfg.coarse_inlier_distance - cfg.inlier_distance)
    };
    // four times the level-0 area per level up, counted in level points
    let area_scale = 4f64.powi(level as i32) * n_level as f64 / n0.max(1) as f64;
    let min_points = ((cfg.min_roof_points as f64 * area_scale).ceil() as usize).max(3);
    LevelRule {
        band,
        min_points,
        max_mse: cfg.max_mse / 2f64.powi(level as i32),
    }
}

struct Model {
    primitive: Primitive,
    level: usize,
    band: f64,
}

/// Coarse-to-fine plane extraction over the Flat and Sloped points of a
/// cluster. Inlier indices refer to `cluster.cloud`. An unlabeled cluster
/// is treated as entirely planar.
pub fn hierarchical_segment(cluster: &BuildingCluster, cfg: &RansacConfig) -> Result<Vec<FitResult>> {
    segment_levels(cluster, cfg, cfg.max_levels)
}

/// Single-level iterative extraction with the level-0 thresholds.
pub fn iterative_planes(cluster: &BuildingCluster, cfg: &RansacConfig) -> Result<Vec<FitResult>> {
    segment_levels(cluster, cfg, 1)
}

fn segment_levels(cluster: &BuildingCluster, cfg: &RansacConfig, max_levels: usize) -> Result<Vec<FitResult>> {
    cfg.validate()?;
    let cloud = &cluster.cloud;
    let planar: Vec<usize> = match cloud.labels() {
        Some(labels) => (0..cloud.len()).filter(|&i| labels[i].is_planar()).collect(),
        None => (0..cloud.len()).collect(),
    };
    if planar.len() < 3 {
        return Ok(Vec::new());
    }
    let sub = cloud.select(&planar);
    let pyr = build_pyramid(&sub, cfg.base_grid, max_levels)?;
    let top = pyr.top();
    let n0 = sub.len();

    let mut models: Vec<Model> = Vec::new();
    // model of each point at the level just processed
    let mut above: Vec<Option<usize>> = Vec::new();
    for level in (0..=top).rev() {
        let lc = &pyr.levels[level];
        let samples = Samples::from_cloud(lc);
        let rule = level_rule(cfg, level, top, lc.len(), n0);
        let mut assign: Vec<Option<usize>> = vec![None; lc.len()];
        if level < top {
            for (i, slot) in assign.iter_mut().enumerate() {
                if let Some(m) = above[pyr.parent_of[level][i]] {
                    let model = &models[m];
                    if model.primitive.distance(&samples.pos[i]) <= model.band {
                        *slot = Some(m);
                    }
                }
            }
        }
        let mut remaining: Vec<usize> = (0..lc.len()).filter(|&i| assign[i].is_none()).collect();
        let mut e = 0u64;
        loop {
            let segmented = lc.len() - remaining.len();
            if segmented as f64 >= cfg.segmented_ratio_stop * lc.len() as f64
                || remaining.len() < rule.min_points
            {
                break;
            }
            let mut rng = stream_rng(cfg.rng_seed, &[cluster.id as u64, level as u64, e]);
            e += 1;
            let Ok(fit) = fit_plane_subset(&samples, &remaining, cfg, rule.band, &mut rng) else {
                break;
            };
            if fit.mse > rule.max_mse || fit.inliers.len() < rule.min_points {
                break;
            }
            let id = models.len();
            models.push(Model {
                primitive: fit.primitive,
                level,
                band: rule.band,
            });
            for &i in &fit.inliers {
                assign[i] = Some(id);
            }
            remaining.retain(|&i| assign[i].is_none());
        }
        above = assign;
    }

    // final refit of every model on its level-0 support
    let samples = Samples::from_cloud(&sub);
    let mut support: Vec<Vec<usize>> = vec![Vec::new(); models.len()];
    for (i, m) in above.iter().enumerate() {
        if let Some(m) = m {
            support[*m].push(i);
        }
    }
    let mut out = Vec::new();
    for (model, members) in models.iter().zip(&support) {
        if members.len() < 3 {
            continue;
        }
        let prim = refine_plane(&samples, members, &model.primitive, cfg).unwrap_or(model.primitive);
        let (score, kept) = score_indices(&samples, members, &prim, cfg, model.band);
        if kept.len() < 3 {
            continue;
        }
        let mse = mean_squared_distance(&samples, &kept, &prim);
        out.push(FitResult {
            primitive: prim,
            inliers: kept.iter().map(|&i| planar[i]).collect(),
            score,
            mse,
            level: model.level,
            inlier_distance: model.band,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::{Point, PointCloud, ShapeLabel};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn cluster(points: Vec<Point>) -> BuildingCluster {
        let cloud = PointCloud::new(points);
        let bbox = cloud.bounds_2d().unwrap();
        BuildingCluster {
            id: 0,
            source_indices: (0..cloud.len()).collect(),
            cloud,
            bbox,
        }
    }

    #[test]
    fn single_flat_roof() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let pts: Vec<Point> = (0..3000)
            .map(|_| Point::xyz(rng.gen_range(0.0..30.0), rng.gen_range(0.0..20.0), 8.0 + noise.sample(&mut rng)))
            .collect();
        let n = pts.len();
        let fits = hierarchical_segment(&cluster(pts), &RansacConfig::default()).unwrap();
        assert_eq!(fits.len(), 1);
        assert!(fits[0].inliers.len() as f64 >= 0.95 * n as f64);
    }

    #[test]
    fn gable_with_structured_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let slope = 30f64.to_radians().tan();
        let pts: Vec<Point> = (0..4000)
            .map(|_| {
                let x: f64 = rng.gen_range(0.0..20.0);
                let y: f64 = rng.gen_range(-6.0..6.0);
                let wave = 0.3 * (x * 0.9).sin() * (y * 1.3).cos();
                Point::xyz(x, y, 10.0 - slope * y.abs() + wave + noise.sample(&mut rng))
            })
            .collect();
        let fits = hierarchical_segment(&cluster(pts), &RansacConfig::default()).unwrap();
        assert_eq!(fits.len(), 2);
        let c = 30f64.to_radians().cos();
        let s = 30f64.to_radians().sin();
        let truths = [Vector3::new(0.0, s, c), Vector3::new(0.0, -s, c)];
        for f in &fits {
            let crate::primitive::Shape::Plane { normal, .. } = f.primitive.shape else {
                unreachable!()
            };
            let best = truths
                .iter()
                .map(|t| normal.dot(t).clamp(-1.0, 1.0).acos().to_degrees())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 3.0, "{best}");
        }
    }

    #[test]
    fn curved_points_are_ignored() {
        let pts: Vec<Point> = (0..400).map(|i| Point::xyz((i % 20) as f64, (i / 20) as f64, 1.0)).collect();
        let labels = vec![ShapeLabel::Cylindrical; 400];
        let mut c = cluster(pts);
        c.cloud = c.cloud.with_labels(labels).unwrap();
        assert!(hierarchical_segment(&c, &RansacConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn small_dormer_found_at_a_finer_level() {
        // 2 m x 2 m dormer at 4 pts/m^2 gives 16 points: fewer than the
        // coarse minimum, more than the level-0 minimum set below
        let cfg = RansacConfig {
            min_roof_points: 12,
            ..Default::default()
        };
        let mut pts = Vec::new();
        let step = 0.5;
        for i in 0..24 {
            for j in 0..16 {
                let (x, y) = (i as f64 * step + 0.25, j as f64 * step + 0.25);
                let dormer = (6.0..8.0).contains(&x) && (3.0..5.0).contains(&y);
                pts.push(Point::xyz(x, y, if dormer { 7.5 } else { 5.0 }));
            }
        }
        let fits = hierarchical_segment(&cluster(pts), &cfg).unwrap();
        assert_eq!(fits.len(), 2);
        let dormer = fits.iter().find(|f| f.inliers.len() == 16).expect("dormer segment");
        assert_eq!(dormer.level, 0);
        let main = fits.iter().find(|f| f.inliers.len() != 16).unwrap();
        assert!(main.level > 0);
    }
}
