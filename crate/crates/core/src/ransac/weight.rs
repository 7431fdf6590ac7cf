use nalgebra::Vector3;

use super::RansacConfig;
use crate::point::{Point, PointCloud};
use crate::primitive::Primitive;

/// Flat copies of the per-point quantities scoring needs.
#[derive(Debug, Clone)]
pub struct Samples {
    pub pos: Vec<Vector3<f64>>,
    pub normal: Vec<Option<Vector3<f64>>>,
    pub color: Vec<Vector3<f64>>,
}

impl Samples {
    pub fn from_cloud(cloud: &PointCloud) -> Self {
        Self {
            pos: cloud.positions().collect(),
            normal: (0..cloud.len()).map(|i| cloud.normal(i)).collect(),
            color: cloud.points().iter().map(Point::color).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    /// Mean color over `indices`.
    pub fn mean_color(&self, indices: &[usize]) -> Vector3<f64> {
        if indices.is_empty() {
            return Vector3::zeros();
        }
        indices.iter().fold(Vector3::zeros(), |acc, &i| acc + self.color[i]) / indices.len() as f64
    }
}

#[inline]
pub(crate) fn weight_parts(
    pos: &Vector3<f64>,
    normal: Option<&Vector3<f64>>,
    color: &Vector3<f64>,
    prim: &Primitive,
    distance: f64,
    cfg: &RansacConfig,
) -> f64 {
    let w_dis = (-(distance * distance) / (cfg.sigma_dis * cfg.sigma_dis)).exp();
    let w_nv = match normal {
        Some(n) => {
            let diff = (n - prim.normal_at(pos)).norm_squared();
            (-diff / (cfg.sigma_nv * cfg.sigma_nv)).exp()
        }
        None => 1.0,
    };
    let dc = (color - prim.seed_color).norm_squared();
    let w_rgb = (-dc / (cfg.sigma_rgb * cfg.sigma_rgb)).exp();
    w_dis * w_nv * w_rgb
}

/// Product of the distance, normal and color agreement weights of a point
/// with respect to a primitive. A missing normal contributes a factor of 1.
pub fn point_weight(p: &Point, normal: Option<Vector3<f64>>, prim: &Primitive, cfg: &RansacConfig) -> f64 {
    let pos = p.pos();
    weight_parts(&pos, normal.as_ref(), &p.color(), prim, prim.distance(&pos), cfg)
}

/// Weighted inlier score over the whole cloud at the configured band.
pub fn fit_score(cloud: &PointCloud, prim: &Primitive, cfg: &RansacConfig) -> (f64, Vec<usize>) {
    let samples = Samples::from_cloud(cloud);
    let all: Vec<usize> = (0..samples.len()).collect();
    score_indices(&samples, &all, prim, cfg, cfg.inlier_distance)
}

/// Score and inliers (in ascending order of `indices`) for points within
/// `band` of `prim`.
pub fn score_indices(
    samples: &Samples,
    indices: &[usize],
    prim: &Primitive,
    cfg: &RansacConfig,
    band: f64,
) -> (f64, Vec<usize>) {
    let mut score = 0.0;
    let mut inliers = Vec::new();
    for &i in indices {
        let d = prim.distance(&samples.pos[i]);
        if d <= band {
            score += weight_parts(
                &samples.pos[i],
                samples.normal[i].as_ref(),
                &samples.color[i],
                prim,
                d,
                cfg,
            );
            inliers.push(i);
        }
    }
    (score, inliers)
}

/// Score only, without collecting inliers.
pub(crate) fn score_only(
    samples: &Samples,
    indices: &[usize],
    prim: &Primitive,
    cfg: &RansacConfig,
    band: f64,
) -> f64 {
    let mut score = 0.0;
    for &i in indices {
        let d = prim.distance(&samples.pos[i]);
        if d <= band {
            score += weight_parts(
                &samples.pos[i],
                samples.normal[i].as_ref(),
                &samples.color[i],
                prim,
                d,
                cfg,
            );
        }
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(z: f64, color: f64) -> Primitive {
        Primitive::plane(Vector3::z(), z, Vector3::repeat(color)).unwrap()
    }

    #[test]
    fn perfect_agreement_weighs_one() {
        let cfg = RansacConfig::default();
        let p = Point::new(1.0, 2.0, 3.0, 100, 100, 100);
        let w = point_weight(&p, Some(Vector3::z()), &flat(3.0, 100.0), &cfg);
        assert_eq!(w, 1.0);
    }

    #[test]
    fn one_sigma_distance() {
        let cfg = RansacConfig::default();
        let p = Point::new(0.0, 0.0, 3.0 + cfg.sigma_dis, 100, 100, 100);
        let w = point_weight(&p, Some(Vector3::z()), &flat(3.0, 100.0), &cfg);
        assert!((w - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn opposite_normal() {
        let cfg = RansacConfig::default();
        let p = Point::new(0.0, 0.0, 3.0, 100, 100, 100);
        let w = point_weight(&p, Some(-Vector3::z()), &flat(3.0, 100.0), &cfg);
        let expect = (-4.0 / (cfg.sigma_nv * cfg.sigma_nv)).exp();
        assert!((w - expect).abs() < 1e-12);
    }

    #[test]
    fn missing_normal_is_neutral() {
        let cfg = RansacConfig::default();
        let p = Point::new(0.0, 0.0, 3.0, 100, 100, 100);
        assert_eq!(point_weight(&p, None, &flat(3.0, 100.0), &cfg), 1.0);
    }

    #[test]
    fn conventional_scores_count_inliers() {
        let cfg = RansacConfig::default().conventional();
        let pts: Vec<Point> = (0..10).map(|i| Point::new(i as f64, 0.0, 0.1 * i as f64, 0, 50, 200)).collect();
        let cloud = PointCloud::new(pts);
        let (s, inl) = fit_score(&cloud, &flat(0.0, 128.0), &cfg);
        assert_eq!(inl, vec![0, 1, 2, 3, 4]);
        assert!((s - 5.0).abs() < 1e-9);
        let (s, inl) = fit_score(&cloud, &flat(100.0, 128.0), &cfg);
        assert_eq!(s, 0.0);
        assert!(inl.is_empty());
    }
}
