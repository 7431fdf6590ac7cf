//! Primitive extraction from shape-labeled points.
//!
//! Hypotheses are scored by the sum of multi-cue weights over their inliers
//! (distance, normal agreement and color agreement). Planar roofs go through
//! a coarse-to-fine pyramid; curved roofs use plain iterative extraction.

mod curved;
mod hierarchical;
mod lsq;
mod plane;
mod pyramid;
mod weight;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitive::Primitive;

pub use curved::{extract_curved, ransac_cylinder, ransac_sphere};
pub use hierarchical::{hierarchical_segment, iterative_planes};
pub use lsq::{levenberg_marquardt, LsqOutcome};
pub use plane::{ransac_plane, refine_plane};
pub use pyramid::{build_pyramid, Pyramid};
pub use weight::{fit_score, point_weight, score_indices, Samples};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Distance scale of the weight, meters.
    pub sigma_dis: f64,
    /// Normal-difference scale of the weight.
    pub sigma_nv: f64,
    /// Color-difference scale of the weight, 8-bit units.
    pub sigma_rgb: f64,
    /// Inlier band at the finest level, meters.
    pub inlier_distance: f64,
    /// Inlier band at the coarsest pyramid level, meters.
    pub coarse_inlier_distance: f64,
    pub max_iterations: usize,
    /// Smallest accepted roof at the finest level.
    pub min_roof_points: usize,
    /// Largest accepted mean squared residual at the finest level, m^2.
    pub max_mse: f64,
    pub segmented_ratio_stop: f64,
    pub rng_seed: u64,
    pub max_levels: usize,
    /// Pooling cell for building the first coarse level, meters.
    pub base_grid: f64,
    /// Curved fits with a larger radius are rejected, meters.
    pub max_radius: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            sigma_dis: 0.5,
            sigma_nv: 0.7,
            sigma_rgb: 30.0,
            inlier_distance: 0.4,
            coarse_inlier_distance: 0.7,
            max_iterations: 400,
            min_roof_points: 60,
            max_mse: 0.25,
            segmented_ratio_stop: 0.98,
            rng_seed: 0,
            max_levels: 3,
            base_grid: 0.5,
            max_radius: 200.0,
        }
    }
}

impl RansacConfig {
    /// Weights reduce to 1 and the score to an inlier count.
    pub fn conventional(self) -> Self {
        Self {
            sigma_dis: 1e9,
            sigma_nv: 1e9,
            sigma_rgb: 1e9,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_dis", self.sigma_dis),
            ("sigma_nv", self.sigma_nv),
            ("sigma_rgb", self.sigma_rgb),
            ("inlier_distance", self.inlier_distance),
            ("coarse_inlier_distance", self.coarse_inlier_distance),
            ("max_mse", self.max_mse),
            ("segmented_ratio_stop", self.segmented_ratio_stop),
            ("base_grid", self.base_grid),
            ("max_radius", self.max_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.segmented_ratio_stop > 1.0 {
            return Err(Error::InvalidArgument("segmented_ratio_stop must be <= 1".into()));
        }
        if self.max_iterations == 0 || self.min_roof_points == 0 || self.max_levels == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations, min_roof_points and max_levels must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A fitted primitive with its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub primitive: Primitive,
    /// Indices into the finest-level cloud handed to the extractor.
    pub inliers: Vec<usize>,
    pub score: f64,
    pub mse: f64,
    /// Pyramid level the model was first extracted at.
    pub level: usize,
    /// Band every inlier lies within.
    pub inlier_distance: f64,
}

/// Seed for one extraction stream, mixed from a master seed and a path such
/// as (cluster, level, extraction).
pub fn stream_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x5851_f42d_4c95_7f2d);
    for &p in path {
        h = splitmix64(h ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    h
}

pub fn stream_rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, path))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_by_path() {
        assert_ne!(stream_seed(1, &[0, 0, 0]), stream_seed(1, &[0, 0, 1]));
        assert_ne!(stream_seed(1, &[0, 1, 0]), stream_seed(1, &[1, 0, 0]));
        assert_eq!(stream_seed(7, &[3, 2]), stream_seed(7, &[3, 2]));
    }

    #[test]
    fn config_validation() {
        assert!(RansacConfig::default().validate().is_ok());
        let bad = RansacConfig {
            segmented_ratio_stop: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RansacConfig {
            sigma_nv: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
