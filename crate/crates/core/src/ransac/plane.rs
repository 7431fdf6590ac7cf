use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::Rng;

use super::weight::{score_indices, score_only, weight_parts, Samples};
use super::{stream_rng, FitResult, RansacConfig};
use crate::error::{Error, Result};
use crate::point::PointCloud;
use crate::primitive::Primitive;

/// Best-scoring plane over the whole cloud, refined on its inliers.
pub fn ransac_plane(cloud: &PointCloud, cfg: &RansacConfig) -> Result<FitResult> {
    cfg.validate()?;
    let samples = Samples::from_cloud(cloud);
    let all: Vec<usize> = (0..samples.len()).collect();
    let mut rng = stream_rng(cfg.rng_seed, &[0, 0, 0]);
    fit_plane_subset(&samples, &all, cfg, cfg.inlier_distance, &mut rng)
}

fn plane_from_three(samples: &Samples, idx: [usize; 3]) -> Option<Primitive> {
    let [a, b, c] = idx.map(|i| samples.pos[i]);
    let n = (b - a).cross(&(c - a));
    let scale = (b - a).norm() * (c - a).norm();
    if !(n.norm() > 1e-9 * scale) || scale == 0.0 {
        return None;
    }
    let color = samples.mean_color(&idx);
    Primitive::plane_through(&a, n, color).ok()
}

pub(crate) fn fit_plane_subset<R: Rng>(
    samples: &Samples,
    subset: &[usize],
    cfg: &RansacConfig,
    band: f64,
    rng: &mut R,
) -> Result<FitResult> {
    if subset.len() < 3 {
        return Err(Error::TooFewPoints {
            required: 3,
            actual: subset.len(),
        });
    }
    let hypotheses: Vec<Option<Primitive>> = (0..cfg.max_iterations)
        .map(|_| {
            let pick = sample(rng, subset.len(), 3);
            plane_from_three(samples, [subset[pick.index(0)], subset[pick.index(1)], subset[pick.index(2)]])
        })
        .collect();
    let scores = score_all(&hypotheses, |p| score_only(samples, subset, p, cfg, band));
    let best = best_index(&scores)
        .ok_or_else(|| Error::Degenerate("every plane hypothesis was collinear".into()))?;
    let hypothesis = hypotheses[best].unwrap();
    let (_, inliers) = score_indices(samples, subset, &hypothesis, cfg, band);

    let refined = refine_plane(samples, &inliers, &hypothesis, cfg).unwrap_or(hypothesis);
    let (score, final_inliers) = score_indices(samples, subset, &refined, cfg, band);
    let (primitive, score, inliers) = if final_inliers.len() >= 3 {
        (refined, score, final_inliers)
    } else {
        let (s, i) = score_indices(samples, subset, &hypothesis, cfg, band);
        (hypothesis, s, i)
    };
    let mse = mean_squared_distance(samples, &inliers, &primitive);
    Ok(FitResult {
        primitive,
        inliers,
        score,
        mse,
        level: 0,
        inlier_distance: band,
    })
}

pub(crate) fn score_all<T: Sync>(hyps: &[Option<T>], score: impl Fn(&T) -> f64 + Sync) -> Vec<Option<f64>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        hyps.par_iter().map(|h| h.as_ref().map(&score)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        hyps.iter().map(|h| h.as_ref().map(&score)).collect()
    }
}

/// Highest score, earliest hypothesis on ties.
pub(crate) fn best_index(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub(crate) fn mean_squared_distance(samples: &Samples, inliers: &[usize], prim: &Primitive) -> f64 {
    if inliers.is_empty() {
        return 0.0;
    }
    inliers
        .iter()
        .map(|&i| prim.distance(&samples.pos[i]).powi(2))
        .sum::<f64>()
        / inliers.len() as f64
}

/// Weighted total-least-squares plane over `inliers`, each point weighted
/// by its multi-cue weight against `guide`. The seed color becomes the mean
/// inlier color.
pub fn refine_plane(
    samples: &Samples,
    inliers: &[usize],
    guide: &Primitive,
    cfg: &RansacConfig,
) -> Option<Primitive> {
    if inliers.len() < 3 {
        return None;
    }
    let weights: Vec<f64> = inliers
        .iter()
        .map(|&i| {
            let p = &samples.pos[i];
            weight_parts(p, samples.normal[i].as_ref(), &samples.color[i], guide, guide.distance(p), cfg)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 1e-12) {
        return None;
    }
    let centroid = inliers
        .iter()
        .zip(&weights)
        .fold(Vector3::zeros(), |acc, (&i, &w)| acc + samples.pos[i] * w)
        / total;
    let mut cov = Matrix3::zeros();
    for (&i, &w) in inliers.iter().zip(&weights) {
        let d = samples.pos[i] - centroid;
        cov += d * d.transpose() * w;
    }
    let eig = SymmetricEigen::new(cov / total);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if !(eig.eigenvalues[order[1]] > 1e-12 * eig.eigenvalues[order[2]].max(1e-300)) {
        return None;
    }
    let normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    Primitive::plane_through(&centroid, normal, samples.mean_color(inliers)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::Point;
    use crate::primitive::Shape;

    #[test]
    fn exact_plane() {
        let pts: Vec<Point> = (0..200)
            .map(|i| Point::xyz((i % 20) as f64 * 0.5, (i / 20) as f64 * 0.7, 3.0))
            .collect();
        let fit = ransac_plane(&PointCloud::new(pts), &RansacConfig::default()).unwrap();
        match fit.primitive.shape {
            Shape::Plane { normal, offset } => {
                assert!((normal - Vector3::z()).norm() < 1e-9);
                assert!((offset - 3.0).abs() < 1e-9);
            }
            _ => unreachable!(),
        }
        assert!(fit.mse < 1e-12);
        assert_eq!(fit.inliers.len(), 200);
    }

    #[test]
    fn two_points_is_an_error() {
        let pts = vec![Point::xyz(0.0, 0.0, 0.0), Point::xyz(1.0, 0.0, 0.0)];
        assert!(ransac_plane(&PointCloud::new(pts), &RansacConfig::default()).is_err());
    }

    #[test]
    fn collinear_only_is_degenerate() {
        let pts: Vec<Point> = (0..10).map(|i| Point::xyz(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            ransac_plane(&PointCloud::new(pts), &RansacConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }
}
