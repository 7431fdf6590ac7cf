//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Paths are resolved
//! against the directory holding the config file. Module parameters use a
//! dotted prefix, e.g. `ransac.inlier_distance = 0.4`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use crate::pipeline::Settings;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub cloud: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub truth_mask: Option<PathBuf>,
    pub truth_dsm: Option<PathBuf>,
    /// Directory of `cluster_NNN.labels` files replacing the fallback labeler.
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads, 0 for one per core.
    pub jobs: usize,
    pub z_tolerance: f64,
    pub settings: Settings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cloud: None,
            mask: None,
            truth_mask: None,
            truth_dsm: None,
            labels: None,
            out: None,
            seed: 0,
            jobs: 0,
            z_tolerance: rooffit::eval::DEFAULT_Z_TOLERANCE,
            settings: Settings::new(),
        }
    }
}

trait Value: Sized {
    fn parse_value(s: &str) -> Option<Self>;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
        }
    )*};
}
from_str_value!(f64, usize, u64, bool);

/// `auto` leaves the value to be derived from the data.
impl Value for Option<f64> {
    fn parse_value(s: &str) -> Option<Self> {
        if s == "auto" {
            Some(None)
        } else {
            s.parse().ok().map(Some)
        }
    }
}

fn parse<T: Value>(key: &str, value: &str) -> Result<T> {
    T::parse_value(value).ok_or_else(|| anyhow!("bad value {value:?} for {key}"))
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::fs::canonicalize(dir).with_context(|| format!("resolving {}", dir.display()))?;
        Self::parse(&text, &base).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            cfg.set(key.trim(), value.trim(), base)
                .with_context(|| format!("line {}", n + 1))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || Some(base.join(value));
        let s = &mut self.settings;
        let (pre, clu, fb, rs, m) = (&mut s.preprocess, &mut s.cluster, &mut s.fallback, &mut s.ransac, &mut s.model);
        match key {
            "cloud" => self.cloud = path(),
            "mask" => self.mask = path(),
            "truth_mask" => self.truth_mask = path(),
            "truth_dsm" => self.truth_dsm = path(),
            "labels" => self.labels = path(),
            "out" => self.out = path(),
            "seed" => self.seed = parse(key, value)?,
            "jobs" => self.jobs = parse(key, value)?,
            "z_tolerance" => self.z_tolerance = parse(key, value)?,
            "normals_k" => s.normals_k = parse(key, value)?,

            "preprocess.smoothing_radius" => pre.smoothing_radius = parse(key, value)?,
            "preprocess.preserve_creases" => pre.preserve_creases = parse(key, value)?,
            "preprocess.median_grid_size" => pre.median_grid_size = parse(key, value)?,
            "preprocess.hole_area_threshold" => pre.hole_area_threshold = parse(key, value)?,
            "preprocess.fill_grid_spacing" => pre.fill_grid_spacing = parse(key, value)?,
            "preprocess.hole_max_edge" => pre.hole_max_edge = parse(key, value)?,
            "preprocess.dtm_resolution" => pre.dtm_resolution = parse(key, value)?,
            "preprocess.dtm_max_window" => pre.dtm_max_window = parse(key, value)?,
            "preprocess.dtm_slope" => pre.dtm_slope = parse(key, value)?,
            "preprocess.dtm_initial_height" => pre.dtm_initial_height = parse(key, value)?,
            "preprocess.dtm_max_height" => pre.dtm_max_height = parse(key, value)?,

            "cluster.tolerance" => clu.tolerance = parse(key, value)?,
            "cluster.min_points" => clu.min_points = parse(key, value)?,
            "cluster.min_height" => clu.min_height = parse(key, value)?,

            "segment.radius" => fb.radius = parse(key, value)?,
            "segment.planar_variance" => fb.planar_variance = parse(key, value)?,
            "segment.flat_angle" => fb.flat_angle = parse(key, value)?,
            "segment.crease_ratio" => fb.crease_ratio = parse(key, value)?,
            "segment.line_ratio" => fb.line_ratio = parse(key, value)?,
            "segment.axis_tilt" => fb.axis_tilt = parse(key, value)?,
            "segment.smoothing_radius" => fb.smoothing_radius = parse(key, value)?,

            "ransac.sigma_dis" => rs.sigma_dis = parse(key, value)?,
            "ransac.sigma_nv" => rs.sigma_nv = parse(key, value)?,
            "ransac.sigma_rgb" => rs.sigma_rgb = parse(key, value)?,
            "ransac.inlier_distance" => rs.inlier_distance = parse(key, value)?,
            "ransac.coarse_inlier_distance" => rs.coarse_inlier_distance = parse(key, value)?,
            "ransac.max_iterations" => rs.max_iterations = parse(key, value)?,
            "ransac.min_roof_points" => rs.min_roof_points = parse(key, value)?,
            "ransac.max_mse" => rs.max_mse = parse(key, value)?,
            "ransac.segmented_ratio_stop" => rs.segmented_ratio_stop = parse(key, value)?,
            "ransac.max_levels" => rs.max_levels = parse(key, value)?,
            "ransac.base_grid" => rs.base_grid = parse(key, value)?,
            "ransac.max_radius" => rs.max_radius = parse(key, value)?,

            "model.alpha" => m.alpha = parse(key, value)?,
            "model.boundary_offset" => m.boundary_offset = parse(key, value)?,
            "model.adjacency_gap" => m.adjacency_gap = parse(key, value)?,
            "model.snap_distance" => m.snap_distance = parse(key, value)?,
            "model.max_chord_deviation" => m.max_chord_deviation = parse(key, value)?,
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Module settings with the master seed applied.
    pub fn seeded_settings(&self) -> Settings {
        let mut s = self.settings.clone();
        s.ransac.rng_seed = self.seed;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_resolve_against_the_config_directory() {
        let cfg = RunConfig::parse("cloud = data/c.txt\n# note\n\nseed=7\n", Path::new("/work")).unwrap();
        assert_eq!(cfg.cloud.unwrap(), PathBuf::from("/work/data/c.txt"));
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("colour = red\n", Path::new(".")).unwrap_err();
        assert!(format!("{err:#}").contains("unknown config key"));
    }

    #[test]
    fn module_parameters_are_set() {
        let cfg = RunConfig::parse(
            "ransac.inlier_distance = 0.3\nmodel.alpha = auto\nmodel.boundary_offset = 0.2\npreprocess.preserve_creases = false\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.settings.ransac.inlier_distance, 0.3);
        assert_eq!(cfg.settings.model.alpha, None);
        assert_eq!(cfg.settings.model.boundary_offset, Some(0.2));
        assert!(!cfg.settings.preprocess.preserve_creases);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let err = RunConfig::parse("seed = 1\nseed 2\n", Path::new(".")).unwrap_err();
        assert!(format!("{err:#}").contains("line 2"));
        let err = RunConfig::parse("seed = x\n", Path::new(".")).unwrap_err();
        assert!(format!("{err:#}").contains("bad value"));
    }
}
