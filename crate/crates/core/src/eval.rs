//! Rendering models back to rasters and scoring them against references.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{point_in_polygon, Vec2};
use crate::model::BuildingModel;
use crate::raster::RasterGrid;

pub const DEFAULT_Z_TOLERANCE: f64 = 1.0;

/// Completeness, correctness and intersection over union.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub comp: f64,
    pub corr: f64,
    pub iou: f64,
}

impl Scores {
    /// Scores from true-positive, false-positive and false-negative counts.
    /// All three are 1 when there is nothing to find and nothing found.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        if tp + fp + fn_ == 0 {
            return Self {
                comp: 1.0,
                corr: 1.0,
                iou: 1.0,
            };
        }
        Self {
            comp: ratio(tp, tp + fn_),
            corr: ratio(tp, tp + fp),
            iou: ratio(tp, tp + fp + fn_),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub d2: Scores,
    pub d3: Scores,
    pub z_tolerance: f64,
}

impl EvalReport {
    pub fn format(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("comp2d", self.d2.comp),
            ("corr2d", self.d2.corr),
            ("iou2d", self.d2.iou),
            ("comp3d", self.d3.comp),
            ("corr3d", self.d3.corr),
            ("iou3d", self.d3.iou),
            ("z_tolerance", self.z_tolerance),
        ] {
            let _ = writeln!(s, "{k}={v:.6}");
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut vals = std::collections::HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, n + 1, "expected key=value"))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| Error::parse(path, n + 1, format!("{k}: {e}")))?;
            vals.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| {
            vals.get(k)
                .copied()
                .ok_or_else(|| Error::parse(path, 0, format!("missing key {k}")))
        };
        Ok(Self {
            d2: Scores {
                comp: get("comp2d")?,
                corr: get("corr2d")?,
                iou: get("iou2d")?,
            },
            d3: Scores {
                comp: get("comp3d")?,
                corr: get("corr3d")?,
                iou: get("iou3d")?,
            },
            z_tolerance: get("z_tolerance")?,
        })
    }
}

/// Grid over the DTM's extent at `resolution`.
fn render_grid(dtm: &RasterGrid, resolution: f64) -> Result<RasterGrid> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidArgument(format!("resolution {resolution}")));
    }
    let w = (dtm.width as f64 * dtm.resolution / resolution - 1e-9).ceil().max(0.0) as usize;
    let h = (dtm.height as f64 * dtm.resolution / resolution - 1e-9).ceil().max(0.0) as usize;
    RasterGrid::new(dtm.origin_x, dtm.origin_y, resolution, w, h, 0.0)
}

/// Binary mask and DSM of the models over the DTM's extent. A cell is
/// covered when its center lies inside a roof ring; its height is the
/// highest roof there, else the DTM.
pub fn render_scene(models: &[BuildingModel], dtm: &RasterGrid, resolution: f64) -> Result<(RasterGrid, RasterGrid)> {
    render_on(models, dtm, &render_grid(dtm, resolution)?)
}

/// Like [`render_scene`], on the cells of `template` (values ignored).
pub fn render_on(models: &[BuildingModel], dtm: &RasterGrid, template: &RasterGrid) -> Result<(RasterGrid, RasterGrid)> {
    let mut mask = RasterGrid::like(template, 0.0);
    let resolution = mask.resolution;
    let mut dsm = RasterGrid::like(&mask, mask.nodata);
    for row in 0..dsm.height {
        for col in 0..dsm.width {
            let (x, y) = dsm.center(col, row);
            if let Some(z) = dtm.sample_clamped(x, y) {
                dsm.set(col, row, z);
            }
        }
    }
    let mut top = vec![f64::NEG_INFINITY; mask.len()];
    for roof in models.iter().flat_map(|m| &m.roofs) {
        let ring = &roof.boundary;
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for p in ring {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let cell = |v: f64, o: f64, n: usize| ((v - o) / resolution).floor().clamp(0.0, n as f64) as usize;
        let (c0, c1) = (cell(lo.x, mask.origin_x, mask.width), cell(hi.x, mask.origin_x, mask.width));
        let (r0, r1) = (cell(lo.y, mask.origin_y, mask.height), cell(hi.y, mask.origin_y, mask.height));
        for row in r0..(r1 + 1).min(mask.height) {
            for col in c0..(c1 + 1).min(mask.width) {
                let (x, y) = mask.center(col, row);
                if point_in_polygon(&Vec2::new(x, y), ring) {
                    let i = mask.idx(col, row);
                    top[i] = top[i].max(roof.height(&Vec2::new(x, y)));
                }
            }
        }
    }
    for (i, z) in top.into_iter().enumerate() {
        if z > f64::NEG_INFINITY {
            mask.values[i] = 1.0;
            dsm.values[i] = z;
        }
    }
    Ok((mask, dsm))
}

pub fn render_model(model: &BuildingModel, dtm: &RasterGrid, resolution: f64) -> Result<(RasterGrid, RasterGrid)> {
    render_scene(std::slice::from_ref(model), dtm, resolution)
}

/// Cell-wise scores of a predicted mask against a reference mask.
pub fn score2d(pred: &RasterGrid, truth: &RasterGrid) -> Result<Scores> {
    pred.check_geometry(truth)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for i in 0..pred.len() {
        match (pred.is_set(i), truth.is_set(i)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Scores::from_counts(tp, fp, fn_))
}

/// Like [`score2d`], but a covered cell only counts as found when the two
/// heights also agree within `z_tolerance`.
pub fn score3d(
    pred_mask: &RasterGrid,
    pred_dsm: &RasterGrid,
    truth_mask: &RasterGrid,
    truth_dsm: &RasterGrid,
    z_tolerance: f64,
) -> Result<Scores> {
    pred_mask.check_geometry(truth_mask)?;
    pred_mask.check_geometry(pred_dsm)?;
    truth_mask.check_geometry(truth_dsm)?;
    if !(z_tolerance >= 0.0) {
        return Err(Error::InvalidArgument(format!("z tolerance {z_tolerance}")));
    }
    let (mut tp, mut n_pred, mut n_truth) = (0, 0, 0);
    for i in 0..pred_mask.len() {
        let (p, t) = (pred_mask.is_set(i), truth_mask.is_set(i));
        n_pred += p as usize;
        n_truth += t as usize;
        if p && t {
            let (a, b) = (pred_dsm.values[i], truth_dsm.values[i]);
            if !pred_dsm.is_nodata(a) && !truth_dsm.is_nodata(b) && (a - b).abs() <= z_tolerance {
                tp += 1;
            }
        }
    }
    Ok(Scores::from_counts(tp, n_pred - tp, n_truth - tp))
}

pub fn evaluate(
    pred_mask: &RasterGrid,
    pred_dsm: &RasterGrid,
    truth_mask: &RasterGrid,
    truth_dsm: &RasterGrid,
    z_tolerance: f64,
) -> Result<EvalReport> {
    Ok(EvalReport {
        d2: score2d(pred_mask, truth_mask)?,
        d3: score3d(pred_mask, pred_dsm, truth_mask, truth_dsm, z_tolerance)?,
        z_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble, RoofSegment};
    use crate::point::ShapeLabel;
    use crate::primitive::Primitive;
    use nalgebra::Vector3;

    fn mask(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> RasterGrid {
        let mut g = RasterGrid::new(0.0, 0.0, 1.0, w, h, 0.0).unwrap();
        for r in 0..h {
            for c in 0..w {
                g.set(c, r, if f(c, r) { 1.0 } else { 0.0 });
            }
        }
        g
    }

    fn flat_box(x0: f64, y0: f64, w: f64, h: f64, z: f64) -> RoofSegment {
        let ring = vec![
            Vec2::new(x0, y0),
            Vec2::new(x0 + w, y0),
            Vec2::new(x0 + w, y0 + h),
            Vec2::new(x0, y0 + h),
        ];
        let p = Primitive::plane(Vector3::z(), z, Vector3::zeros()).unwrap();
        RoofSegment::new(p, ring, ShapeLabel::Flat, Vec::new()).unwrap()
    }

    #[test]
    fn closed_form_2d() {
        let a = mask(10, 10, |c, _| c < 4);
        assert_eq!(score2d(&a, &a).unwrap(), Scores::from_counts(1, 0, 0));
        let b = mask(10, 10, |c, _| c >= 6);
        let s = score2d(&a, &b).unwrap();
        assert_eq!((s.comp, s.corr, s.iou), (0.0, 0.0, 0.0));
        let half = mask(10, 10, |c, _| c < 2);
        let s = score2d(&half, &a).unwrap();
        assert_eq!((s.comp, s.corr, s.iou), (0.5, 1.0, 0.5));
        let empty = mask(10, 10, |_, _| false);
        let s = score2d(&empty, &empty).unwrap();
        assert_eq!((s.comp, s.corr, s.iou), (1.0, 1.0, 1.0));
    }

    #[test]
    fn closed_form_3d() {
        let m = mask(8, 8, |c, r| c > 1 && r > 1);
        let dsm = RasterGrid::like(&m, 5.0);
        let s = score3d(&m, &dsm, &m, &dsm, 1.0).unwrap();
        assert_eq!((s.comp, s.corr, s.iou), (1.0, 1.0, 1.0));
        let off = RasterGrid::like(&m, 7.0);
        let s = score3d(&m, &off, &m, &dsm, 1.0).unwrap();
        assert_eq!((s.comp, s.corr, s.iou), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = mask(10, 10, |_, _| true);
        let b = mask(10, 9, |_, _| true);
        assert!(matches!(score2d(&a, &b), Err(Error::GeometryMismatch(_))));
        assert!(score3d(&a, &a, &b, &b, 1.0).is_err());
    }

    #[test]
    fn flat_roof_renders_its_cells() {
        let dtm = RasterGrid::new(0.0, 0.0, 1.0, 20, 20, 0.0).unwrap();
        let model = assemble(vec![flat_box(2.0, 3.0, 10.0, 10.0, 7.0)], &dtm, 0.5).unwrap();
        let (m, dsm) = render_model(&model, &dtm, 1.0).unwrap();
        assert_eq!((0..m.len()).filter(|&i| m.is_set(i)).count(), 100);
        for i in 0..m.len() {
            assert_eq!(dsm.values[i], if m.is_set(i) { 7.0 } else { 0.0 });
        }
    }

    #[test]
    fn empty_scene_is_the_dtm() {
        let mut dtm = RasterGrid::new(0.0, 0.0, 1.0, 6, 4, 0.0).unwrap();
        for (i, v) in dtm.values.iter_mut().enumerate() {
            *v = i as f64 * 0.1;
        }
        let (m, dsm) = render_scene(&[], &dtm, 1.0).unwrap();
        assert!((0..m.len()).all(|i| !m.is_set(i)));
        assert_eq!(dsm.values, dtm.values);
    }

    #[test]
    fn higher_roof_wins() {
        let dtm = RasterGrid::new(0.0, 0.0, 1.0, 20, 20, 0.0).unwrap();
        let low = assemble(vec![flat_box(0.0, 0.0, 10.0, 10.0, 4.0)], &dtm, 0.5).unwrap();
        let high = assemble(vec![flat_box(5.0, 5.0, 10.0, 10.0, 9.0)], &dtm, 0.5).unwrap();
        let (_, dsm) = render_scene(&[low, high], &dtm, 1.0).unwrap();
        assert_eq!(dsm.sample(7.5, 7.5), Some(9.0));
        assert_eq!(dsm.sample(2.5, 2.5), Some(4.0));
        assert_eq!(dsm.sample(12.5, 12.5), Some(9.0));
    }

    #[test]
    fn report_round_trips() {
        let r = EvalReport {
            d2: Scores::from_counts(9, 1, 2),
            d3: Scores::from_counts(7, 3, 4),
            z_tolerance: 1.0,
        };
        let back = EvalReport::parse(&r.format(), Path::new("r")).unwrap();
        assert!((back.d2.iou - r.d2.iou).abs() < 1e-6);
        assert!((back.d3.comp - r.d3.comp).abs() < 1e-6);
        assert!(EvalReport::parse("iou2d=1\n", Path::new("r")).is_err());
    }
}
