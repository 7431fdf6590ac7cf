use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::point::PointCloud;
use crate::stats::median;

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Ortho-rectified grid. The origin is the lower-left corner; row 0 is the
/// southernmost row. Files are written north row first.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub origin_x: f64,
    pub origin_y: f64,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub nodata: f64,
}

impl RasterGrid {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        resolution: f64,
        width: usize,
        height: usize,
        fill: f64,
    ) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidArgument(format!("resolution {resolution}")));
        }
        Ok(Self {
            origin_x,
            origin_y,
            resolution,
            width,
            height,
            values: vec![fill; width * height],
            nodata: DEFAULT_NODATA,
        })
    }

    /// Grid covering `[min_x, max_x] x [min_y, max_y]`, origin snapped to a
    /// multiple of the resolution.
    pub fn covering(bounds: [f64; 4], resolution: f64, fill: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidArgument(format!("resolution {resolution}")));
        }
        let ox = (bounds[0] / resolution).floor() * resolution;
        let oy = (bounds[1] / resolution).floor() * resolution;
        let w = ((bounds[2] - ox) / resolution).floor() as usize + 1;
        let h = ((bounds[3] - oy) / resolution).floor() as usize + 1;
        Self::new(ox, oy, resolution, w, h, fill)
    }

    /// Same geometry, every cell set to `fill`.
    pub fn like(other: &RasterGrid, fill: f64) -> Self {
        Self {
            values: vec![fill; other.values.len()],
            ..other.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn idx(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[self.idx(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        let i = self.idx(col, row);
        self.values[i] = v;
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    pub fn value(&self, col: usize, row: usize) -> Option<f64> {
        let v = self.get(col, row);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.origin_x) / self.resolution).floor();
        let r = ((y - self.origin_y) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            None
        } else {
            Some((c as usize, r as usize))
        }
    }

    pub fn center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.resolution,
            self.origin_y + (row as f64 + 0.5) * self.resolution,
        )
    }

    /// Value of the cell containing `(x, y)`; `None` outside or at nodata.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (c, r) = self.cell_of(x, y)?;
        self.value(c, r)
    }

    /// Value of the nearest in-extent cell, ignoring nodata.
    pub fn sample_clamped(&self, x: f64, y: f64) -> Option<f64> {
        if self.width == 0 || self.height == 0 {
            return None;
        }
        let c = ((x - self.origin_x) / self.resolution).floor();
        let r = ((y - self.origin_y) / self.resolution).floor();
        let c = c.clamp(0.0, (self.width - 1) as f64) as usize;
        let r = r.clamp(0.0, (self.height - 1) as f64) as usize;
        self.value(c, r)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some()
    }

    pub fn same_geometry(&self, other: &RasterGrid) -> bool {
        self.width == other.width
            && self.height == other.height
            && (self.origin_x - other.origin_x).abs() < 1e-9
            && (self.origin_y - other.origin_y).abs() < 1e-9
            && (self.resolution - other.resolution).abs() < 1e-12
    }

    pub fn check_geometry(&self, other: &RasterGrid) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{}x{} @ ({}, {}) res {} vs {}x{} @ ({}, {}) res {}",
                self.width,
                self.height,
                self.origin_x,
                self.origin_y,
                self.resolution,
                other.width,
                other.height,
                other.origin_x,
                other.origin_y,
                other.resolution
            )))
        }
    }

    /// True where a mask cell holds 1 (nodata reads as 0).
    pub fn is_set(&self, i: usize) -> bool {
        let v = self.values[i];
        !self.is_nodata(v) && v >= 0.5
    }

    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ncols {}", self.width);
        let _ = writeln!(s, "nrows {}", self.height);
        let _ = writeln!(s, "xllcorner {}", self.origin_x);
        let _ = writeln!(s, "yllcorner {}", self.origin_y);
        let _ = writeln!(s, "cellsize {}", self.resolution);
        let _ = writeln!(s, "NODATA_value {}", self.nodata);
        for row in (0..self.height).rev() {
            let line: Vec<String> = (0..self.width)
                .map(|c| format_value(self.get(c, row)))
                .collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_ascii()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_ascii(&text, path)
    }

    pub fn parse_ascii(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut header = |key: &str| -> Result<f64> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("missing {key} header")))?;
            let mut it = line.split_whitespace();
            match (it.next(), it.next()) {
                (Some(k), Some(v)) if k.eq_ignore_ascii_case(key) => v
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, no + 1, format!("bad {key} value '{v}'"))),
                _ => Err(Error::parse(path, no + 1, format!("expected '{key} <value>'"))),
            }
        };
        let ncols = header("ncols")?;
        let nrows = header("nrows")?;
        let xll = header("xllcorner")?;
        let yll = header("yllcorner")?;
        let cellsize = header("cellsize")?;
        let nodata = header("NODATA_value")?;
        if ncols < 0.0 || nrows < 0.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
            return Err(Error::parse(path, 1, "ncols/nrows must be non-negative integers"));
        }
        if !(cellsize > 0.0) {
            return Err(Error::parse(path, 5, "cellsize must be positive"));
        }
        let (w, h) = (ncols as usize, nrows as usize);
        let mut grid = Self::new(xll, yll, cellsize, w, h, nodata)?;
        grid.nodata = nodata;
        let mut file_row = 0usize;
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if file_row >= h {
                return Err(Error::parse(path, no + 1, "more rows than nrows"));
            }
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != w {
                return Err(Error::parse(
                    path,
                    no + 1,
                    format!("expected {w} values, found {}", vals.len()),
                ));
            }
            let row = h - 1 - file_row;
            for (c, v) in vals.iter().enumerate() {
                let v: f64 = v
                    .parse()
                    .map_err(|_| Error::parse(path, no + 1, format!("bad value '{v}'")))?;
                grid.set(c, row, v);
            }
            file_row += 1;
        }
        if file_row != h {
            return Err(Error::parse(
                path,
                text.lines().count(),
                format!("expected {h} rows, found {file_row}"),
            ));
        }
        Ok(grid)
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.6}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reducer {
    Max,
    Median,
}

/// Per-cell reduction of point heights. Empty cells hold nodata.
pub fn rasterize_height(cloud: &PointCloud, resolution: f64, reducer: Reducer) -> Result<RasterGrid> {
    let bounds = cloud
        .bounds_2d()
        .ok_or(Error::TooFewPoints { required: 1, actual: 0 })?;
    let mut grid = RasterGrid::covering(bounds, resolution, DEFAULT_NODATA)?;
    rasterize_into(cloud, &mut grid, reducer);
    Ok(grid)
}

/// Rasterizes onto an existing grid geometry; points outside are ignored.
pub fn rasterize_into(cloud: &PointCloud, grid: &mut RasterGrid, reducer: Reducer) {
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    for p in cloud.points() {
        if let Some((c, r)) = grid.cell_of(p.x, p.y) {
            buckets[grid.idx(c, r)].push(p.z);
        }
    }
    for (i, mut zs) in buckets.into_iter().enumerate() {
        grid.values[i] = if zs.is_empty() {
            grid.nodata
        } else {
            match reducer {
                Reducer::Max => zs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Reducer::Median => median(&mut zs),
            }
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::Point;

    fn cloud(pts: &[(f64, f64, f64)]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&(x, y, z)| Point::xyz(x, y, z)).collect())
    }

    #[test]
    fn max_and_median_reducers() {
        let c = cloud(&[(0.1, 0.1, 1.0), (0.2, 0.3, 2.0), (0.4, 0.2, 3.0), (0.3, 0.4, 4.0)]);
        let g = rasterize_height(&c, 1.0, Reducer::Max).unwrap();
        assert_eq!((g.width, g.height), (1, 1));
        assert_eq!(g.values[0], 4.0);
        let g = rasterize_height(&c, 1.0, Reducer::Median).unwrap();
        assert_eq!(g.values[0], 2.5);
    }

    #[test]
    fn separated_points_leave_nodata_between() {
        let c = cloud(&[(0.5, 0.5, 1.0), (2.5, 0.5, 1.0)]);
        let g = rasterize_height(&c, 1.0, Reducer::Max).unwrap();
        let occupied = g.values.iter().filter(|v| !g.is_nodata(**v)).count();
        assert_eq!(occupied, 2);
        assert_eq!(g.width, 3);
        assert!(g.is_nodata(g.get(1, 0)));
    }

    #[test]
    fn ascii_round_trip() {
        let mut g = RasterGrid::new(10.0, 20.0, 0.5, 3, 2, 0.0).unwrap();
        g.set(0, 0, 1.25);
        g.set(2, 1, g.nodata);
        let text = g.to_ascii();
        let back = RasterGrid::parse_ascii(&text, Path::new("mem")).unwrap();
        assert_eq!(back, g);
        // north row first
        assert!(text.lines().nth(6).unwrap().ends_with("-9999"));
    }

    #[test]
    fn short_row_is_reported_with_line() {
        let text = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1\n";
        match RasterGrid::parse_ascii(text, Path::new("m")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }
}
