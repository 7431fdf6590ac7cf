//! ASCII point-cloud and label files.
//!
//! Cloud files start with `rooffit v1 n=<count> cols=<c1,c2,...>` followed
//! by one whitespace-separated row per point. Columns `x y z r g b` are
//! required; `nx ny nz` and `label` are optional. An all-zero normal marks a
//! point whose normal could not be estimated.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::point::{Point, PointCloud, ShapeLabel};

const MAGIC: &str = "rooffit";
const LABEL_MAGIC: &str = "rooffit-labels";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    X,
    Y,
    Z,
    R,
    G,
    B,
    Nx,
    Ny,
    Nz,
    Label,
}

impl Column {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "x" => Column::X,
            "y" => Column::Y,
            "z" => Column::Z,
            "r" => Column::R,
            "g" => Column::G,
            "b" => Column::B,
            "nx" => Column::Nx,
            "ny" => Column::Ny,
            "nz" => Column::Nz,
            "label" => Column::Label,
            _ => return None,
        })
    }
}

pub fn format_point_cloud(cloud: &PointCloud) -> String {
    let normals = cloud.normals();
    let labels = cloud.labels();
    let mut cols = vec!["x", "y", "z", "r", "g", "b"];
    if normals.is_some() {
        cols.extend(["nx", "ny", "nz"]);
    }
    if labels.is_some() {
        cols.push("label");
    }
    let mut s = String::with_capacity(cloud.len() * 48 + 64);
    let _ = writeln!(s, "{MAGIC} v1 n={} cols={}", cloud.len(), cols.join(","));
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(s, "{} {} {} {} {} {}", p.x, p.y, p.z, p.r, p.g, p.b);
        if let Some(n) = normals {
            let n = n[i].unwrap_or_else(Vector3::zeros);
            let _ = write!(s, " {} {} {}", n.x, n.y, n.z);
        }
        if let Some(l) = labels {
            let _ = write!(s, " {}", l[i].code());
        }
        s.push('\n');
    }
    s
}

pub fn write_point_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_point_cloud(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_point_cloud(&text, path)
}

pub fn parse_point_cloud(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let (count, cols) = parse_header(header, path)?;
    let pos = |c: Column| cols.iter().position(|&x| x == c);
    let required = [Column::X, Column::Y, Column::Z, Column::R, Column::G, Column::B];
    for c in required {
        if pos(c).is_none() {
            return Err(Error::parse(path, 1, format!("missing required column {c:?}")));
        }
    }
    let normal_cols = [pos(Column::Nx), pos(Column::Ny), pos(Column::Nz)];
    let has_normals = normal_cols.iter().all(Option::is_some);
    if !has_normals && normal_cols.iter().any(Option::is_some) {
        return Err(Error::parse(path, 1, "normal columns must appear together"));
    }
    let label_col = pos(Column::Label);
    let idx: Vec<usize> = required.iter().map(|&c| pos(c).unwrap()).collect();

    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::new();
    let mut labels = Vec::new();
    for (no, line) in lines {
        let line_no = no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} columns, found {}", cols.len(), fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad number '{}'", fields[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(path, line_no, "non-finite value"))
            }
        };
        let channel = |i: usize| -> Result<u8> {
            fields[i].parse::<u8>().map_err(|_| {
                Error::parse(path, line_no, format!("color '{}' not in 0..=255", fields[i]))
            })
        };
        points.push(Point::new(
            num(idx[0])?,
            num(idx[1])?,
            num(idx[2])?,
            channel(idx[3])?,
            channel(idx[4])?,
            channel(idx[5])?,
        ));
        if has_normals {
            let n = Vector3::new(
                num(normal_cols[0].unwrap())?,
                num(normal_cols[1].unwrap())?,
                num(normal_cols[2].unwrap())?,
            );
            let len = n.norm();
            normals.push(if len == 0.0 {
                None
            } else if (len - 1.0).abs() <= 1e-6 {
                Some(n / len)
            } else {
                return Err(Error::parse(path, line_no, "normal is not unit length"));
            });
        }
        if let Some(c) = label_col {
            let code: i64 = fields[c]
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad label '{}'", fields[c])))?;
            labels.push(
                ShapeLabel::from_code(code)
                    .map_err(|e| Error::parse(path, line_no, e.to_string()))?,
            );
        }
    }
    if points.len() != count {
        return Err(Error::parse(
            path,
            1,
            format!("header declares n={count} but {} rows follow", points.len()),
        ));
    }
    let mut cloud = PointCloud::new(points);
    if has_normals {
        cloud = cloud.with_normals(normals)?;
    }
    if label_col.is_some() {
        cloud = cloud.with_labels(labels)?;
    }
    Ok(cloud)
}

fn parse_header(line: &str, path: &Path) -> Result<(usize, Vec<Column>)> {
    let mut it = line.split_whitespace();
    if it.next() != Some(MAGIC) || it.next() != Some("v1") {
        return Err(Error::parse(path, 1, "expected header 'rooffit v1 n=<count> cols=<list>'"));
    }
    let mut count = None;
    let mut cols = None;
    for tok in it {
        if let Some(v) = tok.strip_prefix("n=") {
            count = Some(
                v.parse::<usize>()
                    .map_err(|_| Error::parse(path, 1, format!("bad count '{v}'")))?,
            );
        } else if let Some(v) = tok.strip_prefix("cols=") {
            let parsed: Option<Vec<Column>> = v.split(',').map(Column::parse).collect();
            cols = Some(parsed.ok_or_else(|| Error::parse(path, 1, format!("bad column list '{v}'")))?);
        } else {
            return Err(Error::parse(path, 1, format!("unexpected header token '{tok}'")));
        }
    }
    match (count, cols) {
        (Some(n), Some(c)) => Ok((n, c)),
        _ => Err(Error::parse(path, 1, "header needs n= and cols=")),
    }
}

pub fn format_labels(labels: &[ShapeLabel]) -> String {
    let mut s = format!("{LABEL_MAGIC} v1 n={}\n", labels.len());
    for l in labels {
        let _ = writeln!(s, "{}", l.code());
    }
    s
}

pub fn write_labels(labels: &[ShapeLabel], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_labels(labels)).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<ShapeLabel>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<ShapeLabel>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty label file"))?;
    let mut it = header.split_whitespace();
    if it.next() != Some(LABEL_MAGIC) || it.next() != Some("v1") {
        return Err(Error::parse(path, 1, "expected header 'rooffit-labels v1 n=<count>'"));
    }
    let count: usize = it
        .next()
        .and_then(|t| t.strip_prefix("n="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(path, 1, "header needs n=<count>"))?;
    let mut labels = Vec::with_capacity(count);
    for (no, line) in lines {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let code: i64 = t
            .parse()
            .map_err(|_| Error::parse(path, no + 1, format!("bad label '{t}'")))?;
        labels.push(ShapeLabel::from_code(code).map_err(|e| Error::parse(path, no + 1, e.to_string()))?);
    }
    if labels.len() != count {
        return Err(Error::LengthMismatch {
            expected: count,
            actual: labels.len(),
        });
    }
    Ok(labels)
}
