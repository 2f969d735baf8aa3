//! ASCII PLY and whitespace XYZ point clouds.
//!
//! PLY files carry a `vertex` element with `x y z` and an optional integer
//! `label` property; other vertex properties are skipped and other elements
//! are ignored. XYZ files hold one point per line with an optional fourth
//! integer column for the label. Lines starting with `#` and blank lines are
//! skipped in XYZ. Coordinates are written with the shortest representation
//! that reads back to the same `f64`.

use std::fmt::{self, Write as _};
use std::path::Path;

use equicanon_core::{PointCloud, Vec3};
use thiserror::Error;

use crate::error::{CliError, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    #[default]
    Ply,
    Xyz,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<CloudFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(CloudFormat::Ply),
            "xyz" | "txt" => Some(CloudFormat::Xyz),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            CloudFormat::Ply => "ply",
            CloudFormat::Xyz => "xyz",
        }
    }
}

impl fmt::Display for CloudFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    let v: f64 = tok.parse().map_err(|_| err(line, format!("invalid {what} `{tok}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err(line, format!("non-finite {what} `{tok}`")))
    }
}

fn parse_label(tok: &str, line: usize) -> Result<i64, ParseError> {
    tok.parse().map_err(|_| err(line, format!("invalid label `{tok}`")))
}

pub fn parse_xyz(text: &str) -> Result<PointCloud, ParseError> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut columns = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() != 3 && toks.len() != 4 {
            return Err(err(line, format!("expected 3 or 4 columns, found {}", toks.len())));
        }
        match columns {
            None => columns = Some(toks.len()),
            Some(c) if c != toks.len() => {
                return Err(err(line, format!("expected {c} columns like the first point, found {}", toks.len())))
            }
            Some(_) => {}
        }
        points.push(Vec3::new(
            parse_f64(toks[0], line, "x")?,
            parse_f64(toks[1], line, "y")?,
            parse_f64(toks[2], line, "z")?,
        ));
        if toks.len() == 4 {
            labels.push(parse_label(toks[3], line)?);
        }
    }
    if columns == Some(4) {
        Ok(PointCloud { points, labels: Some(labels) })
    } else {
        Ok(PointCloud::new(points))
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
    header_line: usize,
}

pub fn parse_ply(text: &str) -> Result<PointCloud, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(err(1, "missing `ply` magic")),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let mut last_line = 1;
    loop {
        let Some((line, s)) = lines.next() else {
            return Err(err(last_line, "header ends without `end_header`"));
        };
        last_line = line;
        let toks: Vec<&str> = s.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => saw_format = true,
            ["format", other, ..] => return Err(err(line, format!("unsupported format `{other}`; only ascii is read"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count.parse().map_err(|_| err(line, format!("invalid element count `{count}`")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new(), header_line: line });
            }
            ["property", "list", ..] => {
                let el = elements.last_mut().ok_or_else(|| err(line, "property before any element"))?;
                if el.name == "vertex" {
                    return Err(err(line, "list properties on vertices are not supported"));
                }
                el.properties.push(toks.last().unwrap_or(&"").to_string());
            }
            ["property", _ty, name] => {
                let el = elements.last_mut().ok_or_else(|| err(line, "property before any element"))?;
                el.properties.push(name.to_string());
            }
            _ => return Err(err(line, format!("unrecognized header line `{s}`"))),
        }
    }
    if !saw_format {
        return Err(err(last_line, "missing `format ascii 1.0` line"));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut found_vertex = false;
    let mut has_label = false;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                let (line, _) = lines.next().ok_or_else(|| err(last_line, format!("missing `{}` rows", el.name)))?;
                last_line = line;
            }
            continue;
        }
        found_vertex = true;
        let col = |name: &str| el.properties.iter().position(|p| p == name);
        let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(err(el.header_line, "vertex element needs x, y and z properties")),
        };
        let li = col("label");
        has_label = li.is_some();
        points.reserve(el.count);
        for read in 0..el.count {
            let (line, s) = loop {
                match lines.next() {
                    Some((_, "")) => continue,
                    Some(l) => break l,
                    None => return Err(err(last_line, format!("expected {} vertices, found {read}", el.count))),
                }
            };
            last_line = line;
            let toks: Vec<&str> = s.split_whitespace().collect();
            if toks.len() != el.properties.len() {
                return Err(err(line, format!("expected {} values, found {}", el.properties.len(), toks.len())));
            }
            points.push(Vec3::new(
                parse_f64(toks[xi], line, "x")?,
                parse_f64(toks[yi], line, "y")?,
                parse_f64(toks[zi], line, "z")?,
            ));
            if let Some(li) = li {
                labels.push(parse_label(toks[li], line)?);
            }
        }
    }
    if !found_vertex {
        return Err(err(last_line, "no vertex element"));
    }
    if let Some((line, s)) = lines.find(|(_, s)| !s.is_empty()) {
        return Err(err(line, format!("unexpected data after the last element: `{s}`")));
    }
    Ok(PointCloud { points, labels: has_label.then_some(labels) })
}

pub fn to_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48);
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(l) = cloud.label(i) {
            let _ = write!(out, " {l}");
        }
        out.push('\n');
    }
    out
}

pub fn to_ply(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(128 + cloud.len() * 48);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.labels.is_some() {
        out.push_str("property int label\n");
    }
    out.push_str("end_header\n");
    out.push_str(&to_xyz(cloud));
    out
}

pub fn parse_cloud(text: &str, format: CloudFormat) -> Result<PointCloud, ParseError> {
    match format {
        CloudFormat::Ply => parse_ply(text),
        CloudFormat::Xyz => parse_xyz(text),
    }
}

pub fn format_cloud(cloud: &PointCloud, format: CloudFormat) -> String {
    match format {
        CloudFormat::Ply => to_ply(cloud),
        CloudFormat::Xyz => to_xyz(cloud),
    }
}

fn format_of(path: &Path) -> Result<CloudFormat> {
    CloudFormat::from_path(path)
        .ok_or_else(|| CliError::Data(format!("{}: unknown cloud format (expected .ply or .xyz)", path.display())))
}

/// Reads a cloud, choosing the format from the extension.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let format = format_of(path)?;
    let text = fsutil::read_to_string(path)?;
    parse_cloud(&text, format).map_err(|source| CliError::Parse { path: path.to_path_buf(), source })
}

/// Writes a cloud atomically, choosing the format from the extension.
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let format = format_of(path)?;
    fsutil::write_atomic(path, format_cloud(cloud, format).as_bytes())
}
