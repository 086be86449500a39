//! Text file formats: point clouds (XYZ, ASCII PLY), per-point feature
//! files, score CSVs, heatmap PLYs and label sidecars.
//!
//! Every format is line-oriented text so outputs stay inspectable and
//! diffable. Floating-point values in score files are written with 17
//! significant digits, which round-trips `f64` exactly; cloud and
//! heatmap files use the shortest representation that parses back to
//! the same value.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::eval::synthetic::DefectLabeling;
use crate::features::{FeatureError, FeatureMatrix};
use crate::geometry::{GeometryError, PointCloud};
use crate::scoring::ScoreSet;

/// Errors raised while reading or writing files.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: unsupported format: {msg}")]
    UnsupportedFormat { path: PathBuf, msg: String },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// A parsed cloud plus any non-fatal issues found while reading it.
#[derive(Debug)]
pub struct LoadedCloud {
    pub cloud: PointCloud,
    pub warnings: Vec<String>,
}

/// Normals whose length deviates from 1 by more than this are still
/// renormalized, but the file earns a warning.
const NORMAL_WARN_TOL: f64 = 1e-3;

fn read_text(path: &Path) -> Result<String, IoError> {
    let bytes = fs::read(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, token: &str) -> Result<f64, IoError> {
    let value: f64 = token
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid number {token:?}")))?;
    if !value.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {token:?}")));
    }
    Ok(value)
}

/// Reads a point cloud from an XYZ text file or an ASCII PLY file.
///
/// The format is detected from the content: a first line of `ply`
/// selects the PLY parser, anything else is treated as XYZ (one
/// whitespace-separated `x y z` triple per line, `#` comments
/// ignored). PLY vertex properties beyond `x y z nx ny nz` are
/// skipped; binary PLY is rejected. Point order is preserved exactly.
pub fn parse_point_cloud(path: &Path) -> Result<LoadedCloud, IoError> {
    let text = read_text(path)?;
    let first = text
        .lines()
        .map(|l| l.trim_end_matches('\r').trim())
        .find(|l| !l.is_empty());
    if first == Some("ply") {
        parse_ply(path, &text)
    } else {
        parse_xyz(path, &text)
    }
}

fn parse_xyz(path: &Path, text: &str) -> Result<LoadedCloud, IoError> {
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 3 values per line, found {}", tokens.len()),
            ));
        }
        let x = parse_f64(path, line_no, tokens[0])?;
        let y = parse_f64(path, line_no, tokens[1])?;
        let z = parse_f64(path, line_no, tokens[2])?;
        points.push(Point3::new(x, y, z));
    }
    Ok(LoadedCloud {
        cloud: PointCloud::new(points)?,
        warnings: Vec::new(),
    })
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    has_list: bool,
}

fn parse_ply(path: &Path, text: &str) -> Result<LoadedCloud, IoError> {
    let mut lines = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .enumerate()
        .map(|(i, l)| (i + 1, l));

    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    let mut header_end = 0usize;
    let (_, magic) = lines.next().unwrap_or((1, ""));
    if magic.trim() != "ply" {
        return Err(parse_err(path, 1, "missing ply magic line"));
    }
    for (line_no, raw) in lines.by_ref() {
        let line = raw.trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("format") => {
                let kind = tokens.next().unwrap_or("");
                if kind != "ascii" {
                    return Err(IoError::UnsupportedFormat {
                        path: path.to_path_buf(),
                        msg: format!("{kind} PLY (only ascii is supported)"),
                    });
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(path, line_no, "element without a name"))?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(path, line_no, "element without a count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, line_no, "property before any element"))?;
                let rest: Vec<&str> = tokens.collect();
                match rest.as_slice() {
                    ["list", _, _, name] => {
                        element.has_list = true;
                        element.properties.push((*name).to_string());
                    }
                    [_, name] => element.properties.push((*name).to_string()),
                    _ => return Err(parse_err(path, line_no, "malformed property line")),
                }
            }
            Some("end_header") => {
                header_end = line_no;
                break;
            }
            Some(other) => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("unrecognized header keyword {other:?}"),
                ));
            }
        }
    }
    if header_end == 0 {
        return Err(parse_err(path, 1, "header has no end_header line"));
    }
    if !saw_format {
        return Err(parse_err(path, header_end, "header has no format line"));
    }

    let vertex = elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(path, header_end, "header has no vertex element"))?;
    if vertex.has_list {
        return Err(IoError::UnsupportedFormat {
            path: path.to_path_buf(),
            msg: "list property on the vertex element".into(),
        });
    }
    let prop_index = |name: &str| vertex.properties.iter().position(|p| p == name);
    let coord_idx = match (prop_index("x"), prop_index("y"), prop_index("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => return Err(parse_err(path, header_end, "vertex element lacks x/y/z")),
    };
    let normal_idx = match (prop_index("nx"), prop_index("ny"), prop_index("nz")) {
        (Some(x), Some(y), Some(z)) => Some([x, y, z]),
        (None, None, None) => None,
        _ => None,
    };
    let partial_normals =
        normal_idx.is_none() && (prop_index("nx").is_some() || prop_index("ny").is_some());

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut data = lines.filter(|(_, l)| !l.trim().is_empty());
    for element in &elements {
        let is_vertex = element.name == "vertex";
        for row in 0..element.count {
            let (line_no, line) = data.next().ok_or_else(|| {
                parse_err(
                    path,
                    header_end,
                    format!("{} element truncated at row {row}", element.name),
                )
            })?;
            if !is_vertex {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != element.properties.len() {
                return Err(parse_err(
                    path,
                    line_no,
                    format!(
                        "expected {} values, found {}",
                        element.properties.len(),
                        tokens.len()
                    ),
                ));
            }
            let fetch = |i: usize| parse_f64(path, line_no, tokens[i]);
            points.push(Point3::new(
                fetch(coord_idx[0])?,
                fetch(coord_idx[1])?,
                fetch(coord_idx[2])?,
            ));
            if let Some(idx) = normal_idx {
                let n = Vector3::new(fetch(idx[0])?, fetch(idx[1])?, fetch(idx[2])?);
                if n.norm() < 1e-6 {
                    return Err(parse_err(
                        path,
                        line_no,
                        "normal has near-zero length and cannot be normalized",
                    ));
                }
                normals.push(n);
            }
        }
    }

    let mut warnings = Vec::new();
    if partial_normals {
        warnings.push("incomplete nx/ny/nz properties; normals ignored".to_string());
    }
    let cloud = if normal_idx.is_some() {
        let mut off_unit = 0usize;
        let normals: Vec<Vector3<f64>> = normals
            .into_iter()
            .map(|n| {
                let norm = n.norm();
                if (norm - 1.0).abs() > NORMAL_WARN_TOL {
                    off_unit += 1;
                }
                n / norm
            })
            .collect();
        if off_unit > 0 {
            warnings.push(format!(
                "{off_unit} normals deviated from unit length by more than {NORMAL_WARN_TOL}; renormalized"
            ));
        }
        PointCloud::with_normals(points, normals)?
    } else {
        PointCloud::new(points)?
    };
    Ok(LoadedCloud { cloud, warnings })
}

/// Writes a cloud as ASCII PLY, including normals when present.
pub fn write_cloud_ply(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    let with_normals = cloud.has_normals();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if with_normals {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(normals) = cloud.normals() {
            let n = &normals[i];
            let _ = write!(out, " {} {} {}", n.x, n.y, n.z);
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a per-point feature file: a `N D` header line followed by `N`
/// rows of `D` whitespace-separated finite decimals. Row `i` binds to
/// cloud point `i` at the call site that pairs the two files.
pub fn parse_feature_file(path: &Path) -> Result<FeatureMatrix, IoError> {
    let text = read_text(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty feature file"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let (rows, dim) = match dims.as_slice() {
        [n, d] => {
            let rows: usize = n
                .parse()
                .map_err(|_| parse_err(path, header_line, format!("invalid row count {n:?}")))?;
            let dim: usize = d
                .parse()
                .map_err(|_| parse_err(path, header_line, format!("invalid dimension {d:?}")))?;
            (rows, dim)
        }
        _ => return Err(parse_err(path, header_line, "header must be \"N D\"")),
    };

    let mut data = Vec::with_capacity(rows * dim);
    let mut last_line = header_line;
    for row in 0..rows {
        let (line_no, line) = lines.next().ok_or_else(|| {
            parse_err(
                path,
                last_line,
                format!("file truncated: expected {rows} rows, found {row}"),
            )
        })?;
        last_line = line_no;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != dim {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {dim} values, found {}", tokens.len()),
            ));
        }
        for token in tokens {
            data.push(parse_f64(path, line_no, token)?);
        }
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(parse_err(
            path,
            line_no,
            format!("unexpected data after {rows} rows"),
        ));
    }
    Ok(FeatureMatrix::from_flat(data, dim)?)
}

/// Writes a feature matrix in the `N D` header format read back by
/// [`parse_feature_file`].
pub fn write_feature_file(features: &FeatureMatrix, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", features.nrows(), features.dim());
    for row in features.rows() {
        let mut first = true;
        for value in row {
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{value:.16e}");
            first = false;
        }
        out.push('\n');
    }
    write_text(path, &out)
}

const SCORES_HEADER: &str = "index,raw_coord,raw_feat,norm_coord,norm_feat,fused";

/// Writes per-point scores as CSV with a trailing object-score comment.
///
/// Layout: one header line, one row per point, then
/// `# object_score=<value>`. Values carry 17 significant digits so a
/// round-trip through [`read_scores`] is exact.
pub fn write_scores(scores: &ScoreSet, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str(SCORES_HEADER);
    out.push('\n');
    for i in 0..scores.fused.len() {
        let _ = writeln!(
            out,
            "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            scores.raw_coordinate[i],
            scores.raw_feature[i],
            scores.norm_coordinate[i],
            scores.norm_feature[i],
            scores.fused[i],
        );
    }
    let _ = writeln!(out, "# object_score={:.16e}", scores.object_score);
    write_text(path, &out)
}

/// Reads a score CSV written by [`write_scores`].
pub fn read_scores(path: &Path) -> Result<ScoreSet, IoError> {
    let text = read_text(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty scores file"))?;
    if header.trim() != SCORES_HEADER {
        return Err(parse_err(path, header_line, "unrecognized CSV header"));
    }

    let mut set = ScoreSet {
        raw_coordinate: Vec::new(),
        raw_feature: Vec::new(),
        norm_coordinate: Vec::new(),
        norm_feature: Vec::new(),
        fused: Vec::new(),
        object_score: f64::NAN,
    };
    let mut saw_object = false;
    for (line_no, line) in lines {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            let value = rest.strip_prefix("object_score=").ok_or_else(|| {
                parse_err(path, line_no, format!("unrecognized comment {rest:?}"))
            })?;
            set.object_score = parse_f64(path, line_no, value)?;
            saw_object = true;
            continue;
        }
        if saw_object {
            return Err(parse_err(path, line_no, "data after object_score line"));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid index {:?}", fields[0])))?;
        if index != set.fused.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("index {index} out of order, expected {}", set.fused.len()),
            ));
        }
        set.raw_coordinate.push(parse_f64(path, line_no, fields[1])?);
        set.raw_feature.push(parse_f64(path, line_no, fields[2])?);
        set.norm_coordinate.push(parse_f64(path, line_no, fields[3])?);
        set.norm_feature.push(parse_f64(path, line_no, fields[4])?);
        set.fused.push(parse_f64(path, line_no, fields[5])?);
    }
    if !saw_object {
        return Err(parse_err(path, 1, "missing object_score comment line"));
    }
    Ok(set)
}

/// Writes an ASCII PLY heatmap coloring each point from its fused
/// score: the minimum score maps to blue, the maximum to red, linear
/// in between. A constant score column maps every point to the
/// midpoint color.
pub fn write_heatmap_ply(cloud: &PointCloud, fused: &[f64], path: &Path) -> Result<(), IoError> {
    if fused.len() != cloud.len() {
        return Err(IoError::LengthMismatch {
            what: "fused scores",
            got: fused.len(),
            expected: cloud.len(),
        });
    }
    let min = fused.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = fused.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;

    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\ncomment fused anomaly score heatmap\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str(concat!(
        "property double x\nproperty double y\nproperty double z\n",
        "property uchar red\nproperty uchar green\nproperty uchar blue\n",
        "end_header\n"
    ));
    for (p, &score) in cloud.points().iter().zip(fused) {
        let t = if span > 0.0 { (score - min) / span } else { 0.5 };
        let red = (255.0 * t).round() as u8;
        let blue = 255 - red;
        let _ = writeln!(out, "{} {} {} {red} 0 {blue}", p.x, p.y, p.z);
    }
    write_text(path, &out)
}

/// Writes a label sidecar: `# object=<0|1>` then one `0` or `1` per
/// point, in cloud order.
pub fn write_labels(labeling: &DefectLabeling, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    let _ = writeln!(out, "# object={}", u8::from(labeling.object_label));
    for &label in &labeling.point_labels {
        let _ = writeln!(out, "{}", u8::from(label));
    }
    write_text(path, &out)
}

/// Reads a label sidecar written by [`write_labels`].
pub fn read_labels(path: &Path) -> Result<DefectLabeling, IoError> {
    let text = read_text(path)?;
    let mut object_label = None;
    let mut point_labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(value) = rest.strip_prefix("object=") {
                let flag = match value.trim() {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(parse_err(
                            path,
                            line_no,
                            format!("object label must be 0 or 1, found {other:?}"),
                        ))
                    }
                };
                if object_label.replace(flag).is_some() {
                    return Err(parse_err(path, line_no, "duplicate object label line"));
                }
            }
            continue;
        }
        match line {
            "0" => point_labels.push(false),
            "1" => point_labels.push(true),
            other => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("point label must be 0 or 1, found {other:?}"),
                ))
            }
        }
    }
    let object_label = object_label
        .ok_or_else(|| parse_err(path, 1, "missing \"# object=<0|1>\" comment line"))?;
    Ok(DefectLabeling {
        point_labels,
        object_label,
    })
}

/// The label sidecar path for a cloud file: same stem, `.labels`
/// extension.
pub fn labels_path_for(cloud_path: &Path) -> PathBuf {
    cloud_path.with_extension("labels")
}
