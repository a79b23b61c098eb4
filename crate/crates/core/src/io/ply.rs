//! Minimal ASCII PLY reader/writer for point clouds: `x y z` vertex
//! properties are required, `red green blue` picked up when present, every
//! other property is parsed past and ignored. Binary PLY is rejected with
//! a clear message; parse errors carry line numbers.

use std::path::Path;

use super::{io_err, IoError};
use crate::{Real, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct PlyPoints {
    pub positions: Vec<Vec3>,
    /// Normalized to [0, 1] when the file carries color properties.
    pub colors: Option<Vec<[Real; 3]>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PropKind {
    Float,
    Int,
}

struct Property {
    name: String,
    kind: PropKind,
    /// Color channels stored as integers are normalized by 255.
    normalize: bool,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads an ASCII PLY point cloud. Positions come back in file order.
pub fn load_ply_points(path: &Path) -> Result<PlyPoints, IoError> {
    let content = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = content.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if first.trim() != "ply" {
        return Err(parse_err(path, 1, "missing 'ply' signature"));
    }

    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<Property> = Vec::new();
    let mut in_vertex_element = false;
    let mut other_element_lines = 0usize;
    let mut header_end = 0usize;

    for (idx, raw) in lines.by_ref() {
        let line_no = idx + 1;
        let line = raw.trim();
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                let kind = words.next().unwrap_or("");
                if kind != "ascii" {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("only ASCII PLY is supported, got format '{kind}'"),
                    ));
                }
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = words.next().unwrap_or("");
                let count: usize = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, line_no, "element needs a count"))?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(parse_err(path, line_no, "duplicate vertex element"));
                    }
                    vertex_count = Some(count);
                    in_vertex_element = true;
                } else {
                    in_vertex_element = false;
                    other_element_lines += count;
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    continue;
                }
                let kind = words.next().unwrap_or("");
                if kind == "list" {
                    return Err(parse_err(path, line_no, "list properties are not supported on vertices"));
                }
                let name = words
                    .next()
                    .ok_or_else(|| parse_err(path, line_no, "property needs a name"))?;
                let (prop_kind, normalize) = match kind {
                    "float" | "float32" | "double" | "float64" => (PropKind::Float, false),
                    "uchar" | "uint8" | "char" | "int8" | "short" | "ushort" | "int" | "uint"
                    | "int16" | "uint16" | "int32" | "uint32" => (PropKind::Int, true),
                    other => {
                        return Err(parse_err(path, line_no, format!("unknown property type '{other}'")))
                    }
                };
                properties.push(Property {
                    name: name.to_string(),
                    kind: prop_kind,
                    normalize,
                });
            }
            Some("end_header") => {
                header_end = line_no;
                break;
            }
            Some(other) => {
                return Err(parse_err(path, line_no, format!("unexpected header token '{other}'")))
            }
            None => {}
        }
    }
    if header_end == 0 {
        return Err(parse_err(path, 1, "missing end_header"));
    }
    let vertex_count =
        vertex_count.ok_or_else(|| parse_err(path, header_end, "missing vertex element"))?;

    let index_of = |name: &str| properties.iter().position(|p| p.name == name);
    let (ix, iy, iz) = match (index_of("x"), index_of("y"), index_of("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(parse_err(path, header_end, "vertex element must have x, y, z")),
    };
    let color_idx = match (index_of("red"), index_of("green"), index_of("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };

    let mut positions = Vec::with_capacity(vertex_count);
    let mut colors = color_idx.map(|_| Vec::with_capacity(vertex_count));
    let mut data_lines = lines.filter(|(_, l)| !l.trim().is_empty());
    for _ in 0..vertex_count {
        let (idx, raw) = data_lines.next().ok_or_else(|| {
            parse_err(
                path,
                header_end + 1 + positions.len(),
                format!("expected {vertex_count} vertices, file ended after {}", positions.len()),
            )
        })?;
        let line_no = idx + 1;
        let values: Vec<&str> = raw.split_whitespace().collect();
        if values.len() < properties.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} values, found {}", properties.len(), values.len()),
            ));
        }
        let get = |i: usize| -> Result<Real, IoError> {
            values[i]
                .parse::<Real>()
                .map_err(|_| parse_err(path, line_no, format!("bad number '{}'", values[i])))
        };
        positions.push(Vec3::new(get(ix)?, get(iy)?, get(iz)?));
        if let (Some(cols), Some([r, g, b])) = (&mut colors, color_idx) {
            let scale = |i: usize| -> Result<Real, IoError> {
                let v = get(i)?;
                Ok(match properties[i].kind {
                    PropKind::Float if !properties[i].normalize => v,
                    _ => v / 255.0,
                })
            };
            cols.push([scale(r)?, scale(g)?, scale(b)?]);
        }
    }
    // Remaining lines belong to other elements; they are ignored but the
    // vertex block itself must have been complete.
    let _ = other_element_lines;

    Ok(PlyPoints { positions, colors })
}

/// Writes an ASCII PLY point cloud. Floats are printed in shortest
/// round-trip form so load(save(x)) is bit-exact; colors quantize to uchar.
pub fn save_ply_points(
    path: &Path,
    positions: &[Vec3],
    colors: Option<&[[Real; 3]]>,
) -> Result<(), IoError> {
    use std::fmt::Write;
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    writeln!(out, "element vertex {}", positions.len()).unwrap();
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.push_str("end_header\n");
    for (i, p) in positions.iter().enumerate() {
        write!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
        if let Some(cols) = colors {
            let c = cols[i];
            write!(
                out,
                " {} {} {}",
                (c[0].clamp(0.0, 1.0) * 255.0).round() as u8,
                (c[1].clamp(0.0, 1.0) * 255.0).round() as u8,
                (c[2].clamp(0.0, 1.0) * 255.0).round() as u8
            )
            .unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}
