//! OBJ and PLY readers, PLY point-cloud writer.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{PointCloud, TriangleMesh, Vec3};
use crate::error::{Error, Result};

/// Loads an OBJ or PLY mesh, choosing the parser by file extension.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match ext.as_str() {
        "obj" => parse_obj(path, &String::from_utf8_lossy(&bytes)),
        "ply" => {
            let ply = parse_ply(path, &bytes)?;
            ply.into_mesh(path)
        }
        other => Err(Error::UnsupportedFormat(format!(
            "{}: extension {other:?} (expected obj or ply)",
            path.display()
        ))),
    }
}

fn parse_err(path: &Path, element: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        element: element.into(),
        message: message.into(),
    }
}

/// ASCII OBJ: `v x y z [r g b]` and polygonal `f` records (fan-triangulated).
/// Texture and normal indices are ignored; negative indices are relative.
pub fn parse_obj(path: &Path, text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut colors: Vec<Option<Vec3>> = Vec::new();
    let mut raw_faces: Vec<(usize, Vec<i64>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let vals: Vec<f64> = it
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(path, format!("vertex {} (line {})", vertices.len() + 1, lineno + 1), e.to_string()))?;
                if vals.len() < 3 {
                    return Err(parse_err(path, format!("vertex {} (line {})", vertices.len() + 1, lineno + 1), "fewer than 3 coordinates"));
                }
                vertices.push(Vec3::new(vals[0], vals[1], vals[2]));
                colors.push((vals.len() >= 6).then(|| Vec3::new(vals[3], vals[4], vals[5])));
            }
            Some("f") => {
                let idx: Vec<i64> = it
                    .map(|t| t.split('/').next().unwrap_or("").parse::<i64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(path, format!("face {} (line {})", raw_faces.len() + 1, lineno + 1), e.to_string()))?;
                if idx.len() < 3 {
                    return Err(parse_err(path, format!("face {} (line {})", raw_faces.len() + 1, lineno + 1), "fewer than 3 vertices"));
                }
                raw_faces.push((lineno + 1, idx));
            }
            _ => {}
        }
    }
    let n = vertices.len() as i64;
    let mut faces = Vec::new();
    for (fi, (lineno, idx)) in raw_faces.iter().enumerate() {
        let resolved: Vec<u32> = idx
            .iter()
            .map(|&i| {
                let r = if i < 0 { n + i } else { i - 1 };
                if i == 0 || r < 0 || r >= n {
                    Err(parse_err(
                        path,
                        format!("face {} (line {lineno})", fi + 1),
                        format!("vertex index {i} out of range for {n} vertices"),
                    ))
                } else {
                    Ok(r as u32)
                }
            })
            .collect::<Result<_>>()?;
        for k in 1..resolved.len() - 1 {
            faces.push([resolved[0], resolved[k], resolved[k + 1]]);
        }
    }
    let vertex_colors = if !colors.is_empty() && colors.iter().all(|c| c.is_some()) {
        Some(colors.into_iter().map(|c| c.unwrap()).collect())
    } else {
        None
    };
    TriangleMesh::new(vertices, faces, vertex_colors).map_err(|e| parse_err(path, "mesh", e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct ElementDef {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Parsed PLY contents: vertex columns by property name, face index lists.
#[derive(Debug, Default)]
struct PlyData {
    vertex_props: Vec<(String, Scalar)>,
    vertex_rows: Vec<Vec<f64>>,
    faces: Vec<Vec<i64>>,
}

impl PlyData {
    fn column(&self, name: &str) -> Option<usize> {
        self.vertex_props.iter().position(|(n, _)| n == name)
    }

    fn triple(&self, names: [&str; 3]) -> Option<([usize; 3], Scalar)> {
        let a = self.column(names[0])?;
        let b = self.column(names[1])?;
        let c = self.column(names[2])?;
        Some(([a, b, c], self.vertex_props[a].1))
    }

    fn vectors(&self, cols: [usize; 3], scale: f64) -> Vec<Vec3> {
        self.vertex_rows
            .iter()
            .map(|r| Vec3::new(r[cols[0]], r[cols[1]], r[cols[2]]) * scale)
            .collect()
    }

    fn positions(&self, path: &Path) -> Result<Vec<Vec3>> {
        let (cols, _) = self
            .triple(["x", "y", "z"])
            .ok_or_else(|| parse_err(path, "vertex", "missing x/y/z properties"))?;
        Ok(self.vectors(cols, 1.0))
    }

    fn colors(&self) -> Option<Vec<Vec3>> {
        let (cols, ty) = self.triple(["red", "green", "blue"])?;
        let scale = match ty {
            Scalar::U8 => 1.0 / 255.0,
            Scalar::U16 => 1.0 / 65535.0,
            _ => 1.0,
        };
        Some(self.vectors(cols, scale))
    }

    fn into_mesh(self, path: &Path) -> Result<TriangleMesh> {
        let vertices = self.positions(path)?;
        let n = vertices.len() as i64;
        let mut faces = Vec::new();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.len() < 3 {
                return Err(parse_err(path, format!("face {fi}"), "fewer than 3 vertices"));
            }
            if let Some(&bad) = f.iter().find(|&&i| i < 0 || i >= n) {
                return Err(parse_err(
                    path,
                    format!("face {fi}"),
                    format!("vertex index {bad} out of range for {n} vertices"),
                ));
            }
            for k in 1..f.len() - 1 {
                faces.push([f[0] as u32, f[k] as u32, f[k + 1] as u32]);
            }
        }
        let colors = self.colors();
        TriangleMesh::new(vertices, faces, colors).map_err(|e| parse_err(path, "mesh", e.to_string()))
    }
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<PlyData> {
    let header_end = find_header_end(bytes).ok_or_else(|| parse_err(path, "header", "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..header_end.0]).map_err(|_| parse_err(path, "header", "not UTF-8"))?;
    let body = &bytes[header_end.1..];

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(parse_err(path, "header", "missing ply magic"));
    }
    let mut binary = None;
    let mut elements: Vec<ElementDef> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => {
                return Err(Error::UnsupportedFormat(format!("{}: PLY format {other}", path.display())))
            }
            ["element", name, count] => elements.push(ElementDef {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse_err(path, format!("element {name}"), "bad count"))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, "header", "property before element"))?;
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(parse_err(path, format!("property {name}"), "unknown list type"));
                };
                el.props.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, "header", "property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| parse_err(path, format!("property {name}"), format!("unknown type {ty}")))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(parse_err(path, "header", format!("unrecognised line {line:?}"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_err(path, "header", "missing format line"))?;

    let mut data = PlyData::default();
    let mut reader: Box<dyn ValueReader> = if binary {
        Box::new(BinaryReader { bytes: body, pos: 0 })
    } else {
        Box::new(AsciiReader {
            tokens: std::str::from_utf8(body)
                .map_err(|_| parse_err(path, "body", "ASCII body is not UTF-8"))?
                .split_whitespace(),
        })
    };
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex {
            data.vertex_props = el
                .props
                .iter()
                .filter_map(|p| match p {
                    Property::Scalar { name, ty } => Some((name.clone(), *ty)),
                    Property::List { .. } => None,
                })
                .collect();
        }
        for i in 0..el.count {
            let ctx = || format!("{} {i}", el.name);
            let mut row = Vec::new();
            for p in &el.props {
                match p {
                    Property::Scalar { ty, .. } => {
                        let v = reader.read(*ty).ok_or_else(|| parse_err(path, ctx(), "truncated data"))?;
                        if is_vertex {
                            row.push(v);
                        }
                    }
                    Property::List { count, item, name } => {
                        let n = reader.read(*count).ok_or_else(|| parse_err(path, ctx(), "truncated list"))?;
                        let mut list = Vec::with_capacity(n as usize);
                        for _ in 0..n as usize {
                            let v = reader.read(*item).ok_or_else(|| parse_err(path, ctx(), "truncated list"))?;
                            if !item.is_integer() {
                                return Err(parse_err(path, ctx(), "non-integer vertex index"));
                            }
                            list.push(v as i64);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            data.faces.push(list);
                        }
                    }
                }
            }
            if is_vertex {
                data.vertex_rows.push(row);
            }
        }
    }
    Ok(data)
}

fn find_header_end(bytes: &[u8]) -> Option<(usize, usize)> {
    let needle = b"end_header";
    let pos = bytes.windows(needle.len()).position(|w| w == needle)?;
    let mut end = pos + needle.len();
    if bytes.get(end) == Some(&b'\r') {
        end += 1;
    }
    if bytes.get(end) == Some(&b'\n') {
        end += 1;
    }
    Some((pos, end))
}

trait ValueReader {
    fn read(&mut self, ty: Scalar) -> Option<f64>;
}

struct AsciiReader<'a> {
    tokens: std::str::SplitWhitespace<'a>,
}

impl ValueReader for AsciiReader<'_> {
    fn read(&mut self, _ty: Scalar) -> Option<f64> {
        self.tokens.next()?.parse().ok()
    }
}

struct BinaryReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ValueReader for BinaryReader<'_> {
    fn read(&mut self, ty: Scalar) -> Option<f64> {
        let end = self.pos + ty.size();
        let v = ty.read_le(self.bytes.get(self.pos..end)?);
        self.pos = end;
        Some(v)
    }
}

/// Writes an ASCII PLY with `x y z [nx ny nz] [red green blue]` vertex
/// properties, all stored as doubles so the values survive a round trip.
pub fn write_point_cloud_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    if cloud.points.is_empty() {
        return Err(Error::invalid("refusing to export an empty point cloud"));
    }
    cloud.validate()?;
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\ncomment sketch2statue point cloud\n");
    out.push_str(&format!("element vertex {}\n", cloud.points.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals.is_some() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if cloud.colors.is_some() {
        out.push_str("property double red\nproperty double green\nproperty double blue\n");
    }
    out.push_str("end_header\n");
    for i in 0..cloud.points.len() {
        push_vec(&mut out, &cloud.points[i]);
        if let Some(n) = &cloud.normals {
            out.push(' ');
            push_vec(&mut out, &n[i]);
        }
        if let Some(c) = &cloud.colors {
            out.push(' ');
            push_vec(&mut out, &c[i]);
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

fn push_vec(out: &mut String, v: &Vec3) {
    out.push_str(&format!("{} {} {}", v.x, v.y, v.z));
}

/// Reads the vertex element of a PLY file as a point cloud, picking up
/// normals and colors when present.
pub fn read_point_cloud_ply(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ply = parse_ply(path, &bytes)?;
    let points = ply.positions(path)?;
    let normals = ply.triple(["nx", "ny", "nz"]).map(|(c, _)| ply.vectors(c, 1.0));
    let colors = ply.colors();
    let cloud = PointCloud {
        points,
        normals,
        colors,
    };
    cloud.validate()?;
    Ok(cloud)
}
