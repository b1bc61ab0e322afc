//! OBJ, PLY (ascii and binary) and STL (ascii and binary) readers.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::Mesh;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Obj,
    Ply,
    Stl,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(MeshFormat::Obj),
            "ply" => Some(MeshFormat::Ply),
            "stl" => Some(MeshFormat::Stl),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadedMesh {
    pub mesh: Mesh,
    /// Zero-area triangles removed while loading.
    pub dropped_degenerate: usize,
}

/// Reads a mesh file and scales it to meters by `scale`.
pub fn load_mesh(path: &Path, format: MeshFormat, scale: f64) -> Result<LoadedMesh> {
    if !path.exists() {
        return Err(Error::MissingAsset(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut loaded = load_mesh_bytes(&bytes, format, path)?;
    if scale != 1.0 {
        loaded.mesh = loaded.mesh.scaled(scale);
    }
    if loaded.dropped_degenerate > 0 {
        log::info!(
            "{}: dropped {} degenerate triangles",
            path.display(),
            loaded.dropped_degenerate
        );
    }
    Ok(loaded)
}

/// Parses mesh data already in memory; `label` only names the source in errors.
pub fn load_mesh_bytes(bytes: &[u8], format: MeshFormat, label: &Path) -> Result<LoadedMesh> {
    let raw = match format {
        MeshFormat::Obj => parse_obj(bytes, label)?,
        MeshFormat::Ply => parse_ply(bytes, label)?,
        MeshFormat::Stl => parse_stl(bytes, label)?,
    };
    raw.into_mesh(label)
}

#[derive(Default)]
struct RawMesh {
    positions: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    normals: Option<Vec<Vector3<f64>>>,
    uvs: Option<Vec<[f64; 2]>>,
}

impl RawMesh {
    fn into_mesh(self, label: &Path) -> Result<LoadedMesh> {
        let (mut mesh, dropped) = Mesh::new(self.positions, self.triangles).map_err(|e| {
            Error::Format {
                path: label.to_path_buf(),
                location: "mesh".into(),
                message: e.to_string(),
            }
        })?;
        if let Some(normals) = self.normals {
            mesh = mesh.with_vertex_normals(normals)?;
        }
        if let Some(uvs) = self.uvs {
            mesh = mesh.with_uvs(uvs)?;
        }
        Ok(LoadedMesh {
            mesh,
            dropped_degenerate: dropped,
        })
    }
}

fn format_err(path: &Path, location: String, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        location,
        message: message.into(),
    }
}

fn parse_floats<const N: usize>(
    tokens: &mut std::str::SplitWhitespace<'_>,
    path: &Path,
    line: usize,
) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    for v in out.iter_mut() {
        let tok = tokens
            .next()
            .ok_or_else(|| format_err(path, format!("line {line}"), "missing coordinate"))?;
        *v = tok.parse().map_err(|_| {
            format_err(path, format!("line {line}"), format!("bad number {tok:?}"))
        })?;
    }
    Ok(out)
}

fn parse_obj(bytes: &[u8], path: &Path) -> Result<RawMesh> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| format_err(path, format!("byte {}", e.valid_up_to()), "invalid utf-8"))?;
    let mut positions: Vec<Point3<f64>> = Vec::new();
    let mut tex: Vec<[f64; 2]> = Vec::new();
    let mut norms: Vec<Vector3<f64>> = Vec::new();
    // (v, vt, vn) corner triples, one entry per triangle
    let mut faces: Vec<[(usize, Option<usize>, Option<usize>); 3]> = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut tokens = line.split_whitespace();
        let Some(kind) = tokens.next() else { continue };
        match kind {
            "v" => {
                let [x, y, z] = parse_floats::<3>(&mut tokens, path, lineno)?;
                positions.push(Point3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = parse_floats::<2>(&mut tokens, path, lineno)?;
                tex.push([u, v]);
            }
            "vn" => {
                let [x, y, z] = parse_floats::<3>(&mut tokens, path, lineno)?;
                norms.push(Vector3::new(x, y, z));
            }
            "f" => {
                let resolve = |tok: &str, count: usize| -> Result<usize> {
                    let i: i64 = tok.parse().map_err(|_| {
                        format_err(path, format!("line {lineno}"), format!("bad index {tok:?}"))
                    })?;
                    let idx = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        count as i64 + i
                    } else {
                        -1
                    };
                    if idx < 0 || idx as usize >= count {
                        return Err(format_err(
                            path,
                            format!("line {lineno}"),
                            format!("index {i} out of range (have {count})"),
                        ));
                    }
                    Ok(idx as usize)
                };
                let mut corners = Vec::new();
                for tok in tokens {
                    let mut parts = tok.split('/');
                    let v = resolve(parts.next().unwrap_or(""), positions.len())?;
                    let vt = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, tex.len())?),
                        _ => None,
                    };
                    let vn = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, norms.len())?),
                        _ => None,
                    };
                    corners.push((v, vt, vn));
                }
                if corners.len() < 3 {
                    return Err(format_err(
                        path,
                        format!("line {lineno}"),
                        "face with fewer than 3 vertices",
                    ));
                }
                for k in 1..corners.len() - 1 {
                    faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }

    let any_attr = faces
        .iter()
        .flatten()
        .any(|c| c.1.is_some() || c.2.is_some());
    if !any_attr {
        return Ok(RawMesh {
            positions,
            triangles: faces
                .iter()
                .map(|f| [f[0].0 as u32, f[1].0 as u32, f[2].0 as u32])
                .collect(),
            normals: None,
            uvs: None,
        });
    }

    // split vertices so that every (position, uv, normal) combination is unique
    let all_uv = faces.iter().flatten().all(|c| c.1.is_some());
    let any_n = faces.iter().flatten().any(|c| c.2.is_some());
    let mut remap: HashMap<(usize, Option<usize>, Option<usize>), u32> = HashMap::new();
    let mut out = RawMesh::default();
    let mut out_n = Vec::new();
    let mut out_uv = Vec::new();
    for f in &faces {
        let mut tri = [0u32; 3];
        for (k, c) in f.iter().enumerate() {
            tri[k] = *remap.entry(*c).or_insert_with(|| {
                out.positions.push(positions[c.0]);
                out_n.push(c.2.map(|i| norms[i]).unwrap_or_else(Vector3::zeros));
                out_uv.push(c.1.map(|i| tex[i]).unwrap_or([0.0, 0.0]));
                (out.positions.len() - 1) as u32
            });
        }
        out.triangles.push(tri);
    }
    if any_n {
        out.normals = Some(out_n);
    }
    if all_uv {
        out.uvs = Some(out_uv);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
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
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
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

    fn read(self, b: &[u8], big_endian: bool) -> f64 {
        macro_rules! rd {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = b[..$n].try_into().unwrap();
                if big_endian {
                    <$t>::from_be_bytes(arr) as f64
                } else {
                    <$t>::from_le_bytes(arr) as f64
                }
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => rd!(i16, 2),
            Scalar::U16 => rd!(u16, 2),
            Scalar::I32 => rd!(i32, 4),
            Scalar::U32 => rd!(u32, 4),
            Scalar::F32 => rd!(f32, 4),
            Scalar::F64 => rd!(f64, 8),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Clone, Copy, PartialEq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

fn parse_ply(bytes: &[u8], path: &Path) -> Result<RawMesh> {
    // header is ascii, terminated by "end_header\n"
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| format_err(path, "header".into(), "missing end_header"))?;
    let mut body_start = end + marker.len();
    while body_start < bytes.len() && bytes[body_start] != b'\n' {
        body_start += 1;
    }
    body_start += 1;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| format_err(path, "header".into(), "non-ascii header"))?;

    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut header_lines = 0;
    for (i, line) in header.lines().enumerate() {
        header_lines = i + 1;
        let lineno = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _] => {
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLe,
                    "binary_big_endian" => PlyEncoding::BinaryBe,
                    other => {
                        return Err(format_err(
                            path,
                            format!("line {lineno}"),
                            format!("unknown format {other}"),
                        ))
                    }
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| {
                    format_err(path, format!("line {lineno}"), "bad element count")
                })?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements.last_mut().ok_or_else(|| {
                    format_err(path, format!("line {lineno}"), "property before element")
                })?;
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(format_err(path, format!("line {lineno}"), "bad list type"));
                };
                el.properties.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| {
                    format_err(path, format!("line {lineno}"), "property before element")
                })?;
                let ty = Scalar::parse(ty).ok_or_else(|| {
                    format_err(path, format!("line {lineno}"), format!("unknown type {ty}"))
                })?;
                el.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => {
                return Err(format_err(
                    path,
                    format!("line {lineno}"),
                    format!("unrecognized header line {line:?}"),
                ))
            }
        }
    }
    let encoding =
        encoding.ok_or_else(|| format_err(path, "header".into(), "missing format line"))?;

    let mut reader = PlyBody {
        bytes,
        pos: body_start,
        encoding,
        line: header_lines + 1,
        tokens: Vec::new(),
        path,
    };

    let mut out = RawMesh::default();
    let mut normals = Vec::new();
    let mut uvs = Vec::new();
    let mut has_normals = false;
    let mut has_uvs = false;
    for el in &elements {
        for _ in 0..el.count {
            reader.begin_record()?;
            let mut vals: HashMap<&str, f64> = HashMap::new();
            let mut list: Vec<u32> = Vec::new();
            for prop in &el.properties {
                match prop {
                    Property::Scalar { name, ty } => {
                        let v = reader.scalar(*ty)?;
                        vals.insert(name.as_str(), v);
                    }
                    Property::List { name, count, item } => {
                        let n = reader.scalar(*count)? as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            items.push(reader.scalar(*item)?);
                        }
                        if name == "vertex_indices" || name == "vertex_index" {
                            list = items.into_iter().map(|v| v as u32).collect();
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    let get = |k: &str| vals.get(k).copied();
                    let (Some(x), Some(y), Some(z)) = (get("x"), get("y"), get("z")) else {
                        return Err(format_err(path, reader.location(), "vertex without x/y/z"));
                    };
                    out.positions.push(Point3::new(x, y, z));
                    if let (Some(nx), Some(ny), Some(nz)) = (get("nx"), get("ny"), get("nz")) {
                        has_normals = true;
                        normals.push(Vector3::new(nx, ny, nz));
                    } else {
                        normals.push(Vector3::zeros());
                    }
                    let u = get("u").or(get("s")).or(get("texture_u"));
                    let v = get("v").or(get("t")).or(get("texture_v"));
                    if let (Some(u), Some(v)) = (u, v) {
                        has_uvs = true;
                        uvs.push([u, v]);
                    } else {
                        uvs.push([0.0, 0.0]);
                    }
                }
                "face" => {
                    if list.len() < 3 {
                        return Err(format_err(path, reader.location(), "face with < 3 vertices"));
                    }
                    for k in 1..list.len() - 1 {
                        out.triangles.push([list[0], list[k], list[k + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    if has_normals {
        out.normals = Some(normals);
    }
    if has_uvs {
        out.uvs = Some(uvs);
    }
    let n = out.positions.len();
    if let Some(t) = out.triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
        return Err(format_err(
            path,
            "face list".into(),
            format!("index in {t:?} out of range (have {n} vertices)"),
        ));
    }
    Ok(out)
}

struct PlyBody<'a> {
    bytes: &'a [u8],
    pos: usize,
    encoding: PlyEncoding,
    line: usize,
    tokens: Vec<String>,
    path: &'a Path,
}

impl PlyBody<'_> {
    fn location(&self) -> String {
        match self.encoding {
            PlyEncoding::Ascii => format!("line {}", self.line),
            _ => format!("byte offset {}", self.pos),
        }
    }

    fn begin_record(&mut self) -> Result<()> {
        if self.encoding != PlyEncoding::Ascii {
            return Ok(());
        }
        loop {
            if self.pos >= self.bytes.len() {
                return Err(format_err(self.path, self.location(), "unexpected end of file"));
            }
            let end = self.bytes[self.pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|p| self.pos + p)
                .unwrap_or(self.bytes.len());
            let line = String::from_utf8_lossy(&self.bytes[self.pos..end]).to_string();
            self.pos = end + 1;
            self.line += 1;
            let toks: Vec<String> = line.split_whitespace().rev().map(str::to_string).collect();
            if !toks.is_empty() {
                self.tokens = toks;
                return Ok(());
            }
        }
    }

    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        match self.encoding {
            PlyEncoding::Ascii => {
                let line = self.line;
                let tok = self.tokens.pop().ok_or_else(|| {
                    format_err(self.path, format!("line {line}"), "too few values")
                })?;
                tok.parse().map_err(|_| {
                    format_err(self.path, format!("line {line}"), format!("bad number {tok:?}"))
                })
            }
            enc => {
                let n = ty.size();
                if self.pos + n > self.bytes.len() {
                    return Err(format_err(self.path, self.location(), "unexpected end of file"));
                }
                let v = ty.read(&self.bytes[self.pos..], enc == PlyEncoding::BinaryBe);
                self.pos += n;
                Ok(v)
            }
        }
    }
}

fn parse_stl(bytes: &[u8], path: &Path) -> Result<RawMesh> {
    let is_binary = bytes.len() >= 84 && {
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        bytes.len() == 84 + 50 * n
    };
    let mut corners: Vec<Point3<f64>> = Vec::new();
    if is_binary {
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        for t in 0..n {
            let base = 84 + 50 * t + 12;
            for k in 0..3 {
                let off = base + 12 * k;
                let f = |i: usize| {
                    f32::from_le_bytes(bytes[off + 4 * i..off + 4 * i + 4].try_into().unwrap())
                        as f64
                };
                corners.push(Point3::new(f(0), f(1), f(2)));
            }
        }
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| {
            format_err(
                path,
                format!("byte offset {}", e.valid_up_to()),
                "not a binary STL and not valid ascii",
            )
        })?;
        if !text.trim_start().starts_with("solid") {
            return Err(format_err(path, "line 1".into(), "ascii STL must start with 'solid'"));
        }
        for (i, line) in text.lines().enumerate() {
            let mut toks = line.split_whitespace();
            if toks.next() == Some("vertex") {
                let [x, y, z] = parse_floats::<3>(&mut toks, path, i + 1)?;
                corners.push(Point3::new(x, y, z));
            }
        }
        if corners.len() % 3 != 0 {
            return Err(format_err(
                path,
                format!("line {}", text.lines().count()),
                "vertex count not a multiple of 3",
            ));
        }
    }
    // weld identical corners so adjacent facets share vertices
    let mut index: HashMap<[u64; 3], u32> = HashMap::new();
    let mut out = RawMesh::default();
    let mut tri = [0u32; 3];
    for (k, p) in corners.iter().enumerate() {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        let id = *index.entry(key).or_insert_with(|| {
            out.positions.push(*p);
            (out.positions.len() - 1) as u32
        });
        tri[k % 3] = id;
        if k % 3 == 2 {
            out.triangles.push(tri);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Normals;

    const CUBE_OBJ: &str = "\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
";

    fn label() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn obj_unit_cube_has_axis_aligned_normals() {
        let m = load_mesh_bytes(CUBE_OBJ.as_bytes(), MeshFormat::Obj, label()).unwrap();
        assert_eq!(m.mesh.triangle_count(), 12);
        assert_eq!(m.mesh.positions().len(), 8);
        assert_eq!(m.dropped_degenerate, 0);
        let Normals::PerFace(ns) = m.mesh.normals() else { panic!() };
        for n in ns {
            let max = n.iter().map(|c| c.abs()).fold(0.0, f64::max);
            assert!((max - 1.0).abs() < 1e-12, "{n:?}");
        }
    }

    #[test]
    fn obj_missing_normals_use_face_cross_products() {
        let src = "v 0 0 0\nv 2 0 0\nv 0 3 0\nf 1 2 3\n";
        let m = load_mesh_bytes(src.as_bytes(), MeshFormat::Obj, label()).unwrap();
        let Normals::PerFace(ns) = m.mesh.normals() else { panic!() };
        assert!((ns[0] - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn obj_non_manifold_edge_loads() {
        // three triangles sharing edge 1-2
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\nf 1 2 3\nf 2 1 4\nf 1 2 5\n";
        let m = load_mesh_bytes(src.as_bytes(), MeshFormat::Obj, label()).unwrap();
        assert_eq!(m.mesh.triangle_count(), 3);
    }

    #[test]
    fn obj_with_normals_and_uvs() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 2\nf 1/1/1 2/2/1 3/3/1\n";
        let m = load_mesh_bytes(src.as_bytes(), MeshFormat::Obj, label()).unwrap();
        assert!(m.mesh.uvs().is_some());
        let Normals::PerVertex(ns) = m.mesh.normals() else { panic!() };
        assert!(ns.iter().all(|n| (n - Vector3::z()).norm() < 1e-12));
    }

    #[test]
    fn obj_parse_error_names_line() {
        let src = "v 0 0 0\nv 1 zero 0\n";
        let err = load_mesh_bytes(src.as_bytes(), MeshFormat::Obj, label()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let src = "v 0 0 0\nf 1 2 3\n";
        let err = load_mesh_bytes(src.as_bytes(), MeshFormat::Obj, label()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn obj_degenerate_faces_are_counted() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n";
        let m = load_mesh_bytes(src.as_bytes(), MeshFormat::Obj, label()).unwrap();
        assert_eq!(m.dropped_degenerate, 1);
        assert_eq!(m.mesh.triangle_count(), 1);
    }

    #[test]
    fn ply_ascii_and_binary_agree() {
        let ascii = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let a = load_mesh_bytes(ascii.as_bytes(), MeshFormat::Ply, label()).unwrap();
        assert_eq!(a.mesh.triangle_count(), 2);

        let mut bin = b"ply\nformat binary_little_endian 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        for p in [[0f32, 0., 0.], [1., 0., 0.], [1., 1., 0.], [0., 1., 0.]] {
            for c in p {
                bin.extend_from_slice(&c.to_le_bytes());
            }
        }
        bin.push(4);
        for i in [0i32, 1, 2, 3] {
            bin.extend_from_slice(&i.to_le_bytes());
        }
        let b = load_mesh_bytes(&bin, MeshFormat::Ply, label()).unwrap();
        assert_eq!(b.mesh.triangles(), a.mesh.triangles());
        assert_eq!(b.mesh.positions(), a.mesh.positions());

        // truncated binary body reports a byte offset
        let err = load_mesh_bytes(&bin[..bin.len() - 3], MeshFormat::Ply, label()).unwrap_err();
        assert!(err.to_string().contains("byte offset"), "{err}");
    }

    #[test]
    fn ply_ascii_error_names_line() {
        let ascii = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 zero 0\n";
        let err = load_mesh_bytes(ascii.as_bytes(), MeshFormat::Ply, label()).unwrap_err();
        assert!(err.to_string().contains("line 8"), "{err}");
    }

    #[test]
    fn stl_ascii_and_binary() {
        let ascii = "solid t\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\nendloop\nendfacet\nfacet normal 0 0 1\nouter loop\nvertex 1 0 0\nvertex 1 1 0\nvertex 0 1 0\nendloop\nendfacet\nendsolid t\n";
        let a = load_mesh_bytes(ascii.as_bytes(), MeshFormat::Stl, label()).unwrap();
        assert_eq!(a.mesh.triangle_count(), 2);
        assert_eq!(a.mesh.positions().len(), 4);

        let mut bin = vec![0u8; 80];
        bin.extend_from_slice(&2u32.to_le_bytes());
        for tri in [
            [[0f32, 0., 0.], [1., 0., 0.], [0., 1., 0.]],
            [[1., 0., 0.], [1., 1., 0.], [0., 1., 0.]],
        ] {
            bin.extend_from_slice(&[0u8; 12]);
            for v in tri {
                for c in v {
                    bin.extend_from_slice(&c.to_le_bytes());
                }
            }
            bin.extend_from_slice(&[0u8; 2]);
        }
        let b = load_mesh_bytes(&bin, MeshFormat::Stl, label()).unwrap();
        assert_eq!(b.mesh.triangles(), a.mesh.triangles());
    }

    #[test]
    fn missing_file_is_reported() {
        let err = load_mesh(Path::new("/nonexistent/x.obj"), MeshFormat::Obj, 1.0).unwrap_err();
        assert!(matches!(err, Error::MissingAsset(_)));
    }
}
