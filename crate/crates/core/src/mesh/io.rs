//! OBJ and PLY readers/writers. Only positions and triangle connectivity are
//! kept; normals, texture coordinates and extra PLY properties are skipped.

use std::fmt::Write as _;
use std::path::Path;

use super::{Face, MeshError, TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    /// Reading accepts both PLY encodings; writing uses ASCII.
    PlyAscii,
    /// Reading accepts both PLY encodings; writing uses binary little-endian.
    PlyBinary,
}

impl MeshFormat {
    /// Picks a format from the file extension (`.ply` writes binary).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(MeshFormat::Obj),
            "ply" => Some(MeshFormat::PlyBinary),
            _ => None,
        }
    }
}

/// Parses a mesh, fan-triangulating polygons and dropping degenerate faces.
pub fn load_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriangleMesh, MeshError> {
    let mut mesh = match format {
        MeshFormat::Obj => parse_obj(bytes)?,
        MeshFormat::PlyAscii | MeshFormat::PlyBinary => parse_ply(bytes)?,
    };
    if mesh.faces.is_empty() {
        return Err(MeshError::Empty);
    }
    let dropped = mesh.drop_degenerate_faces();
    if dropped > 0 {
        log::warn!("dropped {dropped} degenerate faces");
    }
    if mesh.faces.is_empty() {
        return Err(MeshError::Empty);
    }
    Ok(mesh)
}

pub fn save_mesh(mesh: &TriangleMesh, format: MeshFormat) -> Vec<u8> {
    match format {
        MeshFormat::Obj => write_obj(mesh).into_bytes(),
        MeshFormat::PlyAscii => write_ply_ascii(mesh).into_bytes(),
        MeshFormat::PlyBinary => write_ply_binary(mesh),
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

fn fan(polygon: &[usize], faces: &mut Vec<Face>) {
    for i in 1..polygon.len() - 1 {
        faces.push([polygon[0], polygon[i], polygon[i + 1]]);
    }
}

pub fn parse_obj(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        parse_err(line, "invalid UTF-8")
    })?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut polygon = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(line_no, "vertex needs three coordinates"))?;
                    *c = tok
                        .parse::<f64>()
                        .map_err(|_| parse_err(line_no, format!("bad coordinate `{tok}`")))?;
                    if !c.is_finite() {
                        return Err(parse_err(line_no, "non-finite coordinate"));
                    }
                }
                vertices.push(Vec3::from(xyz));
            }
            Some("f") => {
                polygon.clear();
                for tok in tokens {
                    let idx_tok = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_tok
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad face index `{tok}`")))?;
                    let resolved = match idx {
                        0 => None,
                        i if i > 0 => Some(i as u64 - 1),
                        i => (vertices.len() as u64).checked_sub(i.unsigned_abs()),
                    };
                    match resolved {
                        Some(i) if (i as usize) < vertices.len() => polygon.push(i as usize),
                        _ => {
                            return Err(parse_err(
                                line_no,
                                format!("face index {idx} out of range"),
                            ))
                        }
                    }
                }
                if polygon.len() < 3 {
                    return Err(parse_err(line_no, "face needs at least three vertices"));
                }
                fan(&polygon, &mut faces);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 24);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Self> {
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
}

struct PlyHeader {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    /// Byte offset of the body.
    body: usize,
    /// Line number of the first body line.
    body_line: usize,
}

fn parse_ply_header(bytes: &[u8]) -> Result<PlyHeader, MeshError> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(line_no + 1, "header is not terminated by end_header"))?;
        let raw = &bytes[pos..pos + end];
        pos += end + 1;
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err(line_no, "invalid UTF-8 in header"))?
            .trim();
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next();
        if line_no == 1 {
            if keyword != Some("ply") {
                return Err(parse_err(1, "missing `ply` magic"));
            }
            continue;
        }
        match keyword {
            Some("format") => {
                encoding = Some(match tokens.next() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLe,
                    Some(other) => {
                        return Err(parse_err(line_no, format!("unsupported format `{other}`")))
                    }
                    None => return Err(parse_err(line_no, "format line needs an encoding")),
                });
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(line_no, "element needs a name"))?;
                let count = tokens
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(line_no, "element needs a count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property before any element"))?;
                let ty = tokens
                    .next()
                    .ok_or_else(|| parse_err(line_no, "property needs a type"))?;
                let prop = if ty == "list" {
                    let count_ty = tokens.next().and_then(Scalar::parse);
                    let item_ty = tokens.next().and_then(Scalar::parse);
                    let name = tokens.next();
                    match (count_ty, item_ty, name) {
                        (Some(c), Some(i), Some(n)) => Property::List(n.to_string(), c, i),
                        _ => return Err(parse_err(line_no, "malformed list property")),
                    }
                } else {
                    let scalar = Scalar::parse(ty)
                        .ok_or_else(|| parse_err(line_no, format!("unknown type `{ty}`")))?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| parse_err(line_no, "property needs a name"))?;
                    Property::Scalar(name.to_string(), scalar)
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => {
                return Err(parse_err(line_no, format!("unexpected header keyword `{other}`")))
            }
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(line_no, "missing format line"))?;
    Ok(PlyHeader {
        encoding,
        elements,
        body: pos,
        body_line: line_no + 1,
    })
}

/// Pulls typed values out of either PLY body encoding.
trait PlyBody {
    fn begin_record(&mut self) -> Result<(), MeshError>;
    fn next(&mut self, ty: Scalar) -> Result<f64, MeshError>;
    fn end_record(&mut self) -> Result<(), MeshError>;
}

struct AsciiBody<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    first_line: usize,
    current: Vec<&'a str>,
    cursor: usize,
    line_no: usize,
}

impl<'a> PlyBody for AsciiBody<'a> {
    fn begin_record(&mut self) -> Result<(), MeshError> {
        loop {
            let (n, line) = self
                .lines
                .next()
                .ok_or_else(|| parse_err(self.line_no + 1, "unexpected end of file"))?;
            self.line_no = self.first_line + n;
            let line = line.trim();
            if !line.is_empty() {
                self.current = line.split_whitespace().collect();
                self.cursor = 0;
                return Ok(());
            }
        }
    }

    fn next(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        let tok = self
            .current
            .get(self.cursor)
            .ok_or_else(|| parse_err(self.line_no, "too few values in record"))?;
        self.cursor += 1;
        let v = tok
            .parse::<f64>()
            .map_err(|_| parse_err(self.line_no, format!("bad value `{tok}`")))?;
        let integral = !matches!(ty, Scalar::F32 | Scalar::F64);
        if !v.is_finite() || (integral && v.fract() != 0.0) {
            return Err(parse_err(self.line_no, format!("bad value `{tok}`")));
        }
        Ok(v)
    }

    fn end_record(&mut self) -> Result<(), MeshError> {
        if self.cursor != self.current.len() {
            return Err(parse_err(self.line_no, "too many values in record"));
        }
        Ok(())
    }
}

struct BinaryBody<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> PlyBody for BinaryBody<'a> {
    fn begin_record(&mut self) -> Result<(), MeshError> {
        Ok(())
    }

    fn next(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        let size = ty.size();
        let chunk = self.bytes.get(self.pos..self.pos + size).ok_or_else(|| {
            parse_err(
                self.line,
                format!("binary body truncated at byte {}", self.pos),
            )
        })?;
        self.pos += size;
        let v = ty.read_le(chunk);
        if !v.is_finite() {
            return Err(parse_err(
                self.line,
                format!("non-finite value at byte {}", self.pos - size),
            ));
        }
        Ok(v)
    }

    fn end_record(&mut self) -> Result<(), MeshError> {
        Ok(())
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    let header = parse_ply_header(bytes)?;
    let body = &bytes[header.body..];
    match header.encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|_| parse_err(header.body_line, "invalid UTF-8 in ASCII body"))?;
            let mut reader = AsciiBody {
                lines: text.lines().enumerate(),
                first_line: header.body_line,
                current: Vec::new(),
                cursor: 0,
                line_no: header.body_line - 1,
            };
            read_ply_elements(&header, &mut reader)
        }
        PlyEncoding::BinaryLe => {
            let mut reader = BinaryBody {
                bytes: body,
                pos: 0,
                line: header.body_line,
            };
            read_ply_elements(&header, &mut reader)
        }
    }
}

fn read_ply_elements(header: &PlyHeader, body: &mut dyn PlyBody) -> Result<TriangleMesh, MeshError> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<Face> = Vec::new();
    let mut polygon = Vec::new();
    let line = header.body_line;
    for element in &header.elements {
        if element.properties.is_empty() {
            continue;
        }
        match element.name.as_str() {
            "vertex" => {
                let slot = |axis: &str| {
                    element.properties.iter().position(
                        |p| matches!(p, Property::Scalar(n, _) if n == axis),
                    )
                };
                let (ix, iy, iz) = match (slot("x"), slot("y"), slot("z")) {
                    (Some(x), Some(y), Some(z)) => (x, y, z),
                    _ => return Err(parse_err(line, "vertex element lacks x/y/z")),
                };
                let mut values = vec![0.0; element.properties.len()];
                for _ in 0..element.count {
                    body.begin_record()?;
                    for (k, p) in element.properties.iter().enumerate() {
                        match p {
                            Property::Scalar(_, ty) => values[k] = body.next(*ty)?,
                            Property::List(_, count_ty, item_ty) => {
                                skip_list(body, *count_ty, *item_ty, line)?
                            }
                        }
                    }
                    body.end_record()?;
                    vertices.push(Vec3::new(values[ix], values[iy], values[iz]));
                }
            }
            "face" => {
                let list = element.properties.iter().position(|p| {
                    matches!(p, Property::List(n, _, _) if n == "vertex_indices" || n == "vertex_index")
                });
                let list = list.ok_or_else(|| parse_err(line, "face element lacks vertex_indices"))?;
                for _ in 0..element.count {
                    body.begin_record()?;
                    for (k, p) in element.properties.iter().enumerate() {
                        match p {
                            Property::Scalar(_, ty) => {
                                body.next(*ty)?;
                            }
                            Property::List(_, count_ty, item_ty) if k == list => {
                                let count = body.next(*count_ty)?;
                                if count < 3.0 {
                                    return Err(parse_err(line, "face needs at least three vertices"));
                                }
                                polygon.clear();
                                for _ in 0..count as usize {
                                    let idx = body.next(*item_ty)?;
                                    if idx < 0.0 || idx.fract() != 0.0 {
                                        return Err(parse_err(line, format!("bad face index {idx}")));
                                    }
                                    polygon.push(idx as usize);
                                }
                                fan(&polygon, &mut faces);
                            }
                            Property::List(_, count_ty, item_ty) => {
                                skip_list(body, *count_ty, *item_ty, line)?
                            }
                        }
                    }
                    body.end_record()?;
                }
            }
            _ => {
                for _ in 0..element.count {
                    body.begin_record()?;
                    for p in &element.properties {
                        match p {
                            Property::Scalar(_, ty) => {
                                body.next(*ty)?;
                            }
                            Property::List(_, c, i) => skip_list(body, *c, *i, line)?,
                        }
                    }
                    body.end_record()?;
                }
            }
        }
    }
    TriangleMesh::new(vertices, faces)
}

fn skip_list(
    body: &mut dyn PlyBody,
    count_ty: Scalar,
    item_ty: Scalar,
    line: usize,
) -> Result<(), MeshError> {
    let count = body.next(count_ty)?;
    if count < 0.0 {
        return Err(parse_err(line, "negative list length"));
    }
    for _ in 0..count as usize {
        body.next(item_ty)?;
    }
    Ok(())
}

fn ply_header(mesh: &TriangleMesh, encoding: &str) -> String {
    format!(
        "ply\nformat {encoding} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )
}

pub fn write_ply_ascii(mesh: &TriangleMesh) -> String {
    let mut out = ply_header(mesh, "ascii");
    for v in &mesh.vertices {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}

pub fn write_ply_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = ply_header(mesh, "binary_little_endian").into_bytes();
    out.reserve(mesh.vertices.len() * 24 + mesh.faces.len() * 13);
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}
