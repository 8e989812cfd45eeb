use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{DeformableMesh, GeometryError, Vec3};
use crate::numfmt::fmt_sig9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    /// Wavefront OBJ; only `v x y z` and triangular `f i j k` records are read.
    Obj,
    /// X3D `IndexedTriangleSet` with a `Coordinate` child.
    X3dTriangleSet,
}

pub fn load_mesh(bytes: &[u8], format: MeshFormat) -> Result<DeformableMesh, GeometryError> {
    match format {
        MeshFormat::Obj => load_obj(bytes),
        MeshFormat::X3dTriangleSet => load_x3d(bytes),
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> GeometryError {
    GeometryError::Parse {
        line,
        message: message.into(),
    }
}

fn load_obj(bytes: &[u8]) -> Result<DeformableMesh, GeometryError> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(0, format!("not UTF-8: {e}")))?;
    let mut positions = Vec::new();
    let mut faces: Vec<(usize, [usize; 3])> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for slot in &mut xyz {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(line, "vertex needs three coordinates"))?;
                    *slot = tok
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| parse_err(line, format!("malformed coordinate `{tok}`")))?;
                }
                positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(parse_err(
                        line,
                        format!("face has {} vertices; only triangles are supported", refs.len()),
                    ));
                }
                let mut tri = [0usize; 3];
                for (slot, tok) in tri.iter_mut().zip(&refs) {
                    let head = tok.split('/').next().unwrap_or_default();
                    let index: usize = head
                        .parse()
                        .map_err(|_| parse_err(line, format!("malformed face index `{tok}`")))?;
                    if index == 0 {
                        return Err(parse_err(line, "face indices are 1-based"));
                    }
                    *slot = index - 1;
                }
                faces.push((line, tri));
            }
            _ => {}
        }
    }

    let vertex_count = positions.len();
    let face_lines: Vec<usize> = faces.iter().map(|&(line, _)| line).collect();
    let mut triangles = Vec::with_capacity(faces.len());
    for (line, tri) in faces {
        if let Some(&bad) = tri.iter().find(|&&i| i >= vertex_count) {
            return Err(parse_err(
                line,
                format!(
                    "vertex index {} out of range ({vertex_count} vertices)",
                    bad + 1
                ),
            ));
        }
        triangles.push(tri.map(|i| i as u32));
    }
    DeformableMesh::new(positions, triangles).map_err(|e| match e {
        GeometryError::DegenerateTriangle { triangle } => {
            parse_err(face_lines[triangle], "degenerate (zero-area) triangle")
        }
        other => other,
    })
}

fn attribute(tag: &BytesStart<'_>, name: &str) -> Result<Option<String>, GeometryError> {
    for attr in tag.attributes() {
        let attr = attr.map_err(|e| x3d_err(tag, e.to_string()))?;
        if attr.key.as_ref() == name.as_bytes() {
            let value = attr
                .unescape_value()
                .map_err(|e| x3d_err(tag, e.to_string()))?;
            return Ok(Some(value.into_owned()));
        }
    }
    Ok(None)
}

fn x3d_err(tag: &BytesStart<'_>, message: impl Into<String>) -> GeometryError {
    GeometryError::X3d {
        element: String::from_utf8_lossy(tag.name().as_ref()).into_owned(),
        message: message.into(),
    }
}

fn numbers(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
}

fn load_x3d(bytes: &[u8]) -> Result<DeformableMesh, GeometryError> {
    let mut reader = Reader::from_reader(bytes);
    let mut buf = Vec::new();
    let mut index: Option<Vec<u32>> = None;
    let mut points: Option<Vec<Vec3>> = None;
    let mut in_set = false;

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| GeometryError::X3d {
                element: "document".into(),
                message: e.to_string(),
            })?;
        match event {
            Event::Start(ref tag) | Event::Empty(ref tag) => match tag.name().as_ref() {
                b"IndexedTriangleSet" => {
                    if index.is_some() {
                        return Err(x3d_err(tag, "only one IndexedTriangleSet is supported"));
                    }
                    let raw = attribute(tag, "index")?
                        .ok_or_else(|| x3d_err(tag, "missing `index` attribute"))?;
                    let mut parsed = Vec::new();
                    for tok in numbers(&raw) {
                        let i: i64 = tok
                            .parse()
                            .map_err(|_| x3d_err(tag, format!("malformed index `{tok}`")))?;
                        if i < 0 {
                            return Err(x3d_err(tag, "negative index; faces must be triangles"));
                        }
                        parsed.push(i as u32);
                    }
                    if parsed.len() % 3 != 0 {
                        return Err(x3d_err(tag, "index count is not a multiple of 3"));
                    }
                    index = Some(parsed);
                    in_set = matches!(event, Event::Start(_));
                }
                b"Coordinate" => {
                    if !in_set {
                        return Err(x3d_err(tag, "Coordinate outside IndexedTriangleSet"));
                    }
                    let raw = attribute(tag, "point")?
                        .ok_or_else(|| x3d_err(tag, "missing `point` attribute"))?;
                    let values: Vec<f64> = numbers(&raw)
                        .map(|tok| {
                            tok.parse::<f64>()
                                .ok()
                                .filter(|x| x.is_finite())
                                .ok_or_else(|| x3d_err(tag, format!("malformed coordinate `{tok}`")))
                        })
                        .collect::<Result<_, _>>()?;
                    if !values.len().is_multiple_of(3) {
                        return Err(x3d_err(tag, "coordinate count is not a multiple of 3"));
                    }
                    points = Some(
                        values
                            .chunks_exact(3)
                            .map(|c| Vec3::new(c[0], c[1], c[2]))
                            .collect(),
                    );
                }
                _ => {}
            },
            Event::End(ref tag) if tag.name().as_ref() == b"IndexedTriangleSet" => in_set = false,
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    let index = index.ok_or_else(|| GeometryError::X3d {
        element: "IndexedTriangleSet".into(),
        message: "not found".into(),
    })?;
    let points = points.ok_or_else(|| GeometryError::X3d {
        element: "Coordinate".into(),
        message: "not found".into(),
    })?;
    let triangles = index.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    DeformableMesh::new(points, triangles).map_err(|e| match e {
        GeometryError::IndexOutOfRange {
            triangle,
            index,
            vertex_count,
        } => GeometryError::X3d {
            element: "IndexedTriangleSet".into(),
            message: format!(
                "triangle {triangle} references point {index} but only {vertex_count} exist"
            ),
        },
        other => other,
    })
}

/// Writes the rest geometry as OBJ with 9-significant-digit coordinates.
pub fn save_obj(mesh: &DeformableMesh) -> String {
    let mut out = String::new();
    for p in mesh.rest_positions() {
        let _ = writeln!(out, "v {} {} {}", fmt_sig9(p.x), fmt_sig9(p.y), fmt_sig9(p.z));
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}
