//! ASCII OFF and OBJ readers and writers.
//!
//! Readers fan-triangulate polygon faces. Writers emit coordinates with 17
//! significant digits so a write/read cycle reproduces every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point3, TriMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(Self::Off),
            "obj" => Some(Self::Obj),
            _ => None,
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        MeshFormat::Off => read_off(&text, path),
        MeshFormat::Obj => read_obj(&text, path),
    }
}

fn fan(poly: &[usize], out: &mut Vec<[usize; 3]>) {
    for k in 1..poly.len() - 1 {
        out.push([poly[0], poly[k], poly[k + 1]]);
    }
}

fn finish(vertices: Vec<Point3>, faces: Vec<[usize; 3]>, face_lines: &[usize], path: &Path) -> Result<TriMesh> {
    if vertices.is_empty() || faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    TriMesh::new(vertices, faces).map_err(|e| match e {
        Error::IndexOutOfRange { face, index, count } => Error::parse(
            path,
            face_lines[face],
            format!("index out of range: vertex {index} of {count}"),
        ),
        Error::RepeatedIndex(face) => {
            Error::parse(path, face_lines[face], "face repeats a vertex index")
        }
        other => other,
    })
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, path: &Path, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(path, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} `{tok}`")))
}

/// Parses OFF text. `path` is only used in error messages.
pub fn read_off(text: &str, path: &Path) -> Result<TriMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing OFF header"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(path, header_line, "expected `OFF` header"))?
        .trim();
    // Some exporters put the counts on the header line ("OFF490 518 0").
    let (count_line, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::parse(path, header_line, "missing element counts"))?
    } else {
        (header_line, rest)
    };
    let mut tok = counts.split_whitespace();
    let nv: usize = parse_num(tok.next(), path, count_line, "vertex count")?;
    let nf: usize = parse_num(tok.next(), path, count_line, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, count_line, "unexpected end of vertex list"))?;
        let mut t = l.split_whitespace();
        let x = parse_num(t.next(), path, ln, "x coordinate")?;
        let y = parse_num(t.next(), path, ln, "y coordinate")?;
        let z = parse_num(t.next(), path, ln, "z coordinate")?;
        vertices.push(Point3::new(x, y, z));
    }

    let mut faces = Vec::with_capacity(nf);
    let mut face_lines = Vec::with_capacity(nf);
    let mut poly = Vec::new();
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, count_line, "unexpected end of face list"))?;
        let mut t = l.split_whitespace();
        let n: usize = parse_num(t.next(), path, ln, "face size")?;
        if n < 3 {
            return Err(Error::parse(path, ln, format!("non-triangulable face with {n} vertices")));
        }
        poly.clear();
        for _ in 0..n {
            poly.push(parse_num(t.next(), path, ln, "face index")?);
        }
        let before = faces.len();
        fan(&poly, &mut faces);
        face_lines.resize(face_lines.len() + faces.len() - before, ln);
    }
    finish(vertices, faces, &face_lines, path)
}

/// Parses OBJ text, reading only `v` and `f` records. Face tokens may carry
/// `/vt/vn` suffixes and negative (relative) indices.
pub fn read_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut face_lines = Vec::new();
    let mut poly = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut t = line.split_whitespace();
        match t.next() {
            Some("v") => {
                let x = parse_num(t.next(), path, ln, "x coordinate")?;
                let y = parse_num(t.next(), path, ln, "y coordinate")?;
                let z = parse_num(t.next(), path, ln, "z coordinate")?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                poly.clear();
                for tok in t {
                    let head = tok.split('/').next().unwrap_or("");
                    let raw: i64 = parse_num(Some(head), path, ln, "face index")?;
                    let index = match raw {
                        r if r > 0 => r as usize - 1,
                        r if r < 0 && (-r) as usize <= vertices.len() => {
                            (vertices.len() as i64 + r) as usize
                        }
                        _ => {
                            return Err(Error::parse(path, ln, format!("index out of range: {raw}")))
                        }
                    };
                    poly.push(index);
                }
                if poly.len() < 3 {
                    return Err(Error::parse(
                        path,
                        ln,
                        format!("non-triangulable face with {} vertices", poly.len()),
                    ));
                }
                let before = faces.len();
                fan(&poly, &mut faces);
                face_lines.resize(face_lines.len() + faces.len() - before, ln);
            }
            _ => {}
        }
    }
    finish(vertices, faces, &face_lines, path)
}

fn coord(out: &mut String, v: f64) {
    // {:.16e} prints 17 significant digits, enough to round-trip any f64.
    let _ = write!(out, "{v:.16e}");
}

pub fn write_off(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", mesh.vertex_count(), mesh.face_count());
    for v in mesh.vertices() {
        coord(&mut s, v.x);
        s.push(' ');
        coord(&mut s, v.y);
        s.push(' ');
        coord(&mut s, v.z);
        s.push('\n');
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    fs::write(path, obj_string(mesh)).map_err(|e| Error::io(path, e))
}

pub(crate) fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        s.push_str("v ");
        coord(&mut s, v.x);
        s.push(' ');
        coord(&mut s, v.y);
        s.push(' ');
        coord(&mut s, v.z);
        s.push('\n');
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}
