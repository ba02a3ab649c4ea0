//! OFF and OBJ readers/writers for triangle meshes (positions and
//! triangular faces only).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{MeshError, TriangleMesh};

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
fn content_lines<R: BufRead>(input: R) -> Result<Vec<(usize, String)>, MeshError> {
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if !body.is_empty() {
            out.push((k + 1, body.to_string()));
        }
    }
    Ok(out)
}

pub fn read_off<R: BufRead>(input: R) -> Result<TriangleMesh, MeshError> {
    let lines = content_lines(input)?;
    let mut iter = lines.iter();
    let (ln, first) = iter.next().ok_or_else(|| parse_err(0, "empty file"))?;
    // The counts may follow the keyword on the same line.
    let counts_text = match first.strip_prefix("OFF") {
        Some(rest) if rest.trim().is_empty() => {
            let (_, c) = iter.next().ok_or_else(|| parse_err(*ln, "missing counts"))?;
            c.as_str()
        }
        Some(rest) => rest.trim(),
        None => return Err(parse_err(*ln, "missing OFF header")),
    };
    let counts: Vec<usize> = counts_text
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(*ln, format!("bad count {t:?}"))))
        .collect::<Result<_, _>>()?;
    if counts.len() < 2 {
        return Err(parse_err(*ln, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = iter.next().ok_or_else(|| parse_err(0, "truncated vertex list"))?;
        let c: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|t| t.parse().map_err(|_| parse_err(*ln, format!("bad coordinate {t:?}"))))
            .collect::<Result<_, _>>()?;
        if c.len() != 3 {
            return Err(parse_err(*ln, "vertex needs three coordinates"));
        }
        vertices.push([c[0], c[1], c[2]]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = iter.next().ok_or_else(|| parse_err(0, "truncated face list"))?;
        let ids: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(*ln, format!("bad index {t:?}"))))
            .collect::<Result<_, _>>()?;
        match ids.as_slice() {
            [3, a, b, c, ..] => faces.push([*a, *b, *c]),
            [k, ..] => return Err(parse_err(*ln, format!("only triangles are supported, got a {k}-gon"))),
            [] => return Err(parse_err(*ln, "empty face")),
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn read_obj<R: BufRead>(input: R) -> Result<TriangleMesh, MeshError> {
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in content_lines(input)? {
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let c: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse().map_err(|_| parse_err(ln, format!("bad coordinate {t:?}"))))
                    .collect::<Result<_, _>>()?;
                if c.len() != 3 {
                    return Err(parse_err(ln, "vertex needs three coordinates"));
                }
                vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let ids: Vec<usize> = tokens
                    .map(|t| {
                        // "i", "i/t", "i//n" or "i/t/n"; only the position index matters.
                        let head = t.split('/').next().unwrap_or("");
                        let raw: i64 = head
                            .parse()
                            .map_err(|_| parse_err(ln, format!("bad face index {t:?}")))?;
                        let idx = if raw > 0 {
                            raw - 1
                        } else if raw < 0 {
                            vertices.len() as i64 + raw
                        } else {
                            return Err(parse_err(ln, "face index 0 is invalid in OBJ"));
                        };
                        usize::try_from(idx).map_err(|_| parse_err(ln, format!("face index {raw} out of range")))
                    })
                    .collect::<Result<_, _>>()?;
                if ids.len() != 3 {
                    return Err(parse_err(ln, format!("only triangles are supported, got {} vertices", ids.len())));
                }
                faces.push([ids[0], ids[1], ids[2]]);
            }
            // Normals, texture coordinates, groups and materials are ignored.
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn write_off<W: Write>(mesh: &TriangleMesh, mut out: W) -> std::io::Result<()> {
    writeln!(out, "OFF")?;
    writeln!(out, "{} {} 0", mesh.n_vertices(), mesh.faces().len())?;
    for p in mesh.vertices() {
        writeln!(out, "{:?} {:?} {:?}", p[0], p[1], p[2])?;
    }
    for f in mesh.faces() {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

pub fn write_obj<W: Write>(mesh: &TriangleMesh, mut out: W) -> std::io::Result<()> {
    for p in mesh.vertices() {
        writeln!(out, "v {:?} {:?} {:?}", p[0], p[1], p[2])?;
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

fn read_any(path: &Path) -> Result<TriangleMesh, MeshError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let reader = BufReader::new(File::open(path)?);
    match ext.as_str() {
        "off" => read_off(reader),
        "obj" => read_obj(reader),
        other => Err(MeshError::UnsupportedFormat(other.to_string())),
    }
}

/// Loads an OFF or OBJ mesh (by extension) and requires a connected edge
/// graph.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh, MeshError> {
    let mesh = read_any(path)?;
    mesh.ensure_connected()?;
    Ok(mesh)
}

/// Loads a mesh and returns its connected components as separate meshes.
pub fn load_mesh_components(path: &Path) -> Result<Vec<TriangleMesh>, MeshError> {
    Ok(read_any(path)?.split_components())
}

pub fn save_mesh(mesh: &TriangleMesh, path: &Path) -> Result<(), MeshError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let mut w = BufWriter::new(File::create(path)?);
    match ext.as_str() {
        "off" => write_off(mesh, &mut w)?,
        "obj" => write_obj(mesh, &mut w)?,
        other => return Err(MeshError::UnsupportedFormat(other.to_string())),
    }
    w.flush()?;
    Ok(())
}
