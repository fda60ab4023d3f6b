//! Wavefront OBJ reading and writing (positions, texture coordinates, triangles).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec2, Vec3};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

/// Parses OBJ text. `origin` only labels error messages.
pub fn parse_obj(text: &str, origin: &Path) -> Result<TriMesh> {
    let fail = |line: usize, message: String| Error::Format {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut positions: Vec<Vec3> = Vec::new();
    let mut texcoords: Vec<Vec2> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut face_uvs: Vec<Option<[usize; 3]>> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap_or("");
        match keyword {
            "v" => {
                let c: Vec<f64> = parts
                    .take(3)
                    .map(|p| p.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| fail(line_no, format!("bad vertex coordinate: {e}")))?;
                if c.len() != 3 {
                    return Err(fail(line_no, "vertex needs three coordinates".into()));
                }
                positions.push(Vec3::new(c[0], c[1], c[2]));
            }
            "vt" => {
                let c: Vec<f64> = parts
                    .take(2)
                    .map(|p| p.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| fail(line_no, format!("bad texture coordinate: {e}")))?;
                if c.len() != 2 {
                    return Err(fail(line_no, "texture coordinate needs two values".into()));
                }
                texcoords.push(Vec2::new(c[0], c[1]));
            }
            "f" => {
                let corners: Vec<&str> = parts.collect();
                if corners.len() != 3 {
                    return Err(Error::UnsupportedTopology(format!(
                        "{}:{line_no}: face with {} corners; only triangles are supported",
                        origin.display(),
                        corners.len()
                    )));
                }
                let mut vi = [0usize; 3];
                let mut ti = [0usize; 3];
                let mut with_uv = 0;
                for (k, corner) in corners.iter().enumerate() {
                    let mut fields = corner.split('/');
                    let v = fields.next().unwrap_or("");
                    vi[k] = resolve_index(v, positions.len())
                        .ok_or_else(|| fail(line_no, format!("bad vertex index `{v}`")))?;
                    if let Some(t) = fields.next().filter(|t| !t.is_empty()) {
                        ti[k] = resolve_index(t, texcoords.len())
                            .ok_or_else(|| fail(line_no, format!("bad texcoord index `{t}`")))?;
                        with_uv += 1;
                    }
                }
                if with_uv != 0 && with_uv != 3 {
                    return Err(fail(line_no, "mixed corners with and without texcoords".into()));
                }
                if vi[0] == vi[1] || vi[1] == vi[2] || vi[0] == vi[2] {
                    return Err(fail(line_no, format!("degenerate face {vi:?}")));
                }
                faces.push(vi);
                face_uvs.push((with_uv == 3).then_some(ti));
            }
            "vn" | "o" | "g" | "s" | "usemtl" | "mtllib" | "l" | "vp" => {}
            other => {
                return Err(fail(line_no, format!("unknown statement `{other}`")));
            }
        }
    }

    let mut mesh = TriMesh::new(positions, faces)?;
    if !face_uvs.is_empty() && face_uvs.iter().all(Option::is_some) {
        let uvs = face_uvs
            .into_iter()
            .map(|t| {
                let t = t.expect("checked above");
                [texcoords[t[0]], texcoords[t[1]], texcoords[t[2]]]
            })
            .collect();
        mesh = mesh.with_uvs(uvs)?;
    }
    Ok(mesh)
}

fn resolve_index(token: &str, len: usize) -> Option<usize> {
    let i: i64 = token.parse().ok()?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        len as i64 + i
    } else {
        return None;
    };
    (0..len as i64).contains(&idx).then_some(idx as usize)
}

/// Serialises a mesh to OBJ text. Coordinates use the shortest round-trip
/// decimal form, so reloading reproduces positions bit-exactly.
pub fn to_obj_string(mesh: &TriMesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 48 + mesh.faces.len() * 32);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    match &mesh.uvs {
        Some(uvs) => {
            let mut index: HashMap<(u64, u64), usize> = HashMap::new();
            let mut order: Vec<Vec2> = Vec::new();
            let mut corner_ids = Vec::with_capacity(uvs.len());
            for tri in uvs {
                let mut ids = [0usize; 3];
                for (k, uv) in tri.iter().enumerate() {
                    let key = (uv.x.to_bits(), uv.y.to_bits());
                    ids[k] = *index.entry(key).or_insert_with(|| {
                        order.push(*uv);
                        order.len() - 1
                    });
                }
                corner_ids.push(ids);
            }
            for uv in &order {
                let _ = writeln!(out, "vt {} {}", uv.x, uv.y);
            }
            for (f, t) in mesh.faces.iter().zip(&corner_ids) {
                let _ = writeln!(
                    out,
                    "f {}/{} {}/{} {}/{}",
                    f[0] + 1,
                    t[0] + 1,
                    f[1] + 1,
                    t[1] + 1,
                    f[2] + 1,
                    t[2] + 1
                );
            }
        }
        None => {
            for f in &mesh.faces {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
    }
    out
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_obj_string(mesh)).map_err(|e| Error::io(path, e))
}
