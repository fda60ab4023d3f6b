//! Indexed triangle mesh, adjacency, normals and midpoint subdivision.

use std::collections::HashMap;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::par;

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// Indexed triangle mesh with optional per-corner UVs and per-vertex labels.
///
/// Faces are wound counter-clockwise when seen from outside, so
/// `(b - a) x (c - a)` points outward.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// One UV triple per face (one pair per corner), in `[0, 1]^2`.
    pub uvs: Option<Vec<[Vec2; 3]>>,
    /// Optional label per vertex such as `"face"`, `"fingers"` or `"toes"`.
    pub vertex_tags: Option<Vec<Option<String>>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriMesh {
            vertices,
            faces,
            uvs: None,
            vertex_tags: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_uvs(mut self, uvs: Vec<[Vec2; 3]>) -> Result<Self> {
        self.uvs = Some(uvs);
        self.validate()?;
        Ok(self)
    }

    pub fn with_tags(mut self, tags: Vec<Option<String>>) -> Result<Self> {
        self.vertex_tags = Some(tags);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references a vertex >= {n}"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        if let Some(uvs) = &self.uvs {
            if uvs.len() != self.faces.len() {
                return Err(Error::InvalidMesh(format!(
                    "{} UV triples for {} faces",
                    uvs.len(),
                    self.faces.len()
                )));
            }
        }
        if let Some(tags) = &self.vertex_tags {
            if tags.len() != n {
                return Err(Error::InvalidMesh(format!(
                    "{} vertex tags for {n} vertices",
                    tags.len()
                )));
            }
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex position".into()));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn tag(&self, vertex: usize) -> Option<&str> {
        self.vertex_tags
            .as_ref()
            .and_then(|t| t[vertex].as_deref())
    }

    /// Unique undirected edges `(min, max)` in first-seen order, with incident face counts.
    pub fn edges(&self) -> Vec<((usize, usize), usize)> {
        let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.faces.len() * 2);
        let mut out: Vec<((usize, usize), usize)> = Vec::with_capacity(self.faces.len() * 3 / 2);
        for f in &self.faces {
            for k in 0..3 {
                let key = edge_key(f[k], f[(k + 1) % 3]);
                match index.get(&key) {
                    Some(&e) => out[e].1 += 1,
                    None => {
                        index.insert(key, out.len());
                        out.push((key, 1));
                    }
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.faces.len() as i64
    }

    /// Sorted one-ring neighbours of every vertex.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Faces incident to each vertex, in face order.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                out[v].push(fi);
            }
        }
        out
    }

    /// Unnormalised face normal; its length is twice the face area.
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.faces[face];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (pb - pa).cross(&(pc - pa))
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        let n = self.face_cross(face);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            n
        }
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn centroid(&self) -> Vec3 {
        let sum: Vec3 = self.vertices.iter().sum();
        sum / self.vertices.len().max(1) as f64
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Same topology, UVs and tags with new positions.
    pub fn with_positions(&self, vertices: Vec<Vec3>) -> TriMesh {
        assert_eq!(vertices.len(), self.vertices.len());
        TriMesh {
            vertices,
            faces: self.faces.clone(),
            uvs: self.uvs.clone(),
            vertex_tags: self.vertex_tags.clone(),
        }
    }

    pub fn translated(&self, t: &Vec3) -> TriMesh {
        self.with_positions(self.vertices.iter().map(|v| v + t).collect())
    }

    /// Keeps the listed faces; vertices stay as they are so indices remain valid.
    pub fn with_faces(&self, keep: &[usize]) -> TriMesh {
        TriMesh {
            vertices: self.vertices.clone(),
            faces: keep.iter().map(|&f| self.faces[f]).collect(),
            uvs: self
                .uvs
                .as_ref()
                .map(|uv| keep.iter().map(|&f| uv[f]).collect()),
            vertex_tags: self.vertex_tags.clone(),
        }
    }

    /// Concatenates two meshes into one vertex/face list.
    pub fn merged(&self, other: &TriMesh) -> TriMesh {
        let offset = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(
            other
                .faces
                .iter()
                .map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]),
        );
        let uvs = match (&self.uvs, &other.uvs) {
            (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).copied().collect()),
            _ => None,
        };
        let vertex_tags = match (&self.vertex_tags, &other.vertex_tags) {
            (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).cloned().collect()),
            _ => None,
        };
        TriMesh {
            vertices,
            faces,
            uvs,
            vertex_tags,
        }
    }
}

#[inline]
pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Area-weighted vertex normals.
///
/// Each vertex normal is the normalised sum of the unnormalised normals of
/// its incident faces, which weights every face by its area.
pub fn vertex_normals(mesh: &TriMesh) -> Result<Vec<Vec3>> {
    let mut acc = vec![Vec3::zeros(); mesh.vertices.len()];
    let crosses = par::map_range(mesh.faces.len(), |f| mesh.face_cross(f));
    for (f, n) in mesh.faces.iter().zip(&crosses) {
        for &v in f {
            acc[v] += n;
        }
    }
    let scale = mesh
        .vertices
        .iter()
        .fold(0.0f64, |m, v| m.max(v.amax()))
        .max(1e-300);
    let eps = 1e-24 * scale * scale;
    acc.into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len <= eps || !len.is_finite() {
                Err(Error::DegenerateNormal { vertex: i })
            } else {
                Ok(n / len)
            }
        })
        .collect()
}

/// 1-to-4 midpoint subdivision.
///
/// Every edge gains a vertex at its midpoint (numbered `V + edge_index` in
/// first-seen edge order) and each face `(a, b, c)` becomes
/// `(a, ab, ca)`, `(ab, b, bc)`, `(ca, bc, c)` and `(ab, bc, ca)`.
pub fn subdivide_1to4(mesh: &TriMesh) -> Result<TriMesh> {
    let nv = mesh.vertices.len();
    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::with_capacity(mesh.faces.len() * 2);
    let mut edge_faces: Vec<u8> = Vec::with_capacity(mesh.faces.len() * 3 / 2);
    let mut vertices = mesh.vertices.clone();
    vertices.reserve(mesh.faces.len() * 3 / 2);
    let mut tags = mesh.vertex_tags.clone();

    let mut mids = Vec::with_capacity(mesh.faces.len());
    for f in &mesh.faces {
        let mut m = [0usize; 3];
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = edge_key(a, b);
            let id = match edge_index.get(&key) {
                Some(&e) => {
                    edge_faces[e] += 1;
                    if edge_faces[e] > 2 {
                        return Err(Error::Topology(format!(
                            "edge ({}, {}) has more than two incident faces",
                            key.0, key.1
                        )));
                    }
                    e
                }
                None => {
                    let e = edge_faces.len();
                    edge_index.insert(key, e);
                    edge_faces.push(1);
                    vertices.push((mesh.vertices[a] + mesh.vertices[b]) * 0.5);
                    if let Some(t) = tags.as_mut() {
                        let tag = match (&t[a], &t[b]) {
                            (Some(x), Some(y)) if x == y => Some(x.clone()),
                            _ => None,
                        };
                        t.push(tag);
                    }
                    e
                }
            };
            m[k] = nv + id;
        }
        mids.push(m);
    }

    let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
    for (f, m) in mesh.faces.iter().zip(&mids) {
        let [a, b, c] = *f;
        let [ab, bc, ca] = *m;
        faces.push([a, ab, ca]);
        faces.push([ab, b, bc]);
        faces.push([ca, bc, c]);
        faces.push([ab, bc, ca]);
    }

    let uvs = mesh.uvs.as_ref().map(|uvs| {
        let mut out = Vec::with_capacity(uvs.len() * 4);
        for t in uvs {
            let [a, b, c] = *t;
            let ab = (a + b) * 0.5;
            let bc = (b + c) * 0.5;
            let ca = (c + a) * 0.5;
            out.push([a, ab, ca]);
            out.push([ab, b, bc]);
            out.push([ca, bc, c]);
            out.push([ab, bc, ca]);
        }
        out
    });

    Ok(TriMesh {
        vertices,
        faces,
        uvs,
        vertex_tags: tags,
    })
}

/// Vertices of a regular tetrahedron centred at the origin, outward winding.
pub fn tetrahedron() -> TriMesh {
    let vertices = vec![
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ];
    let faces = vec![[0, 2, 3], [0, 3, 1], [0, 1, 2], [1, 3, 2]];
    TriMesh::new(vertices, faces).expect("static tetrahedron is valid")
}

/// Axis-aligned cube `[-h, h]^3` split into 12 outward triangles.
pub fn cube(half: f64) -> TriMesh {
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        let x = if i & 1 == 0 { -half } else { half };
        let y = if i & 2 == 0 { -half } else { half };
        let z = if i & 4 == 0 { -half } else { half };
        vertices.push(Vec3::new(x, y, z));
    }
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let mut faces = Vec::with_capacity(12);
    for q in quads {
        faces.push([q[0], q[1], q[2]]);
        faces.push([q[0], q[2], q[3]]);
    }
    TriMesh::new(vertices, faces).expect("static cube is valid")
}

/// Icosphere of the given radius after `levels` rounds of midpoint
/// subdivision with reprojection onto the sphere.
pub fn icosphere(radius: f64, levels: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let vertices: Vec<Vec3> = raw
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize() * radius)
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut mesh = TriMesh::new(vertices, faces).expect("static icosahedron is valid");
    for _ in 0..levels {
        mesh = subdivide_1to4(&mesh).expect("icosphere is manifold");
        for v in &mut mesh.vertices {
            *v = v.normalize() * radius;
        }
    }
    mesh
}

/// Regular `n x n` vertex grid on `[0, size]^2` at height `z`, faces wound
/// towards +z, UVs spanning the unit square.
pub fn grid_sheet(n: usize, size: f64, z: f64) -> TriMesh {
    assert!(n >= 2);
    let step = size / (n - 1) as f64;
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vertices.push(Vec3::new(i as f64 * step, j as f64 * step, z));
        }
    }
    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    let uv = |i: usize, j: usize| Vec2::new(i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64);
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let a = j * n + i;
            let b = a + 1;
            let c = a + n;
            let d = c + 1;
            faces.push([a, b, d]);
            uvs.push([uv(i, j), uv(i + 1, j), uv(i + 1, j + 1)]);
            faces.push([a, d, c]);
            uvs.push([uv(i, j), uv(i + 1, j + 1), uv(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces)
        .and_then(|m| m.with_uvs(uvs))
        .expect("grid sheet is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_out_of_range_and_degenerate_faces() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert!(TriMesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn uv_count_must_match_faces() {
        let m = tetrahedron();
        assert!(m.with_uvs(vec![[Vec2::zeros(); 3]; 3]).is_err());
    }

    #[test]
    fn cube_corner_normals_are_diagonal() {
        let m = cube(0.5);
        let n = vertex_normals(&m).unwrap();
        let s = 1.0 / 3f64.sqrt();
        for (v, nv) in m.vertices.iter().zip(&n) {
            let expect = Vec3::new(v.x.signum(), v.y.signum(), v.z.signum()) * s;
            // area weighting on a split quad is asymmetric per corner, so only
            // the sign pattern and rough direction are exact
            assert!(nv.dot(&expect) > 0.9, "{nv:?} vs {expect:?}");
        }
        // corners 0 and 7 touch both halves of each adjacent quad
        assert_relative_eq!(n[0], Vec3::repeat(-s), epsilon = 1e-15);
        assert_relative_eq!(n[7], Vec3::repeat(s), epsilon = 1e-15);
    }

    #[test]
    fn flat_sheet_normals_point_up() {
        let m = grid_sheet(5, 1.0, 0.0);
        for n in vertex_normals(&m).unwrap() {
            assert_relative_eq!(n, Vec3::z(), epsilon = 1e-15);
        }
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let m = icosphere(1.0, 3);
        let n = vertex_normals(&m).unwrap();
        let worst = m
            .vertices
            .iter()
            .zip(&n)
            .map(|(v, n)| v.normalize().dot(n).clamp(-1.0, 1.0).acos().to_degrees())
            .fold(0.0, f64::max);
        assert!(worst < 5.0, "max deviation {worst} deg");
    }

    #[test]
    fn isolated_vertex_has_no_normal() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let m = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(
            vertex_normals(&m),
            Err(Error::DegenerateNormal { vertex: 3 })
        ));
    }

    #[test]
    fn subdivision_counts() {
        let t = subdivide_1to4(&tetrahedron()).unwrap();
        assert_eq!((t.vertex_count(), t.face_count()), (10, 16));
        let tri = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        let s = subdivide_1to4(&tri).unwrap();
        assert_eq!((s.vertex_count(), s.face_count()), (6, 4));
    }

    #[test]
    fn subdivision_keeps_originals_and_euler() {
        let m = icosphere(2.0, 1);
        let s = subdivide_1to4(&m).unwrap();
        assert_eq!(&s.vertices[..m.vertex_count()], &m.vertices[..]);
        assert_eq!(s.euler_characteristic(), m.euler_characteristic());
        // midpoint vertices lie exactly halfway
        for (k, ((a, b), _)) in m.edges().into_iter().enumerate() {
            assert_eq!(s.vertices[m.vertex_count() + k], (m.vertices[a] + m.vertices[b]) * 0.5);
        }
    }

    #[test]
    fn subdivision_splits_uvs() {
        let m = grid_sheet(3, 1.0, 0.0);
        let s = subdivide_1to4(&m).unwrap();
        let uvs = s.uvs.as_ref().unwrap();
        assert_eq!(uvs.len(), 4 * m.face_count());
        let [a, b, _] = m.uvs.as_ref().unwrap()[0];
        assert_eq!(uvs[0][1], (a + b) * 0.5);
    }

    #[test]
    fn non_manifold_edge_is_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z(), -Vec3::y()];
        let m = TriMesh::new(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]).unwrap();
        assert!(matches!(subdivide_1to4(&m), Err(Error::Topology(_))));
    }

    #[test]
    fn convex_normals_point_outward() {
        for m in [cube(1.0), icosphere(1.0, 2), tetrahedron()] {
            let c = m.centroid();
            for (v, n) in m.vertices.iter().zip(vertex_normals(&m).unwrap()) {
                assert!(n.dot(&(v - c)) > 0.0);
            }
        }
    }
}
