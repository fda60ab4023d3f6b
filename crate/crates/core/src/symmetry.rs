//! Bilateral vertex correspondence.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::par;
use crate::spatial::KdTree;

/// Coordinate axis normal to the mirror plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(Error::Parameter(format!("unknown axis `{s}`"))),
        }
    }
}

/// Left/right vertex pairing plus the self-symmetric vertices.
///
/// In each pair the first index is the vertex on the positive side of the
/// mirror plane.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryMap {
    pub vertex_pairs: Vec<(usize, usize)>,
    pub fixed: Vec<usize>,
}

impl SymmetryMap {
    /// Dense partner lookup; `None` when `n` does not cover every entry or a
    /// vertex is unmapped.
    pub fn partner_table(&self, n: usize) -> Result<Vec<usize>> {
        let mut table = vec![usize::MAX; n];
        let mut set = |i: usize, j: usize| -> Result<()> {
            if i >= n || j >= n {
                return Err(Error::Parameter(format!("symmetry index out of range ({i}, {j})")));
            }
            if table[i] != usize::MAX {
                return Err(Error::Parameter(format!("vertex {i} appears twice in symmetry map")));
            }
            table[i] = j;
            Ok(())
        };
        for &(l, r) in &self.vertex_pairs {
            set(l, r)?;
            set(r, l)?;
        }
        for &f in &self.fixed {
            set(f, f)?;
        }
        if let Some(missing) = table.iter().position(|&p| p == usize::MAX) {
            return Err(Error::Parameter(format!("vertex {missing} missing from symmetry map")));
        }
        Ok(table)
    }

    pub fn is_involution(&self, n: usize) -> bool {
        match self.partner_table(n) {
            Ok(t) => (0..n).all(|i| t[t[i]] == i),
            Err(_) => false,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Pairs every vertex with the nearest vertex to its reflection across the
/// coordinate plane normal to `axis`.
pub fn mirror_correspondence(mesh: &TriMesh, axis: Axis, tolerance: f64) -> Result<SymmetryMap> {
    let a = axis.index();
    let tree = KdTree::new(&mesh.vertices);
    let tol2 = tolerance * tolerance;
    let partner: Vec<Option<usize>> = par::map_slice(&mesh.vertices, |v| {
        let mut r: Vec3 = *v;
        r[a] = -r[a];
        tree.nearest(&r)
            .filter(|&(_, d2)| d2 <= tol2)
            .map(|(j, _)| j)
    });

    let mut offending = Vec::new();
    let mut pairs = Vec::new();
    let mut fixed = Vec::new();
    for (i, p) in partner.iter().enumerate() {
        match *p {
            None => offending.push(i),
            Some(j) if partner[j] != Some(i) => offending.push(i),
            Some(j) if j == i => fixed.push(i),
            Some(j) => {
                if i < j {
                    let (l, r) = if mesh.vertices[i][a] >= mesh.vertices[j][a] {
                        (i, j)
                    } else {
                        (j, i)
                    };
                    pairs.push((l, r));
                }
            }
        }
    }
    if !offending.is_empty() {
        return Err(Error::Asymmetry { offending });
    }
    Ok(SymmetryMap {
        vertex_pairs: pairs,
        fixed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    fn points(p: &[[f64; 3]]) -> TriMesh {
        TriMesh {
            vertices: p.iter().map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
            faces: vec![],
            uvs: None,
            vertex_tags: None,
        }
    }

    #[test]
    fn two_points_form_one_pair() {
        let m = points(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let s = mirror_correspondence(&m, Axis::X, 1e-6).unwrap();
        assert_eq!(s.vertex_pairs, vec![(0, 1)]);
        assert!(s.fixed.is_empty());
    }

    #[test]
    fn on_plane_point_is_fixed() {
        let m = points(&[[0.0, 1.0, 0.0]]);
        let s = mirror_correspondence(&m, Axis::X, 1e-6).unwrap();
        assert_eq!(s.fixed, vec![0]);
    }

    #[test]
    fn asymmetric_vertex_is_reported() {
        let m = points(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.5, 0.2, 0.0]]);
        match mirror_correspondence(&m, Axis::X, 1e-3) {
            Err(Error::Asymmetry { offending }) => assert_eq!(offending, vec![2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn icosphere_is_involutive() {
        let m = icosphere(1.0, 2);
        let s = mirror_correspondence(&m, Axis::X, 1e-9).unwrap();
        assert!(s.is_involution(m.vertex_count()));
        assert_eq!(2 * s.vertex_pairs.len() + s.fixed.len(), m.vertex_count());
    }

    #[test]
    fn partner_table_detects_duplicates() {
        let s = SymmetryMap {
            vertex_pairs: vec![(0, 1)],
            fixed: vec![1],
        };
        assert!(s.partner_table(2).is_err());
    }
}
