//! Joint handles: the 10 body joints, their oracle motions and the joint stage.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::WeakPerspectiveCamera;
use crate::error::{Error, Result};
use crate::grid::{Grid, RgbImage};
use crate::laplacian::{solve_deform, DeformProblem, HandleConstraint};
use crate::mesh::{TriMesh, Vec2, Vec3};

/// Joint order used by every per-joint array in the crate.
pub const JOINT_NAMES: [&str; 10] = [
    "head",
    "waist",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// Default Laplacian handle weight for the joint stage.
pub const JOINT_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointHandles {
    pub name: String,
    pub vertices: Vec<usize>,
}

/// Vertex sets around the 10 joints; the centroid of a set is the joint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointHandleSet {
    pub joints: Vec<JointHandles>,
}

impl JointHandleSet {
    pub fn validate(&self, vertex_count: usize) -> Result<()> {
        if self.joints.len() != JOINT_NAMES.len() {
            return Err(Error::Parameter(format!(
                "expected {} joints, found {}",
                JOINT_NAMES.len(),
                self.joints.len()
            )));
        }
        let mut seen = HashSet::new();
        for (j, name) in self.joints.iter().zip(JOINT_NAMES) {
            if j.name != name {
                return Err(Error::Parameter(format!("joint `{}` found where `{name}` expected", j.name)));
            }
            if j.vertices.is_empty() {
                return Err(Error::Parameter(format!("joint `{name}` has no handle vertices")));
            }
            for &v in &j.vertices {
                if v >= vertex_count {
                    return Err(Error::Parameter(format!("joint `{name}` vertex {v} out of range")));
                }
                if !seen.insert(v) {
                    return Err(Error::Parameter(format!("vertex {v} belongs to two joints")));
                }
            }
        }
        Ok(())
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

/// One annotated 2-d joint, as stored in joint annotation JSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAnnotation {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

pub fn annotations_from_pixels(pixels: &[Vec2]) -> Vec<JointAnnotation> {
    JOINT_NAMES
        .iter()
        .zip(pixels)
        .map(|(n, p)| JointAnnotation {
            name: n.to_string(),
            x: p.x,
            y: p.y,
        })
        .collect()
}

/// Orders annotations by [`JOINT_NAMES`]; missing joints are an error.
pub fn pixels_from_annotations(annotations: &[JointAnnotation]) -> Result<Vec<Vec2>> {
    JOINT_NAMES
        .iter()
        .map(|name| {
            annotations
                .iter()
                .find(|a| a.name == *name)
                .map(|a| Vec2::new(a.x, a.y))
                .ok_or_else(|| Error::Annotation(format!("missing annotation for joint `{name}`")))
        })
        .collect()
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<JointAnnotation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn save_annotations(annotations: &[JointAnnotation], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(annotations).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// 3-d centroid of each joint's handle vertices.
pub fn joint_centroids(mesh: &TriMesh, handles: &JointHandleSet) -> Vec<Vec3> {
    handles
        .joints
        .iter()
        .map(|j| j.vertices.iter().map(|&v| mesh.vertices[v]).sum::<Vec3>() / j.vertices.len() as f64)
        .collect()
}

/// Projected joint positions in pixels.
pub fn joint_positions(mesh: &TriMesh, handles: &JointHandleSet, camera: &WeakPerspectiveCamera) -> Vec<Vec2> {
    joint_centroids(mesh, handles)
        .iter()
        .map(|c| camera.project(c))
        .collect()
}

/// Per-joint 2-d motion vectors in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMotion {
    pub vectors: Vec<Vec2>,
}

impl JointMotion {
    pub fn zero() -> Self {
        JointMotion {
            vectors: vec![Vec2::zeros(); JOINT_NAMES.len()],
        }
    }
}

/// Displacement from each mesh-projected joint to its annotated position.
pub fn oracle_joint_motion(
    mesh: &TriMesh,
    handles: &JointHandleSet,
    camera: &WeakPerspectiveCamera,
    gt_joints: &[JointAnnotation],
) -> Result<JointMotion> {
    let gt = pixels_from_annotations(gt_joints)?;
    let current = joint_positions(mesh, handles, camera);
    Ok(JointMotion {
        vectors: gt.iter().zip(&current).map(|(g, c)| g - c).collect(),
    })
}

/// Moves every handle vertex of each joint by that joint's motion in the
/// image plane (depth free) and solves the Laplacian deformation.
pub fn apply_joint_stage(
    mesh: &TriMesh,
    handles: &JointHandleSet,
    camera: &WeakPerspectiveCamera,
    motion: &JointMotion,
    weight: f64,
) -> Result<TriMesh> {
    if motion.vectors.len() != handles.joints.len() {
        return Err(Error::Annotation(format!(
            "{} motion vectors for {} joints",
            motion.vectors.len(),
            handles.joints.len()
        )));
    }
    let mut constraints = Vec::new();
    for (j, m) in handles.joints.iter().zip(&motion.vectors) {
        for &v in &j.vertices {
            constraints.push(HandleConstraint::pixel(v, camera.project(&mesh.vertices[v]) + m, weight));
        }
    }
    solve_deform(&DeformProblem::new(mesh, constraints, Some(*camera)))
}

/// Square patches of side `window` centred on the rounded handle pixels,
/// zero outside the image. Patch pixel `(i, j)` is image pixel
/// `(cx - window/2 + i, cy - window/2 + j)`.
pub fn crop_windows(image: &RgbImage, handle_pixels: &[Vec2], window: usize) -> Result<Vec<RgbImage>> {
    if window == 0 || window % 2 != 0 {
        return Err(Error::Parameter(format!("crop window must be even and positive, got {window}")));
    }
    let half = (window / 2) as i64;
    Ok(handle_pixels
        .iter()
        .map(|p| {
            let cx = p.x.round() as i64;
            let cy = p.y.round() as i64;
            Grid::from_fn(window, window, |i, j| {
                image
                    .checked(cx - half + i as i64, cy - half + j as i64)
                    .copied()
                    .unwrap_or([0.0; 3])
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::body_template;

    fn single(v: Vec<usize>) -> JointHandleSet {
        JointHandleSet {
            joints: JOINT_NAMES
                .iter()
                .enumerate()
                .map(|(k, n)| JointHandles {
                    name: n.to_string(),
                    vertices: if k == 0 { v.clone() } else { vec![] },
                })
                .collect(),
        }
    }

    #[test]
    fn centroid_of_two_vertices() {
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let cam = WeakPerspectiveCamera::new(1.0, [0.0, 0.0], [4, 4], 1.0).unwrap();
        let p = joint_positions(&m, &single(vec![0, 1]), &cam);
        assert_eq!(p[0], Vec2::new(1.0, 0.0));
        let p = joint_positions(&m, &single(vec![2]), &cam);
        assert_eq!(p[0], cam.project(&m.vertices[2]));
    }

    #[test]
    fn validate_catches_overlap_and_empty_sets() {
        let t = body_template();
        let mut h = t.joints.clone();
        h.validate(t.mesh.vertex_count()).unwrap();
        let v0 = h.joints[0].vertices[0];
        h.joints[1].vertices.push(v0);
        assert!(h.validate(t.mesh.vertex_count()).is_err());
        let mut h = t.joints.clone();
        h.joints[3].vertices.clear();
        assert!(h.validate(t.mesh.vertex_count()).is_err());
    }

    #[test]
    fn oracle_motion_cases() {
        let t = body_template();
        let cam = WeakPerspectiveCamera::fit_to_mesh(&t.mesh, [224, 224], 0.8).unwrap();
        let here = joint_positions(&t.mesh, &t.joints, &cam);
        let gt = annotations_from_pixels(&here);
        let m = oracle_joint_motion(&t.mesh, &t.joints, &cam, &gt).unwrap();
        assert!(m.vectors.iter().all(|v| *v == Vec2::zeros()));

        let shifted: Vec<_> = here.iter().map(|p| p + Vec2::new(5.0, 0.0)).collect();
        let m = oracle_joint_motion(&t.mesh, &t.joints, &cam, &annotations_from_pixels(&shifted)).unwrap();
        for v in &m.vectors {
            assert!((v - Vec2::new(5.0, 0.0)).norm() < 1e-12);
        }

        let mut partial = gt.clone();
        partial.retain(|a| a.name != "left_knee");
        match oracle_joint_motion(&t.mesh, &t.joints, &cam, &partial) {
            Err(Error::Annotation(msg)) => assert!(msg.contains("left_knee")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_motion_is_a_fixed_point() {
        let t = body_template();
        let cam = WeakPerspectiveCamera::fit_to_mesh(&t.mesh, [224, 224], 0.8).unwrap();
        let out = apply_joint_stage(&t.mesh, &t.joints, &cam, &JointMotion::zero(), JOINT_WEIGHT).unwrap();
        for (a, b) in out.vertices.iter().zip(&t.mesh.vertices) {
            assert!((a - b).amax() <= 1e-9);
        }
    }

    #[test]
    fn crops_centre_and_corner() {
        let img = Grid::from_fn(224, 224, |x, y| [x as f64, y as f64, 1.0]);
        let p = crop_windows(&img, &[Vec2::new(112.0, 112.0)], 64).unwrap();
        assert_eq!((p[0].width, p[0].height), (64, 64));
        assert_eq!(*p[0].get(0, 0), [80.0, 80.0, 1.0]);
        assert_eq!(*p[0].get(63, 63), [143.0, 143.0, 1.0]);

        let c = crop_windows(&img, &[Vec2::new(0.0, 0.0)], 32).unwrap();
        for j in 0..32 {
            for i in 0..32 {
                let v = *c[0].get(i, j);
                if i < 16 || j < 16 {
                    assert_eq!(v, [0.0; 3]);
                } else {
                    assert_eq!(v, [(i - 16) as f64, (j - 16) as f64, 1.0]);
                }
            }
        }
        assert!(crop_windows(&img, &[Vec2::zeros()], 31).is_err());
    }

    #[test]
    fn ten_joint_patches() {
        let t = body_template();
        let cam = WeakPerspectiveCamera::fit_to_mesh(&t.mesh, [224, 224], 0.8).unwrap();
        let img = Grid::new(224, 224, [0.5; 3]);
        let patches = crop_windows(&img, &joint_positions(&t.mesh, &t.joints, &cam), 64).unwrap();
        assert_eq!(patches.len(), 10);
        assert!(patches.iter().all(|p| p.size() == (64, 64)));
    }
}
