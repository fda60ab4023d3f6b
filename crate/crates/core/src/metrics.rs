//! Evaluation: silhouette IoU, 2-d joint error and one-directional
//! vertex-to-vertex Chamfer distance.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::WeakPerspectiveCamera;
use crate::error::{Error, Result};
use crate::grid::{require_same_size, BinaryMask};
use crate::handles::{joint_positions, JointHandleSet};
use crate::mesh::{TriMesh, Vec2};
use crate::par;
use crate::raster::{rasterize, Raster};
use crate::spatial::KdTree;

/// `|a and b| / |a or b|`; 1 when both masks are empty.
pub fn silhouette_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::Alignment(format!(
            "masks are {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

pub fn per_joint_errors(pred: &[Vec2], gt: &[Vec2]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::Annotation(format!(
            "{} predicted joints against {} annotated",
            pred.len(),
            gt.len()
        )));
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| (p - g).norm()).collect())
}

/// Mean Euclidean pixel distance over corresponding joints.
pub fn joint_error(pred: &[Vec2], gt: &[Vec2]) -> Result<f64> {
    let e = per_joint_errors(pred, gt)?;
    if e.is_empty() {
        return Err(Error::Annotation("no joints".into()));
    }
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Mean distance in millimetres from each (selected) GT vertex to its nearest
/// predicted vertex.
pub fn chamfer_gt_to_pred(gt: &TriMesh, pred: &TriMesh, visible: Option<&[bool]>) -> Result<f64> {
    if let Some(v) = visible {
        if v.len() != gt.vertex_count() {
            return Err(Error::Alignment(format!(
                "{} visibility flags for {} vertices",
                v.len(),
                gt.vertex_count()
            )));
        }
    }
    if pred.vertices.is_empty() {
        return Err(Error::EmptySelection("predicted mesh has no vertices".into()));
    }
    let selected: Vec<usize> = (0..gt.vertex_count())
        .filter(|&i| visible.is_none_or(|v| v[i]))
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptySelection("no ground-truth vertex selected".into()));
    }
    let tree = KdTree::new(&pred.vertices);
    let dists = par::map_slice(&selected, |&i| {
        tree.nearest(&gt.vertices[i]).expect("non-empty tree").1.sqrt()
    });
    Ok(1000.0 * dists.iter().sum::<f64>() / dists.len() as f64)
}

/// A vertex is visible when any incident face is visible in `raster`.
pub fn visible_vertices_from_raster(mesh: &TriMesh, raster: &Raster) -> Vec<bool> {
    let mut vis = vec![false; mesh.vertex_count()];
    for (f, face) in mesh.faces.iter().enumerate() {
        if raster.face_visible[f] {
            for &v in face {
                vis[v] = true;
            }
        }
    }
    vis
}

pub fn visible_vertex_filter(mesh: &TriMesh, camera: &WeakPerspectiveCamera) -> Vec<bool> {
    visible_vertices_from_raster(mesh, &rasterize(camera, mesh))
}

/// Metrics of one mesh state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage: String,
    pub sil_iou: f64,
    pub joint_err_px: f64,
    pub joint_err_per_joint_px: Vec<f64>,
    pub chamfer_full_mm: Option<f64>,
    pub chamfer_visible_mm: Option<f64>,
}

/// Final numbers plus the per-stage breakdown, final stage last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sil_iou: f64,
    pub joint_err_px: f64,
    pub chamfer_full_mm: Option<f64>,
    pub chamfer_visible_mm: Option<f64>,
    pub stages: Vec<StageMetrics>,
}

impl MetricsReport {
    pub fn from_stages(stages: Vec<StageMetrics>) -> Result<Self> {
        let last = stages
            .last()
            .ok_or_else(|| Error::EmptySelection("metrics report without stages".into()))?;
        Ok(MetricsReport {
            sil_iou: last.sil_iou,
            joint_err_px: last.joint_err_px,
            chamfer_full_mm: last.chamfer_full_mm,
            chamfer_visible_mm: last.chamfer_visible_mm,
            stages,
        })
    }

    pub fn stage(&self, name: &str) -> Option<&StageMetrics> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// What a mesh is scored against.
#[derive(Debug, Clone, Copy)]
pub struct EvalTarget<'a> {
    pub camera: &'a WeakPerspectiveCamera,
    pub handles: &'a JointHandleSet,
    pub silhouette: &'a BinaryMask,
    pub joints: &'a [Vec2],
    /// GT mesh for the Chamfer terms, with its camera-visible vertices.
    pub gt_mesh: Option<(&'a TriMesh, &'a [bool])>,
}

pub fn evaluate_stage(stage: &str, mesh: &TriMesh, target: &EvalTarget<'_>) -> Result<StageMetrics> {
    let raster = rasterize(target.camera, mesh);
    require_same_size(&raster.mask, target.silhouette, "silhouette")?;
    let sil_iou = silhouette_iou(&raster.mask, target.silhouette)?;
    let pred = joint_positions(mesh, target.handles, target.camera);
    let per_joint = per_joint_errors(&pred, target.joints)?;
    let joint_err_px = joint_error(&pred, target.joints)?;
    let (full, vis) = match target.gt_mesh {
        Some((gt, visible)) => (
            Some(chamfer_gt_to_pred(gt, mesh, None)?),
            Some(chamfer_gt_to_pred(gt, mesh, Some(visible))?),
        ),
        None => (None, None),
    };
    Ok(StageMetrics {
        stage: stage.to_string(),
        sil_iou,
        joint_err_px,
        joint_err_per_joint_px: per_joint,
        chamfer_full_mm: full,
        chamfer_visible_mm: vis,
    })
}
