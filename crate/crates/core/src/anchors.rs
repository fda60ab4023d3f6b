//! Anchor handles: k-means selected surface vertices pushed along their
//! normals until the rendered silhouette meets the target silhouette.

use serde::{Deserialize, Serialize};

use crate::camera::WeakPerspectiveCamera;
use crate::cluster::{kmeans, medoid_indices};
use crate::error::{Error, Result};
use crate::grid::BinaryMask;
use crate::laplacian::{solve_deform, DeformProblem, HandleConstraint};
use crate::mesh::{vertex_normals, TriMesh, Vec2};
use crate::raster::rasterize;

pub const DEFAULT_ANCHOR_COUNT: usize = 200;
/// Normals are scaled by this (metres) in the clustering feature, so a unit
/// normal difference weighs like 10 cm of position.
pub const DEFAULT_NORMAL_WEIGHT: f64 = 0.1;
pub const ANCHOR_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub vertices: Vec<usize>,
}

/// Clusters the non-excluded vertices on `[position, normal_weight * normal]`
/// and keeps the member nearest each centroid.
pub fn select_anchors(
    mesh: &TriMesh,
    k: usize,
    normal_weight: f64,
    excluded_labels: &[&str],
    seed: u64,
) -> Result<AnchorSet> {
    let normals = vertex_normals(mesh)?;
    let eligible: Vec<usize> = (0..mesh.vertex_count())
        .filter(|&v| mesh.tag(v).is_none_or(|t| !excluded_labels.contains(&t)))
        .collect();
    if eligible.len() < k {
        return Err(Error::Parameter(format!(
            "{k} anchors requested but only {} vertices are eligible",
            eligible.len()
        )));
    }
    let features: Vec<[f64; 6]> = eligible
        .iter()
        .map(|&v| {
            let p = mesh.vertices[v];
            let n = normals[v] * normal_weight;
            [p.x, p.y, p.z, n.x, n.y, n.z]
        })
        .collect();
    let clustering = kmeans(&features, k, seed)?;
    Ok(AnchorSet {
        vertices: medoid_indices(&features, &clustering)
            .into_iter()
            .map(|i| eligible[i])
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorConfig {
    /// An anchor takes part only if its own silhouette is this close (px).
    pub contour_band: f64,
    pub max_search: f64,
    pub step: f64,
    /// Motions larger than this (metres) are treated as mismatches.
    pub max_offset: f64,
    /// Minimum length of the image-plane part of the unit normal.
    pub min_normal_xy: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig {
            contour_band: 12.0,
            max_search: 40.0,
            step: 0.25,
            max_offset: 0.1,
            min_normal_xy: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStatus {
    Participating,
    DegenerateNormal,
    OutOfFrame,
    OffContour,
    NoCrossing,
    TooFar,
}

/// Signed displacement (metres, along the vertex normal) per anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorMotion {
    pub scalars: Vec<f64>,
    pub status: Vec<AnchorStatus>,
}

impl AnchorMotion {
    pub fn participating(&self) -> usize {
        self.status.iter().filter(|s| **s == AnchorStatus::Participating).count()
    }
}

fn inside(mask: &BinaryMask, p: &Vec2) -> bool {
    mask.checked(p.x.floor() as i64, p.y.floor() as i64)
        .copied()
        .unwrap_or(false)
}

fn in_frame(mask: &BinaryMask, p: &Vec2) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x < mask.width as f64 && p.y < mask.height as f64
}

/// Signed distance in pixels from `origin` along the unit `direction` to the
/// nearest silhouette crossing, stepping `step` pixels both ways. Positive
/// means the crossing lies along `direction`. `None` if there is none within
/// `max_search`. Pixels outside the image count as background.
pub fn silhouette_normal_distance(
    mask: &BinaryMask,
    origin: Vec2,
    direction: Vec2,
    max_search: f64,
    step: f64,
) -> Result<Option<f64>> {
    if !in_frame(mask, &origin) {
        return Err(Error::OutOfFrame {
            x: origin.x,
            y: origin.y,
            width: mask.width,
            height: mask.height,
        });
    }
    let steps = (max_search / step).ceil() as usize;
    let mut prev = [inside(mask, &origin); 2];
    for k in 1..=steps {
        for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
            let here = inside(mask, &(origin + direction * (sign * k as f64 * step)));
            if here != prev[slot] {
                return Ok(Some(sign * (k as f64 - 0.5) * step));
            }
            prev[slot] = here;
        }
    }
    Ok(None)
}

/// Measures, for each anchor near the mesh's own occluding contour, how far
/// the target silhouette lies beyond that contour along the projected normal.
pub fn oracle_anchor_motion(
    mesh: &TriMesh,
    anchors: &AnchorSet,
    camera: &WeakPerspectiveCamera,
    gt_mask: &BinaryMask,
    config: &AnchorConfig,
) -> Result<AnchorMotion> {
    if gt_mask.size() != (camera.width(), camera.height()) {
        return Err(Error::Parameter("target mask does not match the camera image size".into()));
    }
    let own = rasterize(camera, mesh).mask;
    let normals = vertex_normals(mesh)?;
    let mut scalars = Vec::with_capacity(anchors.vertices.len());
    let mut status = Vec::with_capacity(anchors.vertices.len());
    for &v in &anchors.vertices {
        let (s, st) = measure(&own, gt_mask, camera, &mesh.vertices[v], &normals[v], config)?;
        scalars.push(s);
        status.push(st);
    }
    Ok(AnchorMotion { scalars, status })
}

fn measure(
    own: &BinaryMask,
    gt: &BinaryMask,
    camera: &WeakPerspectiveCamera,
    position: &crate::mesh::Vec3,
    normal: &crate::mesh::Vec3,
    config: &AnchorConfig,
) -> Result<(f64, AnchorStatus)> {
    let nxy = Vec2::new(normal.x, normal.y);
    if nxy.norm() < config.min_normal_xy {
        return Ok((0.0, AnchorStatus::DegenerateNormal));
    }
    let dir = nxy.normalize();
    let p = camera.project(position);
    if !in_frame(own, &p) {
        return Ok((0.0, AnchorStatus::OutOfFrame));
    }
    let to_contour = match silhouette_normal_distance(own, p, dir, config.contour_band, config.step)? {
        Some(d) => d,
        None => return Ok((0.0, AnchorStatus::OffContour)),
    };
    let q = p + dir * to_contour;
    if !in_frame(gt, &q) {
        return Ok((0.0, AnchorStatus::OutOfFrame));
    }
    let Some(px) = silhouette_normal_distance(gt, q, dir, config.max_search, config.step)? else {
        return Ok((0.0, AnchorStatus::NoCrossing));
    };
    let metres = px / camera.scale;
    if metres.abs() > config.max_offset {
        return Ok((0.0, AnchorStatus::TooFar));
    }
    Ok((metres, AnchorStatus::Participating))
}

/// Moves each participating anchor by its scalar along its vertex normal and
/// solves the Laplacian deformation.
pub fn apply_anchor_stage(mesh: &TriMesh, anchors: &AnchorSet, motion: &AnchorMotion, weight: f64) -> Result<TriMesh> {
    if motion.scalars.len() != anchors.vertices.len() || motion.status.len() != anchors.vertices.len() {
        return Err(Error::Parameter("anchor motion does not match the anchor set".into()));
    }
    let normals = vertex_normals(mesh)?;
    let constraints: Vec<HandleConstraint> = anchors
        .vertices
        .iter()
        .zip(motion.scalars.iter().zip(&motion.status))
        .filter(|(_, (_, st))| **st == AnchorStatus::Participating)
        .map(|(&v, (&s, _))| HandleConstraint::point(v, mesh.vertices[v] + normals[v] * s, weight))
        .collect();
    if constraints.is_empty() {
        return Err(Error::NoConstraints("no anchor takes part in this iteration".into()));
    }
    solve_deform(&DeformProblem::new(mesh, constraints, None))
}
