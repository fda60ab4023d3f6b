//! Sources of joint and anchor motion.
//!
//! The oracle reads ground-truth joints and silhouette. An external predictor
//! is any program that accepts an exchange directory:
//!
//! * `request.json` — `{"stage", "window", "handles": [[x, y], ...]}` with
//!   handle pixels in the current mesh projection;
//! * `image_NNN.png`, `silhouette_NNN.png` — crops centred on each handle
//!   of the input image and of the mesh-projected silhouette;
//!
//! and writes `response.json` there: `{"vectors": [[dx, dy], ...]}` (pixels)
//! for joints or `{"scalars": [s or null, ...]}` (metres along the vertex
//! normal, `null` to leave the anchor out) for anchors.

use std::fs;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::anchors::{oracle_anchor_motion, AnchorConfig, AnchorMotion, AnchorSet, AnchorStatus};
use crate::camera::WeakPerspectiveCamera;
use crate::error::{Error, Result};
use crate::grid::{save_rgb_png, BinaryMask, RgbImage};
use crate::handles::{annotations_from_pixels, crop_windows, joint_positions, oracle_joint_motion, JointHandleSet, JointMotion};
use crate::mesh::{TriMesh, Vec2};
use crate::raster::rasterize;

/// Everything a predictor may look at.
pub struct PredictionInput<'a> {
    pub mesh: &'a TriMesh,
    pub camera: &'a WeakPerspectiveCamera,
    pub image: Option<&'a RgbImage>,
    /// Ground truth, only for the oracle.
    pub gt_joints: Option<&'a [Vec2]>,
    pub gt_silhouette: Option<&'a BinaryMask>,
}

pub trait HandlePredictor {
    fn joint_motion(&self, input: &PredictionInput<'_>, handles: &JointHandleSet) -> Result<JointMotion>;
    fn anchor_motion(&self, input: &PredictionInput<'_>, anchors: &AnchorSet) -> Result<AnchorMotion>;
}

pub struct OraclePredictor {
    pub anchor: AnchorConfig,
}

impl HandlePredictor for OraclePredictor {
    fn joint_motion(&self, input: &PredictionInput<'_>, handles: &JointHandleSet) -> Result<JointMotion> {
        let gt = input
            .gt_joints
            .ok_or_else(|| Error::Annotation("the oracle needs ground-truth joints".into()))?;
        oracle_joint_motion(input.mesh, handles, input.camera, &annotations_from_pixels(gt))
    }

    fn anchor_motion(&self, input: &PredictionInput<'_>, anchors: &AnchorSet) -> Result<AnchorMotion> {
        let gt = input
            .gt_silhouette
            .ok_or_else(|| Error::Parameter("the oracle needs a ground-truth silhouette".into()))?;
        oracle_anchor_motion(input.mesh, anchors, input.camera, gt, &self.anchor)
    }
}

pub struct CommandPredictor {
    pub command: String,
    pub exchange_dir: std::path::PathBuf,
    pub joint_window: usize,
    pub anchor_window: usize,
}

#[derive(Serialize)]
struct Request<'a> {
    stage: &'a str,
    window: usize,
    handles: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
struct Response {
    #[serde(default)]
    vectors: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    scalars: Option<Vec<Option<f64>>>,
}

fn mask_image(mask: &BinaryMask) -> RgbImage {
    mask.map(|&m| if m { [1.0; 3] } else { [0.0; 3] })
}

impl CommandPredictor {
    fn exchange(&self, stage: &str, input: &PredictionInput<'_>, pixels: &[Vec2], window: usize) -> Result<Response> {
        let dir = self.exchange_dir.join(stage);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let image = input
            .image
            .ok_or_else(|| Error::Parameter("an external predictor needs the input image".into()))?;
        let own = mask_image(&rasterize(input.camera, input.mesh).mask);
        for (k, (a, b)) in crop_windows(image, pixels, window)?
            .iter()
            .zip(crop_windows(&own, pixels, window)?)
            .enumerate()
        {
            save_rgb_png(a, dir.join(format!("image_{k:03}.png")))?;
            save_rgb_png(&b, dir.join(format!("silhouette_{k:03}.png")))?;
        }
        let req = Request {
            stage,
            window,
            handles: pixels.iter().map(|p| [p.x, p.y]).collect(),
        };
        let req_path = dir.join("request.json");
        let text = serde_json::to_string_pretty(&req).map_err(|e| Error::json(&req_path, e))?;
        fs::write(&req_path, text).map_err(|e| Error::io(&req_path, e))?;
        let resp_path = dir.join("response.json");
        let _ = fs::remove_file(&resp_path);

        let status = Command::new("sh")
            .arg("-c")
            .arg(format!("{} \"$0\"", self.command))
            .arg(&dir)
            .status()
            .map_err(|e| Error::io(Path::new("sh"), e))?;
        if !status.success() {
            return Err(Error::Parameter(format!("predictor `{}` exited with {status}", self.command)));
        }
        let text = fs::read_to_string(&resp_path).map_err(|e| Error::io(&resp_path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&resp_path, e))
    }
}

impl HandlePredictor for CommandPredictor {
    fn joint_motion(&self, input: &PredictionInput<'_>, handles: &JointHandleSet) -> Result<JointMotion> {
        let pixels = joint_positions(input.mesh, handles, input.camera);
        let resp = self.exchange("joint", input, &pixels, self.joint_window)?;
        let vectors = resp
            .vectors
            .ok_or_else(|| Error::Parameter("joint predictor response has no `vectors`".into()))?;
        if vectors.len() != pixels.len() {
            return Err(Error::Annotation(format!(
                "joint predictor returned {} vectors for {} joints",
                vectors.len(),
                pixels.len()
            )));
        }
        Ok(JointMotion {
            vectors: vectors.iter().map(|v| Vec2::new(v[0], v[1])).collect(),
        })
    }

    fn anchor_motion(&self, input: &PredictionInput<'_>, anchors: &AnchorSet) -> Result<AnchorMotion> {
        let pixels: Vec<Vec2> = anchors
            .vertices
            .iter()
            .map(|&v| input.camera.project(&input.mesh.vertices[v]))
            .collect();
        let resp = self.exchange("anchor", input, &pixels, self.anchor_window)?;
        let scalars = resp
            .scalars
            .ok_or_else(|| Error::Parameter("anchor predictor response has no `scalars`".into()))?;
        if scalars.len() != pixels.len() {
            return Err(Error::Parameter(format!(
                "anchor predictor returned {} scalars for {} anchors",
                scalars.len(),
                pixels.len()
            )));
        }
        Ok(AnchorMotion {
            scalars: scalars.iter().map(|s| s.unwrap_or(0.0)).collect(),
            status: scalars
                .iter()
                .map(|s| if s.is_some() { AnchorStatus::Participating } else { AnchorStatus::NoCrossing })
                .collect(),
        })
    }
}
