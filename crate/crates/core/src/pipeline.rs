//! End-to-end recovery: joint → anchor → subdivide → vertex → texture, with
//! every intermediate state written to the output directory.
//!
//! Output layout (`NN` is the record index):
//!
//! ```text
//! NN_<stage>/mesh.obj, silhouette.png, metrics.json   every record
//! NN_anchor/anchors.json, anchor_motion.json
//! NN_vertex/coarse_depth.bin, refined_depth.bin, target_depth.bin,
//!           albedo.png, lighting.json
//! NN_texture/partial.png, partial_mask.png, composed_mask.png,
//!            flow.bin, texture.png
//! stages.json, metrics.json, timings.json
//! ```
//!
//! Everything except `timings.json` is a pure function of config and inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anchors::{apply_anchor_stage, select_anchors, AnchorMotion, AnchorSet};
use crate::camera::WeakPerspectiveCamera;
use crate::config::{PipelineConfig, PredictorSpec, Stage};
use crate::error::{Error, Result};
use crate::grid::{load_mask_png, load_rgb_png, luminance, save_depth, save_mask_png, save_rgb_png, BinaryMask, Grid, RgbImage};
use crate::handles::{apply_joint_stage, load_annotations, pixels_from_annotations, JointHandleSet};
use crate::mesh::{subdivide_1to4, TriMesh, Vec2};
use crate::metrics::{evaluate_stage, silhouette_iou, visible_vertex_filter, EvalTarget, MetricsReport, StageMetrics};
use crate::obj::{load_mesh, save_mesh};
use crate::predict::{CommandPredictor, HandlePredictor, OraclePredictor, PredictionInput};
use crate::raster::{depth_to_normals, rasterize};
use crate::shading::{
    depth_to_vertex_displacement, estimate_albedo, estimate_lighting, magnify_details, refine_depth, visible_vertices,
};
use crate::synth::{load_camera, SyntheticCase};
use crate::template::body_template;
use crate::texture::{complete_texture_detailed, project_visible_texture, save_flow, UVSymmetry, UVTexture};

/// In-memory pipeline inputs.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub mesh: TriMesh,
    pub camera: WeakPerspectiveCamera,
    pub image: Option<RgbImage>,
    pub joints: Option<Vec<Vec2>>,
    pub silhouette: Option<BinaryMask>,
    pub gt_mesh: Option<TriMesh>,
    pub handles: JointHandleSet,
    /// Whether `mesh` shares the body template's connectivity and atlas, which
    /// provides exclusion labels and the UV mirror map.
    pub template_topology: bool,
}

fn shares_template_topology(mesh: &TriMesh) -> bool {
    let t = body_template();
    mesh.faces == t.mesh.faces
}

fn require(path: &Option<PathBuf>, key: &str, why: &str) -> Result<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| Error::Config(format!("`{key}` is required {why}")))?;
    if !p.is_file() {
        return Err(Error::Config(format!("`{key}` file {} does not exist", p.display())));
    }
    Ok(p)
}

fn optional(path: &Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
    match path {
        Some(p) if !p.is_file() => Err(Error::Config(format!("`{key}` file {} does not exist", p.display()))),
        other => Ok(other.clone()),
    }
}

impl PipelineInputs {
    /// Checks that every file the enabled stages need exists, then loads.
    pub fn load(config: &PipelineConfig) -> Result<Self> {
        let p = &config.inputs;
        let mesh_path = require(&p.mesh, "mesh", "")?;
        let camera_path = require(&p.camera, "camera", "")?;
        let needs_image = config.enabled(Stage::Vertex) || config.enabled(Stage::Texture);
        let image_path = if needs_image {
            Some(require(&p.image, "image", "by the vertex and texture stages")?)
        } else {
            optional(&p.image, "image")?
        };
        let joints_path = if config.enabled(Stage::Joint) && config.joint_predictor == PredictorSpec::Oracle {
            Some(require(&p.joints, "joints", "by the oracle joint stage")?)
        } else {
            optional(&p.joints, "joints")?
        };
        let sil_path = if config.enabled(Stage::Anchor) && config.anchor_predictor == PredictorSpec::Oracle {
            Some(require(&p.silhouette, "silhouette", "by the oracle anchor stage")?)
        } else {
            optional(&p.silhouette, "silhouette")?
        };
        let gt_path = optional(&p.gt_mesh, "gt_mesh")?;
        let handles_path = optional(&p.handles, "handles")?;

        let mesh = load_mesh(&mesh_path)?;
        let camera = load_camera(&camera_path)?;
        let template_topology = shares_template_topology(&mesh);
        let handles = match handles_path {
            Some(h) => JointHandleSet::load(h)?,
            None if template_topology => body_template().joints,
            None => {
                return Err(Error::Config(
                    "`handles` is required for meshes that do not share the template connectivity".into(),
                ))
            }
        };
        handles.validate(mesh.vertex_count())?;
        let inputs = PipelineInputs {
            mesh,
            camera,
            image: image_path.map(load_rgb_png).transpose()?,
            joints: joints_path
                .map(|j| load_annotations(j).and_then(|a| pixels_from_annotations(&a)))
                .transpose()?,
            silhouette: sil_path.map(load_mask_png).transpose()?,
            gt_mesh: gt_path.map(load_mesh).transpose()?,
            handles,
            template_topology,
        };
        inputs.check_sizes()?;
        Ok(inputs.with_template_tags())
    }

    pub fn from_case(case: &SyntheticCase) -> Self {
        PipelineInputs {
            mesh: case.initial_mesh.clone(),
            camera: case.camera,
            image: Some(case.image.clone()),
            joints: Some(case.joints.clone()),
            silhouette: Some(case.silhouette.clone()),
            gt_mesh: Some(case.gt_mesh.clone()),
            handles: body_template().joints,
            template_topology: true,
        }
        .with_template_tags()
    }

    fn with_template_tags(mut self) -> Self {
        if self.template_topology && self.mesh.vertex_tags.is_none() {
            self.mesh.vertex_tags = body_template().mesh.vertex_tags;
        }
        self
    }

    fn check_sizes(&self) -> Result<()> {
        let size = (self.camera.width(), self.camera.height());
        if let Some(img) = &self.image {
            if img.size() != size {
                return Err(Error::Config(format!(
                    "image is {}x{} but the camera expects {}x{}",
                    img.width, img.height, size.0, size.1
                )));
            }
        }
        if let Some(m) = &self.silhouette {
            if m.size() != size {
                return Err(Error::Config(format!(
                    "silhouette is {}x{} but the camera expects {}x{}",
                    m.width, m.height, size.0, size.1
                )));
            }
        }
        Ok(())
    }
}

/// One executed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Snapshot path relative to the output directory.
    pub mesh_path: Option<String>,
    pub metrics: Option<StageMetrics>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub records: Vec<StageRecord>,
    pub mesh: TriMesh,
    pub texture: Option<UVTexture>,
    pub report: Option<MetricsReport>,
}

fn uv_symmetry(size: usize) -> Result<UVSymmetry> {
    static CACHE: OnceLock<std::sync::Mutex<BTreeMap<usize, UVSymmetry>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(s) = cache.lock().expect("uv symmetry cache").get(&size) {
        return Ok(s.clone());
    }
    let t = body_template();
    let s = UVSymmetry::from_mesh(&t.mesh, &t.symmetry, size, size)?;
    cache.lock().expect("uv symmetry cache").insert(size, s.clone());
    Ok(s)
}

fn predictor(spec: &PredictorSpec, config: &PipelineConfig, out: Option<&Path>) -> Box<dyn HandlePredictor> {
    match spec {
        PredictorSpec::Oracle => Box::new(OraclePredictor { anchor: config.anchor }),
        PredictorSpec::Command(cmd) => Box::new(CommandPredictor {
            command: cmd.clone(),
            exchange_dir: out
                .map(|o| o.join("exchange"))
                .unwrap_or_else(|| std::env::temp_dir().join("meshrecon-exchange")),
            joint_window: config.joint_window,
            anchor_window: config.anchor_window,
        }),
    }
}

struct Writer<'a> {
    root: Option<&'a Path>,
}

impl Writer<'_> {
    fn stage_dir(&self, index: usize, name: &str) -> Result<Option<PathBuf>> {
        let Some(root) = self.root else { return Ok(None) };
        let dir = root.join(format!("{index:02}_{name}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Some(dir))
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Loads inputs named in the config and runs.
pub fn run_pipeline(config: &PipelineConfig, output: Option<&Path>) -> Result<PipelineOutcome> {
    let inputs = PipelineInputs::load(config)?;
    run_with_inputs(&inputs, config, output)
}

/// Runs the enabled stages. A failing stage aborts with its name; everything
/// written before it stays on disk.
pub fn run_with_inputs(inputs: &PipelineInputs, config: &PipelineConfig, output: Option<&Path>) -> Result<PipelineOutcome> {
    config.validate()?;
    if let Some(o) = output {
        fs::create_dir_all(o).map_err(|e| Error::io(o, e))?;
    }
    let writer = Writer { root: output };
    let camera = &inputs.camera;
    let gt_visible = inputs.gt_mesh.as_ref().map(|g| visible_vertex_filter(g, camera));
    let target = match (&inputs.silhouette, &inputs.joints) {
        (Some(s), Some(j)) => Some(EvalTarget {
            camera,
            handles: &inputs.handles,
            silhouette: s,
            joints: j,
            gt_mesh: inputs.gt_mesh.as_ref().zip(gt_visible.as_deref()),
        }),
        _ => None,
    };
    let joint_predictor = predictor(&config.joint_predictor, config, output);
    let anchor_predictor = predictor(&config.anchor_predictor, config, output);

    let mut records: Vec<StageRecord> = Vec::new();
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    let mut mesh = inputs.mesh.clone();
    let mut texture = None;

    let mut record = |name: &str, mesh: &TriMesh, started: Instant, records: &mut Vec<StageRecord>| -> Result<Option<PathBuf>> {
        let dir = writer.stage_dir(records.len(), name)?;
        let metrics = target.as_ref().map(|t| evaluate_stage(name, mesh, t)).transpose()?;
        let mut mesh_path = None;
        if let Some(d) = &dir {
            save_mesh(mesh, d.join("mesh.obj"))?;
            save_mask_png(&rasterize(camera, mesh).mask, d.join("silhouette.png"))?;
            if let Some(m) = &metrics {
                write_json(m, &d.join("metrics.json"))?;
            }
            mesh_path = Some(format!("{:02}_{name}/mesh.obj", records.len()));
        }
        let wall = started.elapsed().as_secs_f64();
        timings.insert(format!("{:02}_{name}", records.len()), wall);
        records.push(StageRecord {
            stage: name.to_string(),
            mesh_path,
            metrics,
            wall_time_s: wall,
        });
        Ok(dir)
    };

    record("initial", &mesh, Instant::now(), &mut records)?;

    for stage in Stage::ALL {
        if !config.enabled(stage) {
            continue;
        }
        let started = Instant::now();
        let name = stage.name();
        let wrap = |e: Error| e.in_stage(name);
        match stage {
            Stage::Joint => {
                let motion = joint_predictor.joint_motion(&prediction_input(inputs, &mesh), &inputs.handles).map_err(wrap)?;
                mesh = apply_joint_stage(&mesh, &inputs.handles, camera, &motion, config.joint_weight).map_err(wrap)?;
                record(name, &mesh, started, &mut records)?;
            }
            Stage::Anchor => {
                let excluded: Vec<&str> = config.anchor_exclude.iter().map(String::as_str).collect();
                let anchors = select_anchors(&mesh, config.anchor_count, config.anchor_normal_weight, &excluded, config.seed)
                    .map_err(wrap)?;
                let (next, motions) =
                    anchor_iterations(&mesh, &anchors, anchor_predictor.as_ref(), inputs, config).map_err(wrap)?;
                mesh = next;
                let dir = record(name, &mesh, started, &mut records)?;
                if let Some(d) = dir {
                    write_json(&anchors, &d.join("anchors.json"))?;
                    write_json(&motions, &d.join("anchor_motion.json"))?;
                }
            }
            Stage::Subdivide => {
                let mut next = subdivide_1to4(&mesh).map_err(wrap)?;
                if next.vertex_tags.is_none() {
                    next.vertex_tags = mesh.vertex_tags.clone();
                }
                mesh = next;
                record(name, &mesh, started, &mut records)?;
            }
            Stage::Vertex => {
                let image = inputs.image.as_ref().ok_or_else(|| wrap(Error::Config("no input image".into())))?;
                let v = vertex_stage(&mesh, camera, image, config).map_err(wrap)?;
                mesh = v.mesh.clone();
                let dir = record(name, &mesh, started, &mut records)?;
                if let Some(d) = dir {
                    save_depth(&v.coarse, d.join("coarse_depth.bin"))?;
                    save_depth(&v.refined, d.join("refined_depth.bin"))?;
                    save_depth(&v.target, d.join("target_depth.bin"))?;
                    let peak = v.albedo.data.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
                    save_rgb_png(&v.albedo.map(|a| [a / peak; 3]), d.join("albedo.png"))?;
                    v.lighting.save(d.join("lighting.json"))?;
                }
            }
            Stage::Texture => {
                let image = inputs.image.as_ref().ok_or_else(|| wrap(Error::Config("no input image".into())))?;
                let raster = rasterize(camera, &mesh);
                let size = config.texture_size;
                let proj = project_visible_texture(&mesh, camera, image, &raster, (size, size)).map_err(wrap)?;
                if !proj.skipped_faces.is_empty() {
                    log::warn!("{} visible faces have zero UV area", proj.skipped_faces.len());
                }
                let sym = if config.texture_symmetry && inputs.template_topology {
                    Some(uv_symmetry(size).map_err(wrap)?)
                } else {
                    None
                };
                let done =
                    complete_texture_detailed(&proj.texture, &proj.mask, sym.as_ref(), &config.completion).map_err(wrap)?;
                let dir = record(name, &mesh, started, &mut records)?;
                if let Some(d) = dir {
                    save_rgb_png(&proj.texture, d.join("partial.png"))?;
                    save_mask_png(&proj.mask, d.join("partial_mask.png"))?;
                    save_mask_png(&done.composed_mask, d.join("composed_mask.png"))?;
                    save_flow(&done.flow, d.join("flow.bin"))?;
                    save_rgb_png(&done.texture, d.join("texture.png"))?;
                }
                texture = Some(done.texture);
            }
        }
    }

    let report = if target.is_some() {
        Some(MetricsReport::from_stages(records.iter().filter_map(|r| r.metrics.clone()).collect())?)
    } else {
        None
    };
    if let Some(o) = output {
        write_json(&records, &o.join("stages.json"))?;
        if let Some(r) = &report {
            r.save(o.join("metrics.json"))?;
        }
        write_json(&timings, &o.join("timings.json"))?;
    }
    Ok(PipelineOutcome {
        records,
        mesh,
        texture,
        report,
    })
}

fn prediction_input<'a>(inputs: &'a PipelineInputs, mesh: &'a TriMesh) -> PredictionInput<'a> {
    PredictionInput {
        mesh,
        camera: &inputs.camera,
        image: inputs.image.as_ref(),
        gt_joints: inputs.joints.as_deref(),
        gt_silhouette: inputs.silhouette.as_ref(),
    }
}

/// Repeated anchor measurement and deformation. An iteration is kept only
/// while it does not lower the silhouette IoU (when a silhouette is known).
fn anchor_iterations(
    mesh: &TriMesh,
    anchors: &AnchorSet,
    predictor: &dyn HandlePredictor,
    inputs: &PipelineInputs,
    config: &PipelineConfig,
) -> Result<(TriMesh, Vec<AnchorMotion>)> {
    let camera = &inputs.camera;
    let silhouette = inputs.silhouette.as_ref();
    let score = |m: &TriMesh| -> Result<Option<f64>> {
        silhouette
            .map(|s| silhouette_iou(&rasterize(camera, m).mask, s))
            .transpose()
    };
    let mut current = mesh.clone();
    let mut best = score(&current)?;
    let mut motions = Vec::new();
    for _ in 0..config.anchor_iterations.max(1) {
        let motion = predictor.anchor_motion(&prediction_input(inputs, &current), anchors)?;
        if motion.participating() == 0 {
            break;
        }
        let next = apply_anchor_stage(&current, anchors, &motion, config.anchor_weight)?;
        motions.push(motion);
        let s = score(&next)?;
        if let (Some(new), Some(old)) = (s, best) {
            if new < old {
                break;
            }
        }
        current = next;
        best = s;
    }
    Ok((current, motions))
}

pub struct VertexStageOutput {
    pub mesh: TriMesh,
    pub coarse: crate::grid::DepthMap,
    pub refined: crate::grid::DepthMap,
    pub target: crate::grid::DepthMap,
    pub albedo: crate::shading::AlbedoMap,
    pub lighting: crate::shading::SHLighting,
}

/// Shading refinement of the rendered depth, then the z-only vertex update.
pub fn vertex_stage(
    mesh: &TriMesh,
    camera: &WeakPerspectiveCamera,
    image: &RgbImage,
    config: &PipelineConfig,
) -> Result<VertexStageOutput> {
    let raster = rasterize(camera, mesh);
    let coarse = raster.depth.clone();
    let luma = luminance(image);
    let mask = &raster.mask;
    let normals = depth_to_normals(&coarse, camera);
    let ones = Grid::new(coarse.width, coarse.height, 1.0);
    let lighting = estimate_lighting(&luma, &ones, &normals, mask, config.refine.ridge)?;
    let albedo = estimate_albedo(&luma, &normals, mask, &lighting, config.albedo_blur_radius, config.shading_floor)?;
    let refined = refine_depth(&coarse, &luma, &albedo, &lighting, mask, camera, &config.refine)?;
    let mut target = magnify_details(&coarse, &refined.depth, config.refine.beta)?;
    let band = config.vertex_rim_band as i64;
    if band > 0 {
        // one-sided gradients at the rim make refined depth there unreliable
        let (w, h) = coarse.size();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let near_edge = (-band..=band).any(|dy| {
                    (-band..=band).any(|dx| !mask.checked(x + dx, y + dy).copied().unwrap_or(false))
                });
                if near_edge && mask.data[y as usize * w + x as usize] {
                    target.set(x as usize, y as usize, coarse.data[y as usize * w + x as usize]);
                }
            }
        }
    }
    let visible = visible_vertices(mesh, camera, &raster);
    let moved = depth_to_vertex_displacement(mesh, camera, &target, &visible, config.vertex_weight)?;
    let mut out = moved.mesh;
    out.vertex_tags = mesh.vertex_tags.clone();
    Ok(VertexStageOutput {
        mesh: out,
        coarse,
        refined: refined.depth,
        target,
        albedo,
        lighting,
    })
}
