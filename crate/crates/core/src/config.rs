//! Pipeline configuration and its `key = value` text format.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Relative paths are resolved against the directory of the config file.
//! Unknown keys are an error so that typos do not silently fall back to
//! defaults.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::anchors::{AnchorConfig, ANCHOR_WEIGHT, DEFAULT_ANCHOR_COUNT, DEFAULT_NORMAL_WEIGHT};
use crate::error::{Error, Result};
use crate::handles::JOINT_WEIGHT;
use crate::shading::{RefineConfig, DEFAULT_SHADING_FLOOR};
use crate::template::{LABEL_FACE, LABEL_FINGERS, LABEL_TOES};
use crate::texture::{CompletionConfig, DEFAULT_TEXTURE_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Joint,
    Anchor,
    Subdivide,
    Vertex,
    Texture,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Joint, Stage::Anchor, Stage::Subdivide, Stage::Vertex, Stage::Texture];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Joint => "joint",
            Stage::Anchor => "anchor",
            Stage::Subdivide => "subdivide",
            Stage::Vertex => "vertex",
            Stage::Texture => "texture",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Where handle motions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictorSpec {
    /// Ground-truth joints and silhouette.
    Oracle,
    /// External program run as `sh -c "<command> <exchange dir>"`.
    Command(String),
}

impl PredictorSpec {
    fn parse(s: &str) -> Self {
        if s == "oracle" {
            PredictorSpec::Oracle
        } else {
            PredictorSpec::Command(s.to_string())
        }
    }

    fn text(&self) -> &str {
        match self {
            PredictorSpec::Oracle => "oracle",
            PredictorSpec::Command(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputPaths {
    pub mesh: Option<PathBuf>,
    pub camera: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub joints: Option<PathBuf>,
    pub silhouette: Option<PathBuf>,
    pub gt_mesh: Option<PathBuf>,
    pub handles: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub stages: Vec<Stage>,
    pub inputs: InputPaths,
    pub output: Option<PathBuf>,
    pub seed: u64,

    pub joint_weight: f64,
    pub joint_window: usize,
    pub joint_predictor: PredictorSpec,

    pub anchor_count: usize,
    pub anchor_weight: f64,
    pub anchor_normal_weight: f64,
    pub anchor_iterations: usize,
    pub anchor_window: usize,
    pub anchor_exclude: Vec<String>,
    pub anchor: AnchorConfig,
    pub anchor_predictor: PredictorSpec,

    pub vertex_weight: f64,
    pub albedo_blur_radius: usize,
    /// Pixels next to the silhouette edge whose refined depth is discarded.
    pub vertex_rim_band: usize,
    pub shading_floor: f64,
    pub refine: RefineConfig,

    pub texture_size: usize,
    pub texture_symmetry: bool,
    pub completion: CompletionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stages: Stage::ALL.to_vec(),
            inputs: InputPaths {
                mesh: None,
                camera: None,
                image: None,
                joints: None,
                silhouette: None,
                gt_mesh: None,
                handles: None,
            },
            output: None,
            seed: 0,
            joint_weight: JOINT_WEIGHT,
            joint_window: 64,
            joint_predictor: PredictorSpec::Oracle,
            anchor_count: DEFAULT_ANCHOR_COUNT,
            anchor_weight: ANCHOR_WEIGHT,
            anchor_normal_weight: DEFAULT_NORMAL_WEIGHT,
            anchor_iterations: 4,
            anchor_window: 32,
            anchor_exclude: [LABEL_FACE, LABEL_FINGERS, LABEL_TOES].map(String::from).to_vec(),
            anchor: AnchorConfig::default(),
            anchor_predictor: PredictorSpec::Oracle,
            vertex_weight: 1.0,
            albedo_blur_radius: 4,
            vertex_rim_band: 2,
            shading_floor: DEFAULT_SHADING_FLOOR,
            refine: RefineConfig::default(),
            texture_size: DEFAULT_TEXTURE_SIZE,
            texture_symmetry: true,
            completion: CompletionConfig::default(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value `{raw}` for `{key}`")))
}

fn boolean(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{raw}` for `{key}` (expected true/false)"))),
    }
}

fn list(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl PipelineConfig {
    /// Applies one setting. Relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, raw: &str, base: &Path) -> Result<()> {
        let raw = raw.trim();
        let path = || Some(base.join(raw));
        match key {
            "mesh" => self.inputs.mesh = path(),
            "camera" => self.inputs.camera = path(),
            "image" => self.inputs.image = path(),
            "joints" => self.inputs.joints = path(),
            "silhouette" => self.inputs.silhouette = path(),
            "gt_mesh" => self.inputs.gt_mesh = path(),
            "handles" => self.inputs.handles = path(),
            "output" => self.output = Some(PathBuf::from(raw)),
            "seed" => self.seed = value(key, raw)?,
            "stages" => {
                let mut stages = list(raw)
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<Vec<Stage>>>()?;
                stages.sort_unstable();
                stages.dedup();
                self.stages = stages;
            }
            "joint.weight" => self.joint_weight = value(key, raw)?,
            "joint.window" => self.joint_window = value(key, raw)?,
            "joint.predictor" => self.joint_predictor = PredictorSpec::parse(raw),
            "anchor.count" => self.anchor_count = value(key, raw)?,
            "anchor.weight" => self.anchor_weight = value(key, raw)?,
            "anchor.normal_weight" => self.anchor_normal_weight = value(key, raw)?,
            "anchor.iterations" => self.anchor_iterations = value(key, raw)?,
            "anchor.window" => self.anchor_window = value(key, raw)?,
            "anchor.exclude" => self.anchor_exclude = list(raw),
            "anchor.contour_band" => self.anchor.contour_band = value(key, raw)?,
            "anchor.max_search" => self.anchor.max_search = value(key, raw)?,
            "anchor.step" => self.anchor.step = value(key, raw)?,
            "anchor.max_offset" => self.anchor.max_offset = value(key, raw)?,
            "anchor.min_normal_xy" => self.anchor.min_normal_xy = value(key, raw)?,
            "anchor.predictor" => self.anchor_predictor = PredictorSpec::parse(raw),
            "vertex.weight" => self.vertex_weight = value(key, raw)?,
            "vertex.albedo_blur" => self.albedo_blur_radius = value(key, raw)?,
            "vertex.rim_band" => self.vertex_rim_band = value(key, raw)?,
            "vertex.shading_floor" => self.shading_floor = value(key, raw)?,
            "refine.lambda_photo" => self.refine.lambda_photo = value(key, raw)?,
            "refine.lambda_data" => self.refine.lambda_data = value(key, raw)?,
            "refine.lambda_smooth" => self.refine.lambda_smooth = value(key, raw)?,
            "refine.beta" => self.refine.beta = value(key, raw)?,
            "refine.ridge" => self.refine.ridge = value(key, raw)?,
            "refine.max_iterations" => self.refine.max_iterations = value(key, raw)?,
            "refine.tolerance" => self.refine.tolerance = value(key, raw)?,
            "texture.size" => self.texture_size = value(key, raw)?,
            "texture.symmetry" => {
                self.texture_symmetry = boolean(key, raw)?;
                self.completion.flow.symmetry_preference = self.texture_symmetry;
            }
            "texture.gamma" => self.completion.flow.gamma = value(key, raw)?,
            "texture.smoothing" => self.completion.smoothing_passes = value(key, raw)?,
            "texture.smoothing_sigma" => self.completion.smoothing_sigma = value(key, raw)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), raw, base)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip_prefix(&e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    pub fn enabled(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Parameter sanity; file existence is checked when inputs are loaded.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, w) in [
            ("joint.weight", self.joint_weight),
            ("anchor.weight", self.anchor_weight),
            ("vertex.weight", self.vertex_weight),
        ] {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("`{name}` must be positive, got {w}"));
            }
        }
        if self.joint_window == 0 || self.joint_window % 2 != 0 || self.anchor_window == 0 || self.anchor_window % 2 != 0 {
            return bad("crop windows must be even and positive".into());
        }
        if self.anchor_count == 0 {
            return bad("`anchor.count` must be positive".into());
        }
        if self.texture_size < 2 {
            return bad("`texture.size` must be at least 2".into());
        }
        if !(self.completion.flow.gamma >= 1.0) {
            return bad(format!("`texture.gamma` must be >= 1, got {}", self.completion.flow.gamma));
        }
        if !(self.anchor.step > 0.0) || !(self.anchor.max_search > 0.0) || !(self.anchor.contour_band > 0.0) {
            return bad("anchor search distances must be positive".into());
        }
        self.refine
            .validate()
            .map_err(|e| Error::Config(strip_prefix(&e)))
    }

    /// Config text that parses back to `self` (paths written as given).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let p = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string());
        for (k, v) in [
            ("mesh", p(&self.inputs.mesh)),
            ("camera", p(&self.inputs.camera)),
            ("image", p(&self.inputs.image)),
            ("joints", p(&self.inputs.joints)),
            ("silhouette", p(&self.inputs.silhouette)),
            ("gt_mesh", p(&self.inputs.gt_mesh)),
            ("handles", p(&self.inputs.handles)),
            ("output", p(&self.output)),
        ] {
            if let Some(v) = v {
                put(k, v);
            }
        }
        put("seed", self.seed.to_string());
        put("stages", self.stages.iter().map(|s| s.name()).collect::<Vec<_>>().join(","));
        put("joint.weight", self.joint_weight.to_string());
        put("joint.window", self.joint_window.to_string());
        put("joint.predictor", self.joint_predictor.text().to_string());
        put("anchor.count", self.anchor_count.to_string());
        put("anchor.weight", self.anchor_weight.to_string());
        put("anchor.normal_weight", self.anchor_normal_weight.to_string());
        put("anchor.iterations", self.anchor_iterations.to_string());
        put("anchor.window", self.anchor_window.to_string());
        put("anchor.exclude", self.anchor_exclude.join(","));
        put("anchor.contour_band", self.anchor.contour_band.to_string());
        put("anchor.max_search", self.anchor.max_search.to_string());
        put("anchor.step", self.anchor.step.to_string());
        put("anchor.max_offset", self.anchor.max_offset.to_string());
        put("anchor.min_normal_xy", self.anchor.min_normal_xy.to_string());
        put("anchor.predictor", self.anchor_predictor.text().to_string());
        put("vertex.weight", self.vertex_weight.to_string());
        put("vertex.albedo_blur", self.albedo_blur_radius.to_string());
        put("vertex.rim_band", self.vertex_rim_band.to_string());
        put("vertex.shading_floor", self.shading_floor.to_string());
        put("refine.lambda_photo", self.refine.lambda_photo.to_string());
        put("refine.lambda_data", self.refine.lambda_data.to_string());
        put("refine.lambda_smooth", self.refine.lambda_smooth.to_string());
        put("refine.beta", self.refine.beta.to_string());
        put("refine.ridge", self.refine.ridge.to_string());
        put("refine.max_iterations", self.refine.max_iterations.to_string());
        put("refine.tolerance", self.refine.tolerance.to_string());
        put("texture.size", self.texture_size.to_string());
        put("texture.symmetry", self.texture_symmetry.to_string());
        put("texture.gamma", self.completion.flow.gamma.to_string());
        put("texture.smoothing", self.completion.smoothing_passes.to_string());
        put("texture.smoothing_sigma", self.completion.smoothing_sigma.to_string());
        s
    }
}

fn strip_prefix(e: &Error) -> String {
    let s = e.to_string();
    s.strip_prefix("config error: ").map(String::from).unwrap_or(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.inputs.mesh = Some(PathBuf::from("/data/m.obj"));
        cfg.stages = vec![Stage::Joint, Stage::Vertex];
        cfg.refine.beta = 4.5;
        cfg.joint_predictor = PredictorSpec::Command("python3 predict.py".into());
        let back = PipelineConfig::parse(&cfg.to_text(), Path::new("/")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_paths_and_errors() {
        let cfg = PipelineConfig::parse("# c\nmesh = a.obj  # trailing\n\nseed=7\n", Path::new("/base")).unwrap();
        assert_eq!(cfg.inputs.mesh, Some(PathBuf::from("/base/a.obj")));
        assert_eq!(cfg.seed, 7);
        let e = PipelineConfig::parse("sed = 1", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("line 1") && e.to_string().contains("sed"));
        assert!(PipelineConfig::parse("seed = x", Path::new(".")).is_err());
        assert!(PipelineConfig::parse("stages = joint,bogus", Path::new(".")).is_err());
        assert!(PipelineConfig::parse("joint.window = 63", Path::new(".")).is_err());
        assert!(PipelineConfig::parse("no equals sign", Path::new(".")).is_err());
    }

    #[test]
    fn stages_are_kept_in_pipeline_order() {
        let cfg = PipelineConfig::parse("stages = vertex, joint, vertex", Path::new(".")).unwrap();
        assert_eq!(cfg.stages, vec![Stage::Joint, Stage::Vertex]);
    }
}
