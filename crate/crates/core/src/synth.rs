//! Seeded synthetic scenes: a deformed template seen from one of the 54
//! turntable views, with its silhouette, depth, joints and a shaded,
//! textured image.

use std::fs;
use std::path::Path;

use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::WeakPerspectiveCamera;
use crate::error::{Error, Result};
use crate::grid::{save_depth, save_mask_png, save_rgb_png, BinaryMask, DepthMap, Grid, RgbImage};
use crate::handles::{annotations_from_pixels, joint_positions, save_annotations};
use crate::laplacian::{solve_deform, DeformProblem, HandleConstraint};
use crate::mesh::{vertex_normals, TriMesh, Vec2, Vec3};
use crate::obj::save_mesh;
use crate::raster::{normal_map_from_raster, rasterize};
use crate::shading::SHLighting;
use crate::template::BodyTemplate;
use crate::texture::{render_texture, UVTexture};

/// Camera direction on the turntable, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub azimuth: f64,
    pub elevation: f64,
}

impl View {
    pub const FRONT: View = View {
        azimuth: 0.0,
        elevation: 0.0,
    };

    /// Turntable rotation about the vertical (y) axis followed by a tilt
    /// about the x axis.
    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vec3::x_axis(), self.elevation.to_radians())
            * Rotation3::from_axis_angle(&Vec3::y_axis(), self.azimuth.to_radians())
    }
}

/// Azimuth 0..340 in steps of 20 for each elevation -10, 0, +10.
pub fn view_grid() -> Vec<View> {
    let mut views = Vec::with_capacity(54);
    for elevation in [-10.0, 0.0, 10.0] {
        for k in 0..18 {
            views.push(View {
                azimuth: 20.0 * k as f64,
                elevation,
            });
        }
    }
    views
}

pub fn rotate_mesh(mesh: &TriMesh, rotation: &Rotation3<f64>) -> TriMesh {
    mesh.with_positions(mesh.vertices.iter().map(|v| rotation * v).collect())
}

/// Magnitudes of the seeded ground-truth deformation (metres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformSpec {
    /// Largest joint displacement; elbows and ankles get the full amount.
    pub joint_offset: f64,
    /// Largest outward push of a shape point along its normal.
    pub shape_offset: f64,
    pub shape_points: usize,
}

impl DeformSpec {
    pub const ZERO: DeformSpec = DeformSpec {
        joint_offset: 0.0,
        shape_offset: 0.0,
        shape_points: 0,
    };

    fn is_zero(&self) -> bool {
        self.joint_offset == 0.0 && (self.shape_offset == 0.0 || self.shape_points == 0)
    }
}

impl Default for DeformSpec {
    fn default() -> Self {
        DeformSpec {
            joint_offset: 0.08,
            shape_offset: 0.03,
            shape_points: 24,
        }
    }
}

/// Relative motion of each joint (same order as the joint names).
const JOINT_MOBILITY: [f64; 10] = [0.3, 0.0, 0.25, 0.25, 1.0, 1.0, 0.5, 0.5, 1.0, 1.0];

fn unit_ball(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let p = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.norm_squared() <= 1.0 {
            return p;
        }
    }
}

/// Moves joint handle sets rigidly and pushes random surface points along
/// their normals, letting the Laplacian spread the motion smoothly.
pub fn deform_template(template: &BodyTemplate, spec: &DeformSpec, seed: u64) -> Result<TriMesh> {
    if spec.is_zero() {
        return Ok(template.mesh.clone());
    }
    let mesh = &template.mesh;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_def0);
    let mut constraints = Vec::new();
    for (j, mobility) in template.joints.joints.iter().zip(JOINT_MOBILITY) {
        let mut d = unit_ball(&mut rng) * (spec.joint_offset * mobility);
        // keep limbs roughly in the body plane
        d.z *= 0.3;
        for &v in &j.vertices {
            constraints.push(HandleConstraint::point(v, mesh.vertices[v] + d, 10.0));
        }
    }
    let normals = vertex_normals(mesh)?;
    let in_joint: Vec<bool> = {
        let mut f = vec![false; mesh.vertex_count()];
        for j in &template.joints.joints {
            for &v in &j.vertices {
                f[v] = true;
            }
        }
        f
    };
    let mut placed = 0;
    while placed < spec.shape_points {
        let v = rng.random_range(0..mesh.vertex_count());
        let push = rng.random_range(-0.3..1.0) * spec.shape_offset;
        if in_joint[v] {
            continue;
        }
        constraints.push(HandleConstraint::point(v, mesh.vertices[v] + normals[v] * push, 1.0));
        placed += 1;
    }
    let mut out = solve_deform(&DeformProblem::new(mesh, constraints, None))?;
    out.vertex_tags = mesh.vertex_tags.clone();
    Ok(out)
}

/// Lighting from the front and above with a little second-order variation.
pub fn seeded_lighting(seed: u64) -> SHLighting {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11e4_7000);
    let dir = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.6..0.1), 1.0);
    let mut l = SHLighting::frontal(rng.random_range(0.55..0.75), rng.random_range(0.25..0.45), &dir);
    for c in &mut l.coeffs[4..] {
        *c = rng.random_range(-0.04..0.04);
    }
    l
}

/// Smooth colour field over the UV square, values in roughly `[0.25, 0.9]`.
pub fn seeded_texture(size: usize, seed: u64) -> UVTexture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e47_0000);
    let waves: Vec<[f64; 4]> = (0..12)
        .map(|_| {
            [
                rng.random_range(1.0..8.0),
                rng.random_range(1.0..8.0),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.03..0.07),
            ]
        })
        .collect();
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.45..0.65));
    Grid::from_fn(size, size, |x, y| {
        let (u, v) = ((x as f64 + 0.5) / size as f64, (y as f64 + 0.5) / size as f64);
        std::array::from_fn(|c| {
            let s: f64 = waves[c * 4..c * 4 + 4]
                .iter()
                .map(|w| w[3] * (std::f64::consts::TAU * (w[0] * u + w[1] * v) + w[2]).cos())
                .sum();
            (base[c] + s).clamp(0.0, 1.0)
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub image_size: usize,
    /// Fraction of the image taken by the larger extent of the GT mesh.
    pub fill: f64,
    pub texture_size: usize,
    pub deform: DeformSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            image_size: 224,
            fill: 0.8,
            texture_size: 256,
            deform: DeformSpec::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub view: View,
    pub seed: u64,
    pub gt_mesh: TriMesh,
    /// The undeformed template under the same view.
    pub initial_mesh: TriMesh,
    pub camera: WeakPerspectiveCamera,
    pub silhouette: BinaryMask,
    pub depth: DepthMap,
    pub image: RgbImage,
    pub joints: Vec<Vec2>,
    pub lighting: SHLighting,
    pub texture: UVTexture,
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

pub fn make_synthetic_case(
    template: &BodyTemplate,
    view: View,
    config: &SynthConfig,
    seed: u64,
) -> Result<SyntheticCase> {
    let rot = view.rotation();
    let gt_mesh = rotate_mesh(&deform_template(template, &config.deform, seed)?, &rot);
    let initial_mesh = rotate_mesh(&template.mesh, &rot);
    let size = [config.image_size, config.image_size];
    let camera = WeakPerspectiveCamera::fit_to_mesh(&gt_mesh, size, config.fill)?;

    let raster = rasterize(&camera, &gt_mesh);
    let normals = normal_map_from_raster(&raster, &gt_mesh, &vertex_normals(&gt_mesh)?);
    let lighting = seeded_lighting(seed);
    let texture = seeded_texture(config.texture_size, seed);
    let albedo = render_texture(&gt_mesh, &raster, &texture)?;
    let (w, h) = raster.mask.size();
    let image = Grid::from_fn(w, h, |x, y| match normals.get(x, y) {
        Some(n) => {
            let s = lighting.shade(&n).max(0.0);
            albedo.get(x, y).map(|a| quantize(a * s))
        }
        None => [0.0; 3],
    });
    let joints = joint_positions(&gt_mesh, &template.joints, &camera);
    Ok(SyntheticCase {
        view,
        seed,
        gt_mesh,
        initial_mesh,
        camera,
        silhouette: raster.mask,
        depth: raster.depth,
        image,
        joints,
        lighting,
        texture,
    })
}

/// The harness: `count` cases with views drawn from the turntable grid.
pub fn harness_cases(template: &BodyTemplate, count: usize, seed: u64, config: &SynthConfig) -> Result<Vec<SyntheticCase>> {
    let views = view_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<(View, u64)> = (0..count)
        .map(|_| (views[rng.random_range(0..views.len())], rng.random::<u64>()))
        .collect();
    let cases = crate::par::map_slice(&picks, |&(view, s)| make_synthetic_case(template, view, config, s));
    cases.into_iter().collect()
}

/// File names written by [`SyntheticCase::save`].
pub mod files {
    pub const GT_MESH: &str = "gt_mesh.obj";
    pub const INITIAL_MESH: &str = "initial_mesh.obj";
    pub const CAMERA: &str = "camera.json";
    pub const SILHOUETTE: &str = "silhouette.png";
    pub const DEPTH: &str = "depth.bin";
    pub const IMAGE: &str = "image.png";
    pub const JOINTS: &str = "joints.json";
    pub const LIGHTING: &str = "lighting.json";
    pub const TEXTURE: &str = "texture_gt.png";
    pub const CASE: &str = "case.json";
    pub const CONFIG: &str = "config.txt";
}

#[derive(Serialize)]
struct CaseInfo {
    seed: u64,
    view: View,
}

pub fn save_camera(camera: &WeakPerspectiveCamera, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(camera).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_camera(path: impl AsRef<Path>) -> Result<WeakPerspectiveCamera> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cam: WeakPerspectiveCamera = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    cam.validate()?;
    Ok(cam)
}

impl SyntheticCase {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_mesh(&self.gt_mesh, dir.join(files::GT_MESH))?;
        save_mesh(&self.initial_mesh, dir.join(files::INITIAL_MESH))?;
        save_camera(&self.camera, dir.join(files::CAMERA))?;
        save_mask_png(&self.silhouette, dir.join(files::SILHOUETTE))?;
        save_depth(&self.depth, dir.join(files::DEPTH))?;
        save_rgb_png(&self.image, dir.join(files::IMAGE))?;
        save_annotations(&annotations_from_pixels(&self.joints), dir.join(files::JOINTS))?;
        self.lighting.save(dir.join(files::LIGHTING))?;
        save_rgb_png(&self.texture, dir.join(files::TEXTURE))?;
        let info = CaseInfo {
            seed: self.seed,
            view: self.view,
        };
        let path = dir.join(files::CASE);
        let text = serde_json::to_string_pretty(&info).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        let path = dir.join(files::CONFIG);
        fs::write(&path, case_config_text(self.seed)).map_err(|e| Error::io(&path, e))
    }
}

/// Pipeline config that runs every stage on a saved case; paths are relative
/// to the case directory.
pub fn case_config_text(seed: u64) -> String {
    format!(
        "# synthetic case, all stages with oracle predictors\n\
         mesh = {}\ncamera = {}\nimage = {}\njoints = {}\nsilhouette = {}\ngt_mesh = {}\n\
         seed = {seed}\nstages = joint, anchor, subdivide, vertex, texture\n",
        files::INITIAL_MESH,
        files::CAMERA,
        files::IMAGE,
        files::JOINTS,
        files::SILHOUETTE,
        files::GT_MESH,
    )
}

/// Keeps the faces seen from at least one of the six axis directions.
pub fn remove_inner_surface(mesh: &TriMesh) -> Result<TriMesh> {
    let visible = outer_faces(mesh)?;
    let keep: Vec<usize> = (0..mesh.face_count()).filter(|&f| visible[f]).collect();
    Ok(mesh.with_faces(&keep))
}

/// Face visibility from the six axis views. The raster resolution puts about
/// eight pixels along a mean edge.
pub fn outer_faces(mesh: &TriMesh) -> Result<Vec<bool>> {
    let edges = mesh.edges();
    if edges.is_empty() {
        return Ok(vec![false; mesh.face_count()]);
    }
    let mean_edge = edges
        .iter()
        .map(|((a, b), _)| (mesh.vertices[*a] - mesh.vertices[*b]).norm())
        .sum::<f64>()
        / edges.len() as f64;
    let scale = 8.0 / mean_edge.max(1e-12);
    let turns = [
        Rotation3::identity(),
        Rotation3::from_axis_angle(&Vec3::y_axis(), std::f64::consts::FRAC_PI_2),
        Rotation3::from_axis_angle(&Vec3::x_axis(), std::f64::consts::FRAC_PI_2),
    ];
    let mut visible = vec![false; mesh.face_count()];
    for rot in &turns {
        let turned = rotate_mesh(mesh, rot);
        let (lo, hi) = turned.bounding_box();
        let w = (((hi.x - lo.x) * scale).ceil() as usize + 4).min(4096);
        let h = (((hi.y - lo.y) * scale).ceil() as usize + 4).min(4096);
        let s = scale.min((w - 4) as f64 / (hi.x - lo.x).max(1e-12)).min((h - 4) as f64 / (hi.y - lo.y).max(1e-12));
        for sign in [1.0, -1.0] {
            let cam = WeakPerspectiveCamera::new(s, [2.0 - s * lo.x, 2.0 - s * lo.y], [w, h], sign)?;
            let r = rasterize(&cam, &turned);
            for (v, f) in visible.iter_mut().zip(&r.face_visible) {
                *v |= *f;
            }
        }
    }
    Ok(visible)
}
