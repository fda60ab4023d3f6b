mod common;

use common::max_vertex_distance;
use meshrecon::anchors::{
    apply_anchor_stage, oracle_anchor_motion, select_anchors, silhouette_normal_distance, AnchorConfig, AnchorMotion,
    AnchorSet, AnchorStatus, ANCHOR_WEIGHT, DEFAULT_ANCHOR_COUNT, DEFAULT_NORMAL_WEIGHT,
};
use meshrecon::camera::WeakPerspectiveCamera;
use meshrecon::config::{PipelineConfig, Stage};
use meshrecon::grid::Grid;
use meshrecon::handles::{
    annotations_from_pixels, apply_joint_stage, joint_positions, oracle_joint_motion, JointHandles, JointHandleSet,
    JointMotion, JOINT_WEIGHT,
};
use meshrecon::mesh::{icosphere, TriMesh, Vec2, Vec3};
use meshrecon::metrics::{joint_error, silhouette_iou};
use meshrecon::pipeline::{run_with_inputs, PipelineInputs};
use meshrecon::raster::rasterize;
use meshrecon::synth::{make_synthetic_case, rotate_mesh, SynthConfig, View};
use meshrecon::template::{body_template, LABEL_FACE, LABEL_FINGERS, LABEL_TOES};

fn body_camera(mesh: &TriMesh) -> WeakPerspectiveCamera {
    WeakPerspectiveCamera::fit_to_mesh(mesh, [224, 224], 0.8).unwrap()
}

fn mean_joint_error(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64
}

#[test]
fn joint_position_is_projected_centroid() {
    let mesh = TriMesh::new(
        vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let cam = WeakPerspectiveCamera::new(1.0, [0.0, 0.0], [4, 4], 1.0).unwrap();
    let set = JointHandleSet {
        joints: vec![JointHandles {
            name: "a".into(),
            vertices: vec![0, 1],
        }],
    };
    assert_eq!(joint_positions(&mesh, &set, &cam), vec![Vec2::new(1.0, 0.0)]);
}

#[test]
fn oracle_motion_on_self_and_uniform_shift() {
    let tpl = body_template();
    let cam = body_camera(&tpl.mesh);
    let own = joint_positions(&tpl.mesh, &tpl.joints, &cam);
    let zero = oracle_joint_motion(&tpl.mesh, &tpl.joints, &cam, &annotations_from_pixels(&own)).unwrap();
    assert!(zero.vectors.iter().all(|v| *v == Vec2::zeros()));
    let shifted: Vec<Vec2> = own.iter().map(|p| p + Vec2::new(5.0, 0.0)).collect();
    let m = oracle_joint_motion(&tpl.mesh, &tpl.joints, &cam, &annotations_from_pixels(&shifted)).unwrap();
    for v in &m.vectors {
        assert!((v - Vec2::new(5.0, 0.0)).norm() < 1e-9);
    }
}

#[test]
fn zero_joint_motion_leaves_mesh() {
    let tpl = body_template();
    let cam = body_camera(&tpl.mesh);
    let out = apply_joint_stage(&tpl.mesh, &tpl.joints, &cam, &JointMotion::zero(), JOINT_WEIGHT).unwrap();
    assert!(max_vertex_distance(&out, &tpl.mesh) <= 1e-9);
}

#[test]
fn uniform_joint_motion_shifts_the_silhouette() {
    let tpl = body_template();
    let cam = body_camera(&tpl.mesh);
    let motion = JointMotion {
        vectors: vec![Vec2::new(6.0, -3.0); 10],
    };
    let out = apply_joint_stage(&tpl.mesh, &tpl.joints, &cam, &motion, JOINT_WEIGHT).unwrap();
    let moved = rasterize(&cam, &out).mask;
    let shifted = rasterize(&cam.shifted(6.0, -3.0), &tpl.mesh).mask;
    assert_eq!(silhouette_iou(&moved, &shifted).unwrap(), 1.0);
}

#[test]
fn single_joint_reaches_target_within_half_a_pixel() {
    let tpl = body_template();
    let cam = body_camera(&tpl.mesh);
    let before = joint_positions(&tpl.mesh, &tpl.joints, &cam);
    for j in [0, 4, 5, 8] {
        let mut motion = JointMotion::zero();
        motion.vectors[j] = Vec2::new(6.0, 4.0);
        let out = apply_joint_stage(&tpl.mesh, &tpl.joints, &cam, &motion, JOINT_WEIGHT).unwrap();
        let after = joint_positions(&out, &tpl.joints, &cam);
        let miss = (after[j] - (before[j] + motion.vectors[j])).norm();
        assert!(miss < 0.5, "joint {j} misses by {miss:.3} px");
    }
}

#[test]
fn joint_stage_reduces_error_on_random_deformations() {
    let tpl = body_template();
    let cfg = SynthConfig::default();
    for seed in 0..6 {
        let view = View {
            azimuth: 60.0 * seed as f64,
            elevation: 0.0,
        };
        let case = make_synthetic_case(&tpl, view, &cfg, seed).unwrap();
        let handles = &tpl.joints;
        let before = joint_positions(&case.initial_mesh, handles, &case.camera);
        let e0 = mean_joint_error(&before, &case.joints);
        let motion = oracle_joint_motion(&case.initial_mesh, handles, &case.camera, &annotations_from_pixels(&case.joints)).unwrap();
        let out = apply_joint_stage(&case.initial_mesh, handles, &case.camera, &motion, JOINT_WEIGHT).unwrap();
        let e1 = joint_error(&joint_positions(&out, handles, &case.camera), &case.joints).unwrap();
        if e0 > 1.0 {
            assert!(e1 < e0, "seed {seed}: {e0:.2} -> {e1:.2}");
        }
    }
}

fn anchors_on_template() -> (meshrecon::template::BodyTemplate, AnchorSet) {
    let tpl = body_template();
    let set = select_anchors(
        &tpl.mesh,
        DEFAULT_ANCHOR_COUNT,
        DEFAULT_NORMAL_WEIGHT,
        &[LABEL_FACE, LABEL_FINGERS, LABEL_TOES],
        0,
    )
    .unwrap();
    (tpl, set)
}

#[test]
fn template_anchors_are_distinct_eligible_and_spread() {
    let (tpl, set) = anchors_on_template();
    assert_eq!(set.vertices.len(), 200);
    let mut sorted = set.vertices.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), 200);
    for &v in &set.vertices {
        assert!(!matches!(tpl.mesh.tag(v), Some(LABEL_FACE | LABEL_FINGERS | LABEL_TOES)));
    }
    let worst = set
        .vertices
        .iter()
        .map(|&a| {
            set.vertices
                .iter()
                .filter(|&&b| b != a)
                .map(|&b| (tpl.mesh.vertices[a] - tpl.mesh.vertices[b]).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    assert!(worst < 0.15, "loneliest anchor is {worst:.3} m from its neighbour");
    let again = select_anchors(&tpl.mesh, 200, DEFAULT_NORMAL_WEIGHT, &[LABEL_FACE, LABEL_FINGERS, LABEL_TOES], 0).unwrap();
    assert_eq!(again, set);
}

#[test]
fn circle_boundary_distance() {
    let mask = Grid::from_fn(200, 200, |x, y| (x as f64 + 0.5 - 100.0).hypot(y as f64 + 0.5 - 100.0) <= 50.0);
    let d = silhouette_normal_distance(&mask, Vec2::new(130.0, 100.0), Vec2::new(1.0, 0.0), 40.0, 0.25)
        .unwrap()
        .unwrap();
    assert!((d - 20.0).abs() <= 0.5);
    let empty = Grid::new(200, 200, false);
    assert_eq!(
        silhouette_normal_distance(&empty, Vec2::new(10.0, 10.0), Vec2::new(1.0, 0.0), 40.0, 0.25).unwrap(),
        None
    );
}

fn sphere_setup(radius: f64) -> (TriMesh, WeakPerspectiveCamera, AnchorSet) {
    let sphere = icosphere(radius, 3);
    let cam = WeakPerspectiveCamera::new(60.0, [112.0, 112.0], [224, 224], 1.0).unwrap();
    let set = select_anchors(&sphere, 60, DEFAULT_NORMAL_WEIGHT, &[], 3).unwrap();
    (sphere, cam, set)
}

#[test]
fn anchors_move_sphere_towards_larger_silhouette() {
    let (sphere, cam, set) = sphere_setup(1.0);
    let target = rasterize(&cam, &icosphere(1.08, 3)).mask;
    let motion = oracle_anchor_motion(&sphere, &set, &cam, &target, &AnchorConfig::default()).unwrap();
    assert!(motion.participating() > 0);
    for (s, st) in motion.scalars.iter().zip(&motion.status) {
        if *st == AnchorStatus::Participating {
            assert!(*s > 0.0);
        }
    }
    let before = silhouette_iou(&rasterize(&cam, &sphere).mask, &target).unwrap();
    let out = apply_anchor_stage(&sphere, &set, &motion, ANCHOR_WEIGHT).unwrap();
    let after = silhouette_iou(&rasterize(&cam, &out).mask, &target).unwrap();
    assert!(after > before, "{before:.4} -> {after:.4}");
}

#[test]
fn uniform_normal_push_inflates_sphere_by_ten_percent() {
    let (sphere, _, set) = sphere_setup(1.0);
    let motion = AnchorMotion {
        scalars: vec![0.1; set.vertices.len()],
        status: vec![AnchorStatus::Participating; set.vertices.len()],
    };
    let out = apply_anchor_stage(&sphere, &set, &motion, ANCHOR_WEIGHT).unwrap();
    let centre = out.centroid();
    let mean = out.vertices.iter().map(|v| ((v - centre).norm() - 1.1).abs()).sum::<f64>() / out.vertex_count() as f64;
    assert!(mean / 1.1 < 0.01, "mean radial error {:.4}", mean / 1.1);
}

#[test]
fn offsets_beyond_ten_centimetres_are_excluded() {
    let (sphere, cam, set) = sphere_setup(1.0);
    let target = rasterize(&cam, &icosphere(1.15, 3)).mask;
    let motion = oracle_anchor_motion(&sphere, &set, &cam, &target, &AnchorConfig::default()).unwrap();
    assert_eq!(motion.participating(), 0);
    assert!(motion.status.iter().any(|s| *s == AnchorStatus::TooFar));
}

#[test]
fn shrunk_body_anchors_point_inward() {
    let (tpl, set) = anchors_on_template();
    let cam = body_camera(&tpl.mesh);
    let centre = tpl.mesh.centroid();
    let inflated = tpl.mesh.with_positions(tpl.mesh.vertices.iter().map(|v| centre + (v - centre) * 1.05).collect());
    let target = rasterize(&cam, &tpl.mesh).mask;
    let motion = oracle_anchor_motion(&inflated, &set, &cam, &target, &AnchorConfig::default()).unwrap();
    let part: Vec<f64> = motion
        .scalars
        .iter()
        .zip(&motion.status)
        .filter(|(_, s)| **s == AnchorStatus::Participating)
        .map(|(v, _)| *v)
        .collect();
    assert!(part.len() > 10);
    // scaling about the centroid is not a pure normal offset where the body
    // is not star-shaped (armpits, crotch), so only the bulk must point inward
    let inward = part.iter().filter(|s| **s < 0.0).count();
    assert!(inward * 3 >= part.len() * 2, "{inward} of {} inward", part.len());
    assert!(part.iter().sum::<f64>() < 0.0);
}

#[test]
fn anchor_stage_improves_iou_on_inflated_template() {
    let (tpl, set) = anchors_on_template();
    let mesh = rotate_mesh(&tpl.mesh, &View { azimuth: 30.0, elevation: 0.0 }.rotation());
    let cam = body_camera(&mesh);
    let centre = mesh.centroid();
    let inflated = mesh.with_positions(mesh.vertices.iter().map(|v| centre + (v - centre) * 1.04).collect());
    let target = rasterize(&cam, &mesh).mask;
    let motion = oracle_anchor_motion(&inflated, &set, &cam, &target, &AnchorConfig::default()).unwrap();
    let before = silhouette_iou(&rasterize(&cam, &inflated).mask, &target).unwrap();
    let out = apply_anchor_stage(&inflated, &set, &motion, ANCHOR_WEIGHT).unwrap();
    let after = silhouette_iou(&rasterize(&cam, &out).mask, &target).unwrap();
    assert!(after > before, "{before:.4} -> {after:.4}");
}

#[test]
fn joint_then_anchor_beats_anchor_alone() {
    let tpl = body_template();
    let cfg = SynthConfig::default();
    for seed in [3u64, 8, 13] {
        let view = View {
            azimuth: 40.0 * seed as f64,
            elevation: 0.0,
        };
        let case = make_synthetic_case(&tpl, view, &cfg, seed).unwrap();
        let inputs = PipelineInputs::from_case(&case);
        let final_iou = |stages: Vec<Stage>| {
            let config = PipelineConfig {
                stages,
                ..PipelineConfig::default()
            };
            let out = run_with_inputs(&inputs, &config, None).unwrap();
            out.records.last().unwrap().metrics.as_ref().unwrap().sil_iou
        };
        let both = final_iou(vec![Stage::Joint, Stage::Anchor]);
        let alone = final_iou(vec![Stage::Anchor]);
        assert!(both >= alone, "seed {seed}: joint+anchor {both:.4} < anchor {alone:.4}");
    }
}
