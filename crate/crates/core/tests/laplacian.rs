mod common;

use common::{camera, dense_solve, max_vertex_distance, random_closed_mesh, random_constraints, small_mesh};
use meshrecon::error::Error;
use meshrecon::laplacian::{
    differential_coords, solve_deform, solve_deform_with, DeformOptions, DeformProblem, HandleConstraint, HandleTarget,
};
use meshrecon::mesh::{Vec2, Vec3};
use meshrecon::sparse::SolverKind;
use proptest::prelude::*;

#[test]
fn matches_dense_brute_force_on_small_meshes() {
    let cam = camera();
    let mut worst = 0.0f64;
    for seed in 0..60 {
        let mesh = small_mesh(seed);
        assert!(mesh.vertex_count() <= 20);
        let cons = random_constraints(&mesh, 1000 + seed);
        let got = solve_deform(&DeformProblem::new(&mesh, cons.clone(), Some(cam))).unwrap();
        let want = dense_solve(&mesh, &cons, &cam);
        for (p, q) in got.vertices.iter().zip(&want) {
            worst = worst.max((p - q).amax());
        }
    }
    assert!(worst <= 1e-8, "worst deviation {worst:e}");
}

#[test]
fn depth_only_handles_match_dense_and_keep_xy() {
    let cam = camera();
    for seed in 0..20 {
        let mesh = small_mesh(seed);
        let cons = vec![HandleConstraint::depth(0, 0.7, 1.0), HandleConstraint::depth(3, -0.2, 2.0)];
        let got = solve_deform(&DeformProblem::new(&mesh, cons.clone(), Some(cam))).unwrap();
        let want = dense_solve(&mesh, &cons, &cam);
        for (i, (p, q)) in got.vertices.iter().zip(&want).enumerate() {
            assert!((p - q).amax() <= 1e-8);
            assert_eq!((p.x, p.y), (mesh.vertices[i].x, mesh.vertices[i].y));
        }
    }
}

#[test]
fn zero_displacement_is_a_fixed_point() {
    let cam = camera();
    for seed in 0..20 {
        let mesh = random_closed_mesh(seed);
        let n = mesh.vertex_count();
        let cons = vec![
            HandleConstraint::point(0, mesh.vertices[0], 10.0),
            HandleConstraint::pixel(n / 2, cam.project(&mesh.vertices[n / 2]), 1.0),
            HandleConstraint::depth(n - 1, mesh.vertices[n - 1].z, 1.0),
        ];
        let out = solve_deform(&DeformProblem::new(&mesh, cons, Some(cam))).unwrap();
        assert!(max_vertex_distance(&out, &mesh) <= 1e-9, "seed {seed}");
    }
}

#[test]
fn differential_coordinates_ignore_translation() {
    let m = random_closed_mesh(3);
    let a = differential_coords(&m).unwrap();
    let b = differential_coords(&m.translated(&Vec3::new(4.0, -2.0, 9.0))).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).norm() < 1e-12);
    }
}

#[test]
fn no_weighted_handle_is_rank_deficient() {
    let m = small_mesh(1);
    let p = DeformProblem::new(&m, vec![HandleConstraint::point(0, Vec3::zeros(), 0.0)], None);
    assert!(matches!(solve_deform(&p), Err(Error::RankDeficient(_))));
    let p = DeformProblem::new(&m, vec![HandleConstraint::pixel(0, Vec2::zeros(), 1.0)], None);
    assert!(matches!(solve_deform(&p), Err(Error::Parameter(_))));
}

#[test]
fn conjugate_gradient_agrees_with_cholesky() {
    let mesh = random_closed_mesh(11);
    let cons = random_constraints(&mesh, 5);
    let p = DeformProblem::new(&mesh, cons, Some(camera()));
    let a = solve_deform(&p).unwrap();
    let opts = DeformOptions {
        solver: SolverKind::ConjugateGradient { max_iterations: 20_000 },
        tolerance: 1e-12,
    };
    let b = solve_deform_with(&p, &opts).unwrap();
    assert!(max_vertex_distance(&a, &b) < 1e-7);
}

#[test]
fn heavy_point_handle_reaches_its_target() {
    let mesh = random_closed_mesh(21);
    let target = mesh.vertices[2] + Vec3::new(0.3, -0.1, 0.2);
    let out = solve_deform(&DeformProblem::new(&mesh, vec![HandleConstraint::point(2, target, 1e4)], None)).unwrap();
    // a single handle translates its component rigidly
    assert!((out.vertices[2] - target).norm() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn translation_equivariance(seed in 0u64..500, t in prop::array::uniform3(-3.0f64..3.0)) {
        let cam = camera();
        let mesh = small_mesh(seed);
        let cons = random_constraints(&mesh, seed + 77);
        let t = Vec3::from(t);
        let moved: Vec<HandleConstraint> = cons
            .iter()
            .map(|c| {
                let target = match c.target {
                    HandleTarget::Point(p) => HandleTarget::Point(p + t),
                    HandleTarget::Pixel(px) => HandleTarget::Pixel(px + cam.project_direction(&t)),
                    HandleTarget::Depth(z) => HandleTarget::Depth(z + t.z),
                };
                HandleConstraint { target, ..*c }
            })
            .collect();
        let shifted = mesh.translated(&t);
        let a = solve_deform(&DeformProblem::new(&mesh, cons, Some(cam))).unwrap();
        let b = solve_deform(&DeformProblem::new(&shifted, moved, Some(cam))).unwrap();
        prop_assert!(max_vertex_distance(&a.translated(&t), &b) <= 1e-9);
    }

    #[test]
    fn solution_minimises_the_energy(seed in 0u64..500, k in 0usize..20, eps in -1e-3f64..1e-3) {
        let cam = camera();
        let mesh = small_mesh(seed);
        let p = DeformProblem::new(&mesh, random_constraints(&mesh, seed), Some(cam));
        let out = solve_deform(&p).unwrap();
        let e0 = p.objective(&out.vertices).unwrap();
        let mut perturbed = out.vertices.clone();
        let v = k % mesh.vertex_count();
        perturbed[v] += Vec3::new(eps, -eps, eps);
        prop_assert!(p.objective(&perturbed).unwrap() >= e0 - 1e-12);
    }
}
