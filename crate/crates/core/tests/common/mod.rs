#![allow(dead_code)]

use std::collections::BTreeSet;

use meshrecon::camera::WeakPerspectiveCamera;
use meshrecon::laplacian::{HandleConstraint, HandleTarget};
use meshrecon::mesh::{cube, icosphere, tetrahedron, TriMesh, Vec2, Vec3};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed `n x m` torus (genus 1).
pub fn torus(n: usize, m: usize, big: f64, small: f64) -> TriMesh {
    let mut vertices = Vec::with_capacity(n * m);
    for i in 0..n {
        let u = i as f64 / n as f64 * std::f64::consts::TAU;
        for j in 0..m {
            let v = j as f64 / m as f64 * std::f64::consts::TAU;
            let r = big + small * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), small * v.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % n) * m + (j % m);
    let mut faces = Vec::with_capacity(2 * n * m);
    for i in 0..n {
        for j in 0..m {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces).unwrap()
}

/// A jittered, vertex-relabelled closed mesh of one of several shapes.
pub fn random_closed_mesh(seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = match rng.random_range(0..5) {
        0 => tetrahedron(),
        1 => cube(rng.random_range(0.2..2.0)),
        2 => icosphere(rng.random_range(0.2..2.0), rng.random_range(0..3)),
        3 => torus(rng.random_range(3..12), rng.random_range(3..9), 1.0, 0.3),
        _ => {
            let a = icosphere(1.0, 1);
            a.merged(&cube(0.3).translated(&Vec3::new(3.0, 0.0, 0.0)))
        }
    };
    relabel_and_jitter(&base, &mut rng, 0.05)
}

/// Small connected closed meshes (at most 20 vertices).
pub fn small_mesh(seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = match rng.random_range(0..4) {
        0 => tetrahedron(),
        1 => cube(1.0),
        2 => icosphere(1.0, 0),
        _ => torus(rng.random_range(3..5), 3, 1.0, 0.4),
    };
    relabel_and_jitter(&base, &mut rng, 0.1)
}

fn relabel_and_jitter(mesh: &TriMesh, rng: &mut ChaCha8Rng, jitter: f64) -> TriMesh {
    let n = mesh.vertex_count();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut vertices = vec![Vec3::zeros(); n];
    for (old, &new) in perm.iter().enumerate() {
        let j = Vec3::new(
            rng.random_range(-jitter..jitter),
            rng.random_range(-jitter..jitter),
            rng.random_range(-jitter..jitter),
        );
        vertices[new] = mesh.vertices[old] + j;
    }
    let faces = mesh.faces.iter().map(|f| f.map(|v| perm[v])).collect();
    TriMesh::new(vertices, faces).unwrap()
}

pub fn max_vertex_distance(a: &TriMesh, b: &TriMesh) -> f64 {
    a.vertices
        .iter()
        .zip(&b.vertices)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

pub fn camera() -> WeakPerspectiveCamera {
    WeakPerspectiveCamera::new(40.0, [100.0, 90.0], [200, 200], 1.0).unwrap()
}

/// Independent dense least squares over the stacked Laplacian and
/// constraint rows, one axis at a time.
pub fn dense_solve(mesh: &TriMesh, constraints: &[HandleConstraint], cam: &WeakPerspectiveCamera) -> Vec<Vec3> {
    let n = mesh.vertex_count();
    let mut nb = vec![BTreeSet::new(); n];
    for f in &mesh.faces {
        for k in 0..3 {
            nb[f[k]].insert(f[(k + 1) % 3]);
            nb[f[(k + 1) % 3]].insert(f[k]);
        }
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        lap[(i, i)] = 1.0;
        for &j in &nb[i] {
            lap[(i, j)] -= 1.0 / nb[i].len() as f64;
        }
    }
    let mut out = mesh.vertices.clone();
    for axis in 0..3 {
        let x0 = DVector::from_iterator(n, mesh.vertices.iter().map(|v| v[axis]));
        let delta = &lap * &x0;
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for c in constraints {
            match c.target {
                HandleTarget::Point(p) => rows.push((c.vertex, c.weight, c.weight * p[axis])),
                HandleTarget::Pixel(px) if axis < 2 => rows.push((
                    c.vertex,
                    c.weight * cam.scale,
                    c.weight * (px[axis] - cam.translation[axis]),
                )),
                HandleTarget::Depth(z) if axis == 2 => rows.push((c.vertex, c.weight, c.weight * z)),
                _ => {}
            }
        }
        if rows.is_empty() {
            continue;
        }
        let mut a = DMatrix::<f64>::zeros(n + rows.len(), n);
        let mut b = DVector::<f64>::zeros(n + rows.len());
        a.view_mut((0, 0), (n, n)).copy_from(&lap);
        b.rows_mut(0, n).copy_from(&delta);
        for (k, &(v, coef, rhs)) in rows.iter().enumerate() {
            a[(n + k, v)] = coef;
            b[n + k] = rhs;
        }
        let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
        for i in 0..n {
            out[i][axis] = x[i];
        }
    }
    out
}

pub fn random_constraints(mesh: &TriMesh, seed: u64) -> Vec<HandleConstraint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mesh.vertex_count();
    let mut out = Vec::new();
    // at least one 3-d handle so every axis is pinned
    for _ in 0..rng.random_range(1..4) {
        let v = rng.random_range(0..n);
        let t = mesh.vertices[v] + Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        out.push(HandleConstraint::point(v, t, rng.random_range(0.1..10.0)));
    }
    for _ in 0..rng.random_range(0..4) {
        let v = rng.random_range(0..n);
        let px = Vec2::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0));
        out.push(HandleConstraint::pixel(v, px, rng.random_range(0.1..10.0)));
    }
    for _ in 0..rng.random_range(0..4) {
        let v = rng.random_range(0..n);
        out.push(HandleConstraint::depth(v, rng.random_range(-1.0..1.0), rng.random_range(0.1..10.0)));
    }
    out
}

