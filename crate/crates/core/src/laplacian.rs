//! Laplacian mesh editing with soft handle constraints.
//!
//! The solved energy is
//!
//! ```text
//! E(V') = |L V' - delta|^2 + sum_i w_i^2 |C_i(v'_i) - target_i|^2
//! ```
//!
//! with `L` the uniform graph Laplacian (`(L V)_i = v_i - mean(N(i))`),
//! `delta = L V` of the input mesh, and `C_i` the identity (3-d targets),
//! the camera projection (2-d pixel targets) or the z coordinate (depth
//! targets). Coordinates decouple, so each axis is an independent SPD
//! system `(L^T L + D) x = L^T delta + b`. A connected component that has no
//! constraint on some axis keeps its input coordinates on that axis (its
//! minimiser is only defined up to a constant shift).

use std::io::Write;

use crate::camera::WeakPerspectiveCamera;
use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec2, Vec3};
use crate::sparse::{SolverKind, SymmetricSystem};

/// Differential coordinates `delta_i = v_i - mean(neighbours of v_i)`.
pub fn differential_coords(mesh: &TriMesh) -> Result<Vec<Vec3>> {
    let adj = mesh.neighbors();
    differential_coords_with(mesh, &adj)
}

fn differential_coords_with(mesh: &TriMesh, adj: &[Vec<usize>]) -> Result<Vec<Vec3>> {
    adj.iter()
        .enumerate()
        .map(|(i, nb)| {
            if nb.is_empty() {
                return Err(Error::Connectivity { vertex: i });
            }
            let mean: Vec3 = nb.iter().map(|&j| mesh.vertices[j]).sum::<Vec3>() / nb.len() as f64;
            Ok(mesh.vertices[i] - mean)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HandleTarget {
    /// Absolute 3-d position in meters.
    Point(Vec3),
    /// Image-plane position in pixels; depth left free.
    Pixel(Vec2),
    /// Camera-space depth (world z) in meters; x and y left free.
    Depth(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandleConstraint {
    pub vertex: usize,
    pub target: HandleTarget,
    pub weight: f64,
}

impl HandleConstraint {
    pub fn point(vertex: usize, target: Vec3, weight: f64) -> Self {
        HandleConstraint {
            vertex,
            target: HandleTarget::Point(target),
            weight,
        }
    }

    pub fn pixel(vertex: usize, target: Vec2, weight: f64) -> Self {
        HandleConstraint {
            vertex,
            target: HandleTarget::Pixel(target),
            weight,
        }
    }

    pub fn depth(vertex: usize, z: f64, weight: f64) -> Self {
        HandleConstraint {
            vertex,
            target: HandleTarget::Depth(z),
            weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformOptions {
    pub solver: SolverKind,
    /// Maximum relative residual of each normal-equation solve.
    pub tolerance: f64,
}

impl Default for DeformOptions {
    fn default() -> Self {
        DeformOptions {
            solver: SolverKind::Cholesky,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeformProblem<'a> {
    pub mesh: &'a TriMesh,
    pub constraints: Vec<HandleConstraint>,
    pub camera: Option<WeakPerspectiveCamera>,
}

/// Per-axis diagonal penalty and right-hand side contributions.
struct AxisTerms {
    diag: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'a> DeformProblem<'a> {
    pub fn new(mesh: &'a TriMesh, constraints: Vec<HandleConstraint>, camera: Option<WeakPerspectiveCamera>) -> Self {
        DeformProblem {
            mesh,
            constraints,
            camera,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mesh.vertex_count();
        for c in &self.constraints {
            if c.vertex >= n {
                return Err(Error::Parameter(format!("handle vertex {} out of range", c.vertex)));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::Parameter(format!("handle weight {} is invalid", c.weight)));
            }
            if matches!(c.target, HandleTarget::Pixel(_)) && self.camera.is_none() {
                return Err(Error::Parameter("2-d handle targets require a camera".into()));
            }
        }
        if !self.constraints.iter().any(|c| c.weight > 0.0) {
            return Err(Error::RankDeficient(
                "no constraint with positive weight; solution is defined only up to translation".into(),
            ));
        }
        Ok(())
    }

    fn axis_terms(&self) -> [AxisTerms; 3] {
        let n = self.mesh.vertex_count();
        let mut terms = [0, 1, 2].map(|_| AxisTerms {
            diag: vec![0.0; n],
            rhs: vec![0.0; n],
        });
        for c in &self.constraints {
            let w2 = c.weight * c.weight;
            if w2 == 0.0 {
                continue;
            }
            let i = c.vertex;
            match c.target {
                HandleTarget::Point(p) => {
                    for a in 0..3 {
                        terms[a].diag[i] += w2;
                        terms[a].rhs[i] += w2 * p[a];
                    }
                }
                HandleTarget::Pixel(px) => {
                    let cam = self.camera.expect("validated");
                    let s = cam.scale;
                    for a in 0..2 {
                        terms[a].diag[i] += w2 * s * s;
                        terms[a].rhs[i] += w2 * s * (px[a] - cam.translation[a]);
                    }
                }
                HandleTarget::Depth(z) => {
                    terms[2].diag[i] += w2;
                    terms[2].rhs[i] += w2 * z;
                }
            }
        }
        terms
    }

    /// Value of the deformation energy at the given positions.
    pub fn objective(&self, positions: &[Vec3]) -> Result<f64> {
        let adj = self.mesh.neighbors();
        let delta = differential_coords_with(self.mesh, &adj)?;
        let mut e = 0.0;
        for (i, nb) in adj.iter().enumerate() {
            let mean: Vec3 = nb.iter().map(|&j| positions[j]).sum::<Vec3>() / nb.len() as f64;
            e += (positions[i] - mean - delta[i]).norm_squared();
        }
        for c in &self.constraints {
            let w2 = c.weight * c.weight;
            let v = positions[c.vertex];
            e += w2 * match c.target {
                HandleTarget::Point(p) => (v - p).norm_squared(),
                HandleTarget::Pixel(px) => {
                    let cam = self.camera.expect("pixel targets need a camera");
                    (cam.project(&v) - px).norm_squared()
                }
                HandleTarget::Depth(z) => (v.z - z) * (v.z - z),
            };
        }
        Ok(e)
    }
}

/// Rows of the uniform Laplacian as `(column, value)` lists.
fn laplacian_rows(adj: &[Vec<usize>]) -> Vec<Vec<(usize, f64)>> {
    adj.iter()
        .enumerate()
        .map(|(i, nb)| {
            let inv = 1.0 / nb.len() as f64;
            let mut row = Vec::with_capacity(nb.len() + 1);
            row.push((i, 1.0));
            row.extend(nb.iter().map(|&j| (j, -inv)));
            row
        })
        .collect()
}

fn components(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        stack.push(s);
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if comp[u] == usize::MAX {
                    comp[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Assembled normal equations for one axis over the active vertices.
pub struct AxisSystem {
    /// Mesh vertex index for each unknown.
    pub vertices: Vec<usize>,
    pub matrix: SymmetricSystem,
    pub rhs: Vec<f64>,
}

struct Assembly {
    delta: Vec<Vec3>,
    rows: Vec<Vec<(usize, f64)>>,
    comp: Vec<usize>,
    terms: [AxisTerms; 3],
}

fn assemble(problem: &DeformProblem<'_>) -> Result<Assembly> {
    problem.validate()?;
    let adj = problem.mesh.neighbors();
    let delta = differential_coords_with(problem.mesh, &adj)?;
    Ok(Assembly {
        delta,
        rows: laplacian_rows(&adj),
        comp: components(&adj),
        terms: problem.axis_terms(),
    })
}

fn axis_system(asm: &Assembly, axis: usize) -> Option<AxisSystem> {
    let n = asm.rows.len();
    let terms = &asm.terms[axis];
    let n_comp = asm.comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut active_comp = vec![false; n_comp];
    for i in 0..n {
        if terms.diag[i] > 0.0 {
            active_comp[asm.comp[i]] = true;
        }
    }
    let vertices: Vec<usize> = (0..n).filter(|&i| active_comp[asm.comp[i]]).collect();
    if vertices.is_empty() {
        return None;
    }
    let mut local = vec![usize::MAX; n];
    for (k, &v) in vertices.iter().enumerate() {
        local[v] = k;
    }
    let m = vertices.len();
    let mut triplets = Vec::with_capacity(m * 50);
    let mut rhs = vec![0.0; m];
    for &i in &vertices {
        let row = &asm.rows[i];
        let d = asm.delta[i][axis];
        for &(j, lj) in row {
            rhs[local[j]] += lj * d;
            for &(k, lk) in row {
                triplets.push((local[j], local[k], lj * lk));
            }
        }
        if terms.diag[i] > 0.0 {
            triplets.push((local[i], local[i], terms.diag[i]));
            rhs[local[i]] += terms.rhs[i];
        }
    }
    Some(AxisSystem {
        vertices,
        matrix: SymmetricSystem::from_triplets(m, triplets),
        rhs,
    })
}

/// Minimises the deformation energy and returns the deformed mesh.
pub fn solve_deform(problem: &DeformProblem<'_>) -> Result<TriMesh> {
    solve_deform_with(problem, &DeformOptions::default())
}

pub fn solve_deform_with(problem: &DeformProblem<'_>, options: &DeformOptions) -> Result<TriMesh> {
    let asm = assemble(problem)?;
    let mut positions = problem.mesh.vertices.clone();

    // axes with identical penalty patterns share one factorisation
    let mut solved = [false; 3];
    for axis in 0..3 {
        if solved[axis] {
            continue;
        }
        let group: Vec<usize> = (axis..3)
            .filter(|&b| !solved[b] && asm.terms[b].diag == asm.terms[axis].diag)
            .collect();
        let Some(base) = axis_system(&asm, axis) else {
            for &b in &group {
                solved[b] = true;
            }
            continue;
        };
        let mut rhs = vec![base.rhs.clone()];
        for &b in &group[1..] {
            rhs.push(axis_system(&asm, b).expect("same pattern").rhs);
        }
        let sol = base.matrix.solve(&rhs, options.solver, options.tolerance)?;
        for (col, &b) in group.iter().enumerate() {
            for (k, &v) in base.vertices.iter().enumerate() {
                positions[v][b] = sol[col][k];
            }
            solved[b] = true;
        }
    }
    Ok(problem.mesh.with_positions(positions))
}

/// Writes the normal equations of every constrained axis in the triplet
/// format documented in [`crate::sparse`].
pub fn dump_system(problem: &DeformProblem<'_>, mut out: impl Write) -> Result<()> {
    let asm = assemble(problem)?;
    let io = |e| Error::io("<dump>", e);
    for axis in 0..3 {
        writeln!(out, "# axis {axis}").map_err(io)?;
        if let Some(sys) = axis_system(&asm, axis) {
            writeln!(
                out,
                "# vertices {}",
                sys.vertices.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
            )
            .map_err(io)?;
            sys.matrix.write_triplets(&[sys.rhs.clone()], &mut out).map_err(io)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{grid_sheet, icosphere, tetrahedron};

    fn path3() -> TriMesh {
        // a thin triangle strip acting as a 3-vertex path is impossible with
        // triangles, so use one triangle; neighbours = the other two vertices
        TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn tetrahedron_delta_is_four_thirds_position() {
        let m = tetrahedron();
        for (d, v) in differential_coords(&m).unwrap().iter().zip(&m.vertices) {
            assert!((d - v * (4.0 / 3.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn collinear_middle_vertex_has_zero_delta() {
        let d = differential_coords(&path3()).unwrap();
        assert_eq!(d[1], Vec3::zeros());
    }

    #[test]
    fn delta_is_translation_invariant() {
        let m = icosphere(1.0, 1);
        let t = Vec3::new(0.3, -2.0, 5.0);
        let a = differential_coords(&m).unwrap();
        let b = differential_coords(&m.translated(&t)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn isolated_vertex_is_a_connectivity_error() {
        let mut m = tetrahedron();
        m.vertices.push(Vec3::zeros());
        assert!(matches!(differential_coords(&m), Err(Error::Connectivity { vertex: 4 })));
    }

    #[test]
    fn zero_weights_are_rank_deficient() {
        let m = tetrahedron();
        let p = DeformProblem::new(&m, vec![HandleConstraint::point(0, Vec3::zeros(), 0.0)], None);
        assert!(matches!(solve_deform(&p), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn pixel_targets_need_camera() {
        let m = tetrahedron();
        let p = DeformProblem::new(&m, vec![HandleConstraint::pixel(0, Vec2::zeros(), 1.0)], None);
        assert!(matches!(solve_deform(&p), Err(Error::Parameter(_))));
    }

    #[test]
    fn fixed_point_with_current_targets() {
        let m = icosphere(1.0, 2);
        let cons = (0..m.vertex_count())
            .step_by(7)
            .map(|i| HandleConstraint::point(i, m.vertices[i], 1.0))
            .collect();
        let out = solve_deform(&DeformProblem::new(&m, cons, None)).unwrap();
        for (a, b) in out.vertices.iter().zip(&m.vertices) {
            assert!((a - b).amax() <= 1e-9);
        }
    }

    #[test]
    fn depth_targets_leave_xy_untouched() {
        let m = grid_sheet(6, 1.0, 0.0);
        let cons = vec![HandleConstraint::depth(14, 0.2, 1.0)];
        let out = solve_deform(&DeformProblem::new(&m, cons, None)).unwrap();
        for (a, b) in out.vertices.iter().zip(&m.vertices) {
            assert_eq!((a.x, a.y), (b.x, b.y));
        }
        assert!(out.vertices[14].z > 0.1);
    }

    #[test]
    fn cg_backend_matches_cholesky() {
        let m = icosphere(1.0, 1);
        let cons = vec![
            HandleConstraint::point(0, m.vertices[0] + Vec3::new(0.1, 0.2, 0.0), 10.0),
            HandleConstraint::point(5, m.vertices[5], 1.0),
        ];
        let p = DeformProblem::new(&m, cons, None);
        let a = solve_deform(&p).unwrap();
        let b = solve_deform_with(
            &p,
            &DeformOptions {
                solver: SolverKind::ConjugateGradient { max_iterations: 10_000 },
                tolerance: 1e-12,
            },
        )
        .unwrap();
        for (u, v) in a.vertices.iter().zip(&b.vertices) {
            assert!((u - v).amax() < 1e-7);
        }
    }

    #[test]
    fn dump_lists_each_axis() {
        let m = tetrahedron();
        let p = DeformProblem::new(&m, vec![HandleConstraint::point(0, Vec3::zeros(), 1.0)], None);
        let mut buf = Vec::new();
        dump_system(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches("# symmetric 4").count(), 3);
    }
}
