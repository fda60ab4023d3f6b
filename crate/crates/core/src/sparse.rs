//! Symmetric positive-definite sparse systems.
//!
//! Factorisation is delegated to faer's sparse Cholesky; a Jacobi
//! preconditioned conjugate gradient is kept as an alternative backend.
//!
//! # Triplet dump format
//!
//! [`SymmetricSystem::write_triplets`] writes plain text:
//!
//! ```text
//! # symmetric n nnz rhs_columns
//! <row> <col> <value>        (nnz lines, 0-based, both triangles)
//! rhs <column> <row> <value> (n * rhs_columns lines)
//! ```
//!
//! Values use Rust's shortest round-trip float formatting.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Backend for the normal equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Cholesky,
    ConjugateGradient { max_iterations: usize },
}

impl Default for SolverKind {
    fn default() -> Self {
        SolverKind::Cholesky
    }
}

/// Symmetric matrix in merged coordinate form (both triangles stored).
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSystem {
    pub n: usize,
    /// `(row, col, value)` sorted by column then row, duplicates merged.
    pub entries: Vec<(usize, usize, f64)>,
}

impl SymmetricSystem {
    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        SymmetricSystem { n, entries }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            if r == c {
                d[r] += v;
            }
        }
        d
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// Solves `A x = b` for each right-hand side column and checks the
    /// relative residual against `tolerance`.
    pub fn solve(&self, rhs: &[Vec<f64>], kind: SolverKind, tolerance: f64) -> Result<Vec<Vec<f64>>> {
        let mut solutions = match kind {
            SolverKind::Cholesky => self.cholesky(rhs)?,
            SolverKind::ConjugateGradient { max_iterations } => rhs
                .iter()
                .map(|b| self.pcg(b, tolerance, max_iterations))
                .collect::<Result<Vec<_>>>()?,
        };
        for (x, b) in solutions.iter_mut().zip(rhs) {
            let mut rel = self.relative_residual(x, b);
            if rel > tolerance && kind == SolverKind::Cholesky {
                // one step of iterative refinement
                let r: Vec<f64> = self.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
                let dx = self.cholesky(&[r])?.remove(0);
                for (xi, d) in x.iter_mut().zip(dx) {
                    *xi += d;
                }
                rel = self.relative_residual(x, b);
            }
            if !(rel <= tolerance) {
                return Err(Error::SolverFailure { residual: rel });
            }
        }
        Ok(solutions)
    }

    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        let r2: f64 = ax.iter().zip(b).map(|(a, bi)| (a - bi) * (a - bi)).sum();
        let b2: f64 = b.iter().map(|v| v * v).sum();
        if b2 > 0.0 {
            (r2 / b2).sqrt()
        } else {
            r2.sqrt()
        }
    }

    fn cholesky(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = self
            .entries
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| Error::RankDeficient(format!("cannot assemble matrix: {e:?}")))?;
        let llt = a
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::RankDeficient(format!("Cholesky factorisation failed: {e:?}")))?;
        let b = Mat::<f64>::from_fn(self.n, rhs.len(), |i, j| rhs[j][i]);
        let x = llt.solve(&b);
        let out: Vec<Vec<f64>> = (0..rhs.len())
            .map(|j| (0..self.n).map(|i| x[(i, j)]).collect())
            .collect();
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient("factorisation produced non-finite values".into()));
        }
        Ok(out)
    }

    fn pcg(&self, b: &[f64], tolerance: f64, max_iterations: usize) -> Result<Vec<f64>> {
        let n = self.n;
        let diag = self.diagonal();
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::RankDeficient(format!("non-positive diagonal at row {i}")));
        }
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if b_norm == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut rel = 1.0;
        for _ in 0..max_iterations {
            let ap = self.mul_vec(&p);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if !(pap > 0.0) {
                return Err(Error::RankDeficient("matrix is not positive definite".into()));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / b_norm;
            if rel <= tolerance {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::SolverFailure { residual: rel })
    }

    pub fn write_triplets(&self, rhs: &[Vec<f64>], mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# symmetric {} {} {}", self.n, self.entries.len(), rhs.len())?;
        for &(r, c, v) in &self.entries {
            writeln!(out, "{r} {c} {v}")?;
        }
        for (j, col) in rhs.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                writeln!(out, "rhs {j} {i} {v}")?;
            }
        }
        Ok(())
    }
}
