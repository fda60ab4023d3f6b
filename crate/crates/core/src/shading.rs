//! Spherical-harmonics shading, lighting and albedo estimation, and
//! photometric depth refinement.

use std::fs;
use std::path::Path;

use nalgebra::{SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::camera::WeakPerspectiveCamera;
use crate::error::{Error, Result};
use crate::grid::{require_same_size, BinaryMask, DepthMap, Grid, LumaImage};
use crate::laplacian::{solve_deform, DeformProblem, HandleConstraint};
use crate::mesh::{TriMesh, Vec3};
use crate::par;
use crate::raster::{gradient_stencils, normal_from_gradient, rasterize, AxisStencil, NormalMap, Raster};

/// Real SH normalisation constants (no Condon-Shortley phase).
const C0: f64 = 0.282_094_791_773_878_14; // sqrt(1 / 4pi)
const C1: f64 = 0.488_602_511_902_919_9; // sqrt(3 / 4pi)
const C2: f64 = 1.092_548_430_592_079_2; // sqrt(15 / 4pi)
const C3: f64 = 0.315_391_565_252_520_05; // sqrt(5 / 16pi)
const C4: f64 = 0.546_274_215_296_039_6; // sqrt(15 / 16pi)

const UNIT_TOLERANCE: f64 = 1e-6;

/// Second-order real SH basis, ordered Y00, Y1-1, Y10, Y11, Y2-2, Y2-1,
/// Y20, Y21, Y22.
pub fn sh_basis(n: &Vec3) -> Result<[f64; 9]> {
    let norm = n.norm();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(Error::Normalization { norm });
    }
    Ok(sh_basis_unchecked(n))
}

#[inline]
fn sh_basis_unchecked(n: &Vec3) -> [f64; 9] {
    let (x, y, z) = (n.x, n.y, n.z);
    [
        C0,
        C1 * y,
        C1 * z,
        C1 * x,
        C2 * x * y,
        C2 * y * z,
        C3 * (3.0 * z * z - 1.0),
        C2 * x * z,
        C4 * (x * x - y * y),
    ]
}

/// Gradient of each basis polynomial with respect to (x, y, z).
#[inline]
fn sh_basis_gradient(n: &Vec3) -> [Vec3; 9] {
    let (x, y, z) = (n.x, n.y, n.z);
    [
        Vec3::zeros(),
        Vec3::new(0.0, C1, 0.0),
        Vec3::new(0.0, 0.0, C1),
        Vec3::new(C1, 0.0, 0.0),
        Vec3::new(C2 * y, C2 * x, 0.0),
        Vec3::new(0.0, C2 * z, C2 * y),
        Vec3::new(0.0, 0.0, 6.0 * C3 * z),
        Vec3::new(C2 * z, 0.0, C2 * x),
        Vec3::new(2.0 * C4 * x, -2.0 * C4 * y, 0.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SHLighting {
    pub coeffs: [f64; 9],
}

impl SHLighting {
    /// Irradiance-like shading `sum_k l_k H_k(n)` for a unit normal.
    pub fn shade(&self, n: &Vec3) -> f64 {
        let h = sh_basis_unchecked(n);
        self.coeffs.iter().zip(h).map(|(l, b)| l * b).sum()
    }

    /// A frontal light: ambient plus a directional lobe towards `dir`.
    pub fn frontal(ambient: f64, strength: f64, dir: &Vec3) -> Self {
        let d = dir.normalize();
        let mut coeffs = [0.0; 9];
        coeffs[0] = ambient / C0;
        coeffs[1] = strength * d.y / C1;
        coeffs[2] = strength * d.z / C1;
        coeffs[3] = strength * d.x / C1;
        SHLighting { coeffs }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let l: SHLighting = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if l.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter(format!("{}: non-finite lighting coefficient", path.display())));
        }
        Ok(l)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Per-pixel luminance reflectance.
pub type AlbedoMap = Grid<f64>;

/// Pixels that are in the mask and carry a valid normal.
fn lit_pixels(mask: &BinaryMask, normals: &NormalMap) -> Vec<usize> {
    (0..mask.data.len())
        .filter(|&k| mask.data[k] && normals.valid.data[k])
        .collect()
}

const MAX_CONDITION: f64 = 1e10;

/// Least-squares SH coefficients for `I = rho * sum_k l_k H_k(n)` over the
/// masked pixels, with a ridge term `ridge * |l|^2`.
pub fn estimate_lighting(
    image: &LumaImage,
    albedo: &AlbedoMap,
    normals: &NormalMap,
    mask: &BinaryMask,
    ridge: f64,
) -> Result<SHLighting> {
    require_same_size(image, albedo, "albedo")?;
    require_same_size(image, &normals.valid, "normal map")?;
    require_same_size(image, mask, "mask")?;
    if !(ridge >= 0.0) {
        return Err(Error::Parameter(format!("ridge must be non-negative, got {ridge}")));
    }
    let pixels = lit_pixels(mask, normals);
    if pixels.len() < 9 {
        return Err(Error::Parameter(format!(
            "lighting needs at least 9 lit pixels, found {}",
            pixels.len()
        )));
    }
    let mut a = SMatrix::<f64, 9, 9>::zeros();
    let mut b = SVector::<f64, 9>::zeros();
    for &k in &pixels {
        let n = normals.normals.data[k];
        let h = SVector::<f64, 9>::from(sh_basis_unchecked(&Vec3::new(n[0], n[1], n[2])));
        let rho = albedo.data[k];
        a += (h * h.transpose()) * (rho * rho);
        b += h * (rho * image.data[k]);
    }
    for i in 0..9 {
        a[(i, i)] += ridge;
    }
    let eig = SymmetricEigen::new(a);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Conditioning { condition });
    }
    let l = a
        .cholesky()
        .ok_or(Error::Conditioning { condition })?
        .solve(&b);
    let mut coeffs = [0.0; 9];
    coeffs.copy_from_slice(l.as_slice());
    Ok(SHLighting { coeffs })
}

pub const DEFAULT_SHADING_FLOOR: f64 = 0.05;

/// Baseline intrinsic decomposition: image divided by the bootstrap shading
/// (clamped below by `floor`), then box-filtered over the mask with the
/// given radius. Masked pixels without a normal use the ambient term only.
/// Outside the mask the albedo is 0.
pub fn estimate_albedo(
    image: &LumaImage,
    normals: &NormalMap,
    mask: &BinaryMask,
    lighting: &SHLighting,
    blur_radius: usize,
    floor: f64,
) -> Result<AlbedoMap> {
    require_same_size(image, &normals.valid, "normal map")?;
    require_same_size(image, mask, "mask")?;
    let (w, h) = image.size();
    let raw = Grid::from_fn(w, h, |x, y| {
        if !*mask.get(x, y) {
            return 0.0;
        }
        let shading = match normals.get(x, y) {
            Some(n) => lighting.shade(&n),
            None => lighting.coeffs[0] * C0,
        };
        image.get(x, y).max(0.0) / shading.max(floor)
    });
    if blur_radius == 0 {
        return Ok(raw);
    }
    let r = blur_radius as i64;
    let rows = par::map_range(h, |y| {
        (0..w)
            .map(|x| {
                if !*mask.get(x, y) {
                    return 0.0;
                }
                let (mut sum, mut count) = (0.0, 0usize);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                        if mask.checked(xx, yy).copied().unwrap_or(false) {
                            sum += raw.get(xx as usize, yy as usize);
                            count += 1;
                        }
                    }
                }
                sum / count as f64
            })
            .collect::<Vec<_>>()
    });
    Grid::from_vec(w, h, rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub lambda_photo: f64,
    pub lambda_data: f64,
    pub lambda_smooth: f64,
    /// Detail magnification applied after refinement.
    pub beta: f64,
    pub ridge: f64,
    pub max_iterations: usize,
    /// Stop when the relative objective decrease of an iteration falls below this.
    pub tolerance: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            lambda_photo: 1.0,
            lambda_data: 5.0,
            lambda_smooth: 2.0,
            beta: 10.0,
            ridge: 1e-6,
            max_iterations: 200,
            tolerance: 1e-10,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda_photo, self.lambda_data, self.lambda_smooth];
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Parameter("refinement weights must be non-negative".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Parameter(format!("magnification must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

/// The refinement objective over the foreground pixels of the coarse depth
/// (restricted to the mask). Variables are those pixels' depths in metres.
pub struct RefineObjective<'a> {
    width: usize,
    /// Pixel index of each variable.
    pixels: Vec<usize>,
    /// Variable index of each pixel, `usize::MAX` outside.
    variable: Vec<usize>,
    stencils: Vec<Option<[AxisStencil; 2]>>,
    /// Variables with all four neighbours inside, for the smoothness term.
    interior: Vec<usize>,
    coarse: Vec<f64>,
    image: &'a LumaImage,
    albedo: &'a AlbedoMap,
    lighting: SHLighting,
    depth_sign: f64,
    config: RefineConfig,
}

impl<'a> RefineObjective<'a> {
    pub fn new(
        coarse: &DepthMap,
        image: &'a LumaImage,
        albedo: &'a AlbedoMap,
        lighting: &SHLighting,
        mask: &BinaryMask,
        camera: &WeakPerspectiveCamera,
        config: &RefineConfig,
    ) -> Result<Self> {
        require_same_size(coarse, image, "image")?;
        require_same_size(coarse, albedo, "albedo")?;
        require_same_size(coarse, mask, "mask")?;
        config.validate()?;
        let (w, h) = coarse.size();
        let fg = Grid::from_fn(w, h, |x, y| *mask.get(x, y) && coarse.get(x, y).is_finite());
        let pixels: Vec<usize> = (0..w * h).filter(|&k| fg.data[k]).collect();
        let mut variable = vec![usize::MAX; w * h];
        for (i, &k) in pixels.iter().enumerate() {
            variable[k] = i;
        }
        let interior = pixels
            .iter()
            .enumerate()
            .filter(|&(_, &k)| {
                let (x, y) = ((k % w) as i64, (k / w) as i64);
                [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .all(|(dx, dy)| fg.checked(x + dx, y + dy).copied().unwrap_or(false))
            })
            .map(|(i, _)| i)
            .collect();
        Ok(RefineObjective {
            width: w,
            coarse: pixels.iter().map(|&k| coarse.data[k]).collect(),
            stencils: gradient_stencils(&fg, camera.scale),
            pixels,
            variable,
            interior,
            image,
            albedo,
            lighting: *lighting,
            depth_sign: camera.depth_sign,
            config: *config,
        })
    }

    pub fn variables(&self) -> usize {
        self.pixels.len()
    }

    pub fn initial(&self) -> Vec<f64> {
        self.coarse.clone()
    }

    fn laplacian(&self, d: &[f64], i: usize) -> (f64, [usize; 4]) {
        let k = self.pixels[i];
        let w = self.width;
        let nb = [k - 1, k + 1, k - w, k + w].map(|q| self.variable[q]);
        (nb.iter().map(|&j| d[j]).sum::<f64>() - 4.0 * d[i], nb)
    }

    /// Photometric residual and, per stencil, the derivative of the
    /// residual with respect to the x and y depth gradients.
    fn photometric(&self, d: &[f64], i: usize) -> Option<(f64, [AxisStencil; 2], f64, f64)> {
        let k = self.pixels[i];
        let [sx, sy] = self.stencils[k]?;
        let at = |p: usize| d[self.variable[p]];
        let gx = sx.factor * (at(sx.plus) - at(sx.minus));
        let gy = sy.factor * (at(sy.plus) - at(sy.minus));
        let m = normal_from_gradient(gx, gy, self.depth_sign);
        let len = m.norm();
        let n = m / len;
        let rho = self.albedo.data[k];
        let r = rho * self.lighting.shade(&n) - self.image.data[k];
        let grads = sh_basis_gradient(&n);
        let mut dr_dn = Vec3::zeros();
        for (l, g) in self.lighting.coeffs.iter().zip(grads.iter()) {
            dr_dn += g * (rho * l);
        }
        // dn/dm = (I - n n^T) / |m|
        let dr_dm = (dr_dn - n * n.dot(&dr_dn)) / len;
        // dm/dgx = (-ds, 0, 0), dm/dgy = (0, -ds, 0)
        Some((r, [sx, sy], -self.depth_sign * dr_dm.x, -self.depth_sign * dr_dm.y))
    }

    pub fn value(&self, d: &[f64]) -> f64 {
        self.value_and_gradient(d, false).0
    }

    pub fn value_and_gradient(&self, d: &[f64], want_gradient: bool) -> (f64, Vec<f64>) {
        let c = &self.config;
        let n = self.pixels.len();
        let mut grad = if want_gradient { vec![0.0; n] } else { Vec::new() };
        let mut photo = 0.0;
        for i in 0..n {
            if let Some((r, [sx, sy], dr_dgx, dr_dgy)) = self.photometric(d, i) {
                photo += r * r;
                if want_gradient {
                    let s = 2.0 * c.lambda_photo * r;
                    grad[self.variable[sx.plus]] += s * dr_dgx * sx.factor;
                    grad[self.variable[sx.minus]] -= s * dr_dgx * sx.factor;
                    grad[self.variable[sy.plus]] += s * dr_dgy * sy.factor;
                    grad[self.variable[sy.minus]] -= s * dr_dgy * sy.factor;
                }
            }
        }
        let mut data = 0.0;
        for i in 0..n {
            let e = d[i] - self.coarse[i];
            data += e * e;
            if want_gradient {
                grad[i] += 2.0 * c.lambda_data * e;
            }
        }
        let mut smooth = 0.0;
        for &i in &self.interior {
            let (lap, nb) = self.laplacian(d, i);
            smooth += lap * lap;
            if want_gradient {
                let s = 2.0 * c.lambda_smooth * lap;
                for j in nb {
                    grad[j] += s;
                }
                grad[i] -= 4.0 * s;
            }
        }
        (c.lambda_photo * photo + c.lambda_data * data + c.lambda_smooth * smooth, grad)
    }

    /// Sum of squared photometric residuals (unweighted).
    pub fn photometric_energy(&self, d: &[f64]) -> f64 {
        (0..self.pixels.len())
            .filter_map(|i| self.photometric(d, i))
            .map(|(r, ..)| r * r)
            .sum()
    }

    pub fn to_depth(&self, d: &[f64], like: &DepthMap) -> DepthMap {
        let mut out = like.clone();
        for (i, &k) in self.pixels.iter().enumerate() {
            out.data[k] = d[i];
        }
        out
    }
}

/// Result of a refinement run.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub depth: DepthMap,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

const LBFGS_HISTORY: usize = 8;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Minimises the refinement objective with L-BFGS and a backtracking
/// (Armijo) line search, so the objective never increases.
pub fn refine_depth(
    coarse: &DepthMap,
    image: &LumaImage,
    albedo: &AlbedoMap,
    lighting: &SHLighting,
    mask: &BinaryMask,
    camera: &WeakPerspectiveCamera,
    config: &RefineConfig,
) -> Result<Refinement> {
    let obj = RefineObjective::new(coarse, image, albedo, lighting, mask, camera, config)?;
    let mut x = obj.initial();
    let (mut f, mut g) = obj.value_and_gradient(&x, true);
    let mut trace = vec![f];
    if !f.is_finite() {
        return Err(Error::Divergence { iteration: 0, trace });
    }
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut iterations = 0;
    while iterations < config.max_iterations && x.len() > 0 {
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, y, &mut q);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            // first step moves no pixel by more than a millimetre
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gmax == 0.0 {
                break;
            }
            q.iter_mut().for_each(|v| *v *= 1e-3 / gmax);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(a - b, s, &mut q);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            if slope == 0.0 {
                break;
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + ARMIJO * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            break;
        };
        iterations += 1;
        let (_, gnext) = obj.value_and_gradient(&next, true);
        let s: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnext.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 {
            if history.len() == LBFGS_HISTORY {
                history.remove(0);
            }
            history.push((s, y, 1.0 / sy));
        }
        let decrease = f - fnext;
        x = next;
        g = gnext;
        f = fnext;
        trace.push(f);
        if trace[trace.len() - 2] < f {
            return Err(Error::Divergence { iteration: iterations, trace });
        }
        if decrease <= config.tolerance * f.abs().max(1e-300) {
            break;
        }
    }
    Ok(Refinement {
        depth: obj.to_depth(&x, coarse),
        objective_trace: trace,
        iterations,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `coarse + beta * (refined - coarse)` on the shared foreground.
pub fn magnify_details(coarse: &DepthMap, refined: &DepthMap, beta: f64) -> Result<DepthMap> {
    require_same_size(coarse, refined, "refined depth").map_err(|e| Error::Alignment(e.to_string()))?;
    let mut out = coarse.clone();
    for (k, o) in out.data.iter_mut().enumerate() {
        let (c, r) = (coarse.data[k], refined.data[k]);
        if c.is_finite() != r.is_finite() {
            return Err(Error::Alignment(format!("foregrounds differ at pixel {k}")));
        }
        if c.is_finite() {
            *o = c + beta * (r - c);
        }
    }
    Ok(out)
}

/// Vertices counted visible when their projection lands on a pixel whose
/// rendered depth is within this distance of the vertex depth (metres).
pub const VISIBILITY_DEPTH_TOLERANCE: f64 = 0.02;

/// Vertices seen by the camera: projection inside the frame on foreground
/// whose rendered depth matches the vertex depth.
pub fn visible_vertices(mesh: &TriMesh, camera: &WeakPerspectiveCamera, raster: &Raster) -> Vec<bool> {
    par::map_slice(&mesh.vertices, |v| {
        let p = camera.project(v);
        raster
            .depth
            .checked(p.x.floor() as i64, p.y.floor() as i64)
            .is_some_and(|d| d.is_finite() && (d - v.z).abs() <= VISIBILITY_DEPTH_TOLERANCE)
    })
}

/// Bilinear sample at continuous pixel coordinates (pixel centres at +0.5);
/// falls back to the containing pixel when a tap is background.
pub fn sample_depth(depth: &DepthMap, px: f64, py: f64) -> Option<f64> {
    let nearest = depth
        .checked(px.floor() as i64, py.floor() as i64)
        .copied()
        .filter(|d| d.is_finite());
    let (u, v) = (px - 0.5, py - 0.5);
    let (x0, y0) = (u.floor() as i64, v.floor() as i64);
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let tap = |x: i64, y: i64| depth.checked(x, y).copied().filter(|d| d.is_finite());
    match (tap(x0, y0), tap(x0 + 1, y0), tap(x0, y0 + 1), tap(x0 + 1, y0 + 1)) {
        (Some(a), Some(b), Some(c), Some(d)) => {
            Some((a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy)
        }
        _ => nearest,
    }
}

#[derive(Debug, Clone)]
pub struct VertexDisplacement {
    pub mesh: TriMesh,
    pub moved: usize,
    /// Visible vertices whose projection sampled only background.
    pub skipped: usize,
}

/// Depth change `target - rendered` at a vertex projection, bilinear over the
/// taps that lie on the vertex's own surface (rendered depth within
/// [`VISIBILITY_DEPTH_TOLERANCE`] of `z`). Taps on an occluder or on the
/// background are dropped and the remaining weights renormalised.
pub fn sample_offset(target: &DepthMap, rendered: &DepthMap, px: f64, py: f64, z: f64) -> Option<f64> {
    let (u, v) = (px - 0.5, py - 0.5);
    let (x0, y0) = (u.floor() as i64, v.floor() as i64);
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ];
    let (mut sum, mut wsum) = (0.0, 0.0);
    for (x, y, w) in taps {
        let (Some(&t), Some(&r)) = (target.checked(x, y), rendered.checked(x, y)) else {
            continue;
        };
        if t.is_finite() && r.is_finite() && (r - z).abs() <= VISIBILITY_DEPTH_TOLERANCE && w > 0.0 {
            sum += w * (t - r);
            wsum += w;
        }
    }
    if wsum > 0.0 {
        return Some(sum / wsum);
    }
    let (x, y) = (px.floor() as i64, py.floor() as i64);
    match (target.checked(x, y), rendered.checked(x, y)) {
        (Some(&t), Some(&r)) if t.is_finite() && r.is_finite() && (r - z).abs() <= VISIBILITY_DEPTH_TOLERANCE => {
            Some(t - r)
        }
        _ => None,
    }
}

/// Moves visible vertices along z by the target-minus-rendered depth at their
/// projection; the rest follow a Laplacian solve with the moved vertices as
/// depth handles. x and y are never changed.
pub fn depth_to_vertex_displacement(
    mesh: &TriMesh,
    camera: &WeakPerspectiveCamera,
    target_depth: &DepthMap,
    visible: &[bool],
    weight: f64,
) -> Result<VertexDisplacement> {
    if target_depth.size() != (camera.width(), camera.height()) {
        return Err(Error::Alignment("target depth does not match the camera image size".into()));
    }
    if visible.len() != mesh.vertex_count() {
        return Err(Error::Alignment("visibility does not match the mesh".into()));
    }
    let rendered = rasterize(camera, mesh).depth;
    let samples: Vec<Option<f64>> = par::map_range(mesh.vertex_count(), |v| {
        if !visible[v] {
            return None;
        }
        let p = &mesh.vertices[v];
        let px = camera.project(p);
        sample_offset(target_depth, &rendered, px.x, px.y, p.z).map(|dz| p.z + dz)
    });
    let skipped = (0..mesh.vertex_count()).filter(|&v| visible[v] && samples[v].is_none()).count();
    let constraints: Vec<HandleConstraint> = samples
        .iter()
        .enumerate()
        .filter_map(|(v, s)| s.map(|z| HandleConstraint::depth(v, z, weight)))
        .collect();
    let moved = constraints.len();
    if moved == 0 {
        return Err(Error::NoConstraints("no visible vertex samples the target depth".into()));
    }
    let mut out = solve_deform(&DeformProblem::new(mesh, constraints, Some(*camera)))?;
    for (v, s) in samples.iter().enumerate() {
        if let Some(z) = s {
            out.vertices[v].z = *z;
        }
    }
    Ok(VertexDisplacement {
        mesh: out,
        moved,
        skipped,
    })
}

/// Renders `albedo * shading(n)` over the valid normals; 0 elsewhere.
pub fn render_shading(normals: &NormalMap, albedo: &AlbedoMap, lighting: &SHLighting) -> LumaImage {
    let (w, h) = normals.valid.size();
    Grid::from_fn(w, h, |x, y| match normals.get(x, y) {
        Some(n) => albedo.get(x, y) * lighting.shade(&n),
        None => 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constants_match_closed_forms() {
        assert!((C0 - (1.0 / (4.0 * PI)).sqrt()).abs() < 1e-15);
        assert!((C1 - (3.0 / (4.0 * PI)).sqrt()).abs() < 1e-15);
        assert!((C2 - (15.0 / (4.0 * PI)).sqrt()).abs() < 1e-15);
        assert!((C3 - (5.0 / (16.0 * PI)).sqrt()).abs() < 1e-15);
        assert!((C4 - (15.0 / (16.0 * PI)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn basis_rejects_non_unit() {
        assert!(matches!(sh_basis(&Vec3::new(0.0, 0.0, 2.0)), Err(Error::Normalization { .. })));
    }

    #[test]
    fn basis_gradient_matches_differences() {
        let n = Vec3::new(0.3, -0.5, 0.7);
        let g = sh_basis_gradient(&n);
        let h = 1e-6;
        for axis in 0..3 {
            let mut a = n;
            let mut b = n;
            a[axis] += h;
            b[axis] -= h;
            let (ha, hb) = (sh_basis_unchecked(&a), sh_basis_unchecked(&b));
            for k in 0..9 {
                assert!(((ha[k] - hb[k]) / (2.0 * h) - g[k][axis]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn magnify_formula() {
        let c = Grid::new(2, 1, 1.0);
        let r = Grid::new(2, 1, 1.01);
        let m = magnify_details(&c, &r, 10.0).unwrap();
        assert!((m.data[0] - 1.1).abs() < 1e-12);
        assert_eq!(magnify_details(&c, &r, 1.0).unwrap(), r);
        assert_eq!(magnify_details(&c, &c, 10.0).unwrap(), c);
        assert!(matches!(magnify_details(&c, &Grid::new(1, 1, 1.0), 2.0), Err(Error::Alignment(_))));
    }

    #[test]
    fn bilinear_depth_sampling() {
        let d = Grid::from_fn(4, 4, |x, _| x as f64);
        assert!((sample_depth(&d, 1.5, 1.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((sample_depth(&d, 2.0, 1.5).unwrap() - 1.5).abs() < 1e-12);
        let mut holes = d.clone();
        holes.set(2, 1, f64::INFINITY);
        // a background tap falls back to the containing pixel
        assert_eq!(sample_depth(&holes, 1.9, 1.5), Some(1.0));
        assert_eq!(sample_depth(&holes, 2.5, 1.5), None);
    }
}
