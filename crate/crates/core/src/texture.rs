//! UV texture projection and completion.
//!
//! Texel `(i, j)` covers `u in [i/W, (i+1)/W)`, `v in [j/H, (j+1)/H)`; its
//! centre is sampled. `v` grows downwards like image rows. Flow fields and
//! [`bilinear_sample`] positions are in texel-index units, so an integer
//! position addresses a stored value exactly.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::WeakPerspectiveCamera;
use crate::error::{Error, Result};
use crate::grid::{decode_float_grid, encode_float_grid, require_same_size, BinaryMask, Grid, RgbImage};
use crate::mesh::{TriMesh, Vec2, Vec3};
use crate::par;
use crate::raster::{scan_triangle, Raster, NO_FACE};
use crate::symmetry::SymmetryMap;

pub type UVTexture = RgbImage;
pub type UVMask = BinaryMask;
/// Per-texel source position in texel units.
pub type FlowField = Grid<[f64; 2]>;

pub const DEFAULT_TEXTURE_SIZE: usize = 256;
pub const DEFAULT_SYMMETRY_GAMMA: f64 = 1.5;

/// Values that can be linearly interpolated.
pub trait Texel: Copy + Send + Sync {
    fn lerp(a: Self, b: Self, t: f64) -> Self;
}

impl Texel for f64 {
    #[inline]
    fn lerp(a: f64, b: f64, t: f64) -> f64 {
        if t == 0.0 {
            a
        } else if t == 1.0 {
            b
        } else {
            a * (1.0 - t) + b * t
        }
    }
}

impl<const N: usize> Texel for [f64; N] {
    #[inline]
    fn lerp(a: Self, b: Self, t: f64) -> Self {
        std::array::from_fn(|k| f64::lerp(a[k], b[k], t))
    }
}

/// Four-neighbour bilinear interpolation at `(x, y)` in index units.
pub fn bilinear_sample<T: Texel>(grid: &Grid<T>, x: f64, y: f64) -> Result<T> {
    let (max_x, max_y) = (grid.width as f64 - 1.0, grid.height as f64 - 1.0);
    if !(x >= 0.0 && x <= max_x && y >= 0.0 && y <= max_y) {
        return Err(Error::Bounds { x, y, max_x, max_y });
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(grid.width - 1), (y0 + 1).min(grid.height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = T::lerp(*grid.get(x0, y0), *grid.get(x1, y0), fx);
    let bottom = T::lerp(*grid.get(x0, y1), *grid.get(x1, y1), fx);
    Ok(T::lerp(top, bottom, fy))
}

/// Samples an image at a continuous pixel position (pixel centres at `+0.5`),
/// clamping to the border.
fn sample_clamped<T: Texel>(grid: &Grid<T>, p: Vec2) -> T {
    let x = (p.x - 0.5).clamp(0.0, grid.width as f64 - 1.0);
    let y = (p.y - 0.5).clamp(0.0, grid.height as f64 - 1.0);
    bilinear_sample(grid, x, y).expect("clamped position")
}

fn face_uvs(mesh: &TriMesh) -> Result<&[[Vec2; 3]]> {
    mesh.uvs
        .as_deref()
        .ok_or_else(|| Error::Atlas("mesh has no UV coordinates".into()))
}

fn to_texel_space(uv: &[Vec2; 3], width: usize, height: usize) -> [Vec2; 3] {
    uv.map(|p| Vec2::new(p.x * width as f64, p.y * height as f64))
}

fn uv_area(t: &[Vec2; 3]) -> f64 {
    0.5 * ((t[1] - t[0]).perp(&(t[2] - t[0])))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureProjection {
    pub texture: UVTexture,
    pub mask: UVMask,
    /// Visible faces skipped because their UV triangle has zero area.
    pub skipped_faces: Vec<usize>,
}

/// Copies image colours into UV space for every visible face.
///
/// A texel is written only when its surface point projects onto a pixel owned
/// by the same face or by a face sharing a vertex with it, so texels hidden
/// behind another part of the body stay unset even on partly visible faces.
pub fn project_visible_texture(
    mesh: &TriMesh,
    camera: &WeakPerspectiveCamera,
    image: &RgbImage,
    raster: &Raster,
    size: (usize, usize),
) -> Result<TextureProjection> {
    let uvs = face_uvs(mesh)?;
    require_same_size(image, &raster.face_index, "image and face index map")?;
    if raster.face_visible.len() != mesh.face_count() {
        return Err(Error::Alignment(format!(
            "{} visibility flags for {} faces",
            raster.face_visible.len(),
            mesh.face_count()
        )));
    }
    let (w, h) = size;
    let visible: Vec<usize> = (0..mesh.face_count()).filter(|&f| raster.face_visible[f]).collect();
    let skipped: Vec<usize> = visible
        .iter()
        .copied()
        .filter(|&f| uv_area(&to_texel_space(&uvs[f], w, h)) == 0.0)
        .collect();

    let shares_vertex = |a: usize, b: usize| -> bool {
        let fa = &mesh.faces[a];
        mesh.faces[b].iter().any(|v| fa.contains(v))
    };

    let writes: Vec<Vec<(usize, [f64; 3])>> = par::map_slice(&visible, |&f| {
        let mut out = Vec::new();
        let corners = mesh.faces[f].map(|v| mesh.vertices[v]);
        scan_triangle(to_texel_space(&uvs[f], w, h), w, (0, h), |x, y, b| {
            let p: Vec3 = corners[0] * b[0] + corners[1] * b[1] + corners[2] * b[2];
            let pix = camera.project(&p);
            let (px, py) = (pix.x.floor() as i64, pix.y.floor() as i64);
            let Some(&owner) = raster.face_index.checked(px, py) else {
                return;
            };
            if owner == NO_FACE || !(owner as usize == f || shares_vertex(owner as usize, f)) {
                return;
            }
            out.push((y * w + x, sample_clamped(image, pix)));
        });
        out
    });

    let mut texture = Grid::new(w, h, [0.0; 3]);
    let mut mask = Grid::new(w, h, false);
    for face in writes {
        for (i, c) in face {
            texture.data[i] = c;
            mask.data[i] = true;
        }
    }
    Ok(TextureProjection {
        texture,
        mask,
        skipped_faces: skipped,
    })
}

/// Renders a textured mesh into the raster's pixel grid. Background is black.
pub fn render_texture(mesh: &TriMesh, raster: &Raster, texture: &UVTexture) -> Result<RgbImage> {
    let uvs = face_uvs(mesh)?;
    let (w, h) = raster.face_index.size();
    let (tw, th) = texture.size();
    let data = par::map_range(w * h, |i| {
        let f = raster.face_index.data[i];
        if f == NO_FACE {
            return [0.0; 3];
        }
        let b = raster.bary.data[i];
        let t = &uvs[f as usize];
        let uv = t[0] * b[0] + t[1] * b[1] + t[2] * b[2];
        let x = (uv.x * tw as f64 - 0.5).clamp(0.0, tw as f64 - 1.0);
        let y = (uv.y * th as f64 - 0.5).clamp(0.0, th as f64 - 1.0);
        bilinear_sample(texture, x, y).expect("clamped position")
    });
    Grid::from_vec(w, h, data)
}

const NO_PARTNER: u32 = u32::MAX;

/// Left/right texel correspondence. Always an exact involution: only mutual
/// pairs are kept, texels on the mirror line map to themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UVSymmetry {
    pub width: usize,
    pub height: usize,
    partner: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct UVSymmetryFile {
    width: usize,
    height: usize,
    /// `[x, y, mirrored_x, mirrored_y]`, each unordered pair listed once.
    pairs: Vec<[usize; 4]>,
}

impl UVSymmetry {
    /// Builds from texel pairs; rejects pairs that conflict.
    pub fn from_pairs(width: usize, height: usize, pairs: &[[usize; 4]]) -> Result<Self> {
        let mut partner = vec![NO_PARTNER; width * height];
        for p in pairs {
            if p[0] >= width || p[2] >= width || p[1] >= height || p[3] >= height {
                return Err(Error::Parameter(format!("texel pair {p:?} outside {width}x{height}")));
            }
            let a = p[1] * width + p[0];
            let b = p[3] * width + p[2];
            for (s, t) in [(a, b), (b, a)] {
                if partner[s] != NO_PARTNER && partner[s] as usize != t {
                    return Err(Error::Parameter(format!("texel pair {p:?} conflicts with an earlier pair")));
                }
                partner[s] = t as u32;
            }
        }
        Ok(UVSymmetry { width, height, partner })
    }

    /// Left/right mirror of the whole grid: column `x` pairs with `W - 1 - x`.
    pub fn mirror_columns(width: usize, height: usize) -> Self {
        let partner = (0..width * height)
            .map(|i| ((i / width) * width + width - 1 - i % width) as u32)
            .collect();
        UVSymmetry { width, height, partner }
    }

    /// Derives the texel map from a mesh mirror map and its UV atlas: each
    /// texel centre is carried to the mirrored face with the same barycentric
    /// weights.
    pub fn from_mesh(mesh: &TriMesh, symmetry: &SymmetryMap, width: usize, height: usize) -> Result<Self> {
        let uvs = face_uvs(mesh)?;
        let partners = symmetry.partner_table(mesh.vertex_count())?;
        let key = |f: [usize; 3]| {
            let mut k = f;
            k.sort_unstable();
            k
        };
        let lookup: HashMap<[usize; 3], usize> =
            mesh.faces.iter().enumerate().map(|(i, f)| (key(*f), i)).collect();

        let faces: Vec<usize> = (0..mesh.face_count()).collect();
        let maps: Vec<Vec<(usize, usize)>> = par::map_slice(&faces, |&f| {
            let mirrored = mesh.faces[f].map(|v| partners[v]);
            let Some(&g) = lookup.get(&key(mirrored)) else {
                return Vec::new();
            };
            let target: [Vec2; 3] = std::array::from_fn(|k| {
                let j = mesh.faces[g].iter().position(|&v| v == mirrored[k]).expect("same vertex set");
                uvs[g][j]
            });
            let target = to_texel_space(&target, width, height);
            let mut out = Vec::new();
            scan_triangle(to_texel_space(&uvs[f], width, height), width, (0, height), |x, y, b| {
                let p = target[0] * b[0] + target[1] * b[1] + target[2] * b[2];
                let (mx, my) = (p.x.floor(), p.y.floor());
                if mx >= 0.0 && my >= 0.0 && (mx as usize) < width && (my as usize) < height {
                    out.push((y * width + x, my as usize * width + mx as usize));
                }
            });
            out
        });

        let mut forward = vec![NO_PARTNER; width * height];
        for face in maps {
            for (t, m) in face {
                forward[t] = m as u32;
            }
        }
        let partner = (0..width * height)
            .map(|t| {
                let m = forward[t];
                if m != NO_PARTNER && forward[m as usize] as usize == t {
                    m
                } else {
                    NO_PARTNER
                }
            })
            .collect();
        Ok(UVSymmetry { width, height, partner })
    }

    /// Mirrored texel index (row-major), if any.
    #[inline]
    pub fn partner_index(&self, i: usize) -> Option<usize> {
        let p = self.partner[i];
        (p != NO_PARTNER).then_some(p as usize)
    }

    pub fn partner(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        self.partner_index(y * self.width + x).map(|p| (p % self.width, p / self.width))
    }

    pub fn mapped_count(&self) -> usize {
        self.partner.iter().filter(|&&p| p != NO_PARTNER).count()
    }

    /// Each unordered pair once, in row-major order of its first texel.
    pub fn pairs(&self) -> Vec<[usize; 4]> {
        let w = self.width;
        (0..self.partner.len())
            .filter_map(|i| {
                let p = self.partner_index(i)?;
                (p >= i).then_some([i % w, i / w, p % w, p / w])
            })
            .collect()
    }

    fn require_size<T>(&self, grid: &Grid<T>) -> Result<()> {
        if grid.size() != (self.width, self.height) {
            return Err(Error::Alignment(format!(
                "UV symmetry is {}x{}, texture is {}x{}",
                self.width, self.height, grid.width, grid.height
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = UVSymmetryFile {
            width: self.width,
            height: self.height,
            pairs: self.pairs(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: UVSymmetryFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_pairs(file.width, file.height, &file.pairs)
    }
}

/// Exact squared Euclidean distance to the nearest `true` cell
/// (separable lower-envelope transform). `i64::MAX` when there is none.
pub fn squared_distance_transform(mask: &BinaryMask) -> Vec<i64> {
    let (w, h) = mask.size();
    const FAR: i64 = i64::MAX / 4;
    // columns first
    let columns: Vec<Vec<i64>> = par::map_range(w, |x| {
        let f: Vec<i64> = (0..h).map(|y| if *mask.get(x, y) { 0 } else { FAR }).collect();
        envelope(&f)
    });
    let rows: Vec<Vec<i64>> = par::map_range(h, |y| {
        let f: Vec<i64> = (0..w).map(|x| columns[x][y]).collect();
        envelope(&f)
    });
    rows.into_iter()
        .flatten()
        .map(|d| if d >= FAR { i64::MAX } else { d })
        .collect()
}

/// One-dimensional squared distance transform of a sampled function.
fn envelope(f: &[i64]) -> Vec<i64> {
    const FAR: i64 = i64::MAX / 4;
    let n = f.len();
    let finite: Vec<usize> = (0..n).filter(|&q| f[q] < FAR).collect();
    if finite.is_empty() {
        return vec![FAR; n];
    }
    // parabola intersections compared exactly in rational form
    let mut v: Vec<usize> = Vec::with_capacity(finite.len());
    for &q in &finite {
        while let Some(&p) = v.last() {
            if v.len() < 2 {
                break;
            }
            let r = v[v.len() - 2];
            // drop p when the intersection of (r, q) lies left of that of (r, p)
            let s_rq = (f[q] + (q * q) as i64 - f[r] - (r * r) as i64) as i128 * (p as i128 - r as i128);
            let s_rp = (f[p] + (p * p) as i64 - f[r] - (r * r) as i64) as i128 * (q as i128 - r as i128);
            if s_rq <= s_rp {
                v.pop();
            } else {
                break;
            }
        }
        v.push(q);
    }
    let mut out = vec![0; n];
    let mut k = 0;
    for (x, o) in out.iter_mut().enumerate() {
        let value = |p: usize| f[p] + (x as i64 - p as i64).pow(2);
        while k + 1 < v.len() && value(v[k + 1]) <= value(v[k]) {
            k += 1;
        }
        *o = value(v[k]);
    }
    out
}

fn isqrt(n: i64) -> i64 {
    let mut r = (n as f64).sqrt() as i64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Row-major-first visible texel at squared distance exactly `d2` from `(x, y)`.
fn source_at(mask: &BinaryMask, x: usize, y: usize, d2: i64) -> usize {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let r = isqrt(d2);
    for dy in -r..=r {
        let rem = d2 - dy * dy;
        let dx = isqrt(rem);
        if dx * dx != rem {
            continue;
        }
        let yy = y as i64 + dy;
        if yy < 0 || yy >= h {
            continue;
        }
        for xx in [x as i64 - dx, x as i64 + dx] {
            if xx >= 0 && xx < w && mask.data[(yy * w + xx) as usize] {
                return (yy * w + xx) as usize;
            }
        }
    }
    unreachable!("distance transform guarantees a source")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub symmetry_preference: bool,
    pub gamma: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            symmetry_preference: true,
            gamma: DEFAULT_SYMMETRY_GAMMA,
        }
    }
}

/// Deterministic appearance flow: every invisible texel points at its
/// nearest visible texel (row-major first on ties). With symmetry preference
/// it instead points at the source of its mirrored texel when that source is
/// `gamma` times nearer to the mirror than the plain source is to the texel;
/// a visible mirror has distance zero and always wins.
pub fn nearest_visible_flow(
    mask: &UVMask,
    symmetry: Option<&UVSymmetry>,
    config: &FlowConfig,
) -> Result<FlowField> {
    if !mask.data.iter().any(|&m| m) {
        return Err(Error::EmptyVisibility);
    }
    if let Some(s) = symmetry {
        s.require_size(mask)?;
    }
    let w = mask.width;
    let d2 = squared_distance_transform(mask);
    let nearest = |i: usize| -> usize {
        if mask.data[i] {
            i
        } else {
            source_at(mask, i % w, i / w, d2[i])
        }
    };
    let data = par::map_range(w * mask.height, |i| {
        let mut src = nearest(i);
        if !mask.data[i] && config.symmetry_preference {
            if let Some(m) = symmetry.and_then(|s| s.partner_index(i)) {
                let plain = (d2[i] as f64).sqrt();
                let mirrored = (d2[m] as f64).sqrt();
                if config.gamma * mirrored < plain {
                    src = nearest(m);
                }
            }
        }
        [(src % w) as f64, (src / w) as f64]
    });
    Grid::from_vec(w, mask.height, data)
}

pub fn identity_flow(width: usize, height: usize) -> FlowField {
    Grid::from_fn(width, height, |x, y| [x as f64, y as f64])
}

/// Resamples `texture` at each flow target.
pub fn apply_flow(texture: &UVTexture, flow: &FlowField) -> Result<UVTexture> {
    if !texture.same_size(flow) {
        return Err(Error::Alignment(format!(
            "texture is {}x{}, flow is {}x{}",
            texture.width, texture.height, flow.width, flow.height
        )));
    }
    let values = par::map_slice(&flow.data, |&[x, y]| bilinear_sample(texture, x, y));
    Grid::from_vec(texture.width, texture.height, values.into_iter().collect::<Result<_>>()?)
}

/// Fills invisible texels whose mirror is visible. Idempotent because the
/// texel map is an involution.
pub fn symmetric_composite(
    texture: &UVTexture,
    mask: &UVMask,
    symmetry: &UVSymmetry,
) -> Result<(UVTexture, UVMask)> {
    require_same_size(texture, mask, "texture and mask")?;
    symmetry.require_size(mask)?;
    let mut out = texture.clone();
    let mut out_mask = mask.clone();
    for i in 0..mask.data.len() {
        if mask.data[i] {
            continue;
        }
        if let Some(m) = symmetry.partner_index(i) {
            if mask.data[m] {
                out.data[i] = texture.data[m];
                out_mask.data[i] = true;
            }
        }
    }
    Ok((out, out_mask))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionConfig {
    pub flow: FlowConfig,
    /// Edge-aware smoothing passes over originally invisible texels.
    pub smoothing_passes: usize,
    /// Colour scale of the smoothing weights.
    pub smoothing_sigma: f64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            flow: FlowConfig::default(),
            smoothing_passes: 0,
            smoothing_sigma: 0.1,
        }
    }
}

/// Intermediate results of [`complete_texture`].
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub texture: UVTexture,
    /// Visibility after the symmetric composite.
    pub composed_mask: UVMask,
    pub flow: FlowField,
}

/// Symmetric composite, then nearest-visible flow, then optional smoothing.
/// Originally visible texels are returned bit-exactly.
pub fn complete_texture(
    partial: &UVTexture,
    mask: &UVMask,
    symmetry: Option<&UVSymmetry>,
    config: &CompletionConfig,
) -> Result<UVTexture> {
    Ok(complete_texture_detailed(partial, mask, symmetry, config)?.texture)
}

pub fn complete_texture_detailed(
    partial: &UVTexture,
    mask: &UVMask,
    symmetry: Option<&UVSymmetry>,
    config: &CompletionConfig,
) -> Result<Completion> {
    require_same_size(partial, mask, "texture and mask")?;
    if !mask.data.iter().any(|&m| m) {
        return Err(Error::EmptyVisibility);
    }
    let (composed, composed_mask) = match symmetry {
        Some(s) => symmetric_composite(partial, mask, s)?,
        None => (partial.clone(), mask.clone()),
    };
    let flow = nearest_visible_flow(&composed_mask, symmetry, &config.flow)?;
    let mut texture = apply_flow(&composed, &flow)?;
    for _ in 0..config.smoothing_passes {
        texture = smooth_pass(&texture, mask, config.smoothing_sigma);
    }
    Ok(Completion {
        texture,
        composed_mask,
        flow,
    })
}

/// One 3x3 pass of colour-weighted averaging, leaving `keep` texels as they are.
fn smooth_pass(texture: &UVTexture, keep: &UVMask, sigma: f64) -> UVTexture {
    let (w, h) = texture.size();
    let inv = 1.0 / (sigma * sigma).max(1e-12);
    let data = par::map_range(w * h, |i| {
        let c = texture.data[i];
        if keep.data[i] {
            return c;
        }
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        let mut sum = [0.0; 3];
        let mut total = 0.0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let Some(q) = texture.checked(x + dx, y + dy) else { continue };
                let d2: f64 = (0..3).map(|k| (q[k] - c[k]).powi(2)).sum();
                let wgt = (-d2 * inv).exp();
                for k in 0..3 {
                    sum[k] += wgt * q[k];
                }
                total += wgt;
            }
        }
        sum.map(|s| s / total)
    });
    Grid::from_vec(w, h, data).expect("same size")
}

pub fn save_flow(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let values: Vec<f32> = flow.data.iter().flat_map(|p| [p[0] as f32, p[1] as f32]).collect();
    fs::write(path, encode_float_grid(flow.width, flow.height, 2, &values)).map_err(|e| Error::io(path, e))
}

pub fn load_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, c, values) = decode_float_grid(&bytes, path)?;
    if c != 2 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message: format!("flow field must have 2 channels, found {c}"),
        });
    }
    Grid::from_vec(w, h, values.chunks_exact(2).map(|p| [p[0] as f64, p[1] as f64]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_examples() {
        let g = Grid::from_vec(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bilinear_sample(&g, 0.5, 0.5).unwrap(), 1.5);
        assert_eq!(bilinear_sample(&g, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(bilinear_sample(&g, 0.25, 0.0).unwrap(), 0.25);
        assert!(matches!(bilinear_sample(&g, 1.01, 0.0), Err(Error::Bounds { .. })));
        assert!(bilinear_sample(&g, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let mask = Grid::from_fn(13, 9, |x, y| (x * 7 + y * 3) % 11 == 0);
        let d = squared_distance_transform(&mask);
        for y in 0..9i64 {
            for x in 0..13i64 {
                let mut best = i64::MAX;
                for (i, &m) in mask.data.iter().enumerate() {
                    if m {
                        let (sx, sy) = ((i % 13) as i64, (i / 13) as i64);
                        best = best.min((sx - x).pow(2) + (sy - y).pow(2));
                    }
                }
                assert_eq!(d[(y * 13 + x) as usize], best, "({x},{y})");
            }
        }
    }

    #[test]
    fn tie_goes_to_row_major_first() {
        let mut mask = Grid::new(3, 3, true);
        mask.set(1, 1, false);
        let flow = nearest_visible_flow(&mask, None, &FlowConfig::default()).unwrap();
        assert_eq!(*flow.get(1, 1), [1.0, 0.0]);
        assert_eq!(*flow.get(2, 2), [2.0, 2.0]);
    }

    #[test]
    fn mirror_columns_is_involution() {
        let s = UVSymmetry::mirror_columns(5, 2);
        for i in 0..10 {
            assert_eq!(s.partner_index(s.partner_index(i).unwrap()), Some(i));
        }
        assert_eq!(s.partner(0, 1), Some((4, 1)));
        assert_eq!(s.partner(2, 0), Some((2, 0)));
    }

    #[test]
    fn conflicting_pairs_rejected() {
        assert!(UVSymmetry::from_pairs(3, 1, &[[0, 0, 1, 0], [0, 0, 2, 0]]).is_err());
        assert!(UVSymmetry::from_pairs(3, 1, &[[0, 0, 3, 0]]).is_err());
    }
}
