//! Deterministic software rasterizer and per-pixel normal maps.
//!
//! Coverage is tested at pixel centres `(x + 0.5, y + 0.5)`. Pixels on a
//! shared edge belong to exactly one triangle (top-left rule). The z-buffer
//! keeps the nearest surface; equal depths go to the lower face index.

use crate::camera::WeakPerspectiveCamera;
use crate::error::Result;
use crate::grid::{BinaryMask, DepthMap, Grid, BACKGROUND_DEPTH};
use crate::mesh::{vertex_normals, TriMesh, Vec2, Vec3};
use crate::par;

/// Marker in the face index map for uncovered pixels.
pub const NO_FACE: u32 = u32::MAX;

const BAND_ROWS: usize = 8;

/// Calls `visit(x, y, [l0, l1, l2])` for each pixel centre covered by the
/// triangle, restricted to rows `rows.0..rows.1` and columns `0..width`.
/// Barycentric weights refer to the original vertex order.
pub fn scan_triangle(
    p: [Vec2; 3],
    width: usize,
    rows: (usize, usize),
    mut visit: impl FnMut(usize, usize, [f64; 3]),
) {
    let area = edge(&p[0], &p[1], &p[2]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    // orient so that the interior has positive edge functions
    let (q, perm) = if area > 0.0 {
        ([p[0], p[1], p[2]], [0usize, 1, 2])
    } else {
        ([p[0], p[2], p[1]], [0usize, 2, 1])
    };
    let area = area.abs();

    let min_x = q.iter().map(|v| v.x).fold(f64::INFINITY, f64::min);
    let max_x = q.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = q.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
    let max_y = q.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);

    let x0 = ((min_x - 0.5).ceil().max(0.0)) as i64;
    let x1 = ((max_x - 0.5).floor()).min(width as f64 - 1.0) as i64;
    let y0 = ((min_y - 0.5).ceil().max(rows.0 as f64)) as i64;
    let y1 = ((max_y - 0.5).floor()).min(rows.1 as f64 - 1.0) as i64;
    if x0 > x1 || y0 > y1 {
        return;
    }

    let owns = [
        owns_edge(&q[1], &q[2]),
        owns_edge(&q[2], &q[0]),
        owns_edge(&q[0], &q[1]),
    ];

    for y in y0..=y1 {
        let py = y as f64 + 0.5;
        for x in x0..=x1 {
            let pt = Vec2::new(x as f64 + 0.5, py);
            let w = [edge(&q[1], &q[2], &pt), edge(&q[2], &q[0], &pt), edge(&q[0], &q[1], &pt)];
            let inside = (0..3).all(|k| w[k] > 0.0 || (w[k] == 0.0 && owns[k]));
            if !inside {
                continue;
            }
            let mut bary = [0.0; 3];
            for k in 0..3 {
                bary[perm[k]] = w[k] / area;
            }
            visit(x as usize, y as usize, bary);
        }
    }
}

#[inline]
fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Top or left edge of a positively oriented triangle (y axis pointing down).
#[inline]
fn owns_edge(a: &Vec2, b: &Vec2) -> bool {
    let d = b - a;
    (d.y == 0.0 && d.x > 0.0) || d.y < 0.0
}

/// Rasterizer output.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub mask: BinaryMask,
    pub depth: DepthMap,
    /// Front-facing faces that own at least one pixel.
    pub face_visible: Vec<bool>,
    pub face_index: Grid<u32>,
    /// Barycentric weights of the owning face at each covered pixel.
    pub bary: Grid<[f64; 3]>,
}

impl Raster {
    pub fn is_empty(&self) -> bool {
        !self.mask.data.iter().any(|&b| b)
    }

    pub fn visible_face_count(&self) -> usize {
        self.face_visible.iter().filter(|&&v| v).count()
    }
}

struct Band {
    depth: Vec<f64>,
    face: Vec<u32>,
    bary: Vec<[f64; 3]>,
}

pub fn rasterize(camera: &WeakPerspectiveCamera, mesh: &TriMesh) -> Raster {
    let (w, h) = (camera.width(), camera.height());
    let projected: Vec<Vec2> = par::map_slice(&mesh.vertices, |v| camera.project(v));
    let ds = camera.depth_sign;

    let n_bands = h.div_ceil(BAND_ROWS);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); n_bands];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let ys = f.map(|i| projected[i].y);
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) {
            continue;
        }
        let r0 = (lo - 0.5).ceil().max(0.0);
        let r1 = (hi - 0.5).floor().min(h as f64 - 1.0);
        if r0 > r1 {
            continue;
        }
        for band in (r0 as usize / BAND_ROWS)..=(r1 as usize / BAND_ROWS) {
            bins[band].push(fi as u32);
        }
    }

    let bands: Vec<Band> = par::map_range(n_bands, |b| {
        let row0 = b * BAND_ROWS;
        let row1 = (row0 + BAND_ROWS).min(h);
        let n = (row1 - row0) * w;
        let mut key = vec![f64::NEG_INFINITY; n];
        let mut band = Band {
            depth: vec![BACKGROUND_DEPTH; n],
            face: vec![NO_FACE; n],
            bary: vec![[0.0; 3]; n],
        };
        for &fi in &bins[b] {
            let f = mesh.faces[fi as usize];
            let pts = f.map(|i| projected[i]);
            let zs = f.map(|i| mesh.vertices[i].z);
            scan_triangle(pts, w, (row0, row1), |x, y, l| {
                let z = l[0] * zs[0] + l[1] * zs[1] + l[2] * zs[2];
                let k = (y - row0) * w + x;
                if ds * z > key[k] {
                    key[k] = ds * z;
                    band.depth[k] = z;
                    band.face[k] = fi;
                    band.bary[k] = l;
                }
            });
        }
        band
    });

    let mut depth = Vec::with_capacity(w * h);
    let mut face = Vec::with_capacity(w * h);
    let mut bary = Vec::with_capacity(w * h);
    for band in bands {
        depth.extend(band.depth);
        face.extend(band.face);
        bary.extend(band.bary);
    }

    let mut owns_pixel = vec![false; mesh.faces.len()];
    for &f in &face {
        if f != NO_FACE {
            owns_pixel[f as usize] = true;
        }
    }
    let face_visible = par::map_range(mesh.faces.len(), |fi| {
        owns_pixel[fi] && camera.is_front_facing(&mesh.face_cross(fi))
    });
    let mask = Grid {
        width: w,
        height: h,
        data: face.iter().map(|&f| f != NO_FACE).collect(),
    };
    let raster = Raster {
        mask,
        depth: Grid {
            width: w,
            height: h,
            data: depth,
        },
        face_visible,
        face_index: Grid {
            width: w,
            height: h,
            data: face,
        },
        bary: Grid {
            width: w,
            height: h,
            data: bary,
        },
    };
    if raster.is_empty() {
        log::warn!("render is empty: mesh projects entirely outside the {w}x{h} frame");
    }
    raster
}

/// Per-pixel unit normals with a validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub normals: Grid<[f64; 3]>,
    pub valid: BinaryMask,
}

impl NormalMap {
    pub fn empty(width: usize, height: usize) -> Self {
        NormalMap {
            normals: Grid::new(width, height, [0.0; 3]),
            valid: Grid::new(width, height, false),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Option<Vec3> {
        if *self.valid.get(x, y) {
            let n = self.normals.get(x, y);
            Some(Vec3::new(n[0], n[1], n[2]))
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.count()
    }
}

/// Interpolated, renormalised vertex normals at every covered pixel.
pub fn render_normal_map(camera: &WeakPerspectiveCamera, mesh: &TriMesh) -> Result<NormalMap> {
    let raster = rasterize(camera, mesh);
    let normals = vertex_normals(mesh)?;
    Ok(normal_map_from_raster(&raster, mesh, &normals))
}

pub fn normal_map_from_raster(raster: &Raster, mesh: &TriMesh, normals: &[Vec3]) -> NormalMap {
    let (w, h) = raster.mask.size();
    let mut out = NormalMap::empty(w, h);
    for k in 0..w * h {
        let f = raster.face_index.data[k];
        if f == NO_FACE {
            continue;
        }
        let face = mesh.faces[f as usize];
        let l = raster.bary.data[k];
        let n = normals[face[0]] * l[0] + normals[face[1]] * l[1] + normals[face[2]] * l[2];
        let len = n.norm();
        if len > 1e-12 {
            let n = n / len;
            out.normals.data[k] = [n.x, n.y, n.z];
            out.valid.data[k] = true;
        }
    }
    out
}

/// Finite-difference stencil along one image axis: derivative =
/// `factor * (depth[plus] - depth[minus])` in meters per meter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStencil {
    pub minus: usize,
    pub plus: usize,
    pub factor: f64,
}

/// Stencils for both axes at every foreground pixel that has a neighbour
/// along each axis; `None` for background and isolated pixels.
pub fn gradient_stencils(foreground: &BinaryMask, scale: f64) -> Vec<Option<[AxisStencil; 2]>> {
    let (w, h) = foreground.size();
    let fg = |x: i64, y: i64| foreground.checked(x, y).copied().unwrap_or(false);
    let axis = |x: i64, y: i64, dx: i64, dy: i64| -> Option<AxisStencil> {
        let here = (y as usize) * w + x as usize;
        let at = |x: i64, y: i64| (y as usize) * w + x as usize;
        let (m, p) = (fg(x - dx, y - dy), fg(x + dx, y + dy));
        match (m, p) {
            (true, true) => Some(AxisStencil {
                minus: at(x - dx, y - dy),
                plus: at(x + dx, y + dy),
                factor: 0.5 * scale,
            }),
            (false, true) => Some(AxisStencil {
                minus: here,
                plus: at(x + dx, y + dy),
                factor: scale,
            }),
            (true, false) => Some(AxisStencil {
                minus: at(x - dx, y - dy),
                plus: here,
                factor: scale,
            }),
            (false, false) => None,
        }
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !fg(x, y) {
                out.push(None);
                continue;
            }
            out.push(match (axis(x, y, 1, 0), axis(x, y, 0, 1)) {
                (Some(sx), Some(sy)) => Some([sx, sy]),
                _ => None,
            });
        }
    }
    out
}

/// Unnormalised normal `depth_sign * (-dz/dx, -dz/dy, 1)` from depth gradients.
#[inline]
pub fn normal_from_gradient(gx: f64, gy: f64, depth_sign: f64) -> Vec3 {
    Vec3::new(-gx, -gy, 1.0) * depth_sign
}

/// Normals from depth by finite differences: central where both neighbours
/// are foreground, one-sided at the boundary. Pixels lacking a neighbour on
/// either axis are flagged invalid.
pub fn depth_to_normals(depth: &DepthMap, camera: &WeakPerspectiveCamera) -> NormalMap {
    let fg = depth.map(|d| d.is_finite());
    let stencils = gradient_stencils(&fg, camera.scale);
    let (w, h) = depth.size();
    let mut out = NormalMap::empty(w, h);
    for (k, s) in stencils.iter().enumerate() {
        if let Some([sx, sy]) = s {
            let gx = sx.factor * (depth.data[sx.plus] - depth.data[sx.minus]);
            let gy = sy.factor * (depth.data[sy.plus] - depth.data[sy.minus]);
            let n = normal_from_gradient(gx, gy, camera.depth_sign).normalize();
            out.normals.data[k] = [n.x, n.y, n.z];
            out.valid.data[k] = true;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{grid_sheet, icosphere, subdivide_1to4};

    fn cam(w: usize, h: usize) -> WeakPerspectiveCamera {
        WeakPerspectiveCamera::new(1.0, [0.0, 0.0], [w, h], 1.0).unwrap()
    }

    fn tri(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> TriMesh {
        TriMesh::new(
            vec![Vec3::from(a), Vec3::from(b), Vec3::from(c)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_covers_exact_centres() {
        // CCW seen from +z means y-down screen winding is clockwise; both fine
        let m = tri([0.0, 0.0, 1.0], [4.0, 0.0, 1.0], [0.0, 4.0, 1.0]);
        let r = rasterize(&cam(6, 6), &m);
        for y in 0..6 {
            for x in 0..6 {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let inside = cx + cy < 4.0;
                assert_eq!(*r.mask.get(x, y), inside, "pixel {x},{y}");
            }
        }
        assert_eq!(r.face_visible, vec![true]);
        assert_eq!(*r.depth.get(0, 0), 1.0);
    }

    #[test]
    fn nearer_face_wins() {
        let far = tri([0.0, 0.0, 1.0], [6.0, 0.0, 1.0], [0.0, 6.0, 1.0]);
        let near = tri([0.0, 0.0, 2.0], [6.0, 0.0, 2.0], [0.0, 6.0, 2.0]);
        let m = far.merged(&near);
        let r = rasterize(&cam(6, 6), &m);
        assert_eq!(*r.face_index.get(1, 1), 1);
        assert_eq!(*r.depth.get(1, 1), 2.0);
        assert_eq!(r.face_visible, vec![false, true]);

        let flipped = WeakPerspectiveCamera { depth_sign: -1.0, ..cam(6, 6) };
        let r = rasterize(&flipped, &m);
        assert_eq!(*r.face_index.get(1, 1), 0);
    }

    #[test]
    fn equal_depth_goes_to_lower_index() {
        let a = tri([0.0, 0.0, 1.0], [6.0, 0.0, 1.0], [0.0, 6.0, 1.0]);
        let r = rasterize(&cam(6, 6), &a.merged(&a));
        assert!(r.face_index.data.iter().all(|&f| f == 0 || f == NO_FACE));
    }

    #[test]
    fn shared_edges_are_covered_once() {
        // a grid whose diagonals pass exactly through pixel centres
        let m = grid_sheet(5, 8.0, 0.0);
        let c = cam(8, 8);
        let proj: Vec<_> = m.vertices.iter().map(|v| c.project(v)).collect();
        let mut hits = Grid::new(8, 8, 0u32);
        for f in &m.faces {
            scan_triangle(f.map(|i| proj[i]), 8, (0, 8), |x, y, _| *hits.get_mut(x, y) += 1);
        }
        assert!(hits.data.iter().all(|&n| n == 1), "{:?}", hits.data);
    }

    #[test]
    fn sphere_visibility_is_about_half() {
        let m = icosphere(1.0, 4);
        let c = WeakPerspectiveCamera::fit_to_mesh(&m, [256, 256], 0.9).unwrap();
        let r = rasterize(&c, &m);
        let frac = r.visible_face_count() as f64 / m.face_count() as f64;
        let front = (0..m.face_count()).filter(|&f| m.face_cross(f).z > 0.0).count() as f64
            / m.face_count() as f64;
        assert!((0.45..=0.55).contains(&frac), "{frac}");
        assert!((frac - front).abs() < 0.05);
    }

    #[test]
    fn empty_render_is_valid() {
        let m = tri([100.0, 100.0, 0.0], [110.0, 100.0, 0.0], [100.0, 110.0, 0.0]);
        let r = rasterize(&cam(8, 8), &m);
        assert!(r.is_empty());
        assert_eq!(r.face_visible, vec![false]);
        let n = render_normal_map(&cam(8, 8), &m).unwrap();
        assert_eq!(n.valid_count(), 0);
    }

    #[test]
    fn subdivision_preserves_silhouette() {
        let m = icosphere(1.0, 2);
        let c = WeakPerspectiveCamera::fit_to_mesh(&m, [128, 128], 0.8).unwrap();
        let a = rasterize(&c, &m);
        let b = rasterize(&c, &subdivide_1to4(&m).unwrap());
        assert_eq!(a.mask, b.mask);
    }

    #[test]
    fn flat_square_normals_face_camera() {
        let m = grid_sheet(3, 10.0, 0.5);
        let c = cam(12, 12);
        let n = render_normal_map(&c, &m).unwrap();
        assert!(n.valid_count() > 50);
        for k in 0..144 {
            if n.valid.data[k] {
                assert_eq!(n.normals.data[k], [0.0, 0.0, 1.0]);
            }
        }
    }

    #[test]
    fn constant_and_ramp_depth_normals() {
        let c = WeakPerspectiveCamera::new(4.0, [0.0, 0.0], [8, 8], 1.0).unwrap();
        let flat = Grid::new(8, 8, 3.0);
        let n = depth_to_normals(&flat, &c);
        assert!(n.valid.data.iter().all(|&v| v));
        assert!(n.normals.data.iter().all(|v| *v == [0.0, 0.0, 1.0]));

        let ramp = Grid::from_fn(8, 8, |x, _| x as f64 / c.scale);
        let n = depth_to_normals(&ramp, &c);
        let s = 1.0 / 2f64.sqrt();
        for v in &n.normals.data {
            assert!((v[0] + s).abs() < 1e-12 && v[1].abs() < 1e-12 && (v[2] - s).abs() < 1e-12);
        }

        // seen from -z the same surface faces (+x, -z)
        let back = WeakPerspectiveCamera { depth_sign: -1.0, ..c };
        let n = depth_to_normals(&ramp, &back);
        for v in &n.normals.data {
            assert!((v[0] - s).abs() < 1e-12 && v[1].abs() < 1e-12 && (v[2] + s).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_pixel_is_invalid() {
        let mut d = Grid::new(5, 5, BACKGROUND_DEPTH);
        d.set(2, 2, 1.0);
        let n = depth_to_normals(&d, &cam(5, 5));
        assert_eq!(n.valid_count(), 0);
    }
}
