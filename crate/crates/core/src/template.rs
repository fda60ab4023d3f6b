//! Procedural T-pose body template with SMPL-compatible counts
//! (6890 vertices, 13776 faces, genus 0).
//!
//! The body is an inflated silhouette: a symmetric 2-d outline (union of a
//! torso ellipse and head, arm and leg capsules) is triangulated with a
//! constrained Delaunay triangulation, lifted to a front sheet (`+z`) and a
//! back sheet (`-z`) by a thickness that grows with the distance to the
//! outline, and the two sheets are glued along the outline. Only the right
//! half (`x >= 0`) is triangulated; the left half is its exact mirror image.
//!
//! World axes follow the image: x to the right, y down (the head is at -y),
//! z towards a camera with `depth_sign = +1`. "Left" limbs are on +x.
//!
//! Vertex layout, with `I` right-half lattice points, `M` inner midline
//! points and `B` right-half rim points:
//! `[front right I | front left I | front midline M | back right I |
//!   back left I | back midline M | rim right B | rim left B | head top | crotch]`.
//!
//! The UV atlas puts the front sheet in the left half of the unit square and
//! the back sheet in the right half, both with the image orientation.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::OnceLock;

use spade::handles::FixedVertexHandle;
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::handles::{JointHandleSet, JointHandles, JOINT_NAMES};
use crate::mesh::{TriMesh, Vec2, Vec3};
use crate::symmetry::SymmetryMap;

pub const VERTEX_COUNT: usize = 6890;
pub const FACE_COUNT: usize = 13776;

pub const LABEL_FACE: &str = "face";
pub const LABEL_FINGERS: &str = "fingers";
pub const LABEL_TOES: &str = "toes";

/// Point every body part contains; the outline is star-shaped about it.
const STAR_CENTRE: [f64; 2] = [0.0, -0.15];
/// Angular samples of the dense outline.
const OUTLINE_SAMPLES: usize = 16384;
/// Sharpness of the smooth union, 1/m.
const UNION_SHARPNESS: f64 = 100.0;
/// Limb radius the thickness profile is tuned to.
const ROUND_RADIUS: f64 = 0.06;
/// Radius around a joint location that selects its handle vertices.
const JOINT_RADIUS: f64 = 0.045;
/// `2 I + midline segments + rim segments`, which makes the glued,
/// mirrored mesh exactly [`VERTEX_COUNT`] vertices.
const HALF_BUDGET: usize = (VERTEX_COUNT + 2) / 2;

#[derive(Debug, Clone, Copy)]
enum Part {
    Ellipse { centre: [f64; 2], axes: [f64; 2] },
    Capsule { a: [f64; 2], b: [f64; 2], radius: f64 },
}

impl Part {
    fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Part::Ellipse { centre, axes } => {
                ((p[0] - centre[0]) / axes[0]).powi(2) + ((p[1] - centre[1]) / axes[1]).powi(2) <= 1.0
            }
            Part::Capsule { a, b, radius } => segment_distance(p, a, b) <= radius,
        }
    }

    /// Distance from the star centre to the part boundary along `dir`
    /// (parts are convex and contain the centre).
    fn exit_distance(&self, dir: [f64; 2]) -> f64 {
        let at = |t: f64| [STAR_CENTRE[0] + t * dir[0], STAR_CENTRE[1] + t * dir[1]];
        let (mut lo, mut hi) = (0.0, 2.5);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.contains(at(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn parts() -> Vec<Part> {
    let c = STAR_CENTRE;
    let mut parts = vec![
        Part::Ellipse {
            centre: [0.0, 0.02],
            axes: [0.16, 0.30],
        },
        Part::Capsule {
            a: c,
            b: [0.0, -0.60],
            radius: 0.085,
        },
    ];
    for side in [1.0, -1.0] {
        parts.push(Part::Capsule {
            a: c,
            b: [0.80 * side, -0.17],
            radius: 0.045,
        });
        parts.push(Part::Capsule {
            a: c,
            b: [0.17 * side, 0.82],
            radius: 0.065,
        });
    }
    parts
}

/// 2-d joint locations in [`JOINT_NAMES`] order.
const JOINT_LOCATIONS: [[f64; 2]; 10] = [
    [0.0, -0.50],
    [0.0, 0.12],
    [0.19, -0.155],
    [-0.19, -0.155],
    [0.48, -0.162],
    [-0.48, -0.162],
    [0.105, 0.45],
    [-0.105, 0.45],
    [0.158, 0.75],
    [-0.158, 0.75],
];

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((ap[0] - t * ab[0]).powi(2) + (ap[1] - t * ab[1]).powi(2)).sqrt()
}

fn polygon_distance(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| segment_distance(p, poly[i], poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

fn inside_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Dense right-half outline from the head top (angle 3π/2) through +x to
/// the crotch (angle π/2). Angles are measured in image axes (y down).
fn dense_half_outline(parts: &[Part]) -> Vec<[f64; 2]> {
    let n = OUTLINE_SAMPLES;
    (0..=n / 2)
        .map(|i| {
            let k = (3 * n / 4 + i) % n;
            let a = 2.0 * PI * k as f64 / n as f64;
            let dir = [a.cos(), a.sin()];
            let sum: f64 = parts
                .iter()
                .map(|p| (UNION_SHARPNESS * p.exit_distance(dir)).exp())
                .sum();
            let r = sum.ln() / UNION_SHARPNESS;
            let x = if i == 0 || i == n / 2 { 0.0 } else { STAR_CENTRE[0] + r * dir[0] };
            [x, STAR_CENTRE[1] + r * dir[1]]
        })
        .collect()
}

fn arc_length(pts: &[[f64; 2]]) -> f64 {
    pts.windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

fn resample(pts: &[[f64; 2]], segments: usize) -> Vec<[f64; 2]> {
    let mut cumulative = vec![0.0];
    for w in pts.windows(2) {
        let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        cumulative.push(cumulative.last().unwrap() + d);
    }
    let total = *cumulative.last().unwrap();
    let mut out = Vec::with_capacity(segments + 1);
    let mut j = 0;
    for k in 0..=segments {
        let s = total * k as f64 / segments as f64;
        while j + 2 < cumulative.len() && cumulative[j + 1] < s {
            j += 1;
        }
        let span = cumulative[j + 1] - cumulative[j];
        let t = if span > 0.0 { ((s - cumulative[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push([
            pts[j][0] + t * (pts[j + 1][0] - pts[j][0]),
            pts[j][1] + t * (pts[j + 1][1] - pts[j][1]),
        ]);
    }
    out[0] = pts[0];
    out[segments] = pts[pts.len() - 1];
    out
}

/// Right-half sample points.
struct HalfLayout {
    /// Rim from head top to crotch, both ends included.
    rim: Vec<[f64; 2]>,
    /// Midline points strictly between head top and crotch, top to bottom.
    midline: Vec<[f64; 2]>,
    lattice: Vec<[f64; 2]>,
}

impl HalfLayout {
    fn polygon(&self) -> Vec<[f64; 2]> {
        let mut poly = self.rim.clone();
        poly.extend(self.midline.iter().rev());
        poly
    }
}

/// Hexagonal lattice points inside `poly` at least half a spacing from its
/// boundary, with their boundary distance.
fn hex_lattice(poly: &[[f64; 2]], spacing: f64) -> Vec<([f64; 2], f64)> {
    let row = spacing * 3f64.sqrt() / 2.0;
    let (ymin, ymax) = poly
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
    let xmax = poly.iter().fold(0.0f64, |m, p| m.max(p[0]));
    let mut out = Vec::new();
    let mut j = 0usize;
    loop {
        let y = ymin + row * (j as f64 + 0.5);
        if y >= ymax {
            break;
        }
        let mut x = if j % 2 == 0 { 0.5 * spacing } else { spacing };
        while x < xmax {
            let p = [x, y];
            if inside_polygon(p, poly) {
                let d = polygon_distance(p, poly);
                if d >= 0.5 * spacing {
                    out.push((p, d));
                }
            }
            x += spacing;
        }
        j += 1;
    }
    out
}

fn half_layout(parts: &[Part]) -> HalfLayout {
    let dense = dense_half_outline(parts);
    let rim_len = arc_length(&dense);
    let top = dense[0];
    let crotch = dense[dense.len() - 1];
    let mid_len = crotch[1] - top[1];

    let layout_for = |spacing: f64| {
        let mid_segments = (mid_len / spacing).round() as usize;
        let mut rim_segments = (rim_len / spacing).round() as usize;
        if (HALF_BUDGET - mid_segments - rim_segments) % 2 != 0 {
            rim_segments += 1;
        }
        let interior = (HALF_BUDGET - mid_segments - rim_segments) / 2;
        let rim = resample(&dense, rim_segments);
        let midline: Vec<[f64; 2]> = (1..mid_segments)
            .map(|k| [0.0, top[1] + mid_len * k as f64 / mid_segments as f64])
            .collect();
        (
            HalfLayout {
                rim,
                midline,
                lattice: vec![],
            },
            interior,
        )
    };

    // the largest spacing whose lattice still fills the budget; surplus
    // points nearest the boundary are dropped
    let (mut lo, mut hi) = (0.005, 0.05);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let (layout, interior) = layout_for(mid);
        if hex_lattice(&layout.polygon(), mid).len() >= interior {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (mut layout, interior) = layout_for(lo);
    let pts = hex_lattice(&layout.polygon(), lo);
    assert!(pts.len() >= interior, "lattice bisection must bracket the budget");
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[b].1.total_cmp(&pts[a].1).then(a.cmp(&b)));
    let mut keep = order[..interior].to_vec();
    keep.sort_unstable();
    layout.lattice = keep.into_iter().map(|i| pts[i].0).collect();
    layout
}

/// Triangulates the right half; returns triangles over local indices
/// `[rim | midline | lattice]`, wound counter-clockwise in (x, y).
fn triangulate_half(layout: &HalfLayout) -> Vec<[usize; 3]> {
    let mut local: Vec<[f64; 2]> = layout.rim.clone();
    local.extend(&layout.midline);
    local.extend(&layout.lattice);

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut handle_to_local: HashMap<FixedVertexHandle, usize> = HashMap::new();
    let mut handles = Vec::with_capacity(local.len());
    for (i, p) in local.iter().enumerate() {
        let h = cdt.insert(Point2::new(p[0], p[1])).expect("finite template points");
        assert!(handle_to_local.insert(h, i).is_none(), "template points are distinct");
        handles.push(h);
    }
    let r = layout.rim.len();
    let m = layout.midline.len();
    let mut boundary: Vec<usize> = (0..r).collect();
    boundary.extend((r..r + m).rev());
    for k in 0..boundary.len() {
        cdt.add_constraint(handles[boundary[k]], handles[boundary[(k + 1) % boundary.len()]]);
    }

    let poly = layout.polygon();
    let mut tris = Vec::new();
    for face in cdt.inner_faces() {
        let v = face.vertices().map(|h| handle_to_local[&h.fix()]);
        let [a, b, c] = v.map(|i| local[i]);
        let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
        if !inside_polygon(centroid, &poly) {
            continue;
        }
        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        tris.push(if cross > 0.0 { v } else { [v[0], v[2], v[1]] });
    }
    tris.sort_unstable();
    tris
}

/// Half-thickness at distance `d` inside the outline: circular within
/// [`ROUND_RADIUS`] of the outline, then a gentle bulge.
fn thickness(d: f64) -> f64 {
    let r = ROUND_RADIUS;
    if d <= r {
        let t = 1.0 - d / r;
        r * (1.0 - t * t).max(0.0).sqrt()
    } else {
        r + 0.25 * (d - r) * (d - r) / r
    }
}

/// Template mesh, joint handle sets, exclusion labels and mirror map.
#[derive(Debug, Clone)]
pub struct BodyTemplate {
    pub mesh: TriMesh,
    pub joints: JointHandleSet,
    pub labels: BTreeMap<String, Vec<usize>>,
    pub symmetry: SymmetryMap,
}

/// The template is deterministic; it is built once and cloned.
pub fn body_template() -> BodyTemplate {
    static CACHE: OnceLock<BodyTemplate> = OnceLock::new();
    CACHE.get_or_init(build).clone()
}

fn build() -> BodyTemplate {
    let layout = half_layout(&parts());
    let tris = triangulate_half(&layout);

    let n_lat = layout.lattice.len();
    let n_mid = layout.midline.len();
    let rim_len = layout.rim.len();
    let n_rim = rim_len - 2;
    let sheet = 2 * n_lat + n_mid;
    let rim0 = 2 * sheet;
    let head_top = rim0 + 2 * n_rim;
    let crotch = head_top + 1;
    assert_eq!(crotch + 1, VERTEX_COUNT);

    // full closed outline for the thickness distance
    let mut outline: Vec<[f64; 2]> = layout.rim.clone();
    outline.extend(layout.rim[1..rim_len - 1].iter().rev().map(|p| [-p[0], p[1]]));

    let mut positions = vec![[0.0; 3]; VERTEX_COUNT];
    let mut place = |front: usize, p: [f64; 2]| {
        let z = thickness(polygon_distance(p, &outline));
        positions[front] = [p[0], p[1], z];
        positions[front + sheet] = [p[0], p[1], -z];
    };
    for (i, p) in layout.lattice.iter().enumerate() {
        place(i, *p);
        place(n_lat + i, [-p[0], p[1]]);
    }
    for (m, p) in layout.midline.iter().enumerate() {
        place(2 * n_lat + m, *p);
    }
    for k in 0..n_rim {
        let p = layout.rim[k + 1];
        positions[rim0 + k] = [p[0], p[1], 0.0];
        positions[rim0 + n_rim + k] = [-p[0], p[1], 0.0];
    }
    positions[head_top] = [0.0, layout.rim[0][1], 0.0];
    positions[crotch] = [0.0, layout.rim[rim_len - 1][1], 0.0];

    // local triangulation index -> global vertex
    let global = |local: usize, mirrored: bool, back: bool| -> usize {
        if local == 0 {
            head_top
        } else if local == rim_len - 1 {
            crotch
        } else if local < rim_len {
            rim0 + usize::from(mirrored) * n_rim + local - 1
        } else {
            let offset = if back { sheet } else { 0 };
            let l = local - rim_len;
            if l < n_mid {
                offset + 2 * n_lat + l
            } else {
                offset + usize::from(mirrored) * n_lat + l - n_mid
            }
        }
    };

    let (ylo, yhi) = positions
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
    let xmax = positions.iter().fold(0.0f64, |m, p| m.max(p[0].abs()));
    let k = (0.48 / (2.0 * xmax)).min(0.96 / (yhi - ylo));
    let ymid = 0.5 * (ylo + yhi);
    let uv = |g: usize, back: bool| {
        let p = positions[g];
        let centre = if back { 0.75 } else { 0.25 };
        Vec2::new(centre + k * p[0], 0.5 + k * (p[1] - ymid))
    };

    let mut faces = Vec::with_capacity(FACE_COUNT);
    let mut uvs = Vec::with_capacity(FACE_COUNT);
    for back in [false, true] {
        for mirrored in [false, true] {
            for t in &tris {
                let g = t.map(|l| global(l, mirrored, back));
                // positive xy cross product means a +z normal; the mirror
                // and the back sheet each flip it
                let f = if mirrored != back { [g[0], g[2], g[1]] } else { g };
                faces.push(f);
                uvs.push(f.map(|v| uv(v, back)));
            }
        }
    }
    assert_eq!(faces.len(), FACE_COUNT);

    let vertices: Vec<Vec3> = positions.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
    let labels = exclusion_labels(&vertices);
    let mut tags = vec![None; VERTEX_COUNT];
    for (name, ids) in &labels {
        for &i in ids {
            tags[i] = Some(name.clone());
        }
    }
    let mesh = TriMesh::new(vertices, faces)
        .and_then(|m| m.with_uvs(uvs))
        .and_then(|m| m.with_tags(tags))
        .expect("template construction is valid");

    let mut pairs = Vec::new();
    for offset in [0, sheet] {
        pairs.extend((0..n_lat).map(|i| (offset + i, offset + n_lat + i)));
    }
    pairs.extend((0..n_rim).map(|k| (rim0 + k, rim0 + n_rim + k)));
    let mut fixed: Vec<usize> = (0..n_mid)
        .flat_map(|m| [2 * n_lat + m, sheet + 2 * n_lat + m])
        .collect();
    fixed.extend([head_top, crotch]);
    fixed.sort_unstable();

    let joints = joint_sets(&mesh.vertices);
    BodyTemplate {
        mesh,
        joints,
        labels,
        symmetry: SymmetryMap {
            vertex_pairs: pairs,
            fixed,
        },
    }
}

fn exclusion_labels(vertices: &[Vec3]) -> BTreeMap<String, Vec<usize>> {
    let mut labels: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, v) in vertices.iter().enumerate() {
        let label = if v.y < -0.45 && v.z > 0.02 {
            Some(LABEL_FACE)
        } else if v.x.abs() > 0.72 {
            Some(LABEL_FINGERS)
        } else if v.y > 0.8 && v.z > 0.0 {
            Some(LABEL_TOES)
        } else {
            None
        };
        if let Some(l) = label {
            labels.entry(l.to_string()).or_default().push(i);
        }
    }
    labels
}

fn joint_sets(vertices: &[Vec3]) -> JointHandleSet {
    JointHandleSet {
        joints: JOINT_NAMES
            .iter()
            .zip(JOINT_LOCATIONS)
            .map(|(name, c)| JointHandles {
                name: name.to_string(),
                vertices: vertices
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| (v.x - c[0]).hypot(v.y - c[1]) <= JOINT_RADIUS)
                    .map(|(i, _)| i)
                    .collect(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::vertex_normals;
    use crate::symmetry::{mirror_correspondence, Axis};

    #[test]
    fn counts_match_smpl_topology() {
        let t = body_template();
        assert_eq!(t.mesh.vertex_count(), 6890);
        assert_eq!(t.mesh.face_count(), 13776);
        assert_eq!(t.mesh.euler_characteristic(), 2);
        assert!(t.mesh.edges().iter().all(|&(_, n)| n == 2));
    }

    #[test]
    fn faces_are_wound_outward() {
        let t = body_template();
        // every directed edge appears once: consistent orientation
        let mut directed = std::collections::HashSet::new();
        for f in &t.mesh.faces {
            for k in 0..3 {
                assert!(directed.insert((f[k], f[(k + 1) % 3])));
            }
        }
        let volume: f64 = t
            .mesh
            .faces
            .iter()
            .map(|f| t.mesh.vertices[f[0]].dot(&t.mesh.vertices[f[1]].cross(&t.mesh.vertices[f[2]])) / 6.0)
            .sum();
        assert!(volume > 0.0);
        assert!((0..t.mesh.face_count()).all(|f| t.mesh.face_area(f) > 1e-8));
        let n = vertex_normals(&t.mesh).unwrap();
        // the thickest point faces the +z camera
        let top = (0..VERTEX_COUNT).max_by(|&a, &b| t.mesh.vertices[a].z.total_cmp(&t.mesh.vertices[b].z)).unwrap();
        assert!(n[top].z > 0.9, "{}", n[top]);
    }

    #[test]
    fn grid_symmetry_matches_geometric_mirror() {
        let t = body_template();
        let geo = mirror_correspondence(&t.mesh, Axis::X, 1e-9).unwrap();
        let mut a = geo.vertex_pairs.clone();
        let mut b = t.symmetry.vertex_pairs.clone();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        assert_eq!(geo.fixed, t.symmetry.fixed);
        assert!(t.symmetry.is_involution(VERTEX_COUNT));
    }

    #[test]
    fn joint_sets_are_nonempty_and_disjoint() {
        let t = body_template();
        t.joints.validate(VERTEX_COUNT).unwrap();
        for j in &t.joints.joints {
            assert!(j.vertices.len() >= 6, "{} has {}", j.name, j.vertices.len());
        }
    }

    #[test]
    fn labels_cover_face_fingers_toes() {
        let t = body_template();
        for l in [LABEL_FACE, LABEL_FINGERS, LABEL_TOES] {
            assert!(t.labels.get(l).is_some_and(|v| !v.is_empty()), "{l}");
        }
    }

    #[test]
    fn body_proportions() {
        let (lo, hi) = body_template().mesh.bounding_box();
        assert!((hi.x + lo.x).abs() < 1e-12);
        assert!(hi.x > 0.8 && hi.x < 0.9, "{hi}");
        assert!(lo.y < -0.65 && hi.y > 0.85, "{lo} {hi}");
        assert!(hi.z > 0.08 && hi.z < 0.15 && (hi.z + lo.z).abs() < 1e-12, "{lo} {hi}");
    }
}
