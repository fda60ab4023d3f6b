//! Weak-perspective camera.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec2, Vec3};

/// Orthographic projection followed by uniform scale and 2-d translation:
/// `pixel = scale * (x, y) + translation`. Depth is the world z coordinate;
/// the camera sits on the `depth_sign` side, so larger `depth_sign * z` is nearer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakPerspectiveCamera {
    /// Pixels per meter.
    pub scale: f64,
    pub translation: [f64; 2],
    pub image_size: [usize; 2],
    pub depth_sign: f64,
}

impl WeakPerspectiveCamera {
    pub fn new(scale: f64, translation: [f64; 2], image_size: [usize; 2], depth_sign: f64) -> Result<Self> {
        let cam = WeakPerspectiveCamera {
            scale,
            translation,
            image_size,
            depth_sign,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Parameter(format!("camera scale must be > 0, got {}", self.scale)));
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            return Err(Error::Parameter("camera image size must be positive".into()));
        }
        if self.depth_sign != 1.0 && self.depth_sign != -1.0 {
            return Err(Error::Parameter(format!(
                "depth_sign must be +1 or -1, got {}",
                self.depth_sign
            )));
        }
        if !self.translation.iter().all(|t| t.is_finite()) {
            return Err(Error::Parameter("camera translation must be finite".into()));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.image_size[0]
    }

    pub fn height(&self) -> usize {
        self.image_size[1]
    }

    #[inline]
    pub fn project(&self, p: &Vec3) -> Vec2 {
        Vec2::new(
            self.scale * p.x + self.translation[0],
            self.scale * p.y + self.translation[1],
        )
    }

    /// Image-plane image of a 3-d direction (no translation).
    #[inline]
    pub fn project_direction(&self, d: &Vec3) -> Vec2 {
        Vec2::new(self.scale * d.x, self.scale * d.y)
    }

    /// Inverse of [`project`](Self::project) for the x/y components.
    #[inline]
    pub fn unproject_xy(&self, pixel: &Vec2) -> Vec2 {
        Vec2::new(
            (pixel.x - self.translation[0]) / self.scale,
            (pixel.y - self.translation[1]) / self.scale,
        )
    }

    pub fn meters_per_pixel(&self) -> f64 {
        1.0 / self.scale
    }

    /// True when a surface with this outward normal faces the camera.
    #[inline]
    pub fn is_front_facing(&self, normal: &Vec3) -> bool {
        self.depth_sign * normal.z > 0.0
    }

    /// Camera whose frame holds the x/y extent of `lo..hi` centred with the
    /// given fill fraction of the limiting image dimension.
    pub fn fit_to_bounds(lo: &Vec3, hi: &Vec3, image_size: [usize; 2], fill: f64, depth_sign: f64) -> Result<Self> {
        let ext_x = (hi.x - lo.x).max(1e-12);
        let ext_y = (hi.y - lo.y).max(1e-12);
        let scale = fill * (image_size[0] as f64 / ext_x).min(image_size[1] as f64 / ext_y);
        let cx = 0.5 * (lo.x + hi.x);
        let cy = 0.5 * (lo.y + hi.y);
        Self::new(
            scale,
            [
                0.5 * image_size[0] as f64 - scale * cx,
                0.5 * image_size[1] as f64 - scale * cy,
            ],
            image_size,
            depth_sign,
        )
    }

    pub fn fit_to_mesh(mesh: &TriMesh, image_size: [usize; 2], fill: f64) -> Result<Self> {
        let (lo, hi) = mesh.bounding_box();
        Self::fit_to_bounds(&lo, &hi, image_size, fill, 1.0)
    }

    /// Same camera shifted by whole pixels.
    pub fn shifted(&self, dx: f64, dy: f64) -> Self {
        WeakPerspectiveCamera {
            translation: [self.translation[0] + dx, self.translation[1] + dy],
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    #[test]
    fn projection_formula() {
        let c = WeakPerspectiveCamera::new(2.0, [10.0, 20.0], [64, 64], 1.0).unwrap();
        assert_eq!(c.project(&Vec3::new(1.0, 2.0, 3.0)), Vec2::new(12.0, 24.0));
    }

    #[test]
    fn projection_ignores_depth() {
        let c = WeakPerspectiveCamera::new(1.0, [0.0, 0.0], [8, 8], 1.0).unwrap();
        for z in [-5.0, 0.0, 17.5] {
            assert_eq!(c.project(&Vec3::new(0.0, 0.0, z)), Vec2::zeros());
        }
    }

    #[test]
    fn invalid_cameras_are_rejected() {
        assert!(WeakPerspectiveCamera::new(0.0, [0.0; 2], [8, 8], 1.0).is_err());
        assert!(WeakPerspectiveCamera::new(1.0, [0.0; 2], [0, 8], 1.0).is_err());
        assert!(WeakPerspectiveCamera::new(1.0, [0.0; 2], [8, 8], 0.5).is_err());
    }

    #[test]
    fn fitted_camera_keeps_mesh_in_frame() {
        let m = icosphere(0.8, 2).translated(&Vec3::new(3.0, -1.0, 0.0));
        let c = WeakPerspectiveCamera::fit_to_mesh(&m, [224, 224], 0.9).unwrap();
        for v in &m.vertices {
            let p = c.project(v);
            assert!((0.0..=224.0).contains(&p.x) && (0.0..=224.0).contains(&p.y), "{p:?}");
        }
    }
}
