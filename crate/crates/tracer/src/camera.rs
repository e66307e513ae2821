use crate::bvh::Ray;
use glint_core::math::Vec3;

/// Pinhole camera. `fov_y` is the full vertical field of view in degrees.
#[derive(Clone, Copy, Debug)]
pub struct Camera {
    pub position: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_half_fov: f32,
}

impl Camera {
    pub fn new(position: Vec3, look_at: Vec3, up_hint: Vec3, fov_y: f32) -> Camera {
        let forward = (look_at - position).normalized();
        let right = forward.cross(up_hint).normalized();
        let up = right.cross(forward);
        Camera {
            position,
            forward,
            right,
            up,
            tan_half_fov: (fov_y.to_radians() * 0.5).tan(),
        }
    }

    /// Ray through pixel (px, py) at sub-pixel offset (jx, jy) in [0,1).
    pub fn ray(&self, px: usize, py: usize, jx: f32, jy: f32, width: usize, height: usize) -> Ray {
        let aspect = width as f32 / height as f32;
        let sx = (2.0 * (px as f32 + jx) / width as f32 - 1.0) * self.tan_half_fov * aspect;
        let sy = (1.0 - 2.0 * (py as f32 + jy) / height as f32) * self.tan_half_fov;
        let dir = (self.forward + sx * self.right + sy * self.up).normalized();
        Ray::new(self.position, dir)
    }
}
