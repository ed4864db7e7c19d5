use super::math::{Ray, Vec3};
use super::scene::Scene;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Pinhole camera. Camera space is x right, y up, z forward.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    /// World up hint; must not be parallel to the view direction.
    pub up: Vec3,
    pub vfov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(position: Vec3, look_at: Vec3, vfov_deg: f64, width: usize, height: usize) -> Self {
        Camera {
            position,
            look_at,
            up: Vec3::new(0.0, 1.0, 0.0),
            vfov_deg,
            width,
            height,
        }
    }

    pub fn with_up(mut self, up: Vec3) -> Self {
        self.up = up;
        self
    }

    pub fn with_resolution(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn basis(&self) -> Result<CameraBasis> {
        let f = self.look_at - self.position;
        let fl = f.length();
        if !(fl > 1e-9) || !fl.is_finite() || self.width == 0 || self.height == 0 {
            return Err(Error::DegenerateCamera);
        }
        let forward = f * (1.0 / fl);
        let r = forward.cross(self.up);
        let rl = r.length();
        if !(rl > 1e-9 * self.up.length()) || !(self.vfov_deg > 0.0 && self.vfov_deg < 180.0) {
            return Err(Error::DegenerateCamera);
        }
        let right = r * (1.0 / rl);
        let up = right.cross(forward);
        Ok(CameraBasis {
            origin: self.position,
            right,
            up,
            forward,
            tan_half: libm::tan(self.vfov_deg.to_radians() / 2.0),
            aspect: self.width as f64 / self.height as f64,
            width: self.width,
            height: self.height,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CameraBasis {
    pub origin: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
    tan_half: f64,
    aspect: f64,
    width: usize,
    height: usize,
}

impl CameraBasis {
    /// Primary ray through the centre of pixel `(px, py)`; row 0 is the top.
    pub fn ray(&self, px: usize, py: usize) -> Ray {
        let u = (2.0 * (px as f64 + 0.5) / self.width as f64 - 1.0) * self.tan_half * self.aspect;
        let v = (1.0 - 2.0 * (py as f64 + 0.5) / self.height as f64) * self.tan_half;
        Ray {
            origin: self.origin,
            dir: (self.forward + self.right * u + self.up * v).normalized(),
        }
    }

    pub fn point_to_camera(&self, p: Vec3) -> Vec3 {
        self.dir_to_camera(p - self.origin)
    }

    pub fn dir_to_camera(&self, d: Vec3) -> Vec3 {
        Vec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.forward))
    }
}

/// Random viewpoint inside the room, looking at a random point in it.
pub fn sample_camera(scene: &Scene, rng: &mut Rng, vfov_deg: f64, width: usize, height: usize) -> Camera {
    let r = scene.room;
    let e = r.extent();
    let m = 0.2;
    let position = Vec3::new(
        rng.uniform(r.min.x + m, r.max.x - m),
        rng.uniform(r.min.y + 0.3 * e.y, r.min.y + 0.75 * e.y),
        rng.uniform(r.min.z + m, r.max.z - m),
    );
    let look_at = Vec3::new(
        rng.uniform(r.min.x, r.max.x),
        rng.uniform(r.min.y, r.min.y + 0.6 * e.y),
        rng.uniform(r.min.z, r.max.z),
    );
    Camera::new(position, look_at, vfov_deg, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_bases_rejected() {
        let p = Vec3::new(1.0, 1.0, 1.0);
        assert_eq!(Camera::new(p, p, 60.0, 8, 8).basis().unwrap_err(), Error::DegenerateCamera);
        let up = Camera::new(p, p + Vec3::new(0.0, 2.0, 0.0), 60.0, 8, 8);
        assert_eq!(up.basis().unwrap_err(), Error::DegenerateCamera);
        assert!(up.with_up(Vec3::new(0.0, 0.0, 1.0)).basis().is_ok());
    }

    #[test]
    fn centre_ray_is_forward() {
        let c = Camera::new(Vec3::ZERO, Vec3::new(0.0, 0.0, 5.0), 60.0, 9, 9);
        let b = c.basis().unwrap();
        let r = b.ray(4, 4);
        assert!((r.dir - Vec3::new(0.0, 0.0, 1.0)).length() < 1e-12);
        // Top-left pixel points up and to the left in camera space.
        let d = b.dir_to_camera(b.ray(0, 0).dir);
        assert!(d.x < 0.0 && d.y > 0.0 && d.z > 0.0);
    }
}
