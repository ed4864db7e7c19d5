use core::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

/// World-space vector in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.length())
    }

    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn axis(self, a: usize) -> f64 {
        self[a]
    }

    pub fn with_axis(mut self, a: usize, v: f64) -> Vec3 {
        match a {
            0 => self.x = v,
            1 => self.y = v,
            _ => self.z = v,
        }
        self
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            _ => &self.z,
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

/// Where a ray crosses a box boundary.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SlabHit {
    pub t: f64,
    /// Axis of the crossed face.
    pub axis: usize,
    /// True when the crossed face is on the `max` side.
    pub max_side: bool,
    /// True when the ray starts inside the box (crossing is the exit).
    pub from_inside: bool,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().length()
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// First boundary crossing with `t` in `(t_min, t_max)`.
    pub(crate) fn slab(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<SlabHit> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        let (mut near_axis, mut near_max) = (0, false);
        let (mut far_axis, mut far_max) = (0, false);
        for a in 0..3 {
            let d = ray.dir[a];
            let o = ray.origin[a];
            if d == 0.0 {
                if o < self.min[a] || o > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (t0, t1, max0) = if inv >= 0.0 {
                ((self.min[a] - o) * inv, (self.max[a] - o) * inv, false)
            } else {
                ((self.max[a] - o) * inv, (self.min[a] - o) * inv, true)
            };
            if t0 > t_near {
                t_near = t0;
                near_axis = a;
                near_max = max0;
            }
            if t1 < t_far {
                t_far = t1;
                far_axis = a;
                far_max = !max0;
            }
        }
        if t_near > t_far {
            return None;
        }
        if t_near > t_min && t_near < t_max {
            Some(SlabHit {
                t: t_near,
                axis: near_axis,
                max_side: near_max,
                from_inside: false,
            })
        } else if t_near <= t_min && t_far > t_min && t_far < t_max {
            Some(SlabHit {
                t: t_far,
                axis: far_axis,
                max_side: far_max,
                from_inside: true,
            })
        } else {
            None
        }
    }
}

/// Orthonormal basis `(t, b)` completing unit normal `n` (Duff et al. 2017).
pub(crate) fn onb(n: Vec3) -> (Vec3, Vec3) {
    let sign = if n.z >= 0.0 { 1.0 } else { -1.0 };
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    (
        Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x),
        Vec3::new(b, sign + n.y * n.y * a, -n.y),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_from_outside_and_inside() {
        let b = Aabb::new(Vec3::new(0., 0., 0.), Vec3::new(1., 1., 1.));
        let ray = Ray {
            origin: Vec3::new(-1.0, 0.5, 0.5),
            dir: Vec3::new(1.0, 0.0, 0.0),
        };
        let h = b.slab(&ray, 1e-9, f64::INFINITY).unwrap();
        assert_eq!((h.t, h.axis, h.max_side, h.from_inside), (1.0, 0, false, false));
        let ray = Ray {
            origin: Vec3::new(0.5, 0.5, 0.5),
            dir: Vec3::new(0.0, -1.0, 0.0),
        };
        let h = b.slab(&ray, 1e-9, f64::INFINITY).unwrap();
        assert_eq!((h.t, h.axis, h.max_side, h.from_inside), (0.5, 1, false, true));
    }

    #[test]
    fn onb_is_orthonormal() {
        for n in [Vec3::new(0., 0., 1.), Vec3::new(0., 0., -1.), Vec3::new(1., 2., -3.).normalized()] {
            let (t, b) = onb(n);
            assert!(t.dot(n).abs() < 1e-12 && b.dot(n).abs() < 1e-12 && t.dot(b).abs() < 1e-12);
            assert!((t.length() - 1.0).abs() < 1e-12 && (b.length() - 1.0).abs() < 1e-12);
        }
    }
}
