use alloc::vec::Vec;

use super::math::{Aabb, Vec3};
use crate::error::{invalid, Result};
use crate::numerics::Rng;

/// Procedural albedo pattern, evaluated in the plane of the hit face.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Texture {
    Solid,
    /// Alternates `albedo` and `alt` in squares of side `scale` meters.
    Checker { alt: [f64; 3], scale: f64 },
    /// Alternates `albedo` and `alt` in bands of width `scale` along the first in-plane axis.
    Stripes { alt: [f64; 3], scale: f64 },
}

/// Lambertian material, BRDF `albedo / pi`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Material {
    pub albedo: [f64; 3],
    pub texture: Texture,
}

impl Material {
    pub const fn solid(albedo: [f64; 3]) -> Self {
        Material {
            albedo,
            texture: Texture::Solid,
        }
    }

    pub const fn gray(v: f64) -> Self {
        Material::solid([v, v, v])
    }

    /// Albedo at point `p` on a face perpendicular to `axis`.
    pub fn albedo_at(&self, p: Vec3, axis: usize) -> [f64; 3] {
        let (u, v) = match axis {
            0 => (p.z, p.y),
            1 => (p.x, p.z),
            _ => (p.x, p.y),
        };
        let cell = |x: f64, s: f64| libm::floor(x / s) as i64;
        let alternate = match self.texture {
            Texture::Solid => return self.albedo,
            Texture::Checker { alt, scale } => ((cell(u, scale) + cell(v, scale)) & 1 == 1, alt),
            Texture::Stripes { alt, scale } => (cell(u, scale) & 1 == 1, alt),
        };
        if alternate.0 {
            alternate.1
        } else {
            self.albedo
        }
    }

    fn validate(&self) -> Result<()> {
        let mut all = [self.albedo, self.albedo];
        match self.texture {
            Texture::Solid => {}
            Texture::Checker { alt, scale } | Texture::Stripes { alt, scale } => {
                if !(scale > 0.0) {
                    return Err(invalid("texture scale must be positive"));
                }
                all[1] = alt;
            }
        }
        if all.iter().flatten().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(invalid("albedo must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LightKind {
    Point { position: Vec3 },
    Spherical { position: Vec3, radius: f64 },
    /// `direction` points from the surface toward the light. Intensity is irradiance.
    Directional { direction: Vec3 },
}

/// Light source with linear RGB radiant intensity in W/sr.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Light {
    pub kind: LightKind,
    pub intensity: [f64; 3],
}

impl Light {
    pub fn point(position: Vec3, intensity: [f64; 3]) -> Self {
        Light {
            kind: LightKind::Point { position },
            intensity,
        }
    }

    pub fn position(&self) -> Option<Vec3> {
        match self.kind {
            LightKind::Point { position } | LightKind::Spherical { position, .. } => Some(position),
            LightKind::Directional { .. } => None,
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for c in &mut self.intensity {
            *c *= s;
        }
        self
    }
}

/// Box or thin-plane occluder.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Obstacle {
    pub bounds: Aabb,
    pub material: Material,
}

impl Obstacle {
    pub const PANEL_THICKNESS: f64 = 0.02;

    /// Thin panel centred on `at` along `axis`, spanning `min..max` on the other axes.
    pub fn panel(axis: usize, at: f64, min: Vec3, max: Vec3, material: Material) -> Self {
        let h = Self::PANEL_THICKNESS / 2.0;
        Obstacle {
            bounds: Aabb::new(min.with_axis(axis, at - h), max.with_axis(axis, at + h)),
            material,
        }
    }
}

/// Shell face order: -x, +x, floor, ceiling, -z, +z.
pub const WALL_COUNT: usize = 6;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scene {
    pub room: Aabb,
    pub walls: [Material; WALL_COUNT],
    pub obstacles: Vec<Obstacle>,
    pub lights: Vec<Light>,
    pub seed: u64,
}

impl Scene {
    pub fn diagonal(&self) -> f64 {
        self.room.diagonal()
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.room.extent();
        if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) {
            return Err(invalid("room shell must have positive extent"));
        }
        if self.lights.is_empty() {
            return Err(invalid("scene needs at least one light"));
        }
        for m in self.walls.iter().chain(self.obstacles.iter().map(|o| &o.material)) {
            m.validate()?;
        }
        for l in &self.lights {
            if l.intensity.iter().any(|&i| !(i >= 0.0) || !i.is_finite()) {
                return Err(invalid("light intensity must be finite and nonnegative"));
            }
            match l.kind {
                LightKind::Point { position } => {
                    if !self.room.contains(position) {
                        return Err(invalid("light outside the room shell"));
                    }
                }
                LightKind::Spherical { position, radius } => {
                    if !(radius > 0.0) {
                        return Err(invalid("spherical light radius must be positive"));
                    }
                    if !self.room.contains(position) {
                        return Err(invalid("light outside the room shell"));
                    }
                }
                LightKind::Directional { direction } => {
                    if !(direction.length() > 0.0) {
                        return Err(invalid("directional light needs a direction"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Copy with every light intensity multiplied by `s`.
    pub fn with_light_scale(&self, s: f64) -> Scene {
        let mut out = self.clone();
        for l in &mut out.lights {
            *l = l.scaled(s);
        }
        out
    }
}

/// Ranges and palettes for [`build_random_scene`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SceneRules {
    /// Room width, height, depth ranges in meters.
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    pub wall_palette: Vec<Material>,
    pub floor_palette: Vec<Material>,
    pub ceiling_palette: Vec<Material>,
    pub obstacle_palette: Vec<Material>,
    pub obstacles: (usize, usize),
    pub lights: (usize, usize),
    /// Total radiant intensity range per light (W/sr, summed over channels / 3).
    pub light_intensity: (f64, f64),
    /// Maximum per-channel deviation of light color from white.
    pub light_tint: f64,
    pub spherical_probability: f64,
    pub sphere_radius: (f64, f64),
    /// Lights are placed in this top fraction of room height.
    pub light_band: f64,
}

impl Default for SceneRules {
    fn default() -> Self {
        let checker = |a: [f64; 3], b: [f64; 3], s: f64| Material {
            albedo: a,
            texture: Texture::Checker { alt: b, scale: s },
        };
        let stripes = |a: [f64; 3], b: [f64; 3], s: f64| Material {
            albedo: a,
            texture: Texture::Stripes { alt: b, scale: s },
        };
        SceneRules {
            room_min: [3.0, 2.4, 3.0],
            room_max: [6.0, 3.2, 6.0],
            wall_palette: alloc::vec![
                Material::solid([0.75, 0.72, 0.68]),
                Material::solid([0.65, 0.2, 0.15]),
                Material::solid([0.15, 0.55, 0.2]),
                Material::solid([0.2, 0.3, 0.65]),
                stripes([0.8, 0.78, 0.7], [0.45, 0.4, 0.6], 0.25),
            ],
            floor_palette: alloc::vec![
                Material::solid([0.45, 0.3, 0.18]),
                checker([0.7, 0.7, 0.7], [0.15, 0.15, 0.15], 0.5),
                stripes([0.55, 0.38, 0.22], [0.35, 0.22, 0.12], 0.15),
            ],
            ceiling_palette: alloc::vec![Material::gray(0.8), Material::solid([0.82, 0.8, 0.74])],
            obstacle_palette: alloc::vec![
                Material::solid([0.7, 0.6, 0.2]),
                Material::solid([0.3, 0.5, 0.7]),
                Material::gray(0.5),
                checker([0.8, 0.3, 0.3], [0.9, 0.9, 0.85], 0.2),
            ],
            obstacles: (1, 4),
            lights: (1, 3),
            light_intensity: (20.0, 80.0),
            light_tint: 0.25,
            spherical_probability: 0.5,
            sphere_radius: (0.05, 0.15),
            light_band: 0.2,
        }
    }
}

impl SceneRules {
    /// Every surface uses one solid gray.
    pub fn single_palette(gray: f64) -> Self {
        let m = alloc::vec![Material::gray(gray)];
        SceneRules {
            wall_palette: m.clone(),
            floor_palette: m.clone(),
            ceiling_palette: m.clone(),
            obstacle_palette: m,
            ..SceneRules::default()
        }
    }
}

/// Procedural room with 1–4 obstacles and 1–3 lights near the ceiling. Deterministic per seed.
pub fn build_random_scene(seed: u64, rules: &SceneRules) -> Scene {
    let mut rng = Rng::derive(seed, &[0x5CE4E]);
    let size = Vec3::new(
        rng.uniform(rules.room_min[0], rules.room_max[0]),
        rng.uniform(rules.room_min[1], rules.room_max[1]),
        rng.uniform(rules.room_min[2], rules.room_max[2]),
    );
    let room = Aabb::new(Vec3::ZERO, size);
    let pick = |rng: &mut Rng, p: &[Material]| *rng.choose(p);
    let walls = [
        pick(&mut rng, &rules.wall_palette),
        pick(&mut rng, &rules.wall_palette),
        pick(&mut rng, &rules.floor_palette),
        pick(&mut rng, &rules.ceiling_palette),
        pick(&mut rng, &rules.wall_palette),
        pick(&mut rng, &rules.wall_palette),
    ];

    let n_obst = rng.range_inclusive(rules.obstacles.0 as u64, rules.obstacles.1 as u64) as usize;
    let margin = 0.3;
    let mut obstacles = Vec::with_capacity(n_obst);
    for _ in 0..n_obst {
        let material = pick(&mut rng, &rules.obstacle_palette);
        let w = rng.uniform(0.3, 1.2).min(size.x - 2.0 * margin);
        let d = rng.uniform(0.3, 1.2).min(size.z - 2.0 * margin);
        let h = rng.uniform(0.3, 0.6) * size.y;
        let x = rng.uniform(margin, size.x - margin - w);
        let z = rng.uniform(margin, size.z - margin - d);
        if rng.next_f64() < 0.3 {
            // Free-standing panel, like a room divider.
            let axis = if rng.next_f64() < 0.5 { 0 } else { 2 };
            let at = if axis == 0 { x + w / 2.0 } else { z + d / 2.0 };
            obstacles.push(Obstacle::panel(
                axis,
                at,
                Vec3::new(x, 0.0, z),
                Vec3::new(x + w, h, z + d),
                material,
            ));
        } else {
            obstacles.push(Obstacle {
                bounds: Aabb::new(Vec3::new(x, 0.0, z), Vec3::new(x + w, h, z + d)),
                material,
            });
        }
    }

    let n_lights = rng.range_inclusive(rules.lights.0 as u64, rules.lights.1 as u64) as usize;
    let mut lights = Vec::with_capacity(n_lights);
    for _ in 0..n_lights {
        let spherical = rng.next_f64() < rules.spherical_probability;
        let radius = if spherical {
            rng.uniform(rules.sphere_radius.0, rules.sphere_radius.1)
        } else {
            0.0
        };
        let clearance = radius + 0.05;
        let y = rng.uniform((1.0 - rules.light_band) * size.y, size.y - clearance);
        let x = rng.uniform(margin, size.x - margin);
        let z = rng.uniform(margin, size.z - margin);
        let power = rng.uniform(rules.light_intensity.0, rules.light_intensity.1);
        let mut intensity = [0.0; 3];
        for c in &mut intensity {
            *c = power * (1.0 + rng.uniform(-rules.light_tint, rules.light_tint));
        }
        let position = Vec3::new(x, y, z);
        let kind = if spherical {
            LightKind::Spherical { position, radius }
        } else {
            LightKind::Point { position }
        };
        lights.push(Light { kind, intensity });
    }

    Scene {
        room,
        walls,
        obstacles,
        lights,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let r = SceneRules::default();
        assert_eq!(build_random_scene(7, &r), build_random_scene(7, &r));
        assert_ne!(build_random_scene(7, &r), build_random_scene(8, &r));
    }

    #[test]
    fn single_gray_palette() {
        let s = build_random_scene(3, &SceneRules::single_palette(0.4));
        for m in s.walls.iter().chain(s.obstacles.iter().map(|o| &o.material)) {
            assert_eq!(m.albedo, [0.4; 3]);
            assert_eq!(m.texture, Texture::Solid);
        }
    }

    #[test]
    fn population_statistics() {
        let rules = SceneRules::default();
        let mut seen = [false; 5];
        for seed in 0..100 {
            let s = build_random_scene(seed, &rules);
            s.validate().unwrap();
            assert!((1..=4).contains(&s.obstacles.len()));
            assert!((1..=3).contains(&s.lights.len()));
            seen[s.obstacles.len()] = true;
            let h = s.room.max.y;
            for l in &s.lights {
                let y = l.position().unwrap().y;
                assert!(y >= 0.8 * h && y < h, "light at {y} in room of height {h}");
            }
        }
        assert!(seen[1..].iter().all(|&b| b));
    }

    #[test]
    fn checker_alternates() {
        let m = Material {
            albedo: [1.0; 3],
            texture: Texture::Checker {
                alt: [0.0; 3],
                scale: 1.0,
            },
        };
        assert_eq!(m.albedo_at(Vec3::new(0.5, 0.0, 0.5), 1), [1.0; 3]);
        assert_eq!(m.albedo_at(Vec3::new(1.5, 0.0, 0.5), 1), [0.0; 3]);
        assert_eq!(m.albedo_at(Vec3::new(1.5, 0.0, 1.5), 1), [1.0; 3]);
    }

    #[test]
    fn validate_rejects_bad_scenes() {
        let mut s = build_random_scene(1, &SceneRules::default());
        s.lights.clear();
        assert!(s.validate().is_err());
        let mut s = build_random_scene(1, &SceneRules::default());
        s.lights[0] = Light::point(Vec3::new(-1.0, 1.0, 1.0), [1.0; 3]);
        assert!(s.validate().is_err());
        let mut s = build_random_scene(1, &SceneRules::default());
        s.walls[0] = Material::gray(1.5);
        assert!(s.validate().is_err());
    }
}
