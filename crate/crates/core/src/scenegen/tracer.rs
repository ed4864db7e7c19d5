use alloc::vec::Vec;
use core::f64::consts::PI;

use super::camera::{Camera, CameraBasis};
use super::image::Image;
use super::math::{onb, Ray, Vec3};
use super::scene::{LightKind, Scene};
use crate::error::Result;
use crate::numerics::{map_indexed, Rng};

/// Shadow-ray origins are pushed this far off the surface.
const RAY_OFFSET: f64 = 1e-6;
const STREAM_DIRECT: u64 = 0xD1;
const STREAM_INDIRECT: u64 = 0x1D;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Hit {
    pub point: Vec3,
    /// Normal of the surface on the side the ray arrived from (front face only).
    pub normal: Vec3,
    pub albedo: [f64; 3],
    /// The ray struck the inside of a solid or the outside of the shell.
    pub backface: bool,
}

fn axis_normal(axis: usize, sign: f64) -> Vec3 {
    Vec3::ZERO.with_axis(axis, sign)
}

/// Closest surface along `ray` with `t < t_max`. Lights are not intersectable.
pub(crate) fn intersect(scene: &Scene, ray: &Ray, t_max: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut limit = t_max;
    if let Some(h) = scene.room.slab(ray, 0.0, limit) {
        let outward = if h.max_side { 1.0 } else { -1.0 };
        let face = 2 * h.axis + h.max_side as usize;
        let point = ray.at(h.t);
        limit = h.t;
        best = Some(Hit {
            point,
            normal: axis_normal(h.axis, -outward),
            albedo: scene.walls[face].albedo_at(point, h.axis),
            backface: !h.from_inside,
        });
    }
    for o in &scene.obstacles {
        if let Some(h) = o.bounds.slab(ray, 0.0, limit) {
            let outward = if h.max_side { 1.0 } else { -1.0 };
            let point = ray.at(h.t);
            limit = h.t;
            best = Some(Hit {
                    point,
                normal: axis_normal(h.axis, outward),
                albedo: o.material.albedo_at(point, h.axis),
                backface: h.from_inside,
            });
        }
    }
    best
}

fn visible(scene: &Scene, from: Vec3, n: Vec3, dir: Vec3, dist: f64) -> bool {
    let ray = Ray {
        origin: from + n * RAY_OFFSET,
        dir,
    };
    intersect(scene, &ray, dist).is_none()
}

/// How spherical lights are sampled during next-event estimation.
#[derive(Clone, Copy, Debug)]
enum SphereSampling {
    Stratified(usize),
    Single,
}

/// Direct outgoing radiance of a Lambertian point `x` (direction independent).
fn direct_radiance(scene: &Scene, x: Vec3, n: Vec3, rho: [f64; 3], sampling: SphereSampling, rng: &mut Rng) -> [f64; 3] {
    let mut out = [0.0; 3];
    if rho == [0.0; 3] {
        return out;
    }
    for light in &scene.lights {
        // Scalar geometric factor multiplying I * rho / pi.
        let g = match light.kind {
            LightKind::Point { position } => {
                let w = position - x;
                let d2 = w.dot(w);
                let d = libm::sqrt(d2);
                let wn = w * (1.0 / d);
                let cos = n.dot(wn);
                if cos <= 0.0 || !visible(scene, x, n, wn, d * (1.0 - 1e-9)) {
                    0.0
                } else {
                    cos / d2
                }
            }
            LightKind::Directional { direction } => {
                let wn = direction.normalized();
                let cos = n.dot(wn);
                if cos <= 0.0 || !visible(scene, x, n, wn, f64::INFINITY) {
                    0.0
                } else {
                    cos
                }
            }
            LightKind::Spherical { position, radius } => {
                let count = match sampling {
                    SphereSampling::Stratified(k) => k.max(1),
                    SphereSampling::Single => 1,
                };
                let mut acc = 0.0;
                for i in 0..count {
                    // Uniform area sampling, stratified in z.
                    let z = 1.0 - 2.0 * (i as f64 + rng.next_f64()) / count as f64;
                    let phi = 2.0 * PI * rng.next_f64();
                    let s = libm::sqrt((1.0 - z * z).max(0.0));
                    let ny = Vec3::new(s * libm::cos(phi), s * libm::sin(phi), z);
                    let y = position + ny * radius;
                    let w = y - x;
                    let d2 = w.dot(w);
                    let d = libm::sqrt(d2);
                    let wn = w * (1.0 / d);
                    let cos_x = n.dot(wn);
                    let cos_y = -ny.dot(wn);
                    if cos_x <= 0.0 || cos_y <= 0.0 {
                        continue;
                    }
                    if visible(scene, x, n, wn, d * (1.0 - 1e-9)) {
                        // pdf 1 / (4 pi r^2), radiance I / (pi r^2).
                        acc += 4.0 * cos_x * cos_y / d2;
                    }
                }
                acc / count as f64
            }
        };
        if g > 0.0 {
            for c in 0..3 {
                out[c] += rho[c] / PI * light.intensity[c] * g;
            }
        }
    }
    out
}

fn cosine_sample(n: Vec3, rng: &mut Rng) -> Vec3 {
    let u1 = rng.next_f64();
    let u2 = rng.next_f64();
    let r = libm::sqrt(u1);
    let phi = 2.0 * PI * u2;
    let (t, b) = onb(n);
    (t * (r * libm::cos(phi)) + b * (r * libm::sin(phi)) + n * libm::sqrt((1.0 - u1).max(0.0))).normalized()
}

/// Tracer settings.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RenderConfig {
    pub spp: usize,
    /// Maximum number of intermediate surface interactions on an indirect path.
    pub max_bounces: usize,
    /// Stratified samples per spherical light for the direct term.
    pub sphere_samples: usize,
    /// Demodulation guard.
    pub epsilon: f32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            spp: 256,
            max_bounces: 4,
            sphere_samples: 16,
            epsilon: super::DEMOD_EPSILON,
        }
    }
}

/// First-hit data for one pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Primary {
    pub hit: Option<Hit>,
}

pub(crate) fn primary_hits(scene: &Scene, basis: &CameraBasis, w: usize, h: usize) -> Vec<Primary> {
    map_indexed(w * h, |i| {
        let ray = basis.ray(i % w, i / w);
        Primary {
            hit: intersect(scene, &ray, f64::INFINITY),
        }
    })
}

/// Direct-lighting pass: radiance and geometry buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectBuffers {
    pub l_d: Image,
    pub r: Image,
    pub n: Image,
    pub d: Image,
    pub p: Image,
}

pub(crate) fn direct_from_hits(
    scene: &Scene,
    basis: &CameraBasis,
    hits: &[Primary],
    w: usize,
    h: usize,
    sphere_samples: usize,
) -> DirectBuffers {
    let per_pixel = map_indexed(w * h, |i| {
        let hit = match hits[i].hit {
            Some(hit) if !hit.backface => hit,
            _ => return None,
        };
        let mut rng = Rng::derive(scene.seed, &[STREAM_DIRECT, i as u64]);
        let ld = direct_radiance(
            scene,
            hit.point,
            hit.normal,
            hit.albedo,
            SphereSampling::Stratified(sphere_samples),
            &mut rng,
        );
        Some((ld, hit))
    });
    let mut out = DirectBuffers {
        l_d: Image::zeros(w, h, 3),
        r: Image::zeros(w, h, 3),
        n: Image::zeros(w, h, 3),
        d: Image::zeros(w, h, 1),
        p: Image::zeros(w, h, 3),
    };
    for (i, px) in per_pixel.into_iter().enumerate() {
        let Some((ld, hit)) = px else { continue };
        let (x, y) = (i % w, i / w);
        let nc = basis.dir_to_camera(hit.normal);
        let pc = basis.point_to_camera(hit.point);
        for c in 0..3 {
            out.l_d.set(c, y, x, ld[c] as f32);
            out.r.set(c, y, x, hit.albedo[c] as f32);
            out.n.set(c, y, x, nc[c] as f32);
            out.p.set(c, y, x, pc[c] as f32);
        }
        out.d.set(0, y, x, pc.z as f32);
    }
    out
}

/// Direct radiance and G-buffer from primary rays through pixel centres.
///
/// Escaped rays and back-face hits leave every buffer at zero.
pub fn trace_direct(scene: &Scene, camera: &Camera, width: usize, height: usize) -> Result<DirectBuffers> {
    let cam = camera.with_resolution(width, height);
    let basis = cam.basis()?;
    let hits = primary_hits(scene, &basis, width, height);
    Ok(direct_from_hits(scene, &basis, &hits, width, height, RenderConfig::default().sphere_samples))
}

pub(crate) fn indirect_from_hits(
    scene: &Scene,
    hits: &[Primary],
    w: usize,
    h: usize,
    spp: usize,
    max_bounces: usize,
    seed: u64,
) -> Image {
    let per_pixel = map_indexed(w * h, |i| {
        let hit = match hits[i].hit {
            Some(hit) if !hit.backface => hit,
            _ => return [0.0; 3],
        };
        let mut rng = Rng::derive(seed, &[STREAM_INDIRECT, i as u64]);
        let mut sum = [0.0f64; 3];
        for _ in 0..spp.max(1) {
            let mut beta = hit.albedo;
            let (mut x, mut n) = (hit.point, hit.normal);
            for _ in 0..max_bounces {
                if beta == [0.0; 3] {
                    break;
                }
                let dir = cosine_sample(n, &mut rng);
                let ray = Ray {
                    origin: x + n * RAY_OFFSET,
                    dir,
                };
                let next = match intersect(scene, &ray, f64::INFINITY) {
                    Some(nh) if !nh.backface => nh,
                    _ => break,
                };
                let ld = direct_radiance(scene, next.point, next.normal, next.albedo, SphereSampling::Single, &mut rng);
                for c in 0..3 {
                    sum[c] += beta[c] * ld[c];
                    beta[c] *= next.albedo[c];
                }
                x = next.point;
                n = next.normal;
            }
        }
        let inv = 1.0 / spp.max(1) as f64;
        [sum[0] * inv, sum[1] * inv, sum[2] * inv]
    });
    let mut out = Image::zeros(w, h, 3);
    for (i, v) in per_pixel.iter().enumerate() {
        for c in 0..3 {
            out.set(c, i / w, i % w, v[c] as f32);
        }
    }
    out
}

/// Indirect radiance by path tracing with next-event estimation at every
/// vertex after the first and cosine-weighted bounces.
///
/// Each pixel draws from its own stream of `seed`, so the result does not
/// depend on scheduling.
pub fn trace_indirect(
    scene: &Scene,
    camera: &Camera,
    width: usize,
    height: usize,
    spp: usize,
    max_bounces: usize,
    seed: u64,
) -> Result<Image> {
    let cam = camera.with_resolution(width, height);
    let basis = cam.basis()?;
    let hits = primary_hits(scene, &basis, width, height);
    Ok(indirect_from_hits(scene, &hits, width, height, spp, max_bounces, seed))
}
