use super::camera::Camera;
use super::image::Image;
use super::scene::Scene;
use super::tracer::{direct_from_hits, indirect_from_hits, primary_hits, RenderConfig};
use crate::error::Result;

/// Guard below which reflectance is treated as zero when demodulating.
pub const DEMOD_EPSILON: f32 = 1e-3;

/// One rendered viewpoint with its factorized buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    /// Direct outgoing radiance, RGB.
    pub l_d: Image,
    /// Indirect outgoing radiance, RGB (ground truth).
    pub l_ind: Image,
    /// Reflectance at the first hit, RGB.
    pub r: Image,
    /// Unit normals in camera space.
    pub n: Image,
    /// Depth along the view axis in meters; zero where nothing was hit.
    pub d: Image,
    /// Camera-space positions in meters.
    pub p: Image,
    /// Demodulated indirect shading, RGB.
    pub s_ind: Image,
    pub camera: Camera,
    pub scene_seed: u64,
    pub render_seed: u64,
    pub spp: usize,
    /// Room diagonal in meters, used to normalize D and P.
    pub scene_diagonal: f64,
}

impl FrameRecord {
    pub fn width(&self) -> usize {
        self.l_d.width
    }

    pub fn height(&self) -> usize {
        self.l_d.height
    }

    /// `L_d + L_ind`.
    pub fn global(&self) -> Image {
        let mut out = self.l_d.clone();
        for (o, v) in out.data.iter_mut().zip(&self.l_ind.data) {
            *o += v;
        }
        out
    }

    pub fn buffers(&self) -> [(&'static str, &Image); 7] {
        [
            ("l_d", &self.l_d),
            ("l_ind", &self.l_ind),
            ("r", &self.r),
            ("n", &self.n),
            ("d", &self.d),
            ("p", &self.p),
            ("s_ind", &self.s_ind),
        ]
    }
}

/// `S = L_ind / R` where `R >= eps`, else 0.
pub fn demodulate_shading(l_ind: &Image, r: &Image, eps: f32) -> Result<Image> {
    l_ind.check_same("demodulate_shading", r)?;
    let mut out = l_ind.clone();
    for (s, &rv) in out.data.iter_mut().zip(&r.data) {
        *s = if rv >= eps { *s / rv } else { 0.0 };
    }
    Ok(out)
}

/// `L = L_d + R * S_ind`.
pub fn compose_global(l_d: &Image, r: &Image, s_ind: &Image) -> Result<Image> {
    l_d.check_same("compose_global", r)?;
    l_d.check_same("compose_global", s_ind)?;
    let mut out = l_d.clone();
    for ((o, &rv), &sv) in out.data.iter_mut().zip(&r.data).zip(&s_ind.data) {
        *o += rv * sv;
    }
    Ok(out)
}

/// Render every buffer for an accepted viewpoint. Deterministic per
/// `(scene.seed, camera, render_seed)`.
pub fn render_frame(scene: &Scene, camera: &Camera, cfg: &RenderConfig, render_seed: u64) -> Result<FrameRecord> {
    let (w, h) = (camera.width, camera.height);
    let basis = camera.basis()?;
    let hits = primary_hits(scene, &basis, w, h);
    let direct = direct_from_hits(scene, &basis, &hits, w, h, cfg.sphere_samples);
    let l_ind = indirect_from_hits(scene, &hits, w, h, cfg.spp, cfg.max_bounces, render_seed);
    let s_ind = demodulate_shading(&l_ind, &direct.r, cfg.epsilon)?;
    Ok(FrameRecord {
        l_d: direct.l_d,
        l_ind,
        r: direct.r,
        n: direct.n,
        d: direct.d,
        p: direct.p,
        s_ind,
        camera: *camera,
        scene_seed: scene.seed,
        render_seed,
        spp: cfg.spp,
        scene_diagonal: scene.diagonal(),
    })
}
