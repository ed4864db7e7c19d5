use super::camera::Camera;
use super::scene::Scene;
use super::tracer::primary_hits;

/// Depth-statistics thresholds for rejecting uninformative viewpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ViewFilterConfig {
    /// Minimum mean depth in meters.
    pub min_mean_depth: f64,
    /// Minimum depth variance in square meters.
    pub min_depth_var: f64,
    /// Maximum fraction of escaped or back-facing probe rays.
    pub max_dark_fraction: f64,
    /// Probe resolution (square).
    pub probe_size: usize,
}

impl Default for ViewFilterConfig {
    fn default() -> Self {
        ViewFilterConfig {
            min_mean_depth: 0.8,
            min_depth_var: 0.05,
            max_dark_fraction: 0.10,
            probe_size: 32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewStats {
    pub mean_depth: f64,
    pub depth_var: f64,
    pub dark_fraction: f64,
    pub accepted: bool,
}

/// Render a primary-ray depth probe and test it against `cfg`.
///
/// A degenerate camera is rejected with all statistics zero.
pub fn filter_viewpoint(camera: &Camera, scene: &Scene, cfg: &ViewFilterConfig) -> ViewStats {
    let s = cfg.probe_size.max(1);
    let rejected = ViewStats {
        mean_depth: 0.0,
        depth_var: 0.0,
        dark_fraction: 1.0,
        accepted: false,
    };
    let Ok(basis) = camera.with_resolution(s, s).basis() else {
        return rejected;
    };
    let hits = primary_hits(scene, &basis, s, s);
    let mut depths = alloc::vec::Vec::with_capacity(hits.len());
    for h in &hits {
        if let Some(hit) = h.hit {
            if !hit.backface {
                depths.push(basis.dir_to_camera(hit.point - basis.origin).z);
            }
        }
    }
    let dark_fraction = 1.0 - depths.len() as f64 / hits.len() as f64;
    if depths.is_empty() {
        return rejected;
    }
    let n = depths.len() as f64;
    let mean = depths.iter().sum::<f64>() / n;
    let var = depths.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    ViewStats {
        mean_depth: mean,
        depth_var: var,
        dark_fraction,
        accepted: mean >= cfg.min_mean_depth && var >= cfg.min_depth_var && dark_fraction <= cfg.max_dark_fraction,
    }
}
