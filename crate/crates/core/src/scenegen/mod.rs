//! Procedural box rooms and a Lambertian path tracer that renders
//! factorized HDR frames: direct radiance, indirect radiance, reflectance,
//! and camera-space geometry.
mod camera;
mod filter;
mod frame;
mod image;
mod math;
mod scene;
mod tracer;

pub use camera::{sample_camera, Camera, CameraBasis};
pub use filter::{filter_viewpoint, ViewFilterConfig, ViewStats};
pub use frame::{compose_global, demodulate_shading, render_frame, FrameRecord, DEMOD_EPSILON};
pub use image::Image;
pub use math::{Aabb, Ray, Vec3};
pub use scene::{build_random_scene, Light, LightKind, Material, Obstacle, Scene, SceneRules, Texture, WALL_COUNT};
pub use tracer::{trace_direct, trace_indirect, DirectBuffers, RenderConfig};
