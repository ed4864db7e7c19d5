use alloc::vec::Vec;

use super::config::GEOMETRY_CHANNELS;
use super::model::NetInputs;
use crate::error::{shape_err, Error, Result};
use crate::scenegen::{FrameRecord, Image};
use crate::Tensor;

/// Stack same-sized images into `[B, C, H, W]`, scaling each by `scale[b]`.
pub fn stack_images(images: &[&Image], scale: Option<&[f32]>) -> Result<Tensor<f32>> {
    let first = images.first().ok_or(Error::EmptyDataset)?;
    let mut data = Vec::with_capacity(images.len() * first.data.len());
    for (b, img) in images.iter().enumerate() {
        if img.dims() != first.dims() {
            return Err(shape_err("stack_images", &first.dims(), &img.dims()));
        }
        match scale {
            Some(s) => data.extend(img.data.iter().map(|v| v * s[b])),
            None => data.extend_from_slice(&img.data),
        }
    }
    Tensor::new(&[images.len(), first.channels, first.height, first.width], data)
}

/// Network geometry input for one frame: normal, depth and position, the
/// latter two divided by the room diagonal. Planar `[7, H, W]`.
pub fn normalized_geometry(frame: &FrameRecord) -> Vec<f32> {
    let inv = (1.0 / frame.scene_diagonal) as f32;
    let mut out = Vec::with_capacity(GEOMETRY_CHANNELS * frame.d.pixels());
    out.extend_from_slice(&frame.n.data);
    out.extend(frame.d.data.iter().map(|v| v * inv));
    out.extend(frame.p.data.iter().map(|v| v * inv));
    out
}

impl NetInputs<f32> {
    /// Inputs for a batch of frames with per-frame exposure multipliers on `L_d`.
    pub fn from_frames(frames: &[&FrameRecord], exposure: Option<&[f32]>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyDataset)?;
        let l_d = stack_images(&frames.iter().map(|f| &f.l_d).collect::<Vec<_>>(), exposure)?;
        let r = stack_images(&frames.iter().map(|f| &f.r).collect::<Vec<_>>(), None)?;
        let mut geo = Vec::with_capacity(frames.len() * GEOMETRY_CHANNELS * first.d.pixels());
        for f in frames {
            geo.extend(normalized_geometry(f));
        }
        let geometry = Tensor::new(&[frames.len(), GEOMETRY_CHANNELS, first.height(), first.width()], geo)?;
        Ok(NetInputs { l_d, r, geometry })
    }
}
