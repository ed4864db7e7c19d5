use crate::error::{invalid, Result};
use crate::numerics::ops::LEAKY_SLOPE;

/// Number of raw geometry channels: normal (3), depth (1), position (3).
pub const GEOMETRY_CHANNELS: usize = 7;
/// Mono generator input channels: compressed direct light and reflectance.
pub const GENERATOR_INPUT_CHANNELS: usize = 2;
/// Discriminator input channels: compressed indirect light, direct light, reflectance.
pub const DISCRIMINATOR_INPUT_CHANNELS: usize = 3;
/// Stride-2 layers in the discriminator; the score map is `H / 16`.
pub const DISCRIMINATOR_DEPTH: usize = 4;

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ModelConfig {
    /// Number of down-sampling steps of the U-net.
    pub levels: usize,
    /// Generator width at full resolution; doubles per level.
    pub base_width: usize,
    /// Geometry encoder width at full resolution; doubles per level.
    pub geometry_width: usize,
    /// Discriminator width of the first layer; doubles per layer.
    pub discriminator_width: usize,
    pub heads: usize,
    pub key_dim: usize,
    pub height: usize,
    pub width: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    /// Geometry-aware attention at the bottleneck; off gives the conv-only ablation.
    pub use_gfa: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            levels: 4,
            base_width: 16,
            geometry_width: 8,
            discriminator_width: 16,
            heads: 8,
            key_dim: 8,
            height: 128,
            width: 128,
            dropout: 0.5,
            leaky_slope: LEAKY_SLOPE,
            use_gfa: true,
        }
    }
}

fn conv_params(k: usize, cin: usize, cout: usize) -> usize {
    k * k * cin * cout + cout
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_width == 0 || self.geometry_width == 0 || self.discriminator_width == 0 {
            return Err(invalid("levels and widths must be positive"));
        }
        let f = 1usize << self.levels;
        if self.height % f != 0 || self.width % f != 0 || self.height == 0 || self.width == 0 {
            return Err(invalid(alloc::format!(
                "resolution {}x{} is not divisible by 2^{}",
                self.width,
                self.height,
                self.levels
            )));
        }
        if self.use_gfa && (self.heads == 0 || self.key_dim == 0) {
            return Err(invalid("attention needs at least one head and key dimension"));
        }
        if self.use_gfa && self.heads * self.key_dim > self.channels(self.levels) {
            return Err(invalid("heads * key_dim exceeds the bottleneck width"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Generator channels at `level`.
    pub fn channels(&self, level: usize) -> usize {
        self.base_width << level
    }

    /// Geometry encoder channels at `level`.
    pub fn geometry_channels(&self, level: usize) -> usize {
        self.geometry_width << level
    }

    /// Channels of the conditioning features (encoded plus raw geometry) at `level`.
    pub fn conditioning_channels(&self, level: usize) -> usize {
        self.geometry_channels(level) + GEOMETRY_CHANNELS
    }

    pub fn discriminator_channels(&self, layer: usize) -> usize {
        self.discriminator_width << layer
    }

    /// Parameters added by one extra attention head.
    pub fn per_head_parameters(&self) -> usize {
        let g = self.conditioning_channels(self.levels);
        let c = self.channels(self.levels);
        2 * (g * self.key_dim + self.key_dim) + (c * c + c) + c * c
    }

    /// Geometry encoder plus shading generator parameter total.
    pub fn generator_parameter_count(&self) -> usize {
        let l = self.levels;
        let mut n = conv_params(3, GEOMETRY_CHANNELS, self.geometry_channels(0));
        for i in 1..=l {
            n += conv_params(3, self.geometry_channels(i - 1), self.geometry_channels(i));
        }
        n += conv_params(3, GENERATOR_INPUT_CHANNELS, self.channels(0));
        for i in 1..=l {
            n += conv_params(3, self.channels(i - 1), self.channels(i));
            n += conv_params(3, self.channels(i), self.channels(i));
        }
        n += conv_params(3, self.channels(l), self.channels(l));
        for i in 0..=l {
            n += 2 * conv_params(1, self.conditioning_channels(i), self.channels(i));
        }
        if self.use_gfa {
            n += self.heads * self.per_head_parameters();
        }
        for i in 0..l {
            n += conv_params(3, self.channels(i + 1), self.channels(i));
            n += conv_params(3, 2 * self.channels(i), self.channels(i));
        }
        n + conv_params(3, self.channels(0), 1)
    }

    pub fn discriminator_parameter_count(&self) -> usize {
        let mut n = conv_params(3, DISCRIMINATOR_INPUT_CHANNELS, self.discriminator_channels(0));
        for i in 1..DISCRIMINATOR_DEPTH {
            n += conv_params(3, self.discriminator_channels(i - 1), self.discriminator_channels(i));
        }
        n + conv_params(3, self.discriminator_channels(DISCRIMINATOR_DEPTH - 1), 1)
    }
}
