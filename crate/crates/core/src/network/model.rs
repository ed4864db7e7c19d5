use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use super::config::*;
use crate::error::{shape_err, Result};
use crate::numerics::ops::*;
use crate::numerics::{xavier_values, Bound, ParamStore, Rng, Scalar, Tensor};

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Conditioning features `f̂_g` per level: encoded geometry concatenated
/// with the raw geometry down-sampled to the same size, `[B, G_l, H/2^l, W/2^l]`.
#[derive(Clone, Debug)]
pub struct GeometryFeatures<T: Scalar> {
    pub levels: Vec<Tensor<T>>,
}

/// Batched network inputs, all `[B, C, H, W]`.
#[derive(Clone, Debug)]
pub struct NetInputs<T: Scalar> {
    /// Direct light, RGB.
    pub l_d: Tensor<T>,
    /// Reflectance, RGB.
    pub r: Tensor<T>,
    /// Normalized geometry: normal, depth, position.
    pub geometry: Tensor<T>,
}

/// Network outputs, all `[B, 3, H, W]`.
#[derive(Clone, Debug)]
pub struct Prediction<T: Scalar> {
    pub s_ind: Tensor<T>,
    pub l_ind: Tensor<T>,
    pub l: Tensor<T>,
}

fn conv<T: Scalar>(p: &Bound<T>, name: &str, x: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let w = p.get(&format!("{name}.w"));
    let k = w.shape()[2];
    conv2d(x, w, p.try_get(&format!("{name}.b")), stride, k / 2)
}

/// `x [n*B, C, h, w] (op) y [B, C, h, w]`, sharing `y` across the `n` mono channels of each frame.
fn per_frame<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    op: fn(&Tensor<T>, &Tensor<T>) -> Result<Tensor<T>>,
) -> Result<Tensor<T>> {
    let (xs, ys) = (x.shape(), y.shape());
    if xs.len() != 4 || ys.len() != 4 || xs[1..] != ys[1..] || ys[0] == 0 || xs[0] % ys[0] != 0 {
        return Err(shape_err("per_frame", xs, ys));
    }
    let b = ys[0];
    let n = xs[0] / b;
    let xr = reshape(x, &[b, n, xs[1], xs[2], xs[3]])?;
    let yr = reshape(y, &[b, 1, ys[1], ys[2], ys[3]])?;
    reshape(&op(&xr, &yr)?, xs)
}

/// Geometry-conditioned shading network and its discriminator.
#[derive(Debug)]
pub struct Network {
    config: ModelConfig,
    encoder_calls: Cell<usize>,
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Network {
            config,
            encoder_calls: Cell::new(0),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Number of `encode_geometry` calls so far.
    pub fn encoder_calls(&self) -> usize {
        self.encoder_calls.get()
    }

    fn slope<T: Scalar>(&self) -> T {
        T::from_f64(self.config.leaky_slope)
    }

    fn act<T: Scalar>(&self, x: &Tensor<T>) -> Tensor<T> {
        leaky_relu(x, self.slope())
    }

    /// Xavier-initialized geometry encoder and generator parameters.
    pub fn init_generator<T: Scalar>(&self, seed: u64) -> ParamStore<T> {
        let c = &self.config;
        let l = c.levels;
        let mut rng = Rng::derive(seed, &[0x6E4]);
        let mut store = ParamStore::new();
        let mut add_conv = |store: &mut ParamStore<T>, name: &str, k: usize, cin: usize, cout: usize, bias: Option<f64>| {
            let shape = [cout, cin, k, k];
            store
                .insert(&format!("{name}.w"), &shape, xavier_values(&shape, &mut rng))
                .expect("unique parameter names");
            if let Some(b) = bias {
                store
                    .insert(&format!("{name}.b"), &[cout], vec![T::from_f64(b); cout])
                    .expect("unique parameter names");
            }
        };
        add_conv(&mut store, "geo.l0", 3, GEOMETRY_CHANNELS, c.geometry_channels(0), Some(0.0));
        for i in 1..=l {
            add_conv(&mut store, &format!("geo.l{i}"), 3, c.geometry_channels(i - 1), c.geometry_channels(i), Some(0.0));
        }
        add_conv(&mut store, "gen.enc0", 3, GENERATOR_INPUT_CHANNELS, c.channels(0), Some(0.0));
        for i in 1..=l {
            add_conv(&mut store, &format!("gen.enc{i}.down"), 3, c.channels(i - 1), c.channels(i), Some(0.0));
            add_conv(&mut store, &format!("gen.enc{i}.conv"), 3, c.channels(i), c.channels(i), Some(0.0));
        }
        add_conv(&mut store, "gen.bottleneck", 3, c.channels(l), c.channels(l), Some(0.0));
        for i in 0..=l {
            add_conv(&mut store, &format!("gen.gcm{i}.gamma"), 1, c.conditioning_channels(i), c.channels(i), Some(1.0));
            add_conv(&mut store, &format!("gen.gcm{i}.beta"), 1, c.conditioning_channels(i), c.channels(i), Some(0.0));
        }
        if c.use_gfa {
            let (g, ch, hk) = (c.conditioning_channels(l), c.channels(l), c.heads * c.key_dim);
            add_conv(&mut store, "gen.gfa.q", 1, g, hk, Some(0.0));
            add_conv(&mut store, "gen.gfa.k", 1, g, hk, Some(0.0));
            add_conv(&mut store, "gen.gfa.v", 1, ch, c.heads * ch, Some(0.0));
            add_conv(&mut store, "gen.gfa.merge", 1, c.heads * ch, ch, None);
        }
        for i in (0..l).rev() {
            add_conv(&mut store, &format!("gen.dec{i}.up"), 3, c.channels(i + 1), c.channels(i), Some(0.0));
            add_conv(&mut store, &format!("gen.dec{i}.conv"), 3, 2 * c.channels(i), c.channels(i), Some(0.0));
        }
        add_conv(&mut store, "gen.out", 3, c.channels(0), 1, Some(0.0));
        store
    }

    pub fn init_discriminator<T: Scalar>(&self, seed: u64) -> ParamStore<T> {
        let c = &self.config;
        let mut rng = Rng::derive(seed, &[0xD15C]);
        let mut store = ParamStore::new();
        let mut cin = DISCRIMINATOR_INPUT_CHANNELS;
        for i in 0..=DISCRIMINATOR_DEPTH {
            let cout = if i == DISCRIMINATOR_DEPTH { 1 } else { c.discriminator_channels(i) };
            let shape = [cout, cin, 3, 3];
            let name = if i == DISCRIMINATOR_DEPTH { String::from("disc.out") } else { format!("disc.l{i}") };
            store
                .insert(&format!("{name}.w"), &shape, xavier_values(&shape, &mut rng))
                .expect("unique parameter names");
            store.insert(&format!("{name}.b"), &[cout], vec![T::ZERO; cout]).expect("unique parameter names");
            cin = cout;
        }
        store
    }

    fn check_input<T: Scalar>(&self, name: &'static str, x: &Tensor<T>, channels: usize) -> Result<()> {
        let s = x.shape();
        let f = 1usize << self.config.levels;
        if s.len() != 4 || s[1] != channels || s[2] % f != 0 || s[3] % f != 0 || s[2] == 0 || s[3] == 0 {
            return Err(shape_err(name, s, &[s.first().copied().unwrap_or(0), channels, f, f]));
        }
        Ok(())
    }

    /// Encode normalized geometry `[B, 7, H, W]` into per-level conditioning features.
    pub fn encode_geometry<T: Scalar>(&self, p: &Bound<T>, geometry: &Tensor<T>) -> Result<GeometryFeatures<T>> {
        self.check_input("encode_geometry", geometry, GEOMETRY_CHANNELS)?;
        self.encoder_calls.set(self.encoder_calls.get() + 1);
        let mut levels = Vec::with_capacity(self.config.levels + 1);
        let mut f = self.act(&conv(p, "geo.l0", geometry, 1)?);
        let mut raw = geometry.clone();
        levels.push(concat(&[&f, &raw], 1)?);
        for i in 1..=self.config.levels {
            f = self.act(&conv(p, &format!("geo.l{i}"), &f, 2)?);
            raw = avg_pool2x(&raw)?;
            levels.push(concat(&[&f, &raw], 1)?);
        }
        Ok(GeometryFeatures { levels })
    }

    /// `γ(f̂_g) ⊗ x ⊕ β(f̂_g)` with `x [n*B, C, h, w]` and conditioning `fg [B, G, h, w]`.
    pub fn gcm_modulate<T: Scalar>(&self, p: &Bound<T>, level: usize, x: &Tensor<T>, fg: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 4 || fg.rank() != 4 || x.shape()[2..] != fg.shape()[2..] {
            return Err(shape_err("gcm_modulate", x.shape(), fg.shape()));
        }
        let gamma = conv(p, &format!("gen.gcm{level}.gamma"), fg, 1)?;
        let beta = conv(p, &format!("gen.gcm{level}.beta"), fg, 1)?;
        let scaled = per_frame(x, &gamma, mul)?;
        per_frame(&scaled, &beta, add)
    }

    /// Attention weights `[B, h, n, n]` from bottleneck conditioning `[B, G, h', w']`;
    /// entry `[b, k, i, j]` is `Attn_k(j | i)`, each row sums to one.
    pub fn gfa_weights<T: Scalar>(&self, p: &Bound<T>, fg: &Tensor<T>) -> Result<Tensor<T>> {
        let s = fg.shape();
        if s.len() != 4 {
            return Err(shape_err("gfa_weights", s, &[0, 0, 0, 0]));
        }
        let (b, n) = (s[0], s[2] * s[3]);
        let (h, dk) = (self.config.heads, self.config.key_dim);
        let q = reshape(&conv(p, "gen.gfa.q", fg, 1)?, &[b, h, dk, n])?;
        let k = reshape(&conv(p, "gen.gfa.k", fg, 1)?, &[b, h, dk, n])?;
        let qt = permute(&q, &[0, 1, 3, 2])?;
        let logits = scale(&matmul(&qt, &k)?, T::from_f64(1.0 / libm::sqrt(dk as f64)));
        softmax(&logits, 3)
    }

    /// `x̂ = x + merge(concat_k Σ_j V_k(x^j) Attn_k(j|i))` for `x [n*B, C, h, w]`.
    pub fn gfa_aggregate<T: Scalar>(&self, p: &Bound<T>, x: &Tensor<T>, attn: &Tensor<T>) -> Result<Tensor<T>> {
        let (xs, a) = (x.shape(), attn.shape());
        let heads = self.config.heads;
        if xs.len() != 4 || a.len() != 4 || a[1] != heads || a[2] != xs[2] * xs[3] || a[3] != a[2] || a[0] == 0 || xs[0] % a[0] != 0 {
            return Err(shape_err("gfa_aggregate", xs, a));
        }
        let (b, n) = (a[0], a[2]);
        let per = xs[0] / b;
        let c = xs[1];
        let v = reshape(&conv(p, "gen.gfa.v", x, 1)?, &[b, per, heads, c, n])?;
        let at = reshape(&permute(attn, &[0, 1, 3, 2])?, &[b, 1, heads, n, n])?;
        let agg = reshape(&matmul(&v, &at)?, &[xs[0], heads * c, xs[2], xs[3]])?;
        add(x, &conv(p, "gen.gfa.merge", &agg, 1)?)
    }

    /// Mono shading generator on `[n*B, 2, H, W]` inputs (compressed direct
    /// light, reflectance); returns strictly positive shading `[n*B, 1, H, W]`.
    pub fn generator_forward<T: Scalar>(
        &self,
        p: &Bound<T>,
        x: &Tensor<T>,
        fg: &GeometryFeatures<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Tensor<T>> {
        let c = &self.config;
        let l = c.levels;
        self.check_input("generator_forward", x, GENERATOR_INPUT_CHANNELS)?;
        if fg.levels.len() != l + 1 || fg.levels[0].shape()[2..] != x.shape()[2..] {
            return Err(shape_err("generator_forward", x.shape(), fg.levels[0].shape()));
        }
        let train = mode == Mode::Train;
        let mut skips = Vec::with_capacity(l + 1);
        let mut h = self.act(&conv(p, "gen.enc0", x, 1)?);
        skips.push(h.clone());
        for i in 1..=l {
            h = self.act(&conv(p, &format!("gen.enc{i}.down"), &h, 2)?);
            h = self.act(&conv(p, &format!("gen.enc{i}.conv"), &h, 1)?);
            skips.push(h.clone());
        }
        h = conv(p, "gen.bottleneck", &h, 1)?;
        h = self.act(&self.gcm_modulate(p, l, &h, &fg.levels[l])?);
        if c.use_gfa {
            let attn = self.gfa_weights(p, &fg.levels[l])?;
            h = self.gfa_aggregate(p, &h, &attn)?;
        }
        for i in (0..l).rev() {
            h = self.act(&upsample_conv(&h, p.get(&format!("gen.dec{i}.up.w")), Some(p.get(&format!("gen.dec{i}.up.b"))))?);
            if i >= 1 {
                h = dropout(&h, c.dropout, rng, train)?;
            }
            h = concat(&[&h, &skips[i]], 1)?;
            h = conv(p, &format!("gen.dec{i}.conv"), &h, 1)?;
            h = self.act(&self.gcm_modulate(p, i, &h, &fg.levels[i])?);
        }
        Ok(exp_activation(&conv(p, "gen.out", &h, 1)?))
    }

    /// Predict indirect shading and radiance for RGB frames. Geometry is
    /// encoded once and shared by the three weight-shared channel passes.
    pub fn predict_indirect<T: Scalar>(
        &self,
        p: &Bound<T>,
        inputs: &NetInputs<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Prediction<T>> {
        let s = inputs.l_d.shape().to_vec();
        if s.len() != 4 || s[1] != 3 || inputs.r.shape() != s.as_slice() {
            return Err(shape_err("predict_indirect", &s, inputs.r.shape()));
        }
        if inputs.geometry.shape() != [s[0], GEOMETRY_CHANNELS, s[2], s[3]] {
            return Err(shape_err("predict_indirect", &s, inputs.geometry.shape()));
        }
        let fg = self.encode_geometry(p, &inputs.geometry)?;
        let mono = [3 * s[0], 1, s[2], s[3]];
        let ld = reshape(&inputs.l_d, &mono)?;
        let r = reshape(&inputs.r, &mono)?;
        let x = concat(&[&log1p(&ld), &r], 1)?;
        let s_mono = self.generator_forward(p, &x, &fg, mode, rng)?;
        let s_ind = reshape(&s_mono, &s)?;
        let l_ind = mul(&inputs.r, &s_ind)?;
        let l = add(&inputs.l_d, &l_ind)?;
        Ok(Prediction { s_ind, l_ind, l })
    }

    /// Discriminator input for each mono channel: `[log1p(L_ind_c), log1p(L_d_c), R_c]`
    /// as `[3B, 3, H, W]`.
    pub fn discriminator_input<T: Scalar>(&self, l_ind: &Tensor<T>, l_d: &Tensor<T>, r: &Tensor<T>) -> Result<Tensor<T>> {
        let s = l_ind.shape();
        if s.len() != 4 || l_d.shape() != s || r.shape() != s {
            return Err(shape_err("discriminator_input", s, l_d.shape()));
        }
        let mono = [s[0] * s[1], 1, s[2], s[3]];
        let parts = [
            log1p(&reshape(l_ind, &mono)?),
            log1p(&reshape(l_d, &mono)?),
            reshape(r, &mono)?,
        ];
        concat(&[&parts[0], &parts[1], &parts[2]], 1)
    }

    /// PatchGAN realness logits `[N, 1, H/16, W/16]`.
    pub fn discriminator_forward<T: Scalar>(&self, p: &Bound<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 4 || x.shape()[1] != DISCRIMINATOR_INPUT_CHANNELS {
            return Err(shape_err("discriminator_forward", x.shape(), &[0, DISCRIMINATOR_INPUT_CHANNELS, 0, 0]));
        }
        let mut h = x.clone();
        for i in 0..DISCRIMINATOR_DEPTH {
            h = self.act(&conv(p, &format!("disc.l{i}"), &h, 2)?);
        }
        conv(p, "disc.out", &h, 1)
    }
}
