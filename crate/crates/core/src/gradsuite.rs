//! Finite-difference check of every differentiable op, the network blocks,
//! the losses and a full toy generator.
use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::network::{Mode, ModelConfig, NetInputs, Network, GEOMETRY_CHANNELS};
use crate::numerics::ops;
use crate::numerics::{faulty_identity, grad_check, grad_check_single, Bound, GradCheckConfig, GradCheckReport, ParamStore, Rng, Scalar, Tensor};
use crate::objective::{adversarial_losses, content_loss, perceptual_loss, FrozenFeatureExtractor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    /// 64-bit arithmetic, relative error up to 1e-4.
    Double,
    /// 32-bit backward rules checked against 64-bit differences, relative error up to 1e-2.
    Single,
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    /// Random instances per op.
    pub seeds: u64,
    pub precision: Precision,
    /// Include the full toy generator (the slowest case).
    pub full_generator: bool,
    /// Add a deliberately wrong backward rule as a negative control.
    pub inject_fault: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seeds: 3,
            precision: Precision::Double,
            full_generator: true,
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteCase {
    pub name: String,
    pub report: GradCheckReport,
}

type Loss<T> = Box<dyn Fn(&[Tensor<T>]) -> Result<Tensor<T>>>;
type Case<T> = (String, Loss<T>, Vec<(String, Tensor<T>)>);

/// Values in `±[0.1, 1]`, away from the kinks of abs, leaky ReLU and smooth L1.
fn random<T: Scalar>(shape: &[usize], rng: &mut Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.uniform(0.1, 1.0);
            T::from_f64(if rng.next_f64() < 0.5 { -v } else { v })
        })
        .collect();
    Tensor::new(shape, data).expect("shape matches")
}

fn op_cases<T: Scalar>(seed: u64) -> Vec<Case<T>> {
    let mut rng = Rng::new(seed, 0x6C);
    let c = rng.range_inclusive(1, 3) as usize;
    let h = 2 * rng.range_inclusive(1, 3) as usize;
    let w = 2 * rng.range_inclusive(1, 3) as usize;
    let x = random::<T>(&[2, c, h, w], &mut rng);
    let kern = random::<T>(&[2, c, 3, 3], &mut rng);
    let bias = random::<T>(&[2], &mut rng);
    let proj = random::<T>(&[2, 2, 2 * h, 2 * w], &mut rng);
    let target = random::<T>(&[2, c, h, w], &mut rng);
    let half = T::from_f64(0.5);
    let case = |name: &str, f: Loss<T>, inputs: Vec<(&str, Tensor<T>)>| {
        let inputs = inputs.into_iter().map(|(n, t)| (n.to_string(), t)).collect();
        (name.to_string(), f, inputs)
    };
    vec![
        case(
            "conv2d",
            Box::new(|a| Ok(ops::sum(&ops::square(&ops::conv2d(&a[0], &a[1], Some(&a[2]), 1, 1)?)))),
            vec![("x", x.clone()), ("w", kern.clone()), ("b", bias.clone())],
        ),
        case(
            "conv2d_stride2",
            Box::new(|a| Ok(ops::sum(&ops::square(&ops::conv2d(&a[0], &a[1], None, 2, 1)?)))),
            vec![("x", x.clone()), ("w", kern.clone())],
        ),
        case(
            "upsample_conv",
            Box::new(move |a| Ok(ops::sum(&ops::mul(&ops::upsample_conv(&a[0], &a[1], Some(&a[2]))?, &proj)?))),
            vec![("x", x.clone()), ("w", kern.clone()), ("b", bias.clone())],
        ),
        case(
            "leaky_relu",
            Box::new(move |a| Ok(ops::sum(&ops::square(&ops::leaky_relu(&a[0], half))))),
            vec![("x", x.clone())],
        ),
        case(
            "exp_activation",
            Box::new(|a| Ok(ops::mean(&ops::exp_activation(&a[0])))),
            vec![("x", x.clone())],
        ),
        case(
            "softmax",
            Box::new(|a| Ok(ops::sum(&ops::square(&ops::softmax(&a[0], 3)?)))),
            vec![("x", x.clone())],
        ),
        case(
            "dropout",
            Box::new(|a| {
                let mut r = Rng::new(5, 5);
                Ok(ops::sum(&ops::square(&ops::dropout(&a[0], 0.5, &mut r, true)?)))
            }),
            vec![("x", x.clone())],
        ),
        case(
            "matmul",
            Box::new(|a| Ok(ops::sum(&ops::square(&ops::matmul(&a[0], &a[1])?)))),
            vec![("a", random(&[2, 3, 4], &mut rng)), ("b", random(&[4, 5], &mut rng))],
        ),
        case(
            "concat_permute_reshape",
            Box::new(|a| {
                let cat = ops::concat(&[&a[0], &ops::scale(&a[0], T::from_f64(2.0))], 1)?;
                let p = ops::permute(&cat, &[3, 1, 0, 2])?;
                let r = ops::reshape(&p, &[p.numel()])?;
                Ok(ops::sum(&ops::mul(&r, &r)?))
            }),
            vec![("x", x.clone())],
        ),
        case(
            "avg_pool_upsample",
            Box::new(|a| Ok(ops::sum(&ops::square(&ops::upsample_nearest2x(&ops::avg_pool2x(&a[0])?)?)))),
            vec![("x", x.clone())],
        ),
        case(
            "elementwise",
            Box::new(|a| {
                let b = ops::reshape(&a[1], &[1, 2, 1, 1])?;
                let y = ops::sub(&ops::add(&ops::mul(&a[0], &a[0])?, &b)?, &ops::log1p(&ops::square(&a[0])))?;
                Ok(ops::mean(&ops::abs(&ops::add_scalar(&y, T::from_f64(3.0)))))
            }),
            vec![("x", random(&[2, 2, h, w], &mut rng)), ("b", bias.clone())],
        ),
        case(
            "smooth_l1",
            Box::new(|a| ops::smooth_l1(&ops::scale(&a[0], T::from_f64(3.0)), &a[1], T::ONE)),
            vec![("p", x.clone()), ("t", target.clone())],
        ),
        case("l1", Box::new(|a| ops::l1(&a[0], &a[1])), vec![("p", x), ("t", target)]),
    ]
}

fn toy_config(size: usize) -> ModelConfig {
    ModelConfig {
        levels: 2,
        base_width: 4,
        geometry_width: 2,
        discriminator_width: 2,
        heads: 2,
        key_dim: 2,
        height: size,
        width: size,
        ..ModelConfig::default()
    }
}

fn jitter<T: Scalar>(store: &mut ParamStore<T>, seed: u64, amp: f64) {
    let mut rng = Rng::new(seed, 3);
    for p in store.iter_mut() {
        for v in &mut p.data {
            *v = T::from_f64(v.to_f64() + rng.uniform(-amp, amp));
        }
    }
}

fn positive<T: Scalar>(shape: &[usize], rng: &mut Rng, hi: f64) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| T::from_f64(rng.uniform(0.05, hi))).collect()).expect("shape matches")
}

/// Check a network function of all parameters of `store` plus extra inputs.
fn params_case<T: Scalar + 'static>(
    name: &str,
    store: &ParamStore<T>,
    extra: Vec<(&str, Tensor<T>)>,
    f: impl Fn(&Bound<T>, &[Tensor<T>]) -> Result<Tensor<T>> + 'static,
) -> Case<T> {
    let bound = store.bind(false);
    let names: Vec<String> = bound.names().to_vec();
    let np = names.len();
    let mut inputs: Vec<(String, Tensor<T>)> = names.iter().cloned().zip(bound.tensors().iter().cloned()).collect();
    inputs.extend(extra.into_iter().map(|(n, t)| (n.to_string(), t)));
    let loss: Loss<T> = Box::new(move |args| {
        let p = Bound::from_tensors(names.clone(), args[..np].to_vec())?;
        f(&p, &args[np..])
    });
    (name.to_string(), loss, inputs)
}

fn network_cases<T: Scalar + 'static>(seed: u64, full_generator: bool) -> Result<Vec<Case<T>>> {
    let size = 8;
    let mut rng = Rng::new(seed, 0x4E7);
    let mut gen: ParamStore<T> = Network::new(toy_config(size))?.init_generator(seed);
    jitter(&mut gen, seed, 0.1);
    let geometry = random::<T>(&[1, GEOMETRY_CHANNELS, size, size], &mut rng);
    let l_d = positive::<T>(&[1, 3, size, size], &mut rng, 4.0);
    let r = positive::<T>(&[1, 3, size, size], &mut rng, 1.0);
    let proj = random::<T>(&[1, 3, size, size], &mut rng);
    let mut cases = Vec::new();

    let net = Network::new(toy_config(size))?;
    let cfg = net.config().clone();
    let bottleneck = random::<T>(&[3, cfg.channels(cfg.levels), 2, 2], &mut rng);
    cases.push(params_case("gcm_gfa_block", &gen, vec![("x", bottleneck), ("geometry", geometry.clone())], move |p, a| {
        let fg = net.encode_geometry(p, &a[1])?;
        let l = net.config().levels;
        let h = net.gcm_modulate(p, l, &a[0], &fg.levels[l])?;
        let attn = net.gfa_weights(p, &fg.levels[l])?;
        Ok(ops::sum(&ops::square(&net.gfa_aggregate(p, &h, &attn)?)))
    }));

    if full_generator {
        let net = Network::new(toy_config(size))?;
        let extra = vec![("l_d", l_d.clone()), ("r", r.clone()), ("geometry", geometry.clone())];
        cases.push(params_case("generator", &gen, extra, move |p, a| {
            let inputs = NetInputs {
                l_d: a[0].clone(),
                r: a[1].clone(),
                geometry: a[2].clone(),
            };
            let y = net.predict_indirect(p, &inputs, Mode::Train, &mut Rng::new(99, 0))?;
            Ok(ops::mean(&ops::mul(&y.l, &proj)?))
        }));
    }

    let dsize = 16;
    let dnet = Network::new(toy_config(dsize))?;
    let mut disc: ParamStore<T> = dnet.init_discriminator(seed);
    jitter(&mut disc, seed + 1, 0.3);
    let real = positive::<T>(&[1, 3, dsize, dsize], &mut rng, 2.0);
    let fake = positive::<T>(&[1, 3, dsize, dsize], &mut rng, 2.0);
    let ld = positive::<T>(&[1, 3, dsize, dsize], &mut rng, 2.0);
    let rr = positive::<T>(&[1, 3, dsize, dsize], &mut rng, 1.0);
    cases.push(params_case(
        "discriminator_lsgan",
        &disc,
        vec![("real", real), ("fake", fake), ("l_d", ld), ("r", rr)],
        move |p, a| {
            let dr = dnet.discriminator_forward(p, &dnet.discriminator_input(&a[0], &a[2], &a[3])?)?;
            let df = dnet.discriminator_forward(p, &dnet.discriminator_input(&a[1], &a[2], &a[3])?)?;
            let (ld, lg) = adversarial_losses(&dr, &df)?;
            ops::add(&ld, &lg)
        },
    ));

    let ex = FrozenFeatureExtractor::random(seed, &[3, 4]);
    let pred = positive::<T>(&[1, 3, 8, 8], &mut rng, 3.0);
    let target = positive::<T>(&[1, 3, 8, 8], &mut rng, 3.0);
    cases.push((
        "content_perceptual".to_string(),
        Box::new(move |a| {
            let p = perceptual_loss(&a[0], &target, &ex, &[0.5, 0.5])?;
            ops::add(&p, &content_loss(&a[0], &target)?)
        }),
        vec![("pred".to_string(), pred)],
    ));
    Ok(cases)
}

fn run<T: Scalar>(cases: Vec<Case<T>>, cfg: GradCheckConfig, suffix: &str, out: &mut Vec<SuiteCase>) -> Result<()> {
    for (name, f, inputs) in cases {
        let named: Vec<(&str, Tensor<T>)> = inputs.iter().map(|(n, t)| (n.as_str(), t.clone())).collect();
        let report = grad_check(|a| f(a), &named, cfg)?;
        out.push(SuiteCase {
            name: format!("{name}{suffix}"),
            report,
        });
    }
    Ok(())
}

/// `f32` backward rules against `f64` differences of the same cases.
fn run_single(
    narrow: Vec<Case<f32>>,
    wide: Vec<Case<f64>>,
    cfg: GradCheckConfig,
    suffix: &str,
    out: &mut Vec<SuiteCase>,
) -> Result<()> {
    for ((name, f, inputs), (_, g, _)) in narrow.into_iter().zip(wide) {
        let named: Vec<(&str, Tensor<f32>)> = inputs.iter().map(|(n, t)| (n.as_str(), t.clone())).collect();
        let report = grad_check_single(|a| f(a), |a| g(a), &named, cfg)?;
        out.push(SuiteCase {
            name: format!("{name}{suffix}"),
            report,
        });
    }
    Ok(())
}

/// Run the suite. Returns one report per case; the caller decides what a
/// failure means.
pub fn run_gradient_suite(opts: &SuiteOptions) -> Result<Vec<SuiteCase>> {
    let mut out = Vec::new();
    for seed in 0..opts.seeds {
        let suffix = format!("/seed{seed}");
        let full = opts.full_generator && seed == 0;
        match opts.precision {
            Precision::Double => {
                run(op_cases::<f64>(seed), GradCheckConfig::precise(), &suffix, &mut out)?;
                let cfg = GradCheckConfig {
                    max_elements: 8,
                    ..GradCheckConfig::precise()
                };
                run(network_cases::<f64>(seed, full)?, cfg, &suffix, &mut out)?;
            }
            Precision::Single => {
                let cfg = GradCheckConfig::single();
                run_single(op_cases::<f32>(seed), op_cases::<f64>(seed), cfg, &suffix, &mut out)?;
                let cfg = GradCheckConfig { max_elements: 8, ..cfg };
                run_single(network_cases::<f32>(seed, full)?, network_cases::<f64>(seed, full)?, cfg, &suffix, &mut out)?;
            }
        }
    }
    if opts.inject_fault {
        let mut rng = Rng::new(1, 1);
        let case: Case<f64> = (
            "faulty_identity".to_string(),
            Box::new(|a| Ok(ops::sum(&ops::square(&faulty_identity(&a[0]))))),
            vec![("x".to_string(), random(&[2, 3], &mut rng))],
        );
        run(vec![case], GradCheckConfig::precise(), "", &mut out)?;
    }
    Ok(out)
}
