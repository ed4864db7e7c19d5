//! Naive-loop and finite-difference oracles for the tensor ops.
use ngi_core::numerics::ops;
use ngi_core::numerics::{grad_check, GradCheckConfig};
use ngi_core::{Rng, Tensor};

fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn random32(shape: &[usize], rng: &mut Rng) -> Tensor<f32> {
    random(shape, rng).cast()
}

/// Six nested loops over (n, f, oy, ox, c, ky, kx) -- the textbook definition.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (f, k) = (w.shape()[0], w.shape()[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * f * ho * wo];
    for b in 0..n {
        for fi in 0..f {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((b * c + ci) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((fi * c + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((b * f + fi) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    (vec![n, f, ho, wo], out)
}

#[test]
fn conv_all_ones_center() {
    let x = Tensor::<f32>::full(&[1, 1, 3, 3], 1.0);
    let w = Tensor::<f32>::full(&[1, 1, 3, 3], 1.0);
    let y = ops::conv2d(&x, &w, None, 1, 1).unwrap();
    assert_eq!(y.data()[4], 9.0);
}

#[test]
fn conv_delta_kernel_is_identity() {
    let mut rng = Rng::new(4, 0);
    for k in [1usize, 3, 5] {
        let x = random32(&[2, 1, 6, 5], &mut rng);
        let mut wd = vec![0.0f32; k * k];
        wd[(k / 2) * k + k / 2] = 1.0;
        let w = Tensor::new(&[1, 1, k, k], wd).unwrap();
        let y = ops::conv2d(&x, &w, None, 1, (k - 1) / 2).unwrap();
        assert_eq!(y.data(), x.data());
    }
}

#[test]
fn conv_matches_naive_loops() {
    let mut rng = Rng::new(5, 1);
    let x = random(&[1, 2, 4, 4], &mut rng);
    let w = random(&[3, 2, 3, 3], &mut rng);
    let y = ops::conv2d(&x.cast::<f32>(), &w.cast::<f32>(), None, 1, 1).unwrap();
    let (shape, want) = naive_conv(&x, &w, 1, 1);
    assert_eq!(y.shape(), &shape[..]);
    for (a, b) in y.data().iter().zip(&want) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
}

#[test]
fn conv_randomized_shapes_match_naive_loops() {
    for seed in 0..25u64 {
        let mut rng = Rng::new(seed, 77);
        let n = rng.range_inclusive(1, 3) as usize;
        let c = rng.range_inclusive(1, 4) as usize;
        let f = rng.range_inclusive(1, 4) as usize;
        let k = [1usize, 3, 5][rng.range_inclusive(0, 2) as usize];
        let stride = rng.range_inclusive(1, 2) as usize;
        let pad = rng.range_inclusive(0, (k / 2) as u64) as usize;
        let h = rng.range_inclusive(k as u64, 9) as usize;
        let w = rng.range_inclusive(k as u64, 9) as usize;
        let x = random(&[n, c, h, w], &mut rng);
        let kern = random(&[f, c, k, k], &mut rng);
        let y = ops::conv2d(&x.cast::<f32>(), &kern.cast::<f32>(), None, stride, pad).unwrap();
        let (shape, want) = naive_conv(&x, &kern, stride, pad);
        assert_eq!(y.shape(), &shape[..], "seed {seed}");
        for (a, b) in y.data().iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-5, "seed {seed}");
        }
    }
}

#[test]
fn conv_rejects_mismatch_with_both_shapes() {
    let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
    let w = Tensor::<f32>::zeros(&[3, 5, 3, 3]);
    let msg = ops::conv2d(&x, &w, None, 1, 1).unwrap_err().to_string();
    assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[3, 5, 3, 3]"), "{msg}");
}

#[test]
fn upsample_conv_cases() {
    let x = Tensor::<f32>::new(&[1, 1, 1, 1], vec![2.5]).unwrap();
    let delta = Tensor::<f32>::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
    let y = ops::upsample_conv(&x, &delta, None).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.data(), &[2.5; 4]);

    let zeros = Tensor::<f32>::zeros(&[1, 2, 3, 3]);
    let w = random32(&[2, 2, 3, 3], &mut Rng::new(1, 1));
    assert!(ops::upsample_conv(&zeros, &w, None).unwrap().data().iter().all(|&v| v == 0.0));

    // two-stage oracle: explicit replication then naive convolution
    let mut rng = Rng::new(8, 8);
    let x = random(&[1, 2, 3, 4], &mut rng);
    let w = random(&[3, 2, 3, 3], &mut rng);
    let (h, wd) = (3, 4);
    let mut up = vec![0.0; 2 * 2 * h * 2 * wd];
    for c in 0..2 {
        for y in 0..2 * h {
            for xx in 0..2 * wd {
                up[(c * 2 * h + y) * 2 * wd + xx] = x.data()[(c * h + y / 2) * wd + xx / 2];
            }
        }
    }
    let up = Tensor::new(&[1, 2, 2 * h, 2 * wd], up).unwrap();
    let (shape, want) = naive_conv(&up, &w, 1, 1);
    let got = ops::upsample_conv(&x.cast::<f32>(), &w.cast::<f32>(), None).unwrap();
    assert_eq!(got.shape(), &shape[..]);
    assert_eq!(got.shape(), &[1, 3, 6, 8]);
    for (a, b) in got.data().iter().zip(&want) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
}

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

#[test]
fn matmul_cases() {
    let eye = Tensor::<f32>::new(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
    let b = random32(&[3, 2], &mut Rng::new(2, 2));
    assert_eq!(ops::matmul(&eye, &b).unwrap().data(), b.data());
    let z = ops::matmul(&Tensor::<f32>::zeros(&[2, 3]), &b).unwrap();
    assert!(z.data().iter().all(|&v| v == 0.0));

    let mut rng = Rng::new(3, 3);
    let a = random(&[2, 3], &mut rng);
    let b = random(&[3, 4], &mut rng);
    let got = ops::matmul(&a.cast::<f32>(), &b.cast::<f32>()).unwrap();
    let want = naive_matmul(a.data(), b.data(), 2, 3, 4);
    for (x, y) in got.data().iter().zip(&want) {
        assert!((*x as f64 - y).abs() < 1e-5);
    }
    let err = ops::matmul(&a, &random(&[4, 4], &mut rng)).unwrap_err().to_string();
    assert!(err.contains("[2, 3]") && err.contains("[4, 4]"));
}

#[test]
fn matmul_broadcast_batches_match_naive() {
    for seed in 0..20u64 {
        let mut rng = Rng::new(seed, 5);
        let (m, k, n) = (
            rng.range_inclusive(1, 5) as usize,
            rng.range_inclusive(1, 5) as usize,
            rng.range_inclusive(1, 5) as usize,
        );
        let a = random(&[2, 1, m, k], &mut rng);
        let b = random(&[3, k, n], &mut rng);
        let c = ops::matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 3, m, n]);
        for i in 0..2 {
            for j in 0..3 {
                let want = naive_matmul(
                    &a.data()[i * m * k..(i + 1) * m * k],
                    &b.data()[j * k * n..(j + 1) * k * n],
                    m,
                    k,
                    n,
                );
                let off = (i * 3 + j) * m * n;
                for (x, y) in c.data()[off..off + m * n].iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}

/// Every differentiable op, randomized shapes, 64-bit finite differences.
#[test]
fn every_op_passes_gradient_check_over_seeds() {
    let cfg = GradCheckConfig::precise();
    for seed in 0..20u64 {
        let mut rng = Rng::new(seed, 1234);
        let c = rng.range_inclusive(1, 3) as usize;
        let h = 2 * rng.range_inclusive(1, 3) as usize;
        let w = 2 * rng.range_inclusive(1, 3) as usize;
        let x = random(&[2, c, h, w], &mut rng);
        let kern = random(&[2, c, 3, 3], &mut rng);
        let bias = random(&[2], &mut rng);
        let proj = random(&[2, 2, 2 * h, 2 * w], &mut rng);
        let checks: Vec<(&str, Box<dyn Fn(&[Tensor<f64>]) -> ngi_core::Result<Tensor<f64>>>, Vec<(&str, Tensor<f64>)>)> = vec![
            (
                "conv2d",
                Box::new(|a| Ok(ops::sum(&ops::square(&ops::conv2d(&a[0], &a[1], Some(&a[2]), 1, 1)?)))),
                vec![("x", x.clone()), ("w", kern.clone()), ("b", bias.clone())],
            ),
            (
                "conv2d_stride2",
                Box::new(|a| Ok(ops::sum(&ops::square(&ops::conv2d(&a[0], &a[1], None, 2, 1)?)))),
                vec![("x", x.clone()), ("w", kern.clone())],
            ),
            (
                "upsample_conv",
                Box::new({
                    let proj = proj.clone();
                    move |a| Ok(ops::sum(&ops::mul(&ops::upsample_conv(&a[0], &a[1], None)?, &proj)?))
                }),
                vec![("x", x.clone()), ("w", kern.clone())],
            ),
            (
                "leaky_relu",
                Box::new(|a| Ok(ops::sum(&ops::square(&ops::leaky_relu(&a[0], 0.2))))),
                vec![("x", x.clone())],
            ),
            (
                "exp_activation",
                Box::new(|a| Ok(ops::mean(&ops::exp_activation(&a[0])))),
                vec![("x", x.clone())],
            ),
            (
                "softmax",
                Box::new(|a| Ok(ops::sum(&ops::square(&ops::softmax(&a[0], 3)?)))),
                vec![("x", x.clone())],
            ),
            (
                "matmul",
                Box::new(|a| Ok(ops::sum(&ops::square(&ops::matmul(&a[0], &a[1])?)))),
                vec![("a", random(&[2, 3, 4], &mut rng)), ("b", random(&[4, 5], &mut rng))],
            ),
            (
                "concat_permute",
                Box::new(|a| {
                    let cat = ops::concat(&[&a[0], &ops::scale(&a[0], 2.0)], 1)?;
                    let p = ops::permute(&cat, &[3, 1, 0, 2])?;
                    Ok(ops::sum(&ops::mul(&p, &p)?))
                }),
                vec![("x", x.clone())],
            ),
            (
                "avg_pool_upsample",
                Box::new(|a| Ok(ops::sum(&ops::square(&ops::upsample_nearest2x(&ops::avg_pool2x(&a[0])?)?)))),
                vec![("x", x.clone())],
            ),
            (
                "broadcast_arith",
                Box::new(|a| {
                    let b = ops::reshape(&a[1], &[1, 2, 1, 1])?;
                    let y = ops::sub(&ops::add(&ops::mul(&a[0], &a[0])?, &b)?, &ops::log1p(&ops::square(&a[0])))?;
                    Ok(ops::mean(&ops::abs(&ops::add_scalar(&y, 3.0))))
                }),
                vec![("x", random(&[2, 2, h, w], &mut rng)), ("b", bias.clone())],
            ),
            (
                "smooth_l1",
                Box::new(|a| ops::smooth_l1(&ops::scale(&a[0], 3.0), &a[1], 1.0)),
                vec![("p", x.clone()), ("t", random(&[2, c, h, w], &mut rng))],
            ),
            (
                "l1",
                Box::new(|a| ops::l1(&a[0], &a[1])),
                vec![("p", x.clone()), ("t", random(&[2, c, h, w], &mut rng))],
            ),
        ];
        for (op, f, inputs) in checks {
            let report = grad_check(f, &inputs, cfg).unwrap();
            assert!(report.passed(), "{op} seed {seed}: {:?}", report.entries);
        }
    }
}

#[test]
fn softmax_dot_composite_passes_at_precise_tolerance() {
    let mut rng = Rng::new(42, 0);
    let q = random(&[2, 4, 3], &mut rng);
    let k = random(&[2, 3, 4], &mut rng);
    let v = random(&[2, 4, 5], &mut rng);
    let report = grad_check(
        |a| {
            let attn = ops::softmax(&ops::matmul(&a[0], &a[1])?, 2)?;
            Ok(ops::sum(&ops::square(&ops::matmul(&attn, &a[2])?)))
        },
        &[("q", q), ("k", k), ("v", v)],
        GradCheckConfig::precise(),
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report.entries);
}

#[test]
fn softmax_rows_sum_to_one_for_random_inputs() {
    for seed in 0..50u64 {
        let mut rng = Rng::new(seed, 3);
        let n = rng.range_inclusive(1, 40) as usize;
        let scale = rng.uniform(0.1, 60.0);
        let x: Vec<f32> = (0..3 * n).map(|_| (rng.uniform(-1.0, 1.0) * scale) as f32).collect();
        let y = ops::softmax(&Tensor::new(&[3, n], x).unwrap(), 1).unwrap();
        for r in 0..3 {
            let s: f64 = y.data()[r * n..(r + 1) * n].iter().map(|&v| v as f64).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn gradient_suite_passes_and_flags_injected_fault() {
    use ngi_core::gradsuite::*;
    let opts = SuiteOptions {
        seeds: 1,
        inject_fault: true,
        ..SuiteOptions::default()
    };
    let cases = run_gradient_suite(&opts).unwrap();
    let failed: Vec<&str> = cases.iter().filter(|c| !c.report.passed()).map(|c| c.name.as_str()).collect();
    assert_eq!(failed, vec!["faulty_identity"]);
    assert!(cases.iter().any(|c| c.name.starts_with("generator")));

    let single = run_gradient_suite(&SuiteOptions {
        seeds: 2,
        precision: Precision::Single,
        ..SuiteOptions::default()
    })
    .unwrap();
    for c in &single {
        assert!(c.report.passed(), "{}: {:?}", c.name, c.report.entries);
    }
}
