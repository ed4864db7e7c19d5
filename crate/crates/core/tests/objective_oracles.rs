use ngi_core::numerics::{grad_check, GradCheckConfig};
use ngi_core::objective::*;
use ngi_core::{Rng, Tensor};

fn random(shape: &[usize], rng: &mut Rng, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

#[test]
fn smooth_l1_branches() {
    let z = Tensor::<f64>::new(&[1], vec![0.0]).unwrap();
    let at = |e: f64| smooth_l1(&Tensor::new(&[1], vec![e]).unwrap(), &z, 1.0).unwrap().item();
    assert_eq!(at(0.0), 0.0);
    assert_eq!(at(0.5), 0.125);
    assert_eq!(at(3.0), 2.5);
    assert_eq!(at(-3.0), 2.5);
    let a = Tensor::<f64>::new(&[2], vec![1.0, 2.0]).unwrap();
    assert!(content_loss(&a, &Tensor::zeros(&[3])).is_err());
}

#[test]
fn adversarial_formula() {
    let mut rng = Rng::new(3, 0);
    let ones = Tensor::<f64>::full(&[3, 1, 2, 2], 1.0);
    let zeros = Tensor::<f64>::zeros(&[3, 1, 2, 2]);
    let (d, g) = adversarial_losses(&ones, &ones).unwrap();
    assert_eq!(g.item(), 0.0);
    assert_eq!(d.item(), 0.5);
    let (d, _) = adversarial_losses(&ones, &zeros).unwrap();
    assert_eq!(d.item(), 0.0);
    for _ in 0..10 {
        let real = random(&[3, 1, 4, 4], &mut rng, -2.0, 2.0);
        let fake = random(&[3, 1, 4, 4], &mut rng, -2.0, 2.0);
        let (d, g) = adversarial_losses(&real, &fake).unwrap();
        let n = 48.0;
        let want_d = 0.5 * real.data().iter().map(|r| (r - 1.0).powi(2)).sum::<f64>() / n
            + 0.5 * fake.data().iter().map(|f| f * f).sum::<f64>() / n;
        let want_g = fake.data().iter().map(|f| (f - 1.0).powi(2)).sum::<f64>() / n;
        assert!((d.item() - want_d).abs() < 1e-6);
        assert!((g.item() - want_g).abs() < 1e-6);
        // Per-channel means averaged equal the pooled mean.
        let per: f64 = (0..3)
            .map(|c| fake.data()[c * 16..(c + 1) * 16].iter().map(|f| (f - 1.0).powi(2)).sum::<f64>() / 16.0)
            .sum::<f64>()
            / 3.0;
        assert!((g.item() - per).abs() < 1e-12);
    }
}

#[test]
fn perceptual_identity_extractor_is_scaled_l1() {
    let mut w = vec![0.0f32; 9];
    for i in 0..3 {
        w[i * 3 + i] = 1.0;
    }
    let ex = FrozenFeatureExtractor::from_layers(vec![FrozenLayer {
        shape: [3, 3, 1, 1],
        weight: w,
        stride: 1,
    }])
    .unwrap();
    let mut rng = Rng::new(4, 0);
    let p = random(&[2, 3, 8, 8], &mut rng, 0.0, 5.0);
    let t = random(&[2, 3, 8, 8], &mut rng, 0.0, 5.0);
    let got = perceptual_loss(&p, &t, &ex, &[0.5]).unwrap().item();
    let want = 0.5
        * p.data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a.ln_1p() - b.ln_1p()).abs())
            .sum::<f64>()
        / p.numel() as f64;
    assert!((got - want).abs() < 1e-6);
    assert_eq!(perceptual_loss(&p, &p, &ex, &[0.5]).unwrap().item(), 0.0);
    assert_eq!(perceptual_loss(&p, &t, &ex, &[0.0]).unwrap().item(), 0.0);
}

#[test]
fn extractor_is_frozen_and_persistable() {
    let ex = FrozenFeatureExtractor::random(7, &FrozenFeatureExtractor::DEFAULT_WIDTHS);
    assert_eq!(ex, FrozenFeatureExtractor::random(7, &FrozenFeatureExtractor::DEFAULT_WIDTHS));
    assert_eq!(FrozenFeatureExtractor::from_store(&ex.to_store()).unwrap(), ex);
    let mut rng = Rng::new(1, 1);
    let x = random(&[1, 3, 16, 16], &mut rng, 0.0, 1.0);
    let a = ex.features(&x).unwrap();
    let b = ex.features(&x).unwrap();
    let sizes: Vec<usize> = a.iter().map(|t| t.shape()[2]).collect();
    assert_eq!(sizes, vec![8, 4, 2]);
    for (u, v) in a.iter().zip(&b) {
        assert_eq!(u.data(), v.data());
    }
    let small = random(&[1, 3, 4, 4], &mut rng, 0.0, 1.0);
    assert!(perceptual_loss(&small, &small, &ex, &[1.0 / 3.0; 3]).is_err());
    let bad = FrozenLayer {
        shape: [3, 3, 1, 1],
        weight: vec![0.0; 9],
        stride: 1,
    };
    assert!(FrozenFeatureExtractor::from_layers(vec![bad.clone(), bad]).is_err());
}

#[test]
fn loss_gradients_f64() {
    let mut rng = Rng::new(5, 5);
    let ex = FrozenFeatureExtractor::random(2, &[4, 6]);
    let p = random(&[1, 3, 8, 8], &mut rng, 0.1, 3.0);
    let t = random(&[1, 3, 8, 8], &mut rng, 0.1, 3.0);
    let cfg = GradCheckConfig::precise();
    let r = grad_check(|a| perceptual_loss(&a[0], &t, &ex, &[0.5, 0.5]), &[("pred", p.clone())], cfg).unwrap();
    assert!(r.passed(), "perceptual {}", r.max_rel_err());
    let r = grad_check(|a| content_loss(&a[0], &t), &[("pred", p.clone())], cfg).unwrap();
    assert!(r.passed(), "content {}", r.max_rel_err());
    let real = random(&[3, 1, 2, 2], &mut rng, -1.0, 1.0);
    let fake = random(&[3, 1, 2, 2], &mut rng, -1.0, 1.0);
    let r = grad_check(
        |a| {
            let (d, g) = adversarial_losses(&a[0], &a[1])?;
            ngi_core::numerics::ops::add(&d, &g)
        },
        &[("real", real), ("fake", fake)],
        cfg,
    )
    .unwrap();
    assert!(r.passed(), "adversarial {}", r.max_rel_err());
    let w = LossWeights::default();
    let r = grad_check(
        |a| total_loss(&a[0], &a[1], &a[2], &w),
        &[
            ("c", Tensor::scalar(0.3)),
            ("p", Tensor::scalar(1.2)),
            ("a", Tensor::scalar(0.7)),
        ],
        cfg,
    )
    .unwrap();
    assert!(r.passed());
}

#[test]
fn per_channel_losses_ignore_channel_order() {
    let mut rng = Rng::new(6, 6);
    let p = random(&[2, 3, 4, 4], &mut rng, 0.0, 3.0);
    let t = random(&[2, 3, 4, 4], &mut rng, 0.0, 3.0);
    let swap = |x: &Tensor<f64>| {
        let mut d = x.to_vec();
        for b in 0..2 {
            for i in 0..16 {
                d.swap((b * 3) * 16 + i, (b * 3 + 2) * 16 + i);
            }
        }
        Tensor::new(x.shape(), d).unwrap()
    };
    let a = content_loss(&p, &t).unwrap().item();
    let b = content_loss(&swap(&p), &swap(&t)).unwrap().item();
    assert!((a - b).abs() < 1e-12);
}
