use ngi_core::network::{Mode, ModelConfig, NetInputs, Network};
use ngi_core::objective::{content_loss, LossWeights};
use ngi_core::scenegen::*;
use ngi_core::trainer::*;
use ngi_core::numerics::{AdamConfig, ParamStore};
use ngi_core::{Error, Rng};

const SIZE: usize = 32;

fn frames(count: usize, seed: u64) -> Vec<FrameRecord> {
    let cfg = RenderConfig {
        spp: 8,
        ..RenderConfig::default()
    };
    let filter = ViewFilterConfig::default();
    (0..count as u64)
        .map(|i| {
            let scene = build_random_scene(seed + i, &SceneRules::default());
            let mut rng = Rng::new(seed + i, 1);
            loop {
                let cam = sample_camera(&scene, &mut rng, 60.0, SIZE, SIZE);
                if filter_viewpoint(&cam, &scene, &filter).accepted {
                    return render_frame(&scene, &cam, &cfg, i).unwrap();
                }
            }
        })
        .collect()
}

fn tiny_net() -> Network {
    Network::new(ModelConfig {
        levels: 2,
        base_width: 4,
        geometry_width: 2,
        discriminator_width: 2,
        heads: 2,
        key_dim: 2,
        height: SIZE,
        width: SIZE,
        ..ModelConfig::default()
    })
    .unwrap()
}

fn cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 4,
        batch_size: 2,
        seed,
        eval_every: 2,
        extractor_widths: vec![4, 8],
        ..TrainConfig::default()
    }
}

fn fingerprint(store: &ParamStore<f32>) -> Vec<u32> {
    store.iter().flat_map(|p| p.data.iter().map(|v| v.to_bits())).collect()
}

#[test]
fn exposure_augmentation_scales_radiance_only() {
    let f = &frames(1, 40)[0];
    assert_eq!(&augment_exposure(f, 1.0).unwrap(), f);
    let twice = augment_exposure(f, 2.0).unwrap();
    for (a, b) in [(&twice.l_d, &f.l_d), (&twice.l_ind, &f.l_ind), (&twice.s_ind, &f.s_ind)] {
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| *x == 2.0 * y));
    }
    assert_eq!((&twice.r, &twice.n, &twice.d, &twice.p), (&f.r, &f.n, &f.d, &f.p));
    assert_eq!(&augment_exposure(&twice, 0.5).unwrap(), f);
    for bad in [0.0, -1.0, f32::NAN] {
        assert!(augment_exposure(f, bad).is_err());
    }

    let alpha = 1.37f32;
    let g = augment_exposure(f, alpha).unwrap();
    let lhs = compose_global(&g.l_d, &g.r, &g.s_ind).unwrap();
    let rhs = compose_global(&f.l_d, &f.r, &f.s_ind).unwrap();
    for (u, v) in lhs.data.iter().zip(&rhs.data) {
        let want = alpha * v;
        assert!((u - want).abs() <= 4.0 * f32::EPSILON * want.abs().max(1e-30));
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let data = frames(2, 50);
    let net = tiny_net();
    let mut c = cfg(1);
    c.generator_adam.lr = 0.0;
    c.discriminator_adam.lr = 0.0;
    let mut state = TrainState::new(&net, &c);
    let before = state.clone();
    let batch: Vec<&FrameRecord> = data.iter().collect();
    let losses = train_step(&net, &mut state, &c.extractor(), &c.weights, &batch, &mut Rng::new(3, 0)).unwrap();
    assert_eq!(fingerprint(&state.generator), fingerprint(&before.generator));
    assert_eq!(fingerprint(&state.discriminator), fingerprint(&before.discriminator));
    assert!(losses.content > 0.0 && losses.perceptual > 0.0 && losses.adversarial > 0.0 && losses.discriminator > 0.0);
}

#[test]
fn step_is_deterministic() {
    let data = frames(2, 60);
    let net = tiny_net();
    let c = cfg(2);
    let batch: Vec<&FrameRecord> = data.iter().collect();
    let run = || {
        let mut state = TrainState::new(&net, &c);
        let l = train_step(&net, &mut state, &c.extractor(), &c.weights, &batch, &mut Rng::new(9, 0)).unwrap();
        (l, state)
    };
    assert_eq!(run(), run());
}

#[test]
fn one_step_reduces_content_loss_for_most_seeds() {
    let data = frames(2, 70);
    let net = tiny_net();
    let batch: Vec<&FrameRecord> = data.iter().collect();
    let inputs = NetInputs::from_frames(&batch, None).unwrap();
    let target = ngi_core::network::stack_images(&batch.iter().map(|f| &f.l_ind).collect::<Vec<_>>(), None).unwrap();
    let measure = |g: &ParamStore<f32>| {
        let pred = net.predict_indirect(&g.bind(false), &inputs, Mode::Eval, &mut Rng::new(0, 0)).unwrap();
        content_loss(&pred.l_ind, &target).unwrap().item()
    };
    let mut improved = 0;
    for seed in 0..20 {
        let c = cfg(seed);
        let mut state = TrainState::new(&net, &c);
        let before = measure(&state.generator);
        train_step(&net, &mut state, &c.extractor(), &c.weights, &batch, &mut Rng::new(seed, 5)).unwrap();
        if measure(&state.generator) < before {
            improved += 1;
        }
    }
    assert!(improved >= 16, "content loss fell for {improved}/20 seeds");
}

#[test]
fn updates_touch_only_their_own_network() {
    let data = frames(2, 80);
    let net = tiny_net();
    let batch: Vec<&FrameRecord> = data.iter().collect();

    let mut c = cfg(3);
    c.generator_adam = AdamConfig { lr: 0.0, ..c.generator_adam };
    let mut state = TrainState::new(&net, &c);
    let before = state.clone();
    train_step(&net, &mut state, &c.extractor(), &c.weights, &batch, &mut Rng::new(1, 0)).unwrap();
    assert_eq!(fingerprint(&state.generator), fingerprint(&before.generator));
    assert_ne!(fingerprint(&state.discriminator), fingerprint(&before.discriminator));

    let mut c = cfg(3);
    c.discriminator_adam = AdamConfig { lr: 0.0, ..c.discriminator_adam };
    let mut state = TrainState::new(&net, &c);
    train_step(&net, &mut state, &c.extractor(), &c.weights, &batch, &mut Rng::new(1, 0)).unwrap();
    assert_ne!(fingerprint(&state.generator), fingerprint(&before.generator));
    assert_eq!(fingerprint(&state.discriminator), fingerprint(&before.discriminator));

    // Without the adversarial term the discriminator is left alone.
    let mut c = cfg(3);
    c.weights = LossWeights {
        adversarial: 0.0,
        ..LossWeights::default()
    };
    let mut state = TrainState::new(&net, &c);
    let l = train_step(&net, &mut state, &c.extractor(), &c.weights, &batch, &mut Rng::new(1, 0)).unwrap();
    assert_eq!((l.adversarial, l.discriminator), (0.0, 0.0));
    assert_eq!(state.discriminator, before.discriminator);
    assert_eq!(state.discriminator_opt.step, 0);
}

#[test]
fn non_finite_loss_names_the_term_and_keeps_state() {
    let mut data = frames(1, 90);
    data[0].l_ind.data[5] = f32::NAN;
    let net = tiny_net();
    let c = cfg(4);
    let mut state = TrainState::new(&net, &c);
    let before = state.clone();
    let err = train_step(&net, &mut state, &c.extractor(), &c.weights, &[&data[0]], &mut Rng::new(1, 0)).unwrap_err();
    assert!(matches!(err, Error::NonFinite { term: "content", .. }), "{err}");
    assert_eq!(state, before);
}

#[test]
fn loop_log_and_resume() {
    let data = frames(5, 100);
    let net = tiny_net();
    let (train_idx, test_idx) = split_indices(data.len(), 2, 3);
    let train: Vec<&FrameRecord> = train_idx.iter().map(|&i| &data[i]).collect();
    let test: Vec<&FrameRecord> = test_idx.iter().map(|&i| &data[i]).collect();
    let c = cfg(5);
    let ex = c.extractor();

    let mut full = TrainState::new(&net, &c);
    let mut calls = 0;
    let log = train_loop(&net, &train, &test, &c, &ex, &mut full, |_, _| {
        calls += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(calls, 4);
    assert_eq!(log.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    assert_eq!(log.iter().map(|e| e.eval.is_some()).collect::<Vec<_>>(), vec![false, true, false, true]);
    assert_eq!(log[0].steps.len(), 2);
    assert!(log[1].eval.unwrap().best);
    assert_eq!(full.iteration, 8);

    let mut first = c.clone();
    first.epochs = 2;
    let mut resumed = TrainState::new(&net, &c);
    let head = train_loop(&net, &train, &test, &first, &ex, &mut resumed, |_, _| Ok(())).unwrap();
    let snapshot = resumed.clone();
    let mut resumed = snapshot;
    let tail = train_loop(&net, &train, &test, &c, &ex, &mut resumed, |_, _| Ok(())).unwrap();
    assert_eq!(head.into_iter().chain(tail).collect::<Vec<_>>(), log);
    assert_eq!(resumed, full);

    assert!(matches!(
        train_loop(&net, &[], &test, &c, &ex, &mut TrainState::new(&net, &c), |_, _| Ok(())),
        Err(Error::EmptyDataset)
    ));
}
