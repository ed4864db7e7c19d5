mod common;

use ngi::checkpoint::{Checkpoint, CheckpointError};
use ngi::commands::{gen_data, train, TrainArgs, CHECKPOINT_FILE};
use ngi::Dataset;
use ngi_core::network::Network;
use ngi_core::trainer::{predict_frames, TrainState};

use common::tiny_config;

fn fresh() -> Checkpoint {
    let cfg = tiny_config();
    let net = Network::new(cfg.model.clone()).unwrap();
    Checkpoint::new(cfg.model, cfg.train.clone(), TrainState::new(&net, &cfg.train))
}

#[test]
fn bytes_round_trip_exactly() {
    let mut ckpt = fresh();
    ckpt.state.epoch = 3;
    ckpt.state.iteration = 17;
    ckpt.state.best_psnr = 21.5;
    let bytes = ckpt.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.to_bytes(), bytes);

    // -inf before any evaluation survives as well.
    let initial = fresh();
    assert_eq!(Checkpoint::from_bytes(&initial.to_bytes()).unwrap().state.best_psnr, f64::NEG_INFINITY);
}

#[test]
fn damage_is_reported_not_misread() {
    let bytes = fresh().to_bytes();
    for cut in [0, 3, 8, bytes.len() / 2, bytes.len() - 1] {
        assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut flipped = bytes.clone();
    let mid = bytes.len() / 2;
    flipped[mid] ^= 0x10;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(CheckpointError::Checksum { .. })));
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(CheckpointError::BadMagic(_))));
}

#[test]
fn saved_training_run_infers_identically_after_reload() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    gen_data(&cfg, data.path()).unwrap();
    train(&TrainArgs {
        data: data.path().into(),
        out: out.path().into(),
        config: cfg.clone(),
        overfit_one: false,
        resume: false,
    })
    .unwrap();
    let path = out.path().join(CHECKPOINT_FILE);
    let ckpt = Checkpoint::load(&path).unwrap();
    assert_eq!(ckpt.state.epoch, 2);
    assert_eq!(ckpt.extractor, cfg.train.extractor());

    let ds = Dataset::load(data.path()).unwrap();
    let frame = ds.frame(ds.ids()[0]).unwrap();
    let net = ckpt.network().unwrap();
    let a = predict_frames(&net, &ckpt.state.generator, &[&frame]).unwrap();
    let reloaded = Checkpoint::from_bytes(&std::fs::read(&path).unwrap()).unwrap();
    let b = predict_frames(&net, &reloaded.state.generator, &[&frame]).unwrap();
    assert_eq!(a, b);
}
