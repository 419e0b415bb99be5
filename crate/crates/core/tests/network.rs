use mminr::net::*;
use mminr::nn::{sigmoid, Params, UpsampleMode};
use mminr::tensor::Tensor;
use mminr::training::gradient_check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn tiny_gradients_match_central_differences() {
    let report = gradient_check(&ModelConfig::tiny(), 64, 1e-4, 7).unwrap();
    assert!(report.entries.len() >= 64);
    assert!(report.max_rel_err < 1e-4, "{:?}", report.worst());
}

#[test]
fn bilinear_decoder_gradients_match_central_differences() {
    let cfg = ModelConfig {
        upsample_mode: UpsampleMode::Bilinear,
        m_out: 1,
        ..ModelConfig::tiny()
    };
    let report = gradient_check(&cfg, 40, 1e-4, 3).unwrap();
    assert!(report.max_rel_err < 1e-4, "{:?}", report.worst());
}

#[test]
fn restore_module_matches_its_definition() {
    // out = boost(c) + sigmoid(weaken(c)) * fusion(c), c = [skip, up]
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut srm = Srm::<f64>::new(3, 2, 4);
    srm.init(&mut rng);
    let skip = random(&[3, 5, 5], 2);
    let up = random(&[2, 5, 5], 3);
    let got = srm.forward(&skip, &up).unwrap();
    let c = Tensor::concat_channels(&skip, &up);
    let (b, w, f) = (srm.boost.forward(&c), srm.weaken.forward(&c), srm.fusion.forward(&c));
    let want: Vec<f64> = (0..b.len())
        .map(|i| b.data()[i] + sigmoid(w.data()[i]) * f.data()[i])
        .collect();
    assert!(got.max_abs_diff(&Tensor::from_vec(&[4, 5, 5], want)) < 1e-12);
}

#[test]
fn single_output_head_and_encoder_widths() {
    let cfg = ModelConfig::desk().with_m_out(1);
    let model = Mminr::<f32>::new(cfg.clone()).unwrap();
    let x = random(&[9, 64, 64], 4).cast::<f32>();
    let feats = model.encode(&x).unwrap();
    let shapes: Vec<Vec<usize>> = feats.iter().map(|f| f.shape().to_vec()).collect();
    assert_eq!(
        shapes,
        vec![vec![32, 64, 64], vec![16, 32, 32], vec![8, 16, 16], vec![4, 8, 8], vec![4, 4, 4]]
    );
    assert_eq!(model.forward(&x).unwrap().shape(), &[1, 64, 64]);
}

#[test]
fn same_seed_same_parameters() {
    let a = Mminr::<f32>::new(ModelConfig::tiny()).unwrap();
    let b = Mminr::<f32>::new(ModelConfig::tiny()).unwrap();
    let c = Mminr::<f32>::new(ModelConfig {
        seed: 1,
        ..ModelConfig::tiny()
    })
    .unwrap();
    assert_eq!(a.named_params(), b.named_params());
    assert_ne!(a.named_params(), c.named_params());
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = Mminr::<f32>::new(ModelConfig::tiny()).unwrap();
    let meta = CheckpointMeta {
        epoch: Some(3),
        val_loss: Some(0.25),
    };
    save_checkpoint(&model, &meta, &path).unwrap();
    let (back, meta_back) = load_checkpoint(&path).unwrap();
    assert_eq!(meta_back, meta);
    let x = random(&[2, 16, 16], 5).cast::<f32>();
    assert_eq!(model.forward(&x).unwrap(), back.forward(&x).unwrap());
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"MMINRCKP");
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = Mminr::<f32>::new(ModelConfig::tiny()).unwrap();
    save_checkpoint(&model, &CheckpointMeta::default(), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let bad_width = ModelConfig {
        stage_channels: vec![32, 16, 8, 4, 8],
        ..ModelConfig::desk()
    };
    assert!(Mminr::<f32>::new(bad_width).is_err());
    let bad_size = ModelConfig {
        input_size: 40,
        ..ModelConfig::desk()
    };
    assert!(Mminr::<f32>::new(bad_size).is_err());
}
