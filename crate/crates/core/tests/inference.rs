use mminr::inference::*;
use mminr::net::{Mminr, ModelConfig};
use mminr::radar::{generate_synthetic, SyntheticConfig, RAIN_CAP};
use mminr::tensor::Tensor;
use mminr::Error;

fn input(n: usize, side: usize) -> Tensor<f32> {
    let data = (0..n * side * side).map(|i| ((i * 37) % 100) as f32 / 50.0 - 1.0).collect();
    Tensor::from_vec(&[n, side, side], data)
}

#[test]
fn call_counts_per_strategy() {
    let mmi = Mminr::<f32>::new(ModelConfig::tiny().with_m_out(4)).unwrap();
    let counted = Counted::new(&mmi);
    let y = predict_mmi(&counted, &input(2, 16)).unwrap();
    assert_eq!(y.shape(), &[4, 16, 16]);
    assert_eq!(counted.calls(), 1);

    let msi = Mminr::<f32>::new(ModelConfig::tiny().with_m_out(1)).unwrap();
    let counted = Counted::new(&msi);
    let y = predict_msi_recurrent(&counted, &input(2, 16), 4, false).unwrap();
    assert_eq!(y.shape(), &[4, 16, 16]);
    assert_eq!(counted.calls(), 4);
}

#[test]
fn strategies_agree_at_horizon_one() {
    let model = Mminr::<f32>::new(ModelConfig::tiny().with_m_out(1)).unwrap();
    let x = input(2, 16);
    let a = predict_mmi(&model, &x).unwrap();
    let b = predict_msi_recurrent(&model, &x, 1, false).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn recurrent_feeds_back_its_own_output() {
    let model = Mminr::<f32>::new(ModelConfig::tiny().with_m_out(1)).unwrap();
    let x = input(2, 16);
    let y = predict_msi_recurrent(&model, &x, 2, false).unwrap();
    let first = model.forward(&x).unwrap();
    let mut next = x.channel(1).to_vec();
    next.extend_from_slice(first.data());
    let second = model.forward(&Tensor::from_vec(&[2, 16, 16], next)).unwrap();
    assert_eq!(&y.data()[..256], first.data());
    assert_eq!(&y.data()[256..], second.data());
}

#[test]
fn mmi_horizon_must_match_model() {
    let model = Mminr::<f32>::new(ModelConfig::tiny()).unwrap();
    let r = predict(Strategy::Mmi, Some(&model), &input(2, 16), 5, false);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn physical_forecast_is_capped_and_shaped() {
    let seq = generate_synthetic(&SyntheticConfig::default(), 12, 32).unwrap();
    let model = Mminr::<f32>::new(ModelConfig {
        input_size: 32,
        ..ModelConfig::tiny()
    })
    .unwrap();
    let fc = forecast_sequence(Strategy::Mmi, Some(&model), 2, &seq, 3, 2, false).unwrap();
    assert_eq!((fc.len(), fc.height(), fc.width()), (2, 32, 32));
    assert_eq!(fc.id, seq.id);
    assert!(fc.frames.iter().all(|f| f.data.iter().all(|&v| (0.0..=RAIN_CAP).contains(&v))));

    let p = forecast_sequence::<Mminr<f32>>(Strategy::Persistence, None, 4, &seq, 0, 3, false).unwrap();
    for f in &p.frames {
        for (a, b) in f.data.iter().zip(&seq.frames[3].data) {
            assert!((a - b).abs() < 1e-4 * (1.0 + b));
        }
    }
}
