//! Acceptance criteria, one function per criterion. Each prints a single
//! `PASS`/`FAIL` line with the measured value and the pinned tolerance.
//! Criteria run one after another so that wall-clock limits are measured
//! on an otherwise idle process. Pass criterion numbers as arguments to run
//! a subset, e.g. `cargo test --test acceptance -- 2 3`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use mminr::inference::*;
use mminr::loss::{b_mae, b_mse, WeightSchedule};
use mminr::net::{Mminr, ModelConfig};
use mminr::radar::*;
use mminr::tensor::Tensor;
use mminr::training::*;
use mminr::verification::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static FAILED: AtomicUsize = AtomicUsize::new(0);

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    if !pass {
        FAILED.fetch_add(1, Ordering::Relaxed);
    }
}

fn synthetic_set(seeds: std::ops::Range<u64>, noise_rate: f64, frames: usize, size: usize) -> Vec<RadarSequence> {
    seeds
        .map(|seed| {
            let cfg = SyntheticConfig {
                seed,
                noise_rate,
                ..SyntheticConfig::default()
            };
            generate_synthetic(&cfg, frames, size).unwrap()
        })
        .collect()
}

fn c1_full_forward_shapes_and_time() {
    const LIMIT: Duration = Duration::from_secs(60);
    let cfg = ModelConfig::paper();
    let model = Mminr::<f32>::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::from_vec(
        &[9, 288, 288],
        (0..9 * 288 * 288).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
    );
    let feats = model.encode(&x).unwrap();
    let shapes: Vec<Vec<usize>> = feats.iter().map(|f| f.shape().to_vec()).collect();
    let want = vec![
        vec![256, 288, 288],
        vec![128, 144, 144],
        vec![64, 72, 72],
        vec![32, 36, 36],
        vec![32, 18, 18],
    ];
    drop(feats);
    let t = Instant::now();
    let y = model.forward(&x).unwrap();
    let took = t.elapsed();
    let ok = shapes == want && y.shape() == [9, 288, 288] && took < LIMIT;
    report(
        1,
        "full-size forward",
        ok,
        format!("output {:?}, features {shapes:?}, {took:.1?} (limit {LIMIT:?})", y.shape()),
    );
}

fn c2_gradient_check() {
    const TOL: f64 = 1e-4;
    const LIMIT: Duration = Duration::from_secs(10);
    let t = Instant::now();
    let r = gradient_check(&ModelConfig::tiny(), 64, 1e-4, 0).unwrap();
    let took = t.elapsed();
    let worst = r.worst().unwrap();
    report(
        2,
        "analytic vs central-difference gradients",
        r.entries.len() >= 32 && r.max_rel_err < TOL && took < LIMIT,
        format!(
            "{} params, max rel err {:.2e} at {}[{}] (tol {TOL:e}), {took:.2?} (limit {LIMIT:?})",
            r.entries.len(),
            r.max_rel_err,
            worst.name,
            worst.index
        ),
    );
}

fn c3_verification_matches_brute_force() {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut undefined_mismatch = 0;
    for _ in 0..100 {
        let field = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..256)
                .map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0.0..19.0) })
                .collect()
        };
        let (p, o) = (field(&mut rng), field(&mut rng));
        for thr in DEFAULT_THRESHOLDS {
            let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..256 {
                match (p[i] >= thr, o[i] >= thr) {
                    (true, true) => a += 1.0,
                    (true, false) => b += 1.0,
                    (false, true) => c += 1.0,
                    (false, false) => d += 1.0,
                }
            }
            let t = contingency_cells(&p, &o, thr).unwrap();
            let want_csi = (a + b + c > 0.0).then(|| a / (a + b + c));
            let den = (a + c) * (c + d) + (a + b) * (b + d);
            let want_hss = (den > 0.0).then(|| 2.0 * (a * d - b * c) / den);
            for (got, want) in [(csi(&t), want_csi), (hss(&t), want_hss)] {
                match (got, want) {
                    (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                    (None, None) => {}
                    _ => undefined_mismatch += 1,
                }
            }
        }
        let w: Vec<f64> = o
            .iter()
            .map(|&r| match r {
                r if r < 0.5 => 1.0,
                r if r < 2.0 => 2.0,
                r if r < 5.0 => 5.0,
                r if r < 10.0 => 10.0,
                _ => 30.0,
            })
            .collect();
        let n = 256.0;
        let mse: f64 = (0..256).map(|i| w[i] * (p[i] - o[i]).powi(2)).sum::<f64>() / n;
        let mae: f64 = (0..256).map(|i| w[i] * (p[i] - o[i]).abs()).sum::<f64>() / n;
        let ws = WeightSchedule::default().weights_for(&o);
        worst = worst.max((b_mse(&p, &o, &ws).unwrap() - mse).abs());
        worst = worst.max((b_mae(&p, &o, &ws).unwrap() - mae).abs());
    }
    report(
        3,
        "CSI/HSS/B-MSE/B-MAE vs brute force",
        worst < TOL && undefined_mismatch == 0,
        format!("100 pairs of 16x16, max abs diff {worst:.2e} (tol {TOL:e}), undefined mismatches {undefined_mismatch}"),
    );
}

fn c4_normalization_round_trip() {
    const TOL: f64 = 1e-9;
    let n = 1_000_000;
    let worst = (0..=n)
        .map(|i| RAIN_CAP * i as f64 / n as f64)
        .map(|x| (denormalize_value(normalize_value(x)) - x).abs())
        .fold(0.0, f64::max);
    let lo = normalize_value(0.0);
    let hi = normalize_value(RAIN_CAP);
    let want_hi = 20f64.ln() / 1.5 - 1.0;
    report(
        4,
        "normalization round trip and range",
        worst < TOL && lo == -1.0 && (hi - want_hi).abs() < 1e-15,
        format!("max round-trip err {worst:.2e} (tol {TOL:e}) over {n}+1 points, range [{lo}, {hi:.15}]"),
    );
}

fn c5_overfit_small_set() {
    const STEPS: usize = 500;
    const RUN: usize = 300;
    const RATIO: f64 = 0.10;
    let seqs = synthetic_set(0..4, 0.2, 18, 64);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 4,
        max_epochs: STEPS,
        patience: STEPS,
        max_steps: Some(RUN),
        ..TrainConfig::default()
    };
    let ds = WindowDataset::from_sequences(&seqs, 9, 9, None, &cfg.weights).unwrap();
    let val = WindowDataset::from_sequences(&seqs[..1], 9, 9, None, &cfg.weights).unwrap();
    let out = train(&ModelConfig::desk(), &cfg, &ds, &val).unwrap();
    let first = out.step_losses[0];
    let last = *out.step_losses.last().unwrap();
    report(
        5,
        "overfit four sequences",
        out.step_losses.len() <= STEPS && last <= RATIO * first,
        format!(
            "loss {first:.4} -> {last:.4} after {} steps (limit {STEPS}), ratio {:.3} (limit {RATIO})",
            out.step_losses.len(),
            last / first
        ),
    );
}

fn lead_scores(
    strategy: Strategy,
    model: Option<&Mminr<f32>>,
    test: &[RadarSequence],
) -> SkillReport {
    let obs: Vec<_> = test.iter().map(|s| s.slice(9, 9).unwrap()).collect();
    let preds: Vec<_> = test
        .iter()
        .map(|s| forecast_sequence(strategy, model, 9, s, 0, 9, false).unwrap())
        .collect();
    let opts = EvalOptions {
        per_lead_time: true,
        ..EvalOptions::default()
    };
    evaluate(&preds, &obs, &opts).unwrap()
}

fn c6_beats_persistence_at_first_lead() {
    const LIMIT: Duration = Duration::from_secs(30 * 60);
    let t = Instant::now();
    let train_seqs = synthetic_set(0..200, 0.2, 18, 64);
    let val_seqs = synthetic_set(1_000..1_040, 0.2, 18, 64);
    let test_seqs = synthetic_set(2_000..2_040, 0.2, 18, 64);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        max_epochs: 12,
        patience: 4,
        ..TrainConfig::default()
    };
    let tr = WindowDataset::from_sequences(&train_seqs, 9, 9, None, &cfg.weights).unwrap();
    let va = WindowDataset::from_sequences(&val_seqs, 9, 9, None, &cfg.weights).unwrap();
    let out = train(&ModelConfig::desk(), &cfg, &tr, &va).unwrap();
    let model = lead_scores(Strategy::Mmi, Some(&out.model), &test_seqs);
    let pers = lead_scores(Strategy::Persistence, None, &test_seqs);
    let csi_at = |r: &SkillReport| r.per_lead_time.as_ref().unwrap()[0].per_threshold[0].csi.unwrap_or(0.0);
    let (m, p) = (csi_at(&model), csi_at(&pers));
    let took = t.elapsed();
    report(
        6,
        "desk model vs persistence, CSI r>=0.5 lead 1",
        m >= p && took < LIMIT,
        format!(
            "model {m:.4} vs persistence {p:.4}; best epoch {} of {}, {took:.0?} (limit {LIMIT:?})",
            out.best_epoch,
            out.history.len()
        ),
    );
}

fn c7_call_counts_and_horizon_one_equivalence() {
    let x = Tensor::from_vec(
        &[2, 16, 16],
        (0..512).map(|i| ((i * 31) % 97) as f32 / 48.5 - 1.0).collect(),
    );
    let mmi = Mminr::<f32>::new(ModelConfig::tiny().with_m_out(9)).unwrap();
    let counted = Counted::new(&mmi);
    predict_mmi(&counted, &x).unwrap();
    let mmi_calls = counted.calls();
    let msi = Mminr::<f32>::new(ModelConfig::tiny().with_m_out(1)).unwrap();
    let counted = Counted::new(&msi);
    predict_msi_recurrent(&counted, &x, 9, false).unwrap();
    let msi_calls = counted.calls();
    let a = predict_mmi(&msi, &x).unwrap();
    let b = predict_msi_recurrent(&msi, &x, 1, false).unwrap();
    let identical = a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits());
    report(
        7,
        "forward calls per strategy",
        mmi_calls == 1 && msi_calls == 9 && identical,
        format!("MMI {mmi_calls} call, MSI recurrent {msi_calls} calls for m=9, horizon-1 outputs bitwise identical: {identical}"),
    );
}

fn c8_per_lead_curves_and_error_growth() {
    let train_seqs = synthetic_set(300..360, 0.2, 18, 64);
    let val_seqs = synthetic_set(1_100..1_110, 0.2, 18, 64);
    let test_seqs = synthetic_set(2_100..2_120, 0.2, 18, 64);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        max_epochs: 4,
        ..TrainConfig::default()
    };
    let single = ModelConfig::desk().with_m_out(1);
    let tr = WindowDataset::from_sequences(&train_seqs, 9, 1, Some(3), &cfg.weights).unwrap();
    let va = WindowDataset::from_sequences(&val_seqs, 9, 1, None, &cfg.weights).unwrap();
    let out = train(&single, &cfg, &tr, &va).unwrap();
    let r = lead_scores(Strategy::MsiRecurrent, Some(&out.model), &test_seqs);
    let leads = r.per_lead_time.as_ref().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_curves(&r, dir.path()).unwrap();
    let rows = std::fs::read_to_string(dir.path().join("b_mse.csv")).unwrap().lines().count() - 1;
    let (first, last) = (leads[0].b_mse, leads[8].b_mse);
    report(
        8,
        "per-lead curves, recurrent error growth",
        leads.len() == 9 && rows == 9 && files.len() == 8 && last >= first,
        format!("{} leads, {rows} curve rows; recurrent B-MSE lead 1 {first:.4}, lead 9 {last:.4}", leads.len()),
    );
}

fn c9_cli_runs_are_bit_identical() {
    use mminr::cli::{run, Cli};
    use clap::Parser;
    use std::collections::BTreeMap;
    use std::path::Path;

    fn go(args: &[&str]) {
        run(Cli::try_parse_from(std::iter::once("mminr").chain(args.iter().copied())).unwrap()).unwrap();
    }
    fn tree(root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(root).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                tree(&p, out);
            } else {
                out.insert(p.to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
            }
        }
    }
    let snapshot = |root: &Path| {
        let mut m = BTreeMap::new();
        tree(root, &mut m);
        m.into_iter()
            .map(|(k, v)| (k.trim_start_matches(root.to_str().unwrap()).to_string(), v))
            .collect::<BTreeMap<_, _>>()
    };
    let pipeline = |root: &Path| {
        let s = |p: &str| root.join(p).to_str().unwrap().to_string();
        let (tr, va, te, run_dir, pred, ev) = (s("tr"), s("va"), s("te"), s("run"), s("pred"), s("eval"));
        go(&["synth", "--out", &tr, "--count", "3", "--frames", "18", "--size", "64", "--seed", "7"]);
        go(&["synth", "--out", &va, "--count", "1", "--frames", "18", "--size", "64", "--seed", "70"]);
        go(&["synth", "--out", &te, "--count", "2", "--frames", "18", "--size", "64", "--seed", "700"]);
        go(&["train", "--train", &tr, "--val", &va, "--out", &run_dir, "--preset", "desk", "--epochs", "2", "--batch-size", "2", "--seed", "3"]);
        let ckpt = format!("{run_dir}/model.ckpt");
        go(&["predict", "--input", &te, "--out", &pred, "--checkpoint", &ckpt]);
        go(&["evaluate", "--pred", &pred, "--obs", &te, "--out", &ev, "--plot"]);
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    let differing: Vec<&String> = sa.keys().filter(|k| sb.get(*k) != sa.get(*k)).collect();
    report(
        9,
        "repeat CLI run with the same seed",
        sa.len() == sb.len() && differing.is_empty(),
        format!("{} files compared (archives, checkpoint, history, reports), {} differ", sa.len(), differing.len()),
    );
}

fn main() {
    let all: [(u32, fn()); 9] = [
        (1, c1_full_forward_shapes_and_time as fn()),
        (2, c2_gradient_check as fn()),
        (3, c3_verification_matches_brute_force as fn()),
        (4, c4_normalization_round_trip as fn()),
        (5, c5_overfit_small_set as fn()),
        (6, c6_beats_persistence_at_first_lead as fn()),
        (7, c7_call_counts_and_horizon_one_equivalence as fn()),
        (8, c8_per_lead_curves_and_error_growth as fn()),
        (9, c9_cli_runs_are_bit_identical as fn()),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    for (id, f) in all {
        if wanted.is_empty() || wanted.contains(&id) {
            f();
        }
    }
    let failed = FAILED.load(Ordering::Relaxed);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
