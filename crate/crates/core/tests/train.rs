use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsen::autodiff::{finite_diff_check, Graph, Tape};
use rsen::data::{load_checkpoint, synthesize_rain, synthetic_background, ImagePair, StreakParams};
use rsen::metrics::psnr;
use rsen::model::{ModelConfig, ParameterStore};
use rsen::train::{adam_step, sample_patch, AdamState, TrainConfig, Trainer, CHECKPOINT_FILE, LOG_FILE, LOG_HEADER};
use rsen::{Error, Tensor};

fn pairs(n: u64, size: usize) -> Vec<ImagePair> {
    (0..n)
        .map(|i| {
            let b = synthetic_background(size, size, i);
            let p = StreakParams { intensity: 0.3, seed: 50 + i, ..Default::default() };
            synthesize_rain(&b, &p, format!("{i:03}.png")).unwrap()
        })
        .collect()
}

fn toy_train(iterations: usize, lr: f64, batch: usize) -> TrainConfig {
    TrainConfig {
        batch_size: batch,
        patch_size: 16,
        epochs: iterations,
        max_iterations: Some(iterations),
        lr0: lr,
        ..TrainConfig::default()
    }
}

#[test]
fn overfits_a_single_pair() {
    let data = pairs(1, 16);
    let cfg = ModelConfig::desk();
    let mut t = Trainer::new(cfg, toy_train(200, 1e-3, 1)).unwrap();
    let initial = t.loss(&data[0].rainy, &data[0].clean).unwrap();
    let report = t.run(&data, &data[0]).unwrap();
    let losses: Vec<f64> = report.log.iter().map(|r| r.loss).collect();
    let last = t.loss(&data[0].rainy, &data[0].clean).unwrap();
    assert!(last < 0.25 * initial, "{last} vs {initial}");
    let checks = losses.len() - 50;
    let violations = (0..checks).filter(|&i| losses[i + 50] > losses[i]).count();
    assert!(violations * 10 <= checks, "{violations} of {checks} windows increased");
}

#[test]
fn same_seed_same_run() {
    let data = pairs(3, 20);
    let run = || {
        let mut t = Trainer::new(ModelConfig::desk(), toy_train(6, 1e-3, 2)).unwrap();
        let log = t.run(&data, &data[2]).unwrap().log;
        (log, t.into_params())
    };
    let (a_log, a) = run();
    let (b_log, b) = run();
    assert_eq!(a_log, b_log);
    for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
        assert_eq!(x.data(), y.data());
    }
    assert!(a_log.windows(2).all(|w| w[0].epoch < w[1].epoch));
    assert_eq!(a_log.last().unwrap().iter, 6);
}

#[test]
fn zero_init_starts_at_rainy_psnr() {
    let data = pairs(2, 16);
    let cfg = ModelConfig::desk();
    let t = Trainer::with_params(cfg.clone(), toy_train(1, 1e-4, 1), ParameterStore::zeros(&cfg)).unwrap();
    for p in &data {
        assert_eq!(t.monitor_psnr(p).unwrap(), psnr(&p.rainy, &p.clean).unwrap());
    }
}

#[test]
fn resume_continues_the_same_trajectory() {
    let data = pairs(3, 16);
    let dir = tempfile::tempdir().unwrap();
    let cfg = |epochs: usize, out: &std::path::Path| TrainConfig {
        batch_size: 2,
        patch_size: 12,
        epochs,
        lr0: 1e-3,
        checkpoint_every: 2,
        out_dir: Some(out.to_path_buf()),
        ..TrainConfig::default()
    };
    let full_dir = dir.path().join("full");
    let mut full = Trainer::new(ModelConfig::desk(), cfg(6, &full_dir)).unwrap();
    let full_log = full.run(&data, &data[2]).unwrap().log;

    let part_dir = dir.path().join("part");
    let mut first = Trainer::new(ModelConfig::desk(), cfg(3, &part_dir)).unwrap();
    first.run(&data, &data[2]).unwrap();
    let mut second = Trainer::resume(ModelConfig::desk(), cfg(6, &part_dir), &part_dir.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(second.epoch(), 3);
    let rest = second.run(&data, &data[2]).unwrap().log;
    assert_eq!(rest[0].epoch, 3);
    assert_eq!(rest, full_log[3..]);
    for ((_, x), (_, y)) in full.params().iter().zip(second.params().iter()) {
        assert_eq!(x.data(), y.data());
    }

    let text = std::fs::read_to_string(part_dir.join(LOG_FILE)).unwrap();
    assert_eq!(text.lines().filter(|l| *l == LOG_HEADER).count(), 1);
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 7);
    assert!(text.contains("# train.seed = 0"));
    assert!(text.contains("# model.channel_scale = 0.25"));
}

#[test]
fn divergence_keeps_last_good_checkpoint() {
    let good = pairs(2, 12);
    let dir = tempfile::tempdir().unwrap();
    let cfg = |epochs| TrainConfig {
        batch_size: 2,
        patch_size: 12,
        epochs,
        checkpoint_every: 1,
        out_dir: Some(dir.path().to_path_buf()),
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(ModelConfig::desk(), cfg(2)).unwrap();
    t.run(&good, &good[1]).unwrap();
    let path = dir.path().join(CHECKPOINT_FILE);
    let before = std::fs::read(&path).unwrap();

    let mut bad = good.clone();
    bad[0].rainy.data_mut()[5] = f32::NAN;
    let mut resumed = Trainer::resume(ModelConfig::desk(), cfg(5), &path).unwrap();
    match resumed.run(&bad, &good[1]) {
        Err(Error::Divergence { epoch, .. }) => assert_eq!(epoch, 2),
        other => panic!("{other:?}"),
    }
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert_eq!(load_checkpoint(&path).unwrap().meta.get::<usize>("state.epoch").unwrap(), Some(2));
}

#[test]
fn patch_offsets_are_uniform() {
    let img = Tensor::<f32>::zeros([1, 3, 300, 300]);
    let pair = ImagePair::new("u", img.clone(), img).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 10_000;
    let mut top = [0usize; 45];
    let mut left = [0usize; 45];
    for _ in 0..draws {
        let p = sample_patch(&pair, 256, &mut rng).unwrap();
        top[p.top] += 1;
        left[p.left] += 1;
    }
    // Chi-square with 44 degrees of freedom; 68.7095 is the 0.99 quantile.
    let expected = draws as f64 / 45.0;
    for counts in [top, left] {
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 68.7095, "chi-square {chi2}");
    }
}

#[test]
fn mse_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    use rand::Rng;
    let pred = Tensor::from_fn([2, 3, 4, 4], |_, _, _, _| rng.random_range(-1.0..1.0));
    let target = Tensor::from_fn([2, 3, 4, 4], |_, _, _, _| rng.random_range(-1.0..1.0));
    let err = finite_diff_check(
        |tape: &Tape<f64>, x| {
            let t = tape.input(target.clone());
            tape.mse_loss(&x, &t)
        },
        &pred,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

fn quadratic(a: &[[f64; 3]; 3], p: &[f64]) -> (f64, Vec<f64>) {
    let g: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i][j] * p[j]).sum()).collect();
    (0.5 * p.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>(), g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adam_step_descends_positive_definite_quadratics(
        m in prop::array::uniform9(-1.0f64..1.0),
        p0 in prop::array::uniform3(prop_oneof![-2.0f64..-0.5, 0.5f64..2.0]),
        lr in 1e-5f64..=1e-2,
    ) {
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = (0..3).map(|k| m[k * 3 + i] * m[k * 3 + j]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
            }
        }
        let (f0, g) = quadratic(&a, &p0);
        let mut params = ParameterStore::new();
        params.insert("p", Tensor::new([1, 3, 1, 1], p0.to_vec()).unwrap());
        let mut grads = ParameterStore::new();
        grads.insert("p", Tensor::new([1, 3, 1, 1], g).unwrap());
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, lr).unwrap();
        let (f1, _) = quadratic(&a, params.get("p").unwrap().data());
        prop_assert!(f1 < f0, "{} !< {}", f1, f0);
    }
}
