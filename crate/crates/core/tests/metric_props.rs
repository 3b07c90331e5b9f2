use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rsen::data::write_png;
use rsen::metrics::{eval_dir, psnr, psnr_with_peak, ssim};
use rsen::{DataError, Error, Tensor};

fn image(h: usize, w: usize) -> impl Strategy<Value = Tensor<f32>> {
    prop::collection::vec(0.0f32..1.0, 3 * h * w).prop_map(move |v| Tensor::new([1, 3, h, w], v).unwrap())
}

fn pair() -> impl Strategy<Value = (Tensor<f32>, Tensor<f32>)> {
    (11usize..20, 11usize..20).prop_flat_map(|(h, w)| (image(h, w), image(h, w)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn psnr_and_ssim_are_symmetric((a, b) in pair()) {
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psnr_scales_with_peak((a, b) in pair(), k in prop::sample::select(vec![0.5f32, 2.0])) {
        let base = psnr(&a, &b).unwrap();
        let scaled = psnr_with_peak(&a.map(|v| v * k), &b.map(|v| v * k), f64::from(k)).unwrap();
        prop_assert!((base - scaled).abs() < 1e-9);
    }

    #[test]
    fn ssim_is_bounded_and_one_on_self((a, b) in pair()) {
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&s));
    }
}

#[test]
fn ssim_falls_with_noise() {
    let clean = Tensor::from_fn([1, 3, 32, 32], |_, c, y, x| 0.5 + 0.3 * ((x as f32 * 0.4 + c as f32).sin() * (y as f32 * 0.3).cos()));
    let mut last = 1.0;
    for sigma in [0.01, 0.05, 0.1] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0f32, sigma).unwrap();
        let data = clean.data().iter().map(|&v| v + noise.sample(&mut rng)).collect();
        let noisy = Tensor::new(clean.dims(), data).unwrap();
        let s = ssim(&clean, &noisy).unwrap();
        assert!(s < last, "sigma {sigma}: {s} !< {last}");
        last = s;
    }
}

fn write_dir(dir: &std::path::Path, names: &[&str], offset: f32) {
    std::fs::create_dir_all(dir).unwrap();
    for name in names {
        let i = usize::from(name.as_bytes()[0]);
        let t = Tensor::from_fn([1, 3, 16, 16], |_, c, y, x| ((i * 7 + c * 3 + y + x) % 11) as f32 / 20.0 + offset);
        write_png(&dir.join(name), &t).unwrap();
    }
}

#[test]
fn eval_dir_examples() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt");
    write_dir(&gt, &["b.png", "a.png", "c.png"], 0.0);
    let same = eval_dir(&gt, &gt).unwrap();
    assert_eq!(same.rows.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a.png", "b.png", "c.png"]);
    assert_eq!(same.mean_ssim(), Some(1.0));
    assert!(same.rows.iter().all(|r| r.psnr == f64::INFINITY));
    assert_eq!(same.mean_psnr(), None);

    // Offset of 0.1 is not representable in 8 bits; 51/255 = 0.2 is.
    let single_gt = tmp.path().join("sgt");
    let single_pred = tmp.path().join("spred");
    std::fs::create_dir_all(&single_gt).unwrap();
    std::fs::create_dir_all(&single_pred).unwrap();
    let base = Tensor::full([1, 3, 12, 12], 0.2f32);
    write_png(&single_gt.join("x.png"), &base).unwrap();
    write_png(&single_pred.join("x.png"), &base.map(|v| v + 0.2)).unwrap();
    let r = eval_dir(&single_pred, &single_gt).unwrap();
    assert!((r.rows[0].psnr - 20.0 * 5f64.log10()).abs() < 1e-4);

    let pred = tmp.path().join("pred");
    write_dir(&pred, &["c.png", "a.png", "b.png"], 0.0);
    assert_eq!(eval_dir(&pred, &gt).unwrap(), same);

    write_dir(&pred, &["d.png"], 0.0);
    match eval_dir(&pred, &gt) {
        Err(Error::Data(DataError::Unmatched(ids))) => assert_eq!(ids, ["d.png"]),
        other => panic!("{other:?}"),
    }
}
