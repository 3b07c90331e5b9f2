use proptest::prelude::*;
use rsen::model::{init_params, param_count, Ablation, ModelConfig, ParameterStore, RsenModel};
use rsen::Tensor;

fn desk_model() -> RsenModel<f32> {
    let cfg = ModelConfig::desk();
    let params = init_params(&cfg, 3);
    RsenModel::new(cfg, params).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_dims_match_input(h in 8usize..=97, w in 8usize..=97) {
        let model = desk_model();
        let x = Tensor::from_fn([1, 3, h, w], |_, c, y, x| ((c + y * 3 + x * 5) % 13) as f32 / 12.0);
        let (r, b) = model.derain(&x).unwrap();
        prop_assert_eq!(r.dims(), x.dims());
        prop_assert_eq!(b.dims(), x.dims());
        prop_assert!(b.is_finite());
    }

    #[test]
    fn zero_network_is_identity(h in 8usize..40, w in 8usize..40) {
        let cfg = ModelConfig::desk();
        let model = RsenModel::new(cfg.clone(), ParameterStore::zeros(&cfg)).unwrap();
        let x = Tensor::from_fn([1, 3, h, w], |_, c, y, x| ((c * 7 + y * 3 + x) % 17) as f32 / 16.0);
        let (r, b) = model.derain(&x).unwrap();
        prop_assert!(r.data().iter().all(|&v| v == 0.0));
        prop_assert_eq!(b.data(), x.data());
    }
}

#[test]
fn count_matches_initialized_elements_for_every_ablation() {
    for scale in [1.0, 0.25] {
        for a in Ablation::ALL {
            let cfg = ModelConfig { channel_scale: scale, ..ModelConfig::default() }.with_ablation(a);
            assert_eq!(param_count(&cfg), init_params::<f32>(&cfg, 0).numel(), "{a:?} at {scale}");
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let model = desk_model();
    let x = Tensor::from_fn([2, 3, 20, 28], |n, c, y, x| ((n + c * 5 + y * 3 + x) % 9) as f32 / 8.0);
    let a = model.derain(&x).unwrap().1;
    let b = model.derain(&x).unwrap().1;
    assert_eq!(a.data(), b.data());
}

#[test]
fn batch_items_are_independent() {
    let model = desk_model();
    let x = Tensor::from_fn([2, 3, 16, 12], |n, c, y, x| ((n * 4 + c * 5 + y * 3 + x) % 9) as f32 / 8.0);
    let joint = model.derain(&x).unwrap().1;
    for n in 0..2 {
        let single = model.derain(&x.item(n)).unwrap().1;
        assert!(single.max_abs_diff(&joint.item(n)) < 1e-6);
    }
}
