use proptest::prelude::*;
use rsen::tensor::{self, conv2d, ConvParams};
use rsen::Tensor;

fn tensor_strategy(n: usize, c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * c * h * w).prop_map(move |v| Tensor::new([n, c, h, w], v).unwrap())
}

fn dims_and_tensor() -> impl Strategy<Value = Tensor<f64>> {
    (1usize..3, 1usize..4, 1usize..9, 1usize..9).prop_flat_map(|(n, c, h, w)| tensor_strategy(n, c, h, w))
}

fn conv_params(cin: usize, cout: usize, k: usize, stride: usize, seed: u64) -> ConvParams<f64> {
    let f = |i: usize| (((i as u64 * 2654435761 + seed * 97) % 1000) as f64 / 500.0) - 1.0;
    ConvParams {
        weight: Tensor::from_fn([cout, cin, k, k], |o, i, y, x| f(((o * cin + i) * k + y) * k + x)),
        bias: Tensor::from_fn([1, cout, 1, 1], |_, o, _, _| f(o + 1000)),
        stride,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shuffle_round_trip(
        (x, r) in (1usize..3, 1usize..3, 1usize..6, 1usize..6, 1usize..4)
            .prop_flat_map(|(n, c, h, w, r)| (tensor_strategy(n, c * r * r, h, w), Just(r))),
    ) {
        let d = x.dims();
        let up = tensor::pixel_shuffle(&x, r).unwrap();
        prop_assert_eq!(up.dims().as_array(), [d.n, d.c / (r * r), d.h * r, d.w * r]);
        let back = tensor::space_to_depth(&up, r).unwrap();
        prop_assert_eq!(back.data(), x.data());
    }

    #[test]
    fn depth_round_trip(x in dims_and_tensor(), r in 1usize..3) {
        let d = x.dims();
        let x = Tensor::from_fn([d.n, d.c, d.h * r, d.w * r], |n, c, h, w| x.at(n, c, h / r, w / r) + (h % r * 2 + w % r) as f64);
        let down = tensor::space_to_depth(&x, r).unwrap();
        let back = tensor::pixel_shuffle(&down, r).unwrap();
        prop_assert_eq!(back.data(), x.data());
    }

    #[test]
    fn stride_one_conv_keeps_size(x in dims_and_tensor(), cout in 1usize..4, k in prop::sample::select(vec![1usize, 3]), seed in 0u64..100) {
        let d = x.dims();
        let y = conv2d(&x, &conv_params(d.c, cout, k, 1, seed)).unwrap();
        prop_assert_eq!(y.dims().as_array(), [d.n, cout, d.h, d.w]);
        prop_assert!(y.is_finite());
    }

    #[test]
    fn stride_two_conv_halves_rounding_up(x in dims_and_tensor(), seed in 0u64..100) {
        let d = x.dims();
        let y = conv2d(&x, &conv_params(d.c, 2, 3, 2, seed)).unwrap();
        prop_assert_eq!(y.dims().as_array(), [d.n, 2, d.h.div_ceil(2), d.w.div_ceil(2)]);
    }

    #[test]
    fn conv_is_linear_in_input(
        (a, b) in (1usize..3, 1usize..4, 1usize..8, 1usize..8)
            .prop_flat_map(|(n, c, h, w)| (tensor_strategy(n, c, h, w), tensor_strategy(n, c, h, w))),
        alpha in -2.0f64..2.0,
        stride in 1usize..3,
        seed in 0u64..100,
    ) {
        let mut p = conv_params(a.dims().c, 3, 3, stride, seed);
        p.bias = Tensor::zeros(p.bias.dims());
        let lhs = conv2d(&tensor::add(&tensor::scale(&a, alpha), &b).unwrap(), &p).unwrap();
        let rhs = tensor::add(&tensor::scale(&conv2d(&a, &p).unwrap(), alpha), &conv2d(&b, &p).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn elementwise_ops_stay_finite(x in dims_and_tensor()) {
        let big = tensor::scale(&x, 400.0);
        prop_assert!(tensor::sigmoid(&big).is_finite());
        prop_assert!(tensor::sigmoid(&big).data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(tensor::relu(&big).data().iter().all(|&v| v >= 0.0));
        prop_assert!(tensor::global_avg_pool(&x).unwrap().is_finite());
    }

    #[test]
    fn reflect_pad_then_crop_is_identity(x in dims_and_tensor(), ph in 0usize..4, pw in 0usize..4) {
        let d = x.dims();
        let p = tensor::reflect_pad(&x, ph, pw).unwrap();
        prop_assert_eq!(p.dims().as_array(), [d.n, d.c, d.h + ph, d.w + pw]);
        let back = tensor::crop(&p, d.h, d.w).unwrap();
        prop_assert_eq!(back.data(), x.data());
    }
}

#[test]
fn mse_unit_examples() {
    let one = Tensor::<f64>::full([1, 1, 1, 1], 1.0);
    let zero = Tensor::<f64>::zeros([1, 1, 1, 1]);
    assert_eq!(tensor::mse(&one, &zero).unwrap(), 0.5);
    assert_eq!(tensor::mse(&one, &one).unwrap(), 0.0);
    let x = Tensor::from_fn([2, 3, 4, 4], |n, c, h, w| (n + c + h * w) as f64);
    let shifted = x.map(|v| v + 0.3);
    assert!((tensor::mse(&shifted, &x).unwrap() - 0.045).abs() < 1e-12);
    assert!(tensor::mse(&x, &Tensor::zeros([2, 3, 4, 5])).is_err());
}
