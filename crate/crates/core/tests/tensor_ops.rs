mod common;

use hgdet::tensor::{
    bilinear_at, conv2d, depthwise_conv2d, elementwise, max_pool2d, nearest_upsample2x, resize_longer_side, skt,
    transpose_conv2d_up2, zero_pad_to, Activation, ConvSpec, TransposeSpec,
};
use hgdet::Tensor;
use proptest::prelude::*;

use common::*;

#[test]
fn conv_matches_oracle_on_fixed_case() {
    let spec = ConvSpec::new(3, 5, 3).with_bias(false);
    let x = Tensor::<f64>::random([1, 3, 8, 8], 1.0, 11);
    let w = Tensor::<f64>::random(spec.weight_dims(), 1.0, 12);
    let got = conv2d(&x, &w, None, &spec).unwrap();
    assert!(all_close(&got, &conv_ref(&x, &w, None, &spec), 1e-5));
}

#[test]
fn f32_conv_tracks_f64_oracle() {
    let spec = ConvSpec::new(8, 8, 3).with_bias(false);
    let x = Tensor::<f64>::random([1, 8, 8, 8], 1.0, 3);
    let w = Tensor::<f64>::random(spec.weight_dims(), 1.0, 4);
    let got: Tensor<f64> = conv2d(&x.cast::<f32>(), &w.cast::<f32>(), None, &spec).unwrap().cast();
    let want = conv_ref(&x, &w, None, &spec);
    let scale = 72.0;
    assert!(got.max_abs_diff(&want) <= 1e-5 * scale);
}

#[test]
fn wide_shapes() {
    let x = Tensor::<f32>::zeros([1, 256, 64, 64]);
    let spec = ConvSpec::new(256, 256, 3).with_bias(false);
    let w = Tensor::<f32>::zeros(spec.weight_dims());
    assert_eq!(conv2d(&x, &w, None, &spec).unwrap().dims(), [1, 256, 64, 64]);

    let dspec = ConvSpec::depthwise(128, 3);
    let x = Tensor::<f32>::zeros([1, 128, 64, 64]);
    let w = Tensor::<f32>::zeros(dspec.weight_dims());
    assert_eq!(depthwise_conv2d(&x, &w, None, &dspec).unwrap().dims(), [1, 128, 64, 64]);

    let x = Tensor::<f32>::zeros([1, 256, 64, 64]);
    let w = Tensor::<f32>::zeros(TransposeSpec::up2(256, 256).weight_dims());
    assert_eq!(transpose_conv2d_up2(&x, &w, None).unwrap().dims(), [1, 256, 128, 128]);
}

#[test]
fn transpose_matches_scatter_oracle() {
    let spec = TransposeSpec::up2(2, 3);
    let x = Tensor::<f64>::random([1, 2, 3, 3], 1.0, 5);
    let w = Tensor::<f64>::random(spec.weight_dims(), 1.0, 6);
    let got = transpose_conv2d_up2(&x, &w, None).unwrap();
    assert_eq!(got.dims(), [1, 3, 6, 6]);
    assert!(all_close(&got, &transpose_ref(&x, &w, None, &spec), 1e-5));
}

#[test]
fn nearest_then_pool_round_trips() {
    let x = Tensor::<f64>::random([1, 3, 5, 5], 1.0, 7);
    let up = nearest_upsample2x(&x);
    assert_eq!(max_pool2d(&up, 2, 2, 0).unwrap(), x);
    let one = nearest_upsample2x(&Tensor::<f32>::filled([1, 1, 1, 1], 7.0));
    assert_eq!(one.data(), &[7.0; 4]);
}

#[test]
fn pool_matches_window_oracle_exactly() {
    let x = Tensor::<f64>::random([1, 2, 7, 7], 1.0, 8);
    assert_eq!(max_pool2d(&x, 3, 1, 1).unwrap(), max_pool_ref(&x, 3, 1, 1));
    assert_eq!(max_pool2d(&x, 3, 2, 1).unwrap(), max_pool_ref(&x, 3, 2, 1));
}

#[test]
fn sigmoid_saturates_inside_unit_interval() {
    for v in [-50.0f64, 50.0, -1e4, 1e4] {
        let y = elementwise(&Tensor::<f64>::filled([1, 1, 1, 1], v), Activation::Sigmoid).data()[0];
        assert!(y > 0.0 && y < 1.0 && y.is_finite(), "{v} -> {y}");
    }
    let y = elementwise(&Tensor::<f64>::filled([1, 1, 1, 1], -50.0), Activation::Sigmoid).data()[0];
    assert!(rel_close(y, 1.928_749_847_963_918e-22, 1e-9));
    for v in [-50.0f32, 50.0, -200.0, 200.0] {
        let y = elementwise(&Tensor::<f32>::filled([1, 1, 1, 1], v), Activation::Sigmoid).data()[0];
        assert!(y > 0.0 && y < 1.0, "{v} -> {y}");
    }
    assert_eq!(elementwise(&Tensor::<f32>::filled([1, 1, 1, 1], 0.0), Activation::Sigmoid).data()[0], 0.5);
}

#[test]
fn longer_side_resizes() {
    let dims = |h, w, t| resize_longer_side(&Tensor::<f32>::zeros([1, 1, h, w]), t).unwrap().dims();
    assert_eq!(dims(510, 340, 255), [1, 1, 255, 170]);
    assert_eq!(dims(640, 480, 192), [1, 1, 192, 144]);
    assert_eq!(dims(100, 77, 255), [1, 1, 255, 196]);
}

#[test]
fn resize_matches_bilinear_oracle() {
    let img = Tensor::<f64>::random([1, 1, 100, 77], 1.0, 9);
    let out = resize_longer_side(&img, 255).unwrap();
    let (sy, sx) = (100.0 / 255.0, 77.0 / 196.0);
    for y in 0..255 {
        for x in 0..196 {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, 99.0);
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, 76.0);
            let (y0, x0) = (fy as usize, fx as usize);
            let (y1, x1) = ((y0 + 1).min(99), (x0 + 1).min(76));
            let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
            let v = |yy, xx| img.at([0, 0, yy, xx]);
            let want =
                (1.0 - ty) * ((1.0 - tx) * v(y0, x0) + tx * v(y0, x1)) + ty * ((1.0 - tx) * v(y1, x0) + tx * v(y1, x1));
            assert!(rel_close(out.at([0, 0, y, x]), want, 1e-5));
        }
    }
    assert_eq!(bilinear_at(&img, 0, 0, 3.0, 4.0), img.at([0, 0, 3, 4]));
}

#[test]
fn padding_layout() {
    let img = Tensor::<f32>::filled([1, 3, 192, 144], 1.0);
    let p = zero_pad_to(&img, 255, 255).unwrap();
    for y in 0..255 {
        for x in 0..255 {
            assert_eq!(p.at([0, 2, y, x]), if y < 192 && x < 144 { 1.0 } else { 0.0 });
        }
    }
    assert_eq!(zero_pad_to(&img, 192, 144).unwrap(), img);
}

fn small_dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=8, 1usize..=8, 1usize..=8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_oracle((c, h, w) in small_dims(), oc in 1usize..=8, k in prop::sample::select(vec![1usize, 3, 5]),
                   stride in 1usize..=2, seed in any::<u64>()) {
        let spec = ConvSpec::new(c, oc, k).with_stride(stride);
        let x = Tensor::<f64>::random([1, c, h, w], 1.0, seed);
        let wt = Tensor::<f64>::random(spec.weight_dims(), 1.0, seed ^ 1);
        let b: Vec<f64> = (0..oc).map(|i| i as f64 * 0.1 - 0.3).collect();
        let got = conv2d(&x, &wt, Some(&b), &spec).unwrap();
        prop_assert!(all_close(&got, &conv_ref(&x, &wt, Some(&b), &spec), 1e-5));
    }

    #[test]
    fn same_padding_preserves_dims((c, h, w) in small_dims(), k in prop::sample::select(vec![1usize, 3, 5, 7])) {
        let spec = ConvSpec::new(c, 2, k).with_bias(false);
        let out = conv2d(&Tensor::<f32>::zeros([1, c, h, w]), &Tensor::zeros(spec.weight_dims()), None, &spec).unwrap();
        prop_assert_eq!(out.dims(), [1, 2, h, w]);
    }

    #[test]
    fn depthwise_oracle((c, h, w) in small_dims(), stride in 1usize..=2, seed in any::<u64>()) {
        let spec = ConvSpec::depthwise(c, 3).with_stride(stride);
        let x = Tensor::<f64>::random([1, c, h, w], 1.0, seed);
        let wt = Tensor::<f64>::random(spec.weight_dims(), 1.0, seed ^ 2);
        prop_assert!(all_close(&depthwise_conv2d(&x, &wt, None, &spec).unwrap(), &conv_ref(&x, &wt, None, &spec), 1e-5));
    }

    #[test]
    fn transpose_doubles_and_matches((c, h, w) in small_dims(), oc in 1usize..=8, seed in any::<u64>()) {
        let spec = TransposeSpec::up2(c, oc);
        let x = Tensor::<f64>::random([1, c, h, w], 1.0, seed);
        let wt = Tensor::<f64>::random(spec.weight_dims(), 1.0, seed ^ 3);
        let got = transpose_conv2d_up2(&x, &wt, None).unwrap();
        prop_assert_eq!(got.dims(), [1, oc, 2 * h, 2 * w]);
        prop_assert!(all_close(&got, &transpose_ref(&x, &wt, None, &spec), 1e-5));
    }

    #[test]
    fn pool_oracle((c, h, w) in small_dims(), k in 1usize..=3, stride in 1usize..=2, seed in any::<u64>()) {
        prop_assume!(k <= h && k <= w);
        let x = Tensor::<f64>::random([1, c, h, w], 1.0, seed);
        let pad = k / 2;
        prop_assert_eq!(max_pool2d(&x, k, stride, pad).unwrap(), max_pool_ref(&x, k, stride, pad));
    }

    #[test]
    fn padding_conserves_mass(h in 1usize..20, w in 1usize..20, dh in 0usize..5, dw in 0usize..5, seed in any::<u64>()) {
        let x = Tensor::<f64>::random([1, 2, h, w], 1.0, seed);
        let p = zero_pad_to(&x, h + dh, w + dw).unwrap();
        prop_assert!((p.sum() - x.sum()).abs() < 1e-9);
    }

    #[test]
    fn resize_keeps_aspect(h in 1usize..600, w in 1usize..600, target in prop::sample::select(vec![192usize, 255])) {
        let out = resize_longer_side(&Tensor::<f32>::zeros([1, 1, h, w]), target).unwrap();
        let (oh, ow) = (out.height() as f64, out.width() as f64);
        prop_assert_eq!(out.height().max(out.width()), target);
        let (ih, iw) = (h as f64, w as f64);
        if h >= w {
            prop_assert!((ow - iw * oh / ih).abs() <= 1.0);
        } else {
            prop_assert!((oh - ih * ow / iw).abs() <= 1.0);
        }
    }

    #[test]
    fn skt_round_trip(c in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let t = Tensor::<f32>::random([1, c, h, w], 3.0, seed);
        prop_assert_eq!(skt::decode(&skt::encode(&t)).unwrap(), t);
    }
}
