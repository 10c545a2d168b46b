mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stride_zero_core::kernels::{
    bilinear_upsample, bilinear_upsample_backward, conv2d, conv2d_backward, maxpool2d, relu, softmax_channels,
    running::sliding_best, NO_SOURCE,
};
use stride_zero_core::{ConvParams, Shape, Tensor};

use common::random_tensor;

/// Direct seven-loop cross-correlation.
fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64], p: &ConvParams) -> Tensor<f64> {
    let (xs, ks) = (x.shape(), k.shape());
    let (oh, ow) = p.output_hw(xs.h, xs.w).unwrap();
    Tensor::from_fn(Shape::new(xs.n, ks.n, oh, ow), |n, co, oy, ox| {
        let mut acc = 0.0;
        for ci in 0..xs.c {
            for ky in 0..ks.h {
                for kx in 0..ks.w {
                    let iy = (oy * p.stride + ky * p.dilation) as isize - p.pad as isize;
                    let ix = (ox * p.stride + kx * p.dilation) as isize - p.pad as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                        acc += k.at(co, ci, ky, kx) * x.at(n, ci, iy as usize, ix as usize);
                    }
                }
            }
        }
        acc + b[co]
    })
    .unwrap()
}

/// Window maximum by exhaustive scan; ties to the lowest linear index.
fn naive_pool(x: &Tensor<f64>, p: &ConvParams) -> (Tensor<f64>, Vec<usize>) {
    let xs = x.shape();
    let (oh, ow) = p.output_hw(xs.h, xs.w).unwrap();
    let mut idx = Vec::new();
    let out = Tensor::from_fn(Shape::new(xs.n, xs.c, oh, ow), |n, c, oy, ox| {
        let mut best = (f64::NEG_INFINITY, NO_SOURCE);
        for ky in 0..p.kernel_h {
            for kx in 0..p.kernel_w {
                let iy = (oy * p.stride + ky * p.dilation) as isize - p.pad as isize;
                let ix = (ox * p.stride + kx * p.dilation) as isize - p.pad as isize;
                if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                    let i = x.offset(n, c, iy as usize, ix as usize);
                    let v = x.data()[i];
                    if v > best.0 || (v == best.0 && i < best.1) {
                        best = (v, i);
                    }
                }
            }
        }
        idx.push(best.1);
        best.0
    })
    .unwrap();
    (out, idx)
}

fn random_geom(rng: &mut ChaCha8Rng) -> ConvParams {
    ConvParams {
        kernel_h: rng.gen_range(1..=4),
        kernel_w: rng.gen_range(1..=4),
        stride: rng.gen_range(1..=3),
        pad: rng.gen_range(0..=3),
        dilation: rng.gen_range(1..=3),
    }
}

#[test]
fn conv_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tried = 0;
    while tried < 300 {
        let p = random_geom(&mut rng);
        let xs = Shape::new(rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=12), rng.gen_range(1..=12));
        if p.output_hw(xs.h, xs.w).is_err() {
            continue;
        }
        let x = random_tensor::<f64>(&mut rng, xs);
        let cout = rng.gen_range(1..=3);
        let k = random_tensor::<f64>(&mut rng, Shape::new(cout, xs.c, p.kernel_h, p.kernel_w));
        let b: Vec<f64> = (0..k.shape().n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = conv2d(&x, &k, &b, &p).unwrap();
        let want = naive_conv(&x, &k, &b, &p);
        assert_eq!(got.shape(), want.shape());
        assert!(got.max_abs_diff(&want).unwrap() < 1e-12, "{p:?} on {xs}");
        tried += 1;
    }
}

#[test]
fn dilated_kernel_equals_zero_interleaved_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let d = rng.gen_range(2..=4);
        let (kh, kw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let pad = rng.gen_range(0..=4);
        let x = random_tensor::<f32>(&mut rng, Shape::new(1, 2, 16, 14));
        let k = random_tensor::<f32>(&mut rng, Shape::new(2, 2, kh, kw));
        let (eh, ew) = (d * (kh - 1) + 1, d * (kw - 1) + 1);
        let wide = Tensor::from_fn(Shape::new(2, 2, eh, ew), |o, i, y, x| {
            if y % d == 0 && x % d == 0 {
                k.at(o, i, y / d, x / d)
            } else {
                0.0
            }
        })
        .unwrap();
        let dilated = ConvParams { kernel_h: kh, kernel_w: kw, stride: 1, pad, dilation: d };
        let dense = ConvParams { kernel_h: eh, kernel_w: ew, stride: 1, pad, dilation: 1 };
        let a = conv2d(&x, &k, &[0.5, -0.5], &dilated).unwrap();
        let b = conv2d(&x, &wide, &[0.5, -0.5], &dense).unwrap();
        assert_eq!(a.shape(), b.shape());
        assert!(a.max_abs_diff(&b).unwrap() < 1e-5);
    }
}

#[test]
fn conv_backward_is_the_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let p = random_geom(&mut rng);
        let xs = Shape::new(1, 2, 10, 9);
        if p.output_hw(xs.h, xs.w).is_err() {
            continue;
        }
        let x = random_tensor::<f64>(&mut rng, xs);
        let k = random_tensor::<f64>(&mut rng, Shape::new(3, 2, p.kernel_h, p.kernel_w));
        let y = conv2d(&x, &k, &[0.0; 3], &p).unwrap();
        let g = random_tensor::<f64>(&mut rng, y.shape());
        let grads = conv2d_backward(&x, &k, &p, &g).unwrap();
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| a.data().iter().zip(b.data()).map(|(u, v)| u * v).sum::<f64>();
        // <conv(x), g> is linear in x and in k separately.
        let lhs = dot(&y, &g);
        assert!((lhs - dot(&x, &grads.input)).abs() < 1e-9 * (1.0 + lhs.abs()));
        assert!((lhs - dot(&k, &grads.kernels)).abs() < 1e-9 * (1.0 + lhs.abs()));
        let bias_sum: f64 = g.data().iter().sum();
        assert!((grads.bias.iter().sum::<f64>() - bias_sum).abs() < 1e-9);
    }
}

#[test]
fn pool_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut tried = 0;
    while tried < 1000 {
        let mut p = random_geom(&mut rng);
        p.pad = p.pad.min(p.kernel_h.min(p.kernel_w) - 1);
        let xs = Shape::new(rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(1..=11), rng.gen_range(1..=11));
        if p.output_hw(xs.h, xs.w).is_err() {
            continue;
        }
        // Few distinct values so ties are common.
        let x = Tensor::from_fn(xs, |_, _, _, _| f64::from(rng.gen_range(0..4u8))).unwrap();
        let (got, args) = maxpool2d(&x, &p).unwrap();
        let (want, idx) = naive_pool(&x, &p);
        assert_eq!(got, want, "{p:?} on {xs}");
        assert_eq!(args.indices, idx, "{p:?} on {xs}");
        tried += 1;
    }
}

#[test]
fn sliding_best_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..500 {
        let n = rng.gen_range(1..40);
        let k = rng.gen_range(1..=n);
        let seq: Vec<i32> = (0..n).map(|_| rng.gen_range(-5..5)).collect();
        let got = sliding_best(&seq, k, |a, b| a > b);
        let want: Vec<i32> = seq.windows(k).map(|w| *w.iter().max().unwrap()).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn bilinear_follows_half_pixel_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..30 {
        let f = rng.gen_range(1..=5);
        let xs = Shape::new(1, 2, rng.gen_range(1..=6), rng.gen_range(1..=6));
        let x = random_tensor::<f64>(&mut rng, xs);
        let y = bilinear_upsample(&x, f).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, xs.h * f, xs.w * f));
        let coord = |i: usize, n: usize| -> (usize, usize, f64) {
            let s = ((i as f64 + 0.5) / f as f64 - 0.5).max(0.0).min((n - 1) as f64);
            let lo = s.floor() as usize;
            (lo, (lo + 1).min(n - 1), s - lo as f64)
        };
        for c in 0..2 {
            for oy in 0..xs.h * f {
                for ox in 0..xs.w * f {
                    let (y0, y1, a) = coord(oy, xs.h);
                    let (x0, x1, b) = coord(ox, xs.w);
                    let v = (1.0 - a) * ((1.0 - b) * x.at(0, c, y0, x0) + b * x.at(0, c, y0, x1))
                        + a * ((1.0 - b) * x.at(0, c, y1, x0) + b * x.at(0, c, y1, x1));
                    assert!((y.at(0, c, oy, ox) - v).abs() < 1e-12);
                }
            }
        }
        // The backward pass is the transpose.
        let g = random_tensor::<f64>(&mut rng, y.shape());
        let gx = bilinear_upsample_backward(&g, xs, f).unwrap();
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| a.data().iter().zip(b.data()).map(|(u, v)| u * v).sum::<f64>();
        assert!((dot(&y, &g) - dot(&x, &gx)).abs() < 1e-9);
    }
}

#[test]
fn upsampling_a_constant_is_constant() {
    let x = Tensor::<f32>::full(Shape::new(1, 1, 3, 5), 2.5).unwrap();
    let y = bilinear_upsample(&x, 4).unwrap();
    assert!(y.data().iter().all(|&v| v == 2.5));
}

proptest! {
    #[test]
    fn output_extent_formula(h in 1usize..40, k in 1usize..6, s in 1usize..4, p in 0usize..4, d in 1usize..4) {
        let g = ConvParams::square(k, s, p, d);
        let extent = d * (k - 1) + 1;
        match g.output_hw(h, h) {
            Ok((oh, ow)) => {
                prop_assert_eq!(oh, (h + 2 * p - extent) / s + 1);
                prop_assert_eq!(oh, ow);
            }
            Err(_) => prop_assert!(h + 2 * p < extent),
        }
    }

    #[test]
    fn softmax_is_a_distribution(vals in prop::collection::vec(-50.0f64..50.0, 12)) {
        let x = Tensor::from_vec(Shape::new(1, 3, 2, 2), vals).unwrap();
        let p = softmax_channels(&x);
        for y in 0..2 {
            for xx in 0..2 {
                let s: f64 = (0..3).map(|c| p.at(0, c, y, xx)).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!((0..3).all(|c| p.at(0, c, y, xx) >= 0.0));
            }
        }
    }

    #[test]
    fn relu_is_idempotent(vals in prop::collection::vec(-5.0f32..5.0, 8)) {
        let x = Tensor::from_vec(Shape::new(1, 2, 2, 2), vals).unwrap();
        let once = relu(&x);
        prop_assert!(once.data().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(relu(&once), once);
    }
}
