mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stride_zero_core::net::{forward, parse_spec, receptive_field, Mode};
use stride_zero_core::transform::{
    achievable_keep_factors, classifier_to_filter, remove_downsampling, shift_and_stitch, ClassifierSpec,
    PoolExpansion, RewriteOptions,
};
use stride_zero_core::{Error, WeightStore};

use common::{load_spec, random_inputs, random_strided_net};

fn keep(k: usize) -> RewriteOptions {
    RewriteOptions {
        keep_factor: k,
        ..RewriteOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rewrite_preserves_parameters_and_support(seed in 0u64..10_000, level in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_strided_net(&mut rng, 2 << level);
        let (dense, report) = remove_downsampling(&net, keep(1)).unwrap();
        let w = WeightStore::<f32>::init(&net, 0.1, seed).unwrap();
        prop_assert!(w.validate(&dense).is_ok());
        prop_assert_eq!(dense.param_count(), net.param_count());
        let (a, b) = (receptive_field(&net).unwrap(), receptive_field(&dense).unwrap());
        prop_assert_eq!(a.support, b.support);
        prop_assert_eq!(b.stride, 1);
        prop_assert_eq!(report.residual_stride, 1);
        // Nothing is left to remove.
        let (again, _) = remove_downsampling(&dense, keep(1)).unwrap();
        prop_assert_eq!(again, dense);
    }

    #[test]
    fn dilated_forward_equals_stitching(seed in 0u64..10_000, level in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_strided_net(&mut rng, 2 << level);
        let (dense, _) = remove_downsampling(&net, keep(1)).unwrap();
        let w = WeightStore::<f64>::init(&net, 0.5, seed).unwrap();
        let x = random_inputs::<f64>(&mut rng, &net, 32, 32);
        let direct = forward(&dense, &w, &x, Mode::Test).unwrap().into_output();
        let st = shift_and_stitch(&net, &w, &x).unwrap();
        let d = direct.shape();
        let cropped = st.dense.crop(0, 0, d.h, d.w).unwrap();
        prop_assert!(cropped.max_abs_diff(&direct).unwrap() < 1e-10);
        prop_assert_eq!(st.passes, st.stride * st.stride);
    }
}

#[test]
fn partial_rewrite_subsamples_the_dense_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let net = random_strided_net(&mut rng, 4);
        let w = WeightStore::<f64>::init(&net, 0.5, 3).unwrap();
        let x = random_inputs::<f64>(&mut rng, &net, 32, 32);
        let (full, _) = remove_downsampling(&net, keep(1)).unwrap();
        let (half, report) = remove_downsampling(&net, keep(2)).unwrap();
        assert_eq!(report.residual_stride, 2);
        let f = forward(&full, &w, &x, Mode::Test).unwrap().into_output();
        let h = forward(&half, &w, &x, Mode::Test).unwrap().into_output();
        let hs = h.shape();
        for c in 0..hs.c {
            for y in 0..hs.h {
                for xx in 0..hs.w {
                    if 2 * y < f.shape().h && 2 * xx < f.shape().w {
                        assert!((h.at(0, c, y, xx) - f.at(0, c, 2 * y, 2 * xx)).abs() < 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn padded_networks_agree_away_from_the_border() {
    let net = parse_spec(
        "input x channels=2\nc1 conv k=3 p=1 c=3\nr1 relu\np1 pool k=3 s=2 p=1\nc2 conv k=3 p=1 c=3\np2 pool k=2 s=2\nhead conv k=1 c=2\n",
    )
    .unwrap();
    let rf = receptive_field(&net).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let w = WeightStore::<f64>::init(&net, 0.5, 1).unwrap();
    let x = random_inputs::<f64>(&mut rng, &net, 32, 32);
    let (dense, _) = remove_downsampling(&net, keep(1)).unwrap();
    let direct = forward(&dense, &w, &x, Mode::Test).unwrap().into_output();
    let st = shift_and_stitch(&net, &w, &x).unwrap().dense;
    // Both outputs put the window of pixel y at y - 4; they only disagree
    // where that window leaves the image.
    let lead = 4;
    let mut compared = 0;
    for y in lead..32 + lead + 1 - rf.support {
        for xx in lead..32 + lead + 1 - rf.support {
            for c in 0..2 {
                let (a, b) = (direct.at(0, c, y, xx), st.at(0, c, y, xx));
                assert!((a - b).abs() < 1e-10, "({y}, {xx})");
                compared += 1;
            }
        }
    }
    assert!(compared > 0);
}

#[test]
fn dense_pools_only_differ_after_the_first_rate() {
    let net = load_spec("table5_base.net");
    let dense = RewriteOptions {
        keep_factor: 1,
        pool_expansion: PoolExpansion::Dense,
    };
    let (a, _) = remove_downsampling(&net, dense).unwrap();
    let (b, _) = remove_downsampling(&net, keep(1)).unwrap();
    assert_eq!(a.layer("pool1"), b.layer("pool1"));
    assert_ne!(a.layer("pool2"), b.layer("pool2"));
    assert_eq!(a.layer("conv4"), b.layer("conv4"));
}

#[test]
fn keep_factors_of_the_standard_network() {
    let net = load_spec("fcn_standard.net");
    assert_eq!(achievable_keep_factors(&net).unwrap(), vec![1, 2, 4, 8, 16]);
    let (same, report) = remove_downsampling(&net, keep(16)).unwrap();
    assert_eq!(report.residual_stride, 16);
    assert_eq!(receptive_field(&same).unwrap(), receptive_field(&net).unwrap());
    match remove_downsampling(&net, keep(3)) {
        Err(Error::Parameter(msg)) => assert!(msg.contains("[1, 2, 4, 8, 16]"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn upsample_factor_absorbs_the_rate() {
    let net = parse_spec("input x channels=1\nc conv k=3 p=1 c=2\np pool k=2 s=2\nq pool k=2 s=2\nu upsample f=2\nh conv k=3 p=1 c=2\n").unwrap();
    let (dense, report) = remove_downsampling(&net, keep(1)).unwrap();
    let up = report.rows.iter().find(|r| r.name == "u").unwrap();
    assert_eq!(up.upsample, Some((2, 1)));
    assert_eq!(dense.layer("h").unwrap().kind.geom().unwrap().dilation, 2);

    // A stride-1 net whose upsample undoes a pool: the pool is densified
    // and the upsample disappears.
    let flat = parse_spec("input x channels=1\np pool k=2 s=2\nu upsample f=2\n").unwrap();
    let (dense, report) = remove_downsampling(&flat, keep(1)).unwrap();
    assert_eq!(report.rows.iter().find(|r| r.name == "u").unwrap().upsample, Some((2, 1)));
    assert_eq!(dense.layer("p").unwrap().kind.geom().unwrap().stride, 1);

    let bad = parse_spec("input x channels=1\np pool k=2 s=2\nq pool k=3 s=3\nu upsample f=4\n");
    let bad = bad.unwrap();
    assert_eq!(remove_downsampling(&bad, keep(1)).unwrap_err().kind(), "semantic");
}

#[test]
fn surgery_rejects_unusable_classifiers() {
    let trunk = parse_spec("input x channels=1\nc conv k=3 c=2\n").unwrap();
    let cls = ClassifierSpec {
        trunk: trunk.clone(),
        input_size: None,
        fc_dims: vec![3],
    };
    assert_eq!(classifier_to_filter(&cls).unwrap_err().kind(), "semantic");
    let soft = parse_spec("input x channels=1\nc conv k=3 c=2\np softmax\n").unwrap();
    let cls = ClassifierSpec {
        trunk: soft,
        input_size: Some((8, 8)),
        fc_dims: vec![3],
    };
    assert_eq!(classifier_to_filter(&cls).unwrap_err().kind(), "semantic");
    let cls = ClassifierSpec {
        trunk,
        input_size: Some((8, 8)),
        fc_dims: vec![4, 3],
    };
    let filter = classifier_to_filter(&cls).unwrap();
    let fc1 = filter.layer("fc1").unwrap().kind.geom().unwrap();
    assert_eq!((fc1.kernel_h, fc1.kernel_w), (6, 6));
    assert_eq!(filter.classes(), Some(3));
}

#[test]
fn random_nets_have_the_requested_stride() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..30 {
        let s = [2, 4, 8][rng.gen_range(0..3)];
        let net = random_strided_net(&mut rng, s);
        let rf = receptive_field(&net).unwrap();
        assert_eq!(rf.stride, s);
        assert!(rf.support <= 32);
    }
}
