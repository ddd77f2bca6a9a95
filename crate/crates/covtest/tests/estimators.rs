//! Estimator correctness against the brute-force tuple-enumeration oracle,
//! plus the algebraic invariances the estimators promise.

mod common;

use common::*;
use covtest::ustat::{
    empirical_rates, far_threshold, multi_stat, multi_stat_centered, multi_stat_with,
    pair_variance, pairwise_stat, pairwise_stat_with, standardize, standardize_with, StatConfig,
    StatError, VstForm,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn estimators_match_the_tuple_oracle_across_shapes() {
    let mut r = rng(0xE571);
    for p in 1..=4 {
        for n in 4..=8 {
            for _ in 0..3 {
                let ws = int_window(p, n, &mut r);
                let wt = int_window(p, n, &mut r);
                let a = covtest::ustat::tr_sq_estimate(&window_of(ws.clone())).unwrap();
                assert_close(a, oracle_a(&ws), 1e-12, "squared-trace estimate");
                let c = covtest::ustat::tr_cross_estimate(
                    &window_of(ws.clone()),
                    &window_of(wt.clone()),
                )
                .unwrap();
                assert_close(c, oracle_c(&ws, &wt), 1e-12, "cross-trace estimate");
                let v2 = pairwise_stat(&window_of(ws.clone()), &window_of(wt.clone())).unwrap();
                assert_close(v2, oracle_vst(&ws, &wt, true), 1e-12, "pair statistic");
                let v1 = pairwise_stat_with(
                    &window_of(ws.clone()),
                    &window_of(wt.clone()),
                    VstForm::Literal,
                )
                .unwrap();
                assert_close(v1, oracle_vst(&ws, &wt, false), 1e-12, "single-C pair form");
            }
        }
    }
}

#[test]
fn pooled_statistic_matches_the_oracle_pooling() {
    let mut r = rng(0xF00D);
    for q in 2..=4 {
        for _ in 0..5 {
            let mats: Vec<DMatrix<f64>> = (0..q).map(|_| int_window(3, 6, &mut r)).collect();
            let flow = flow_of(mats.iter().cloned().map(window_of).collect());
            assert_close(
                multi_stat(&flow).unwrap(),
                oracle_multi(&mats, true),
                1e-12,
                "pooled statistic",
            );
            assert_close(
                multi_stat_with(&flow, VstForm::Literal).unwrap(),
                oracle_multi(&mats, false),
                1e-12,
                "pooled single-C statistic",
            );
            let centered: Vec<DMatrix<f64>> = mats.iter().map(oracle_center).collect();
            assert_close(
                multi_stat_centered(&flow, VstForm::TwoC).unwrap(),
                oracle_multi(&centered, true),
                1e-11,
                "centered pooled statistic",
            );
        }
    }
}

#[test]
fn centering_does_not_move_the_statistic() {
    // The cross estimator discards location by construction, so evaluating
    // on raw or centered data must agree up to rounding.
    let mut r = rng(0xCE17);
    for _ in 0..20 {
        let mats: Vec<DMatrix<f64>> = (0..3)
            .map(|_| int_window(3, 7, &mut r).add_scalar(2.5))
            .collect();
        let flow = flow_of(mats.iter().cloned().map(window_of).collect());
        let raw = multi_stat(&flow).unwrap();
        let centered = multi_stat_centered(&flow, VstForm::TwoC).unwrap();
        let scale = mats
            .iter()
            .map(|m| oracle_a(m).abs())
            .fold(1.0f64, f64::max);
        assert!(
            (raw - centered).abs() <= 1e-9 * scale,
            "raw {raw} vs centered {centered}"
        );
    }
}

#[test]
fn location_shifts_leave_the_pair_statistic_unchanged() {
    let mut r = rng(0x10CA);
    for _ in 0..20 {
        let ws = int_window(4, 6, &mut r);
        let wt = int_window(4, 6, &mut r);
        let base = pairwise_stat(&window_of(ws.clone()), &window_of(wt.clone())).unwrap();
        let shifted = pairwise_stat(
            &window_of(ws.add_scalar(3.0)),
            &window_of(wt.add_scalar(-7.0)),
        )
        .unwrap();
        let scale = oracle_a(&ws).abs().max(oracle_a(&wt).abs()).max(1.0);
        assert!(
            (base - shifted).abs() <= 1e-8 * scale,
            "shift moved the statistic: {base} vs {shifted}"
        );
    }
}

#[test]
fn squared_trace_estimate_is_unbiased_under_known_covariance() {
    // Diagonal covariance diag(1, 2, 3, 4): tr(Sigma^2) = 1 + 4 + 9 + 16.
    let sds = [1.0f64, 2.0f64.sqrt(), 3.0f64.sqrt(), 2.0];
    let truth = 30.0;
    let mut r = rng(0x0B1A5);
    let reps = 4000;
    let vals: Vec<f64> = (0..reps)
        .map(|_| {
            let w = gaussian_window(4, 12, &sds, &mut r);
            covtest::ustat::tr_sq_estimate(&w).unwrap()
        })
        .collect();
    let (mean, sd) = mean_and_sd(&vals);
    let se = sd / (reps as f64).sqrt();
    assert!(
        (mean - truth).abs() <= 3.0 * se,
        "biased: mean {mean}, truth {truth}, se {se}"
    );
}

#[test]
fn cross_trace_estimate_is_unbiased_across_independent_windows() {
    // Independent windows share Sigma = diag(1, 2, 3), so the cross trace
    // is tr(Sigma^2) = 14.
    let sds = [1.0f64, 2.0f64.sqrt(), 3.0f64.sqrt()];
    let truth = 14.0;
    let mut r = rng(0xC405);
    let reps = 4000;
    let vals: Vec<f64> = (0..reps)
        .map(|_| {
            let ws = gaussian_window(3, 10, &sds, &mut r);
            let wt = gaussian_window(3, 10, &sds, &mut r);
            covtest::ustat::tr_cross_estimate(&ws, &wt).unwrap()
        })
        .collect();
    let (mean, sd) = mean_and_sd(&vals);
    let se = sd / (reps as f64).sqrt();
    assert!(
        (mean - truth).abs() <= 3.0 * se,
        "biased: mean {mean}, truth {truth}, se {se}"
    );
}

#[test]
fn pair_statistic_centers_on_zero_under_equal_covariance() {
    let sds = [1.0, 1.5, 0.5];
    let mut r = rng(0x2E40);
    let reps = 4000;
    let vals: Vec<f64> = (0..reps)
        .map(|_| {
            let ws = gaussian_window(3, 10, &sds, &mut r);
            let wt = gaussian_window(3, 10, &sds, &mut r);
            pairwise_stat(&ws, &wt).unwrap()
        })
        .collect();
    let (mean, sd) = mean_and_sd(&vals);
    let se = sd / (reps as f64).sqrt();
    assert!(
        mean.abs() <= 3.0 * se,
        "nonzero center under the null: mean {mean}, se {se}"
    );
}

#[test]
fn standardized_false_alarm_rate_tracks_the_nominal_level() {
    let mut r = rng(0x5EED);
    let reps = 800;
    let scores: Vec<f64> = (0..reps)
        .map(|_| {
            let flow = std_normal_flow(10, 30, 5, &mut r);
            standardize(&flow).unwrap().score
        })
        .collect();
    let alpha = far_threshold(0.05).unwrap();
    let (far, _) = empirical_rates(&scores, &scores, alpha).unwrap();
    assert!(
        (0.02..=0.10).contains(&far),
        "false-alarm rate {far} strayed from the nominal 0.05"
    );
}

#[test]
fn zero_flows_score_zero_by_convention() {
    let zero = DMatrix::zeros(3, 8);
    let flow = flow_of(vec![window_of(zero.clone()), window_of(zero)]);
    let result = standardize(&flow).unwrap();
    assert_eq!(result.statistic, 0.0);
    assert_eq!(result.std_dev, 0.0);
    assert_eq!(result.score, 0.0);
}

#[test]
fn zero_spread_with_a_nonzero_statistic_is_degenerate() {
    // Sign-pattern windows make every centered cross-Gram entry share one
    // magnitude, so the calibrated spread vanishes while the statistic is
    // 8/3 analytically.
    let ws = DMatrix::from_row_slice(1, 4, &[1.0, -1.0, 1.0, -1.0]);
    let wt = DMatrix::from_row_slice(1, 4, &[1.0, 1.0, -1.0, -1.0]);
    let flow = flow_of(vec![window_of(ws), window_of(wt)]);
    match standardize(&flow) {
        Err(StatError::DegenerateVariance { statistic }) => {
            assert_close(statistic, 8.0 / 3.0, 1e-12, "degenerate statistic value");
        }
        other => panic!("expected a degenerate-variance error, got {other:?}"),
    }
}

#[test]
fn standardize_reports_the_pair_count() {
    let mut r = rng(0x9A17);
    let flow = std_normal_flow(4, 12, 5, &mut r);
    let result = standardize(&flow).unwrap();
    assert_eq!(result.pair_count, 10);
    assert!(result.std_dev > 0.0);
    assert_close(
        result.score,
        result.statistic / result.std_dev,
        1e-15,
        "score definition",
    );
}

#[test]
fn sigma_modes_share_the_statistic_and_differ_in_spread() {
    let mut r = rng(0x51617);
    let flow = std_normal_flow(6, 20, 4, &mut r);
    let base = standardize(&flow).unwrap();
    for sigma in [
        covtest::ustat::SigmaMode::Calibrated,
        covtest::ustat::SigmaMode::ScaledPairSum,
        covtest::ustat::SigmaMode::RawPairSum,
    ] {
        let config = StatConfig {
            sigma,
            ..StatConfig::default()
        };
        let result = standardize_with(&flow, &config).unwrap();
        assert_close(result.statistic, base.statistic, 1e-12, "shared statistic");
        assert!(result.std_dev > 0.0);
    }
}

#[test]
fn pair_variance_reports_clamping() {
    let mut r = rng(0xC1A3);
    let ws = gaussian_window(3, 10, &[1.0, 1.0, 1.0], &mut r);
    let wt = gaussian_window(3, 10, &[1.0, 1.0, 1.0], &mut r);
    let pv = pair_variance(&ws, &wt).unwrap();
    assert!(pv.value >= 0.0);
    if pv.clamped {
        assert_eq!(pv.value, 0.0);
    }
}

#[test]
fn empty_score_sets_are_rejected() {
    assert!(matches!(
        empirical_rates(&[], &[1.0], 0.0),
        Err(StatError::EmptyScores)
    ));
    assert!(matches!(
        empirical_rates(&[1.0], &[], 0.0),
        Err(StatError::EmptyScores)
    ));
}

#[test]
fn windows_below_four_samples_are_rejected() {
    let w = window_of(DMatrix::from_element(2, 3, 1.0));
    assert!(matches!(
        covtest::ustat::tr_sq_estimate(&w),
        Err(StatError::WindowTooSmall { got: 3 })
    ));
}

// ===== property tests =====

fn small_window() -> impl Strategy<Value = DMatrix<f64>> {
    ((1usize..=3), (4usize..=7)).prop_flat_map(|(p, n)| {
        proptest::collection::vec(-5i32..=5, p * n)
            .prop_map(move |vals| DMatrix::from_fn(p, n, |i, j| vals[i * n + j] as f64))
    })
}

fn window_pair() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    ((1usize..=3), (4usize..=7)).prop_flat_map(|(p, n)| {
        let cells = proptest::collection::vec(-5i32..=5, p * n);
        (cells.clone(), cells).prop_map(move |(a, b)| {
            (
                DMatrix::from_fn(p, n, |i, j| a[i * n + j] as f64),
                DMatrix::from_fn(p, n, |i, j| b[i * n + j] as f64),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_pair_statistic_is_symmetric((a, b) in window_pair()) {
        let ab = pairwise_stat(&window_of(a.clone()), &window_of(b.clone())).unwrap();
        let ba = pairwise_stat(&window_of(b), &window_of(a)).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.abs().max(1.0));
    }

    #[test]
    fn prop_pair_statistic_scales_as_the_fourth_power(
        (a, b) in window_pair(),
        c in 0.5f64..2.0,
    ) {
        let base = pairwise_stat(&window_of(a.clone()), &window_of(b.clone())).unwrap();
        let scaled = pairwise_stat(
            &window_of(a.map(|x| c * x)),
            &window_of(b.map(|x| c * x)),
        ).unwrap();
        prop_assert!(
            (scaled - c.powi(4) * base).abs() <= 1e-9 * base.abs().max(1.0),
            "c^4 equivariance broke: {} vs {}", scaled, c.powi(4) * base,
        );
    }

    #[test]
    fn prop_squared_trace_matches_oracle(w in small_window()) {
        let est = covtest::ustat::tr_sq_estimate(&window_of(w.clone())).unwrap();
        prop_assert!((est - oracle_a(&w)).abs() <= 1e-10 * oracle_a(&w).abs().max(1.0));
    }

    #[test]
    fn prop_column_permutation_is_invisible(w in small_window()) {
        let rotated = {
            let n = w.ncols();
            DMatrix::from_fn(w.nrows(), n, |i, j| w[(i, (j + 1) % n)])
        };
        let base = covtest::ustat::tr_sq_estimate(&window_of(w)).unwrap();
        let rot = covtest::ustat::tr_sq_estimate(&window_of(rotated)).unwrap();
        prop_assert!((base - rot).abs() <= 1e-10 * base.abs().max(1.0));
    }

    #[test]
    fn prop_pooled_statistic_ignores_window_order(
        mats in proptest::collection::vec(
            proptest::collection::vec(-5i32..=5, 2 * 6)
                .prop_map(|v| DMatrix::from_fn(2, 6, |i, j| v[i * 6 + j] as f64)),
            2..=4,
        )
    ) {
        let forward = flow_of(mats.iter().cloned().map(window_of).collect());
        let mut rev = mats.clone();
        rev.reverse();
        let backward = flow_of(rev.into_iter().map(window_of).collect());
        let a = multi_stat(&forward).unwrap();
        let b = multi_stat(&backward).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }
}
