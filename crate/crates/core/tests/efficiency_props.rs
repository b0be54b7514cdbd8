use dustmns::efficiency::{
    advise_k, delta_theta, lambda_bound, phi_k, re_mns_vs_dustsrs, theta_star, AdviceConstraints,
};
use dustmns::mathkit::ztbin_mean;
use proptest::prelude::*;

#[test]
fn theta_star_satisfies_defining_identity() {
    for k in 2..=12u32 {
        let t = theta_star(k).unwrap();
        assert!((phi_k(1.0 - t, k) - f64::from(k * k)).abs() < 1e-9, "k={k}");
        assert!(delta_theta(t, k).unwrap().abs() < 1e-9);
    }
}

#[test]
fn delta_is_strictly_decreasing() {
    for k in 2..=10u32 {
        let values: Vec<f64> = (1..1000)
            .map(|i| delta_theta(i as f64 / 1000.0, k).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]), "k={k}");
    }
}

#[test]
fn delta_sign_tracks_threshold() {
    for k in 2..=10u32 {
        let star = theta_star(k).unwrap();
        for i in 1..200 {
            let theta = i as f64 / 200.0;
            if (theta - star).abs() < 1e-9 {
                continue;
            }
            let d = delta_theta(theta, k).unwrap();
            assert_eq!(d > 0.0, theta < star, "k={k}, theta={theta}");
            let re = re_mns_vs_dustsrs(theta, k).unwrap();
            assert_eq!(re > 1.0, theta < star, "k={k}, theta={theta}");
        }
    }
}

#[test]
fn delta_is_not_symmetric() {
    let a = delta_theta(0.2, 3).unwrap();
    let b = delta_theta(0.8, 3).unwrap();
    assert!((a - b).abs() > 0.1, "{a} vs {b}");
}

#[test]
fn lambda_bound_at_ztbin_mean_lag() {
    for nu in 1..=8u32 {
        for &rho in &[0.1, 0.35, 0.6, 1.0] {
            let mean = ztbin_mean(nu, rho).unwrap();
            let oracle_mean = f64::from(nu) * rho / (1.0 - (1.0 - rho).powi(nu as i32));
            assert!((mean - oracle_mean).abs() < 1e-12);
            for &eta0 in &[0.2, 0.5] {
                let bound = lambda_bound(eta0, 20, mean).unwrap().bound;
                assert!((bound - (1.0 + 19.0 * eta0.powf(oracle_mean))).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn advice_limits() {
    let none = advise_k(0.6, &[4, 5], 20, &AdviceConstraints::default()).unwrap();
    assert!(none.ranked.is_empty());
    assert_eq!(none.rejected.len(), 2);
    let tiny = advise_k(1e-6, &[3, 2, 5, 4], 20, &AdviceConstraints::default()).unwrap();
    let ks: Vec<u32> = tiny.ranked.iter().map(|a| a.k).collect();
    assert_eq!(ks, [5, 4, 3, 2]);
    let capped = advise_k(
        0.0866,
        &[2, 3, 4, 5],
        20,
        &AdviceConstraints {
            max_k: Some(3),
            max_abs_bias: None,
        },
    )
    .unwrap();
    assert_eq!(
        capped.ranked.iter().map(|a| a.k).collect::<Vec<_>>(),
        [3, 2]
    );
}

fn lag_distribution() -> impl Strategy<Value = Vec<(u32, f64)>> {
    prop::collection::vec((1u32..12, 0.01f64..1.0), 1..=6).prop_map(|raw| {
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        raw.into_iter().map(|(l, w)| (l, w / total)).collect()
    })
}

proptest! {
    #[test]
    fn lambda_bound_is_below_expected_penalty(
        dist in lag_distribution(),
        eta0 in 0.01f64..0.99,
        n in 2usize..100,
    ) {
        let mean: f64 = dist.iter().map(|&(l, p)| f64::from(l) * p).sum();
        let expected: f64 = dist.iter().map(|&(l, p)| p * eta0.powi(l as i32)).sum();
        let exact = 1.0 + (n - 1) as f64 * expected;
        let bound = lambda_bound(eta0, n, mean).unwrap().bound;
        prop_assert!(exact >= bound - 1e-12, "{exact} < {bound}");
    }
}
