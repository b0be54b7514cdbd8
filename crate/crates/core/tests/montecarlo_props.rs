use dustmns::design::Measurement;
use dustmns::frame::morans_i;
use dustmns::mathkit::reg_inc_beta;
use dustmns::montecarlo::{
    fraction_for_mean_m, run_study, DesignLabel, McConfig, McResult, SynthSpec, ThresholdRule,
};
use dustmns::sampler::DustParams;

fn correlated_frame() -> dustmns::frame::ArealFrame {
    SynthSpec::new(50, 50, 2.0, 20.0, 0.6, 3)
        .with_sizes(9.0, 1.2)
        .with_aux_tau(0.75)
        .build()
        .unwrap()
}

fn in_pool(threads: usize, f: impl FnOnce() -> McResult + Send) -> McResult {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn study_is_bit_identical_across_worker_counts() {
    let frame = SynthSpec::new(12, 12, 2.0, 10.0, 0.5, 8)
        .with_sizes(6.0, 1.0)
        .with_aux_tau(0.6)
        .build()
        .unwrap();
    let config = McConfig::new(
        6,
        3,
        Measurement::Fraction { f_m: 0.05 },
        DustParams::new(0.3).unwrap(),
    )
    .with_replicates(300)
    .with_seed(99);
    let one = in_pool(1, || run_study(&frame, &config).unwrap());
    let four = in_pool(4, || run_study(&frame, &config).unwrap());
    let mut a = Vec::new();
    let mut b = Vec::new();
    one.write_csv(&mut a, true).unwrap();
    four.write_csv(&mut b, true).unwrap();
    assert_eq!(a, b);
    for (x, y) in one.summaries.iter().zip(&four.summaries) {
        assert_eq!(x.mse.to_bits(), y.mse.to_bits());
        assert_eq!(x.mse_se.to_bits(), y.mse_se.to_bits());
    }
}

#[test]
fn dust_without_repulsion_matches_srs() {
    let frame = SynthSpec::new(30, 30, 2.0, 8.0, 0.5, 5).build().unwrap();
    let config = McConfig::new(20, 1, Measurement::Exact, DustParams::new(0.0).unwrap())
        .with_replicates(5000)
        .with_designs(&[DesignLabel::Srs, DesignLabel::DustSrs])
        .with_seed(6);
    let result = run_study(&frame, &config).unwrap();
    let ratio = result.summary(DesignLabel::DustSrs).unwrap().mse
        / result.summary(DesignLabel::Srs).unwrap().mse;
    assert!((0.9..=1.1).contains(&ratio), "{ratio}");
}

#[test]
fn relative_efficiency_is_stable_in_n() {
    let frame = correlated_frame();
    let f_m = fraction_for_mean_m(&frame, 25.0).unwrap();
    let re = |n: usize| {
        let config = McConfig::new(
            n,
            3,
            Measurement::Fraction { f_m },
            DustParams::new(0.3).unwrap(),
        )
        .with_replicates(2000)
        .with_threshold(ThresholdRule::Quantile { q: 0.91 })
        .with_designs(&[DesignLabel::DustSrs, DesignLabel::DustMnsPerfect])
        .with_seed(12);
        run_study(&frame, &config)
            .unwrap()
            .summary(DesignLabel::DustMnsPerfect)
            .unwrap()
            .re_vs_dust_srs
            .unwrap()
    };
    let (re10, re20) = (re(10), re(20));
    assert!(
        (re10 - re20).abs() / re20 < 0.25,
        "RE n=10 {re10}, n=20 {re20}"
    );
}

#[test]
fn synthetic_marginal_matches_beta() {
    let (a, b) = (2.0, 5.0);
    let frame = SynthSpec::new(50, 50, a, b, 0.6, 17).build().unwrap();
    let mut p = frame.p_values().unwrap();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let ks = p
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = reg_inc_beta(x, a, b).unwrap();
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0f64, f64::max);
    assert!(ks < 0.02, "KS distance {ks}");
}

#[test]
fn independent_field_has_null_morans_i() {
    let (rows, cols) = (20, 20);
    let n = (rows * cols) as f64;
    let values: Vec<f64> = (0..40)
        .map(|seed| {
            let frame = SynthSpec::new(rows, cols, 2.0, 5.0, 0.0, seed)
                .build()
                .unwrap();
            morans_i(&frame, &frame.p_values().unwrap()).unwrap()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd =
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt();
    let se = sd / (values.len() as f64).sqrt();
    let null = -1.0 / (n - 1.0);
    assert!(
        (mean - null).abs() < 3.0 * se,
        "mean {mean}, null {null}, se {se}"
    );
}

#[test]
fn smoothed_field_is_autocorrelated() {
    let frame = correlated_frame();
    let i = morans_i(&frame, &frame.p_values().unwrap()).unwrap();
    assert!(i > 0.3, "{i}");
}
