use std::time::Instant;

use expkde::hscore::{hscore_point, tune, TuneConfig};
use expkde::sim::{run_replication, Method, MetricGrid, StudyConfig, TruthTable};
use expkde::theory::{self, exact_fisher_divergence};
use expkde::{ExpKdeModel, KernelSpec, SampleSet, Scenario};

#[test]
fn two_point_score_by_hand() {
    let s = SampleSet::new(vec![0.0, 1.0]).unwrap();
    let k01: f64 = 0.241_970_724_519_143_37;
    let k0 = 0.398_942_280_401_432_7;
    let expected = -(k01 / (k0 + k01)).powi(2);
    assert!((hscore_point(&s, 0, 1.0, 1.0).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn bimodal_replication_within_budget() {
    let cfg = StudyConfig {
        base_seed: 99,
        workers: 1,
        ..StudyConfig::new(Scenario::Bimodal, 500, 1)
    };
    let start = Instant::now();
    let recs = run_replication(&cfg, 0).unwrap();
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(recs.len(), 4);
    for r in &recs {
        assert!(r.failure.is_none(), "{r:?}");
        if matches!(r.method, Method::Fhs | Method::Cv | Method::Pi) {
            assert_eq!(r.w_hat, Some(1.0));
        }
    }
}

#[test]
fn tuned_parameters_track_theory_on_large_samples() {
    let mix = Scenario::Bimodal.preset();
    let c = theory::constants(&mix, &KernelSpec::GAUSSIAN, theory::default_truncation(&mix)).unwrap();
    let n = 4000;
    let h_star = c.optimal_h(n).unwrap();
    let w_star = c.optimal_w(h_star);
    let s = mix.sample(2024, n).unwrap();
    let r = tune(&s, &TuneConfig::default_for(&s).unwrap()).unwrap();
    assert!(r.w_hat > 1.0, "{r:?}");
    assert!(r.h_hat > 0.5 * h_star && r.h_hat < 2.0 * h_star, "h_hat {} vs h* {h_star}", r.h_hat);
    assert!((r.w_hat - w_star).abs() < 1.0, "w_hat {} vs w* {w_star}", r.w_hat);
}

#[test]
fn joint_tuning_lowers_fisher_divergence_on_bimodal() {
    let mix = Scenario::Bimodal.preset();
    let t = theory::default_truncation(&mix);
    let s = mix.sample(7, 1000).unwrap();
    let joint = tune(&s, &TuneConfig::default_for(&s).unwrap()).unwrap();
    let fixed = tune(&s, &TuneConfig::default_for(&s).unwrap().with_fixed_w(1.0)).unwrap();
    let quad = expkde::quad::QuadConfig::default();
    let mj = ExpKdeModel::fit(s.clone(), joint.h_hat, joint.w_hat, quad).unwrap();
    let mf = ExpKdeModel::fit(s, fixed.h_hat, 1.0, quad).unwrap();
    let jj = exact_fisher_divergence(&mix, &mj, t).unwrap();
    let jf = exact_fisher_divergence(&mix, &mf, t).unwrap();
    assert!(jj < jf, "joint {jj} vs fixed {jf}");
    // and the tuned KDE beats a badly oversmoothed one on the grid metrics
    let grid = MetricGrid::for_mixture(&mix, 512, 5.0).unwrap();
    let truth = TruthTable::new(&mix, &grid);
    let wide = ExpKdeModel::kde(mj.sample().clone(), 1.5).unwrap();
    assert!(truth.metrics(&mj).mise_f < truth.metrics(&wide).mise_f);
}
