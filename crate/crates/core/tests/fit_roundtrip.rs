//! Generate → sample → fit round trips.

use sr_core::emitter::{Emitter, EmitterSystem};
use sr_core::g2::{symmetric_grid, G2Curve};
use sr_core::inference::{fit_g2, CurveSpec, FitOptions, FitSpec, FreeParam, ModelKind};
use sr_core::irf::Irf;
use sr_core::photon_mc::{normalize_histogram, sample_coincidences, CoincidenceConfig, RngSeed};

fn histogram(n: usize, gamma: f64, delta: f64, events: u64, seed: RngSeed) -> G2Curve<f64> {
    let sys = EmitterSystem::ladder(n, Emitter::new(0.0, gamma, 2.5, 1.0), delta).unwrap();
    let model = G2Curve::model(&sys, symmetric_grid(10.0, 0.002), true).unwrap();
    let h = sample_coincidences(&model, events, &CoincidenceConfig::default(), Some(&Irf::new(0.1).unwrap()), seed).unwrap();
    normalize_histogram(&h).unwrap()
}

/// With enough counts the joint fit recovers every parameter the data
/// constrain; shortfalls at 10⁵ events are statistical, not a fitter bias.
#[test]
fn high_statistics_joint_fit_recovers_truth() {
    let deltas = [0.0, 20.0, 46.0];
    let data: Vec<_> = deltas
        .iter()
        .enumerate()
        .map(|(k, &d)| histogram(2, 0.7, d, 10_000_000, RngSeed::new(77).with_stream(k as u32)))
        .collect();
    let curves: Vec<(Vec<f64>, Option<f64>)> = (0..3).map(|_| (vec![1.0, 1.0], Some(10.0))).collect();
    let spec = FitSpec::shared_linewidth(&curves)
        .with_irf(Irf::new(0.1).unwrap())
        .with_plateau(5.0, 10.0)
        .with_options(FitOptions {
            restarts: 6,
            seed: 1,
            oversample: 2,
            ..FitOptions::default()
        });
    let r = fit_g2(&data, &spec).unwrap();
    let v = |k: &str| r.value(k).unwrap();
    assert!((v("gamma_pd") - 2.5).abs() / 2.5 < 0.15, "{}", r.report());
    assert!((v("sigma") - 1.0).abs() < 0.2, "{}", r.report());
    for k in 0..3 {
        assert!((v(&format!("gamma_{k}")) - 0.7).abs() / 0.7 < 0.15, "{}", r.report());
    }
    assert!((v("delta_1") - 20.0).abs() < 2.0, "{}", r.report());
    assert!(r.reduced_chi2() < 1.3, "{}", r.report());
}

/// Fixing γ_pd at its true value does not make γ worse on average.
#[test]
fn fixing_a_true_parameter_never_hurts() {
    let mut err_free = 0.0;
    let mut err_fixed = 0.0;
    for seed in 0..20u64 {
        let d = histogram(2, 0.7, 0.0, 100_000, RngSeed::new(300 + seed));
        let base = |fixed_pd: bool| {
            let mut s = FitSpec::new(vec![CurveSpec::new(ModelKind::General, 2)])
                .free(FreeParam::new("gamma", 1.0, 0.05, 5.0))
                .free(FreeParam::new("sigma", 0.6, 0.0, 3.0))
                .fix("delta", 0.0)
                .with_irf(Irf::new(0.1).unwrap())
                .with_plateau(5.0, 10.0)
                .with_options(FitOptions {
                    restarts: 3,
                    seed,
                    ..FitOptions::default()
                });
            s = if fixed_pd {
                s.fix("gamma_pd", 2.5)
            } else {
                s.free(FreeParam::new("gamma_pd", 1.5, 0.0, 10.0))
            };
            s
        };
        let free = fit_g2(std::slice::from_ref(&d), &base(false)).unwrap();
        let fixed = fit_g2(std::slice::from_ref(&d), &base(true)).unwrap();
        err_free += (free.value("gamma").unwrap() - 0.7).abs() + (free.value("sigma").unwrap() - 1.0).abs();
        err_fixed += (fixed.value("gamma").unwrap() - 0.7).abs() + (fixed.value("sigma").unwrap() - 1.0).abs();
    }
    assert!(err_fixed <= err_free, "fixed {err_fixed} vs free {err_free}");
}

#[test]
fn three_single_curves_recover_reference_gammas() {
    // one, two and three emitters with their own γ, shared linewidth terms
    let gammas = [1.9, 2.0, 1.4];
    let data: Vec<_> = gammas
        .iter()
        .enumerate()
        .map(|(k, &g)| histogram(k + 1, g, 0.0, 100_000, RngSeed::new(900).with_stream(k as u32)))
        .collect();
    let curves: Vec<(Vec<f64>, Option<f64>)> = (1..=3).map(|n| (vec![1.0; n], None)).collect();
    let spec = FitSpec::shared_linewidth(&curves)
        .with_irf(Irf::new(0.1).unwrap())
        .with_plateau(5.0, 10.0);
    let r = fit_g2(&data, &spec).unwrap();
    for (k, g) in gammas.iter().enumerate() {
        let est = r.value(&format!("gamma_{k}")).unwrap();
        assert!((est - g).abs() / g < 0.15, "gamma_{k} = {est}\n{}", r.report());
    }
    assert!(r.converged);
}

#[test]
fn monotone_history_on_noisy_data() {
    let d = histogram(2, 0.7, 20.0, 100_000, RngSeed::new(5));
    let spec = FitSpec::new(vec![CurveSpec::new(ModelKind::General, 2)])
        .free(FreeParam::new("gamma", 1.0, 0.05, 5.0))
        .free(FreeParam::new("delta", 12.0, 0.0, 60.0))
        .fix("gamma_pd", 2.5)
        .fix("sigma", 1.0)
        .with_irf(Irf::new(0.1).unwrap())
        .with_plateau(5.0, 10.0);
    let r = fit_g2(&[d], &spec).unwrap();
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.residual_norm >= 0.0);
    for e in &r.estimates {
        if let Some(p) = spec.free.iter().find(|p| p.name == e.name) {
            assert!(e.value >= p.lower && e.value <= p.upper);
        }
    }
}
