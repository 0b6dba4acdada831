use perphase_core::ergodic::{
    empirical_invariant, invariant_expectations, lln_functional, ou_moments, Functional,
    OUAnalytic, Observable,
};
use perphase_core::estimators::{j_theta, JMode};
use perphase_core::model::{CoefFn, DiffusionModel, PeriodicFn, SignalSpec};
use perphase_core::simulate::{default_burn_in, simulate_path};
use perphase_core::Sequential;
use proptest::prelude::*;

fn signal() -> SignalSpec {
    SignalSpec::new(
        PeriodicFn::sinusoid(1.0, 0.5, 0.7, 10.0).unwrap(),
        PeriodicFn::constant(2.0, 10.0).unwrap(),
        10.0,
        3.0,
        4.0,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn two_mean_routes_agree(r in 0.0f64..10.0, gamma in 0.3f64..3.0, beta in -1.0f64..1.0) {
        let mut ou = OUAnalytic::new(gamma, 1.0, signal()).unwrap();
        ou.beta = beta;
        let g = ou.mean_geometric(r).unwrap();
        let periods = (40.0 / (gamma * 10.0)).ceil().max(4.0) as usize * 10;
        let t = ou.mean_truncated(r, periods).unwrap();
        prop_assert!((g - t).abs() < 1e-10, "{g} vs {t}");
    }
}

#[test]
fn point_lln_converges_to_gaussian_mean() {
    let m = DiffusionModel::new(
        signal(),
        CoefFn::Affine {
            beta: 0.0,
            gamma: 0.5,
        },
        CoefFn::Constant(1.0),
    )
    .unwrap();
    let p = simulate_path(&m, 0.0, 1200, 200, 12).unwrap();
    let burn = default_burn_in(&m);
    let res = lln_functional(
        &p,
        Functional::PointSample { r: 5.5 },
        Observable::Identity,
        burn,
    )
    .unwrap();
    let lim = res.limit.unwrap();
    assert!(
        res.terminal.within_se(lim, 4.0),
        "{:?} vs {lim}",
        res.terminal
    );
    let law = empirical_invariant(&p.phase_samples(5.5).unwrap(), burn).unwrap();
    let ou = OUAnalytic::from_model(&m).unwrap();
    let (mean, var) = ou_moments(&ou, 5.5).unwrap();
    assert!(law.mean().within_se(mean, 4.0));
    assert!(law.variance().within_se(var, 4.0));
}

#[test]
fn interval_lln_matches_integrated_marginals() {
    let m = DiffusionModel::new(
        signal(),
        CoefFn::Affine {
            beta: 0.0,
            gamma: 0.5,
        },
        CoefFn::Constant(1.0),
    )
    .unwrap();
    let p = simulate_path(&m, 0.0, 1200, 200, 13).unwrap();
    let f = Observable::Square;
    let res = lln_functional(
        &p,
        Functional::IntervalIntegral { r: 2.0, r_end: 6.5 },
        f,
        40,
    )
    .unwrap();
    let lim = res.limit.unwrap();
    assert!(
        res.terminal.within_se(lim, 4.0),
        "{:?} vs {lim}",
        res.terminal
    );
}

#[test]
fn dirac_comb_equals_point_samples() {
    let m = DiffusionModel::new(
        signal(),
        CoefFn::Affine {
            beta: 0.0,
            gamma: 0.5,
        },
        CoefFn::Constant(1.0),
    )
    .unwrap();
    let p = simulate_path(&m, 0.0, 100, 50, 2).unwrap();
    let a = lln_functional(
        &p,
        Functional::PointSample { r: 1.0 },
        Observable::Square,
        20,
    )
    .unwrap();
    let b = lln_functional(&p, Functional::DiracComb { r: 1.0 }, Observable::Square, 20).unwrap();
    assert_eq!(a.running_average, b.running_average);
}

#[test]
fn inverse_sigma_mean_routes_agree_for_rational_sigma() {
    let sig = SignalSpec::new(
        PeriodicFn::constant(0.0, 1.0).unwrap(),
        PeriodicFn::constant(1.0, 1.0).unwrap(),
        1.0,
        0.25,
        0.375,
    )
    .unwrap();
    let sigma = CoefFn::BoundedRational { s0: 0.5, s1: 1.0 };
    let m = DiffusionModel::new(
        sig,
        CoefFn::Affine {
            beta: 0.0,
            gamma: 1.0,
        },
        sigma,
    )
    .unwrap();
    let analytic = j_theta(&m, 0.375, JMode::Analytic, &Sequential).unwrap();
    let empirical = j_theta(
        &m,
        0.375,
        JMode::Empirical {
            n_periods: 400,
            replicates: 40,
            seed: 4,
            steps_per_period: 256,
        },
        &Sequential,
    )
    .unwrap();
    assert!(
        empirical.within_se(analytic.value, 3.0),
        "{empirical:?} vs {analytic:?}"
    );
    // and the marginal mean still matches the σ-free closed form
    let e = invariant_expectations(&m, &[0.5], Observable::Identity).unwrap()[0];
    let ou = OUAnalytic::new(1.0, 1.0, m.signal).unwrap();
    assert!((e - ou_moments(&ou, 0.5).unwrap().0).abs() < 1e-5);
}

#[test]
fn analytic_j_needs_ou_drift() {
    let m = DiffusionModel::new(signal(), CoefFn::Constant(0.0), CoefFn::Constant(1.0)).unwrap();
    assert!(j_theta(&m, 4.0, JMode::Analytic, &Sequential).is_err());
}
