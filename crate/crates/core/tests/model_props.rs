use perphase_core::model::{occupation_measure, CoefFn, PeriodicFn, SignalSpec};
use proptest::prelude::*;

fn spec(theta: f64) -> SignalSpec {
    SignalSpec::new(
        PeriodicFn::sinusoid(2.0, 1.0, 0.3, 8.0).unwrap(),
        PeriodicFn::constant(3.0, 8.0).unwrap(),
        8.0,
        2.0,
        theta,
    )
    .unwrap()
}

proptest! {
    // dyadic times and period keep t + kT exact in binary
    #[test]
    fn signal_is_periodic(num in 0u32..4096, k in 0u32..64, theta_num in 1u32..48) {
        let s = spec(theta_num as f64 / 8.0);
        let t = num as f64 / 64.0;
        let a = s.signal_value(t, None).unwrap();
        let b = s.signal_value(t + 8.0 * k as f64, None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lipschitz_constants_hold(x in -50.0f64..50.0, y in -50.0f64..50.0,
                                s0 in 0.1f64..3.0, s1 in 0.0f64..5.0,
                                beta in -5.0f64..5.0, gamma in -5.0f64..5.0) {
        for f in [
            CoefFn::BoundedRational { s0, s1 },
            CoefFn::Affine { beta, gamma },
            CoefFn::Constant(s0),
        ] {
            let lhs = (f.eval(x) - f.eval(y)).abs();
            prop_assert!(lhs <= f.lipschitz() * (x - y).abs() * (1.0 + 1e-12) + 1e-12, "{f}");
        }
    }

    #[test]
    fn occupation_is_additive_and_bounded(r1 in 0.0f64..9.0, w in 0.01f64..1.0,
                                          t1 in 0.0f64..200.0, t2 in 0.0f64..200.0) {
        let period = 10.0;
        let r2 = (r1 + w * (period - r1)).min(period);
        prop_assume!(r2 > r1);
        let whole = occupation_measure(period, r1, r2, t1 + t2).unwrap();
        let first = occupation_measure(period, r1, r2, t1).unwrap();
        // the second piece starts at t1; shift it to a period boundary
        let shift = t1 - period * (t1 / period).floor();
        let second = occupation_measure(period, r1, r2, shift + t2).unwrap()
            - occupation_measure(period, r1, r2, shift).unwrap();
        prop_assert!((whole - first - second).abs() < 1e-9);
        let bound = (r2 - r1) * ((t1 + t2) / period).floor() + (r2 - r1);
        prop_assert!(whole <= bound + 1e-12);
    }
}

#[test]
fn occupation_rejects_empty_window() {
    assert!(occupation_measure(10.0, 4.0, 4.0, 3.0).is_err());
    assert!(occupation_measure(10.0, 7.0, 4.0, 3.0).is_err());
}
