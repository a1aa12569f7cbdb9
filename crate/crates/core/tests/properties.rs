use num_complex::Complex64;
use proptest::prelude::*;
use qfractal::fractal::{density_length, length_scaling_fit, FitOptions, GridRule, LengthTarget};
use qfractal::observables::simpson;
use qfractal::{
    ensemble, integrate, velocity, BoxDomain, IntegratorOptions, SpectralState, StateLabel, Term, TimePoint,
    TruncationLadder,
};

fn unit() -> BoxDomain {
    BoxDomain::unit()
}

fn random_state() -> impl Strategy<Value = SpectralState> {
    states(1)
}

/// Modes `1, 1 + stride, 1 + 2·stride, ...` with random coefficients.
fn states(stride: u64) -> impl Strategy<Value = SpectralState> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..12).prop_map(move |cs| {
        let terms = cs
            .into_iter()
            .enumerate()
            .map(|(i, (re, im))| Term {
                n: 1 + stride * i as u64,
                c: Complex64::new(re, im + 1e-3),
            })
            .collect();
        SpectralState::new(unit(), terms, StateLabel::Custom).unwrap()
    })
}

fn norm(state: &SpectralState, t: f64) -> f64 {
    let xs = unit().grid(2001);
    let rho: Vec<f64> = state
        .at_time(t, state.len())
        .unwrap()
        .psi_grid(&xs)
        .unwrap()
        .iter()
        .map(|p| p.norm_sqr())
        .collect();
    simpson(&rho, 1.0 / 2000.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn norm_is_conserved(state in random_state(), t in 0.0f64..10.0) {
        let n0 = state.norm_sqr(state.len());
        prop_assert!((norm(&state, t) - n0).abs() <= 1e-9 * n0);
    }

    #[test]
    fn odd_mode_density_is_period_periodic(state in states(2), tau in -3.0f64..3.0, x in 0.0f64..1.0) {
        let d = unit();
        let a = state.evaluate(TimePoint::periods(&d, tau), x, state.len()).unwrap().psi.norm_sqr();
        let b = state.evaluate(TimePoint::periods(&d, tau + 1.0), x, state.len()).unwrap().psi.norm_sqr();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn wavefunction_returns_after_eight_periods(state in random_state(), tau in -3.0f64..3.0, x in 0.0f64..1.0) {
        let d = unit();
        let a = state.evaluate(TimePoint::periods(&d, tau), x, state.len()).unwrap().psi;
        let b = state.evaluate(TimePoint::periods(&d, tau + 8.0), x, state.len()).unwrap().psi;
        prop_assert!((a - b).norm() <= 1e-9 * (1.0 + a.norm()));
    }

    #[test]
    fn uniform_density_is_mirror_symmetric(tau in 0.0f64..1.0, x in 0.0f64..1.0) {
        let s = SpectralState::uniform_full(unit(), 64, false).unwrap();
        let t = TimePoint::periods(&unit(), tau);
        let a = s.evaluate(t, x, 64).unwrap().psi.norm_sqr();
        let b = s.evaluate(t, 1.0 - x, 64).unwrap().psi.norm_sqr();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn derivatives_match_central_differences(state in random_state(), t in 0.0f64..1.0, x in 0.1f64..0.9) {
        let n = state.len();
        let w = state.evaluate(t, x, n).unwrap();
        let err = |h: f64| {
            let p = state.evaluate(t, x + h, n).unwrap();
            let m = state.evaluate(t, x - h, n).unwrap();
            ((p.psi - m.psi) / (2.0 * h) - w.dpsi).norm() + ((p.dpsi - m.dpsi) / (2.0 * h) - w.d2psi).norm()
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        // second order, unless both are already at rounding level
        prop_assert!(e2 < 1e-7 || e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn velocity_is_gauge_invariant(theta in -10.0f64..10.0, offset in -50.0f64..50.0, t in 0.0f64..1.0, x in 0.05f64..0.95) {
        let s = SpectralState::uniform_full(unit(), 40, false).unwrap();
        let g = s.clone().with_global_phase(theta).with_energy_offset(offset);
        if let (Ok(a), Ok(b)) = (velocity(&s, t, x, 40), velocity(&g, t, x, 40)) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mirrored_starts_give_mirrored_paths(x0 in 0.02f64..0.48) {
        let s = SpectralState::uniform_full(unit(), 15, false).unwrap();
        let span = [0.0, unit().period() / 4.0];
        let opts = IntegratorOptions::default();
        let a = integrate(&s, x0, span, 15, &opts).unwrap();
        let b = integrate(&s, 1.0 - x0, span, 15, &opts).unwrap();
        for (p, q) in a.samples.iter().zip(&b.samples) {
            prop_assert!((q.x - (1.0 - p.x)).abs() < 1e-6);
        }
    }

    #[test]
    fn ensembles_never_cross(mut x0s in prop::collection::vec(0.01f64..0.99, 2..8)) {
        x0s.sort_by(f64::total_cmp);
        x0s.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        prop_assume!(x0s.len() >= 2);
        let s = SpectralState::uniform_full(unit(), 15, false).unwrap();
        let trajs: Vec<_> = ensemble(&s, &x0s, [0.0, unit().period() / 2.0], 15, &IntegratorOptions::default())
            .unwrap()
            .into_iter()
            .map(Result::unwrap)
            .collect();
        for k in 0..trajs[0].samples.len() {
            for w in trajs.windows(2) {
                prop_assert!(w[0].samples[k].x < w[1].samples[k].x);
            }
        }
    }
}

#[test]
fn density_length_grows_with_truncation_at_irrational_time() {
    let s = SpectralState::uniform_full(unit(), 512, false).unwrap();
    let t = TimePoint::at(unit().period() / 2f64.sqrt());
    let mut prev = 0.0;
    for n in [16, 32, 64, 128, 256, 512] {
        let l = density_length(&s, t, n, GridRule::default().points(s.max_mode(n))).unwrap();
        assert!(l > prev, "N={n}: {l} after {prev}");
        prev = l;
    }
}

#[test]
fn single_mode_length_does_not_depend_on_truncation_ladder() {
    let s = SpectralState::eigenstate(unit(), 3).unwrap();
    let xs = unit().grid(1001);
    let a = density_length(&s, TimePoint::at(0.2), 1, xs.len()).unwrap();
    let b = density_length(&s, TimePoint::at(0.7), 1, xs.len()).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn limit_trajectories_converge_on_smooth_state() {
    let s = SpectralState::triangle(unit(), 255).unwrap();
    let ladder = TruncationLadder::new(vec![8, 16, 32, 64, 128]).unwrap();
    let lim = qfractal::integrate_limit(&s, 0.3, [0.0, unit().period() / 4.0], &ladder, &IntegratorOptions::default())
        .unwrap();
    assert!(lim.converged, "{:?}", lim.deltas);
    assert!(lim.deltas.windows(2).all(|w| w[1] < w[0]), "{:?}", lim.deltas);
}

#[test]
fn trajectory_fit_is_flagged_saturated_for_eigenstate() {
    let s = SpectralState::triangle(unit(), 63).unwrap();
    let target = LengthTarget::Trajectory {
        x0: 0.5,
        t_span: [0.0, unit().period() / 8.0],
        options: IntegratorOptions::default(),
    };
    let ladder = TruncationLadder::new(vec![2, 4, 8, 16, 32]).unwrap();
    let opts = FitOptions {
        check_resolution: false,
        ..FitOptions::default()
    };
    let fit = length_scaling_fit(&s, 0.0, GridRule::default(), &ladder, &target, &opts).unwrap();
    assert!(fit.flags.saturated);
    assert!(fit.slope.abs() < 1e-9);
}
