use kramers::limit_system::{action0, contact_residual, psi0_rate, solve_limit, LimitState, LimitTrajectory};
use kramers::recovery::{build_recovery, clamp, mollify, reference_curve, RecoveryConfig};
use kramers::EpsilonContext;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: f64 = 4.0 * std::f64::consts::SQRT_2 / std::f64::consts::PI;

#[test]
fn truncated_solution_has_vanishing_action() {
    let full = solve_limit(2.0, 0.0, K, 1.0, 4000).unwrap();
    let a0 = action0(&full.tail(200), 1.0 / K).unwrap().a0;
    assert!((-1e-10..=1e-6).contains(&a0), "A0 = {a0:e}");
}

fn wiggly(rng: &mut ChaCha8Rng, m: f64) -> LimitTrajectory {
    let (c, f, p) = (rng.random_range(0.1..0.9), rng.random_range(0.5..4.0), rng.random_range(0.0..6.0));
    let times: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
    let um: Vec<f64> = times.iter().map(|t| m * (1.0 + c * (f * t + p).sin())).collect();
    let up = um.iter().map(|v| 2.0 * m - v).collect();
    LimitTrajectory::from_series(times, um, up).unwrap()
}

#[test]
fn non_solutions_have_positive_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let m = rng.random_range(0.3..2.0);
        let a = action0(&wiggly(&mut rng, m), 1.0 / K).unwrap();
        assert!(a.j0 >= a.entropy_start - a.entropy_end);
        assert!(a.a0 > 0.0, "A0 = {:e}", a.a0);
    }
}

#[test]
fn contact_residual_is_minimal_on_the_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let st = LimitState::new(rng.random_range(0.05..3.0), rng.random_range(0.05..3.0)).unwrap();
        let w = K * (st.up - st.um) / 2.0;
        let on = contact_residual(st, w, 1.0 / K).unwrap();
        assert!(on.abs() <= 1e-10 * (1.0 + w.abs()));
        for off in [w + 0.1 * w.abs(), w - 0.1 * w.abs()] {
            if off != w {
                assert!(contact_residual(st, off, 1.0 / K).unwrap() > on);
            }
        }
    }
    let st = LimitState::new(1.5, 0.5).unwrap();
    assert!(contact_residual(st, 0.0, 1.0 / K).unwrap() > 0.0);
}

#[test]
fn psi0_rate_examples() {
    assert_eq!(psi0_rate(LimitState::new(2.0, 0.5).unwrap(), 1.0), -1.5);
    assert_eq!(psi0_rate(LimitState::new(0.7, 0.7).unwrap(), K), 0.0);
}

#[test]
fn clamp_keeps_values_inside_the_band() {
    let curve = reference_curve(K, 200).unwrap();
    let m = curve.state(0).mass();
    for eta in [0.01, 0.1, 0.5] {
        let y = clamp(&curve, eta).unwrap();
        for v in y.um.iter().chain(&y.up) {
            assert!(*v >= eta * m - 1e-15 && *v <= 2.0 * m - eta * m + 1e-15);
        }
    }
}

#[test]
fn mollify_preserves_bounds_on_random_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let times: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
    for _ in 0..50 {
        let values: Vec<f64> = times.iter().map(|_| rng.random_range(-1.0..2.0)).collect();
        let out = mollify(&times, &values, rng.random_range(0.005..0.1));
        let (lo, hi) = values.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(out.iter().all(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12));
    }
}

#[test]
fn mollified_curves_do_not_dissipate_more() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let kappa = 1.0 / K;
    for _ in 0..20 {
        let curve = wiggly(&mut rng, 1.0);
        let smooth_um = mollify(&curve.times, &curve.um, 0.02);
        let smooth_up: Vec<f64> = smooth_um.iter().map(|v| 2.0 - v).collect();
        let smooth = LimitTrajectory::from_series(curve.times.clone(), smooth_um, smooth_up).unwrap();
        let before = action0(&curve, kappa).unwrap().j0;
        let after = action0(&smooth, kappa).unwrap().j0;
        assert!(after <= before + 1e-6 * before, "{after} > {before}");
    }
}

#[test]
fn recovery_of_a_curve_has_exact_mass() {
    let ctx = EpsilonContext::default_for(0.12).unwrap();
    let curve = reference_curve(ctx.k(), 400).unwrap();
    let rec = build_recovery(&curve, &ctx, &RecoveryConfig::default().at(0.12)).unwrap();
    let m = curve.state(0).mass();
    for n in 0..rec.trajectory.len() {
        assert!((rec.trajectory.mass(n) - m).abs() <= 1e-10 * m);
    }
}
