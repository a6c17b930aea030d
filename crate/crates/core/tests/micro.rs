use kramers::limit_system::solve_limit;
use kramers::micro_m::{brute_force_m, interpolate_time, m_bounds, m_value, minimize_profile, MicroProfile};
use kramers::quadrature::GaussLegendre;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KAPPA: f64 = std::f64::consts::PI / (4.0 * std::f64::consts::SQRT_2);

proptest! {
    #[test]
    fn m_is_symmetric(w in -3.0..3.0f64, um in 0.05..4.0f64, up in 0.05..4.0f64, kappa in 0.2..2.0f64) {
        let m = m_value(w, um, up, kappa).unwrap();
        let swapped = m_value(w, up, um, kappa).unwrap();
        let flipped = m_value(-w, um, up, kappa).unwrap();
        prop_assert!((m - swapped).abs() <= 1e-10 * (1.0 + m));
        prop_assert!((m - flipped).abs() <= 1e-10 * (1.0 + m));
    }

    #[test]
    fn m_is_midpoint_convex(
        a in (-3.0..3.0f64, 0.05..4.0f64, 0.05..4.0f64),
        b in (-3.0..3.0f64, 0.05..4.0f64, 0.05..4.0f64),
    ) {
        let ma = m_value(a.0, a.1, a.2, KAPPA).unwrap();
        let mb = m_value(b.0, b.1, b.2, KAPPA).unwrap();
        let mid = m_value(0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1), 0.5 * (a.2 + b.2), KAPPA).unwrap();
        prop_assert!(mid <= 0.5 * (ma + mb) + 1e-9, "{} > {}", mid, 0.5 * (ma + mb));
    }

    #[test]
    fn m_lies_between_its_bounds(w in -3.0..3.0f64, um in 0.05..4.0f64, up in 0.05..4.0f64, kappa in 0.2..2.0f64) {
        let m = m_value(w, um, up, kappa).unwrap();
        let (lo, hi) = m_bounds(w, um, up, kappa).unwrap();
        prop_assert!(lo - 1e-9 <= m && m <= hi + 1e-9, "{} <= {} <= {}", lo, m, hi);
        // equality only on the affine flux
        let w_star = (up - um) / (2.0 * kappa);
        if (w - w_star).abs() > 1e-3 {
            prop_assert!(m - lo > 1e-8 * (1.0 + m.abs()));
        }
    }

    #[test]
    fn profile_satisfies_the_first_integral(w in -3.0..3.0f64, um in 0.05..4.0f64, up in 0.05..4.0f64) {
        let p = minimize_profile(w, um, up, KAPPA).unwrap();
        prop_assert!((p.discriminant() - w * w).abs() <= 1e-10 * (1.0 + w * w));
        for s in [-KAPPA, -0.3, 0.0, 0.2, KAPPA] {
            prop_assert!(p.eval(s) > 0.0);
        }
    }
}

/// `½∫(w²/u + u′²/u) ds` for an arbitrary positive profile.
fn objective(w: f64, kappa: f64, u: impl Fn(f64) -> f64, du: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussLegendre::new(20);
    let panels = 64;
    let h = 2.0 * kappa / panels as f64;
    (0..panels)
        .map(|i| {
            let a = -kappa + i as f64 * h;
            rule.integrate(a, a + h, |s| {
                let v = u(s);
                0.5 * (w * w + du(s).powi(2)) / v
            })
        })
        .sum()
}

#[test]
fn closed_form_profile_beats_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let (w, um, up) = (rng.random_range(-2.0..2.0), rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
        let p: MicroProfile = minimize_profile(w, um, up, KAPPA).unwrap();
        let base = objective(w, KAPPA, |s| p.eval(s), |s| p.derivative(s));
        assert!((base - p.value).abs() <= 1e-8 * (1.0 + p.value));
        // bump vanishing at both walls
        let j = rng.random_range(1..4) as f64;
        let amp = rng.random_range(-0.05..0.05) * um.min(up);
        let k = j * std::f64::consts::PI / (2.0 * KAPPA);
        let bump = |s: f64| (k * (s + KAPPA)).sin();
        let dbump = |s: f64| k * (k * (s + KAPPA)).cos();
        let perturbed = objective(w, KAPPA, |s| p.eval(s) + amp * bump(s), |s| p.derivative(s) + amp * dbump(s));
        assert!(perturbed >= base - 1e-12, "{perturbed} < {base}");
    }
}

#[test]
fn brute_force_error_drops_under_refinement() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..5 {
        let (w, um, up) = (rng.random_range(-2.0..2.0), rng.random_range(0.3..3.0), rng.random_range(0.3..3.0));
        let m = m_value(w, um, up, KAPPA).unwrap();
        let coarse = (brute_force_m(w, um, up, KAPPA, 100).unwrap() - m).abs();
        let fine = (brute_force_m(w, um, up, KAPPA, 200).unwrap() - m).abs();
        assert!(coarse >= 3.0 * fine, "{coarse:e} -> {fine:e}");
    }
}

#[test]
fn limit_solution_interpolates_affinely() {
    let k = 1.0 / KAPPA;
    let lim = solve_limit(1.6, 0.4, k, 1.0, 400).unwrap();
    let field = interpolate_time(&lim.times, &lim.um, &lim.up, KAPPA, 1e-6).unwrap();
    let nodes: Vec<f64> = (0..21).map(|i| -KAPPA + 2.0 * KAPPA * i as f64 / 20.0).collect();
    let samples = field.sample(&nodes);
    for (n, (u, p)) in samples.iter().zip(&field.profiles).enumerate() {
        assert_eq!((u[0], u[20]), (lim.um[n], lim.up[n]));
        // time differences of the closed form carry O(Δt²) error into w
        assert!(p.a.abs() <= 1e-4, "stamp {n}: curvature {}", p.a);
    }
}

#[test]
fn constant_series_interpolates_to_constant() {
    let t = vec![0.0, 0.5, 1.0];
    let field = interpolate_time(&t, &[0.8; 3], &[0.8; 3], KAPPA, 1e-6).unwrap();
    assert!(field.w.iter().all(|&w| w == 0.0));
    for u in field.sample(&[-KAPPA, 0.0, KAPPA]) {
        assert!(u.iter().all(|v| (v - 0.8).abs() < 1e-14));
    }
}
