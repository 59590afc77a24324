mod common;

use approx::assert_relative_eq;
use common::*;
use proptest::prelude::*;
use statfield::fieldcore::*;
use statfield::scenario::StructuralParams;
use statfield::specfun::pcf_d;
use statfield::{Error, Scenario, Scenario32};

/// Uniform fixed point by bisection on `K − (N̂/N)√(2σ_K̂²/(π|f(K)|))`, with
/// `f(K) = (αK^{α−1} − γN/V)/ε` (the price term vanishes when all sectors agree).
fn uniform_oracle(p: &StructuralParams<f64>) -> f64 {
    let f = |k: f64| (p.alpha * k.powf(p.alpha - 1.0) - p.gamma * p.n_firms) / p.epsilon;
    let g = |k: f64| k - p.n_investors / p.n_firms * (2.0 * p.sigma_khat2 / (std::f64::consts::PI * f(k).abs())).sqrt();
    let (mut lo, mut hi) = (1e-6, 1e3);
    assert!(g(lo) < 0.0 && g(hi) > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid
        } else {
            hi = mid
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn uniform_scenario_matches_half_normal_mean() {
    let sc = flat(16);
    let sol = solve_collective_state(&sc).unwrap();
    let k = uniform_oracle(&sc.params);
    let s = &sc.params;
    for i in 0..16 {
        assert_relative_eq!(sol.k_x[i], k, max_relative = 1e-8);
        let at_fixed_point = s.n_investors / s.n_firms * (2.0 * s.sigma_khat2 / (std::f64::consts::PI * sol.f_x[i].abs())).sqrt();
        assert_relative_eq!(sol.k_x[i], at_fixed_point, max_relative = 1e-8);
        assert_relative_eq!(sol.psi2[i], s.n_firms / sc.grid.volume(), max_relative = 1e-13);
        assert_eq!(sol.p_x[i], 0.0);
        assert_eq!(sol.gamma_hat[i], 1.0);
    }
}

#[test]
fn single_precision_uniform_solve() {
    let sc: Scenario32 = Scenario32::flat(8, 1.0, StructuralParams::default());
    let sol = solve_with(&sc, &SolverOptions { update_tol: 1e-5, residual_tol: 1e-5, ..Default::default() }).unwrap();
    let k = uniform_oracle(&StructuralParams::default());
    for &v in &sol.k_x {
        assert_relative_eq!(v as f64, k, max_relative = 1e-4);
    }
}

#[test]
fn gamma_hat_is_one_at_half_without_gradient() {
    let sc = flat(8);
    for f in [-50.0, -1.0, 1e-3, 2.0, 400.0] {
        assert_eq!(gamma_hat(&sc, 0.0, f, 0.0).unwrap(), 1.0);
    }
}

#[test]
fn invariants_on_the_test_set() {
    for (name, sc) in test_set() {
        let sol = solve_collective_state(&sc).unwrap_or_else(|e| panic!("{name}: {e}"));
        let s = &sc.params;
        let h = sc.grid.spacing();
        assert!(sol.residual <= 1e-8, "{name}: residual {}", sol.residual);
        assert!(sol.psi2.iter().all(|&v| v >= 0.0), "{name}");
        assert_relative_eq!(h * sol.psi2.iter().sum::<f64>(), s.n_firms, max_relative = 1e-10);
        assert_relative_eq!(h * sol.nhat.iter().sum::<f64>(), s.n_investors, max_relative = 1e-10);
        for i in 0..sc.n() {
            if sol.deserted[i] {
                assert_eq!((sol.k_x[i], sol.psi2[i], sol.nhat[i]), (0.0, 0.0, 0.0), "{name}: sector {i}");
            } else {
                assert!(sol.k_x[i] > 0.0 && sol.p_x[i] >= 0.0, "{name}: sector {i}");
            }
        }
        // one attractivity class at p = 0: the maximum, up to ties
        let zero: Vec<usize> = sol.active().filter(|&i| sol.p_x[i] == 0.0).collect();
        assert!(!zero.is_empty(), "{name}");
        for &i in &zero {
            assert!((sol.attractivity[i] - sol.big_m).abs() <= 1e-12 * sol.big_m.abs().max(1.0), "{name}");
        }
    }
}

#[test]
fn deserted_sectors_appear_between_strong_peaks() {
    let sol = solve_collective_state(&twin_peaks()).unwrap();
    let n = sol.deserted.iter().filter(|&&d| d).count();
    assert!(n > 0 && n < sol.n());
}

/// `∫₀^∞ K̂ ‖Ψ̂(K̂, X)‖² dK̂` by Simpson's rule out to far beyond the turning point.
fn invested_capital(sc: &Scenario, sol: &FieldSolution<f64>, i: usize) -> f64 {
    let scale = (sc.params.sigma_khat2 / sol.f_x[i].abs()).sqrt();
    let z_max = 2.0 * (sol.p_x[i] + 1.0).sqrt() + 14.0;
    simpson(|k| k * investor_density(sc, sol, k, i).unwrap(), 0.0, z_max * scale, 4000)
}

#[test]
fn invested_capital_equals_physical_capital() {
    for (name, sc) in test_set() {
        let sol = solve_collective_state(&sc).unwrap();
        let h = sc.grid.spacing();
        let mut physical = 0.0;
        let mut invested = 0.0;
        for i in sol.active() {
            let inv = invested_capital(&sc, &sol, i);
            assert_relative_eq!(inv, sol.k_x[i] * sol.psi2[i], max_relative = 1e-6);
            physical += h * sol.k_x[i] * sol.psi2[i];
            invested += h * inv;
        }
        assert!((invested / physical - 1.0).abs() <= 1e-6, "{name}");
    }
}

#[test]
fn investor_density_integrates_to_nhat() {
    let sc = bump(32, 1.0, 0.15);
    let sol = solve_collective_state(&sc).unwrap();
    for i in [0, 9, 16] {
        let scale = (sc.params.sigma_khat2 / sol.f_x[i].abs()).sqrt();
        let z_max = 2.0 * (sol.p_x[i] + 1.0).sqrt() + 14.0;
        let n = simpson(|k| investor_density(&sc, &sol, k, i).unwrap(), 0.0, z_max * scale, 4000);
        assert_relative_eq!(n, sol.nhat[i], max_relative = 1e-8);
    }
    // the density is D_p² in the scaled variable
    let i = 16;
    let z = 0.7;
    let k = z * (sc.params.sigma_khat2 / sol.f_x[i].abs()).sqrt();
    let ratio = investor_density(&sc, &sol, k, i).unwrap() / pcf_d(sol.p_x[i], z).unwrap().powi(2);
    let ratio0 = investor_density(&sc, &sol, 0.0, i).unwrap() / pcf_d(sol.p_x[i], 0.0).unwrap().powi(2);
    assert_relative_eq!(ratio, ratio0, max_relative = 1e-12);
}

#[test]
fn doubling_investors_scales_capital_by_the_half_normal_law() {
    let a = flat(8);
    let mut b = a.clone();
    b.params.n_investors *= 2.0;
    let (sa, sb) = (solve_collective_state(&a).unwrap(), solve_collective_state(&b).unwrap());
    // K ∝ N̂/√|f| and C ∝ N̂√|f|; f itself moves only through K^{α−1}
    let fr = sa.f_x[0] / sb.f_x[0];
    assert_relative_eq!(sb.k_x[0] / sa.k_x[0], 2.0 * fr.sqrt(), max_relative = 1e-8);
    assert_relative_eq!(sb.c_norm / sa.c_norm, 2.0 / fr.sqrt(), max_relative = 1e-8);
    assert_relative_eq!(sb.k_x[0] / sa.k_x[0], 2.0, max_relative = 0.02);
}

#[test]
fn doubling_firms_doubles_the_multiplier_on_a_flat_landscape() {
    let a = flat(8);
    let mut b = a.clone();
    b.params.n_firms *= 2.0;
    let (sa, sb) = (solve_collective_state(&a).unwrap(), solve_collective_state(&b).unwrap());
    assert_relative_eq!(sb.lagrange_d, 2.0 * sa.lagrange_d, max_relative = 1e-12);
}

#[test]
fn symmetric_landscape_gives_symmetric_solution() {
    let sc = bump(32, 1.0, 0.15);
    let sol = solve_collective_state(&sc).unwrap();
    for i in 0..32 {
        let j = (32 - i) % 32;
        assert_relative_eq!(sol.k_x[i], sol.k_x[j], max_relative = 1e-9);
        assert_relative_eq!(sol.psi2[i], sol.psi2[j], max_relative = 1e-9);
    }
}

#[test]
fn firm_count_is_monotone_in_the_multiplier() {
    let sc = cosine(32, 0.3);
    let k = vec![0.4; 32];
    let h = sc.grid.spacing();
    let mut last = 0.0;
    for step in 0..200 {
        let d = step as f64 * 2.0;
        let n: f64 = firm_density(&sc, &k, d).iter().sum::<f64>() * h;
        assert!(n >= last);
        last = n;
    }
    let (d, _) = calibrate_lagrange(&sc, &k).unwrap();
    let n: f64 = firm_density(&sc, &k, d).iter().sum::<f64>() * h;
    assert_relative_eq!(n, sc.params.n_firms, max_relative = 1e-12);
}

#[test]
fn peak_slope_is_the_log_slope_of_gamma_hat() {
    assert_relative_eq!(PEAK_SLOPE, 0.729_637_154_5, max_relative = 1e-10);
    let numeric = statfield::stability::ln_first_moment_slope(0.0).unwrap();
    assert_relative_eq!(numeric, PEAK_SLOPE, max_relative = 1e-6);
}

#[test]
fn peak_expansion_tracks_the_solver_one_step_away() {
    for (height, width) in [(1.0, 0.15), (0.5, 0.2), (-0.5, 0.15), (0.3, 0.1)] {
        let sc = bump(64, height, width);
        let sol = solve_collective_state(&sc).unwrap();
        let e = expansion_at_peak(&sc, &sol).unwrap();
        assert_eq!(e.predicted[e.peak], 0.0);
        assert_eq!(e.actual[e.peak], 0.0);
        let (l, r) = sc.grid.neighbours(e.peak);
        for j in [l, r] {
            assert!((e.predicted[j] / e.actual[j] - 1.0).abs() < 0.1, "bump {height}: {} vs {}", e.predicted[j], e.actual[j]);
        }
    }
}

#[test]
fn case1_matches_direct_evaluation() {
    let sc = flat(8);
    let mut big = sc.clone();
    big.params.gamma = 1e-4;
    big.params.b = 5.0;
    let sol = solve_collective_state(&big).unwrap();
    let s = &big.params;
    let k = closed_form_case(&big, &sol, ClosedFormCase::Case1).unwrap();
    let c = s.b * std::f64::consts::FRAC_PI_2 / s.epsilon - s.gamma * sol.psi2[0] / s.epsilon;
    let d = s.b * sol.means.k_alpha * sol.means.r / s.epsilon;
    let k0 = sol.c_norm * s.sigma_khat2 * sol.gamma_hat[0] / (sol.psi2[0] * c);
    assert_relative_eq!(k[0], k0 * (1.0 + d / (c * k0.powf(s.alpha))), max_relative = 1e-12);
}

#[test]
fn closed_forms_reject_sectors_outside_their_regime() {
    let sc = flat(8);
    let sol = solve_collective_state(&sc).unwrap();
    // f < 0 everywhere, no gradient, no curvature
    for case in [ClosedFormCase::Case3, ClosedFormCase::Case2Grad, ClosedFormCase::Case2Max, ClosedFormCase::Case4] {
        assert!(matches!(closed_form_case(&sc, &sol, case), Err(Error::Regime { .. })), "{}", case.name());
    }
    assert_eq!("case3".parse::<ClosedFormCase>().unwrap(), ClosedFormCase::Case3);
    assert!("case9".parse::<ClosedFormCase>().is_err());
}

#[test]
fn lambert_form_root_has_small_residual() {
    let form = LambertForm { d: 1.5, a: 0.2, c: 0.8 };
    let x = statfield::specfun::solve_power_exp(form.d, form.a, form.c).unwrap();
    assert!(form.residual(x) <= 1e-12);
    // the same coefficients in every sector give the same capital
    let y = statfield::specfun::solve_power_exp(form.d, form.a, form.c).unwrap();
    assert_eq!(x, y);
}

#[test]
fn branches_start_with_the_uniform_seed() {
    let sc = cosine(32, 0.3);
    let opts = SolverOptions::default();
    let branches = solve_branches(&sc, &opts).unwrap();
    let base = solve_with(&sc, &opts).unwrap();
    assert_eq!(branches[0].k_x, base.k_x);
    for (i, b) in branches.iter().enumerate() {
        assert_eq!(b.branch_id, i);
    }
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let sc = cosine(32, 0.3);
    let r = solve_with(&sc, &SolverOptions { max_iter: 3, ..Default::default() });
    assert!(matches!(r, Err(Error::NonConvergence { iterations: 3, .. })));
}

#[test]
fn warm_start_converges_faster() {
    let sc = cosine(32, 0.3);
    let cold = solve_collective_state(&sc).unwrap();
    let warm = solve_with(&sc, &SolverOptions { seed: Some(cold.k_x.clone()), ..Default::default() }).unwrap();
    assert!(warm.iterations < cold.iterations);
    for (a, b) in warm.k_x.iter().zip(&cold.k_x) {
        assert_relative_eq!(a, b, max_relative = 1e-8);
    }
}

#[test]
fn invalid_scenario_is_rejected_before_solving() {
    let mut sc = flat(8);
    sc.params.alpha = 1.4;
    assert!(matches!(solve_collective_state(&sc), Err(Error::Validation { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_holds_on_random_cosines(
        amplitude in 0.0f64..0.4,
        n_firms in 20.0f64..300.0,
        n_investors in 50.0f64..2000.0,
        sectors in 8usize..40,
    ) {
        let mut sc = cosine(sectors, amplitude);
        sc.params.n_firms = n_firms;
        sc.params.n_investors = n_investors;
        let Ok(sol) = solve_collective_state(&sc) else { return Ok(()) };
        let h = sc.grid.spacing();
        prop_assert!((h * sol.psi2.iter().sum::<f64>() / n_firms - 1.0).abs() < 1e-10);
        prop_assert!((h * sol.nhat.iter().sum::<f64>() / n_investors - 1.0).abs() < 1e-10);
        prop_assert!(sol.active().all(|i| sol.p_x[i] >= 0.0 && sol.psi2[i] > 0.0));
        prop_assert!(sol.residual <= 1e-8);
        let i = sol.peak();
        let inv = invested_capital(&sc, &sol, i);
        prop_assert!((inv / (sol.k_x[i] * sol.psi2[i]) - 1.0).abs() < 1e-6);
    }
}
