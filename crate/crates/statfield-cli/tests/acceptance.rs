//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_SHORTFALLS` are run at full tolerance and
//! reported as failing; the target only exits nonzero when any other
//! criterion fails, or when a known shortfall fails in an unexpected way.

use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statfield::abm::{self, RunOptions};
use statfield::dynamics::{self, Regime};
use statfield::fieldcore::{self, ClosedFormCase, Perturbation, SolverOptions};
use statfield::scenario::{Analytic, Boundary, ExpectationParams, SectorGrid, StructuralParams};
use statfield::specfun::{self, Branch};
use statfield::stability::{self, MapVerdict, SensitivityParam};
use statfield::{FieldSolution, Scenario};

struct Outcome {
    pass: bool,
    detail: String,
    /// For a known shortfall: whether the failure has the documented shape.
    as_documented: bool,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail, as_documented: false }
    }
}

/// Criteria that cannot be met as stated; see the README.
const KNOWN_SHORTFALLS: [usize; 2] = [4, 5];

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("special functions", special_functions),
        ("uniform closed form", uniform_closed_form),
        ("conservation", conservation),
        ("closed-form cases", closed_form_cases),
        ("stability equivalence", stability_equivalence),
        ("dispersion", dispersion),
        ("abm vs field", abm_vs_field),
        ("reproducibility", reproducibility),
    ];
    let mut ok = true;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        let note = if !out.pass && KNOWN_SHORTFALLS.contains(&id) { " (known shortfall)" } else { "" };
        println!("criterion {id} [{name}]: {verdict}{note} in {secs:.1}s — {}", out.detail);
        if !out.pass && !(KNOWN_SHORTFALLS.contains(&id) && out.as_documented) {
            ok = false;
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- 1

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Gauss–Kronrod 7/15 on `[a, b]`: (Kronrod estimate, |Kronrod − Gauss|).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mid = f(c);
    let (mut k, mut g) = (GK_WK[7] * mid, GK_WG[3] * mid);
    for j in 0..7 {
        let pair = f(c - h * GK_NODES[j]) + f(c + h * GK_NODES[j]);
        k += GK_WK[j] * pair;
        if j % 2 == 1 {
            g += GK_WG[j / 2] * pair;
        }
    }
    (k * h, (k - g).abs() * h)
}

/// Adaptive Gauss–Kronrod, bisecting any panel whose error estimate exceeds
/// its share of `tol · |total|`.
fn adaptive_quad(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= abs_tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, abs_tol / 2.0, depth - 1) + rec(f, m, b, abs_tol / 2.0, depth - 1)
    }
    let rough = gk15(f, a, b).0.abs();
    rec(f, a, b, tol * rough, 30)
}

fn special_functions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 4];
    // 50 orders on (−3.5, 9), kept away from the integers
    for k in 0..50 {
        let p = -3.5 + 12.5 * (k as f64 + 0.37) / 50.0;
        if (p - p.round()).abs() < 1e-3 {
            continue;
        }
        let m = specfun::pcf_moments(p).unwrap();
        let l = 2.0 * (p.max(0.0) + 1.0).sqrt() + 14.0;
        let d2 = |z: f64| specfun::pcf_d(p, z).unwrap().powi(2);
        let q0 = adaptive_quad(&d2, 0.0, l, 1e-12);
        let q1 = adaptive_quad(&|z| z * d2(z), 0.0, l, 1e-12);
        worst[0] = worst[0].max((m.zeroth / q0 - 1.0).abs()).max((m.first / q1 - 1.0).abs());
    }
    for _ in 0..200 {
        let p: f64 = rng.random_range(-5.0..9.0);
        let z: f64 = rng.random_range(-2.0..12.0);
        let (dm, d0, dp) = (specfun::pcf_d(p - 1.0, z).unwrap(), specfun::pcf_d(p, z).unwrap(), specfun::pcf_d(p + 1.0, z).unwrap());
        let scale = dp.abs() + (z * d0).abs() + (p * dm).abs();
        worst[1] = worst[1].max((dp - z * d0 + p * dm).abs() / scale);
    }
    for _ in 0..200 {
        let x = -(-1.0f64).exp() * rng.random::<f64>();
        for (b, x) in [(Branch::Principal, x), (Branch::Lower, x), (Branch::Principal, 10f64.powf(rng.random_range(-3.0..6.0)))] {
            if x == 0.0 && b == Branch::Lower {
                continue;
            }
            let w = specfun::lambert_w(b, x).unwrap();
            worst[2] = worst[2].max((w * w.exp() - x).abs() / x.abs().max(1e-3));
        }
    }
    let x1 = specfun::solve_power_exp(2.0, 1.0, (-1.0f64).exp()).unwrap();
    let reference_ok = (x1 - 1.0).abs() <= 1e-10;
    for _ in 0..50 {
        let d = rng.random_range(0.3..4.0);
        let a = rng.random_range(0.01..20.0);
        let c = rng.random_range(0.01..0.99) * (d / (a * std::f64::consts::E)).powf(d);
        let x = specfun::solve_power_exp(d, a, c).unwrap();
        let g = |x: f64| d * x.ln() - a * x - c.ln();
        let (mut lo, mut hi) = (1e-300f64, d / a);
        for _ in 0..2000 {
            let mid = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if g(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        worst[3] = worst[3].max((x / (0.5 * (lo + hi)) - 1.0).abs());
    }
    let pass = worst[0] <= 1e-8 && worst[1] <= 1e-9 && worst[2] <= 1e-12 && reference_ok && worst[3] <= 1e-9;
    Outcome::new(
        pass,
        format!(
            "moments vs quadrature {:.1e}, recurrence {:.1e}, lambert {:.1e}, power-exp reference |x−1| {:.1e}, vs bisection {:.1e}",
            worst[0],
            worst[1],
            worst[2],
            (x1 - 1.0).abs(),
            worst[3]
        ),
    )
}

// ---------------------------------------------------------------- 2

fn uniform_closed_form() -> Outcome {
    let sc = Scenario::flat(16, 1.0, StructuralParams::default());
    let sol = fieldcore::solve_collective_state(&sc).unwrap();
    let s = &sc.params;
    let mut k_err = 0.0f64;
    for i in 0..sc.n() {
        let predicted = s.n_investors / s.n_firms * (2.0 * s.sigma_khat2 / (std::f64::consts::PI * sol.f_x[i].abs())).sqrt();
        k_err = k_err.max((sol.k_x[i] / predicted - 1.0).abs());
    }
    let density = s.n_firms / sc.grid.volume();
    let psi_err = sol.psi2.iter().map(|&p| (p / density - 1.0).abs()).fold(0.0, f64::max);
    let gamma_exact = sol.gamma_hat.iter().all(|&g| g == 1.0);
    Outcome::new(
        k_err <= 1e-6 && psi_err <= 1e-12 && gamma_exact,
        format!("K vs half-normal mean {k_err:.1e}, ‖Ψ‖² vs N/V {psi_err:.1e}, Γ̂ ≡ 1: {gamma_exact}"),
    )
}

// ---------------------------------------------------------------- 3

fn periodic(n: usize, an: Analytic<f64>) -> Scenario {
    Scenario::analytic(SectorGrid::new(n, 0.0, 1.0, Boundary::Periodic), an, StructuralParams::default())
}

fn scenario_set() -> Vec<Scenario> {
    vec![
        Scenario::flat(16, 1.0, StructuralParams::default()),
        periodic(32, Analytic::Cosine { base: 1.0, amplitude: 0.3, cycles: 1.0 }),
        periodic(32, Analytic::GaussianBump { center: 0.5, height: 1.0, width: 0.15, base: 1.0 }),
        periodic(48, Analytic::GaussianBump { center: 0.5, height: -0.5, width: 0.15, base: 1.0 }),
        Scenario::analytic(
            SectorGrid::new(24, 0.0, 1.0, Boundary::Reflecting),
            Analytic::PiecewiseLinear { knots_x: vec![0.0, 1.0], knots_r: vec![0.5, 1.5] },
            StructuralParams::default(),
        ),
        periodic(32, Analytic::Cosine { base: 2.0, amplitude: 0.5, cycles: 2.0 }),
    ]
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn conservation() -> Outcome {
    let mut worst = 0.0f64;
    let mut scenarios = 0;
    for sc in scenario_set() {
        let Ok(sol) = fieldcore::solve_collective_state(&sc) else { continue };
        scenarios += 1;
        let (mut invested, mut physical) = (0.0, 0.0);
        for i in sol.active() {
            let scale = (sc.params.sigma_khat2 / sol.f_x[i].abs()).sqrt();
            let z_max = 2.0 * (sol.p_x[i] + 1.0).sqrt() + 14.0;
            let inv = simpson(|k| k * fieldcore::investor_density(&sc, &sol, k, i).unwrap(), 0.0, z_max * scale, 4000);
            worst = worst.max((inv / (sol.k_x[i] * sol.psi2[i]) - 1.0).abs());
            invested += inv;
            physical += sol.k_x[i] * sol.psi2[i];
        }
        worst = worst.max((invested / physical - 1.0).abs());
    }
    let p = StructuralParams { n_firms: 100.0, n_investors: 400.0, ..Default::default() };
    let sc = Scenario::flat(8, 1.0, p);
    let sol = fieldcore::solve_collective_state(&sc).unwrap();
    let mut gap = 0.0f64;
    let mut steps = 0;
    for seed in 0..3 {
        let mut pop = abm::init_population(&sc, seed, Some(&sol)).unwrap();
        for _ in 0..1000 {
            abm::step(&mut pop, &sc, 2.5e-4).unwrap();
            let total: f64 = pop.firm_k.iter().sum();
            gap = gap.max(pop.allocation_gap.abs() / total);
            steps += 1;
        }
    }
    Outcome::new(
        scenarios == 6 && worst <= 1e-6 && gap <= 1e-12,
        format!("capital identity worst {worst:.1e} over {scenarios} scenarios; ABM |Σfirm−Σinv|/Σ ≤ {gap:.1e} over {steps} steps"),
    )
}

// ---------------------------------------------------------------- 4

/// A narrow high-return bump over a low base: the bump sector holds far more
/// capital than the average, the rest sits near zero.
fn case1_scenario() -> Scenario {
    let p = StructuralParams {
        alpha: 0.648940121667983,
        b: 4.856544251215024,
        gamma: 2.4421353285367732e-5,
        epsilon: 0.014714848455496667,
        tau: 1.3553019620386175,
        sigma_x2: 1e-4,
        sigma_khat2: 0.020092331576031332,
        n_firms: 3.8616854675712524,
        n_investors: 2215.0569018860588,
        ..Default::default()
    };
    Scenario::analytic(
        SectorGrid::new(16, 0.0, 1.0, Boundary::Periodic),
        Analytic::GaussianBump { center: 0.5, height: 0.04727416544055377, width: 0.07127299057319916, base: 0.12370960491084189 },
        p,
    )
}

/// Few investors: capital far below one, dividends dominate.
fn case3_scenario() -> Scenario {
    let p = StructuralParams { n_investors: 1.0, gamma: 1e-4, b: 0.1, sigma_x2: 1e-4, ..Default::default() };
    Scenario::flat(8, 1.0, p)
}

/// Strong two-peak landscape with a wide capital spread, so that the mean
/// relative attractivity clears ln(p̄ + ½) > 1 (found by random search; this
/// is the smallest Lambert argument seen).
fn case4_scenario() -> Scenario {
    let p = StructuralParams {
        alpha: 0.5099542877997988,
        b: 9.435801331812852,
        gamma: 1.3795017443443982e-9,
        epsilon: 0.015441007287206756,
        tau: 1.6703093003043572,
        a_f0: 11.322995685553117,
        sigma_x2: 1e-4,
        sigma_xhat2: 0.005420863990772299,
        sigma_khat2: 232.58918038871445,
        n_firms: 19.859179355401036,
        n_investors: 51875.95638051176,
        ..Default::default()
    };
    Scenario::analytic(
        SectorGrid::new(32, 0.0, 1.0, Boundary::Periodic),
        Analytic::Cosine { base: 0.281, amplitude: 0.945 * 0.281, cycles: 2.0 },
        p,
    )
}

fn price_ratio(sc: &Scenario, sol: &FieldSolution, i: usize) -> f64 {
    sol.k_x[i].powf(sc.params.alpha) * sc.r()[i] / (sol.means.k_alpha * sol.means.r)
}

/// Worst relative error of `case` over the sectors satisfying `in_domain`,
/// with the number of such sectors.
fn case_error(
    sc: &Scenario,
    case: ClosedFormCase,
    in_domain: impl Fn(&FieldSolution, usize) -> bool,
) -> Result<(f64, usize), String> {
    let sol = fieldcore::solve_collective_state(sc).map_err(|e| e.to_string())?;
    let sectors: Vec<usize> = sol.active().filter(|&i| in_domain(&sol, i)).collect();
    if sectors.is_empty() {
        return Err("no sector inside the validity domain".into());
    }
    let k = fieldcore::closed_form_case(sc, &sol, case).map_err(|e| e.to_string())?;
    let worst = sectors.iter().map(|&i| (k[i] / sol.k_x[i] - 1.0).abs()).fold(0.0, f64::max);
    Ok((worst, sectors.len()))
}

fn closed_form_cases() -> Outcome {
    let mut detail = String::new();
    let mut pass = true;
    let sc1 = case1_scenario();
    let c1 = case_error(&sc1, ClosedFormCase::Case1, |sol, i| sol.k_x[i] >= 10.0 && price_ratio(&sc1, sol, i) >= 10.0);
    let c3 = case_error(&case3_scenario(), ClosedFormCase::Case3, |sol, i| sol.k_x[i] <= 1e-2 && sol.f_x[i] > 0.0);
    for (name, r) in [("case1", &c1), ("case3", &c3)] {
        match r {
            Ok((e, n)) => {
                pass &= *e <= 0.05;
                let _ = write!(detail, "{name} {e:.1e} on {n} sectors; ");
            }
            Err(e) => {
                pass = false;
                let _ = write!(detail, "{name}: {e}; ");
            }
        }
    }
    // intermediate capital with a return gradient and ln(p̄+½) > 1
    let sc = case4_scenario();
    let sol = fieldcore::solve_collective_state(&sc).unwrap();
    let mut matched4 = 0;
    let mut worst_arg = f64::INFINITY;
    let mut forms = 0;
    for i in sol.active() {
        let Ok(form) = fieldcore::case4_form(&sc, &sol, i) else { continue };
        forms += 1;
        worst_arg = worst_arg.min(form.a / form.d * form.c.powf(form.d.recip()));
        if let Ok(x) = specfun::solve_power_exp(form.d, form.a, form.c) {
            let err = (x.powf(sc.params.alpha.recip()) / sol.k_x[i] - 1.0).abs();
            matched4 += usize::from(err <= 0.05 && form.residual(x) <= 1e-8);
        }
    }
    let case4_ok = forms > 0 && matched4 == forms;
    let _ = write!(
        detail,
        "case4 {matched4}/{forms} sectors within 5% with residual ≤ 1e-8 (ln(p̄+½) > 1 at p̄ = {:.3}; smallest Lambert argument (a/d)c^(1/d) = {worst_arg:.2e}, real roots need ≤ 1/e)",
        sol.p_bar()
    );
    let as_documented = pass && !case4_ok && forms > 0 && worst_arg > (-1.0f64).exp();
    let pass = pass && case4_ok;
    Outcome { pass, detail, as_documented }
}

// ---------------------------------------------------------------- 5

fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let p = StructuralParams {
        n_investors: rng.random_range(200.0..800.0),
        n_firms: rng.random_range(50.0..200.0),
        b: rng.random_range(0.05..0.5),
        gamma: rng.random_range(0.05..0.2),
        alpha: rng.random_range(0.35..0.65),
        sigma_x2: 1e-3,
        ..Default::default()
    };
    let an = if rng.random_bool(0.5) {
        Analytic::Cosine { base: 1.0, amplitude: rng.random_range(0.05..0.4), cycles: 1.0 }
    } else {
        Analytic::GaussianBump {
            center: rng.random_range(0.2..0.8),
            height: rng.random_range(-0.5..1.0),
            width: rng.random_range(0.1..0.3),
            base: 1.0,
        }
    };
    Scenario::analytic(SectorGrid::new(64, 0.0, 1.0, Boundary::Periodic), an, p)
}

fn tight(seed: Option<Vec<f64>>, perturbation: Option<Perturbation<f64>>) -> SolverOptions<f64> {
    SolverOptions { update_tol: 1e-12, residual_tol: 1e-11, seed, perturbation, ..Default::default() }
}

fn stability_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut agree, mut sectors) = (0, 0);
    let (mut matched, mut compared) = (0, 0);
    let mut misses = Vec::new();
    let mut misses_off_peak = 0;
    let mut made = 0;
    while made < 10 {
        let sc = random_scenario(&mut rng);
        let Ok(sol) = fieldcore::solve_with(&sc, &tight(None, None)) else { continue };
        made += 1;
        // sectors that set M, with their neighbours
        let n = sc.n();
        let near_top: Vec<bool> = (0..n)
            .map(|i| [n - 1, 0, 1].iter().any(|&o| sol.p_x[(i + o) % n] == 0.0 && !sol.deserted[(i + o) % n]))
            .collect();
        for i in sol.active() {
            let d = stability::local_denominator(&sc, &sol, i).unwrap();
            let verdict = stability::iterate_map_check(&sc, &sol, i, 1e-4 * sol.k_x[i]).unwrap();
            sectors += 1;
            agree += usize::from((verdict == MapVerdict::Converges) == (d > 0.0));
            if d.abs() <= 0.1 {
                continue;
            }
            for param in [SensitivityParam::RelativeReturn, SensitivityParam::ShortTermReturn] {
                let closed = stability::sensitivity(&sc, &sol, i, param).unwrap();
                let del = 1e-4 * sol.f_x[i].abs();
                let resolve = |sign: f64| {
                    let mut pt = Perturbation::zero(sc.n());
                    match param {
                        SensitivityParam::RelativeReturn => pt.a_shift[i] = sign * del,
                        SensitivityParam::ShortTermReturn => pt.f_shift[i] = sign * del,
                    }
                    fieldcore::solve_with(&sc, &tight(Some(sol.k_x.clone()), Some(pt))).map(|s| s.k_x[i])
                };
                compared += 1;
                let err = match (resolve(1.0), resolve(-1.0)) {
                    (Ok(a), Ok(b)) => (closed / ((a - b) / (2.0 * del)) - 1.0).abs(),
                    _ => f64::INFINITY,
                };
                if err <= 0.05 {
                    matched += 1;
                } else {
                    // the closed form freezes M, C and the averages; next to
                    // the most attractive sectors that feedback is not small
                    if !near_top[i] {
                        misses_off_peak += 1;
                    }
                    misses.push(format!("s{made}:{i}{}{}={err:.2}", if sol.p_x[i] == 0.0 { "*" } else { "" }, &param.name()[..2]));
                }
            }
        }
    }
    let pass = agree == sectors && matched == compared;
    let detail = format!(
        "map check vs sign {agree}/{sectors}; sensitivities within 5% {matched}/{compared} (misses, * = a sector with p = 0: {})",
        misses.join(" ")
    );
    Outcome { pass, detail, as_documented: agree == sectors && misses_off_peak == 0 }
}

// ---------------------------------------------------------------- 6

fn dispersion() -> Outcome {
    let exp = ExpectationParams::default();
    let g = dynamics::default_g_range();
    let mut worst = 0.0f64;
    let mut reported = 0;
    for sc in scenario_set() {
        let sol = fieldcore::solve_collective_state(&sc).unwrap();
        let rep = dynamics::regime_analysis(&sc, &sol, &exp, &g);
        for i in sol.active() {
            for (j, &gw) in g.iter().enumerate() {
                let w = rep.omega[i][j];
                if w.re.is_finite() {
                    worst = worst.max(dynamics::dispersion_residual(&sc, &sol, i, gw, w, &exp).unwrap());
                    reported += 1;
                }
            }
        }
    }
    // K ≪ 1: the sign of c alone decides
    let sc = case3_scenario();
    let sol = fieldcore::solve_collective_state(&sc).unwrap();
    let mut small_ok = true;
    for c_t in [1.0, 0.2, -0.2, -1.0] {
        let rep = dynamics::regime_analysis(&sc, &sol, &ExpectationParams { c_t, ..Default::default() }, &g);
        for i in 0..sc.n() {
            small_ok &= rep.regime[i] == Regime::KSmall && rep.damped[i].iter().all(|&d| d == (c_t < 0.0));
        }
    }
    // intermediate capital: verdicts flip across the threshold
    let (mut flips, mut thresholds) = (0, 0);
    let intermediate = Scenario::analytic(
        SectorGrid::new(32, 0.0, 1.0, Boundary::Periodic),
        Analytic::Cosine { base: 1.0, amplitude: 0.3, cycles: 1.0 },
        StructuralParams { n_firms: 100.0, n_investors: 4000.0, ..Default::default() },
    );
    for sc in scenario_set().into_iter().chain([intermediate]) {
        let sol = fieldcore::solve_collective_state(&sc).unwrap();
        for i in sol.active() {
            if !(sol.k_x[i] > 1.0 && sol.k_x[i] < 10.0) {
                continue;
            }
            let Ok(Some(g2)) = dynamics::damping_threshold(&sc, &sol, i, &exp) else { continue };
            thresholds += 1;
            let below = dynamics::damping_condition(&sc, &sol, i, (0.99 * g2).sqrt(), &exp).unwrap();
            let above = dynamics::damping_condition(&sc, &sol, i, (1.01 * g2).sqrt(), &exp).unwrap();
            flips += usize::from(below != above);
        }
    }
    Outcome::new(
        worst <= 1e-10 && small_ok && thresholds > 0 && flips == thresholds,
        format!(
            "residual ≤ {worst:.1e} over {reported} roots; K≪1 sign rule {}; verdict flips within ±1% of G*² at {flips}/{thresholds} sectors",
            if small_ok { "holds" } else { "violated" }
        ),
    )
}

// ---------------------------------------------------------------- 7

fn abm_vs_field() -> Outcome {
    let p = StructuralParams { n_firms: 100.0, n_investors: 400.0, ..Default::default() };
    let sc = Scenario::flat(8, 1.0, p);
    let sol = fieldcore::solve_collective_state(&sc).unwrap();
    let opts = RunOptions { steps: 2500, burn_in: 500, dt: 2.5e-4, trajectory_stride: 0 };
    let seeds: Vec<u64> = (0..20).collect();
    let cmp = abm::run_and_compare(&sc, &sol, &seeds, &opts).unwrap();
    let kd = cmp.k_deviation.iter().copied().fold(0.0, f64::max);
    let cd = cmp.count_deviation.iter().copied().fold(0.0, f64::max);
    let se_k = cmp.mean_k_se.iter().zip(&cmp.field_k).map(|(s, k)| s / k).fold(0.0, f64::max);
    let se_c = cmp.firm_count_se.iter().zip(&cmp.field_count).map(|(s, c)| s / c).fold(0.0, f64::max);
    Outcome::new(
        kd <= 0.2 && cd <= 0.2,
        format!("max deviation: capital {kd:.3} (SE {se_k:.3}), firm count {cd:.3} (SE {se_c:.3}); field K {:.4}", sol.k_x[0]),
    )
}

// ---------------------------------------------------------------- 8

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("scenario.txt");
    let scenario = Scenario::analytic(
        SectorGrid::new(16, 0.0, 1.0, Boundary::Periodic),
        Analytic::Cosine { base: 1.0, amplitude: 0.3, cycles: 1.0 },
        StructuralParams { n_firms: 40.0, n_investors: 160.0, ..Default::default() },
    );
    scenario.save(&path).unwrap();
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        for args in [
            vec!["solve"],
            vec!["stability"],
            vec!["dynamics"],
            vec!["abm", "--seeds", "3", "--steps", "300", "--burn-in", "100", "--trajectory-stride", "50"],
            vec!["sweep", "--param", "gamma", "--values", "0.05,0.1,0.15"],
        ] {
            let status = Command::new(env!("CARGO_BIN_EXE_statfield"))
                .args(&args)
                .arg("--scenario")
                .arg(&path)
                .arg("--out")
                .arg(out.join(args[0]))
                .status()
                .unwrap();
            assert!(status.success(), "{args:?}");
        }
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut files = 0;
    let mut differ = Vec::new();
    for sub in ["solve", "stability", "dynamics", "abm", "sweep"] {
        for entry in std::fs::read_dir(a.join(sub)).unwrap() {
            let name = entry.unwrap().file_name();
            if Path::new(&name).extension().is_some_and(|e| e == "csv") {
                files += 1;
                if std::fs::read(a.join(sub).join(&name)).unwrap() != std::fs::read(b.join(sub).join(&name)).unwrap() {
                    differ.push(format!("{sub}/{}", name.to_string_lossy()));
                }
            }
        }
    }
    Outcome::new(
        files > 0 && differ.is_empty(),
        format!("{files} CSV files compared byte for byte across two runs, {} differ {differ:?}", differ.len()),
    )
}
