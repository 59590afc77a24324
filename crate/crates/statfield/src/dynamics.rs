//! Slow-time dynamics of `(K_X, R(X))` around the collective state.
//!
//! The variation of the capital equation reads
//! `k ∇_θK/K + l ∇_θR/R − 2m ∇_X∇_θR/∇R + n ∇²_X∇_θR/∇²R = 0` and expected
//! returns respond through `∇_θR = a₀ ∇_θK + c ∇_θ²K + …`. Plane waves
//! `e^{i(Ωθ + G X)}` give, to first order,
//!
//! ```text
//! k/K + (l/R − 2i m G/∇R)(a₀ + i c Ω) = 0
//! ```
//!
//! With this sign convention `Im Ω > 0` means decaying oscillations.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fieldcore::{FieldSolution, F_FLOOR};
use crate::scalar::{c, Scalar};
use crate::scenario::{ExpectationParams, Scenario};
use crate::stability::damping_exponent;

/// Coefficients of the linearized capital dynamics at one sector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynCoefficients<T> {
    pub k: T,
    pub l: T,
    pub m: T,
    pub n: T,
    pub c1: T,
    pub c2: T,
    pub c3: T,
}

/// `C₁ = σ_X²σ_K̂²(p+½)²f'²/(96|f|³)`, `C₂ = ln(p+½) − 2C₁/(p+½)`,
/// `C₃ = 1 − C₁ + (p+3/2)C₂`.
pub fn c_factors<T: Scalar>(scenario: &Scenario<T>, p: T, f: T, f_prime: T) -> (T, T, T) {
    let c1 = damping_exponent(scenario, p, f, f_prime);
    let q = p + c(0.5);
    let c2 = q.ln() - c::<T>(2.0) * c1 / q;
    let c3 = T::one() - c1 + (p + c(1.5)) * c2;
    (c1, c2, c3)
}

/// Level of the bounded price term, measured from its lower bound:
/// `F₁ = (b/ε)(π/2 + atan(K^αR/(⟨K^α⟩⟨R⟩) − 1))`.
pub fn price_level<T: Scalar>(scenario: &Scenario<T>, sol: &FieldSolution<T>, i: usize) -> T {
    let s = &scenario.params;
    let u = sol.k_x[i].powf(s.alpha) * scenario.r()[i] / (sol.means.k_alpha * sol.means.r);
    s.b * (T::FRAC_PI_2() + (u - T::one()).atan()) / s.epsilon
}

/// `(k, l, m, n)` and `C₁, C₂, C₃` at an active sector.
pub fn dyn_coefficients<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    i: usize,
) -> Result<DynCoefficients<T>> {
    if sol.deserted[i] {
        return Err(Error::validation("sector", format!("sector {i} is deserted")));
    }
    let s = &scenario.params;
    let f = sol.f_x[i];
    let fa = f.abs();
    if fa < c(F_FLOOR) {
        return Err(Error::Singular { index: i, f: f.f64() });
    }
    let (c1, c2, c3) = c_factors(scenario, sol.p_x[i], f, sol.f_prime[i]);
    let psi2 = sol.psi2[i];
    let rho = (sol.lagrange_d / (c::<T>(2.0) * s.tau) - psi2) / psi2;
    let g2 = sol.g_x[i] * sol.g_x[i] / s.sigma_xhat2;
    let gg = sol.grad_g_x[i];
    let a = s.alpha;
    let k = T::one() - s.eta * (T::one() - s.gamma * c3 / fa) * rho
        + (a * (c::<T>(2.0) * g2 + gg) * c2 - (T::one() - a) * c3) / fa;
    let l = s.varsigma * price_level(scenario, sol, i) * c3 / f;
    let m = (T::one() - s.gamma * c3 / f) * rho - g2 * c2;
    let n = gg * c2 / fa;
    Ok(DynCoefficients { k, l, m, n, c1, c2, c3 })
}

/// The reduced quantities entering the dispersion relation.
#[derive(Debug, Clone, Copy)]
struct Reduced<T> {
    /// `k/K`.
    kappa: T,
    /// `l/R`.
    big_l: T,
    /// `2m/∇R`.
    mu: T,
    a0: T,
    c: T,
}

fn reduced<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    i: usize,
    exp: &ExpectationParams<T>,
) -> Result<Reduced<T>> {
    let co = dyn_coefficients(scenario, sol, i)?;
    let grad = scenario.landscape_derivatives().grad[i];
    let mu = if co.m == T::zero() {
        T::zero()
    } else if grad == T::zero() {
        return Err(Error::Degenerate {
            index: i,
            value: 0.0,
        });
    } else {
        c::<T>(2.0) * co.m / grad
    };
    Ok(Reduced {
        kappa: co.k / sol.k_x[i],
        big_l: co.l / scenario.r()[i],
        mu,
        a0: exp.a0,
        c: exp.c_t,
    })
}

fn omega_of<T: Scalar>(r: &Reduced<T>, g: T, i: usize) -> Result<Complex<T>> {
    let s2 = r.big_l * r.big_l + r.mu * r.mu * g * g;
    let den = r.c * s2;
    if !(den.abs() >= c(1e-14)) {
        return Err(Error::Singular { index: i, f: den.f64() });
    }
    Ok(Complex::new(
        -r.kappa * r.mu * g / den,
        (r.kappa * r.big_l + r.a0 * s2) / den,
    ))
}

/// Complex frequency `Ω(G)` of the first-order dispersion relation.
pub fn frequency<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    i: usize,
    g_wave: T,
    exp: &ExpectationParams<T>,
) -> Result<Complex<T>> {
    omega_of(&reduced(scenario, sol, i, exp)?, g_wave, i)
}

/// `|k/K + (l/R − iμG)(a₀ + icΩ)|` relative to the size of its terms.
pub fn dispersion_residual<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    i: usize,
    g_wave: T,
    omega: Complex<T>,
    exp: &ExpectationParams<T>,
) -> Result<T> {
    let r = reduced(scenario, sol, i, exp)?;
    let lhs = Complex::new(r.big_l, -r.mu * g_wave);
    let rhs = Complex::new(r.a0, T::zero()) + Complex::new(T::zero(), r.c) * omega;
    let total = Complex::new(r.kappa, T::zero()) + lhs * rhs;
    let scale = r.kappa.abs().max(lhs.norm() * rhs.norm()).max(T::min_positive_value());
    Ok(total.norm() / scale)
}

/// Left-hand side of the damping inequality:
/// `(lc/R)(k/K + a₀l/R) + 4m²c a₀ G²/(∇R)²`.
pub fn damping_lhs<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    i: usize,
    g_wave: T,
    exp: &ExpectationParams<T>,
) -> Result<T> {
    let r = reduced(scenario, sol, i, exp)?;
    Ok(r.big_l * r.c * (r.kappa + r.a0 * r.big_l) + r.mu * r.mu * r.c * r.a0 * g_wave * g_wave)
}

/// True iff oscillations at wavenumber `G` decay.
pub fn damping_condition<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    i: usize,
    g_wave: T,
    exp: &ExpectationParams<T>,
) -> Result<bool> {
    Ok(damping_lhs(scenario, sol, i, g_wave, exp)? > T::zero())
}

/// `G²` at which the damping verdict flips, when one exists:
/// `G*² = −(l/R)(k/K + a₀l/R)(∇R)²/(4m²a₀)`.
pub fn damping_threshold<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    i: usize,
    exp: &ExpectationParams<T>,
) -> Result<Option<T>> {
    let r = reduced(scenario, sol, i, exp)?;
    let g2 = -r.big_l * (r.kappa + r.a0 * r.big_l) / (r.a0 * r.mu * r.mu);
    Ok((g2.is_finite() && g2 > T::zero()).then_some(g2))
}

/// Both roots `Ω` of the dispersion relation with the second-order
/// expectation kernel (`b, d, f, h, u, v` of [`ExpectationParams`]) kept.
/// Reduces to [`frequency`] when those coefficients vanish, in which case
/// the single root is returned twice.
pub fn frequency_full<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    i: usize,
    g_wave: T,
    exp: &ExpectationParams<T>,
) -> Result<[Complex<T>; 2]> {
    let r = reduced(scenario, sol, i, exp)?;
    let g = g_wave;
    let cx = |re: T, im: T| Complex::new(re, im);
    // κ(1 + fG² + vGΩ + hΩ²) + (l − iμG)(a₀ − bG² + i cΩ − uGΩ − dΩ²) = 0,
    // collected as A₂Ω² + A₁Ω + A₀
    let lm = cx(r.big_l, -r.mu * g);
    let kap = cx(r.kappa, T::zero());
    let a2 = kap * exp.h_t2 - lm * exp.d_t2;
    let a1 = kap * (exp.v_xt * g) + lm * cx(-exp.u_xt * g, r.c);
    let a0 = kap * (T::one() + exp.f_x2 * g * g) + lm * (exp.a0 - exp.b_x2 * g * g);
    if a2.norm() <= c::<T>(1e-14) * a1.norm() {
        let w = -a0 / a1;
        return Ok([w, w]);
    }
    let disc = (a1 * a1 - a2 * a0 * c::<T>(4.0)).sqrt();
    // stable quadratic roots
    let q = if (a1.conj() * disc).re >= T::zero() {
        (a1 + disc) * c::<T>(-0.5)
    } else {
        (a1 - disc) * c::<T>(-0.5)
    };
    Ok([q / a2, a0 / q])
}

/// Dynamic regime of a sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    KSmall,
    KLargeStable,
    KLargeUnstable,
    Intermediate,
    Deserted,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::KSmall => "k_small",
            Regime::KLargeStable => "k_large_stable",
            Regime::KLargeUnstable => "k_large_unstable",
            Regime::Intermediate => "intermediate",
            Regime::Deserted => "deserted",
        }
    }
}

/// Capital levels separating the regimes.
#[derive(Debug, Clone, Copy)]
pub struct RegimeBounds<T> {
    /// `K ≤ small` is the `K ≪ 1` regime.
    pub small: T,
    /// `K ≥ large` is the `K ≫ 1` regime.
    pub large: T,
}

impl<T: Scalar> Default for RegimeBounds<T> {
    fn default() -> Self {
        Self {
            small: T::one(),
            large: c(10.0),
        }
    }
}

/// Regime label from the capital level and, for large capital, the sign of
/// `k` (negative on the stable branch).
pub fn regime_of<T: Scalar>(k_x: T, coeffs: &DynCoefficients<T>, bounds: &RegimeBounds<T>) -> Regime {
    if k_x <= bounds.small {
        Regime::KSmall
    } else if k_x >= bounds.large {
        if coeffs.k < T::zero() {
            Regime::KLargeStable
        } else {
            Regime::KLargeUnstable
        }
    } else {
        Regime::Intermediate
    }
}

/// `n` wavenumbers log-spaced over `[lo, hi]`; `lo = hi` gives a single
/// value (which may be zero).
pub fn log_space<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ if lo == hi => vec![lo; n],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|j| (a + (b - a) * T::usize(j) / T::usize(n - 1)).exp())
                .collect()
        }
    }
}

/// 32 log-spaced wavenumbers in `[1e-3, 1e2]`.
pub fn default_g_range<T: Scalar>() -> Vec<T> {
    log_space(c(1e-3), c(1e2), 32)
}

#[derive(Debug, Clone)]
pub struct DynamicsReport<T> {
    pub g_wave: Vec<T>,
    /// `None` on deserted sectors.
    pub coeffs: Vec<Option<DynCoefficients<T>>>,
    pub regime: Vec<Regime>,
    /// `omega[i][j]` at sector `i` and `g_wave[j]`; `NaN` where singular.
    pub omega: Vec<Vec<Complex<T>>>,
    pub damped: Vec<Vec<bool>>,
    pub threshold_g2: Vec<Option<T>>,
}

/// Coefficients, regimes, frequencies and damping verdicts for every sector
/// over `g_range`.
pub fn regime_analysis<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    exp: &ExpectationParams<T>,
    g_range: &[T],
) -> DynamicsReport<T> {
    regime_analysis_with(scenario, sol, exp, g_range, &RegimeBounds::default())
}

pub fn regime_analysis_with<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    exp: &ExpectationParams<T>,
    g_range: &[T],
    bounds: &RegimeBounds<T>,
) -> DynamicsReport<T> {
    let n = sol.n();
    let nan = Complex::new(T::nan(), T::nan());
    let mut rep = DynamicsReport {
        g_wave: g_range.to_vec(),
        coeffs: vec![None; n],
        regime: vec![Regime::Deserted; n],
        omega: vec![vec![nan; g_range.len()]; n],
        damped: vec![vec![false; g_range.len()]; n],
        threshold_g2: vec![None; n],
    };
    for i in sol.active() {
        let Ok(co) = dyn_coefficients(scenario, sol, i) else {
            continue;
        };
        rep.coeffs[i] = Some(co);
        rep.regime[i] = regime_of(sol.k_x[i], &co, bounds);
        rep.threshold_g2[i] = damping_threshold(scenario, sol, i, exp).ok().flatten();
        for (j, &g) in g_range.iter().enumerate() {
            if let Ok(w) = frequency(scenario, sol, i, g, exp) {
                rep.omega[i][j] = w;
            }
            rep.damped[i][j] = damping_condition(scenario, sol, i, g, exp).unwrap_or(false);
        }
    }
    rep
}
