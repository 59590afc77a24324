//! Local stability of the per-sector capital equilibrium.
//!
//! Holding the global couplings (`M`, `C`, the firm-count multiplier and the
//! averages) fixed, each sector's capital solves `Φ(K) = ln(C σ_K̂²)` with
//!
//! ```text
//! Φ(K) = ln K + ln ‖Ψ‖² + ln |f| + C₁(p, f) − ln ∫₀^∞ z D_p²,   C₁ = σ_X² σ_K̂² (p+½)² f'² / (96 |f|³)
//! ```
//!
//! The stability denominator is `D = K dΦ/dK`. The fixed-point map
//! `T(K) = C σ_K̂² Γ̂ / (‖Ψ‖² |f|)` has slope `1 − D`, so an equilibrium
//! attracts a suitably relaxed iteration iff `D > 0`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fieldcore::{self, FieldSolution, F_FLOOR};
use crate::scalar::{c, Scalar};
use crate::scenario::{LandscapeDerivatives, Scenario};
use crate::specfun::ln_moments;

/// `H(x)` with `H(0) = ½`.
pub fn heaviside<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        T::zero()
    } else {
        c(0.5)
    }
}

/// `d/dp ln ∫₀^∞ z D_p(z)² dz`.
pub fn ln_first_moment_slope<T: Scalar>(p: T) -> Result<T> {
    let h: T = c(1e-4);
    let l = |x: T| -> Result<T> { Ok(ln_moments(x)?.1) };
    Ok((l(p - h - h)? - c::<T>(8.0) * l(p - h)? + c::<T>(8.0) * l(p + h)? - l(p + h + h)?) / (c::<T>(12.0) * h))
}

/// `C₁ = σ_X² σ_K̂² (p+½)² f'²/(96|f|³)`, minus the log of the damping factor.
pub fn damping_exponent<T: Scalar>(scenario: &Scenario<T>, p: T, f: T, f_prime: T) -> T {
    let s = &scenario.params;
    let q = p + c(0.5);
    s.sigma_x2 * s.sigma_khat2 * q * q * f_prime * f_prime / (c::<T>(96.0) * f.abs().powi(3))
}

/// `k(p) = d ln Γ̂(p+½)/dp` including the damping factor.
pub fn k_of_p<T: Scalar>(scenario: &Scenario<T>, p: T, f: T, f_prime: T) -> Result<T> {
    let c1 = damping_exponent(scenario, p, f, f_prime);
    Ok(ln_first_moment_slope(p)? - c::<T>(2.0) * c1 / (p + c(0.5)))
}

/// First-order response of one sector, globals held fixed.
#[derive(Debug, Clone, Copy)]
struct Local<T> {
    k: T,
    f: T,
    p: T,
    c1: T,
    /// `d ln ∫z D_p² / dp`.
    k0: T,
    /// `∂f/∂K`.
    f_k: T,
    psi2: T,
    psi2_k: T,
    /// `∂A/∂K`.
    a_k: T,
}

fn local<T: Scalar>(
    scenario: &Scenario<T>,
    derivs: &LandscapeDerivatives<T>,
    sol: &FieldSolution<T>,
    i: usize,
) -> Result<Local<T>> {
    if sol.deserted[i] {
        return Err(Error::validation("sector", format!("sector {i} is deserted")));
    }
    let s = &scenario.params;
    let f = sol.f_x[i];
    if f.abs() < c(F_FLOOR) {
        return Err(Error::Singular { index: i, f: f.f64() });
    }
    let k = sol.k_x[i];
    let p = sol.p_x[i];
    let f_k = fieldcore::df_dk(scenario, derivs, k, i, &sol.means);
    let psi2_k = fieldcore::dpsi2_dk(scenario, derivs, k, i);
    let g = sol.g_x[i];
    let a = s.alpha;
    let a_k = c::<T>(2.0) * g * (a * g / k) / s.sigma_xhat2
        + f_k * (heaviside(f) + c(0.5))
        + a * sol.grad_g_x[i] / k;
    let c1 = damping_exponent(scenario, p, f, sol.f_prime[i]);
    let k0 = ln_first_moment_slope(p)?;
    Ok(Local {
        k,
        f,
        p,
        c1,
        k0,
        f_k,
        psi2: sol.psi2[i],
        psi2_k,
        a_k,
    })
}

impl<T: Scalar> Local<T> {
    /// `dΦ` for given first-order changes of `f`, `‖Ψ‖²` and `A`, plus an
    /// explicit `d ln K`.
    fn d_phi(&self, dlnk: T, df: T, dpsi2: T, da: T) -> T {
        let fa = self.f.abs();
        let dp = -da / fa - self.p * df / self.f;
        let dc1 = self.c1 * (c::<T>(2.0) * dp / (self.p + c(0.5)) - c::<T>(3.0) * df / self.f);
        dlnk + dpsi2 / self.psi2 + df / self.f + dc1 - self.k0 * dp
    }

    fn denominator(&self) -> T {
        self.k * self.d_phi(self.k.recip(), self.f_k, self.psi2_k, self.a_k)
    }
}

/// Stability denominator `D = K dΦ/dK` at an active sector.
pub fn local_denominator<T: Scalar>(scenario: &Scenario<T>, sol: &FieldSolution<T>, i: usize) -> Result<T> {
    let derivs = scenario.landscape_derivatives();
    Ok(local(scenario, &derivs, sol, i)?.denominator())
}

/// `B·K = 1 − D`, the slope of the unrelaxed map, capped at `0` once `D ≥ 1`
/// (the relaxed step never overshoots). `|B·K| > 1 ⇔ D < 0`.
pub fn b_crit<T: Scalar>(denominator: T) -> T {
    T::one() - denominator.min(T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapVerdict {
    Converges,
    Diverges,
}

/// Result of iterating a scalar linear map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMapRun<T> {
    /// `|δ_n| / |δ_0|`.
    pub ratio: T,
    pub verdict: MapVerdict,
}

/// Iterates `δ ← m δ` and reports the decay ratio; converges iff `|m| < 1`.
pub fn iterate_linear_map<T: Scalar>(multiplier: T, perturbation: T, steps: usize) -> LinearMapRun<T> {
    let mut d = perturbation;
    for _ in 0..steps {
        d *= multiplier;
    }
    let ratio = (d / perturbation).abs();
    LinearMapRun {
        ratio,
        verdict: if multiplier.abs() < T::one() {
            MapVerdict::Converges
        } else {
            MapVerdict::Diverges
        },
    }
}

const MAP_STEPS: usize = 200;

/// Displaces `K` at sector `i` by `perturbation` and iterates the sector's
/// own fixed-point map (globals frozen) with relaxation `ω = 1/(2|D|)`,
/// `K ← K + ω (T(K) − K)`, for 200 steps. Converges iff the deviation falls
/// below `1e-3` of its initial size.
pub fn iterate_map_check<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    i: usize,
    perturbation: T,
) -> Result<MapVerdict> {
    let k0 = sol.k_x[i];
    if !(perturbation.abs() <= c::<T>(0.01) * k0) || perturbation == T::zero() {
        return Err(Error::validation("perturbation", "must be nonzero and at most 1% of K"));
    }
    let derivs = scenario.landscape_derivatives();
    let d = local(scenario, &derivs, sol, i)?.denominator();
    if d.abs() < c(1e-12) {
        return Ok(MapVerdict::Diverges);
    }
    let omega = (c::<T>(2.0) * d.abs()).recip();
    // anchor at the solver's own map so the O(residual) offset cancels
    let t0 = sector_map(scenario, &derivs, sol, i, k0)?;
    let mut k = k0 + perturbation;
    for _ in 0..MAP_STEPS {
        let t = match sector_map(scenario, &derivs, sol, i, k) {
            Ok(t) if t.is_finite() => t - t0 + k0,
            _ => return Ok(MapVerdict::Diverges),
        };
        k += omega * (t - k);
        if !(k > T::zero()) || (k - k0).abs() > c::<T>(1e3) * perturbation.abs() {
            return Ok(MapVerdict::Diverges);
        }
    }
    Ok(if (k - k0).abs() < c::<T>(1e-3) * perturbation.abs() {
        MapVerdict::Converges
    } else {
        MapVerdict::Diverges
    })
}

/// `T_i(K) = C σ_K̂² Γ̂(p(K)+½) / (‖Ψ(K)‖² |f(K)|)` with every global of `sol`
/// held fixed.
fn sector_map<T: Scalar>(
    scenario: &Scenario<T>,
    derivs: &LandscapeDerivatives<T>,
    sol: &FieldSolution<T>,
    i: usize,
    k: T,
) -> Result<T> {
    let s = &scenario.params;
    let q = fieldcore::density_cost(scenario, derivs, k, i);
    let psi2 = (sol.lagrange_d - q) / (c::<T>(2.0) * s.tau);
    if !(psi2 > T::zero()) {
        return Err(Error::NoSolution("sector emptied".into()));
    }
    let f = fieldcore::short_term_return(scenario, k, i, psi2, &sol.means);
    let (g, gg) = fieldcore::mobility(scenario, derivs, k, i, &sol.means);
    let a = fieldcore::attractivity(scenario, f, g, gg, T::zero());
    let p = ((sol.big_m - a) / f.abs()).max(T::zero());
    let gh = fieldcore::gamma_hat(scenario, p, f, sol.f_prime[i])?;
    Ok(sol.c_norm * s.sigma_khat2 * gh / (psi2 * f.abs()))
}

/// Parameters whose local sensitivity `δK/δY` is available in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SensitivityParam {
    /// Additive shift of the expectation part of the attractivity,
    /// `g²/σ_X̂² + ∇g`: the sector's expected return relative to its
    /// neighbours.
    RelativeReturn,
    /// Additive shift of the short-term return `f`.
    ShortTermReturn,
}

impl SensitivityParam {
    pub fn name(self) -> &'static str {
        match self {
            SensitivityParam::RelativeReturn => "relative_return_Y",
            SensitivityParam::ShortTermReturn => "short_term_f_param",
        }
    }
}

/// Closed-form `δK_X/δY` at sector `i`, globals fixed: `−K·(∂Φ/∂Y)/D`.
pub fn sensitivity<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    i: usize,
    param: SensitivityParam,
) -> Result<T> {
    let derivs = scenario.landscape_derivatives();
    let loc = local(scenario, &derivs, sol, i)?;
    let d = loc.denominator();
    if d.abs() < c(1e-12) {
        return Err(Error::Degenerate { index: i, value: d.f64() });
    }
    let phi_y = match param {
        SensitivityParam::RelativeReturn => loc.d_phi(T::zero(), T::zero(), T::zero(), T::one()),
        SensitivityParam::ShortTermReturn => {
            loc.d_phi(T::zero(), T::one(), T::zero(), heaviside(loc.f) + c(0.5))
        }
    };
    Ok(-loc.k * phi_y / d)
}

/// Capital-accumulation pattern of a sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pattern {
    /// Low capital, dividend-driven short-term returns.
    Pattern1,
    /// Intermediate capital, mixed drivers.
    Pattern2,
    /// High capital driven by long-term expectations, stable.
    Pattern3Stable,
    /// Unstable equilibrium (a capital threshold rather than an average).
    Pattern3Unstable,
    Deserted,
}

impl Pattern {
    pub fn label(self) -> &'static str {
        match self {
            Pattern::Pattern1 => "pattern1",
            Pattern::Pattern2 => "pattern2",
            Pattern::Pattern3Stable => "pattern3_stable",
            Pattern::Pattern3Unstable => "pattern3_unstable",
            Pattern::Deserted => "deserted",
        }
    }
}

/// Thresholds of [`classify`].
#[derive(Debug, Clone, Copy)]
pub struct PatternConfig<T> {
    pub low_quantile: T,
    pub high_quantile: T,
    /// A term "dominates" when it exceeds the other by this factor.
    pub dominance: T,
}

impl<T: Scalar> Default for PatternConfig<T> {
    fn default() -> Self {
        Self {
            low_quantile: c(0.2),
            high_quantile: c(0.8),
            dominance: c(2.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityReport<T> {
    /// `NaN` on deserted sectors.
    pub stab_denom: Vec<T>,
    pub b_crit: Vec<T>,
    pub pattern: Vec<Pattern>,
    pub sensitivities: BTreeMap<SensitivityParam, Vec<T>>,
}

/// Linear-interpolated quantile of an unsorted sample.
pub fn quantile<T: Scalar>(values: &[T], q: T) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    if v.is_empty() {
        return T::nan();
    }
    let pos = q * T::usize(v.len() - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(v.len() - 1);
    let hi = (lo + 1).min(v.len() - 1);
    let w = pos - T::usize(lo);
    v[lo] + w * (v[hi] - v[lo])
}

/// Dividend term `αR K^{α−1}/ε` and expectation term
/// `|b·atan(u−1)|/ε + g²/σ_X̂² + |∇g|` of a sector.
pub fn return_terms<T: Scalar>(scenario: &Scenario<T>, sol: &FieldSolution<T>, i: usize) -> (T, T) {
    let s = &scenario.params;
    let k = sol.k_x[i];
    let r = scenario.r()[i];
    let ka = k.powf(s.alpha);
    let div = s.alpha * r * ka / k / s.epsilon;
    let u = ka * r / (sol.means.k_alpha * sol.means.r);
    let price = (s.b * (u - T::one()).atan()).abs() / s.epsilon;
    let g = sol.g_x[i];
    (div, price + g * g / s.sigma_xhat2 + sol.grad_g_x[i].abs())
}

/// Per-sector stability and pattern labels with default thresholds.
pub fn classify<T: Scalar>(scenario: &Scenario<T>, sol: &FieldSolution<T>) -> Result<StabilityReport<T>> {
    classify_with(
        scenario,
        sol,
        &PatternConfig::default(),
        &[SensitivityParam::RelativeReturn, SensitivityParam::ShortTermReturn],
    )
}

/// [`classify`] with explicit thresholds and sensitivity columns.
pub fn classify_with<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    cfg: &PatternConfig<T>,
    params: &[SensitivityParam],
) -> Result<StabilityReport<T>> {
    let n = sol.n();
    let derivs = scenario.landscape_derivatives();
    let active: Vec<T> = sol.active().map(|i| sol.k_x[i]).collect();
    let lo = quantile(&active, cfg.low_quantile);
    let hi = quantile(&active, cfg.high_quantile);
    let mut stab_denom = vec![T::nan(); n];
    let mut b = vec![T::nan(); n];
    let mut pattern = vec![Pattern::Deserted; n];
    for i in sol.active() {
        let d = local(scenario, &derivs, sol, i)?.denominator();
        stab_denom[i] = d;
        b[i] = b_crit(d);
        let (div, exp) = return_terms(scenario, sol, i);
        let k = sol.k_x[i];
        pattern[i] = if d < T::zero() {
            Pattern::Pattern3Unstable
        } else if k > hi && exp > cfg.dominance * div {
            Pattern::Pattern3Stable
        } else if k < lo && div > cfg.dominance * exp {
            Pattern::Pattern1
        } else {
            Pattern::Pattern2
        };
    }
    let mut sensitivities = BTreeMap::new();
    for &p in params {
        let col = (0..n)
            .map(|i| {
                if sol.deserted[i] {
                    T::nan()
                } else {
                    sensitivity(scenario, sol, i, p).unwrap_or(T::nan())
                }
            })
            .collect();
        sensitivities.insert(p, col);
    }
    Ok(StabilityReport {
        stab_denom,
        b_crit: b,
        pattern,
        sensitivities,
    })
}
