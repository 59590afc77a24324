//! Collective state of the economy: firm and investor densities and the
//! self-consistent average capital per firm `K_X`.
//!
//! Per sector the capital equation reads
//!
//! ```text
//! K ‖Ψ‖² |f| = C σ_K̂² Γ̂(p + ½),   Γ̂(p + ½) = e^{-σ_X² σ_K̂² (p+½)² f'² / (96 |f|³)} ∫₀^∞ z D_p(z)² dz
//! ```
//!
//! with `p = (M − A)/|f|` the relative attractivity, `M = max A` and `C`
//! fixed by the investor count. [`solve_collective_state`] iterates this
//! with a damped update while recalibrating the firm-count multiplier, `M`
//! and `C` every sweep.
//!
//! Conventions: `f` carries the `1/ε` prefactor, averages `⟨K^α⟩`, `⟨R⟩` are
//! `‖Ψ‖²`-weighted over active sectors, and densities are per unit sector
//! length (so `h Σ ‖Ψ‖² = N`).

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::scenario::{LandscapeDerivatives, Scenario};
use crate::specfun::{ln_moments, pcf_d};

/// `|f|` below this is treated as singular.
pub const F_FLOOR: f64 = 1e-9;

/// `2 − ln 2 − γ₀`, the slope of `ln Γ̂` at `p = 0`.
pub const PEAK_SLOPE: f64 = 2.0 - std::f64::consts::LN_2 - 0.577_215_664_901_532_9;

/// Iteration controls for [`solve_collective_state`].
#[derive(Debug, Clone)]
pub struct SolverOptions<T> {
    pub max_iter: usize,
    /// Relaxation factor of the update `K ← K + ω (T(K) − K)`.
    pub damping: T,
    pub update_tol: T,
    pub residual_tol: T,
    /// Starting capital per sector; `K ≡ 1` when absent.
    pub seed: Option<Vec<T>>,
    /// Exogenous per-sector shifts, used to probe sensitivities.
    pub perturbation: Option<Perturbation<T>>,
}

/// Additive per-sector shifts of the short-term return `f` and of the
/// expectation part of the attractivity `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<T> {
    pub f_shift: Vec<T>,
    pub a_shift: Vec<T>,
}

impl<T: Scalar> Perturbation<T> {
    pub fn zero(n: usize) -> Self {
        Self {
            f_shift: vec![T::zero(); n],
            a_shift: vec![T::zero(); n],
        }
    }
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            damping: c(0.5),
            update_tol: c(1e-10),
            residual_tol: c(1e-8),
            seed: None,
            perturbation: None,
        }
    }
}

/// `‖Ψ‖²`-weighted averages entering the price term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Means<T> {
    pub k_alpha: T,
    pub r: T,
}

/// Converged collective state.
#[derive(Debug, Clone)]
pub struct FieldSolution<T> {
    /// Average capital per firm; `0` on deserted sectors.
    pub k_x: Vec<T>,
    pub psi2: Vec<T>,
    /// Investor density (investors per unit sector length).
    pub nhat: Vec<T>,
    pub f_x: Vec<T>,
    pub g_x: Vec<T>,
    pub grad_g_x: Vec<T>,
    pub p_x: Vec<T>,
    /// `∂f/∂X` along the grid.
    pub f_prime: Vec<T>,
    pub attractivity: Vec<T>,
    pub gamma_hat: Vec<T>,
    pub lagrange_d: T,
    pub big_m: T,
    pub c_norm: T,
    pub means: Means<T>,
    pub deserted: Vec<bool>,
    pub residual: T,
    pub iterations: usize,
    pub branch_id: usize,
}

impl<T: Scalar> FieldSolution<T> {
    pub fn n(&self) -> usize {
        self.k_x.len()
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(|&i| !self.deserted[i])
    }

    /// Index of the most attractive active sector.
    pub fn peak(&self) -> usize {
        self.active()
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if self.attractivity[b] >= self.attractivity[i] => Some(b),
                _ => Some(i),
            })
            .unwrap_or(0)
    }

    /// `‖Ψ‖²`-weighted mean of `p` over active sectors.
    pub fn p_bar(&self) -> T {
        let (s, w) = self.active().fold((T::zero(), T::zero()), |(s, w), i| {
            (s + self.psi2[i] * self.p_x[i], w + self.psi2[i])
        });
        s / w
    }
}

/// `(1/ε)(αR K^{α−1} − γ‖Ψ‖² + b·atan(K^α R/(⟨K^α⟩⟨R⟩) − 1))`.
pub fn short_term_return<T: Scalar>(scenario: &Scenario<T>, k: T, i: usize, psi2: T, means: &Means<T>) -> T {
    let p = &scenario.params;
    let r = scenario.r()[i];
    if k.is_infinite() {
        return (p.b * T::FRAC_PI_2() - p.gamma * psi2) / p.epsilon;
    }
    let ka = k.powf(p.alpha);
    let u = ka * r / (means.k_alpha * means.r);
    (p.alpha * r * ka / k - p.gamma * psi2 + p.b * (u - T::one()).atan()) / p.epsilon
}

/// Mobility coefficient `(a + b/⟨R⟩)/⟨K^α⟩` shared by `g` and `∇g`.
fn mobility_scale<T: Scalar>(scenario: &Scenario<T>, means: &Means<T>) -> T {
    let p = &scenario.params;
    (p.a_f0 + p.b / means.r) / means.k_alpha
}

/// `(g, ∇g) = (∇R, ∇²R)·(a + b/⟨R⟩)·K^α/⟨K^α⟩`.
pub fn mobility<T: Scalar>(
    scenario: &Scenario<T>,
    derivs: &LandscapeDerivatives<T>,
    k: T,
    i: usize,
    means: &Means<T>,
) -> (T, T) {
    let s = mobility_scale(scenario, means) * k.powf(scenario.params.alpha);
    (derivs.grad[i] * s, derivs.lap[i] * s)
}

/// The firm-count "cost" `½(1−η)((∇R)² K^{2η} + σ_X² ∇²R K^η)` so that
/// `‖Ψ‖² = max(0, (D − Q)/(2τ))`.
pub fn density_cost<T: Scalar>(scenario: &Scenario<T>, derivs: &LandscapeDerivatives<T>, k: T, i: usize) -> T {
    let p = &scenario.params;
    if k.is_infinite() {
        return T::infinity();
    }
    let h = k.powf(p.eta);
    let q = c::<T>(0.5) * (T::one() - p.eta) * (derivs.grad[i] * derivs.grad[i] * h * h + p.sigma_x2 * derivs.lap[i] * h);
    if q.is_nan() {
        T::infinity()
    } else {
        q
    }
}

/// Firm density for a given multiplier `D`; zero where the bracket is negative.
pub fn firm_density<T: Scalar>(scenario: &Scenario<T>, k_x: &[T], lagrange_d: T) -> Vec<T> {
    let derivs = scenario.landscape_derivatives();
    let two_tau = c::<T>(2.0) * scenario.params.tau;
    k_x.iter()
        .enumerate()
        .map(|(i, &k)| ((lagrange_d - density_cost(scenario, &derivs, k, i)) / two_tau).max(T::zero()))
        .collect()
}

/// Multiplier `D` placing exactly `N` firms, together with the deserted mask.
pub fn calibrate_lagrange<T: Scalar>(scenario: &Scenario<T>, k_x: &[T]) -> Result<(T, Vec<bool>)> {
    let derivs = scenario.landscape_derivatives();
    let q: Vec<T> = k_x
        .iter()
        .enumerate()
        .map(|(i, &k)| density_cost(scenario, &derivs, k, i))
        .collect();
    calibrate_costs(scenario, &q)
}

fn calibrate_costs<T: Scalar>(scenario: &Scenario<T>, q: &[T]) -> Result<(T, Vec<bool>)> {
    let p = &scenario.params;
    let h = scenario.grid.spacing();
    let target = p.n_firms;
    let two_tau = c::<T>(2.0) * p.tau;
    let count = |d: T| -> T { q.iter().map(|&qi| ((d - qi) / two_tau).max(T::zero())).sum::<T>() * h };
    let finite: Vec<T> = q.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::NoSolution("every sector is deserted".into()));
    }
    // certified bracket: count(lo) = 0 ≤ N ≤ count(hi), count nondecreasing
    let lo0 = finite.iter().copied().fold(T::infinity(), T::min);
    let mut lo = lo0;
    let mut hi = finite.iter().copied().fold(T::neg_infinity(), T::max) + two_tau * target / h;
    if !(count(hi) >= target) {
        return Err(Error::NoSolution("firm count cannot reach N".into()));
    }
    for _ in 0..200 {
        let mid = c::<T>(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        // exact solve once the active set is pinned down
        let n_lo = q.iter().filter(|&&v| v < lo).count();
        let n_hi = q.iter().filter(|&&v| v < hi).count();
        if n_lo == n_hi && n_lo > 0 {
            break;
        }
    }
    let active: Vec<usize> = (0..q.len()).filter(|&i| q[i] < hi).collect();
    let sum_q: T = active.iter().map(|&i| q[i]).sum();
    let d = (two_tau * target / h + sum_q) / T::usize(active.len());
    let deserted = q.iter().map(|&v| !(v < d)).collect();
    Ok((d, deserted))
}

/// `A = g²/σ_X̂² + f + ½|f| + ∇g − correction`.
pub fn attractivity<T: Scalar>(scenario: &Scenario<T>, f: T, g: T, grad_g: T, correction: T) -> T {
    let p = &scenario.params;
    let corr = if p.include_f_correction { correction } else { T::zero() };
    g * g / p.sigma_xhat2 + f + c::<T>(0.5) * f.abs() + grad_g - corr
}

/// `p = (M − A)/|f|`.
pub fn relative_attractivity<T: Scalar>(big_m: T, a: T, f: T, i: usize) -> Result<T> {
    if f.abs() < c(F_FLOOR) {
        return Err(Error::Singular { index: i, f: f.f64() });
    }
    Ok((big_m - a) / f.abs())
}

/// Damping factor `exp(−σ_X² σ_K̂² (p+½)² f'²/(96|f|³))`.
pub fn damping<T: Scalar>(scenario: &Scenario<T>, p: T, f: T, f_prime: T) -> T {
    let s = &scenario.params;
    let q = p + c(0.5);
    (-s.sigma_x2 * s.sigma_khat2 * q * q * f_prime * f_prime / (c::<T>(96.0) * f.abs().powi(3))).exp()
}

/// `Γ̂(p+½)`: damping factor times `∫₀^∞ z D_p²`.
pub fn gamma_hat<T: Scalar>(scenario: &Scenario<T>, p: T, f: T, f_prime: T) -> Result<T> {
    let (_, l1) = ln_moments(p)?;
    Ok(damping(scenario, p, f, f_prime) * l1.exp())
}

/// Log investor weight per unit `C`: `ln(damp·√(σ_K̂²/|f|)·∫D_p²)`.
fn ln_weight<T: Scalar>(scenario: &Scenario<T>, p: T, f: T, f_prime: T, ln_m0: T) -> T {
    let s = &scenario.params;
    damping(scenario, p, f, f_prime).ln() + c::<T>(0.5) * (s.sigma_khat2 / f.abs()).ln() + ln_m0
}

/// Normalization `C` such that `h Σ C·damp·√(σ_K̂²/|f|)·∫D_p² = N̂` over
/// active sectors.
pub fn normalize_c<T: Scalar>(scenario: &Scenario<T>, sol: &FieldSolution<T>) -> Result<T> {
    let lw: Vec<T> = sol
        .active()
        .map(|i| {
            let (l0, _) = ln_moments(sol.p_x[i])?;
            Ok(ln_weight(scenario, sol.p_x[i], sol.f_x[i], sol.f_prime[i], l0))
        })
        .collect::<Result<_>>()?;
    Ok(ln_norm(scenario, &lw)?.exp())
}

fn ln_norm<T: Scalar>(scenario: &Scenario<T>, lw: &[T]) -> Result<T> {
    let top = lw.iter().copied().fold(T::neg_infinity(), T::max);
    if !top.is_finite() {
        return Err(Error::NoSolution("investor normalization integral vanishes".into()));
    }
    let s: T = lw.iter().map(|&l| (l - top).exp()).sum();
    Ok(scenario.params.n_investors.ln() - scenario.grid.spacing().ln() - top - s.ln())
}

/// `∂f/∂K` with the averages held fixed.
pub fn df_dk<T: Scalar>(
    scenario: &Scenario<T>,
    derivs: &LandscapeDerivatives<T>,
    k: T,
    i: usize,
    means: &Means<T>,
) -> T {
    let p = &scenario.params;
    let r = scenario.r()[i];
    let a = p.alpha;
    let ka = k.powf(a);
    let u = ka * r / (means.k_alpha * means.r);
    let dpsi = dpsi2_dk(scenario, derivs, k, i);
    let um = u - T::one();
    (a * (a - T::one()) * r * ka / (k * k) - p.gamma * dpsi + p.b * a * u / k / (T::one() + um * um)) / p.epsilon
}

/// `∂‖Ψ‖²/∂K` at fixed multiplier.
pub fn dpsi2_dk<T: Scalar>(scenario: &Scenario<T>, derivs: &LandscapeDerivatives<T>, k: T, i: usize) -> T {
    let p = &scenario.params;
    let e = p.eta;
    let gr = derivs.grad[i];
    let dq = c::<T>(0.5)
        * (T::one() - e)
        * (c::<T>(2.0) * e * gr * gr * k.powf(c::<T>(2.0) * e - T::one()) + e * p.sigma_x2 * derivs.lap[i] * k.powf(e - T::one()));
    -dq / (c::<T>(2.0) * p.tau)
}

/// Density-weighted averages over active sectors.
fn means_of<T: Scalar>(scenario: &Scenario<T>, k: &[T], psi2: &[T], deserted: &[bool]) -> Means<T> {
    let a = scenario.params.alpha;
    let r = scenario.r();
    let mut w = T::zero();
    let mut ka = T::zero();
    let mut rr = T::zero();
    for i in 0..k.len() {
        if !deserted[i] {
            w += psi2[i];
            ka += psi2[i] * k[i].powf(a);
            rr += psi2[i] * r[i];
        }
    }
    Means { k_alpha: ka / w, r: rr / w }
}

/// Central difference along the grid, falling back to one-sided differences
/// next to deserted sectors.
fn grid_derivative<T: Scalar>(scenario: &Scenario<T>, v: &[T], deserted: &[bool]) -> Vec<T> {
    let grid = &scenario.grid;
    let h = grid.spacing();
    (0..v.len())
        .map(|i| {
            let (l, r) = grid.neighbours(i);
            match (deserted[l], deserted[r]) {
                _ if deserted[i] => T::zero(),
                (false, false) if l == r => T::zero(),
                (false, false) => (v[r] - v[l]) / (c::<T>(2.0) * h),
                (true, false) => (v[r] - v[i]) / h,
                (false, true) => (v[i] - v[l]) / h,
                (true, true) => T::zero(),
            }
        })
        .collect()
}

/// Everything derived from one capital iterate.
struct Frame<T> {
    psi2: Vec<T>,
    deserted: Vec<bool>,
    lagrange_d: T,
    means: Means<T>,
    f: Vec<T>,
    f_prime: Vec<T>,
    g: Vec<T>,
    grad_g: Vec<T>,
    a: Vec<T>,
    big_m: T,
    p: Vec<T>,
    gamma_hat: Vec<T>,
    ln_c: T,
    nhat: Vec<T>,
    target: Vec<T>,
}

fn frame<T: Scalar>(
    scenario: &Scenario<T>,
    derivs: &LandscapeDerivatives<T>,
    k: &[T],
    prev_nhat: Option<&[T]>,
    shift: Option<&Perturbation<T>>,
) -> Result<Frame<T>> {
    let n = k.len();
    let s = &scenario.params;
    let floor = c::<T>(F_FLOOR);

    let q: Vec<T> = (0..n).map(|i| density_cost(scenario, derivs, k[i], i)).collect();
    let (lagrange_d, deserted) = calibrate_costs(scenario, &q)?;
    let two_tau = c::<T>(2.0) * s.tau;
    let psi2: Vec<T> = (0..n)
        .map(|i| if deserted[i] { T::zero() } else { (lagrange_d - q[i]) / two_tau })
        .collect();
    let means = means_of(scenario, k, &psi2, &deserted);

    let f: Vec<T> = (0..n)
        .map(|i| short_term_return(scenario, k[i], i, psi2[i], &means) + shift.map_or(T::zero(), |s| s.f_shift[i]))
        .collect();
    let f_prime = grid_derivative(scenario, &f, &deserted);
    let scale = mobility_scale(scenario, &means);
    let mut g = vec![T::zero(); n];
    let mut grad_g = vec![T::zero(); n];
    let mut a = vec![T::neg_infinity(); n];
    let mut big_m = T::neg_infinity();
    for i in 0..n {
        if deserted[i] {
            continue;
        }
        let ka = k[i].powf(s.alpha) * scale;
        g[i] = derivs.grad[i] * ka;
        grad_g[i] = derivs.lap[i] * ka;
        let corr = match prev_nhat {
            Some(nh) if s.include_f_correction && nh[i] > T::zero() => {
                let x = df_dk(scenario, derivs, k[i], i, &means) * psi2[i] / nh[i];
                x * x / (c::<T>(2.0) * s.sigma_khat2)
            }
            _ => T::zero(),
        };
        a[i] = attractivity(scenario, f[i], g[i], grad_g[i], corr) + shift.map_or(T::zero(), |s| s.a_shift[i]);
        big_m = big_m.max(a[i]);
    }

    let mut p = vec![T::zero(); n];
    let mut gamma_hat = vec![T::zero(); n];
    let mut lw = Vec::with_capacity(n);
    let mut ln_g = vec![T::zero(); n];
    for i in 0..n {
        if deserted[i] {
            continue;
        }
        let fa = f[i].abs().max(floor);
        let fi = if f[i] < T::zero() { -fa } else { fa };
        p[i] = ((big_m - a[i]) / fa).max(T::zero());
        let (l0, l1) = ln_moments(p[i])?;
        let ld = damping(scenario, p[i], fi, f_prime[i]).ln();
        ln_g[i] = ld + l1;
        gamma_hat[i] = ln_g[i].exp();
        lw.push((i, ln_weight(scenario, p[i], fi, f_prime[i], l0)));
    }
    let lws: Vec<T> = lw.iter().map(|x| x.1).collect();
    let ln_c = ln_norm(scenario, &lws)?;
    let mut nhat = vec![T::zero(); n];
    for &(i, l) in &lw {
        nhat[i] = (ln_c + l).exp();
    }
    let target: Vec<T> = (0..n)
        .map(|i| {
            if deserted[i] {
                T::infinity()
            } else {
                let fa = f[i].abs().max(floor);
                (ln_c + s.sigma_khat2.ln() + ln_g[i] - psi2[i].ln() - fa.ln()).exp()
            }
        })
        .collect();
    Ok(Frame {
        psi2,
        deserted,
        lagrange_d,
        means,
        f,
        f_prime,
        g,
        grad_g,
        a,
        big_m,
        p,
        gamma_hat,
        ln_c,
        nhat,
        target,
    })
}

/// Solves the capital equation by damped fixed-point iteration.
pub fn solve_collective_state<T: Scalar>(scenario: &Scenario<T>) -> Result<FieldSolution<T>> {
    solve_with(scenario, &SolverOptions::default())
}

/// [`solve_collective_state`] with explicit options.
pub fn solve_with<T: Scalar>(scenario: &Scenario<T>, opts: &SolverOptions<T>) -> Result<FieldSolution<T>> {
    scenario.validate()?;
    let n = scenario.n();
    let derivs = scenario.landscape_derivatives();
    let mut k: Vec<T> = match &opts.seed {
        Some(s) if s.len() == n => s
            .iter()
            .map(|&v| if v > T::zero() && v.is_finite() { v } else { T::one() })
            .collect(),
        Some(s) => {
            return Err(Error::validation(
                "seed",
                format!("expected {n} values, found {}", s.len()),
            ))
        }
        None => vec![T::one(); n],
    };
    if let Some(p) = &opts.perturbation {
        if p.f_shift.len() != n || p.a_shift.len() != n {
            return Err(Error::validation("perturbation", format!("expected {n} values per shift")));
        }
    }
    let mut nhat: Option<Vec<T>> = None;
    let mut last_res = T::infinity();
    for it in 1..=opts.max_iter {
        let fr = frame(scenario, &derivs, &k, nhat.as_deref(), opts.perturbation.as_ref())?;
        let mut upd = T::zero();
        let mut res = T::zero();
        for i in 0..n {
            if fr.deserted[i] {
                k[i] = T::infinity();
                continue;
            }
            let t = fr.target[i];
            let rel = (t - k[i]).abs() / k[i];
            // NaN must not slip through `max`
            upd = if rel.is_nan() { T::infinity() } else { upd.max(rel) };
            res = res.max((k[i] - t).abs() / t);
        }
        if !fr.ln_c.is_finite() {
            upd = T::infinity();
        }
        last_res = res;
        if !upd.is_finite() {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: f64::INFINITY,
            });
        }
        if upd < opts.update_tol && res < opts.residual_tol {
            return finish(scenario, k, fr, res, it);
        }
        for i in 0..n {
            if !fr.deserted[i] {
                let ki = k[i];
                k[i] = ki + opts.damping * (fr.target[i] - ki);
                if !(k[i] > T::zero()) {
                    k[i] = fr.target[i] * c(1e-3);
                }
            }
        }
        nhat = Some(fr.nhat);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: last_res.f64(),
    })
}

fn finish<T: Scalar>(
    scenario: &Scenario<T>,
    k: Vec<T>,
    fr: Frame<T>,
    residual: T,
    iterations: usize,
) -> Result<FieldSolution<T>> {
    for i in 0..k.len() {
        if !fr.deserted[i] && fr.f[i].abs() < c(F_FLOOR) {
            return Err(Error::Singular {
                index: i,
                f: fr.f[i].f64(),
            });
        }
    }
    let _ = scenario;
    let k_x = k
        .iter()
        .zip(&fr.deserted)
        .map(|(&v, &d)| if d { T::zero() } else { v })
        .collect();
    Ok(FieldSolution {
        k_x,
        psi2: fr.psi2,
        nhat: fr.nhat,
        f_x: fr.f,
        g_x: fr.g,
        grad_g_x: fr.grad_g,
        p_x: fr.p,
        f_prime: fr.f_prime,
        attractivity: fr.a,
        gamma_hat: fr.gamma_hat,
        lagrange_d: fr.lagrange_d,
        big_m: fr.big_m,
        c_norm: fr.ln_c.exp(),
        means: fr.means,
        deserted: fr.deserted,
        residual,
        iterations,
        branch_id: 0,
    })
}

/// Multi-start solve: the uniform seed `K ≡ 1` plus every closed-form case
/// that applies, de-duplicated at relative distance `1e-4`. Branches are
/// numbered in discovery order.
pub fn solve_branches<T: Scalar>(scenario: &Scenario<T>, opts: &SolverOptions<T>) -> Result<Vec<FieldSolution<T>>> {
    let base = solve_with(scenario, &SolverOptions { seed: None, ..opts.clone() })?;
    let mut out = vec![base];
    for case in ClosedFormCase::ALL {
        let Ok(seed) = closed_form_case(scenario, &out[0], case) else {
            continue;
        };
        if seed.iter().any(|v| !(v.is_finite() && *v > T::zero())) {
            continue;
        }
        let o = SolverOptions {
            seed: Some(seed),
            ..opts.clone()
        };
        let Ok(mut sol) = solve_with(scenario, &o) else {
            continue;
        };
        let dup = out.iter().any(|b| {
            b.deserted == sol.deserted
                && b.k_x
                    .iter()
                    .zip(&sol.k_x)
                    .all(|(&x, &y)| (x - y).abs() <= c::<T>(1e-4) * x.abs().max(y.abs()))
        });
        if !dup {
            sol.branch_id = out.len();
            out.push(sol);
        }
    }
    Ok(out)
}

/// `‖Ψ̂(K̂, X_i)‖² = C·damp·D_p(√(|f|/σ_K̂²)(K̂ + shift))²`; the shift is the
/// correction `(∂f/∂K / f)(‖Ψ‖²/N̂(X))`, zero unless enabled.
pub fn investor_density<T: Scalar>(scenario: &Scenario<T>, sol: &FieldSolution<T>, k_hat: T, i: usize) -> Result<T> {
    if sol.deserted[i] {
        return Ok(T::zero());
    }
    let s = &scenario.params;
    let f = sol.f_x[i];
    let shift = if s.include_f_correction && sol.nhat[i] > T::zero() {
        let derivs = scenario.landscape_derivatives();
        df_dk(scenario, &derivs, sol.k_x[i], i, &sol.means) / f * sol.psi2[i] / sol.nhat[i]
    } else {
        T::zero()
    };
    let z = (f.abs() / s.sigma_khat2).sqrt() * (k_hat + shift);
    let d = pcf_d(sol.p_x[i], z)?;
    Ok(sol.c_norm * damping(scenario, sol.p_x[i], f, sol.f_prime[i]) * d * d)
}

/// Closed-form approximations of the capital equation in its regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedFormCase {
    /// `K ≫ 1`: `f ≈ c − d/(K^α R) − γ‖Ψ‖²/ε` with `c = bπ/(2ε)`.
    Case1,
    /// `K ⋙ 1`, `∇R ≠ 0`: the firm density is exhausted, `Q(K) ≈ D`.
    Case2Grad,
    /// `K ⋙ 1` at a maximum of `R`.
    Case2Max,
    /// `K ≪ 1`: `f ≈ B₁ K^{α−1}` with `B₁ = αR/ε`.
    Case3,
    /// Intermediate range: `f ≈ B₂ K^α`, Lambert-W solution.
    Case4,
}

impl ClosedFormCase {
    pub const ALL: [ClosedFormCase; 5] = [
        ClosedFormCase::Case1,
        ClosedFormCase::Case2Grad,
        ClosedFormCase::Case2Max,
        ClosedFormCase::Case3,
        ClosedFormCase::Case4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClosedFormCase::Case1 => "case1",
            ClosedFormCase::Case2Grad => "case2_grad",
            ClosedFormCase::Case2Max => "case2_max",
            ClosedFormCase::Case3 => "case3",
            ClosedFormCase::Case4 => "case4",
        }
    }
}

impl std::str::FromStr for ClosedFormCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ClosedFormCase::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::validation("case", format!("unknown case `{s}`")))
    }
}

/// Parameters of the intermediate-case equation `x^d e^{−a x} = c` in
/// `x = K^α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertForm<T> {
    pub d: T,
    pub a: T,
    pub c: T,
}

impl<T: Scalar> LambertForm<T> {
    pub fn residual(&self, x: T) -> T {
        ((self.d * x.ln() - self.a * x).exp() - self.c).abs() / self.c
    }
}

fn regime<T>(i: usize, condition: &str) -> Result<T> {
    Err(Error::Regime {
        index: i,
        condition: condition.into(),
    })
}

/// Coefficients of the intermediate case at sector `i`.
pub fn case4_form<T: Scalar>(scenario: &Scenario<T>, sol: &FieldSolution<T>, i: usize) -> Result<LambertForm<T>> {
    let s = &scenario.params;
    let derivs = scenario.landscape_derivatives();
    let kr = sol.means.k_alpha * sol.means.r;
    let b2 = s.b * scenario.r()[i] / (s.epsilon * kr) + s.gamma / s.epsilon;
    let b2p = s.b * derivs.grad[i] / (s.epsilon * kr);
    let lp = (sol.p_bar() + c(0.5)).ln() - T::one();
    if !(lp > T::zero()) {
        return regime(i, "ln(p̄ + ½) > 1");
    }
    if b2p == T::zero() {
        return regime(i, "∂B₂/∂X ≠ 0");
    }
    let b2a = b2.abs();
    let denom = s.sigma_x2 * s.sigma_khat2 * b2p * b2p;
    Ok(LambertForm {
        d: (T::one() + s.alpha) / (c::<T>(2.0) * s.alpha),
        a: c::<T>(24.0) * b2a.powi(3) * lp * lp / denom,
        c: c::<T>(8.0) * sol.c_norm / sol.psi2[i]
            * (c::<T>(3.0) * s.sigma_khat2 * b2a * lp / (s.sigma_x2 * b2p * b2p)).sqrt(),
    })
}

/// Closed-form capital per sector in the requested regime, evaluated with
/// the globals (`C`, `M`, `D`, `p`) of `sol`. Deserted sectors yield `0`.
pub fn closed_form_case<T: Scalar>(
    scenario: &Scenario<T>,
    sol: &FieldSolution<T>,
    case: ClosedFormCase,
) -> Result<Vec<T>> {
    let s = &scenario.params;
    let derivs = scenario.landscape_derivatives();
    let r = scenario.r();
    let mut out = vec![T::zero(); sol.n()];
    for i in sol.active() {
        let psi2 = sol.psi2[i];
        let lead = sol.c_norm * s.sigma_khat2 * sol.gamma_hat[i] / psi2;
        out[i] = match case {
            ClosedFormCase::Case1 => {
                let cc = s.b * T::FRAC_PI_2() / s.epsilon;
                let d = s.b * sol.means.k_alpha * sol.means.r / s.epsilon;
                let cg = cc - s.gamma * psi2 / s.epsilon;
                if !(cg > T::zero()) {
                    return regime(i, "c − γD > 0");
                }
                let k0 = lead / cg;
                k0 * (T::one() + d / (cg * r[i] * k0.powf(s.alpha)))
            }
            ClosedFormCase::Case2Grad => {
                let gr2 = derivs.grad[i] * derivs.grad[i];
                if gr2 == T::zero() {
                    return regime(i, "∇R ≠ 0");
                }
                let two_d = c::<T>(2.0) * sol.lagrange_d;
                (two_d / ((T::one() - s.eta) * gr2)).powf(T::one() / (c::<T>(2.0) * s.eta))
            }
            ClosedFormCase::Case2Max => {
                let lap = derivs.lap[i];
                if !(lap < T::zero()) {
                    return regime(i, "∇²R < 0");
                }
                let cc = s.b * T::FRAC_PI_2() / s.epsilon;
                (sol.c_norm * s.sigma_khat2 * sol.gamma_hat[i] / (lap.abs() * cc))
                    .powf(c::<T>(2.0) / (c::<T>(3.0) * s.alpha))
            }
            ClosedFormCase::Case3 => {
                if !(sol.f_x[i] > T::zero()) {
                    return regime(i, "f > 0");
                }
                let b1 = s.alpha * r[i] / s.epsilon;
                (lead / b1).powf(s.alpha.recip())
            }
            ClosedFormCase::Case4 => {
                let form = case4_form(scenario, sol, i)?;
                let x = crate::specfun::solve_power_exp(form.d, form.a, form.c)
                    .or_else(|_| regime(i, "(a/d)·c^{1/d} ≤ 1/e"))?;
                x.powf(s.alpha.recip())
            }
        };
    }
    Ok(out)
}

/// Quadratic expansion of `K_X` around the most attractive sector.
#[derive(Debug, Clone)]
pub struct PeakExpansion<T> {
    pub peak: usize,
    /// Stability denominator at the peak.
    pub denominator: T,
    pub predicted: Vec<T>,
    pub actual: Vec<T>,
}

/// Expands the capital equation to second order in `X − X_M` at fixed
/// globals and fixed `K = K_M`: `D·ΔK/K_M = −∂_X φ·ΔX − ½∂²_X φ·ΔX²` with
/// `φ = ln(‖Ψ‖²|f|/damp) − b·p` and `b = 2 − ln 2 − γ₀`, the slope of `ln Γ̂`
/// at `p = 0`. Derivatives are taken on the three nodes around the peak, so
/// the grid offset of the continuum maximum enters through `∂_X p`.
pub fn expansion_at_peak<T: Scalar>(scenario: &Scenario<T>, sol: &FieldSolution<T>) -> Result<PeakExpansion<T>> {
    let m = sol.peak();
    let grid = &scenario.grid;
    let derivs = scenario.landscape_derivatives();
    let (l, r) = grid.neighbours(m);
    let h = grid.spacing();
    let km = sol.k_x[m];
    let s = &scenario.params;
    let phi = |j: usize| -> T {
        let q = density_cost(scenario, &derivs, km, j);
        let psi2 = ((sol.lagrange_d - q) / (c::<T>(2.0) * s.tau)).max(c(1e-300));
        let f = short_term_return(scenario, km, j, psi2, &sol.means);
        let (g, gg) = mobility(scenario, &derivs, km, j, &sol.means);
        let p = (sol.big_m - attractivity(scenario, f, g, gg, T::zero())) / f.abs();
        psi2.ln() + f.abs().ln() - damping(scenario, p, f, sol.f_prime[j]).ln() - c::<T>(PEAK_SLOPE) * p
    };
    let (phi_l, phi_m, phi_r) = (phi(l), phi(m), phi(r));
    let (slope, curv) = if l == r {
        (T::zero(), c::<T>(2.0) * (phi_r - phi_m) / (h * h))
    } else {
        ((phi_r - phi_l) / (c::<T>(2.0) * h), (phi_l + phi_r - c::<T>(2.0) * phi_m) / (h * h))
    };
    let denominator = crate::stability::local_denominator(scenario, sol, m)?;
    let x_m = grid.node(m);
    let len = grid.volume();
    let predicted = (0..sol.n())
        .map(|i| {
            let mut dx = grid.node(i) - x_m;
            if grid.boundary == crate::scenario::Boundary::Periodic {
                if dx > len * c(0.5) {
                    dx -= len;
                } else if dx < -len * c(0.5) {
                    dx += len;
                }
            }
            -km * (slope * dx + c::<T>(0.5) * curv * dx * dx) / denominator
        })
        .collect();
    let actual = sol.k_x.iter().map(|&k| k - km).collect();
    Ok(PeakExpansion {
        peak: m,
        denominator,
        predicted,
        actual,
    })
}
