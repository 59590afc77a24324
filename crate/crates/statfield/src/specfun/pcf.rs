//! Parabolic cylinder function `D_p(z)` (Whittaker's form) and the half-line
//! moments `∫₀^∞ D_p²` and `∫₀^∞ z D_p²`.
//!
//! `D_p` is evaluated by
//! * the Hermite recurrence for non-negative integer orders,
//! * the Kummer-series representation for `|z| ≤ 2.5`,
//! * the large-`z` asymptotic series when it reaches machine precision,
//! * otherwise the Laplace-type integral `∫ t^{-p-1} e^{-zt-t²/2} dt`
//!   (negative orders) followed by upward recurrence.

use super::gamma::{digamma, ln_gamma_signed, recip_gamma, sin_pi};
use super::quad::integrate;
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

/// Distance to a non-positive Γ argument below which the closed-form moments
/// are considered singular.
pub const POLE_DISTANCE: f64 = 1e-6;

const SERIES_RADIUS: f64 = 2.5;
const MAX_HERMITE: f64 = 400.0;

/// Half-line moments of `D_p²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcfMoment<T> {
    pub p: T,
    /// `∫₀^∞ D_p(z)² dz`
    pub zeroth: T,
    /// `∫₀^∞ z D_p(z)² dz`
    pub first: T,
}

fn work_tol<T: Scalar>() -> T {
    (c::<T>(64.0) * T::epsilon()).max(c(1e-15))
}

fn nonneg_integer<T: Scalar>(p: T) -> Option<usize> {
    (p >= T::zero() && p == p.round() && p <= c(MAX_HERMITE)).then(|| p.to_usize().unwrap_or(0))
}

/// True when the closed-form moment expressions hit a Γ pole at `p`, i.e.
/// `p` lies within [`POLE_DISTANCE`] of an integer `≥ -1`.
pub fn near_pole<T: Scalar>(p: T) -> bool {
    let n = p.round();
    n >= -T::one() && (p - n).abs() <= c(POLE_DISTANCE)
}

fn hermite_d<T: Scalar>(n: usize, z: T) -> T {
    let d0 = (-z * z * c(0.25)).exp();
    if n == 0 {
        return d0;
    }
    let (mut prev, mut cur) = (d0, z * d0);
    for k in 1..n {
        let next = z * cur - T::usize(k) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Confluent hypergeometric `M(a, b, x)` by direct summation. Returns the sum
/// and the largest term magnitude.
fn kummer<T: Scalar>(a: T, b: T, x: T) -> (T, T) {
    let mut term = T::one();
    let mut sum = T::one();
    let mut big = T::one();
    for k in 0..500 {
        let kk = T::usize(k);
        term = term * (a + kk) / (b + kk) * x / (kk + T::one());
        sum += term;
        big = big.max(term.abs());
        if term.abs() <= T::epsilon() * sum.abs() * c(0.01) && kk > a.abs() {
            break;
        }
        if term == T::zero() {
            break;
        }
    }
    (sum, big)
}

fn series<T: Scalar>(p: T, z: T) -> Result<T> {
    let half = c::<T>(0.5);
    let x = z * z * half;
    let (m1, big1) = kummer(-p * half, half, x);
    let (m2, big2) = kummer((T::one() - p) * half, c(1.5), x);
    let r1 = recip_gamma((T::one() - p) * half);
    let r2 = recip_gamma(-p * half);
    let s2 = T::SQRT_2() * z;
    let pref = c::<T>(2.0).powf(p * half) * T::PI().sqrt() * (-x * half).exp();
    let val = pref * (m1 * r1 - s2 * m2 * r2);
    let err = pref * T::epsilon() * c(8.0) * (big1 * r1.abs() + (s2 * big2 * r2).abs());
    if err > c::<T>(1e3) * work_tol::<T>() * val.abs() && err > T::min_positive_value() {
        return Err(Error::Convergence {
            function: "pcf_d",
            error: (err / val.abs()).f64(),
        });
    }
    Ok(val)
}

fn asymptotic<T: Scalar>(p: T, z: T) -> Option<T> {
    let z2 = z * z;
    let mut term = T::one();
    let mut sum = T::one();
    let two = c::<T>(2.0);
    for k in 0..200 {
        let kk = T::usize(k);
        let next = -term * (p - two * kk) * (p - two * kk - T::one()) / (two * (kk + T::one()) * z2);
        if next.abs() > term.abs() && k > 0 {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() <= T::epsilon() * sum.abs() * c(0.5) {
            return Some(z.powf(p) * (-z2 * c(0.25)).exp() * sum);
        }
    }
    None
}

/// `D_ν(z)` for `ν < 0` via `e^{-z²/4}/Γ(-ν) ∫₀^∞ t^{-ν-1} e^{-zt-t²/2} dt`.
fn integral_negative<T: Scalar>(nu: T, z: T) -> Result<T> {
    let half = c::<T>(0.5);
    let tol = work_tol::<T>();
    let q = -nu;
    let a = q - T::one();
    let peak = half * (-z + (z * z + c::<T>(4.0) * a.max(T::zero())).sqrt());
    let t_max = peak.max(T::zero()) + c(13.0);
    let pref = (-z * z * c(0.25)).exp();
    if q < T::one() {
        // subtract the endpoint singularity: ∫₀¹ t^{q-1}(e^g − 1) + 1/q + ∫₁^∞ t^{q-1}e^g
        let g = |t: T| -z * t - half * t * t;
        let head = integrate(
            |t: T| if t == T::zero() { T::zero() } else { t.powf(q - T::one()) * g(t).exp_m1() },
            T::zero(),
            T::one(),
            T::min_positive_value(),
            tol,
        )?;
        let tail = integrate(
            |t: T| t.powf(q - T::one()) * g(t).exp(),
            T::one(),
            t_max.max(c(2.0)),
            T::min_positive_value(),
            tol,
        )?;
        Ok(pref * recip_gamma(q) * (head.value + tail.value + q.recip()))
    } else {
        // scale by the integrand's maximum to keep it O(1)
        let tp = peak.max(c(1e-300));
        let ln_peak = if a > T::zero() {
            a * tp.ln() - z * tp - half * tp * tp
        } else {
            T::zero()
        };
        let r = integrate(
            |t: T| {
                if t == T::zero() {
                    return if a == T::zero() { (-ln_peak).exp() } else { T::zero() };
                }
                (a * t.ln() - z * t - half * t * t - ln_peak).exp()
            },
            T::zero(),
            t_max,
            T::min_positive_value(),
            tol,
        )?;
        let (lg, sg) = ln_gamma_signed(q)?;
        Ok(sg * (ln_peak - lg - z * z * c(0.25)).exp() * r.value)
    }
}

fn integral<T: Scalar>(p: T, z: T) -> Result<T> {
    if p < T::zero() {
        return integral_negative(p, z);
    }
    let n = p.floor() + T::one();
    let nu0 = p - n;
    let mut prev = integral_negative(nu0 - T::one(), z)?;
    let mut cur = integral_negative(nu0, z)?;
    let mut nu = nu0;
    while nu < p - c(0.5) {
        let next = z * cur - nu * prev;
        prev = cur;
        cur = next;
        nu += T::one();
    }
    Ok(cur)
}

/// Parabolic cylinder function `D_p(z)`.
pub fn pcf_d<T: Scalar>(p: T, z: T) -> Result<T> {
    if !p.is_finite() || !z.is_finite() {
        return Err(Error::Domain {
            function: "pcf_d",
            at: p.f64(),
            expected: "finite order and argument",
        });
    }
    if let Some(n) = nonneg_integer(p) {
        return Ok(hermite_d(n, z));
    }
    if z.abs() <= c(SERIES_RADIUS) {
        return match series(p, z) {
            Err(_) if z >= T::zero() => integral(p, z),
            r => r,
        };
    }
    if z < T::zero() {
        return if p < T::zero() { integral_negative(p, z) } else { series(p, z) };
    }
    if let Some(v) = asymptotic(p, z) {
        return Ok(v);
    }
    integral(p, z)
}

fn pole_error<T: Scalar>(p: T) -> Error {
    Error::Pole {
        function: "pcf_moments",
        at: p.f64(),
    }
}

/// Signed log-magnitude accumulator.
fn log_sum<T: Scalar>(terms: &[(T, T)]) -> Option<T> {
    let top = terms.iter().map(|t| t.1).fold(T::neg_infinity(), T::max);
    let s: T = terms.iter().map(|&(sg, lm)| sg * (lm - top).exp()).sum();
    (s > T::zero()).then(|| top + s.ln())
}

/// Closed-form `(ln m0, ln m1)`; caller guarantees `!near_pole(p)`.
fn ln_closed<T: Scalar>(p: T) -> Result<(T, T)> {
    let one = T::one();
    let half = c::<T>(0.5);
    let ln2 = T::LN_2();
    let lead = half * T::PI().ln() - c::<T>(1.5) * ln2;
    let ln_m0 = if p > -one {
        // reflected: Γ(p+1)·(2 − sin(πp)·[ψ((1+p)/2) − ψ(1+p/2)]/π)
        let dpsi = digamma((one + p) * half)? - digamma(one + p * half)?;
        let bracket = c::<T>(2.0) - sin_pi(p) * dpsi / T::PI();
        let (lg, _) = ln_gamma_signed(p + one)?;
        lead + lg + bracket.ln()
    } else {
        let dpsi = digamma((one - p) * half)? - digamma(-p * half)?;
        let (lg, _) = ln_gamma_signed(-p)?;
        lead + dpsi.ln() - lg
    };
    let lg = |x: T| -> Result<(T, T)> {
        let (l, s) = ln_gamma_signed(x)?;
        Ok((l, s))
    };
    let (la, sa) = lg(-(p + one) * half)?;
    let (lb, sb) = lg((one - p) * half)?;
    let (lc, sc) = lg(-p * half)?;
    let (ld, sd) = lg((c::<T>(2.0) - p) * half)?;
    let (l1, s1) = lg(-p - one)?;
    let (l2, s2) = lg(-p)?;
    let (l3, s3) = lg(one - p)?;
    let den1 = (p + c(2.0)) * ln2 + l1 + l2;
    let sden1 = s1 * s2;
    let den2 = (p + one) * ln2 + l2 + l3;
    let sden2 = s2 * s3;
    let mut terms = vec![
        (sa * sb * sden1, la + lb - den1),
        (-sden1, c::<T>(2.0) * lc - den1),
    ];
    if p != T::zero() {
        let sp = p.signum();
        let lp = p.abs().ln();
        terms.push((sp * sc * sd * sden2, lp + lc + ld - den2));
        terms.push((-sp * sden2, lp + c::<T>(2.0) * lb - den2));
    }
    let ln_m1 = log_sum(&terms).ok_or_else(|| Error::Convergence {
        function: "pcf_moments",
        error: f64::INFINITY,
    })?;
    Ok((ln_m0, ln_m1))
}

/// Closed-form moments. Fails with [`Error::Pole`] within [`POLE_DISTANCE`]
/// of an integer order `≥ -1`.
pub fn pcf_moments<T: Scalar>(p: T) -> Result<PcfMoment<T>> {
    if !p.is_finite() {
        return Err(pole_error(p));
    }
    if near_pole(p) {
        return Err(pole_error(p));
    }
    let (l0, l1) = ln_closed(p)?;
    Ok(PcfMoment {
        p,
        zeroth: l0.exp(),
        first: l1.exp(),
    })
}

fn quad_upper<T: Scalar>(p: T) -> T {
    c::<T>(2.0) * (p.max(T::zero()) + T::one()).sqrt() + c(12.0)
}

/// Moments by adaptive quadrature of `D_p²` and `z D_p²` on `[0, L]`, with
/// `L` far beyond the turning point `2√p`.
pub fn pcf_moments_quadrature<T: Scalar>(p: T) -> Result<PcfMoment<T>> {
    let upper = quad_upper(p);
    let tol = work_tol::<T>() * c(10.0);
    let mut failure = None;
    let mut d2 = |z: T| match pcf_d(p, z) {
        Ok(v) => v * v,
        Err(e) => {
            failure.get_or_insert(e);
            T::zero()
        }
    };
    let zeroth = integrate(&mut d2, T::zero(), upper, T::min_positive_value(), tol)?.value;
    let first = integrate(|z: T| z * d2(z), T::zero(), upper, T::min_positive_value(), tol)?.value;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(PcfMoment { p, zeroth, first })
}

/// Beyond this order the gamma ratios of the first moment lose all
/// precision and the large-order form takes over.
const LARGE_ORDER: f64 = 1e4;

/// Large-`p` moments: `m0 = Γ(p+1)√(π/2)·(1 − sin(πp)·[ψ((1+p)/2) − ψ(1+p/2)]/(2π))`
/// and `m1/m0 = (4√p/π)·e^{1/(8p)}`, the mean of `|z|` over the arcsine law
/// of an oscillator of order `p` (relative error below `2e-5`).
fn ln_large_order<T: Scalar>(p: T) -> (T, T) {
    let half = c::<T>(0.5);
    let one = T::one();
    let lg = ln_gamma_signed(p + one).map(|x| x.0).unwrap_or_else(|_| (p + half) * p.ln() - p);
    let dpsi = match (digamma((one + p) * half), digamma(one + p * half)) {
        (Ok(a), Ok(b)) => a - b,
        _ => -p.recip(),
    };
    let ln_m0 = lg + half * (T::FRAC_PI_2()).ln() + (one - sin_pi(p) * dpsi / (c::<T>(2.0) * T::PI())).ln();
    let ln_m1 = ln_m0 + (c::<T>(4.0) * p.sqrt() / T::PI()).ln() + (c::<T>(8.0) * p).recip();
    (ln_m0, ln_m1)
}

/// Log-moments `(ln m0, ln m1)` under the pole policy: closed form away from
/// poles; exact values at `p = 0`; quadrature near poles of moderate order;
/// four-point interpolation of the closed form near poles of large order.
pub fn ln_moments<T: Scalar>(p: T) -> Result<(T, T)> {
    if !p.is_finite() {
        return Err(pole_error(p));
    }
    if p > c(LARGE_ORDER) {
        return Ok(ln_large_order(p));
    }
    if !near_pole(p) {
        return ln_closed(p);
    }
    if p == T::zero() {
        return Ok((c::<T>(0.5) * (T::PI() * c(0.5)).ln(), T::zero()));
    }
    if p <= c(30.0) {
        let m = pcf_moments_quadrature(p)?;
        return Ok((m.zeroth.ln(), m.first.ln()));
    }
    let h = c::<T>(1e-4);
    let n = p.round();
    let d = p - n;
    let pts = [-c::<T>(2.0) * h, -h, h, c::<T>(2.0) * h];
    let mut vals = [(T::zero(), T::zero()); 4];
    for (v, &o) in vals.iter_mut().zip(pts.iter()) {
        *v = ln_closed(n + o)?;
    }
    // Lagrange weights at offset d
    let mut out = (T::zero(), T::zero());
    for i in 0..4 {
        let mut w = T::one();
        for j in 0..4 {
            if i != j {
                w *= (d - pts[j]) / (pts[i] - pts[j]);
            }
        }
        out.0 += w * vals[i].0;
        out.1 += w * vals[i].1;
    }
    Ok(out)
}

/// Moments under the pole policy of [`ln_moments`].
pub fn pcf_moments_checked<T: Scalar>(p: T) -> Result<PcfMoment<T>> {
    let (l0, l1) = ln_moments(p)?;
    Ok(PcfMoment {
        p,
        zeroth: l0.exp(),
        first: l1.exp(),
    })
}
