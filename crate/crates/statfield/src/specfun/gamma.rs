use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn is_nonpositive_integer<T: Scalar>(x: T) -> bool {
    x <= T::zero() && x == x.round()
}

/// `sin(pi x)`, exact at integers and accurate near them.
pub fn sin_pi<T: Scalar>(x: T) -> T {
    let two = c::<T>(2.0);
    let mut r = x - two * (x / two).round();
    // r in [-1, 1]; fold onto [-1/2, 1/2] using sin(pi (1 - r)) = sin(pi r)
    let half = c::<T>(0.5);
    if r > half {
        r = T::one() - r;
    } else if r < -half {
        r = -T::one() - r;
    }
    (T::PI() * r).sin()
}

fn cos_pi<T: Scalar>(x: T) -> T {
    sin_pi(x + c(0.5))
}

// Lanczos sum and shifted argument for x >= 1/2.
fn lanczos<T: Scalar>(x: T) -> (T, T, T) {
    let xm = x - T::one();
    let mut a = c::<T>(LANCZOS[0]);
    for (i, &ci) in LANCZOS.iter().enumerate().skip(1) {
        a += c::<T>(ci) / (xm + T::usize(i));
    }
    let t = xm + c::<T>(LANCZOS_G + 0.5);
    (xm, t, a)
}

/// Gamma function.
pub fn gamma<T: Scalar>(x: T) -> Result<T> {
    if x.is_nan() {
        return Ok(x);
    }
    if is_nonpositive_integer(x) {
        return Err(Error::Pole {
            function: "gamma",
            at: x.f64(),
        });
    }
    if x < c(0.5) {
        let s = sin_pi(x);
        return Ok(T::PI() / (s * gamma(T::one() - x)?));
    }
    if x > c(171.7) {
        return Ok(T::infinity());
    }
    let (xm, t, a) = lanczos(x);
    let half = c::<T>(0.5);
    // split the power to delay overflow for large arguments
    let tp = t.powf((xm + half) * half);
    Ok(T::TAU().sqrt() * tp * (-t).exp() * tp * a)
}

/// `(ln|Gamma(x)|, sign Gamma(x))`.
pub fn ln_gamma_signed<T: Scalar>(x: T) -> Result<(T, T)> {
    if is_nonpositive_integer(x) {
        return Err(Error::Pole {
            function: "ln_gamma",
            at: x.f64(),
        });
    }
    if x < c(0.5) {
        let s = sin_pi(x);
        let (lg, _) = ln_gamma_signed(T::one() - x)?;
        return Ok((T::PI().ln() - s.abs().ln() - lg, s.signum()));
    }
    let (xm, t, a) = lanczos(x);
    let lg = c::<T>(0.5) * T::TAU().ln() + (xm + c(0.5)) * t.ln() - t + a.ln();
    Ok((lg, T::one()))
}

/// `1/Gamma(x)`, entire: zero at the non-positive integers.
pub fn recip_gamma<T: Scalar>(x: T) -> T {
    if is_nonpositive_integer(x) {
        return T::zero();
    }
    if x < c(0.5) {
        // 1/Gamma(x) = sin(pi x) Gamma(1 - x) / pi
        return match gamma(T::one() - x) {
            Ok(g) => sin_pi(x) * g / T::PI(),
            Err(_) => T::zero(),
        };
    }
    match gamma(x) {
        Ok(g) => T::one() / g,
        Err(_) => T::zero(),
    }
}

/// Digamma function `Psi(x) = Gamma'(x)/Gamma(x)`.
pub fn digamma<T: Scalar>(x: T) -> Result<T> {
    if is_nonpositive_integer(x) {
        return Err(Error::Pole {
            function: "digamma",
            at: x.f64(),
        });
    }
    if x < T::zero() {
        // reflection: Psi(x) = Psi(1 - x) - pi cot(pi x)
        let cot = cos_pi(x) / sin_pi(x);
        return Ok(digamma(T::one() - x)? - T::PI() * cot);
    }
    let mut x = x;
    let mut acc = T::zero();
    let ten = c::<T>(10.0);
    while x < ten {
        acc -= T::one() / x;
        x += T::one();
    }
    let inv2 = T::one() / (x * x);
    // Bernoulli tail, Horner in 1/x^2
    let coeffs = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
    ];
    let mut tail = T::zero();
    for &ck in coeffs.iter().rev() {
        tail = (tail + c::<T>(ck)) * inv2;
    }
    Ok(acc + x.ln() - c::<T>(0.5) / x - tail)
}
