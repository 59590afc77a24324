use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

/// Real branch of the Lambert W function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Principal branch `W_0`, defined on `[-1/e, inf)`, values `>= -1`.
    Principal,
    /// Lower branch `W_{-1}`, defined on `[-1/e, 0)`, values `<= -1`.
    Lower,
}

impl Branch {
    /// Branch from its conventional index (0 or -1).
    pub fn from_index(k: i32) -> Option<Self> {
        match k {
            0 => Some(Branch::Principal),
            -1 => Some(Branch::Lower),
            _ => None,
        }
    }
}

/// Lambert W: the `w` on the requested branch with `w e^w = x`.
pub fn lambert_w<T: Scalar>(branch: Branch, x: T) -> Result<T> {
    let e = T::E();
    let branch_pt = -T::one() / e;
    let slack = c::<T>(4.0) * T::epsilon();
    if x.is_nan() || x < branch_pt - slack {
        return Err(Error::Domain {
            function: "lambert_w",
            at: x.f64(),
            expected: "x >= -1/e",
        });
    }
    if branch == Branch::Lower && x >= T::zero() {
        return Err(Error::Domain {
            function: "lambert_w",
            at: x.f64(),
            expected: "-1/e <= x < 0 on the lower branch",
        });
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x.is_infinite() {
        return Ok(x);
    }
    let q = (c::<T>(2.0) * (e * x + T::one())).max(T::zero());
    if q == T::zero() {
        return Ok(-T::one());
    }
    let pbr = q.sqrt();
    let sign = match branch {
        Branch::Principal => T::one(),
        Branch::Lower => -T::one(),
    };

    let mut w = if pbr < c(0.5) {
        // expansion about the branch point in p = sqrt(2(ex + 1))
        let p = sign * pbr;
        let p2 = p * p;
        -T::one() + p - p2 / c(3.0) + c::<T>(11.0 / 72.0) * p2 * p
            - c::<T>(43.0 / 540.0) * p2 * p2
            + c::<T>(769.0 / 17280.0) * p2 * p2 * p
    } else {
        match branch {
            Branch::Principal => {
                if x < c(3.0) {
                    // rational start accurate to a few percent on [-0.3, 3]
                    let lp = (T::one() + x).ln();
                    lp * (T::one() - lp / (c::<T>(2.0) + lp))
                } else {
                    let l1 = x.ln();
                    let l2 = l1.ln();
                    l1 - l2 + l2 / l1
                }
            }
            Branch::Lower => {
                let l1 = (-x).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    };

    // Halley iteration
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + T::one();
        if wp1 == T::zero() {
            break;
        }
        let denom = ew * wp1 - (w + c(2.0)) * f / (c::<T>(2.0) * wp1);
        if denom == T::zero() || !denom.is_finite() {
            break;
        }
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= c::<T>(4.0) * T::epsilon() * (T::one() + w.abs()) {
            break;
        }
    }
    // keep the iterate on the requested side of the branch point
    match branch {
        Branch::Principal if w < -T::one() => w = -T::one(),
        Branch::Lower if w > -T::one() => w = -T::one(),
        _ => {}
    }
    Ok(w)
}

/// Solves `x^d e^{-a x} = c` for the smaller positive root (through `W_0`).
///
/// `x = c^{1/d} exp(-W_0(-(a/d) c^{1/d}))`.
pub fn solve_power_exp<T: Scalar>(d: T, a: T, target: T) -> Result<T> {
    if !(d > T::zero()) {
        return Err(Error::Domain {
            function: "solve_power_exp",
            at: d.f64(),
            expected: "d > 0",
        });
    }
    if !(target > T::zero()) {
        return Err(Error::Domain {
            function: "solve_power_exp",
            at: target.f64(),
            expected: "c > 0",
        });
    }
    if !(a >= T::zero()) {
        return Err(Error::Domain {
            function: "solve_power_exp",
            at: a.f64(),
            expected: "a >= 0",
        });
    }
    let root = target.powf(T::one() / d);
    let arg = -(a / d) * root;
    let w = lambert_w(Branch::Principal, arg).map_err(|_| Error::Domain {
        function: "solve_power_exp",
        at: arg.f64(),
        expected: "(a/d) c^(1/d) <= 1/e",
    })?;
    let mut x = root * (-w).exp();
    // Newton polish on d ln x - a x = ln c, staying left of the maximum at d/a
    let lnc = target.ln();
    for _ in 0..3 {
        let g = d * x.ln() - a * x - lnc;
        let gp = d / x - a;
        if gp.abs() <= c::<T>(1e-6) * d / x {
            break;
        }
        let next = x - g / gp;
        if !(next > T::zero()) || (a > T::zero() && next > d / a) {
            break;
        }
        x = next;
    }
    Ok(x)
}
