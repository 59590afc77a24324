//! Special functions: Gamma, digamma, Lambert W, the parabolic cylinder
//! function `D_p` with its half-line moments, and a solver for
//! `x^d e^{-a x} = c`.
//!
//! All functions are pure and thread-safe.

mod gamma;
mod lambert;
mod pcf;
pub mod quad;

pub use gamma::{digamma, gamma, ln_gamma_signed, recip_gamma, sin_pi};
pub use lambert::{lambert_w, solve_power_exp, Branch};
pub use pcf::{
    ln_moments, near_pole, pcf_d, pcf_moments, pcf_moments_checked, pcf_moments_quadrature, PcfMoment,
    POLE_DISTANCE,
};
