//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

#[derive(Clone, Copy)]
struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
    roundoff: T,
}

fn kronrod<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Segment<T> {
    let half = c::<T>(0.5);
    let centre = half * (a + b);
    let hl = half * (b - a);
    let fc = f(centre);
    let mut resg = fc * c(WG[3]);
    let mut resk = fc * c(WGK[7]);
    let mut resabs = resk.abs();
    let mut fv = [T::zero(); 14];
    for j in 0..7 {
        let dx = hl * c(XGK[j]);
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        resk += c::<T>(WGK[j]) * (f1 + f2);
        resabs += c::<T>(WGK[j]) * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += c::<T>(WG[j / 2]) * (f1 + f2);
        }
    }
    let mean = resk * half;
    let mut resasc = c::<T>(WGK[7]) * (fc - mean).abs();
    for j in 0..7 {
        resasc += c::<T>(WGK[j]) * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    let value = resk * hl;
    let resasc = resasc * hl.abs();
    let resabs = resabs * hl.abs();
    let mut error = ((resk - resg) * hl).abs();
    if resasc != T::zero() && error != T::zero() {
        let r = (c::<T>(200.0) * error / resasc).powf(c(1.5));
        error = resasc * r.min(T::one());
    }
    let roundoff = c::<T>(50.0) * T::epsilon() * resabs;
    if roundoff > error {
        error = roundoff;
    }
    Segment {
        a,
        b,
        value,
        error,
        roundoff,
    }
}

/// Integrates `f` over `[a, b]` until the error estimate is below
/// `max(abs_tol, rel_tol |I|)`.
pub fn integrate<T, F>(mut f: F, a: T, b: T, abs_tol: T, rel_tol: T) -> Result<Quadrature<T>>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    const MAX_SEGMENTS: usize = 2000;
    if a == b {
        return Ok(Quadrature {
            value: T::zero(),
            error: T::zero(),
            intervals: 0,
        });
    }
    let mut segs = vec![kronrod(&mut f, a, b)];
    loop {
        let total: T = segs.iter().map(|s| s.value).sum();
        let err: T = segs.iter().map(|s| s.error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Convergence {
                function: "integrate",
                error: f64::INFINITY,
            });
        }
        let tol = abs_tol.max(rel_tol * total.abs());
        // once the estimate is dominated by rounding, bisection cannot help
        let noise: T = segs.iter().map(|s| s.roundoff).sum();
        if err <= tol || err <= c::<T>(2.0) * noise {
            return Ok(Quadrature {
                value: total,
                error: err,
                intervals: segs.len(),
            });
        }
        if segs.len() >= MAX_SEGMENTS {
            return Err(Error::Convergence {
                function: "integrate",
                error: err.f64(),
            });
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, be), (i, s)| {
                if s.error > be {
                    (i, s.error)
                } else {
                    (bi, be)
                }
            });
        let s = segs.swap_remove(worst);
        let mid = c::<T>(0.5) * (s.a + s.b);
        if mid <= s.a.min(s.b) || mid >= s.a.max(s.b) {
            // interval exhausted at machine resolution
            return Ok(Quadrature {
                value: total,
                error: err,
                intervals: segs.len() + 1,
            });
        }
        segs.push(kronrod(&mut f, s.a, mid));
        segs.push(kronrod(&mut f, mid, s.b));
    }
}
