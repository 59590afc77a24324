#![allow(dead_code)]

use statfield::scenario::{Analytic, Boundary, SectorGrid, StructuralParams};
use statfield::Scenario;

pub fn flat(n: usize) -> Scenario {
    Scenario::flat(n, 1.0, StructuralParams::default())
}

pub fn cosine(n: usize, amplitude: f64) -> Scenario {
    let grid = SectorGrid::new(n, 0.0, 1.0, Boundary::Periodic);
    Scenario::analytic(grid, Analytic::Cosine { base: 1.0, amplitude, cycles: 1.0 }, StructuralParams::default())
}

pub fn bump(n: usize, height: f64, width: f64) -> Scenario {
    let grid = SectorGrid::new(n, 0.0, 1.0, Boundary::Periodic);
    Scenario::analytic(
        grid,
        Analytic::GaussianBump { center: 0.5, height, width, base: 1.0 },
        StructuralParams::default(),
    )
}

pub fn ramp(n: usize) -> Scenario {
    let grid = SectorGrid::new(n, 0.0, 1.0, Boundary::Reflecting);
    Scenario::analytic(
        grid,
        Analytic::PiecewiseLinear { knots_x: vec![0.0, 1.0], knots_r: vec![0.5, 1.5] },
        StructuralParams::default(),
    )
}

/// Two return peaks strong enough to empty the sectors between them.
pub fn twin_peaks() -> Scenario {
    let grid = SectorGrid::new(32, 0.0, 1.0, Boundary::Periodic);
    Scenario::analytic(grid, Analytic::Cosine { base: 2.0, amplitude: 0.5, cycles: 2.0 }, StructuralParams::default())
}

/// The converging scenario set shared by the invariant tests.
pub fn test_set() -> Vec<(&'static str, Scenario)> {
    vec![
        ("flat", flat(16)),
        ("cosine", cosine(32, 0.3)),
        ("bump", bump(32, 1.0, 0.15)),
        ("dip", bump(48, -0.5, 0.15)),
        ("ramp", ramp(24)),
        ("twin_peaks", twin_peaks()),
    ]
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
