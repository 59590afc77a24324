//! Model input: sector grid, return landscape, structural and expectation
//! parameters, plus the text format they are read from.
//!
//! ```text
//! # comment
//! [grid]
//! n_sectors = 64
//! x_min = 0
//! x_max = 1
//! boundary = periodic          # or reflecting
//!
//! [params]
//! alpha = 0.5
//! ...
//!
//! [expectations]
//! a0 = 1
//! ...
//!
//! [landscape]
//! r_values = 1, 1, 1, ...      # and/or an analytic descriptor:
//! analytic = gaussian-bump     # center, height, width, base
//! ```
//!
//! `analytic = cosine` takes `base`, `amplitude`, `cycles`;
//! `analytic = piecewise-linear` takes `knots_x` and `knots_r` arrays.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Periodic,
    Reflecting,
}

impl Boundary {
    fn name(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::Reflecting => "reflecting",
        }
    }
}

/// Uniform 1-D grid; node `i` sits at `x_min + i·spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorGrid<T> {
    pub n_sectors: usize,
    pub x_min: T,
    pub x_max: T,
    pub boundary: Boundary,
}

impl<T: Scalar> SectorGrid<T> {
    pub fn new(n_sectors: usize, x_min: T, x_max: T, boundary: Boundary) -> Self {
        Self {
            n_sectors,
            x_min,
            x_max,
            boundary,
        }
    }

    pub fn spacing(&self) -> T {
        (self.x_max - self.x_min) / T::usize(self.n_sectors)
    }

    /// Grid volume `n·h`.
    pub fn volume(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn node(&self, i: usize) -> T {
        self.x_min + T::usize(i) * self.spacing()
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n_sectors).map(|i| self.node(i)).collect()
    }

    /// Index of the node whose cell contains `x` (after boundary folding).
    pub fn cell_of(&self, x: T) -> usize {
        let u = ((self.fold(x) - self.x_min) / self.spacing() + c(0.5)).floor();
        let n = self.n_sectors;
        match self.boundary {
            Boundary::Periodic => u.to_usize().unwrap_or(0) % n,
            Boundary::Reflecting => u.to_usize().unwrap_or(0).min(n - 1),
        }
    }

    /// Maps a position back into `[x_min, x_max)` by wrapping or mirroring.
    pub fn fold(&self, x: T) -> T {
        let len = self.volume();
        match self.boundary {
            Boundary::Periodic => {
                let mut y = (x - self.x_min) % len;
                if y < T::zero() {
                    y += len;
                }
                if y >= len {
                    y = T::zero();
                }
                self.x_min + y
            }
            Boundary::Reflecting => {
                let period = len + len;
                let mut y = (x - self.x_min) % period;
                if y < T::zero() {
                    y += period;
                }
                if y > len {
                    y = period - y;
                }
                self.x_min + y.min(len)
            }
        }
    }

    /// Neighbour indices `(i-1, i+1)` under the boundary rule.
    pub fn neighbours(&self, i: usize) -> (usize, usize) {
        let n = self.n_sectors;
        match self.boundary {
            Boundary::Periodic => ((i + n - 1) % n, (i + 1) % n),
            Boundary::Reflecting => {
                let l = if i == 0 { 1 } else { i - 1 };
                let r = if i + 1 == n { n - 2 } else { i + 1 };
                (l, r)
            }
        }
    }

    /// Central first and second differences of nodal values.
    pub fn differentiate(&self, v: &[T]) -> (Vec<T>, Vec<T>) {
        let h = self.spacing();
        let two = c::<T>(2.0);
        (0..self.n_sectors)
            .map(|i| {
                let (l, r) = self.neighbours(i);
                ((v[r] - v[l]) / (two * h), (v[r] - two * v[i] + v[l]) / (h * h))
            })
            .unzip()
    }
}

/// Closed-form return landscapes.
#[derive(Debug, Clone, PartialEq)]
pub enum Analytic<T> {
    /// `base + height·exp(-(x-center)²/(2 width²))`
    GaussianBump {
        center: T,
        height: T,
        width: T,
        base: T,
    },
    /// `base + amplitude·cos(2π·cycles·(x-x_min)/(x_max-x_min))`
    Cosine { base: T, amplitude: T, cycles: T },
    /// Linear interpolation between knots, constant outside.
    PiecewiseLinear { knots_x: Vec<T>, knots_r: Vec<T> },
}

impl<T: Scalar> Analytic<T> {
    fn name(&self) -> &'static str {
        match self {
            Analytic::GaussianBump { .. } => "gaussian-bump",
            Analytic::Cosine { .. } => "cosine",
            Analytic::PiecewiseLinear { .. } => "piecewise-linear",
        }
    }

    /// `(R, R', R'')` at `x`.
    pub fn eval(&self, grid: &SectorGrid<T>, x: T) -> (T, T, T) {
        match self {
            Analytic::GaussianBump {
                center,
                height,
                width,
                base,
            } => {
                let u = (x - *center) / *width;
                let e = *height * (-c::<T>(0.5) * u * u).exp();
                let w2 = *width * *width;
                (*base + e, -e * u / *width, e * (u * u - T::one()) / w2)
            }
            Analytic::Cosine {
                base,
                amplitude,
                cycles,
            } => {
                let k = c::<T>(2.0) * T::PI() * *cycles / grid.volume();
                let ph = k * (x - grid.x_min);
                (
                    *base + *amplitude * ph.cos(),
                    -*amplitude * k * ph.sin(),
                    -*amplitude * k * k * ph.cos(),
                )
            }
            Analytic::PiecewiseLinear { knots_x, knots_r } => {
                let n = knots_x.len();
                if x <= knots_x[0] {
                    return (knots_r[0], T::zero(), T::zero());
                }
                if x >= knots_x[n - 1] {
                    return (knots_r[n - 1], T::zero(), T::zero());
                }
                let j = knots_x.iter().rposition(|&k| k <= x).unwrap_or(0).min(n - 2);
                let slope = |j: usize| (knots_r[j + 1] - knots_r[j]) / (knots_x[j + 1] - knots_x[j]);
                let s = slope(j);
                let r = knots_r[j] + s * (x - knots_x[j]);
                // at an interior knot report the mean of the one-sided slopes
                let d1 = if x == knots_x[j] && j > 0 {
                    c::<T>(0.5) * (s + slope(j - 1))
                } else {
                    s
                };
                (r, d1, T::zero())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Analytic::GaussianBump { width, .. } if !(*width > T::zero()) => {
                Err(Error::validation("width", "must be positive"))
            }
            Analytic::PiecewiseLinear { knots_x, knots_r } => {
                if knots_x.len() < 2 || knots_x.len() != knots_r.len() {
                    return Err(Error::validation(
                        "knots_x",
                        "need at least two knots and matching knots_r",
                    ));
                }
                if knots_x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::validation("knots_x", "must be strictly increasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Long-run return `R` at each grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnLandscape<T> {
    pub r_values: Vec<T>,
    pub analytic: Option<Analytic<T>>,
}

impl<T: Scalar> ReturnLandscape<T> {
    pub fn from_values(r_values: Vec<T>) -> Self {
        Self {
            r_values,
            analytic: None,
        }
    }

    pub fn from_analytic(grid: &SectorGrid<T>, analytic: Analytic<T>) -> Self {
        let r_values = grid.nodes().into_iter().map(|x| analytic.eval(grid, x).0).collect();
        Self {
            r_values,
            analytic: Some(analytic),
        }
    }
}

/// Structural parameters of the micro model.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralParams<T> {
    /// Cobb-Douglas exponent, `0 < α < 1`.
    pub alpha: T,
    /// Price-sensitivity weight of the arctan price term.
    pub b: T,
    /// Competition cost coefficient.
    pub gamma: T,
    /// Capital time scale (`0 < ε ≪ 1`).
    pub epsilon: T,
    /// Firm repulsion strength.
    pub tau: T,
    /// Price-dividend preference weight.
    pub nu: T,
    /// Scale of the long-run return term in the mobility.
    pub a_f0: T,
    /// Slope proxy of the price term in the dynamics.
    pub varsigma: T,
    /// Exponent of `H(K) = K^η`.
    pub eta: T,
    pub sigma_x2: T,
    pub sigma_k2: T,
    pub sigma_xhat2: T,
    pub sigma_khat2: T,
    /// Number of firms `N`.
    pub n_firms: T,
    /// Number of investors `N̂`.
    pub n_investors: T,
    /// Exponent ζ of the allocation weight `R^ζ`.
    pub f2_exponent: T,
    /// Include the `σ_K̂² F²/(2 f²)` correction in the attractivity.
    pub include_f_correction: bool,
}

impl<T: Scalar> Default for StructuralParams<T> {
    fn default() -> Self {
        Self {
            alpha: c(0.5),
            b: c(0.2),
            gamma: c(0.1),
            epsilon: c(0.1),
            tau: T::one(),
            nu: c(0.5),
            a_f0: T::one(),
            varsigma: c(0.5),
            eta: c(0.5),
            sigma_x2: c(1e-3),
            sigma_k2: c(0.1),
            sigma_xhat2: T::one(),
            sigma_khat2: T::one(),
            n_firms: c(100.0),
            n_investors: c(400.0),
            f2_exponent: T::one(),
            include_f_correction: false,
        }
    }
}

/// Response coefficients of the expected-return diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationParams<T> {
    pub a0: T,
    pub b_x2: T,
    pub c_t: T,
    pub d_t2: T,
    pub f_x2: T,
    pub h_t2: T,
    pub u_xt: T,
    pub v_xt: T,
}

impl<T: Scalar> Default for ExpectationParams<T> {
    fn default() -> Self {
        Self {
            a0: T::one(),
            b_x2: T::zero(),
            c_t: T::one(),
            d_t2: T::zero(),
            f_x2: T::zero(),
            h_t2: T::zero(),
            u_xt: T::zero(),
            v_xt: T::zero(),
        }
    }
}

/// Per-node `∇R` and `∇²R`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeDerivatives<T> {
    pub grad: Vec<T>,
    pub lap: Vec<T>,
}

/// Complete model input.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub grid: SectorGrid<T>,
    pub landscape: ReturnLandscape<T>,
    pub params: StructuralParams<T>,
    pub expectations: ExpectationParams<T>,
}

const PARAM_KEYS: [&str; 17] = [
    "alpha",
    "b",
    "gamma",
    "epsilon",
    "tau",
    "nu",
    "a_f0",
    "varsigma",
    "eta",
    "sigma_x2",
    "sigma_k2",
    "sigma_xhat2",
    "sigma_khat2",
    "n_firms",
    "n_investors",
    "f2_exponent",
    "include_f_correction",
];

const EXPECTATION_KEYS: [&str; 8] = ["a0", "b_x2", "c_t", "d_t2", "f_x2", "h_t2", "u_xt", "v_xt"];

impl<T: Scalar> StructuralParams<T> {
    fn slot(&mut self, name: &str) -> Option<&mut T> {
        Some(match name {
            "alpha" => &mut self.alpha,
            "b" => &mut self.b,
            "gamma" => &mut self.gamma,
            "epsilon" => &mut self.epsilon,
            "tau" => &mut self.tau,
            "nu" => &mut self.nu,
            "a_f0" => &mut self.a_f0,
            "varsigma" => &mut self.varsigma,
            "eta" => &mut self.eta,
            "sigma_x2" => &mut self.sigma_x2,
            "sigma_k2" => &mut self.sigma_k2,
            "sigma_xhat2" => &mut self.sigma_xhat2,
            "sigma_khat2" => &mut self.sigma_khat2,
            "n_firms" => &mut self.n_firms,
            "n_investors" => &mut self.n_investors,
            "f2_exponent" => &mut self.f2_exponent,
            _ => return None,
        })
    }

    /// Reads a real-valued parameter by its file key.
    pub fn get(&self, name: &str) -> Option<T> {
        self.clone().slot(name).map(|v| *v)
    }

    /// Sets a real-valued parameter by its file key.
    pub fn set(&mut self, name: &str, value: T) -> Result<()> {
        match self.slot(name) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(Error::validation(name, "unknown structural parameter")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for key in PARAM_KEYS.iter().take(16) {
            let v = self.get(key).unwrap_or_else(T::nan);
            if !v.is_finite() {
                return Err(Error::validation(key, "must be finite"));
            }
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::validation("alpha", "must lie in (0, 1)"));
        }
        let positive = [
            ("sigma_x2", self.sigma_x2),
            ("sigma_k2", self.sigma_k2),
            ("sigma_xhat2", self.sigma_xhat2),
            ("sigma_khat2", self.sigma_khat2),
            ("epsilon", self.epsilon),
            ("tau", self.tau),
            ("gamma", self.gamma),
            ("n_firms", self.n_firms),
            ("n_investors", self.n_investors),
        ];
        for (k, v) in positive {
            if !(v > T::zero()) {
                return Err(Error::validation(k, "must be positive"));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> ExpectationParams<T> {
    fn slot(&mut self, name: &str) -> Option<&mut T> {
        Some(match name {
            "a0" => &mut self.a0,
            "b_x2" => &mut self.b_x2,
            "c_t" => &mut self.c_t,
            "d_t2" => &mut self.d_t2,
            "f_x2" => &mut self.f_x2,
            "h_t2" => &mut self.h_t2,
            "u_xt" => &mut self.u_xt,
            "v_xt" => &mut self.v_xt,
            _ => return None,
        })
    }

    pub fn get(&self, name: &str) -> Option<T> {
        self.clone().slot(name).map(|v| *v)
    }

    pub fn validate(&self) -> Result<()> {
        for key in EXPECTATION_KEYS {
            if !self.get(key).is_some_and(|v| v.is_finite()) {
                return Err(Error::validation(key, "must be finite"));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Scenario<T> {
    /// Flat landscape `R ≡ r` on `[0, 1)` with periodic boundaries.
    pub fn flat(n_sectors: usize, r: T, params: StructuralParams<T>) -> Self {
        Self {
            grid: SectorGrid::new(n_sectors, T::zero(), T::one(), Boundary::Periodic),
            landscape: ReturnLandscape::from_values(vec![r; n_sectors]),
            params,
            expectations: ExpectationParams::default(),
        }
    }

    /// Scenario on `grid` with an analytic landscape.
    pub fn analytic(grid: SectorGrid<T>, analytic: Analytic<T>, params: StructuralParams<T>) -> Self {
        let landscape = ReturnLandscape::from_analytic(&grid, analytic);
        Self {
            grid,
            landscape,
            params,
            expectations: ExpectationParams::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n_sectors
    }

    pub fn r(&self) -> &[T] {
        &self.landscape.r_values
    }

    /// Checks every invariant of the grid, landscape and parameters.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.n_sectors < 3 {
            return Err(Error::validation("n_sectors", "need at least 3 sectors"));
        }
        if !(g.x_min.is_finite() && g.x_max.is_finite() && g.spacing() > T::zero()) {
            return Err(Error::validation("x_max", "must exceed x_min"));
        }
        let r = &self.landscape.r_values;
        if r.len() != g.n_sectors {
            return Err(Error::validation(
                "r_values",
                format!("expected {} values, found {}", g.n_sectors, r.len()),
            ));
        }
        if r.iter().any(|v| !(*v > T::zero() && v.is_finite())) {
            return Err(Error::validation("r_values", "returns must be finite and positive"));
        }
        if let Some(a) = &self.landscape.analytic {
            a.validate()?;
            let scale = r.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let tol = scale * (c::<T>(1e-9)).max(T::epsilon() * c(16.0));
            for (i, x) in g.nodes().into_iter().enumerate() {
                if (a.eval(g, x).0 - r[i]).abs() > tol {
                    return Err(Error::validation(
                        "r_values",
                        format!("disagrees with the {} descriptor at node {i}", a.name()),
                    ));
                }
            }
        }
        self.params.validate()?;
        self.expectations.validate()
    }

    /// `∇R` and `∇²R` at each node: analytic when a descriptor exists,
    /// otherwise central differences under the boundary rule.
    pub fn landscape_derivatives(&self) -> LandscapeDerivatives<T> {
        match &self.landscape.analytic {
            Some(a) => {
                let (grad, lap) = self
                    .grid
                    .nodes()
                    .into_iter()
                    .map(|x| {
                        let (_, d1, d2) = a.eval(&self.grid, x);
                        (d1, d2)
                    })
                    .unzip();
                LandscapeDerivatives { grad, lap }
            }
            None => {
                let (grad, lap) = self.grid.differentiate(&self.landscape.r_values);
                LandscapeDerivatives { grad, lap }
            }
        }
    }

    /// Parses the text format.
    pub fn parse(text: &str) -> Result<Self> {
        Parser::default().run(text)
    }

    /// Serializes to the text format; `parse(to_text(s)) == s`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let p = &self.params;
        let _ = writeln!(s, "[grid]");
        let _ = writeln!(s, "n_sectors = {}", g.n_sectors);
        let _ = writeln!(s, "x_min = {}", g.x_min);
        let _ = writeln!(s, "x_max = {}", g.x_max);
        let _ = writeln!(s, "boundary = {}", g.boundary.name());
        let _ = writeln!(s, "\n[params]");
        for key in PARAM_KEYS.iter().take(16) {
            let _ = writeln!(s, "{key} = {}", p.get(key).unwrap_or_else(T::nan));
        }
        let _ = writeln!(s, "include_f_correction = {}", p.include_f_correction);
        let _ = writeln!(s, "\n[expectations]");
        for key in EXPECTATION_KEYS {
            let _ = writeln!(s, "{key} = {}", self.expectations.get(key).unwrap_or_else(T::nan));
        }
        let _ = writeln!(s, "\n[landscape]");
        let _ = writeln!(s, "r_values = {}", join(&self.landscape.r_values));
        if let Some(a) = &self.landscape.analytic {
            let _ = writeln!(s, "analytic = {}", a.name());
            match a {
                Analytic::GaussianBump {
                    center,
                    height,
                    width,
                    base,
                } => {
                    let _ = writeln!(s, "center = {center}\nheight = {height}\nwidth = {width}\nbase = {base}");
                }
                Analytic::Cosine {
                    base,
                    amplitude,
                    cycles,
                } => {
                    let _ = writeln!(s, "base = {base}\namplitude = {amplitude}\ncycles = {cycles}");
                }
                Analytic::PiecewiseLinear { knots_x, knots_r } => {
                    let _ = writeln!(s, "knots_x = {}\nknots_r = {}", join(knots_x), join(knots_r));
                }
            }
        }
        s
    }

    /// Writes [`Scenario::to_text`] to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_text()).map_err(|e| Error::Io(e.to_string()))
    }
}

fn join<T: Scalar>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Reads and validates a scenario file.
pub fn load_scenario<T: Scalar>(path: impl AsRef<Path>) -> Result<Scenario<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Scenario::parse(&text)
}

/// `∇R` and `∇²R` at every node of the scenario grid.
pub fn landscape_derivatives<T: Scalar>(scenario: &Scenario<T>) -> LandscapeDerivatives<T> {
    scenario.landscape_derivatives()
}

#[derive(Default)]
struct Parser {
    entries: std::collections::BTreeMap<(String, String), (usize, String)>,
}

impl Parser {
    fn run<T: Scalar>(mut self, text: &str) -> Result<Scenario<T>> {
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line_no = no + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_ascii_lowercase();
                if !matches!(name.as_str(), "grid" | "params" | "expectations" | "landscape") {
                    return Err(parse_err(line_no, &name, "unknown section"));
                }
                section = name;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, line, "expected `key = value`"))?;
            let key = key.trim().to_ascii_lowercase();
            if section.is_empty() {
                return Err(parse_err(line_no, &key, "key outside any section"));
            }
            let slot = (section.clone(), key.clone());
            if self.entries.contains_key(&slot) {
                return Err(parse_err(line_no, &key, "duplicate key"));
            }
            self.entries.insert(slot, (line_no, value.trim().to_string()));
        }
        let scenario = self.build()?;
        scenario.validate()?;
        Ok(scenario)
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn raw(&mut self, section: &str, key: &str) -> Result<(usize, String)> {
        self.take(section, key).ok_or_else(|| Error::Parse {
            line: 0,
            field: format!("{section}.{key}"),
            message: "missing key".into(),
        })
    }

    fn real<T: Scalar>(&mut self, section: &str, key: &str) -> Result<T> {
        let (line, v) = self.raw(section, key)?;
        scalar(line, key, &v)
    }

    fn array<T: Scalar>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| scalar(line, key, s))
            .collect()
    }

    fn build<T: Scalar>(mut self) -> Result<Scenario<T>> {
        let (line, n) = self.raw("grid", "n_sectors")?;
        let n_sectors: usize = n
            .parse()
            .map_err(|_| parse_err(line, "n_sectors", "expected a positive integer"))?;
        let x_min = self.real("grid", "x_min")?;
        let x_max = self.real("grid", "x_max")?;
        let (line, b) = self.raw("grid", "boundary")?;
        let boundary = match b.to_ascii_lowercase().as_str() {
            "periodic" => Boundary::Periodic,
            "reflecting" => Boundary::Reflecting,
            _ => return Err(parse_err(line, "boundary", "expected `periodic` or `reflecting`")),
        };
        let grid = SectorGrid::new(n_sectors, x_min, x_max, boundary);

        let mut params = StructuralParams::<T>::default();
        for key in PARAM_KEYS.iter().take(16) {
            let v = self.real("params", key)?;
            params.set(key, v)?;
        }
        // optional, off unless given
        if let Some((line, flag)) = self.take("params", "include_f_correction") {
            params.include_f_correction = match flag.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" | "on" => true,
                "false" | "0" | "no" | "off" => false,
                _ => return Err(parse_err(line, "include_f_correction", "expected a boolean")),
            };
        }

        let mut expectations = ExpectationParams::<T>::default();
        for key in EXPECTATION_KEYS {
            let v = self.real("expectations", key)?;
            *expectations.slot(key).expect("known key") = v;
        }

        let values = match self.take("landscape", "r_values") {
            Some((line, v)) => Some(Self::array(line, "r_values", &v)?),
            None => None,
        };
        let analytic = match self.take("landscape", "analytic") {
            None => None,
            Some((line, kind)) => Some(match kind.to_ascii_lowercase().as_str() {
                "gaussian-bump" => Analytic::GaussianBump {
                    center: self.real("landscape", "center")?,
                    height: self.real("landscape", "height")?,
                    width: self.real("landscape", "width")?,
                    base: match self.take("landscape", "base") {
                        Some((l, v)) => scalar(l, "base", &v)?,
                        None => T::zero(),
                    },
                },
                "cosine" => Analytic::Cosine {
                    base: self.real("landscape", "base")?,
                    amplitude: self.real("landscape", "amplitude")?,
                    cycles: self.real("landscape", "cycles")?,
                },
                "piecewise-linear" => {
                    let (lx, kx) = self.raw("landscape", "knots_x")?;
                    let (lr, kr) = self.raw("landscape", "knots_r")?;
                    Analytic::PiecewiseLinear {
                        knots_x: Self::array(lx, "knots_x", &kx)?,
                        knots_r: Self::array(lr, "knots_r", &kr)?,
                    }
                }
                other => return Err(parse_err(line, "analytic", &format!("unknown descriptor `{other}`"))),
            }),
        };
        if let Some(((_, key), (line, _))) = self.entries.into_iter().next() {
            return Err(parse_err(line, &key, "unknown key"));
        }
        let landscape = match (values, analytic) {
            (Some(v), a) => ReturnLandscape { r_values: v, analytic: a },
            (None, Some(a)) => {
                if let Analytic::PiecewiseLinear { .. } = &a {
                    a.validate()?;
                }
                ReturnLandscape::from_analytic(&grid, a)
            }
            (None, None) => {
                return Err(parse_err(0, "landscape.r_values", "need r_values or an analytic descriptor"))
            }
        };
        Ok(Scenario {
            grid,
            landscape,
            params,
            expectations,
        })
    }
}

fn parse_err(line: usize, field: &str, message: &str) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn scalar<T: Scalar>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse::<f64>()
        .map(T::lit)
        .map_err(|_| parse_err(line, key, &format!("`{v}` is not a number")))
}
