//! Agent-based simulation of the underlying micro-economics: `N` firms and
//! `N̂` investors moving on the sector grid.
//!
//! One synchronous step:
//! 1. every investor spreads its capital over the firms of its cell in
//!    proportion to `F₂(R) = R^ζ` (the nearest occupied cell if its own is
//!    empty);
//! 2. each firm's capital becomes the sum it received, so firm and investor
//!    capital totals agree exactly;
//! 3. investors earn `dt/ε · Σᵢ wᵢ (rᵢ + F₁ᵢ)` on their capital, with
//!    `rᵢ = αR Kᵢ^{α−1} − γ Σ_{j∈cell} Kⱼ/(h Kᵢ)` and the bounded price
//!    term `F₁ᵢ = b·atan(Kᵢ^α R/(⟨K^α⟩⟨R⟩) − 1)`; wealth is floored at zero
//!    and then perturbed by capital noise reflected at zero;
//! 4. firms drift along `∇R·K^η` and investors along the firm-averaged
//!    `a∇R + ν∇F₁`, both with Gaussian position noise.
//!
//! Point interactions `δ(X − X')` act within a grid cell and carry the
//! weight `1/h`, so cell counts translate into densities per unit length.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fieldcore::FieldSolution;
use crate::scalar::{c, Scalar};
use crate::scenario::Scenario;

#[derive(Debug, Clone)]
pub struct AgentPopulation<T> {
    pub firm_x: Vec<T>,
    pub firm_k: Vec<T>,
    pub inv_x: Vec<T>,
    pub inv_k: Vec<T>,
    pub rng_seed: u64,
    pub step_count: u64,
    /// Investor wealth removed by the zero floor, accumulated.
    pub shortfall: T,
    /// Total firm capital minus total investor capital right after the last
    /// allocation.
    pub allocation_gap: T,
    rng: ChaCha8Rng,
}

impl<T: Scalar> AgentPopulation<T> {
    fn normal(&mut self) -> T {
        let z: f64 = self.rng.sample(StandardNormal);
        c(z)
    }
}

/// Uniform positions; capital at the field solution's `K_X` (investors
/// scaled by `N/N̂`) when one is given, else 1.
pub fn init_population<T: Scalar>(
    scenario: &Scenario<T>,
    seed: u64,
    solution: Option<&FieldSolution<T>>,
) -> Result<AgentPopulation<T>> {
    let p = &scenario.params;
    let n = p.n_firms.round().to_usize().unwrap_or(0);
    let nh = p.n_investors.round().to_usize().unwrap_or(0);
    if n == 0 || nh == 0 {
        return Err(Error::validation("n_firms", "the simulation needs N, N̂ ≥ 1"));
    }
    let grid = &scenario.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // stratified: one uniform draw per equal-width slot, slots shuffled, so
    // every agent is uniform on the grid and cell counts start balanced
    let mut pos = |m: usize| -> Vec<T> {
        let mut xs: Vec<T> = (0..m)
            .map(|k| {
                let u: f64 = rng.random();
                grid.x_min + (grid.x_max - grid.x_min) * c::<T>((k as f64 + u) / m as f64)
            })
            .collect();
        xs.shuffle(&mut rng);
        xs
    };
    let firm_x = pos(n);
    let inv_x = pos(nh);
    let k_at = |x: T| -> T {
        match solution {
            Some(s) => {
                let k = s.k_x[grid.cell_of(x)];
                if k > T::zero() {
                    k
                } else {
                    T::one()
                }
            }
            None => T::one(),
        }
    };
    let scale = if solution.is_some() {
        p.n_firms / p.n_investors
    } else {
        T::one()
    };
    Ok(AgentPopulation {
        firm_k: firm_x.iter().map(|&x| k_at(x)).collect(),
        inv_k: inv_x.iter().map(|&x| k_at(x) * scale).collect(),
        firm_x,
        inv_x,
        rng_seed: seed,
        step_count: 0,
        shortfall: T::zero(),
        allocation_gap: T::zero(),
        rng,
    })
}

/// Firms of each cell.
fn cell_members<T: Scalar>(scenario: &Scenario<T>, xs: &[T]) -> Vec<Vec<usize>> {
    let mut cells = vec![Vec::new(); scenario.n()];
    for (i, &x) in xs.iter().enumerate() {
        cells[scenario.grid.cell_of(x)].push(i);
    }
    cells
}

/// Nearest cell (in index distance, respecting the boundary) holding firms.
fn nearest_occupied(cells: &[Vec<usize>], from: usize, periodic: bool) -> Option<usize> {
    let n = cells.len();
    for d in 0..n {
        let cand = if periodic {
            [(from + d) % n, (from + n - d % n) % n]
        } else {
            [(from + d).min(n - 1), from.saturating_sub(d)]
        };
        if let Some(&c) = cand.iter().find(|&&c| !cells[c].is_empty()) {
            return Some(c);
        }
    }
    None
}

/// Allocation of investor capital to firms; returns, per investor, the
/// target cell. Firm capital is overwritten with the allocated sums.
fn allocate<T: Scalar>(pop: &mut AgentPopulation<T>, scenario: &Scenario<T>, cells: &[Vec<usize>]) -> Vec<usize> {
    let grid = &scenario.grid;
    let periodic = grid.boundary == crate::scenario::Boundary::Periodic;
    let zeta = scenario.params.f2_exponent;
    let r = scenario.r();
    let f2: Vec<T> = r.iter().map(|&v| v.max(T::zero()).powf(zeta)).collect();
    let mut k = vec![T::zero(); pop.firm_k.len()];
    let mut targets = Vec::with_capacity(pop.inv_x.len());
    for j in 0..pop.inv_x.len() {
        let own = grid.cell_of(pop.inv_x[j]);
        let cell = nearest_occupied(cells, own, periodic).unwrap_or(own);
        targets.push(cell);
        let members = &cells[cell];
        // all firms of a cell share R, hence equal F₂ weights unless F₂ = 0
        let total: T = members.iter().map(|&i| f2[grid.cell_of(pop.firm_x[i])]).sum();
        for &i in members {
            let w = if total > T::zero() {
                f2[cell] / total
            } else {
                T::one() / T::usize(members.len())
            };
            k[i] += w * pop.inv_k[j];
        }
    }
    pop.firm_k = k;
    pop.allocation_gap = pop.firm_k.iter().copied().sum::<T>() - pop.inv_k.iter().copied().sum::<T>();
    targets
}

/// One synchronous update of duration `dt`.
pub fn step<T: Scalar>(pop: &mut AgentPopulation<T>, scenario: &Scenario<T>, dt: T) -> Result<()> {
    if !(dt > T::zero()) {
        return Err(Error::validation("dt", "must be positive"));
    }
    let s = &scenario.params;
    let grid = &scenario.grid;
    let h = grid.spacing();
    let derivs = scenario.landscape_derivatives();
    let r = scenario.r();

    let cells = cell_members(scenario, &pop.firm_x);
    let targets = allocate(pop, scenario, &cells);

    // firm returns
    let nf = pop.firm_k.len();
    let cell_k: Vec<T> = cells
        .iter()
        .map(|m| m.iter().map(|&i| pop.firm_k[i]).sum())
        .collect();
    let (mut ka_sum, mut r_sum, mut cnt) = (T::zero(), T::zero(), 0usize);
    for i in 0..nf {
        if pop.firm_k[i] > T::zero() {
            ka_sum += pop.firm_k[i].powf(s.alpha);
            r_sum += r[grid.cell_of(pop.firm_x[i])];
            cnt += 1;
        }
    }
    let (ka_mean, r_mean) = if cnt > 0 {
        (ka_sum / T::usize(cnt), r_sum / T::usize(cnt))
    } else {
        (T::one(), T::one())
    };
    let mut ret = vec![T::zero(); nf];
    let mut grad_f1 = vec![T::zero(); nf];
    for i in 0..nf {
        let k = pop.firm_k[i];
        let cell = grid.cell_of(pop.firm_x[i]);
        if k > T::zero() {
            let ka = k.powf(s.alpha);
            let u = ka * r[cell] / (ka_mean * r_mean);
            let um = u - T::one();
            let div = s.alpha * r[cell] * ka / k;
            let comp = s.gamma * cell_k[cell] / (h * k);
            ret[i] = div - comp + s.b * um.atan();
            grad_f1[i] = s.b * ka * derivs.grad[cell] / (ka_mean * r_mean) / (T::one() + um * um);
        }
    }

    // investor wealth
    let rate = dt / s.epsilon;
    let noise = (c::<T>(2.0) * s.sigma_khat2 * dt).sqrt();
    for j in 0..pop.inv_k.len() {
        let members = &cells[targets[j]];
        let earned = if members.is_empty() {
            T::zero()
        } else {
            let w = T::one() / T::usize(members.len());
            members.iter().map(|&i| w * ret[i]).sum::<T>()
        };
        let mut k = pop.inv_k[j] + rate * earned * pop.inv_k[j];
        if k < T::zero() {
            pop.shortfall -= k;
            k = T::zero();
        }
        let z = pop.normal();
        pop.inv_k[j] = (k + noise * z).abs();
    }

    // motion
    let sx = (s.sigma_x2 * dt).sqrt();
    for i in 0..nf {
        let cell = grid.cell_of(pop.firm_x[i]);
        let drift = derivs.grad[cell] * pop.firm_k[i].powf(s.eta);
        let z = pop.normal();
        pop.firm_x[i] = grid.fold(pop.firm_x[i] + drift * dt + sx * z);
    }
    let sxh = (s.sigma_xhat2 * dt).sqrt();
    for j in 0..pop.inv_x.len() {
        let cell = grid.cell_of(pop.inv_x[j]);
        let members = &cells[cell];
        let drift = if members.is_empty() {
            T::zero()
        } else {
            members
                .iter()
                .map(|&i| s.a_f0 * derivs.grad[cell] + s.nu * grad_f1[i])
                .sum::<T>()
                / T::usize(members.len())
        };
        let z = pop.normal();
        pop.inv_x[j] = grid.fold(pop.inv_x[j] + drift * dt + sxh * z);
    }
    pop.step_count += 1;
    Ok(())
}

/// Per-sector firm count and total firm capital of the current population.
pub fn sector_totals<T: Scalar>(pop: &AgentPopulation<T>, scenario: &Scenario<T>) -> (Vec<usize>, Vec<T>) {
    let mut count = vec![0usize; scenario.n()];
    let mut cap = vec![T::zero(); scenario.n()];
    for (&x, &k) in pop.firm_x.iter().zip(&pop.firm_k) {
        let cell = scenario.grid.cell_of(x);
        count[cell] += 1;
        cap[cell] += k;
    }
    (count, cap)
}

/// One row of a per-sector trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow<T> {
    pub t: T,
    pub sector: usize,
    pub firm_count: usize,
    /// Mean firm capital in the sector; `NaN` when it holds no firm.
    pub mean_k: T,
}

/// Time averages of one seed's run over the recorded window.
#[derive(Debug, Clone)]
pub struct SeedStats<T> {
    pub seed: u64,
    pub mean_count: Vec<T>,
    /// Ratio of time-averaged capital to time-averaged count.
    pub mean_k: Vec<T>,
    /// Largest `|Σ firm_k − Σ inv_k|` seen right after an allocation.
    pub max_allocation_gap: T,
    pub shortfall: T,
    pub trajectory: Vec<TrajectoryRow<T>>,
}

/// Simulation controls.
#[derive(Debug, Clone)]
pub struct RunOptions<T> {
    /// Total number of steps, burn-in included.
    pub steps: usize,
    pub burn_in: usize,
    pub dt: T,
    /// Record a trajectory row set every `stride` steps (0: none).
    pub trajectory_stride: usize,
}

/// Runs one seed from the field-initialized population.
pub fn simulate<T: Scalar>(
    scenario: &Scenario<T>,
    solution: Option<&FieldSolution<T>>,
    seed: u64,
    opts: &RunOptions<T>,
) -> Result<SeedStats<T>> {
    if opts.steps <= opts.burn_in {
        return Err(Error::validation("steps", "must exceed burn_in"));
    }
    let n = scenario.n();
    let mut pop = init_population(scenario, seed, solution)?;
    let mut cnt_sum = vec![T::zero(); n];
    let mut cap_sum = vec![T::zero(); n];
    let mut gap = T::zero();
    let mut trajectory = Vec::new();
    for t in 1..=opts.steps {
        step(&mut pop, scenario, opts.dt)?;
        gap = gap.max(pop.allocation_gap.abs());
        if t <= opts.burn_in {
            continue;
        }
        // capital as allocated at the start of this step, positions after it
        let (count, cap) = sector_totals(&pop, scenario);
        for i in 0..n {
            cnt_sum[i] += T::usize(count[i]);
            cap_sum[i] += cap[i];
        }
        if opts.trajectory_stride > 0 && (t - opts.burn_in) % opts.trajectory_stride == 0 {
            for i in 0..n {
                trajectory.push(TrajectoryRow {
                    t: opts.dt * T::usize(t),
                    sector: i,
                    firm_count: count[i],
                    mean_k: if count[i] > 0 { cap[i] / T::usize(count[i]) } else { T::nan() },
                });
            }
        }
    }
    let m = T::usize(opts.steps - opts.burn_in);
    Ok(SeedStats {
        seed,
        mean_count: cnt_sum.iter().map(|&v| v / m).collect(),
        mean_k: cap_sum
            .iter()
            .zip(&cnt_sum)
            .map(|(&k, &n)| if n > T::zero() { k / n } else { T::nan() })
            .collect(),
        max_allocation_gap: gap,
        shortfall: pop.shortfall,
        trajectory,
    })
}

/// Seed-averaged comparison against the field solution.
#[derive(Debug, Clone)]
pub struct Comparison<T> {
    pub firm_count: Vec<T>,
    pub firm_count_se: Vec<T>,
    pub mean_k: Vec<T>,
    pub mean_k_se: Vec<T>,
    /// Expected firms per sector from the field, `‖Ψ‖² h`.
    pub field_count: Vec<T>,
    pub field_k: Vec<T>,
    /// `|abm − field| / field` per sector.
    pub count_deviation: Vec<T>,
    pub k_deviation: Vec<T>,
    pub max_allocation_gap: T,
    pub seeds: usize,
}

fn mean_se<T: Scalar>(xs: &[T]) -> (T, T) {
    let v: Vec<T> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (T::nan(), T::nan());
    }
    let n = T::usize(v.len());
    let m = v.iter().copied().sum::<T>() / n;
    if v.len() < 2 {
        return (m, T::nan());
    }
    let var = v.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / (n - T::one());
    (m, (var / n).sqrt())
}

/// Aggregates per-seed statistics into a comparison with `solution`.
pub fn aggregate<T: Scalar>(scenario: &Scenario<T>, solution: &FieldSolution<T>, runs: &[SeedStats<T>]) -> Comparison<T> {
    let n = scenario.n();
    let h = scenario.grid.spacing();
    let mut out = Comparison {
        firm_count: vec![T::zero(); n],
        firm_count_se: vec![T::zero(); n],
        mean_k: vec![T::zero(); n],
        mean_k_se: vec![T::zero(); n],
        field_count: solution.psi2.iter().map(|&p| p * h).collect(),
        field_k: solution.k_x.clone(),
        count_deviation: vec![T::zero(); n],
        k_deviation: vec![T::zero(); n],
        max_allocation_gap: runs.iter().map(|r| r.max_allocation_gap).fold(T::zero(), T::max),
        seeds: runs.len(),
    };
    for i in 0..n {
        let (m, se) = mean_se(&runs.iter().map(|r| r.mean_count[i]).collect::<Vec<_>>());
        out.firm_count[i] = m;
        out.firm_count_se[i] = se;
        let (m, se) = mean_se(&runs.iter().map(|r| r.mean_k[i]).collect::<Vec<_>>());
        out.mean_k[i] = m;
        out.mean_k_se[i] = se;
        out.count_deviation[i] = (out.firm_count[i] - out.field_count[i]).abs() / out.field_count[i];
        out.k_deviation[i] = (out.mean_k[i] - out.field_k[i]).abs() / out.field_k[i];
    }
    out
}

/// [`simulate`] over every seed followed by [`aggregate`].
pub fn run_and_compare<T: Scalar>(
    scenario: &Scenario<T>,
    solution: &FieldSolution<T>,
    seeds: &[u64],
    opts: &RunOptions<T>,
) -> Result<Comparison<T>> {
    let runs = seeds
        .iter()
        .map(|&s| simulate(scenario, Some(solution), s, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(scenario, solution, &runs))
}
