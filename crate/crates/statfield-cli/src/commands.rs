use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;
use serde::Serialize;

use statfield::abm::{self, RunOptions};
use statfield::dynamics::{self, log_space};
use statfield::fieldcore::{self, SolverOptions};
use statfield::stability::{self, MapVerdict, SensitivityParam};
use statfield::{FieldSolution, Scenario};

use crate::output::{num, plot_script, sha256_file, write_json, write_table, Cell, Format, RunManifest, Table};

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, unreadable files: exit 1.
    Input(anyhow::Error),
    /// The numerics did not converge: exit 2.
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(e) | Failure::Numerical(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<statfield::Error> for Failure {
    fn from(e: statfield::Error) -> Self {
        use statfield::Error as E;
        match e {
            E::Io(_) | E::Parse { .. } | E::Validation { .. } => Failure::Input(e.into()),
            _ => Failure::Numerical(e.into()),
        }
    }
}

pub type Outcome = Result<Vec<PathBuf>, Failure>;

/// Flags shared by every command.
#[derive(Debug, Clone)]
pub struct Common {
    pub scenario: Option<PathBuf>,
    pub from: Option<PathBuf>,
    pub out: PathBuf,
    pub format: Format,
    pub threads: Option<usize>,
    pub max_iter: usize,
}

impl Common {
    fn scenario_path(&self) -> Result<PathBuf, Failure> {
        match (&self.scenario, &self.from) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(dir)) => Ok(dir.join(SCENARIO_COPY)),
            (None, None) => Err(Failure::Input(anyhow!("`--scenario` or `--from` is required"))),
        }
    }

    fn pool(&self) -> anyhow::Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            b = b.num_threads(n.max(1));
        }
        b.build().context("building the worker pool")
    }

    fn solver_options(&self, seed: Option<Vec<f64>>) -> SolverOptions<f64> {
        SolverOptions {
            max_iter: self.max_iter,
            seed,
            ..SolverOptions::default()
        }
    }
}

const SCENARIO_COPY: &str = "scenario.toml";
const SUMMARY: &str = "solution.json";

/// Loads the scenario, creates the output directory and, for `--from`, the
/// warm-start capital of the earlier solve.
fn prepare(common: &Common) -> Result<(Scenario, PathBuf, Option<Vec<f64>>), Failure> {
    let path = common.scenario_path()?;
    let sc: Scenario = statfield::scenario::load_scenario(&path)?;
    fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))
        .map_err(Failure::Input)?;
    let seed = match &common.from {
        Some(dir) => Some(read_seed(&dir.join(SUMMARY), sc.n())?),
        None => None,
    };
    Ok((sc, path, seed))
}

fn read_seed(path: &Path, n: usize) -> Result<Vec<f64>, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Input)?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Input)?;
    let k: Vec<f64> = v["k_x"]
        .as_array()
        .ok_or_else(|| Failure::Input(anyhow!("{}: no `k_x` array", path.display())))?
        .iter()
        .map(|x| x.as_f64().or_else(|| x.as_str().and_then(|s| s.parse().ok())).unwrap_or(f64::NAN))
        .collect();
    if k.len() != n {
        return Err(Failure::Input(anyhow!("{}: {} capital values for {n} sectors", path.display(), k.len())));
    }
    Ok(k)
}

fn solve(sc: &Scenario, common: &Common, seed: Option<Vec<f64>>) -> Result<FieldSolution, Failure> {
    let opts = common.solver_options(seed);
    fieldcore::solve_with(sc, &opts).map_err(|e| {
        if let statfield::Error::NonConvergence { iterations, residual } = e {
            eprintln!("solver stopped after {iterations} iterations, residual {}", num(residual));
        }
        Failure::from(e)
    })
}

/// Runs `body`, then writes the manifest whatever the outcome.
pub fn with_manifest(command: &str, common: &Common, body: impl FnOnce() -> Outcome) -> i32 {
    let start = Instant::now();
    let result = body();
    let code = match &result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    };
    if !common.out.is_dir() {
        return code;
    }
    let scenario_path = common.scenario_path().ok();
    let manifest = RunManifest {
        command: command.to_string(),
        scenario_path: scenario_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        output_dir: common.out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario_hash: scenario_path.and_then(|p| sha256_file(&p).ok()).unwrap_or_default(),
        wall_time_s: start.elapsed().as_secs_f64(),
        exit_code: code,
        outputs: result
            .unwrap_or_default()
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    if let Err(e) = write_json(&common.out.join("manifest.json"), &manifest) {
        eprintln!("error: {e:#}");
        return code.max(1);
    }
    code
}

#[derive(Serialize)]
struct SolutionSummary {
    iterations: usize,
    residual: f64,
    lagrange_d: f64,
    big_m: f64,
    c_norm: f64,
    mean_k_alpha: f64,
    mean_r: f64,
    peak_sector: usize,
    k_x: Vec<f64>,
}

fn solution_table(sc: &Scenario, sol: &FieldSolution) -> Table {
    let mut t = Table::new(&[
        "sector",
        "x",
        "r",
        "k_x",
        "psi2",
        "nhat",
        "f",
        "f_prime",
        "g",
        "grad_g",
        "attractivity",
        "p",
        "gamma_hat",
        "deserted",
    ]);
    let r = sc.r();
    for i in 0..sol.n() {
        t.push(vec![
            i.into(),
            sc.grid.node(i).into(),
            r[i].into(),
            sol.k_x[i].into(),
            sol.psi2[i].into(),
            sol.nhat[i].into(),
            sol.f_x[i].into(),
            sol.f_prime[i].into(),
            sol.g_x[i].into(),
            sol.grad_g_x[i].into(),
            sol.attractivity[i].into(),
            sol.p_x[i].into(),
            sol.gamma_hat[i].into(),
            sol.deserted[i].into(),
        ]);
    }
    t
}

pub fn cmd_solve(common: &Common) -> Outcome {
    let (sc, _, seed) = prepare(common)?;
    let out = &common.out;
    let copy = out.join(SCENARIO_COPY);
    sc.save(&copy)?;
    let sol = solve(&sc, common, seed)?;
    let table = solution_table(&sc, &sol);
    let csv = write_table(out, "solution", &table, Format::Csv)?;
    let summary = out.join(SUMMARY);
    write_json(
        &summary,
        &SolutionSummary {
            iterations: sol.iterations,
            residual: sol.residual,
            lagrange_d: sol.lagrange_d,
            big_m: sol.big_m,
            c_norm: sol.c_norm,
            mean_k_alpha: sol.means.k_alpha,
            mean_r: sol.means.r,
            peak_sector: sol.peak(),
            k_x: sol.k_x.clone(),
        },
    )?;
    let mut files = vec![copy, csv, summary];
    if common.format == Format::Json {
        files.push(write_table(out, "solution_table", &table, Format::Json)?);
    }
    let gp = out.join("solution.gp");
    fs::write(&gp, plot_script("solution.csv", "solution", &table.columns, "x", &["k_x", "psi2", "r"]))
        .context("writing plot script")?;
    files.push(gp);
    Ok(files)
}

pub fn cmd_stability(common: &Common) -> Outcome {
    let (sc, _, seed) = prepare(common)?;
    let sol = solve(&sc, common, seed)?;
    let rep = stability::classify(&sc, &sol)?;
    let mut t = Table::new(&[
        "sector",
        "x",
        "k_x",
        "stab_denom",
        "b_crit",
        "map_check",
        "pattern",
        "sens_relative_return",
        "sens_short_term_return",
    ]);
    for i in 0..sol.n() {
        let check = if sol.deserted[i] {
            "deserted".to_string()
        } else {
            match stability::iterate_map_check(&sc, &sol, i, 1e-3 * sol.k_x[i]) {
                Ok(MapVerdict::Converges) => "converges".into(),
                Ok(MapVerdict::Diverges) => "diverges".into(),
                Err(_) => "n/a".into(),
            }
        };
        let sens = |p: SensitivityParam| rep.sensitivities.get(&p).map_or(f64::NAN, |v| v[i]);
        t.push(vec![
            i.into(),
            sc.grid.node(i).into(),
            sol.k_x[i].into(),
            rep.stab_denom[i].into(),
            rep.b_crit[i].into(),
            check.into(),
            rep.pattern[i].label().into(),
            sens(SensitivityParam::RelativeReturn).into(),
            sens(SensitivityParam::ShortTermReturn).into(),
        ]);
    }
    let file = write_table(&common.out, "stability", &t, common.format)?;
    let gp = common.out.join("stability.gp");
    fs::write(&gp, plot_script("stability.csv", "stability", &t.columns, "x", &["stab_denom", "b_crit"]))
        .context("writing plot script")?;
    Ok(vec![file, gp])
}

/// `lo:hi:n`, log-spaced; `lo = hi` repeats the value (zero allowed).
pub fn parse_g_range(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("--g-range expects lo:hi:n, got `{s}`");
    }
    let lo: f64 = parts[0].trim().parse().with_context(|| format!("bad lower bound `{}`", parts[0]))?;
    let hi: f64 = parts[1].trim().parse().with_context(|| format!("bad upper bound `{}`", parts[1]))?;
    let n: usize = parts[2].trim().parse().with_context(|| format!("bad count `{}`", parts[2]))?;
    if n == 0 {
        bail!("--g-range needs at least one point");
    }
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
        bail!("--g-range needs 0 ≤ lo ≤ hi");
    }
    if lo == 0.0 && hi > 0.0 && n > 1 {
        bail!("log spacing needs lo > 0 unless lo = hi");
    }
    Ok(log_space(lo, hi, n))
}

pub fn cmd_dynamics(common: &Common, g_range: Option<&str>) -> Outcome {
    let g = match g_range {
        Some(s) => parse_g_range(s)?,
        None => dynamics::default_g_range(),
    };
    let (sc, _, seed) = prepare(common)?;
    let sol = solve(&sc, common, seed)?;
    let rep = dynamics::regime_analysis(&sc, &sol, &sc.expectations, &g);

    let mut co = Table::new(&["sector", "x", "k_x", "regime", "k", "l", "m", "n", "threshold_g2"]);
    let mut om = Table::new(&["sector", "x", "regime", "g", "omega_re", "omega_im", "damped"]);
    for i in 0..sol.n() {
        let c = rep.coeffs[i];
        let pick = |f: fn(&dynamics::DynCoefficients<f64>) -> f64| c.as_ref().map_or(f64::NAN, f);
        co.push(vec![
            i.into(),
            sc.grid.node(i).into(),
            sol.k_x[i].into(),
            rep.regime[i].label().into(),
            pick(|c| c.k).into(),
            pick(|c| c.l).into(),
            pick(|c| c.m).into(),
            pick(|c| c.n).into(),
            rep.threshold_g2[i].unwrap_or(f64::NAN).into(),
        ]);
        for (j, &gw) in g.iter().enumerate() {
            let w = rep.omega[i][j];
            om.push(vec![
                i.into(),
                sc.grid.node(i).into(),
                rep.regime[i].label().into(),
                gw.into(),
                w.re.into(),
                w.im.into(),
                rep.damped[i][j].into(),
            ]);
        }
    }
    let a = write_table(&common.out, "dynamics_coefficients", &co, common.format)?;
    let b = write_table(&common.out, "dynamics", &om, common.format)?;
    let gp = common.out.join("dynamics.gp");
    fs::write(&gp, plot_script("dynamics.csv", "dynamics", &om.columns, "g", &["omega_im"])).context("writing plot script")?;
    Ok(vec![a, b, gp])
}

#[derive(Debug, Clone)]
pub struct AbmArgs {
    pub seeds: usize,
    pub seed_base: u64,
    pub steps: usize,
    pub burn_in: usize,
    pub dt: f64,
    pub trajectory_stride: usize,
}

#[derive(Serialize)]
struct AbmSummary {
    seeds: usize,
    steps: usize,
    burn_in: usize,
    dt: f64,
    max_count_deviation: f64,
    max_k_deviation: f64,
    max_allocation_gap: f64,
    total_shortfall: f64,
}

pub fn cmd_abm(common: &Common, args: &AbmArgs) -> Outcome {
    if args.seeds == 0 {
        return Err(Failure::Input(anyhow!("--seeds must be at least 1")));
    }
    if args.steps <= args.burn_in {
        return Err(Failure::Input(anyhow!("--steps must exceed --burn-in")));
    }
    if !(args.dt > 0.0) {
        return Err(Failure::Input(anyhow!("--dt must be positive")));
    }
    let (sc, _, seed) = prepare(common)?;
    let sol = solve(&sc, common, seed)?;
    let opts = RunOptions {
        steps: args.steps,
        burn_in: args.burn_in,
        dt: args.dt,
        trajectory_stride: args.trajectory_stride,
    };
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|k| args.seed_base + k).collect();
    let pool = common.pool()?;
    // collected in seed order, whatever the scheduling
    let runs = pool
        .install(|| {
            seeds
                .par_iter()
                .map(|&s| abm::simulate(&sc, Some(&sol), s, &opts))
                .collect::<statfield::Result<Vec<_>>>()
        })
        .map_err(Failure::from)?;
    let cmp = abm::aggregate(&sc, &sol, &runs);

    let mut t = Table::new(&[
        "sector",
        "x",
        "field_count",
        "abm_count",
        "abm_count_se",
        "count_deviation",
        "field_k",
        "abm_k",
        "abm_k_se",
        "k_deviation",
    ]);
    for i in 0..sc.n() {
        t.push(vec![
            i.into(),
            sc.grid.node(i).into(),
            cmp.field_count[i].into(),
            cmp.firm_count[i].into(),
            cmp.firm_count_se[i].into(),
            cmp.count_deviation[i].into(),
            cmp.field_k[i].into(),
            cmp.mean_k[i].into(),
            cmp.mean_k_se[i].into(),
            cmp.k_deviation[i].into(),
        ]);
    }
    let mut per_seed = Table::new(&["seed", "sector", "mean_count", "mean_k", "shortfall"]);
    for r in &runs {
        for i in 0..sc.n() {
            per_seed.push(vec![r.seed.into(), i.into(), r.mean_count[i].into(), r.mean_k[i].into(), r.shortfall.into()]);
        }
    }
    let mut files = vec![
        write_table(&common.out, "abm", &t, common.format)?,
        write_table(&common.out, "abm_seeds", &per_seed, common.format)?,
    ];
    if args.trajectory_stride > 0 {
        for r in &runs {
            let mut tr = Table::new(&["t", "x", "firm_count", "mean_k"]);
            for row in &r.trajectory {
                tr.push(vec![
                    row.t.into(),
                    sc.grid.node(row.sector).into(),
                    row.firm_count.into(),
                    row.mean_k.into(),
                ]);
            }
            files.push(write_table(&common.out, &format!("trajectory_seed{}", r.seed), &tr, common.format)?);
        }
    }
    let finite_max = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max);
    let summary = common.out.join("abm_summary.json");
    write_json(
        &summary,
        &AbmSummary {
            seeds: args.seeds,
            steps: args.steps,
            burn_in: args.burn_in,
            dt: args.dt,
            max_count_deviation: finite_max(&cmp.count_deviation),
            max_k_deviation: finite_max(&cmp.k_deviation),
            max_allocation_gap: cmp.max_allocation_gap,
            total_shortfall: runs.iter().map(|r| r.shortfall).sum(),
        },
    )?;
    files.push(summary);
    let gp = common.out.join("abm.gp");
    fs::write(&gp, plot_script("abm.csv", "abm", &t.columns, "x", &["field_k", "abm_k"])).context("writing plot script")?;
    files.push(gp);
    Ok(files)
}

pub fn parse_values(s: &str) -> anyhow::Result<Vec<f64>> {
    let vals: Vec<f64> = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().with_context(|| format!("bad value `{v}`")))
        .collect::<anyhow::Result<_>>()?;
    if vals.is_empty() {
        bail!("--values is empty");
    }
    Ok(vals)
}

/// One sweep block: the solve at one parameter value.
struct Block {
    value: f64,
    result: Result<FieldSolution, statfield::Error>,
}

pub fn cmd_sweep(common: &Common, param: &str, values: &str, cold: bool) -> Outcome {
    let vals = parse_values(values)?;
    let (sc, _, seed) = prepare(common)?;
    if sc.params.get(param).is_none() {
        return Err(Failure::Input(anyhow!("unknown parameter `{param}`")));
    }
    let scenarios: Vec<Scenario> = vals
        .iter()
        .map(|&v| {
            let mut s = sc.clone();
            s.params.set(param, v)?;
            s.validate()?;
            Ok(s)
        })
        .collect::<statfield::Result<_>>()?;

    let blocks: Vec<Block> = if cold {
        let pool = common.pool()?;
        pool.install(|| {
            scenarios
                .par_iter()
                .zip(&vals)
                .map(|(s, &value)| Block {
                    value,
                    result: fieldcore::solve_with(s, &common.solver_options(seed.clone())),
                })
                .collect()
        })
    } else {
        // warm start chains through the values in order
        let mut warm = seed;
        let mut out = Vec::with_capacity(vals.len());
        for (s, &value) in scenarios.iter().zip(&vals) {
            let mut result = fieldcore::solve_with(s, &common.solver_options(warm.clone()));
            if result.is_err() && warm.is_some() {
                result = fieldcore::solve_with(s, &common.solver_options(None));
            }
            if let Ok(sol) = &result {
                warm = Some(sol.k_x.iter().map(|&k| if k > 0.0 { k } else { 1.0 }).collect());
            }
            out.push(Block { value, result });
        }
        out
    };

    let mut t = Table::new(&[
        "block", "param", "value", "status", "iterations", "residual", "sector", "x", "k_x", "psi2", "f", "p",
    ]);
    let mut ok = 0;
    for (b, block) in blocks.iter().enumerate() {
        match &block.result {
            Ok(sol) => {
                ok += 1;
                for i in 0..sol.n() {
                    t.push(vec![
                        b.into(),
                        param.into(),
                        block.value.into(),
                        "converged".into(),
                        sol.iterations.into(),
                        sol.residual.into(),
                        i.into(),
                        sc.grid.node(i).into(),
                        sol.k_x[i].into(),
                        sol.psi2[i].into(),
                        sol.f_x[i].into(),
                        sol.p_x[i].into(),
                    ]);
                }
            }
            Err(e) => {
                eprintln!("block {b} ({param} = {}): {e}", num(block.value));
                let (status, it, res) = match e {
                    statfield::Error::NonConvergence { iterations, residual } => ("nonconvergence", *iterations, *residual),
                    _ => ("failed", 0, f64::NAN),
                };
                t.push(vec![
                    b.into(),
                    param.into(),
                    block.value.into(),
                    status.into(),
                    it.into(),
                    res.into(),
                    Cell::Text(String::new()),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                ]);
            }
        }
    }
    let file = write_table(&common.out, "sweep", &t, common.format)?;
    if ok == 0 {
        return Err(Failure::Numerical(anyhow!("no sweep block converged")));
    }
    Ok(vec![file])
}
