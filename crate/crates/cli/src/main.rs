//! `phasecell`: batch front end for the cell-problem solvers.

mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use phasecell::cell::{self, CellProblem, Resolution, SweepConfig};
use phasecell::geometry::planar_direction;
use phasecell::homogenize::{self, HomogenizeConfig};
use phasecell::integrands::{make_integrand, CoefficientField, IntegrandSpec};
use phasecell::io::{field_csv, FieldDump};
use phasecell::potentials::{compute_cp, compute_cu, optimal_profile_1d, DoubleWell, Profile};
use phasecell::stochastic::{self, RandomMedium, StochasticConfig};
use phasecell::verify::{self, Level};
use serde::Serialize;

use config::Config;
use manifest::Run;

#[derive(Parser, Debug)]
#[command(
    name = "phasecell",
    version,
    about = "Cell problems for phase-transition surface densities"
)]
struct Cli {
    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "PHASECELL_OUT",
        default_value = "phasecell-out"
    )]
    out: PathBuf,
    /// TOML configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent solves (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Projected-gradient tolerance of the solver.
    #[arg(long, global = true)]
    tol_pg: Option<f64>,
    /// Iteration cap of the solver.
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal one-dimensional transition cost c_p (and C_u of the datum profile).
    Cp {
        #[command(flatten)]
        integrand: IntegrandArgs,
        /// Quadrature points (keys: cp.quad_points).
        #[arg(long)]
        quad_points: Option<usize>,
    },
    /// Discrete one-dimensional optimal profile (keys: profile1d.grid).
    Profile1d {
        #[command(flatten)]
        integrand: IntegrandArgs,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// One cell problem on Q^nu_rho(x) (keys: cell.*).
    Cell {
        #[command(flatten)]
        integrand: IntegrandArgs,
        #[command(flatten)]
        cube: CubeArgs,
    },
    /// Density sweep over rho and eps (keys: gamma.*).
    Gamma {
        #[command(flatten)]
        integrand: IntegrandArgs,
        /// Direction: components "p,q" (normalised) or an angle "30deg".
        #[arg(long, allow_hyphen_values = true)]
        nu: Option<Direction>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        /// Cube sides, comma separated.
        #[arg(long, value_delimiter = ',')]
        rho_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
        /// Cells per axis for every cube.
        #[arg(long = "N", alias = "cells")]
        cells: Option<usize>,
        /// Cells per unit length instead of a fixed count.
        #[arg(long)]
        per_unit: Option<usize>,
    },
    /// Periodic homogenisation with eps = 1 (keys: periodic.*).
    Periodic {
        #[command(flatten)]
        integrand: IntegrandArgs,
        /// Direction: components "p,q" (normalised) or an angle "30deg".
        #[arg(long, allow_hyphen_values = true)]
        nu: Option<Direction>,
        /// Center direction x (repeatable); cubes are centered at r x.
        #[arg(long = "x", allow_hyphen_values = true)]
        x_list: Vec<Point>,
        #[arg(long, value_delimiter = ',')]
        r_list: Option<Vec<f64>>,
        #[arg(long)]
        cells_per_unit: Option<usize>,
        /// Also scan equally spaced directions and write angle,density pairs.
        #[arg(long)]
        polar: bool,
        /// Tiling check with sides r,s.
        #[arg(long, value_delimiter = ',')]
        tiling: Option<Vec<f64>>,
    },
    /// Monte-Carlo estimate for a random checkerboard (keys: stochastic.*).
    Stochastic {
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Direction: components "p,q" (normalised) or an angle "30deg".
        #[arg(long, allow_hyphen_values = true)]
        nu: Option<Direction>,
        #[arg(long, value_delimiter = ',')]
        r_list: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        cells_per_unit: Option<usize>,
    },
    /// Invariant suite; exits 1 when any check fails (keys: verify.level).
    Verify {
        #[arg(long, value_enum)]
        level: Option<LevelArg>,
    },
    /// Solve a cell problem and export the minimiser.
    ExportField {
        #[command(flatten)]
        integrand: IntegrandArgs,
        #[command(flatten)]
        cube: CubeArgs,
        #[arg(long, value_enum, default_value = "bin")]
        format: FieldFormat,
    },
}

#[derive(Args, Debug, Default)]
struct IntegrandArgs {
    /// Double well.
    #[arg(long, value_enum)]
    potential: Option<PotentialArg>,
    /// Multiplier of the double well.
    #[arg(long)]
    well_scale: Option<f64>,
    /// Growth exponent p > 1.
    #[arg(long)]
    p: Option<f64>,
    /// Space dimension, 2 or 3.
    #[arg(long)]
    dim: Option<usize>,
    /// Coefficient field a(y).
    #[arg(long, value_enum)]
    coefficient: Option<CoefficientArg>,
    /// Coefficient values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Laminate axis along which the layers alternate.
    #[arg(long)]
    axis: Option<usize>,
    /// Checkerboard subdivisions per period.
    #[arg(long)]
    divisions: Option<usize>,
    /// Oscillation length of the coefficient.
    #[arg(long)]
    length_scale: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct CubeArgs {
    /// Direction: components "p,q" (normalised) or an angle "30deg".
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<Direction>,
    /// Cube center (default: origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    /// Cube side; needs rho > 2 eps.
    #[arg(long)]
    rho: Option<f64>,
    /// Transition length.
    #[arg(long)]
    eps: Option<f64>,
    /// Cells per axis.
    #[arg(long = "N", alias = "cells")]
    cells: Option<usize>,
    /// Clamped band width in cells.
    #[arg(long)]
    band_cells: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PotentialArg {
    Quartic,
    QuadraticWells,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CoefficientArg {
    Constant,
    Laminate,
    Checkerboard,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FieldFormat {
    Bin,
    Csv,
}

#[derive(Clone, Debug)]
struct Point(Vec<f64>);

impl FromStr for Point {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Point)
    }
}

#[derive(Clone, Debug)]
struct Direction(Vec<f64>);

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if let Some(a) = s.trim().strip_suffix("deg") {
            let deg: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
            return Ok(Direction(planar_direction(deg)));
        }
        let Point(v) = s.parse()?;
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(format!("direction {s:?} has no length"));
        }
        Ok(Direction(v.iter().map(|c| c / norm).collect()))
    }
}

impl IntegrandArgs {
    fn apply(&self, spec: &mut IntegrandSpec) -> Result<()> {
        if let Some(d) = self.dim {
            spec.dim = d;
        }
        if let Some(p) = self.p {
            spec.p = p;
        }
        if let Some(l) = self.length_scale {
            spec.length_scale = l;
        }
        if self.potential.is_some() || self.well_scale.is_some() {
            let scale = self.well_scale.unwrap_or(1.0);
            spec.potential = match self.potential.unwrap_or(PotentialArg::Quartic) {
                PotentialArg::Quartic => DoubleWell::Quartic { scale },
                PotentialArg::QuadraticWells => DoubleWell::QuadraticWells { scale },
            };
        }
        match self.coefficient {
            Some(CoefficientArg::Constant) => {
                let value = self
                    .values
                    .as_ref()
                    .and_then(|v| v.first().copied())
                    .unwrap_or(1.0);
                spec.coefficient = CoefficientField::Constant { value };
            }
            Some(CoefficientArg::Laminate) => {
                let Some(values) = self.values.clone() else {
                    bail!("--coefficient laminate needs --values");
                };
                spec.coefficient = CoefficientField::Laminate {
                    axis: self.axis.unwrap_or(0),
                    values,
                };
            }
            Some(CoefficientArg::Checkerboard) => {
                let Some(values) = self.values.clone() else {
                    bail!("--coefficient checkerboard needs --values");
                };
                spec.coefficient = CoefficientField::Checkerboard {
                    divisions: self.divisions.unwrap_or(2),
                    values,
                };
            }
            None => {
                if let Some(v) = &self.values {
                    match &mut spec.coefficient {
                        CoefficientField::Constant { value } => *value = v[0],
                        CoefficientField::Laminate { values, .. }
                        | CoefficientField::Checkerboard { values, .. } => *values = v.clone(),
                        CoefficientField::Random(r) => r.values = v.clone(),
                    }
                }
            }
        }
        Ok(())
    }
}

impl CubeArgs {
    fn apply(&self, c: &mut config::CellSection) {
        if let Some(v) = &self.nu {
            c.nu = v.0.clone();
        }
        if let Some(v) = &self.x {
            c.x = Some(v.clone());
        }
        if let Some(v) = self.rho {
            c.rho = v;
        }
        if let Some(v) = self.eps {
            c.eps = v;
        }
        if let Some(v) = self.cells {
            c.cells = v;
        }
        if let Some(v) = self.band_cells {
            c.band_cells = v;
        }
    }
}

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

fn resolve(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    set(&mut cfg.seed, &cli.seed);
    set(&mut cfg.solver.tol_pg, &cli.tol_pg);
    set(&mut cfg.solver.max_iters, &cli.max_iters);
    match &cli.command {
        Command::Cp {
            integrand,
            quad_points,
        } => {
            integrand.apply(&mut cfg.integrand)?;
            set(&mut cfg.cp.quad_points, quad_points);
        }
        Command::Profile1d { integrand, grid } => {
            integrand.apply(&mut cfg.integrand)?;
            set(&mut cfg.profile1d.grid, grid);
        }
        Command::Cell { integrand, cube }
        | Command::ExportField {
            integrand, cube, ..
        } => {
            integrand.apply(&mut cfg.integrand)?;
            cube.apply(&mut cfg.cell);
        }
        Command::Gamma {
            integrand,
            nu,
            x,
            rho_list,
            eps_list,
            cells,
            per_unit,
        } => {
            integrand.apply(&mut cfg.integrand)?;
            let g = &mut cfg.gamma;
            set(&mut g.nu, &nu.as_ref().map(|d| d.0.clone()));
            if x.is_some() {
                g.x = x.clone();
            }
            set(&mut g.rho_list, rho_list);
            set(&mut g.eps_list, eps_list);
            set(&mut g.cells, cells);
            if per_unit.is_some() {
                g.per_unit = *per_unit;
            }
        }
        Command::Periodic {
            integrand,
            nu,
            x_list,
            r_list,
            cells_per_unit,
            tiling,
            ..
        } => {
            integrand.apply(&mut cfg.integrand)?;
            let p = &mut cfg.periodic;
            set(&mut p.nu, &nu.as_ref().map(|d| d.0.clone()));
            if !x_list.is_empty() {
                p.x_list = x_list.iter().map(|x| x.0.clone()).collect();
            }
            set(&mut p.r_list, r_list);
            set(&mut p.cells_per_unit, cells_per_unit);
            if let Some(t) = tiling {
                if t.len() != 2 {
                    bail!("--tiling takes two sides r,s");
                }
                p.tiling = Some([t[0], t[1]]);
            }
        }
        Command::Stochastic {
            values,
            nu,
            r_list,
            seeds,
            cells_per_unit,
        } => {
            let s = &mut cfg.stochastic;
            set(&mut s.values, values);
            set(&mut s.nu, &nu.as_ref().map(|d| d.0.clone()));
            set(&mut s.r_list, r_list);
            set(&mut s.seeds, seeds);
            set(&mut s.cells_per_unit, cells_per_unit);
        }
        Command::Verify { level } => {
            if let Some(l) = level {
                cfg.verify.level = match l {
                    LevelArg::Fast => Level::Fast,
                    LevelArg::Full => Level::Full,
                };
            }
        }
    }
    Ok(cfg)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Cp { .. } => "cp",
        Command::Profile1d { .. } => "profile1d",
        Command::Cell { .. } => "cell",
        Command::Gamma { .. } => "gamma",
        Command::Periodic { .. } => "periodic",
        Command::Stochastic { .. } => "stochastic",
        Command::Verify { .. } => "verify",
        Command::ExportField { .. } => "export-field",
    }
}

fn cell_problem(cfg: &Config) -> Result<CellProblem> {
    let integrand = make_integrand(&cfg.integrand)?;
    let c = &cfg.cell;
    let h = c.rho / c.cells.max(1) as f64;
    Ok(CellProblem {
        x: c.x.clone().unwrap_or_else(|| vec![0.0; integrand.dim()]),
        delta_bc: Some(c.band_cells * h),
        solver: cfg.solver.clone(),
        ..CellProblem::new(integrand, &c.nu, c.rho, c.eps, c.cells)
    })
}

#[derive(Serialize)]
struct CpOutput<'a> {
    potential: &'a DoubleWell,
    p: f64,
    cp: f64,
    cu: f64,
}

#[derive(Serialize)]
struct ProfileOutput {
    cost: f64,
    cp: f64,
    iterations: usize,
    converged: bool,
    pg_norm: f64,
}

#[derive(Serialize)]
struct PeriodicOutput<'a> {
    run: &'a homogenize::HomogenizationRun,
    #[serde(skip_serializing_if = "Option::is_none")]
    polar: Option<&'a homogenize::AnisotropyScan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tiling: Option<&'a homogenize::TilingReport>,
}

/// Returns whether the task passed.
fn execute(cli: &Cli, cfg: &Config) -> Result<bool> {
    let name = command_name(&cli.command);
    let echo = serde_json::to_value(cfg)?;
    let mut run = Run::new(&cli.out, name, cfg.seed, echo)?;
    run.write("config.toml", cfg.to_toml()?.as_bytes())?;
    let mut passed = true;
    match &cli.command {
        Command::Cp { .. } => {
            let i = &cfg.integrand;
            let cp = run.timed("cp", || compute_cp(&i.potential, i.p, cfg.cp.quad_points))?;
            let cu = compute_cu(&i.potential, &Profile::default(), i.p)?;
            println!("{cp}");
            run.write_json(
                "cp.json",
                &CpOutput {
                    potential: &i.potential,
                    p: i.p,
                    cp,
                    cu,
                },
            )?;
        }
        Command::Profile1d { .. } => {
            let i = &cfg.integrand;
            let r = run.timed("profile1d", || {
                optimal_profile_1d(&i.potential, i.p, cfg.profile1d.grid, &cfg.solver)
            })?;
            let mut csv = String::from("t,value\n");
            for (t, v) in r.t.iter().zip(&r.values) {
                csv.push_str(&format!("{t},{v}\n"));
            }
            run.write("profile.csv", csv.as_bytes())?;
            let out = ProfileOutput {
                cost: r.cost,
                cp: compute_cp(&i.potential, i.p, 256)?,
                iterations: r.iterations,
                converged: r.converged,
                pg_norm: r.pg_norm,
            };
            run.write_json("profile.json", &out)?;
            println!("{}", r.cost);
        }
        Command::Cell { .. } => {
            let p = cell_problem(cfg)?;
            let r = run.timed("solve", || cell::solve_cell(&p))?;
            if let Some(f) = &r.field {
                run.write("field.csv", field_csv(f).as_bytes())?;
            }
            run.write_json("cell.json", &r)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::ExportField { format, .. } => {
            let p = cell_problem(cfg)?;
            let r = run.timed("solve", || cell::solve_cell(&p))?;
            let field = r.field.as_ref().context("solver returned no field")?;
            match format {
                FieldFormat::Bin => {
                    run.write("field.bin", &FieldDump::from_field(field, p.eps).to_bytes())?
                }
                FieldFormat::Csv => run.write("field.csv", field_csv(field).as_bytes())?,
            };
            run.write_json("cell.json", &r)?;
            println!("{}", r.density);
        }
        Command::Gamma { .. } => {
            let g = &cfg.gamma;
            let integrand = make_integrand(&cfg.integrand)?;
            let sweep = SweepConfig {
                resolution: g
                    .per_unit
                    .map(Resolution::PerUnit)
                    .unwrap_or(Resolution::Cells(g.cells)),
                solver: cfg.solver.clone(),
                richardson: g.richardson,
                ..SweepConfig::default()
            };
            let x = g.x.clone().unwrap_or_else(|| vec![0.0; integrand.dim()]);
            let est = run.timed("sweep", || {
                cell::estimate_density(&integrand, &x, &g.nu, &g.rho_list, &g.eps_list, &sweep)
            })?;
            run.write("gamma.csv", est.to_csv().as_bytes())?;
            run.write_json("gamma.json", &est)?;
            println!("f' = {}, f'' = {}", est.f_prime_est, est.f_dprime_est);
        }
        Command::Periodic { polar, .. } => {
            let p = &cfg.periodic;
            let integrand = make_integrand(&cfg.integrand)?;
            let hc = HomogenizeConfig {
                cells_per_unit: p.cells_per_unit,
                solver: cfg.solver.clone(),
                band_cells: p.band_cells,
                max_cells_per_axis: p.max_cells_per_axis,
            };
            let hom = run.timed("homogenize", || {
                homogenize::homogenize_direction(&integrand, &p.nu, &p.x_list, &p.r_list, &hc)
            })?;
            run.write("periodic.csv", hom.to_csv().as_bytes())?;
            let scan = if *polar {
                if integrand.dim() != 2 {
                    bail!("--polar scans planar directions and needs dim = 2");
                }
                let k = p.polar_directions.max(1);
                let nus: Vec<Vec<f64>> = (0..k)
                    .map(|j| planar_direction(180.0 * j as f64 / k as f64))
                    .collect();
                let r = p.polar_r.unwrap_or(*p.r_list.last().unwrap());
                let s = run.timed("polar", || {
                    homogenize::anisotropy_scan(&integrand, &nus, r, &hc)
                })?;
                run.write("polar.csv", s.polar_csv().as_bytes())?;
                Some(s)
            } else {
                None
            };
            let tiling = match p.tiling {
                Some([r, s]) => Some(run.timed("tiling", || {
                    homogenize::check_tiling_subadditivity(&integrand, &p.nu, r, s, false, &hc)
                })?),
                None => None,
            };
            if let Some(t) = &tiling {
                passed &= t.holds;
            }
            run.write_json(
                "periodic.json",
                &PeriodicOutput {
                    run: &hom,
                    polar: scan.as_ref(),
                    tiling: tiling.as_ref(),
                },
            )?;
            println!("f_hom ~ {} (x spread {})", hom.f_hom_est, hom.x_spread);
        }
        Command::Stochastic { .. } => {
            let s = &cfg.stochastic;
            let medium = RandomMedium {
                dim: cfg.integrand.dim,
                well: cfg.integrand.potential.clone(),
                p: cfg.integrand.p,
                values: s.values.clone(),
            };
            let sc = StochasticConfig {
                cells_per_unit: s.cells_per_unit,
                solver: cfg.solver.clone(),
                band_cells: s.band_cells,
                max_cells_per_axis: s.max_cells_per_axis,
            };
            let est = run.timed("ergodic", || {
                stochastic::ergodic_estimate(&medium, &s.nu, &s.r_list, s.seeds, cfg.seed, &sc)
            })?;
            run.write("samples.csv", est.samples_csv().as_bytes())?;
            run.write_json("stochastic.json", &est)?;
            for l in &est.levels {
                println!("r = {}: mean {} std {} (+- {})", l.r, l.mean, l.std, l.ci);
            }
        }
        Command::Verify { .. } => {
            let report = run.timed("verify", || verify::run_suite(cfg.verify.level, cfg.seed));
            for c in &report.checks {
                eprintln!("{:<36} {}", c.name, if c.passed { "pass" } else { "FAIL" });
            }
            run.write_json("verify.json", &report)?;
            passed = report.passed;
        }
    }
    run.finish()?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = resolve(&cli).and_then(|cfg| execute(&cli, &cfg));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("task completed with failing checks");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
