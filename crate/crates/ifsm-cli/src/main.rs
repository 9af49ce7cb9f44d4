//! Command-line front end: every subcommand wraps one library pipeline and
//! prints a pretty JSON report to stdout.
//!
//! Exit codes: 0 success, 2 validation/schema failure, 3 numeric
//! non-convergence, 4 I/O.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use ifsm::chaos::{elton_average, empirical_measure, pc_plot, sample_orbit};
use ifsm::config::{frequency_config, load_config};
use ifsm::grid::{DiscreteFunction, DiscreteMeasure, Grid, InterpMode};
use ifsm::holonomy::{empirical_holonomic, holonomic_lift, holonomy_residual};
use ifsm::model::{Point, SystemSpec, Weighting};
use ifsm::operator::{assemble_transfer, duality_residual};
use ifsm::pgm::{report_string, write_pgm, write_report};
use ifsm::spectral::{
    eigenmeasure, normalize_system, power_iteration, spectral_radius_gelfand,
};
use ifsm::thermo::{
    entropy_variational, equilibrium_state, pressure, pressure_functional_probe, OptimizerParams,
    ProbeParams,
};
use ifsm::{Error, Result};

#[derive(Parser)]
#[command(name = "ifsm", version, about = "Transfer-operator laboratory for iterated function systems with state-dependent weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing hypotheses of a system on a sample grid
    Validate {
        config: PathBuf,
        /// Nodes per axis for the sampling sweep
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Spectral radius and positive eigenfunction by power iteration
    Spectral {
        config: PathBuf,
        /// Nodes per axis (default: 256 in 1D, 33 in 2D)
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        /// Also write the full result (eigenfunction included) as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Invariant (eigen)measure of the adjoint Markov operator
    Invariant {
        config: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 500_000)]
        max_iter: usize,
        /// Write the full measure as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Entropy report of the equilibrium lift (variational descent + averages)
    Entropy {
        config: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Topological pressure with the certified variational lower bound
    Pressure {
        config: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Equilibrium state construction and its defect
    Equilibrium {
        config: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Convexity / derivative / subgradient probe of p(φ) = P(exp φ)
    ProbePressure {
        config: PathBuf,
        /// Number of random probe directions
        #[arg(long, default_value_t = 8)]
        directions: usize,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Chaos-game orbit, dyadic histogram and optional PC plot
    Chaos {
        config: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        seed: u64,
        /// Dyadic partition level M
        #[arg(long)]
        level: u32,
        /// Write the PC plot as an ASCII PGM
        #[arg(long)]
        pgm: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        burn_in: usize,
        /// Start point, e.g. `0.5,0.5` (default: box center)
        #[arg(long)]
        start: Option<String>,
        /// Pixel block size per cell in the PC plot
        #[arg(long, default_value_t = 16)]
        block: usize,
    },
    /// Symbolize a CSV value series into A/B/C/D returns
    Ingest {
        csv: PathBuf,
        /// Relative-change threshold (0.0001 = 0.01%)
        #[arg(long, default_value_t = ifsm::timeseries::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Column name or 0-based index for multi-column files
        #[arg(long)]
        column: Option<String>,
        /// Write a four-map config built from the observed frequencies
        #[arg(long)]
        emit_config: Option<PathBuf>,
    },
    /// Run the full invariant suite against a config
    Verify {
        config: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Json(_) => 4,
        Error::NoConvergence { .. }
        | Error::OptimizerDiverged(_)
        | Error::DegenerateOperator { .. }
        | Error::Overflow => 3,
        _ => 2,
    }
}

fn auto_grid(spec: &SystemSpec, requested: Option<usize>) -> usize {
    requested.unwrap_or(if spec.dim() == 1 { 256 } else { 33 })
}

fn make_grid(spec: &SystemSpec, requested: Option<usize>) -> Result<Grid> {
    Grid::uniform(spec.domain().clone(), auto_grid(spec, requested))
}

fn print_report<T: serde::Serialize>(report: &T) -> Result<()> {
    use std::io::Write;
    let text = report_string(report)?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()), // reader went away
        other => other.map_err(Error::from),
    }
}

fn parse_start(spec: &SystemSpec, text: Option<&str>) -> Result<Point> {
    match text {
        None => {
            let d = spec.domain();
            let mut p = [0.0; 2];
            for a in 0..spec.dim() {
                p[a] = 0.5 * (d.lower(a) + d.upper(a));
            }
            Ok(p)
        }
        Some(text) => {
            let parts: Vec<&str> = text.split(',').collect();
            if parts.len() != spec.dim() {
                return Err(Error::Invalid(format!(
                    "start point has {} coordinates for dimension {}",
                    parts.len(),
                    spec.dim()
                )));
            }
            let mut p = [0.0; 2];
            for (a, part) in parts.iter().enumerate() {
                p[a] = part
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("bad coordinate `{part}`")))?;
            }
            Ok(p)
        }
    }
}

/// Smooth seeded probe directions: sine + affine combinations.
fn random_directions(grid: &Grid, count: usize, seed: u64) -> Vec<DiscreteFunction> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = rng.gen_range(-1.0..1.0);
            let b = rng.gen_range(-1.0..1.0);
            let c = rng.gen_range(-1.0..1.0);
            let k = rng.gen_range(1..4) as f64;
            DiscreteFunction::from_fn(grid.clone(), |p| {
                a * (k * std::f64::consts::PI * p[0]).sin() + b * p[0] + c * p[1]
            })
            .expect("finite values")
        })
        .collect()
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Validate { config, grid } => {
            let spec = ifsm::config::parse_config_str(&std::fs::read_to_string(config)?)?;
            let report = spec.validate(grid)?;
            print_report(&report)?;
            Ok(0)
        }

        Command::Spectral {
            config,
            grid,
            tol,
            max_iter,
            out,
        } => {
            let spec = load_config(config)?;
            let grid = make_grid(&spec, grid)?;
            let b = assemble_transfer(&spec, &grid, InterpMode::Multilinear)?;
            let s = power_iteration(&b, tol, max_iter)?;
            let gelfand = spectral_radius_gelfand(&b, 50)?;
            let last = gelfand.last().unwrap();
            print_report(&json!({
                "rho": s.rho,
                "log_rho": s.log_rho,
                "iterations": s.iterations,
                "residual": s.residual,
                "eigenfunction_min": s.eigenfunction.min_value(),
                "eigenfunction_max": s.eigenfunction.max_value(),
                "growth_estimate_n50": last.estimate,
                "growth_spread_n50": last.spread,
            }))?;
            if let Some(path) = out {
                write_report(&s, path)?;
            }
            Ok(0)
        }

        Command::Invariant {
            config,
            grid,
            tol,
            max_iter,
            out,
        } => {
            let spec = load_config(config)?;
            let grid = make_grid(&spec, grid)?;
            let b = assemble_transfer(&spec, &grid, InterpMode::Multilinear)?;
            let em = eigenmeasure(&b, tol, max_iter)?;
            let mut mean = [0.0f64; 2];
            for i in 0..grid.len() {
                let p = grid.node(i);
                for a in 0..spec.dim() {
                    mean[a] += p[a] * em.measure.weights()[i];
                }
            }
            print_report(&json!({
                "rho_star": em.rho_star,
                "iterations": em.iterations,
                "residual": em.residual,
                "mass": em.measure.mass(),
                "mean": &mean[..spec.dim()],
            }))?;
            if let Some(path) = out {
                write_report(&em, path)?;
            }
            Ok(0)
        }

        Command::Entropy { config, grid, tol } => {
            let spec = load_config(config)?;
            let grid = make_grid(&spec, grid)?;
            let (lift, _) = equilibrium_state(&spec, &grid, tol)?;
            let report = entropy_variational(&lift, &spec, &OptimizerParams::default())?;
            print_report(&report)?;
            Ok(0)
        }

        Command::Pressure { config, grid, tol } => {
            let spec = load_config(config)?;
            let grid = make_grid(&spec, grid)?;
            let report = pressure(&spec, &grid, tol)?;
            print_report(&report)?;
            Ok(0)
        }

        Command::Equilibrium { config, grid, tol } => {
            let spec = load_config(config)?;
            let grid = make_grid(&spec, grid)?;
            let (_, report) = equilibrium_state(&spec, &grid, tol)?;
            print_report(&report)?;
            Ok(0)
        }

        Command::ProbePressure {
            config,
            directions,
            grid,
            tol,
            seed,
        } => {
            let spec = load_config(config)?;
            let grid = make_grid(&spec, grid)?;
            // probe around the system's own log-potential when it has one,
            // otherwise around 0
            let phi = match spec.weighting() {
                Weighting::Potential(psi) => {
                    let mut values = Vec::with_capacity(grid.len());
                    for i in 0..grid.len() {
                        values.push(psi.eval(grid.node(i))?.ln());
                    }
                    DiscreteFunction::new(grid.clone(), values)?
                }
                _ => DiscreteFunction::constant(grid.clone(), 0.0),
            };
            let dirs = random_directions(&grid, directions, seed);
            let (_, eq) = equilibrium_state(&spec, &grid, tol)?;
            let params = ProbeParams {
                solver_tol: tol,
                ..Default::default()
            };
            let report =
                pressure_functional_probe(&spec, &phi, &dirs, &params, Some(&eq.marginal))?;
            print_report(&report)?;
            Ok(0)
        }

        Command::Chaos {
            config,
            steps,
            seed,
            level,
            pgm,
            burn_in,
            start,
            block,
        } => {
            let spec = load_config(config)?;
            let start = parse_start(&spec, start.as_deref())?;
            let orbit = sample_orbit(&spec, start, steps, seed)?;
            let hist = empirical_measure(&orbit, level, burn_in)?;
            let mut label_counts = vec![0usize; spec.n_params()];
            for &l in orbit.labels() {
                label_counts[l as usize] += 1;
            }
            let frequencies: Vec<f64> = label_counts
                .iter()
                .map(|c| *c as f64 / steps as f64)
                .collect();
            let max_cell = hist.weights().iter().cloned().fold(0.0f64, f64::max);
            if let Some(path) = pgm {
                let image = pc_plot(&hist, block)?;
                write_pgm(&image, path)?;
            }
            print_report(&json!({
                "steps": steps,
                "seed": seed,
                "level": level,
                "burn_in": burn_in,
                "start": &start[..spec.dim()],
                "clamped_steps": orbit.clamped_steps(),
                "symbol_frequencies": spec
                    .params()
                    .labels()
                    .iter()
                    .zip(&frequencies)
                    .collect::<Vec<_>>(),
                "cells": hist.weights(),
                "max_cell_weight": max_cell,
            }))?;
            Ok(0)
        }

        Command::Ingest {
            csv,
            threshold,
            column,
            emit_config,
        } => {
            let series = ifsm::timeseries::ingest_timeseries(&csv, threshold, column.as_deref())?;
            if let Some(path) = emit_config {
                let cfg = frequency_config(series.frequencies);
                std::fs::write(path, serde_json::to_string_pretty(&cfg)?)?;
            }
            print_report(&json!({
                "source_len": series.source_len,
                "symbols": series.symbols.len(),
                "threshold": series.threshold,
                "frequencies": {
                    "A": series.frequencies[0],
                    "B": series.frequencies[1],
                    "C": series.frequencies[2],
                    "D": series.frequencies[3],
                },
            }))?;
            Ok(0)
        }

        Command::Verify {
            config,
            grid,
            tol,
            seed,
        } => verify(config, grid, tol, seed),
    }
}

fn verify(config: PathBuf, grid: Option<usize>, tol: f64, seed: u64) -> Result<i32> {
    use rand::{Rng, SeedableRng};
    let spec = load_config(&config)?;
    let grid = make_grid(&spec, grid)?;
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{}: {name} ({detail})", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    let report = spec.validate(grid.shape()[0])?;
    check(
        "hypotheses",
        report.passed,
        format!("inf q {:.4}, sup q {:.4}", report.inf_q, report.sup_q),
    );

    let b = assemble_transfer(&spec, &grid, InterpMode::Multilinear)?;
    let worst_row = (0..grid.len()).fold(0.0f64, |acc, i| {
        let q = spec.q_mass(grid.node(i)).unwrap_or(f64::NAN);
        acc.max((b.row_masses()[i] - q).abs())
    });
    check(
        "partition of unity",
        worst_row <= 1e-10,
        format!("max |B·1 − q| = {worst_row:.2e}"),
    );

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst_duality = 0.0f64;
    for _ in 0..20 {
        let f = DiscreteFunction::new(
            grid.clone(),
            (0..grid.len()).map(|_| rng.gen::<f64>()).collect(),
        )?;
        let m = DiscreteMeasure::new(
            grid.clone(),
            (0..grid.len()).map(|_| rng.gen::<f64>()).collect(),
        )?
        .normalized()?;
        worst_duality = worst_duality.max(duality_residual(&b, &f, &m)?);
    }
    check(
        "adjoint duality",
        worst_duality < 1e-12,
        format!("max residual {worst_duality:.2e}"),
    );

    let s = power_iteration(&b, tol, 200_000)?;
    let gelfand = spectral_radius_gelfand(&b, 50)?;
    let last = gelfand.last().unwrap();
    let agree = (last.estimate - s.log_rho).abs() <= last.spread + 1e-6;
    check(
        "growth vs power iteration",
        agree,
        format!(
            "|est − ln ρ| = {:.2e}, spread {:.2e}",
            (last.estimate - s.log_rho).abs(),
            last.spread
        ),
    );

    let em = eigenmeasure(&b, tol, 500_000)?;
    check(
        "eigenmeasure bounds",
        report.inf_q <= em.rho_star + 1e-12
            && em.rho_star <= report.sup_q + 1e-12
            && em.rho_star <= s.rho + 1e-6,
        format!("ρ* = {:.6}, ρ = {:.6}", em.rho_star, s.rho),
    );

    let normalized = normalize_system(&spec, &s, &grid)?;
    let norm_report = normalized.validate(grid.shape()[0])?;
    check(
        "normalization",
        (norm_report.sup_q - 1.0).abs() < 1e-8 && (norm_report.inf_q - 1.0).abs() < 1e-8,
        format!(
            "q' ∈ [{:.10}, {:.10}]",
            norm_report.inf_q, norm_report.sup_q
        ),
    );

    let bn = assemble_transfer(&normalized, &grid, InterpMode::Multilinear)?;
    let emn = eigenmeasure(&bn, tol, 500_000)?;
    let lift = holonomic_lift(&normalized, &bn, &emn.measure)?;
    let fns = vec![
        DiscreteFunction::from_fn(grid.clone(), |p| p[0] + 0.3 * p[1])?,
        DiscreteFunction::from_fn(grid.clone(), |p| (2.0 * p[0]).cos())?,
    ];
    let residual = holonomy_residual(&lift.measure, &normalized, &fns)?;
    check(
        "holonomic lift",
        lift.invariance_gap < 1e-8 && residual < 1e-6,
        format!(
            "invariance gap {:.2e}, residual {residual:.2e}",
            lift.invariance_gap
        ),
    );

    let entropy = entropy_variational(&lift.measure, &normalized, &OptimizerParams::default())?;
    check(
        "entropy inequalities",
        entropy.h_a <= entropy.h_v + 1e-6 && entropy.h_v <= 1e-9,
        format!("h_a = {:.6}, h_v = {:.6}", entropy.h_a, entropy.h_v),
    );

    let (_, thermo) = equilibrium_state(&spec, &grid, tol)?;
    check(
        "equilibrium defect",
        thermo.equilibrium_defect <= 1e-3
            && thermo.variational_lower_bound <= thermo.pressure + 1e-6,
        format!(
            "defect {:.2e}, P = {:.6}",
            thermo.equilibrium_defect, thermo.pressure
        ),
    );

    let start = parse_start(&spec, None)?;
    let orbit = sample_orbit(&spec, start, 10_000, seed)?;
    let measure = empirical_holonomic(&orbit, &grid, spec.n_params())?;
    let mut telescoping_ok = true;
    let mut worst_ratio = 0.0f64;
    for f in &fns {
        let r = holonomy_residual(&measure, &spec, std::slice::from_ref(f))?;
        let bound = 2.0 * f.sup_norm() / orbit.len() as f64;
        worst_ratio = worst_ratio.max(r / bound);
        telescoping_ok &= r <= bound * (1.0 + 1e-12) + 1e-15;
    }
    check(
        "empirical telescoping",
        telescoping_ok,
        format!("max residual/bound {worst_ratio:.3}"),
    );

    let orbit_b = sample_orbit(&spec, start, 10_000, seed)?;
    check("determinism", orbit == orbit_b, "orbits bit-identical".into());

    // the ergodic theorem pairs orbits of the normalized system with the
    // eigenmeasure of its adjoint
    let norm_orbit = sample_orbit(&normalized, start, 50_000, seed)?;
    let trace = elton_average(&norm_orbit, &fns[0], &emn.measure)?;
    check(
        "ergodic average",
        trace.final_gap < 0.05,
        format!("gap {:.2e} at N = {}", trace.final_gap, norm_orbit.len()),
    );

    if failures == 0 {
        println!("all checks passed");
        Ok(0)
    } else {
        println!("{failures} check(s) failed");
        Ok(2)
    }
}
