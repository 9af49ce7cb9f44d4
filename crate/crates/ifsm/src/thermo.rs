//! Entropy, topological pressure, equilibrium states, and convexity
//! diagnostics of the pressure functional.
//!
//! Two entropies are attached to a holonomic measure with marginal `ν`:
//! the average entropy `h_a = −Σ ν(i) Σ_θ ν_x(θ) ln(ν_x(θ)/μ(θ))`, a plain
//! sum over the disintegration, and the variational entropy
//! `h_v = inf_{g>0} ∫ ln(B_μ g / g) dν`, approached here by gradient
//! descent over `g = e^u` on grid functions. `h_a ≤ h_v ≤ 0` always; they
//! coincide when an optimal function exists, and the equilibrium pipeline
//! constructs exactly that case.
//!
//! The topological pressure of a positive potential is `ln ρ` of the
//! weighted operator. The equilibrium state is built constructively:
//! eigenfunction → normalization → eigenmeasure of the normalized adjoint
//! → holonomic lift. Its defect `|h_v + ∫ln ψ dν − P(ψ)|` is the one
//! number that ties the whole pipeline together.
//!
//! Integrals of `ln ψ` are evaluated against the holonomic measure itself,
//! `Σ w(i,θ)·ln w_θ(x_i)`: on branch-constant weights this is exact where
//! a marginal quadrature would smear cell boundaries, and for holonomic
//! measures the two forms agree up to the holonomy residual.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, DiscreteMeasure, Grid, InterpMode};
use crate::holonomy::{disintegrate, holonomic_lift, Disintegration, HolonomicMeasure};
use crate::model::{DensityFamily, ParameterSet, Potential, SystemSpec, Weighting};
use crate::operator::{assemble_transfer, TransferMatrix};
use crate::par;
use crate::spectral::{eigenmeasure, normalize_system, power_iteration};

/// Settings for the variational-entropy descent.
#[derive(Debug, Clone)]
pub struct OptimizerParams {
    /// Initial step; backtracking halves it, successful steps let it grow.
    pub step: f64,
    pub max_iter: usize,
    /// Stop when the relative decrease per step falls below this.
    pub rel_tol: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            step: 1.0,
            max_iter: 5000,
            rel_tol: 1e-10,
        }
    }
}

/// One logged step of the descent.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub value: f64,
    pub step: f64,
}

/// Result of minimizing `u ↦ ∫ ln(B e^u) dν − ∫ u dν`.
#[derive(Debug, Clone, Serialize)]
pub struct VariationalOutcome {
    /// Best value found; an upper bound on the true infimum.
    pub value: f64,
    pub iterations: usize,
    /// Logged at geometrically spaced iterations plus the last one.
    pub trace: Vec<TracePoint>,
    /// Minimizer values `u` on the grid.
    pub minimizer: Vec<f64>,
}

/// Gradient descent with backtracking from `u = 0` on the smooth convex
/// functional `F(u) = ∫ ln(B e^u) dν − ∫ u dν`.
///
/// `F(0) = ∫ ln B(1) dν`, which vanishes for normalized operators, so the
/// returned value is never positive in that case.
pub fn variational_infimum(
    b: &TransferMatrix,
    nu: &DiscreteMeasure,
    opt: &OptimizerParams,
) -> Result<VariationalOutcome> {
    if nu.grid() != b.grid() {
        return Err(Error::GridMismatch("measure grid differs from the operator grid"));
    }
    let m = b.len();
    let w = nu.weights();

    let objective = |u: &[f64], exp_u: &mut Vec<f64>, b_exp: &mut Vec<f64>| -> f64 {
        exp_u.clear();
        exp_u.extend(u.iter().map(|x| x.exp()));
        *b_exp = b.apply_values(exp_u);
        let mut total = 0.0;
        for i in 0..m {
            if w[i] > 0.0 {
                total += w[i] * (b_exp[i].ln() - u[i]);
            }
        }
        total
    };

    let mut u = vec![0.0f64; m];
    let mut exp_u = Vec::with_capacity(m);
    let mut b_exp = Vec::new();
    let mut value = objective(&u, &mut exp_u, &mut b_exp);
    if !value.is_finite() {
        return Err(Error::OptimizerDiverged("objective not finite at u = 0".into()));
    }

    let mut trace = vec![TracePoint {
        iteration: 0,
        value,
        step: opt.step,
    }];
    let mut step = opt.step;
    let mut iterations = 0;
    let mut density = vec![0.0f64; m];

    for iter in 1..=opt.max_iter {
        iterations = iter;
        // ∂F/∂u_j = e^{u_j} (Bᵀ d)_j − ν_j with d_i = ν_i / (B e^u)_i
        for i in 0..m {
            density[i] = if w[i] > 0.0 { w[i] / b_exp[i] } else { 0.0 };
        }
        let bt = b.apply_transpose_values(&density);
        let grad: Vec<f64> = (0..m).map(|j| exp_u[j] * bt[j] - w[j]).collect();
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
        if grad_sq == 0.0 {
            break;
        }

        let mut accepted = false;
        while step > 1e-18 {
            let candidate: Vec<f64> = u
                .iter()
                .zip(&grad)
                .map(|(ui, gi)| ui - step * gi)
                .collect();
            let cand_value = objective(&candidate, &mut exp_u, &mut b_exp);
            if cand_value.is_finite() && cand_value <= value - 1e-4 * step * grad_sq {
                let decrease = value - cand_value;
                u = candidate;
                let stalled = decrease <= opt.rel_tol * value.abs().max(1.0);
                value = cand_value;
                accepted = true;
                step = (step * 1.5).min(1e3);
                if stalled {
                    iterations = iter;
                    trace.push(TracePoint {
                        iteration: iter,
                        value,
                        step,
                    });
                    return Ok(VariationalOutcome {
                        value,
                        iterations,
                        trace,
                        minimizer: u,
                    });
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // no descent direction at float resolution
        }
        if iter.is_power_of_two() {
            trace.push(TracePoint {
                iteration: iter,
                value,
                step,
            });
        }
        if !value.is_finite() {
            return Err(Error::OptimizerDiverged(format!(
                "objective lost finiteness at iteration {iter}"
            )));
        }
    }

    // re-evaluate to leave exp_u/b_exp consistent with the final u
    let final_value = objective(&u, &mut exp_u, &mut b_exp);
    trace.push(TracePoint {
        iteration: iterations,
        value: final_value,
        step,
    });
    Ok(VariationalOutcome {
        value: final_value,
        iterations,
        trace,
        minimizer: u,
    })
}

/// Entropy numbers of one holonomic measure.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    /// Variational entropy (≤ 0 up to solver slack).
    pub h_v: f64,
    /// Average entropy; never exceeds `h_v` beyond rounding.
    pub h_a: f64,
    /// `h_v − h_a ≥ 0`.
    pub gap: f64,
    /// True when `h_v` came from the optimal-function identity instead of
    /// the descent.
    pub optimal_function_used: bool,
    pub optimizer_trace: Vec<TracePoint>,
    pub iterations: usize,
}

/// `h_a = −Σ_i ν(i) Σ_θ ν_x(θ) ln(ν_x(θ)/μ(θ))`.
///
/// Zero-mass conditional entries contribute nothing; positive conditional
/// mass on a zero a-priori weight is an absolute-continuity violation.
pub fn entropy_average(dis: &Disintegration, apriori: &ParameterSet) -> Result<f64> {
    if dis.n_params() != apriori.len() {
        return Err(Error::GridMismatch("parameter counts differ"));
    }
    let mut total = 0.0;
    for (i, &nui) in dis.marginal().weights().iter().enumerate() {
        if nui == 0.0 {
            continue;
        }
        let cond = dis.conditional(i).expect("positive marginal");
        for (theta, &c) in cond.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mu = apriori.weight(theta);
            if mu == 0.0 {
                return Err(Error::AbsoluteContinuityViolated {
                    label: apriori.label(theta).to_string(),
                    mass: c,
                });
            }
            total -= nui * c * (c / mu).ln();
        }
    }
    Ok(total)
}

/// Minimizes `F(g) = ∫ ln(B_μ g / g) dν` over positive grid functions for
/// the marginal of `measure`, with `B_μ` the unweighted operator of the
/// system (density ≡ 1). Returns the full entropy report; `h_v` is the
/// descent value, always an upper bound on the infimum.
pub fn entropy_variational(
    measure: &HolonomicMeasure,
    spec: &SystemSpec,
    opt: &OptimizerParams,
) -> Result<EntropyReport> {
    let dis = disintegrate(measure);
    let h_a = entropy_average(&dis, spec.params())?;
    let b_mu = unweighted_operator(spec, measure.grid(), InterpMode::Multilinear)?;
    let outcome = variational_infimum(&b_mu, dis.marginal(), opt)?;
    Ok(EntropyReport {
        h_v: outcome.value,
        h_a,
        gap: outcome.value - h_a,
        optimal_function_used: false,
        optimizer_trace: outcome.trace,
        iterations: outcome.iterations,
    })
}

/// `∫ ln(B_μ φ / φ) dν` for a positive function — the common value of both
/// entropies when `φ` is optimal.
pub fn entropy_closed_form(
    phi: &DiscreteFunction,
    nu: &DiscreteMeasure,
    b_mu: &TransferMatrix,
) -> Result<f64> {
    let min = phi.min_value();
    if min <= 0.0 {
        return Err(Error::NonPositiveFunction { min });
    }
    if nu.grid() != b_mu.grid() || phi.grid() != b_mu.grid() {
        return Err(Error::GridMismatch("grids differ"));
    }
    let b_phi = b_mu.apply_values(phi.values());
    let mut total = 0.0;
    for (i, &w) in nu.weights().iter().enumerate() {
        if w > 0.0 {
            total += w * (b_phi[i].ln() - phi.values()[i].ln());
        }
    }
    Ok(total)
}

/// The unweighted transfer operator `B_μ` (density ≡ 1) of a system.
pub fn unweighted_operator(
    spec: &SystemSpec,
    grid: &Grid,
    interp: InterpMode,
) -> Result<TransferMatrix> {
    let ones = DensityFamily::Expr(vec![
        crate::expr::ExpressionAst::constant(1.0);
        spec.n_params()
    ]);
    let unweighted = spec.with_weighting(Weighting::Density(ones))?;
    assemble_transfer(&unweighted, grid, interp)
}

/// Pressure and equilibrium diagnostics of one system.
#[derive(Debug, Clone, Serialize)]
pub struct ThermoReport {
    pub rho: f64,
    pub log_rho: f64,
    /// Topological pressure, `ln ρ` of the weighted operator.
    pub pressure: f64,
    pub h_v: f64,
    pub h_a: f64,
    /// `∫ ln ψ` against the equilibrium holonomic measure (branch-wise).
    pub log_psi_integral: f64,
    /// `h_v + ∫ ln ψ dν` of the constructed lift; never exceeds the
    /// pressure beyond tolerance.
    pub variational_lower_bound: f64,
    /// `|h_v + ∫ ln ψ dν − P(ψ)|`.
    pub equilibrium_defect: f64,
    /// Marginal of the equilibrium holonomic measure.
    pub marginal: DiscreteMeasure,
}

/// Builds the equilibrium state of a system: eigenfunction → normalization
/// → eigenmeasure of the normalized adjoint → holonomic lift.
///
/// The lift has the optimal function `h·ψ` by construction, so `h_v = h_a`
/// by the equality clause and the entropy is taken in closed form. `tol`
/// is the tolerance of the inner eigen solves; the equilibrium defect
/// scales with it plus the interpolation error of the grid.
pub fn equilibrium_state(
    spec: &SystemSpec,
    grid: &Grid,
    tol: f64,
) -> Result<(HolonomicMeasure, ThermoReport)> {
    let b = assemble_transfer(spec, grid, InterpMode::Multilinear)?;
    let s = power_iteration(&b, tol, 200_000)?;
    let normalized = normalize_system(spec, &s, grid)?;
    let bn = assemble_transfer(&normalized, grid, InterpMode::Multilinear)?;
    let em = eigenmeasure(&bn, tol, 500_000)?;
    let lift = holonomic_lift(&normalized, &bn, &em.measure)?.measure;

    let dis = disintegrate(&lift);
    let h_a = entropy_average(&dis, spec.params())?;

    // ∫ ln ψ against the holonomic measure: branch weights of the original
    // system enter exactly, with no quadrature across cell boundaries
    let n = spec.n_params();
    let mut log_psi_integral = 0.0;
    for i in 0..grid.len() {
        let x = grid.node(i);
        for theta in 0..n {
            let w = lift.weight(i, theta);
            if w == 0.0 {
                continue;
            }
            let branch = spec.weight(x, theta)?;
            if branch <= 0.0 {
                return Err(Error::NonPositiveFunction { min: branch });
            }
            log_psi_integral += w * branch.ln();
        }
    }

    let h_v = h_a; // optimal function h·ψ exists by construction
    let lower = h_v + log_psi_integral;
    let report = ThermoReport {
        rho: s.rho,
        log_rho: s.log_rho,
        pressure: s.log_rho,
        h_v,
        h_a,
        log_psi_integral,
        variational_lower_bound: lower,
        equilibrium_defect: (lower - s.log_rho).abs(),
        marginal: dis.marginal().clone(),
    };
    Ok((lift, report))
}

/// Topological pressure `P(ψ) = ln ρ` with the equilibrium lift as the
/// certified variational lower bound.
pub fn pressure(spec: &SystemSpec, grid: &Grid, tol: f64) -> Result<ThermoReport> {
    equilibrium_state(spec, grid, tol).map(|(_, report)| report)
}

/// Settings for probing the pressure functional `p(φ) = P(exp φ)`.
#[derive(Debug, Clone)]
pub struct ProbeParams {
    /// Positive, decreasing offsets for one-sided difference quotients.
    pub t_stencil: Vec<f64>,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams {
            t_stencil: vec![1e-2, 1e-3, 1e-4],
            solver_tol: 1e-13,
            max_iter: 200_000,
        }
    }
}

/// Probe outcome along one direction `η`.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionProbe {
    /// `p(φ + t η)` per stencil offset.
    pub values: Vec<f64>,
    /// `p(φ + (t_max/2) η)`.
    pub midpoint_value: f64,
    /// `(p(φ + t η) − p(φ)) / t` per stencil offset.
    pub quotients: Vec<f64>,
    /// Richardson extrapolation of the quotients: the one-sided derivative
    /// `d⁺p(φ)(η)` up to higher-order terms.
    pub d_plus: f64,
    /// `½(p(φ) + p(φ + t_max η)) − p(φ + (t_max/2) η)`; nonnegative by
    /// convexity up to solver noise.
    pub convexity_margin: f64,
    /// min over t of `p(φ+tη) − p(φ) − t·ν(η)` when a measure was supplied.
    pub subgradient_margin: Option<f64>,
}

/// Stencil probe of the pressure functional around `φ`.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub p_base: f64,
    pub t_stencil: Vec<f64>,
    pub directions: Vec<DirectionProbe>,
    pub min_convexity_margin: f64,
    pub min_subgradient_margin: Option<f64>,
}

/// Evaluates `p(φ) = P(exp φ)` for a grid function `φ`, reusing the maps
/// and a-priori weights of `skeleton` (its own weighting is ignored).
pub fn pressure_of_log_potential(
    skeleton: &SystemSpec,
    phi: &DiscreteFunction,
    solver_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let psi = phi.map(f64::exp)?;
    let spec = skeleton.with_weighting(Weighting::Potential(Potential::Tabulated(psi)))?;
    let b = assemble_transfer(&spec, phi.grid(), InterpMode::Multilinear)?;
    let s = power_iteration(&b, solver_tol, max_iter)?;
    Ok(s.log_rho)
}

/// Evaluates `p` at `φ + t η` over the stencil for every direction, checks
/// midpoint convexity on each probed segment, forms one-sided difference
/// quotients with a Richardson pass, and, when `nu` is given, tests the
/// subgradient inequality `p(φ+tη) ≥ p(φ) + t·ν(η)`.
///
/// Pressure evaluations at distinct stencil points are independent and run
/// in parallel.
pub fn pressure_functional_probe(
    skeleton: &SystemSpec,
    phi: &DiscreteFunction,
    directions: &[DiscreteFunction],
    params: &ProbeParams,
    nu: Option<&DiscreteMeasure>,
) -> Result<ProbeReport> {
    if params.t_stencil.is_empty() || params.t_stencil.iter().any(|&t| t <= 0.0) {
        return Err(Error::Invalid("stencil offsets must be positive".into()));
    }
    if params.t_stencil.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("stencil offsets must decrease".into()));
    }
    for eta in directions {
        if eta.grid() != phi.grid() {
            return Err(Error::GridMismatch("direction grid differs from the base"));
        }
    }
    if let Some(nu) = nu {
        if nu.grid() != phi.grid() {
            return Err(Error::GridMismatch("measure grid differs from the base"));
        }
    }

    let t_max = params.t_stencil[0];
    // flat job list: (direction, offset); offset index t_stencil.len() is
    // the midpoint t_max/2
    let offsets_per_dir = params.t_stencil.len() + 1;
    let jobs = directions.len() * offsets_per_dir;
    let shifted = |k: usize, t: f64| -> Result<f64> {
        let eta = &directions[k];
        let values: Vec<f64> = phi
            .values()
            .iter()
            .zip(eta.values())
            .map(|(a, b)| a + t * b)
            .collect();
        let f = DiscreteFunction::new(phi.grid().clone(), values)?;
        pressure_of_log_potential(skeleton, &f, params.solver_tol, params.max_iter)
    };

    let p_base = pressure_of_log_potential(skeleton, phi, params.solver_tol, params.max_iter)?;
    let evals: Vec<Result<f64>> = par::map_indexed(jobs, |j| {
        let k = j / offsets_per_dir;
        let o = j % offsets_per_dir;
        let t = if o < params.t_stencil.len() {
            params.t_stencil[o]
        } else {
            t_max / 2.0
        };
        shifted(k, t)
    });
    let mut values = Vec::with_capacity(jobs);
    for e in evals {
        values.push(e?);
    }

    let mut probes = Vec::with_capacity(directions.len());
    let mut min_convexity = f64::INFINITY;
    let mut min_subgradient: Option<f64> = None;
    for (k, eta) in directions.iter().enumerate() {
        let base = k * offsets_per_dir;
        let dir_values: Vec<f64> = values[base..base + params.t_stencil.len()].to_vec();
        let midpoint_value = values[base + params.t_stencil.len()];
        let quotients: Vec<f64> = dir_values
            .iter()
            .zip(&params.t_stencil)
            .map(|(p, t)| (p - p_base) / t)
            .collect();
        let d_plus = match quotients.len() {
            1 => quotients[0],
            _ => {
                // first-order Richardson on the two smallest offsets
                let n = quotients.len();
                let (t1, t0) = (params.t_stencil[n - 1], params.t_stencil[n - 2]);
                let r = t0 / t1;
                (r * quotients[n - 1] - quotients[n - 2]) / (r - 1.0)
            }
        };
        let convexity_margin = 0.5 * (p_base + dir_values[0]) - midpoint_value;
        min_convexity = min_convexity.min(convexity_margin);
        let subgradient_margin = match nu {
            Some(nu) => {
                let pairing = nu.integrate(eta)?;
                let margin = dir_values
                    .iter()
                    .zip(&params.t_stencil)
                    .map(|(p, t)| p - p_base - t * pairing)
                    .fold(f64::INFINITY, f64::min);
                min_subgradient = Some(min_subgradient.unwrap_or(f64::INFINITY).min(margin));
                Some(margin)
            }
            None => None,
        };
        probes.push(DirectionProbe {
            values: dir_values,
            midpoint_value,
            quotients,
            d_plus,
            convexity_margin,
            subgradient_margin,
        });
    }

    Ok(ProbeReport {
        p_base,
        t_stencil: params.t_stencil.clone(),
        directions: probes,
        min_convexity_margin: min_convexity,
        min_subgradient_margin: min_subgradient,
    })
}
