//! Spectral radius, positive eigenfunctions, eigenmeasures, normalization.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, DiscreteMeasure, Grid};
use crate::model::{DensityFamily, SystemSpec, Weighting};
use crate::operator::TransferMatrix;

/// One step of the iterate-growth estimate of `ln ρ`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GelfandStep {
    pub n: usize,
    /// `(1/n) ln max_i (Bⁿ1)(x_i)`
    pub estimate: f64,
    /// `(1/n) (ln max_i − ln min_i) (Bⁿ1)(x_i)`; decays like C/n when a
    /// positive eigenfunction exists
    pub spread: f64,
}

/// Estimates `ln ρ` from the growth of `Bⁿ1`, renormalizing each step so
/// the iterate can neither overflow nor underflow.
pub fn spectral_radius_gelfand(b: &TransferMatrix, n_max: usize) -> Result<Vec<GelfandStep>> {
    if b.row_masses().iter().any(|&m| m <= 0.0) {
        return Err(Error::Overflow);
    }
    let m = b.len();
    let mut v = vec![1.0f64; m];
    let mut log_scale = 0.0f64; // ln of the running max of Bⁿ1
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        v = b.apply_values(&v);
        let vmax = v.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        let vmin = v.iter().fold(f64::INFINITY, |a, &x| a.min(x));
        if vmin <= 0.0 || !vmax.is_finite() {
            return Err(Error::Overflow);
        }
        log_scale += vmax.ln();
        let inv = 1.0 / vmax;
        v.iter_mut().for_each(|x| *x *= inv);
        out.push(GelfandStep {
            n,
            estimate: log_scale / n as f64,
            spread: -(vmin / vmax).ln() / n as f64,
        });
    }
    Ok(out)
}

/// Dominant eigenpair of the transfer matrix.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralResult {
    pub rho: f64,
    pub log_rho: f64,
    /// Strictly positive, sup-normalized to 1.
    pub eigenfunction: DiscreteFunction,
    pub iterations: usize,
    /// `‖Bh − ρh‖∞` at return.
    pub residual: f64,
}

/// Power iteration from the constant function, renormalized by the sup norm
/// each step; `ρ` is read off as `‖Bh‖∞` once the function has settled.
///
/// Convergence is detected on the function, not the value, and an
/// oscillating iterate (peripheral spectrum) is reported as
/// [`Error::NoConvergence`] rather than averaged away.
pub fn power_iteration(b: &TransferMatrix, tol: f64, max_iter: usize) -> Result<SpectralResult> {
    assert!(tol > 0.0, "tolerance must be positive");
    if let Some(node) = b.row_masses().iter().position(|&m| m <= 0.0) {
        return Err(Error::DegenerateOperator { node });
    }
    let m = b.len();
    let mut h = vec![1.0f64; m];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let w = b.apply_values(&h);
        let rho = w.iter().fold(0.0f64, |a, &x| a.max(x));
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::DegenerateOperator { node: 0 });
        }
        residual = w
            .iter()
            .zip(&h)
            .fold(0.0f64, |a, (wi, hi)| a.max((wi - rho * hi).abs()));
        if residual <= tol * rho {
            let min = h.iter().fold(f64::INFINITY, |a, &x| a.min(x));
            if min <= 0.0 {
                return Err(Error::NonPositiveEigenfunction { min });
            }
            return Ok(SpectralResult {
                rho,
                log_rho: rho.ln(),
                eigenfunction: DiscreteFunction::new(b.grid().clone(), h)?,
                iterations: iter,
                residual,
            });
        }
        let inv = 1.0 / rho;
        h = w;
        h.iter_mut().for_each(|x| *x *= inv);
    }
    Err(Error::NoConvergence {
        stage: "power_iteration",
        iterations: max_iter,
        residual,
    })
}

/// Fixed point of the normalized adjoint iteration.
#[derive(Debug, Clone, Serialize)]
pub struct EigenmeasureResult {
    /// Mass of `Bᵀν` at the fixed point; lies between `inf q` and `sup q`
    /// and never exceeds the spectral radius (up to tolerance).
    pub rho_star: f64,
    /// Probability measure with `Bᵀν = ρ*ν`.
    pub measure: DiscreteMeasure,
    pub iterations: usize,
    /// `‖Bᵀν − ρ*ν‖₁` at return.
    pub residual: f64,
}

/// Iterates `γ ↦ Bᵀγ / mass(Bᵀγ)` from the uniform probability until the
/// total-variation step falls below `tol`.
pub fn eigenmeasure(b: &TransferMatrix, tol: f64, max_iter: usize) -> Result<EigenmeasureResult> {
    assert!(tol > 0.0, "tolerance must be positive");
    let m = b.len();
    let mut gamma = vec![1.0 / m as f64; m];
    let mut step = f64::INFINITY;
    for iter in 1..=max_iter {
        let w = b.apply_transpose_values(&gamma);
        let mass: f64 = w.iter().sum();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::DegenerateOperator { node: 0 });
        }
        let next: Vec<f64> = w.iter().map(|x| x / mass).collect();
        step = next
            .iter()
            .zip(&gamma)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
        gamma = next;
        if step <= tol {
            let w = b.apply_transpose_values(&gamma);
            let rho_star: f64 = w.iter().sum();
            let residual = w
                .iter()
                .zip(&gamma)
                .map(|(wi, gi)| (wi - rho_star * gi).abs())
                .sum::<f64>();
            return Ok(EigenmeasureResult {
                rho_star,
                measure: DiscreteMeasure::new(b.grid().clone(), gamma)?,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        stage: "eigenmeasure",
        iterations: max_iter,
        residual: step,
    })
}

/// Rescales the branch weights by the eigenpair, `J'(x,θ) =
/// J(x,θ)·h(τ_θ(x)) / (ρ·h(x))`, yielding a system whose q-mass is 1 at
/// every grid node up to the eigen residual.
///
/// The result carries a tabulated density on `grid`; between nodes it is
/// interpolated multilinearly.
pub fn normalize_system(spec: &SystemSpec, s: &SpectralResult, grid: &Grid) -> Result<SystemSpec> {
    if s.eigenfunction.grid() != grid {
        return Err(Error::GridMismatch("eigenfunction lives on a different grid"));
    }
    let min = s.eigenfunction.min_value();
    if min <= 0.0 {
        return Err(Error::NonPositiveEigenfunction { min });
    }
    let n = spec.n_params();
    let h = &s.eigenfunction;
    let mut values = vec![0.0f64; grid.len() * n];
    for i in 0..grid.len() {
        let x = grid.node(i);
        let hx = h.values()[i];
        for theta in 0..n {
            let image = spec.map_image(theta, x)?;
            let w = spec.weight(x, theta)?;
            values[i * n + theta] = w * h.interpolate(image)? / (s.rho * hx);
        }
    }
    spec.with_weighting(Weighting::Density(DensityFamily::Tabulated {
        grid: grid.clone(),
        values,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expression, ExpressionAst};
    use crate::grid::InterpMode;
    use crate::model::{AffineMap, DomainBox, MapFamily, ParameterSet, Potential};
    use crate::operator::assemble_transfer;

    fn binary_maps() -> MapFamily {
        MapFamily::Affine(vec![
            AffineMap::new_1d(0.5, 0.0),
            AffineMap::new_1d(0.5, 0.5),
        ])
    }

    fn e1() -> SystemSpec {
        SystemSpec::new(
            DomainBox::unit_interval(),
            ParameterSet::uniform(vec!["0".into(), "1".into()]).unwrap(),
            binary_maps(),
            Weighting::Density(DensityFamily::Expr(vec![ExpressionAst::constant(1.0); 2])),
        )
        .unwrap()
    }

    fn e2(beta: f64) -> SystemSpec {
        let psi = parse_expression(&format!("exp({beta} * x)")).unwrap();
        e1().with_weighting(Weighting::Potential(Potential::Expr(psi)))
            .unwrap()
    }

    fn operator(spec: &SystemSpec, m: usize) -> TransferMatrix {
        let grid = Grid::uniform(spec.domain().clone(), m).unwrap();
        assemble_transfer(spec, &grid, InterpMode::Multilinear).unwrap()
    }

    #[test]
    fn normalized_system_has_unit_radius() {
        let b = operator(&e1(), 64);
        let s = power_iteration(&b, 1e-12, 1000).unwrap();
        assert!((s.rho - 1.0).abs() < 1e-12);
        for v in s.eigenfunction.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        for step in spectral_radius_gelfand(&b, 20).unwrap() {
            assert!(step.estimate.abs() < 1e-12);
            assert!(step.spread.abs() < 1e-12);
        }
    }

    #[test]
    fn constant_weight_estimates_are_exact() {
        let c = 0.37;
        let spec = e1()
            .with_weighting(Weighting::Density(DensityFamily::Expr(vec![
                ExpressionAst::constant(c);
                2
            ])))
            .unwrap();
        let b = operator(&spec, 32);
        for step in spectral_radius_gelfand(&b, 25).unwrap() {
            assert!((step.estimate - c.ln()).abs() < 1e-12, "n={}", step.n);
            assert!(step.spread < 1e-12);
        }
    }

    #[test]
    fn exponential_closed_form_eigenpair() {
        // substituting h = e^{βx} into the operator gives ρ = (1 + e^β)/2
        for beta in [1.0, 2.0] {
            let b = operator(&e2(beta), 512);
            let s = power_iteration(&b, 1e-13, 10_000).unwrap();
            let rho_exact = (1.0 + beta.exp()) / 2.0;
            assert!(
                (s.rho - rho_exact).abs() < 1e-4,
                "beta={beta}: {} vs {rho_exact}",
                s.rho
            );
            // eigenfunction is proportional to e^{βx}
            let grid = b.grid();
            let scale = s.eigenfunction.values()[grid.len() - 1]; // value at x = 1
            for i in 0..grid.len() {
                let x = grid.node(i)[0];
                let expected = (beta * x).exp() / beta.exp() * scale;
                assert!(
                    (s.eigenfunction.values()[i] - expected).abs() < 1e-4,
                    "beta={beta} x={x}"
                );
            }
        }
    }

    #[test]
    fn gelfand_tracks_power_iteration() {
        let b = operator(&e2(1.0), 256);
        let s = power_iteration(&b, 1e-12, 10_000).unwrap();
        let steps = spectral_radius_gelfand(&b, 200).unwrap();
        let last = steps.last().unwrap();
        assert!((last.estimate - s.log_rho).abs() <= last.spread + 1e-10);
        assert!((last.estimate - ((1.0 + 1.0f64.exp()) / 2.0).ln()).abs() < 1e-2);

        // n · spread stays bounded by twice the log-oscillation of h
        let lo = s.eigenfunction.min_value().ln();
        let hi = s.eigenfunction.max_value().ln();
        let bound = 2.0 * (hi - lo) + 1e-6;
        for step in steps.iter().skip(9) {
            assert!(
                step.n as f64 * step.spread <= bound,
                "n={} n*spread={} bound={bound}",
                step.n,
                step.n as f64 * step.spread
            );
        }
    }

    #[test]
    fn eigenmeasure_of_uniform_system_is_symmetric() {
        // both maps halve the interval with equal weight, so the fixed
        // point is flip-symmetric and its mean is exactly 1/2
        let b = operator(&e1(), 128);
        let r = eigenmeasure(&b, 1e-13, 100_000).unwrap();
        assert!((r.rho_star - 1.0).abs() < 1e-10);
        assert!(r.measure.is_probability());
        let grid = b.grid();
        let mean: f64 = (0..grid.len())
            .map(|i| grid.node(i)[0] * r.measure.weights()[i])
            .sum();
        assert!((mean - 0.5).abs() < 1e-6, "mean {mean}");
    }

    #[test]
    fn eigenmeasure_bounds_hold() {
        let spec = e2(1.0);
        let b = operator(&spec, 256);
        let report = spec.validate(256).unwrap();
        let r = eigenmeasure(&b, 1e-12, 100_000).unwrap();
        let s = power_iteration(&b, 1e-12, 10_000).unwrap();
        assert!(report.inf_q <= r.rho_star + 1e-12);
        assert!(r.rho_star <= report.sup_q + 1e-12);
        assert!(r.rho_star <= s.rho + 1e-6);
    }

    #[test]
    fn normalization_and_idempotence() {
        let spec = e2(1.0);
        let grid = Grid::uniform(spec.domain().clone(), 256).unwrap();
        let b = assemble_transfer(&spec, &grid, InterpMode::Multilinear).unwrap();
        let s = power_iteration(&b, 1e-13, 10_000).unwrap();
        let normalized = normalize_system(&spec, &s, &grid).unwrap();
        let report = normalized.validate(256).unwrap();
        assert!((report.sup_q - 1.0).abs() < 1e-8);
        assert!((report.inf_q - 1.0).abs() < 1e-8);

        // normalizing again barely changes the table
        let b2 = assemble_transfer(&normalized, &grid, InterpMode::Multilinear).unwrap();
        let s2 = power_iteration(&b2, 1e-13, 10_000).unwrap();
        let twice = normalize_system(&normalized, &s2, &grid).unwrap();
        let (first, second) = match (normalized.weighting(), twice.weighting()) {
            (
                Weighting::Density(DensityFamily::Tabulated { values: a, .. }),
                Weighting::Density(DensityFamily::Tabulated { values: b, .. }),
            ) => (a, b),
            _ => panic!("expected tabulated densities"),
        };
        for (a, b) in first.iter().zip(second) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
        }
    }

    #[test]
    fn already_normalized_is_fixed() {
        let spec = e1();
        let grid = Grid::uniform(spec.domain().clone(), 64).unwrap();
        let b = assemble_transfer(&spec, &grid, InterpMode::Multilinear).unwrap();
        let s = power_iteration(&b, 1e-12, 1000).unwrap();
        let normalized = normalize_system(&spec, &s, &grid).unwrap();
        match normalized.weighting() {
            Weighting::Density(DensityFamily::Tabulated { values, .. }) => {
                for v in values {
                    assert!((v - 1.0).abs() < 1e-11);
                }
            }
            _ => panic!("expected tabulated density"),
        }
    }

    #[test]
    fn oscillating_operator_reports_no_convergence() {
        // x ↦ 1 − x with weight 1 + x: B² is a positive diagonal, so the
        // peripheral spectrum is ±ρ and the iterate cycles with period 2
        let spec = SystemSpec::new(
            DomainBox::unit_interval(),
            ParameterSet::uniform(vec!["flip".into()]).unwrap(),
            MapFamily::Affine(vec![AffineMap::new_1d(-1.0, 1.0)]),
            Weighting::Density(DensityFamily::Expr(vec![
                parse_expression("1 + x").unwrap()
            ])),
        )
        .unwrap();
        let b = operator(&spec, 65);
        match power_iteration(&b, 1e-10, 400) {
            Err(Error::NoConvergence { stage, .. }) => assert_eq!(stage, "power_iteration"),
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_mass_row_is_degenerate() {
        // density vanishing at x = 0 zeroes the first row
        let spec = e1()
            .with_weighting(Weighting::Density(DensityFamily::Expr(vec![
                parse_expression("x").unwrap(),
                parse_expression("x").unwrap(),
            ])))
            .unwrap();
        let b = operator(&spec, 16);
        assert!(matches!(
            power_iteration(&b, 1e-10, 100),
            Err(Error::DegenerateOperator { node: 0 })
        ));
        assert!(matches!(
            spectral_radius_gelfand(&b, 10),
            Err(Error::Overflow)
        ));
    }
}
