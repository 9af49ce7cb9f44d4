//! Measures on state × parameter space whose branch differentials vanish.
//!
//! A probability on node × branch pairs is holonomic when
//! `Σ w(i,θ)·(f(τ_θ(x_i)) − f(x_i))` vanishes for every test function —
//! the system analogue of invariance under a single map. Lifts of invariant
//! measures are holonomic up to the eigen residual; empirical orbit
//! averages are holonomic up to the telescoping bound `2‖f‖∞/N`.
//!
//! Empirical measures keep their atoms alongside the node-splatted weights:
//! residuals are evaluated on the atoms, where the telescoping identity is
//! exact, while marginals and disintegrations use the node weights.

use crate::chaos::OrbitRecord;
use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, DiscreteMeasure, Grid, InterpMode};
use crate::model::{Point, SystemSpec};
use crate::operator::TransferMatrix;
use crate::par;

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Probability on grid nodes × branch labels.
#[derive(Debug, Clone, PartialEq)]
pub struct HolonomicMeasure {
    grid: Grid,
    n_params: usize,
    /// node-major: `weights[i * n_params + theta]`
    weights: Vec<f64>,
    /// `(point, branch, weight)` atoms for empirical measures
    atoms: Option<Vec<(Point, u32, f64)>>,
}

impl HolonomicMeasure {
    /// Wraps raw nonnegative weights, rescaling to total mass one.
    pub fn from_weights(grid: Grid, n_params: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() * n_params {
            return Err(Error::GridMismatch("weight table is not nodes × parameters"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid(
                "holonomic weights must be finite and nonnegative".into(),
            ));
        }
        let mass = kahan_sum(weights.iter().copied());
        if mass <= 0.0 {
            return Err(Error::Invalid("holonomic measure has zero mass".into()));
        }
        let weights = weights.iter().map(|w| w / mass).collect();
        Ok(HolonomicMeasure {
            grid,
            n_params,
            weights,
            atoms: None,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, node: usize, theta: usize) -> f64 {
        self.weights[node * self.n_params + theta]
    }

    pub fn mass(&self) -> f64 {
        kahan_sum(self.weights.iter().copied())
    }

    /// Atoms backing an empirical measure, if any.
    pub fn atoms(&self) -> Option<&[(Point, u32, f64)]> {
        self.atoms.as_deref()
    }

    /// Marginal on the state space: `ν(i) = Σ_θ w(i,θ)`.
    pub fn marginal(&self) -> DiscreteMeasure {
        let nu: Vec<f64> = (0..self.grid.len())
            .map(|i| {
                self.weights[i * self.n_params..(i + 1) * self.n_params]
                    .iter()
                    .sum()
            })
            .collect();
        DiscreteMeasure::new(self.grid.clone(), nu).expect("marginal weights are nonnegative")
    }

    /// Convex combination `λ·self + (1−λ)·other`. Atoms are kept when both
    /// sides carry them.
    pub fn blend(&self, other: &HolonomicMeasure, lambda: f64) -> Result<HolonomicMeasure> {
        if self.grid != other.grid || self.n_params != other.n_params {
            return Err(Error::GridMismatch("holonomic measures live on different grids"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Invalid("blend weight must lie in [0, 1]".into()));
        }
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        let atoms = match (&self.atoms, &other.atoms) {
            (Some(a), Some(b)) => {
                let mut merged = Vec::with_capacity(a.len() + b.len());
                merged.extend(a.iter().map(|&(p, t, w)| (p, t, lambda * w)));
                merged.extend(b.iter().map(|&(p, t, w)| (p, t, (1.0 - lambda) * w)));
                Some(merged)
            }
            _ => None,
        };
        Ok(HolonomicMeasure {
            grid: self.grid.clone(),
            n_params: self.n_params,
            weights,
            atoms,
        })
    }
}

/// A holonomic lift together with how invariant its base measure was.
#[derive(Debug, Clone)]
pub struct LiftOutcome {
    pub measure: HolonomicMeasure,
    /// `‖Bᵀν − ν‖₁` of the lifted measure; a warning-level diagnostic,
    /// nonzero lifts are still constructed.
    pub invariance_gap: f64,
}

/// Lifts a measure on the state space to node × branch space by the branch
/// masses: `w(i,θ) = ν(i)·μ(θ)·J(x_i,θ)`.
///
/// The system must be normalized (checked against the operator's row
/// masses); `ν` should be invariant for the lift to be holonomic, and the
/// returned `invariance_gap` reports how far it is from that.
pub fn holonomic_lift(
    spec: &SystemSpec,
    b: &TransferMatrix,
    nu: &DiscreteMeasure,
) -> Result<LiftOutcome> {
    if b.grid() != nu.grid() {
        return Err(Error::GridMismatch("measure grid differs from the operator grid"));
    }
    for (i, q) in b.row_masses().iter().enumerate() {
        let deviation = (q - 1.0).abs();
        if deviation > 1e-6 {
            return Err(Error::NotNormalized { node: i, deviation });
        }
    }
    if !nu.is_probability() {
        return Err(Error::Invalid("lifted measure must be a probability".into()));
    }
    let grid = b.grid();
    let n = spec.n_params();
    let mut weights = vec![0.0f64; grid.len() * n];
    for i in 0..grid.len() {
        let x = grid.node(i);
        let nui = nu.weights()[i];
        for theta in 0..n {
            weights[i * n + theta] = nui * spec.params().weight(theta) * spec.weight(x, theta)?;
        }
    }
    let pushed = b.apply_transpose_values(nu.weights());
    let invariance_gap = pushed
        .iter()
        .zip(nu.weights())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(LiftOutcome {
        measure: HolonomicMeasure::from_weights(grid.clone(), n, weights)?,
        invariance_gap,
    })
}

/// Max over the test functions of `|Σ w(i,θ)·(f(τ_θ(x_i)) − f(x_i))|`, with
/// the image value interpolated. Empirical measures are evaluated on their
/// atoms, where the sum telescopes along the orbit.
pub fn holonomy_residual(
    measure: &HolonomicMeasure,
    spec: &SystemSpec,
    test_fns: &[DiscreteFunction],
) -> Result<f64> {
    for f in test_fns {
        if f.grid() != measure.grid() {
            return Err(Error::GridMismatch("test function grid differs"));
        }
    }
    let results: Vec<Result<f64>> = par::map_indexed(test_fns.len(), |k| {
        let f = &test_fns[k];
        let mut acc = 0.0f64;
        if let Some(atoms) = measure.atoms() {
            for &(p, theta, w) in atoms {
                let image = spec.map_image(theta as usize, p)?;
                acc += w * (f.interpolate(image)? - f.interpolate(p)?);
            }
        } else {
            let grid = measure.grid();
            let n = measure.n_params();
            for i in 0..grid.len() {
                let x = grid.node(i);
                let fx = f.values()[i];
                for theta in 0..n {
                    let w = measure.weight(i, theta);
                    if w == 0.0 {
                        continue;
                    }
                    let image = spec.map_image(theta, x)?;
                    acc += w * (f.interpolate(image)? - fx);
                }
            }
        }
        Ok(acc.abs())
    });
    let mut best = 0.0f64;
    for r in results {
        best = best.max(r?);
    }
    Ok(best)
}

/// Empirical measure of an orbit: one atom of weight `1/N` per step,
/// node weights assigned by the interpolation stencil of each point.
pub fn empirical_holonomic(
    orbit: &OrbitRecord,
    grid: &Grid,
    n_params: usize,
) -> Result<HolonomicMeasure> {
    if orbit.is_empty() {
        return Err(Error::EmptyOrbit);
    }
    if grid.domain() != orbit.domain() {
        return Err(Error::GridMismatch("orbit domain differs from the grid"));
    }
    if let Some(&bad) = orbit.labels().iter().find(|&&l| l as usize >= n_params) {
        return Err(Error::Invalid(format!(
            "orbit label {bad} outside the parameter set of size {n_params}"
        )));
    }
    let w = 1.0 / orbit.len() as f64;
    let mut weights = vec![0.0f64; grid.len() * n_params];
    let mut atoms = Vec::with_capacity(orbit.len());
    for (p, &theta) in orbit.points().iter().zip(orbit.labels()) {
        atoms.push((*p, theta, w));
        for (node, c) in grid.stencil(*p, InterpMode::Multilinear).iter() {
            weights[node * n_params + theta as usize] += w * c;
        }
    }
    let mut measure = HolonomicMeasure::from_weights(grid.clone(), n_params, weights)?;
    measure.atoms = Some(atoms);
    Ok(measure)
}

/// Factorization into a marginal and per-node conditionals on the branches.
#[derive(Debug, Clone)]
pub struct Disintegration {
    marginal: DiscreteMeasure,
    n_params: usize,
    /// node-major conditional probabilities; all-zero rows where the
    /// marginal vanishes (the conditional is undefined there)
    conditionals: Vec<f64>,
}

impl Disintegration {
    pub fn marginal(&self) -> &DiscreteMeasure {
        &self.marginal
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Conditional probability over branches at a node, `None` where the
    /// marginal has no mass.
    pub fn conditional(&self, node: usize) -> Option<&[f64]> {
        if self.marginal.weights()[node] > 0.0 {
            Some(&self.conditionals[node * self.n_params..(node + 1) * self.n_params])
        } else {
            None
        }
    }

    /// Rebuilds the joint weights `w(i,θ) = ν(i)·ν_{x_i}(θ)`.
    pub fn recombine(&self) -> Result<HolonomicMeasure> {
        let grid = self.marginal.grid().clone();
        let mut weights = vec![0.0f64; grid.len() * self.n_params];
        for i in 0..grid.len() {
            let nui = self.marginal.weights()[i];
            if nui == 0.0 {
                continue;
            }
            for theta in 0..self.n_params {
                weights[i * self.n_params + theta] =
                    nui * self.conditionals[i * self.n_params + theta];
            }
        }
        HolonomicMeasure::from_weights(grid, self.n_params, weights)
    }
}

/// Splits a holonomic measure into its marginal and conditionals.
pub fn disintegrate(measure: &HolonomicMeasure) -> Disintegration {
    let marginal = measure.marginal();
    let n = measure.n_params();
    let mut conditionals = vec![0.0f64; measure.weights().len()];
    for (i, &nui) in marginal.weights().iter().enumerate() {
        if nui > 0.0 {
            for theta in 0..n {
                conditionals[i * n + theta] = measure.weight(i, theta) / nui;
            }
        }
    }
    Disintegration {
        marginal,
        n_params: n,
        conditionals,
    }
}
