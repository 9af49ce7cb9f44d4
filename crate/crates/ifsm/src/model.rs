//! The system data model: domain, parameter set, map family, branch weights.
//!
//! A system is a triple (domain, maps, weights): finitely many maps
//! `τ_θ` sending the box into itself, an a-priori probability `μ` on the
//! parameter labels, and per-branch weights. Weights come in two flavors:
//!
//! * a density family `J(x, θ)` relative to `μ` (one expression per branch,
//!   or a table over grid nodes × branches), or
//! * a positive potential `ψ` inducing the branch weight `ψ(τ_θ(x))`.
//!
//! At a state `x`, branch `θ` carries mass `μ(θ)·w_θ(x)` where `w_θ` is
//! whichever of the two forms the system uses; `q_mass(x)` is the total.
//! A system is *normalized* when that total is 1 everywhere, in which case
//! the branch masses are transition probabilities of a Markov process.
//!
//! All types are immutable after construction and safe to share across
//! threads. Standing hypotheses that are not decidable from samples
//! (continuity of maps and weights, weak-* continuity of `x ↦ q_x`) are
//! enforced structurally: expressions are built from continuous primitives,
//! tables are interpolated, and the remaining bounds are grid-sampled by
//! [`SystemSpec::validate`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ExpressionAst;
use crate::grid::{DiscreteFunction, Grid, InterpMode};

/// A point of the state space. The second coordinate is 0 in 1D systems.
pub type Point = [f64; 2];

/// Slack allowed when checking that map images stay inside the box;
/// images within this distance are clamped onto the boundary.
pub const CONTAINMENT_SLACK: f64 = 1e-9;

/// Compact box domain in dimension 1 or 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    dim: usize,
    lower: [f64; 2],
    upper: [f64; 2],
}

impl DomainBox {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Invalid("domain bound arrays differ in length".into()));
        }
        let dim = lower.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::Invalid(format!("domain dimension must be 1 or 2, got {dim}")));
        }
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        for a in 0..dim {
            if !(lower[a].is_finite() && upper[a].is_finite() && lower[a] < upper[a]) {
                return Err(Error::Invalid(format!(
                    "axis {a}: need finite lower < upper, got [{}, {}]",
                    lower[a], upper[a]
                )));
            }
            lo[a] = lower[a];
            hi[a] = upper[a];
        }
        Ok(DomainBox { dim, lower: lo, upper: hi })
    }

    pub fn unit_interval() -> Self {
        DomainBox::new(&[0.0], &[1.0]).unwrap()
    }

    pub fn unit_square() -> Self {
        DomainBox::new(&[0.0, 0.0], &[1.0, 1.0]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.lower[axis]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.upper[axis]
    }

    pub fn contains(&self, p: Point, slack: f64) -> bool {
        (0..self.dim).all(|a| p[a] >= self.lower[a] - slack && p[a] <= self.upper[a] + slack)
    }

    pub fn clamp(&self, mut p: Point) -> Point {
        for a in 0..self.dim {
            p[a] = p[a].clamp(self.lower[a], self.upper[a]);
        }
        p
    }

    /// Largest per-axis distance by which `p` escapes the box (0 if inside).
    pub fn escape_distance(&self, p: Point) -> f64 {
        let mut d: f64 = 0.0;
        for a in 0..self.dim {
            d = d.max(self.lower[a] - p[a]).max(p[a] - self.upper[a]);
        }
        d.max(0.0)
    }
}

/// Finite ordered parameter labels with their a-priori probability weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSet {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl ParameterSet {
    pub fn new(labels: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyParameterSet);
        }
        if labels.len() != weights.len() {
            return Err(Error::Invalid("label and weight counts differ".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid("a-priori weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "a-priori weights must sum to 1, got {total}"
            )));
        }
        Ok(ParameterSet { labels, weights })
    }

    /// Uniform a-priori probability on the given labels.
    pub fn uniform(labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptyParameterSet);
        }
        let weights = vec![1.0 / n as f64; n];
        ParameterSet::new(labels, weights)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Affine map `x ↦ A x + b`, stored dimension-agnostically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    matrix: [[f64; 2]; 2],
    offset: [f64; 2],
}

impl AffineMap {
    pub fn new_1d(a: f64, b: f64) -> Self {
        AffineMap {
            matrix: [[a, 0.0], [0.0, 0.0]],
            offset: [b, 0.0],
        }
    }

    pub fn new_2d(matrix: [[f64; 2]; 2], offset: [f64; 2]) -> Self {
        AffineMap { matrix, offset }
    }

    pub fn matrix(&self) -> &[[f64; 2]; 2] {
        &self.matrix
    }

    pub fn offset(&self) -> &[f64; 2] {
        &self.offset
    }

    pub fn apply(&self, dim: usize, p: Point) -> Point {
        let mut out = [0.0; 2];
        for (r, item) in out.iter_mut().enumerate().take(dim) {
            let mut acc = self.offset[r];
            for c in 0..dim {
                acc += self.matrix[r][c] * p[c];
            }
            *item = acc;
        }
        out
    }
}

/// The map collection `τ = (τ_θ)`, one entry per parameter label.
#[derive(Debug, Clone, PartialEq)]
pub enum MapFamily {
    Affine(Vec<AffineMap>),
    /// One expression per coordinate, per branch.
    Exprs(Vec<Vec<ExpressionAst>>),
}

impl MapFamily {
    pub fn len(&self) -> usize {
        match self {
            MapFamily::Affine(v) => v.len(),
            MapFamily::Exprs(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn apply(&self, dim: usize, theta: usize, p: Point) -> Result<Point> {
        match self {
            MapFamily::Affine(maps) => Ok(maps[theta].apply(dim, p)),
            MapFamily::Exprs(exprs) => {
                let mut out = [0.0; 2];
                for (axis, e) in exprs[theta].iter().enumerate() {
                    out[axis] = e.eval(p)?;
                }
                Ok(out)
            }
        }
    }
}

/// Strictly positive density `J(x, θ) = dq_x/dμ(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityFamily {
    /// One expression of `x` (and `y`) per branch.
    Expr(Vec<ExpressionAst>),
    /// Node-major table: `values[node * n_params + theta]`, interpolated
    /// multilinearly between nodes.
    Tabulated { grid: Grid, values: Vec<f64> },
}

/// Strictly positive potential `ψ` on the box.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Expr(ExpressionAst),
    Tabulated(DiscreteFunction),
}

impl Potential {
    pub fn eval(&self, p: Point) -> Result<f64> {
        match self {
            Potential::Expr(e) => e.eval(p),
            Potential::Tabulated(f) => f.interpolate(p),
        }
    }
}

/// Which of the two weight forms the system uses.
#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    Density(DensityFamily),
    /// Branch weight `ψ(τ_θ(x))`, the transfer operator of the potential `ψ`.
    Potential(Potential),
}

/// Outcome of the grid-sampled hypothesis check.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// max over sampled nodes of q_mass
    pub sup_q: f64,
    /// min over sampled nodes of q_mass
    pub inf_q: f64,
    /// true iff q_mass is 1 within 1e-12 at every sampled node
    pub normalized: bool,
    /// worst observed escape of a map image from the box
    pub max_escape: f64,
    pub nodes_checked: usize,
    pub passed: bool,
}

/// An immutable system definition: the validated triple everything else
/// consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    domain: DomainBox,
    params: ParameterSet,
    maps: MapFamily,
    weighting: Weighting,
}

impl SystemSpec {
    pub fn new(
        domain: DomainBox,
        params: ParameterSet,
        maps: MapFamily,
        weighting: Weighting,
    ) -> Result<Self> {
        if maps.len() != params.len() {
            return Err(Error::Invalid(format!(
                "{} maps for {} parameters",
                maps.len(),
                params.len()
            )));
        }
        if let MapFamily::Exprs(exprs) = &maps {
            for (i, per_theta) in exprs.iter().enumerate() {
                if per_theta.len() != domain.dim() {
                    return Err(Error::Invalid(format!(
                        "map `{}` has {} coordinate expressions for dimension {}",
                        params.label(i),
                        per_theta.len(),
                        domain.dim()
                    )));
                }
            }
        }
        match &weighting {
            Weighting::Density(DensityFamily::Expr(exprs)) if exprs.len() != params.len() => {
                return Err(Error::Invalid(format!(
                    "{} density expressions for {} parameters",
                    exprs.len(),
                    params.len()
                )));
            }
            Weighting::Density(DensityFamily::Tabulated { grid, values })
                if values.len() != grid.len() * params.len() =>
            {
                return Err(Error::Invalid(
                    "density table size differs from nodes × parameters".into(),
                ));
            }
            _ => {}
        }
        Ok(SystemSpec {
            domain,
            params,
            maps,
            weighting,
        })
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn maps(&self) -> &MapFamily {
        &self.maps
    }

    pub fn weighting(&self) -> &Weighting {
        &self.weighting
    }

    /// Same domain/maps/parameters with a different weighting.
    pub fn with_weighting(&self, weighting: Weighting) -> Result<SystemSpec> {
        SystemSpec::new(
            self.domain.clone(),
            self.params.clone(),
            self.maps.clone(),
            weighting,
        )
    }

    /// Raw image of `x` under branch `theta`, before the containment clamp.
    pub(crate) fn map_image_raw(&self, theta: usize, x: Point) -> Result<Point> {
        self.maps.apply(self.dim(), theta, x)
    }

    /// Image of `x` under branch `theta`, clamped onto the box.
    pub fn map_image(&self, theta: usize, x: Point) -> Result<Point> {
        Ok(self.domain.clamp(self.map_image_raw(theta, x)?))
    }

    /// Image of `x` under the map named `label`.
    pub fn evaluate_map(&self, label: &str, x: Point) -> Result<Point> {
        let theta = self
            .params
            .index_of(label)
            .ok_or_else(|| Error::UnknownParameter(label.to_string()))?;
        if !self.domain.contains(x, CONTAINMENT_SLACK) {
            return Err(Error::OutOfDomain { point: x });
        }
        self.map_image(theta, x)
    }

    /// Branch weight `w_θ(x)`: the density `J(x, θ)`, or `ψ(τ_θ(x))` for
    /// potential-weighted systems.
    pub fn weight(&self, x: Point, theta: usize) -> Result<f64> {
        match &self.weighting {
            Weighting::Density(DensityFamily::Expr(exprs)) => exprs[theta].eval(x),
            Weighting::Density(DensityFamily::Tabulated { grid, values }) => {
                let n = self.params.len();
                Ok(grid
                    .stencil(x, InterpMode::Multilinear)
                    .iter()
                    .map(|(i, w)| w * values[i * n + theta])
                    .sum())
            }
            Weighting::Potential(psi) => psi.eval(self.map_image(theta, x)?),
        }
    }

    /// Total branch mass `q_x(Θ) = Σ_θ μ(θ) w_θ(x)`.
    pub fn q_mass(&self, x: Point) -> Result<f64> {
        if !self.domain.contains(x, CONTAINMENT_SLACK) {
            return Err(Error::OutOfDomain { point: x });
        }
        let mut total = 0.0;
        for theta in 0..self.params.len() {
            total += self.params.weight(theta) * self.weight(x, theta)?;
        }
        Ok(total)
    }

    /// Grid-sampled check of the standing hypotheses: strictly positive
    /// weights, bounded q-mass, and map images inside the box.
    pub fn validate(&self, grid_resolution: usize) -> Result<ValidationReport> {
        if self.params.is_empty() {
            return Err(Error::EmptyParameterSet);
        }
        let grid = Grid::uniform(self.domain.clone(), grid_resolution)?;
        let mut sup_q = f64::NEG_INFINITY;
        let mut inf_q = f64::INFINITY;
        let mut normalized = true;
        let mut max_escape = 0.0f64;

        if let Weighting::Potential(psi) = &self.weighting {
            for i in 0..grid.len() {
                let v = psi.eval(grid.node(i))?;
                if v <= 0.0 {
                    return Err(Error::NonPositiveDensity {
                        node: i,
                        label: "potential".into(),
                        value: v,
                    });
                }
            }
        }

        for i in 0..grid.len() {
            let x = grid.node(i);
            let mut q = 0.0;
            for theta in 0..self.params.len() {
                let image = self.map_image_raw(theta, x)?;
                let escape = self.domain.escape_distance(image);
                if escape > CONTAINMENT_SLACK {
                    return Err(Error::MapEscapesDomain {
                        node: i,
                        label: self.params.label(theta).to_string(),
                        escape,
                    });
                }
                max_escape = max_escape.max(escape);
                let w = self.weight(x, theta)?;
                if w <= 0.0 {
                    return Err(Error::NonPositiveDensity {
                        node: i,
                        label: self.params.label(theta).to_string(),
                        value: w,
                    });
                }
                q += self.params.weight(theta) * w;
            }
            sup_q = sup_q.max(q);
            inf_q = inf_q.min(q);
            if (q - 1.0).abs() > 1e-12 {
                normalized = false;
            }
        }

        Ok(ValidationReport {
            sup_q,
            inf_q,
            normalized,
            max_escape,
            nodes_checked: grid.len(),
            passed: inf_q > 0.0,
        })
    }
}
