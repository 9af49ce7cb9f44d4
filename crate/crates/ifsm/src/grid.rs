//! Uniform tensor-product grids and grid-sampled functions/measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DomainBox, Point};

/// Interpolation rule used to pull point evaluations back onto grid nodes.
///
/// Multilinear (hat-function) coefficients are the default: they are
/// nonnegative and sum to one, which keeps the discretized operator positive
/// and mass-consistent. Nearest-neighbor is available for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterpMode {
    Nearest,
    Multilinear,
}

/// Uniform grid of nodes over a [`DomainBox`], endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    domain: DomainBox,
    shape: [usize; 2],
}

impl Grid {
    /// Grid with the given node count per axis (at least 2 per axis).
    pub fn new(domain: DomainBox, nodes_per_axis: &[usize]) -> Result<Self> {
        if nodes_per_axis.len() != domain.dim() {
            return Err(Error::Invalid(format!(
                "grid shape has {} axes for a {}-dimensional box",
                nodes_per_axis.len(),
                domain.dim()
            )));
        }
        if nodes_per_axis.iter().any(|&n| n < 2) {
            return Err(Error::Invalid("grid needs at least 2 nodes per axis".into()));
        }
        let mut shape = [1usize; 2];
        shape[..nodes_per_axis.len()].copy_from_slice(nodes_per_axis);
        Ok(Grid { domain, shape })
    }

    /// Same node count along every axis.
    pub fn uniform(domain: DomainBox, nodes_per_axis: usize) -> Result<Self> {
        let shape = vec![nodes_per_axis; domain.dim()];
        Grid::new(domain, &shape)
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        debug_assert!(self.shape[axis] >= 2);
        (self.domain.upper(axis) - self.domain.lower(axis)) / (self.shape[axis] - 1) as f64
    }

    /// Coordinates of the flat node index (row-major, axis 0 fastest).
    pub fn node(&self, index: usize) -> Point {
        let ix = index % self.shape[0];
        let iy = index / self.shape[0];
        let x = self.axis_coord(0, ix);
        let y = if self.dim() == 2 {
            self.axis_coord(1, iy)
        } else {
            0.0
        };
        [x, y]
    }

    fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        let lo = self.domain.lower(axis);
        let hi = self.domain.upper(axis);
        if i + 1 == self.shape[axis] {
            hi // endpoint exactly, no rounding drift
        } else {
            lo + self.spacing(axis) * i as f64
        }
    }

    pub fn flat_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.shape[0] + ix
    }

    /// Interpolation stencil for a point of the box.
    ///
    /// Multilinear stencils have `2^dim` entries (zero-weight corners are
    /// dropped); nearest stencils have one. Points are clamped to the box
    /// first, so images that drift out by float dust stay usable.
    pub fn stencil(&self, p: Point, mode: InterpMode) -> Stencil {
        let p = self.domain.clamp(p);
        match mode {
            InterpMode::Nearest => {
                let mut idx = [0usize; 2];
                for axis in 0..self.dim() {
                    let t = (p[axis] - self.domain.lower(axis)) / self.spacing(axis);
                    let k = t.round().max(0.0) as usize;
                    idx[axis] = k.min(self.shape[axis] - 1);
                }
                let mut s = Stencil::default();
                s.push(self.flat_index(idx[0], idx[1]), 1.0);
                s
            }
            InterpMode::Multilinear => {
                // per-axis cell index and fractional offset
                let mut base = [0usize; 2];
                let mut frac = [0.0f64; 2];
                for axis in 0..self.dim() {
                    let t = (p[axis] - self.domain.lower(axis)) / self.spacing(axis);
                    let k = (t.floor() as isize).clamp(0, self.shape[axis] as isize - 2) as usize;
                    base[axis] = k;
                    frac[axis] = (t - k as f64).clamp(0.0, 1.0);
                }
                let mut s = Stencil::default();
                if self.dim() == 1 {
                    s.push(base[0], 1.0 - frac[0]);
                    s.push(base[0] + 1, frac[0]);
                } else {
                    for (dy, wy) in [(0, 1.0 - frac[1]), (1, frac[1])] {
                        for (dx, wx) in [(0, 1.0 - frac[0]), (1, frac[0])] {
                            s.push(self.flat_index(base[0] + dx, base[1] + dy), wx * wy);
                        }
                    }
                }
                s
            }
        }
    }
}

/// Up to four (node, weight) pairs; weights are nonnegative and sum to 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stencil {
    nodes: [(usize, f64); 4],
    len: usize,
}

impl Stencil {
    fn push(&mut self, node: usize, weight: f64) {
        if weight != 0.0 {
            self.nodes[self.len] = (node, weight);
            self.len += 1;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes[..self.len].iter().copied()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Grid-sampled continuous function: one value per node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch("value count differs from node count"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("function values must be finite".into()));
        }
        Ok(DiscreteFunction { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        DiscreteFunction::new(grid, values)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        let values = vec![c; grid.len()];
        DiscreteFunction { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    /// Multilinear interpolation at a point of the box (1e-9 slack outside).
    pub fn interpolate(&self, p: Point) -> Result<f64> {
        if !self.grid.domain().contains(p, 1e-9) {
            return Err(Error::OutOfDomain { point: p });
        }
        Ok(self
            .grid
            .stencil(p, InterpMode::Multilinear)
            .iter()
            .map(|(i, w)| w * self.values[i])
            .sum())
    }

    /// New function with `f` applied to every value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        DiscreteFunction::new(self.grid.clone(), self.values.iter().map(|v| f(*v)).collect())
    }
}

/// Nonnegative weight field on grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    grid: Grid,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::GridMismatch("weight count differs from node count"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid(
                "measure weights must be finite and nonnegative".into(),
            ));
        }
        Ok(DiscreteMeasure { grid, weights })
    }

    /// Probability measure with equal weight on every node.
    pub fn uniform_probability(grid: Grid) -> Self {
        let n = grid.len();
        DiscreteMeasure {
            grid,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.mass() - 1.0).abs() <= 1e-12
    }

    /// Rescales to total mass 1.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if m <= 0.0 {
            return Err(Error::Invalid("cannot normalize a zero measure".into()));
        }
        DiscreteMeasure::new(
            self.grid.clone(),
            self.weights.iter().map(|w| w / m).collect(),
        )
    }

    /// ∫ f dm on the shared grid.
    pub fn integrate(&self, f: &DiscreteFunction) -> Result<f64> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch("function and measure grids differ"));
        }
        Ok(self
            .weights
            .iter()
            .zip(f.values())
            .map(|(w, v)| w * v)
            .sum())
    }
}
