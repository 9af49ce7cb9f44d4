//! Numerical laboratory for iterated function systems with state-dependent
//! branch weights.
//!
//! A system here is a finite family of maps `τ_θ` of a compact box into
//! itself together with an a-priori probability `μ` on the branch labels and
//! positive branch weights — either a density `J(x, θ)` or a potential `ψ`
//! entering through `ψ(τ_θ(x))`. The crate discretizes the associated
//! transfer operator `B(f)(x) = Σ_θ μ(θ) w_θ(x) f(τ_θ(x))` on a uniform
//! grid and builds everything on top of that one object:
//!
//! * [`operator`] — sparse discretization of the transfer operator and its
//!   exact adjoint (the Markov operator on measures);
//! * [`spectral`] — spectral radius via iterate growth or power iteration,
//!   positive eigenfunctions, eigenmeasures, and system normalization;
//! * [`holonomy`] — measures on state × parameter space whose branch
//!   differentials vanish: lifts of invariant measures, empirical orbit
//!   averages, disintegration into marginal and conditionals;
//! * [`thermo`] — variational and average entropy, topological pressure,
//!   equilibrium states, and convexity/subgradient diagnostics of the
//!   pressure functional;
//! * [`chaos`] — seeded chaos-game orbits, dyadic cell histograms, running
//!   ergodic averages, and PC-plot rendering;
//! * [`config`], [`timeseries`], [`pgm`] — JSON system definitions, CSV
//!   return-symbolization, and report/image output.
//!
//! # Example
//!
//! ```
//! use ifsm::prelude::*;
//!
//! // two maps halving the unit interval, uniform weights
//! let spec = ifsm::config::load_config_str(r#"{
//!     "domain": { "lower": [0.0], "upper": [1.0] },
//!     "apriori": [0.5, 0.5],
//!     "maps": [
//!         { "label": "0", "matrix": [[0.5]], "offset": [0.0] },
//!         { "label": "1", "matrix": [[0.5]], "offset": [0.5] }
//!     ],
//!     "weighting": { "density": ["1", "1"] }
//! }"#).unwrap();
//!
//! let grid = Grid::uniform(spec.domain().clone(), 128).unwrap();
//! let b = assemble_transfer(&spec, &grid, InterpMode::Multilinear).unwrap();
//! let s = power_iteration(&b, 1e-12, 10_000).unwrap();
//! assert!((s.rho - 1.0).abs() < 1e-10); // normalized system
//! ```
//!
//! With the default `parallel` feature, operator assembly, matrix-vector
//! products and independent pressure evaluations run on rayon; disable
//! default features for a fully sequential build. `benches/par_vs_seq.rs`
//! compares the two paths.

pub mod chaos;
pub mod config;
mod error;
pub mod expr;
pub mod grid;
pub mod holonomy;
pub mod model;
pub mod operator;
mod par;
pub mod pgm;
pub mod spectral;
pub mod thermo;
pub mod timeseries;

pub use error::{Error, Result};

/// The usual imports for working with the crate.
pub mod prelude {
    pub use crate::chaos::{elton_average, empirical_measure, pc_plot, sample_orbit, OrbitRecord};
    pub use crate::error::{Error, Result};
    pub use crate::expr::{parse_expression, ExpressionAst};
    pub use crate::grid::{DiscreteFunction, DiscreteMeasure, Grid, InterpMode};
    pub use crate::holonomy::{
        disintegrate, empirical_holonomic, holonomic_lift, holonomy_residual, HolonomicMeasure,
    };
    pub use crate::model::{
        AffineMap, DensityFamily, DomainBox, MapFamily, ParameterSet, Point, Potential,
        SystemSpec, Weighting,
    };
    pub use crate::operator::{assemble_transfer, duality_residual, TransferMatrix};
    pub use crate::spectral::{
        eigenmeasure, normalize_system, power_iteration, spectral_radius_gelfand,
    };
    pub use crate::thermo::{
        entropy_average, entropy_closed_form, entropy_variational, equilibrium_state, pressure,
        pressure_functional_probe,
    };
}
