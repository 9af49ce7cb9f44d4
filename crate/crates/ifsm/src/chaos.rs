//! Chaos-game orbits, dyadic cell histograms, ergodic averages, PC plots.
//!
//! An orbit iterates `Z_{j+1} = τ_{θ_j}(Z_j)` where `θ_j` is drawn from the
//! branch weights at the current point, `μ(θ)·w_θ(Z_j)` normalized by their
//! sum. Sampling is inverse-CDF over cumulative sums taken in label order,
//! driven by a seeded ChaCha8 stream, so a record is reproducible bit for
//! bit from `(spec, start, length, seed)` on any platform. Batches of
//! orbits draw from per-orbit streams of the same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, DiscreteMeasure};
use crate::model::{AffineMap, DomainBox, MapFamily, Point, SystemSpec, CONTAINMENT_SLACK};

/// Maximum number of histogram cells (2^24).
const MAX_CELLS: u64 = 1 << 24;

/// A sampled orbit: points `Z_0..Z_{N-1}` with the branch labels chosen at
/// each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRecord {
    seed: u64,
    stream: u64,
    domain: DomainBox,
    points: Vec<Point>,
    labels: Vec<u32>,
    clamped_steps: usize,
}

impl OrbitRecord {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Steps whose raw image left the box by more than the containment
    /// slack and had to be clamped.
    pub fn clamped_steps(&self) -> usize {
        self.clamped_steps
    }

    /// Re-applies every map and checks the recorded successor bit for bit.
    pub fn verify(&self, spec: &SystemSpec) -> Result<bool> {
        for j in 0..self.len().saturating_sub(1) {
            let image = spec.map_image(self.labels[j] as usize, self.points[j])?;
            if image != self.points[j + 1] {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Runs the chaos game for `n` steps from `start` on stream 0 of `seed`.
pub fn sample_orbit(spec: &SystemSpec, start: Point, n: usize, seed: u64) -> Result<OrbitRecord> {
    sample_orbit_stream(spec, start, n, seed, 0)
}

/// Chaos game on an explicit ChaCha stream; independent orbits of one
/// experiment use the same seed with distinct streams.
pub fn sample_orbit_stream(
    spec: &SystemSpec,
    start: Point,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<OrbitRecord> {
    if n == 0 {
        return Err(Error::EmptyOrbit);
    }
    if !spec.domain().contains(start, CONTAINMENT_SLACK) {
        return Err(Error::OutOfDomain { point: start });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let n_params = spec.n_params();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut clamped = 0usize;
    let mut z = spec.domain().clamp(start);
    let mut branch_mass = vec![0.0f64; n_params];

    for _ in 0..n {
        let mut total = 0.0;
        for (theta, mass) in branch_mass.iter_mut().enumerate() {
            *mass = spec.params().weight(theta) * spec.weight(z, theta)?;
            total += *mass;
        }
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::DegenerateOperator { node: 0 });
        }
        let u = rng.gen::<f64>() * total;
        let mut theta = n_params - 1;
        let mut cumulative = 0.0;
        for (k, mass) in branch_mass.iter().enumerate() {
            cumulative += mass;
            if u < cumulative {
                theta = k;
                break;
            }
        }
        points.push(z);
        labels.push(theta as u32);
        let raw = spec.map_image_raw(theta, z)?;
        if spec.domain().escape_distance(raw) > CONTAINMENT_SLACK {
            clamped += 1;
        }
        z = spec.domain().clamp(raw);
    }

    Ok(OrbitRecord {
        seed,
        stream,
        domain: spec.domain().clone(),
        points,
        labels,
        clamped_steps: clamped,
    })
}

/// Visit frequencies over the level-`M` dyadic partition of the box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellHistogram {
    level: u32,
    dim: usize,
    domain: DomainBox,
    weights: Vec<f64>,
}

impl CellHistogram {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> usize {
        1usize << self.level
    }

    /// Cell weights, axis-0 fastest.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Flat index of the cell containing `p`. Points exactly on a cell edge
    /// belong to the lower-address cell.
    pub fn cell_of(&self, p: Point) -> usize {
        let side = self.cells_per_axis();
        let mut idx = [0usize; 2];
        for a in 0..self.dim {
            let lo = self.domain.lower(a);
            let hi = self.domain.upper(a);
            let t = (p[a] - lo) / (hi - lo);
            let k = (t * side as f64).ceil() as isize - 1;
            idx[a] = k.clamp(0, side as isize - 1) as usize;
        }
        idx[1] * side + idx[0]
    }

    /// Flat index of the cell with the given address, coarsest digit first.
    /// Each digit is a quadrant code `bx + 2·by` (`bx` alone in 1D).
    pub fn address_to_index(&self, address: &[u8]) -> Result<usize> {
        if address.len() != self.level as usize {
            return Err(Error::Invalid(format!(
                "address length {} differs from level {}",
                address.len(),
                self.level
            )));
        }
        let mut ix = 0usize;
        let mut iy = 0usize;
        for &code in address {
            if code as usize >= 1 << self.dim {
                return Err(Error::Invalid(format!("address digit {code} out of range")));
            }
            ix = (ix << 1) | (code & 1) as usize;
            iy = (iy << 1) | ((code >> 1) & 1) as usize;
        }
        Ok(iy * self.cells_per_axis() + ix)
    }

    /// Address of a flat cell index, coarsest digit first.
    pub fn index_to_address(&self, index: usize) -> Vec<u8> {
        let side = self.cells_per_axis();
        let ix = index % side;
        let iy = index / side;
        (0..self.level)
            .rev()
            .map(|k| (((ix >> k) & 1) | (((iy >> k) & 1) << 1)) as u8)
            .collect()
    }
}

/// Counts orbit visits per dyadic cell at level `m`, skipping the first
/// `burn_in` steps.
pub fn empirical_measure(orbit: &OrbitRecord, level: u32, burn_in: usize) -> Result<CellHistogram> {
    if orbit.is_empty() {
        return Err(Error::EmptyOrbit);
    }
    if level == 0 {
        return Err(Error::Invalid("partition level must be at least 1".into()));
    }
    let dim = orbit.domain.dim();
    let cells = 1u64 << (dim as u32 * level);
    if cells > MAX_CELLS {
        return Err(Error::LevelTooFine { level, cells });
    }
    if burn_in >= orbit.len() {
        return Err(Error::Invalid(format!(
            "burn-in {} consumes the whole orbit of length {}",
            burn_in,
            orbit.len()
        )));
    }
    let mut hist = CellHistogram {
        level,
        dim,
        domain: orbit.domain.clone(),
        weights: vec![0.0; cells as usize],
    };
    let mut counts = vec![0u64; cells as usize];
    for p in &orbit.points[burn_in..] {
        let cell = hist.cell_of(*p);
        counts[cell] += 1;
    }
    let total = (orbit.len() - burn_in) as f64;
    for (w, c) in hist.weights.iter_mut().zip(&counts) {
        *w = *c as f64 / total;
    }
    Ok(hist)
}

/// For a dyadic map family, the branch index owning each quadrant code.
///
/// `order[code] = θ` means map `θ` sends the box onto the sub-box with
/// per-axis offsets `(code & 1, code >> 1)`. Errors with
/// [`Error::NotDyadicFamily`] when the maps are not the half-scale
/// translations of the box.
pub fn dyadic_symbol_order(spec: &SystemSpec) -> Result<Vec<usize>> {
    let dim = spec.dim();
    let expected = 1usize << dim;
    let maps = match spec.maps() {
        MapFamily::Affine(maps) => maps,
        MapFamily::Exprs(_) => {
            return Err(Error::NotDyadicFamily(
                "expression-backed maps are not recognized as dyadic".into(),
            ))
        }
    };
    if maps.len() != expected {
        return Err(Error::NotDyadicFamily(format!(
            "{} maps, need {expected} for dimension {dim}",
            maps.len()
        )));
    }
    let mut order = vec![usize::MAX; expected];
    for (theta, map) in maps.iter().enumerate() {
        let code = dyadic_code(spec.domain(), map)?;
        if order[code] != usize::MAX {
            return Err(Error::NotDyadicFamily(format!(
                "two maps target quadrant code {code}"
            )));
        }
        order[code] = theta;
    }
    Ok(order)
}

fn dyadic_code(domain: &DomainBox, map: &AffineMap) -> Result<usize> {
    const TOL: f64 = 1e-12;
    let dim = domain.dim();
    let mut code = 0usize;
    for r in 0..dim {
        for c in 0..dim {
            let want = if r == c { 0.5 } else { 0.0 };
            if (map.matrix()[r][c] - want).abs() > TOL {
                return Err(Error::NotDyadicFamily(
                    "matrix is not half the identity".into(),
                ));
            }
        }
        let lo = domain.lower(r);
        let half = (domain.upper(r) - lo) / 2.0;
        // image of the lower corner: lo/2·... + offset must be lo or lo + half
        let image_lo = 0.5 * lo + map.offset()[r];
        let bit = if (image_lo - lo).abs() <= TOL {
            0
        } else if (image_lo - (lo + half)).abs() <= TOL {
            1
        } else {
            return Err(Error::NotDyadicFamily(format!(
                "offset on axis {r} is neither the lower nor the middle corner"
            )));
        };
        code |= bit << r;
    }
    Ok(code)
}

/// One checkpoint of a running ergodic average.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EltonPoint {
    pub n: usize,
    pub average: f64,
    pub gap: f64,
}

/// Running averages of `f` along an orbit against a reference integral.
#[derive(Debug, Clone, Serialize)]
pub struct EltonTrace {
    /// Averages at powers of two and at the final step.
    pub checkpoints: Vec<EltonPoint>,
    pub final_average: f64,
    pub final_gap: f64,
    pub reference_value: f64,
}

/// Tracks `(1/N) Σ f(Z_j)` and its gap to `∫ f d(reference)`.
pub fn elton_average(
    orbit: &OrbitRecord,
    f: &DiscreteFunction,
    reference: &DiscreteMeasure,
) -> Result<EltonTrace> {
    if f.grid() != reference.grid() {
        return Err(Error::GridMismatch("function and reference grids differ"));
    }
    if f.grid().domain() != &orbit.domain {
        return Err(Error::GridMismatch("orbit domain differs from the grid"));
    }
    if orbit.is_empty() {
        return Err(Error::EmptyOrbit);
    }
    let target = reference.integrate(f)?;
    let mut checkpoints = Vec::new();
    let mut sum = 0.0;
    let n = orbit.len();
    for (j, p) in orbit.points.iter().enumerate() {
        sum += f.interpolate(*p)?;
        let count = j + 1;
        if count.is_power_of_two() || count == n {
            let average = sum / count as f64;
            checkpoints.push(EltonPoint {
                n: count,
                average,
                gap: (average - target).abs(),
            });
        }
    }
    let last = *checkpoints.last().expect("orbit is nonempty");
    Ok(EltonTrace {
        checkpoints,
        final_average: last.average,
        final_gap: last.gap,
        reference_value: target,
    })
}

/// Grey-scale raster, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    /// Row-major pixels, 0..=255.
    pub pixels: Vec<u8>,
}

/// Renders a histogram as a PC plot: one `block`×`block` pixel square per
/// cell, grey value proportional to the cell weight with the maximum mapped
/// to full scale. The first address digit selects the quadrant (offset 0
/// left/bottom, 1 right/top), recursively; the top pixel row shows the
/// upper cells.
pub fn pc_plot(hist: &CellHistogram, block: usize) -> Result<ImageGrid> {
    if block == 0 {
        return Err(Error::Invalid("block size must be positive".into()));
    }
    let side = hist.cells_per_axis();
    let wmax = hist.weights.iter().fold(0.0f64, |a, &w| a.max(w));
    let shade = |w: f64| -> u8 {
        if wmax > 0.0 {
            (255.0 * w / wmax).round() as u8
        } else {
            0
        }
    };
    let width = side * block;
    let rows = if hist.dim == 2 { side } else { 1 };
    let height = rows * block;
    let mut pixels = vec![0u8; width * height];
    for cy in 0..rows {
        for cx in 0..side {
            let w = if hist.dim == 2 {
                hist.weights[cy * side + cx]
            } else {
                hist.weights[cx]
            };
            let value = shade(w);
            // cell row 0 is the bottom of the box, image row 0 the top
            let top = (rows - 1 - cy) * block;
            for py in top..top + block {
                let row = &mut pixels[py * width + cx * block..py * width + (cx + 1) * block];
                row.fill(value);
            }
        }
    }
    Ok(ImageGrid {
        width,
        height,
        pixels,
    })
}
