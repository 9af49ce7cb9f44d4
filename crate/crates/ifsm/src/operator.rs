//! Grid discretization of the transfer operator and its adjoint.
//!
//! Row `i` of the matrix holds `Σ_θ μ(θ) w_θ(x_i) c_j(τ_θ(x_i))` where the
//! `c_j` are interpolation coefficients of the image point. Applying the
//! matrix is the discrete transfer operator on functions; applying the
//! transpose is the Markov operator on measures — the adjoint is exact by
//! construction, there is no second discretization.
//!
//! Rows have at most `n_params · 2^dim` entries, so the matrix is stored
//! sparse, in both row-major (for the forward apply) and column-major (for
//! the adjoint) layouts. Both applications gather into each output slot in
//! a fixed order, so results do not depend on the thread count.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{DiscreteFunction, DiscreteMeasure, Grid, InterpMode};
use crate::model::SystemSpec;
use crate::par;

/// Sparse discretization of the transfer operator on a grid.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    grid: Grid,
    interp: InterpMode,
    // row-major storage
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    // column-major storage of the same entries
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    vals_t: Vec<f64>,
    // B applied to the constant 1, cached with the forward gather order
    row_masses: Vec<f64>,
}

/// Builds the transfer matrix of `spec` on `grid`.
///
/// Rows are assembled independently (in parallel with the `parallel`
/// feature). Entries are nonnegative and row `i` sums to `q_mass(x_i)` up
/// to rounding, since the interpolation coefficients sum to one.
pub fn assemble_transfer(
    spec: &SystemSpec,
    grid: &Grid,
    interp: InterpMode,
) -> Result<TransferMatrix> {
    if grid.domain() != spec.domain() {
        return Err(Error::GridMismatch("grid does not cover the system domain"));
    }
    let m = grid.len();
    let n = spec.n_params();

    let rows: Vec<Result<Vec<(u32, f64)>>> = par::map_indexed(m, |i| {
        let x = grid.node(i);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(n * 4);
        for theta in 0..n {
            let w = spec.params().weight(theta) * spec.weight(x, theta)?;
            if w == 0.0 {
                continue;
            }
            let image = spec.map_image(theta, x)?;
            for (j, c) in grid.stencil(image, interp).iter() {
                entries.push((j as u32, w * c));
            }
        }
        Ok(entries)
    });

    let mut row_ptr = Vec::with_capacity(m + 1);
    row_ptr.push(0usize);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for row in rows {
        for (j, v) in row? {
            cols.push(j);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }

    // transpose by counting sort over columns; within a column the entries
    // keep ascending row order
    let nnz = vals.len();
    let mut col_counts = vec![0usize; m];
    for &c in &cols {
        col_counts[c as usize] += 1;
    }
    let mut col_ptr = Vec::with_capacity(m + 1);
    col_ptr.push(0usize);
    for c in 0..m {
        col_ptr.push(col_ptr[c] + col_counts[c]);
    }
    let mut rows_t = vec![0u32; nnz];
    let mut vals_t = vec![0.0f64; nnz];
    let mut cursor = col_ptr[..m].to_vec();
    for i in 0..m {
        for k in row_ptr[i]..row_ptr[i + 1] {
            let c = cols[k] as usize;
            rows_t[cursor[c]] = i as u32;
            vals_t[cursor[c]] = vals[k];
            cursor[c] += 1;
        }
    }

    let mut b = TransferMatrix {
        grid: grid.clone(),
        interp,
        row_ptr,
        cols,
        vals,
        col_ptr,
        rows: rows_t,
        vals_t,
        row_masses: Vec::new(),
    };
    let ones = vec![1.0; m];
    let mut masses = vec![0.0; m];
    b.gather_rows(&ones, &mut masses);
    b.row_masses = masses;
    Ok(b)
}

impl TransferMatrix {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn interp(&self) -> InterpMode {
        self.interp
    }

    /// Node count of the underlying grid (the matrix is square).
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `B·1` as cached at assembly; bit-identical to `apply` on the
    /// constant function.
    pub fn row_masses(&self) -> &[f64] {
        &self.row_masses
    }

    /// `B·1` wrapped as a grid function.
    pub fn q_mass_function(&self) -> DiscreteFunction {
        DiscreteFunction::new(self.grid.clone(), self.row_masses.clone())
            .expect("row masses match the grid")
    }

    fn chunk_len(&self) -> usize {
        (self.len() / 64).max(16)
    }

    fn gather_rows(&self, f: &[f64], out: &mut [f64]) {
        let row_ptr = &self.row_ptr;
        let cols = &self.cols;
        let vals = &self.vals;
        par::fill_chunked(out, self.chunk_len(), |start, slice| {
            for (o, i) in slice.iter_mut().zip(start..) {
                let mut acc = 0.0;
                for k in row_ptr[i]..row_ptr[i + 1] {
                    acc += vals[k] * f[cols[k] as usize];
                }
                *o = acc;
            }
        });
    }

    fn gather_rows_seq(&self, f: &[f64], out: &mut [f64]) {
        for i in 0..self.len() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * f[self.cols[k] as usize];
            }
            out[i] = acc;
        }
    }

    fn gather_cols(&self, w: &[f64], out: &mut [f64]) {
        let col_ptr = &self.col_ptr;
        let rows = &self.rows;
        let vals_t = &self.vals_t;
        par::fill_chunked(out, self.chunk_len(), |start, slice| {
            for (o, j) in slice.iter_mut().zip(start..) {
                let mut acc = 0.0;
                for k in col_ptr[j]..col_ptr[j + 1] {
                    acc += vals_t[k] * w[rows[k] as usize];
                }
                *o = acc;
            }
        });
    }

    fn gather_cols_seq(&self, w: &[f64], out: &mut [f64]) {
        for j in 0..self.len() {
            let mut acc = 0.0;
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc += self.vals_t[k] * w[self.rows[k] as usize];
            }
            out[j] = acc;
        }
    }

    fn check_grid(&self, other: &Grid) -> Result<()> {
        if other != &self.grid {
            return Err(Error::GridMismatch("operand grid differs from the operator grid"));
        }
        Ok(())
    }

    pub(crate) fn apply_values(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.gather_rows(f, &mut out);
        out
    }

    pub(crate) fn apply_transpose_values(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.gather_cols(w, &mut out);
        out
    }

    /// `(Bf)(x_i) = Σ_j B[i][j] f(x_j)`.
    pub fn apply(&self, f: &DiscreteFunction) -> Result<DiscreteFunction> {
        self.check_grid(f.grid())?;
        DiscreteFunction::new(self.grid.clone(), self.apply_values(f.values()))
    }

    /// Sequential version of [`TransferMatrix::apply`], kept callable for
    /// benchmarks regardless of the `parallel` feature.
    pub fn apply_seq(&self, f: &DiscreteFunction) -> Result<DiscreteFunction> {
        self.check_grid(f.grid())?;
        let mut out = vec![0.0; self.len()];
        self.gather_rows_seq(f.values(), &mut out);
        DiscreteFunction::new(self.grid.clone(), out)
    }

    /// Markov (adjoint) step on measures: the output weights are `Bᵀ w`.
    pub fn apply_markov(&self, m: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        self.check_grid(m.grid())?;
        DiscreteMeasure::new(self.grid.clone(), self.apply_transpose_values(m.weights()))
    }

    /// Sequential version of [`TransferMatrix::apply_markov`].
    pub fn apply_markov_seq(&self, m: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        self.check_grid(m.grid())?;
        let mut out = vec![0.0; self.len()];
        self.gather_cols_seq(m.weights(), &mut out);
        DiscreteMeasure::new(self.grid.clone(), out)
    }

    /// Writes the dense matrix as CSV for debugging. First line is the
    /// comment header `# transfer-matrix rows=<m> cols=<m> row-major`, then
    /// one CSV row per matrix row.
    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "# transfer-matrix rows={m} cols={m} row-major",
            m = self.len()
        )?;
        let mut dense_row = vec![0.0f64; self.len()];
        for i in 0..self.len() {
            dense_row.iter_mut().for_each(|v| *v = 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                dense_row[self.cols[k] as usize] += self.vals[k];
            }
            let line: Vec<String> = dense_row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Writes the dense matrix as flat binary: the 8-byte magic `IFSMTM01`,
    /// the node count as little-endian u64, then `m*m` little-endian f64
    /// entries in row-major order.
    pub fn export_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(b"IFSMTM01")?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        let mut dense_row = vec![0.0f64; self.len()];
        for i in 0..self.len() {
            dense_row.iter_mut().for_each(|v| *v = 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                dense_row[self.cols[k] as usize] += self.vals[k];
            }
            for v in &dense_row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// `|⟨f, Bᵀm⟩ − ⟨Bf, m⟩|` — zero up to rounding, since the Markov operator
/// is the literal transpose.
pub fn duality_residual(
    b: &TransferMatrix,
    f: &DiscreteFunction,
    m: &DiscreteMeasure,
) -> Result<f64> {
    let lhs = m.grid().clone();
    b.check_grid(&lhs)?;
    b.check_grid(f.grid())?;
    let bf = b.apply(f)?;
    let btm = b.apply_markov(m)?;
    let left: f64 = f
        .values()
        .iter()
        .zip(btm.weights())
        .map(|(a, b)| a * b)
        .sum();
    let right: f64 = bf
        .values()
        .iter()
        .zip(m.weights())
        .map(|(a, b)| a * b)
        .sum();
    Ok((left - right).abs())
}
