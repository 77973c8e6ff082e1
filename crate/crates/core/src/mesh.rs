//! Uniform 1D grid on `(0, L)` with homogeneous Dirichlet boundary.
//!
//! Unknowns live on interior nodes `x_i = i * dx`, `i = 1..n_cells-1`; fluxes
//! live on the `n_cells` faces `x_{j+1/2}`, `j = 0..n_cells-1`. Face `j` sits
//! between node `j` and node `j+1`, where nodes `0` and `n_cells` are the
//! (unstored, zero) boundary values. With this layout `divergence` is exactly
//! the negative adjoint of `gradient`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    length: f64,
    n_cells: usize,
}

impl Grid {
    pub fn new(length: f64, n_cells: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "domain length must be positive, got {length}"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Grid { length, n_cells })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    /// Number of interior nodes (`n_cells - 1`).
    pub fn n_nodes(&self) -> usize {
        self.n_cells - 1
    }

    pub fn n_faces(&self) -> usize {
        self.n_cells
    }

    /// Coordinate of interior node `i` (zero-based, so the first node is `dx`).
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx()
    }

    pub fn face(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    pub fn faces(&self) -> Vec<f64> {
        (0..self.n_faces()).map(|j| self.face(j)).collect()
    }

    fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

pub fn build_grid(length: f64, n_cells: usize) -> Result<Grid> {
    Grid::new(length, n_cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::Shape {
                expected: grid.n_nodes(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite value at node {i}"
            )));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.n_nodes()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(f64) -> f64) -> Self {
        GridFunction {
            grid,
            values: grid.nodes().into_iter().map(f).collect(),
        }
    }

    /// Internal constructor for values produced by arithmetic on valid fields.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_nodes());
        GridFunction { grid, values }
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

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction> {
        self.grid.ensure_same(&other.grid)?;
        Ok(GridFunction::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    /// Pointwise `max(self, other)`.
    pub fn max_with(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, f64::max)
    }

    /// Pointwise negative part `max(-v, 0)`.
    pub fn negative_part(&self) -> GridFunction {
        self.map(negative_part)
    }

    pub fn positive_part(&self) -> GridFunction {
        self.map(|v| v.max(0.0))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `s⁻ = max(-s, 0)`.
#[inline]
pub fn negative_part(s: f64) -> f64 {
    (-s).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Grid,
    values: Vec<f64>,
}

impl FaceField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_faces() {
            return Err(Error::Shape {
                expected: grid.n_faces(),
                found: values.len(),
            });
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite flux at face {j}"
            )));
        }
        Ok(FaceField { grid, values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_faces());
        FaceField { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(f64) -> f64) -> Self {
        FaceField {
            grid,
            values: grid.faces().into_iter().map(f).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Face-weighted pairing `Σ_j p_j q_j dx`.
    pub fn dot(&self, other: &FaceField) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.dx())
    }
}

/// Node value with the Dirichlet boundary folded in: index `0` and `n_cells`
/// are boundary nodes and read as zero.
#[inline]
pub(crate) fn padded(values: &[f64], k: usize) -> f64 {
    if k == 0 || k > values.len() {
        0.0
    } else {
        values[k - 1]
    }
}

pub fn gradient(u: &GridFunction) -> FaceField {
    let grid = u.grid;
    let dx = grid.dx();
    let values = (0..grid.n_faces())
        .map(|j| (padded(&u.values, j + 1) - padded(&u.values, j)) / dx)
        .collect();
    FaceField::from_raw(grid, values)
}

pub fn divergence(q: &FaceField) -> GridFunction {
    let grid = q.grid;
    let dx = grid.dx();
    let values = (0..grid.n_nodes())
        .map(|i| (q.values[i + 1] - q.values[i]) / dx)
        .collect();
    GridFunction::from_raw(grid, values)
}

/// Discrete `L^p` norm `(Σ |u_i|^p dx)^{1/p}`; `p = ∞` gives the max norm.
pub fn norm_lp(u: &GridFunction, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidConfig(format!("norm exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(u.values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let dx = u.grid.dx();
    if p == 2.0 {
        return Ok((u.values.iter().map(|v| v * v).sum::<f64>() * dx).sqrt());
    }
    let s: f64 = u.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * dx;
    Ok(s.powf(1.0 / p))
}

/// Squared discrete `L²` norm; cheaper than squaring `norm_lp(u, 2)`.
pub fn norm_l2_sq(u: &GridFunction) -> f64 {
    u.values.iter().map(|v| v * v).sum::<f64>() * u.grid.dx()
}

pub fn norm_l1(u: &GridFunction) -> f64 {
    u.values.iter().map(|v| v.abs()).sum::<f64>() * u.grid.dx()
}

/// Discrete `L²` pairing `Σ u_i v_i dx`.
pub fn inner_product(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.grid.ensure_same(&v.grid)?;
    Ok(u.values
        .iter()
        .zip(&v.values)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * u.grid.dx())
}
