//! Torus geometry and discrete fields.
//!
//! The torus of circumference 2 is identified with `[-1, 1)`. A grid with
//! `n` cells carries values at the left endpoints `x_j = -1 + j * dx`, so for
//! even `n` the origin is the point `j = n / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on the torus `[-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TorusGrid {
    n_points: usize,
    spacing: f64,
}

impl TorusGrid {
    pub const CIRCUMFERENCE: f64 = 2.0;

    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 4 || !n_points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_points must be even and >= 4, got {n_points}"
            )));
        }
        let spacing = Self::CIRCUMFERENCE / n_points as f64;
        if spacing * n_points as f64 != Self::CIRCUMFERENCE {
            return Err(Error::InvalidGrid(format!(
                "spacing 2/{n_points} does not tile the torus exactly"
            )));
        }
        Ok(Self { n_points, spacing })
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Coordinate of grid point `j` in `[-1, 1)`.
    #[inline]
    pub fn point(&self, j: usize) -> f64 {
        -1.0 + j as f64 * self.spacing
    }

    /// Index of the grid point at `x = 0`.
    #[inline]
    pub fn origin_index(&self) -> usize {
        self.n_points / 2
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |j| self.point(j))
    }

    /// Periodic distance between two torus points.
    pub fn distance(x: f64, y: f64) -> f64 {
        let d = (x - y).rem_euclid(Self::CIRCUMFERENCE);
        d.min(Self::CIRCUMFERENCE - d)
    }
}

impl TryFrom<usize> for TorusGrid {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        TorusGrid::new(n)
    }
}

impl From<TorusGrid> for usize {
    fn from(g: TorusGrid) -> usize {
        g.n_points
    }
}

/// Values of a field at the points of a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        let f = Self { grid, values };
        f.check_finite()?;
        Ok(f)
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.n_points()])
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect())
    }

    /// Field that is `mass / dx` on the cell at `index` and zero elsewhere.
    pub fn unit_spike(grid: TorusGrid, index: usize, mass: f64) -> Result<Self> {
        if index >= grid.n_points() {
            return Err(Error::InvalidGrid(format!("spike index {index} out of range")));
        }
        let mut values = vec![0.0; grid.n_points()];
        values[index] = mass / grid.spacing();
        Self::new(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::InvalidField { index, value: self.values[index] }),
            None => Ok(()),
        }
    }

    pub fn check_positive(&self) -> Result<()> {
        self.check_finite()?;
        match self.values.iter().position(|&v| v <= 0.0) {
            Some(index) => Err(Error::Positivity { index, value: self.values[index] }),
            None => Ok(()),
        }
    }
}

/// `dx * sum |f_j|`.
pub fn norm_l1(f: &GridFunction) -> Result<f64> {
    f.check_finite()?;
    Ok(f.grid.spacing() * f.values.iter().map(|v| v.abs()).sum::<f64>())
}

/// `max |f_j|`.
pub fn norm_sup(f: &GridFunction) -> Result<f64> {
    f.check_finite()?;
    Ok(f.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// `max log f - min log f`. Rejects non-positive fields.
pub fn osc_log(f: &GridFunction) -> Result<f64> {
    f.check_positive()?;
    let (lo, hi) = min_max(&f.values);
    Ok(hi.ln() - lo.ln())
}

/// `norm_sup(f) / norm_l1(f)`.
pub fn ratio_sup_l1(f: &GridFunction) -> Result<f64> {
    let l1 = norm_l1(f)?;
    if l1 <= 0.0 {
        return Err(Error::Degenerate("field has zero mass".into()));
    }
    Ok(norm_sup(f)? / l1)
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}
