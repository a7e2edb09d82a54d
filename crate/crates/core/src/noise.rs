//! Space-time white noise on the grid.
//!
//! The increment `dW[m][j]` of the Brownian sheet over the cell
//! `[m dt, (m+1) dt) x [x_j, x_j + dx)` is `N(0, dt * dx)`. Rows are
//! generated from a keyed counter: the uniform words of row `m` of path `p`
//! are `mix(row_key(seed, p, m) + k * GOLDEN)` for `k = 0, 1, ...` (the
//! SplitMix64 output function applied to a counter), and the ziggurat
//! sampler turns them into standard normals. Any row can be regenerated on
//! its own and a time shift is an offset of the row counter.

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fields::TorusGrid;

/// Identifies the increment generator. Changing the key schedule, the block
/// cipher or the Gaussian transform must change this string.
pub const GENERATOR_VERSION: &str = "splitmix64-row-counter/ziggurat-rand_distr-0.5.1/v1";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn path_key(seed: u64, path_id: u64) -> u64 {
    mix64(mix64(seed ^ 0x5851_F42D_4C95_7F2D).wrapping_add(path_id.wrapping_mul(GOLDEN)) ^ 0x1405_7B7E_F767_814F)
}

/// Counter-based word source for one row.
struct RowCounter {
    state: u64,
}

impl RowCounter {
    #[inline]
    fn new(key: u64, row: u64) -> Self {
        Self { state: mix64(key ^ mix64(row.wrapping_add(GOLDEN))) }
    }
}

impl RngCore for RowCounter {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline(always)]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let w = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

/// Immutable description of one path's noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStream {
    seed: u64,
    path_id: u64,
    grid: TorusGrid,
    dt: f64,
    /// Step offset applied to every lookup.
    cursor: u64,
    key: u64,
    scale: f64,
}

impl NoiseStream {
    pub fn new(seed: u64, path_id: u64, grid: TorusGrid, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("noise time step must be positive, got {dt}")));
        }
        Ok(Self {
            seed,
            path_id,
            grid,
            dt,
            cursor: 0,
            key: path_key(seed, path_id),
            scale: (dt * grid.spacing()).sqrt(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Write row `step` into `out` (length `n_points`).
    pub fn fill_increments(&self, step: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.grid.n_points());
        let mut rng = RowCounter::new(self.key, self.cursor + step);
        for w in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = self.scale * z;
        }
    }

    /// Row `step` of the increment matrix.
    pub fn increments(&self, step: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_points()];
        self.fill_increments(step, &mut out);
        out
    }

    /// The noise seen after `shift_steps` steps: row `m` of the result is row
    /// `m + shift_steps` of `self`.
    pub fn shifted(&self, shift_steps: i64) -> Result<Self> {
        if shift_steps < 0 {
            return Err(Error::Domain(format!("shift must be non-negative, got {shift_steps}")));
        }
        let mut s = self.clone();
        s.cursor += shift_steps as u64;
        Ok(s)
    }

    /// `sum_{m, j} phi[m][j] dW[m][j]` over the first `phi.len()` steps.
    pub fn wiener_integral(&self, phi: &[Vec<f64>]) -> Result<f64> {
        let n = self.grid.n_points();
        let mut row = vec![0.0; n];
        let mut acc = 0.0;
        for (m, phi_row) in phi.iter().enumerate() {
            if phi_row.len() != n {
                return Err(Error::Domain(format!(
                    "test function row {m} has {} entries, grid has {n}",
                    phi_row.len()
                )));
            }
            self.fill_increments(m as u64, &mut row);
            acc += phi_row.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(acc)
    }
}
