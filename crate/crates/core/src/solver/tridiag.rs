//! Backward-Euler resolvent of the periodic second-difference operator.
//!
//! Solves `(1 + 2r) x_j - r x_{j-1} - r x_{j+1} = b_j` with periodic indices,
//! `r = dt / dx^2`, by the Thomas algorithm on the bordered system plus a
//! Sherman-Morrison correction for the two corner entries. Everything that
//! does not depend on `b` is factored once.
//!
//! The inverse is a symmetric circulant whose entries decay geometrically
//! away from the diagonal. When the decay is fast enough that the taps beyond
//! some distance short of half the ring sum to less than [`TAP_TOLERANCE`] of the central
//! tap, `solve` applies the truncated circulant as a convolution instead,
//! which vectorizes; the factorization still supplies the taps. Small rings
//! with slow decay use the whole circulant. Either way a constant right-hand
//! side gives an exactly constant solution.

/// Relative size of the discarded tail of the inverse circulant.
pub const TAP_TOLERANCE: f64 = 1e-18;

/// Largest ring on which the untruncated inverse is applied as a convolution
/// when the taps decay too slowly to truncate.
pub const FULL_CIRCULANT_MAX: usize = 512;

#[derive(Debug, Clone)]
pub struct PeriodicResolvent {
    n: usize,
    off: f64,
    /// Modified super-diagonal after forward elimination.
    gam: Vec<f64>,
    /// Inverse pivots of the forward elimination.
    inv_bet: Vec<f64>,
    /// Solution of the bordered system against the corner vector.
    z: Vec<f64>,
    corner_ratio: f64,
    denom: f64,
    /// Taps `c_0, c_1, ..., c_K` of the truncated inverse, empty when the
    /// direct solve is used.
    taps: Vec<f64>,
    /// Right-hand side with `K` ghost cells on each side.
    padded: Vec<f64>,
}

impl PeriodicResolvent {
    /// Factor `I - dt * Laplacian` on `n` points with spacing `dx`.
    pub fn new(n: usize, dt: f64, dx: f64) -> Self {
        assert!(n >= 3, "periodic resolvent needs at least 3 points");
        let r = dt / (dx * dx);
        let diag = 1.0 + 2.0 * r;
        let off = -r;
        // Corners: A[0][n-1] = beta = off, A[n-1][0] = alpha = off.
        let gamma = -diag;
        let mut main = vec![diag; n];
        main[0] = diag - gamma;
        main[n - 1] = diag - off * off / gamma;

        let mut gam = vec![0.0; n];
        let mut inv_bet = vec![0.0; n];
        let mut bet = main[0];
        inv_bet[0] = 1.0 / bet;
        for j in 1..n {
            gam[j] = off / bet;
            bet = main[j] - off * gam[j];
            inv_bet[j] = 1.0 / bet;
        }

        let mut s = Self {
            n,
            off,
            gam,
            inv_bet,
            z: vec![0.0; n],
            corner_ratio: off / gamma,
            denom: 0.0,
            taps: Vec::new(),
            padded: Vec::new(),
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = off;
        let mut z = vec![0.0; n];
        s.thomas(&u, &mut z);
        s.denom = 1.0 + z[0] + s.corner_ratio * z[n - 1];
        s.z = z;

        let mut e0 = vec![0.0; n];
        e0[0] = 1.0;
        let mut column = vec![0.0; n];
        s.solve_direct(&e0, &mut column);
        // tail[k] bounds the mass of the taps beyond distance k.
        let mut tail = vec![0.0; n / 2 + 1];
        for k in (0..n / 2).rev() {
            tail[k] = tail[k + 1] + column[k + 1].abs() + column[n - k - 1].abs();
        }
        let truncated = (1..n.div_ceil(2)).find(|&k| tail[k] <= TAP_TOLERANCE * column[0]);
        let width = truncated.or((n <= FULL_CIRCULANT_MAX).then_some(n / 2));
        if let Some(w) = width {
            s.taps = (0..=w).map(|k| 0.5 * (column[k] + column[(n - k) % n])).collect();
            if 2 * w == n {
                // Cell j + n/2 is reached from both sides; count it once.
                s.taps[w] *= 0.5;
            }
            s.padded = vec![0.0; n + 2 * w];
        }
        s
    }

    /// Number of off-diagonal taps used by the convolution, or `None` when
    /// the direct solve is used.
    pub fn tap_width(&self) -> Option<usize> {
        (!self.taps.is_empty()).then(|| self.taps.len() - 1)
    }

    fn thomas(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        x[0] = b[0] * self.inv_bet[0];
        for j in 1..n {
            x[j] = (b[j] - self.off * x[j - 1]) * self.inv_bet[j];
        }
        for j in (0..n - 1).rev() {
            x[j] -= self.gam[j + 1] * x[j + 1];
        }
    }

    /// Overwrite `x` with the solution for right-hand side `b`.
    pub fn solve(&mut self, b: &[f64], x: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        assert_eq!(x.len(), self.n);
        if self.taps.is_empty() {
            self.solve_direct(b, x);
            return;
        }
        let n = self.n;
        let w = self.taps.len() - 1;
        self.padded[..w].copy_from_slice(&b[n - w..]);
        self.padded[w..w + n].copy_from_slice(b);
        self.padded[w + n..].copy_from_slice(&b[..w]);
        convolve(&self.taps, &self.padded, x);
    }

    /// Solve with the factorization, without truncation.
    pub fn solve_direct(&self, b: &[f64], x: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        debug_assert_eq!(x.len(), self.n);
        self.thomas(b, x);
        let fact = (x[0] + self.corner_ratio * x[self.n - 1]) / self.denom;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= fact * zi;
        }
    }
}

#[inline(always)]
fn convolve_body(taps: &[f64], padded: &[f64], x: &mut [f64]) {
    let w = taps.len() - 1;
    let n = x.len();
    let centre = &padded[w..w + n];
    for (xi, &p) in x.iter_mut().zip(centre) {
        *xi = taps[0] * p;
    }
    for (k, &c) in taps.iter().enumerate().skip(1) {
        let left = &padded[w - k..w - k + n];
        let right = &padded[w + k..w + k + n];
        for ((xi, &l), &r) in x.iter_mut().zip(left).zip(right) {
            *xi += c * (l + r);
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn convolve_avx2(taps: &[f64], padded: &[f64], x: &mut [f64]) {
    convolve_body(taps, padded, x)
}

/// Symmetric convolution of the padded input. The wide path only changes
/// the instruction width; the order of operations per output is the same, so
/// results are bit-identical across hosts.
fn convolve(taps: &[f64], padded: &[f64], x: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature is present on this host.
        unsafe { convolve_avx2(taps, padded, x) };
        return;
    }
    convolve_body(taps, padded, x)
}
