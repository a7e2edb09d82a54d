use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the diffusion coefficient. Every kind satisfies `sigma(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaKind {
    Zero,
    Linear { q: f64 },
    /// Continuous piecewise-linear function through the origin. `slopes[0]`
    /// applies below `knots[0]`, `slopes[i]` on `[knots[i-1], knots[i]]`, and
    /// the last slope above the last knot.
    PiecewiseLinear { knots: Vec<f64>, slopes: Vec<f64> },
}

/// A Lipschitz diffusion coefficient with `sigma(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SigmaKind", into = "SigmaKind")]
pub struct SigmaSpec {
    kind: SigmaKind,
    lipschitz_constant: f64,
    /// `sigma(knots[i])`, cached for piecewise kinds.
    knot_values: Vec<f64>,
}

impl SigmaSpec {
    pub fn zero() -> Self {
        Self { kind: SigmaKind::Zero, lipschitz_constant: 0.0, knot_values: Vec::new() }
    }

    pub fn linear(q: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::Config(format!("linear sigma needs Q > 0, got {q}")));
        }
        Ok(Self { kind: SigmaKind::Linear { q }, lipschitz_constant: q, knot_values: Vec::new() })
    }

    pub fn piecewise_linear(knots: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if slopes.len() != knots.len() + 1 {
            return Err(Error::Config(format!(
                "piecewise sigma needs one more slope than knots ({} knots, {} slopes)",
                knots.len(),
                slopes.len()
            )));
        }
        if knots.iter().chain(&slopes).any(|v| !v.is_finite()) {
            return Err(Error::Config("piecewise sigma has non-finite parameters".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("piecewise sigma knots must be strictly increasing".into()));
        }
        let lipschitz_constant = slopes.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        let knot_values = knots.iter().map(|&b| integrate_slopes(&knots, &slopes, b)).collect();
        Ok(Self {
            kind: SigmaKind::PiecewiseLinear { knots, slopes },
            lipschitz_constant,
            knot_values,
        })
    }

    pub fn kind(&self) -> &SigmaKind {
        &self.kind
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz_constant
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, SigmaKind::Zero)
    }

    /// `Some(Q)` when `sigma(z) = Q z`.
    pub fn linear_coefficient(&self) -> Option<f64> {
        match self.kind {
            SigmaKind::Linear { q } => Some(q),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match &self.kind {
            SigmaKind::Zero => 0.0,
            SigmaKind::Linear { q } => q * z,
            SigmaKind::PiecewiseLinear { knots, slopes } => {
                let k = knots.partition_point(|&b| b <= z);
                if knots.is_empty() {
                    slopes[0] * z
                } else if k == 0 {
                    self.knot_values[0] + slopes[0] * (z - knots[0])
                } else {
                    self.knot_values[k - 1] + slopes[k] * (z - knots[k - 1])
                }
            }
        }
    }

    /// `w -> sigma(mass * w) / mass`. The Lipschitz constant is unchanged.
    pub fn rescale(&self, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Domain(format!("rescale needs positive finite mass, got {mass}")));
        }
        match &self.kind {
            SigmaKind::Zero | SigmaKind::Linear { .. } => Ok(self.clone()),
            SigmaKind::PiecewiseLinear { knots, slopes } => {
                let mut out = self.clone();
                out.kind = SigmaKind::PiecewiseLinear {
                    knots: knots.iter().map(|b| b / mass).collect(),
                    slopes: slopes.clone(),
                };
                out.knot_values = self.knot_values.iter().map(|v| v / mass).collect();
                Ok(out)
            }
        }
    }
}

/// `int_0^z s(w) dw` for the piecewise-constant slope function.
fn integrate_slopes(knots: &[f64], slopes: &[f64], z: f64) -> f64 {
    // Breakpoints of s together with 0 and z; integrate across them.
    let (lo, hi, sign) = if z >= 0.0 { (0.0, z, 1.0) } else { (z, 0.0, -1.0) };
    let mut edges = vec![lo];
    edges.extend(knots.iter().copied().filter(|&b| b > lo && b < hi));
    edges.push(hi);
    let slope_at = |w: f64| slopes[knots.partition_point(|&b| b <= w)];
    let total: f64 = edges.windows(2).map(|e| slope_at(0.5 * (e[0] + e[1])) * (e[1] - e[0])).sum();
    sign * total
}

impl TryFrom<SigmaKind> for SigmaSpec {
    type Error = Error;

    fn try_from(kind: SigmaKind) -> Result<Self> {
        match kind {
            SigmaKind::Zero => Ok(Self::zero()),
            SigmaKind::Linear { q } => Self::linear(q),
            SigmaKind::PiecewiseLinear { knots, slopes } => Self::piecewise_linear(knots, slopes),
        }
    }
}

impl From<SigmaSpec> for SigmaKind {
    fn from(s: SigmaSpec) -> Self {
        s.kind
    }
}

/// Free-function form of [`SigmaSpec::rescale`].
pub fn rescale_sigma(sigma: &SigmaSpec, mass: f64) -> Result<SigmaSpec> {
    sigma.rescale(mass)
}
