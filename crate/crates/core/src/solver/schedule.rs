//! Renormalization epochs `t_1 = 1, t_2 = 2, t_{k+1} = t_k + (log k)^{-alpha}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenormSchedule {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RenormSchedule {
    fn default() -> Self {
        Self { alpha: 5.5, beta: 3.1 }
    }
}

impl RenormSchedule {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let s = Self { alpha, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 3.0) {
            return Err(Error::Config(format!("schedule needs beta > 3, got {}", self.beta)));
        }
        if !(self.alpha > 5.0 && self.alpha > 4.0 * self.beta / 3.0 + 1.0) {
            return Err(Error::Config(format!(
                "schedule needs alpha > max(5, 4 beta / 3 + 1), got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Unsnapped epochs `t_1, t_2, ...` (infinite iterator).
    pub fn epochs(&self) -> Epochs {
        Epochs { alpha: self.alpha, k: 0, t: 0.0 }
    }

    /// Gap `t_{k+1} - t_k` following epoch `k >= 1`.
    pub fn gap_after(&self, k: u64) -> f64 {
        if k == 1 {
            1.0
        } else {
            (k as f64).ln().powf(-self.alpha)
        }
    }
}

/// Iterator over unsnapped epochs.
#[derive(Debug, Clone)]
pub struct Epochs {
    alpha: f64,
    k: u64,
    t: f64,
}

impl Iterator for Epochs {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        self.t = match self.k {
            0 => 1.0,
            1 => 2.0,
            k => self.t + (k as f64).ln().powf(-self.alpha),
        };
        self.k += 1;
        Some(self.t)
    }
}

/// Step-grid view of a schedule. Epochs are snapped to the nearest step;
/// once the unsnapped gap drops below one step every later step is an epoch
/// (the gaps decrease monotonically).
#[derive(Debug, Clone)]
pub struct EpochCursor {
    schedule: RenormSchedule,
    dt: f64,
    epochs: Epochs,
    k: u64,
    next_step: Option<u64>,
    dense_from: Option<u64>,
    unsnapped: Vec<f64>,
}

impl EpochCursor {
    pub fn new(schedule: RenormSchedule, dt: f64) -> Self {
        let mut c = Self {
            schedule,
            dt,
            epochs: schedule.epochs(),
            k: 0,
            next_step: None,
            dense_from: None,
            unsnapped: Vec::new(),
        };
        c.advance_to(0);
        c
    }

    fn snap(&self, t: f64) -> u64 {
        (t / self.dt).round() as u64
    }

    /// Move past every epoch at or before `step`.
    fn advance_to(&mut self, step: u64) {
        if self.dense_from.is_some() {
            return;
        }
        loop {
            if let Some(s) = self.next_step {
                if s > step {
                    return;
                }
            }
            let t = self.epochs.next().expect("epochs are infinite");
            self.k += 1;
            self.unsnapped.push(t);
            if self.k >= 2 && self.schedule.gap_after(self.k) < self.dt {
                let s = self.snap(t);
                self.dense_from = Some(s.max(step + 1));
                self.next_step = None;
                return;
            }
            let s = self.snap(t);
            if s > step {
                self.next_step = Some(s);
                return;
            }
        }
    }

    /// Whether `step` (the step index reached after an update) is an epoch.
    /// Must be called with non-decreasing `step`.
    pub fn is_epoch(&mut self, step: u64) -> bool {
        if let Some(d) = self.dense_from {
            return step >= d;
        }
        match self.next_step {
            Some(s) if s <= step => {
                self.advance_to(step);
                s == step || self.dense_from.is_some_and(|d| step >= d)
            }
            _ => false,
        }
    }

    /// Unsnapped epochs generated so far.
    pub fn unsnapped(&self) -> &[f64] {
        &self.unsnapped
    }

    /// Step from which every step is an epoch, once known.
    pub fn dense_from(&self) -> Option<u64> {
        self.dense_from
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_epochs() {
        let e: Vec<f64> = RenormSchedule { alpha: 5.0, beta: 3.1 }.epochs().take(3).collect();
        assert_eq!(e[0], 1.0);
        assert_eq!(e[1], 2.0);
        let direct = 2.0 + 2f64.ln().powf(-5.0);
        assert!((e[2] - direct).abs() < 1e-12);
        assert!((e[2] - 8.2499).abs() < 1e-4);
    }

    #[test]
    fn parameter_constraints() {
        assert!(RenormSchedule::new(5.5, 3.1).is_ok());
        assert!(RenormSchedule::new(5.0, 3.1).is_err());
        assert!(RenormSchedule::new(6.0, 3.0).is_err());
        assert!(RenormSchedule::new(5.1, 3.5).is_err());
    }

    #[test]
    fn cursor_snaps_and_becomes_dense() {
        let dt = 0.01;
        let mut c = EpochCursor::new(RenormSchedule::default(), dt);
        let hits: Vec<u64> = (1..=3000).filter(|&s| c.is_epoch(s)).collect();
        assert_eq!(hits[0], 100);
        assert_eq!(hits[1], 200);
        let t3 = 2.0 + 2f64.ln().powf(-5.5);
        assert_eq!(hits[2], (t3 / dt).round() as u64);
        let dense = c.dense_from().expect("gap shrinks below dt");
        assert!(hits.windows(2).all(|w| w[0] < w[1]));
        assert!((dense..=3000).all(|s| hits.contains(&s)));
        assert!(c.unsnapped().windows(2).all(|w| w[0] < w[1]));
    }
}
