//! Learning-rate schedules.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `ρ_t = (τ + t)^{−κ}`
    Classic,
    /// `ρ_t = (τ + (N_t − N₀)/B)^{−κ}`
    Streaming,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub kappa: f64,
    pub tau: f64,
    pub batch_size: usize,
    /// Data count when learning started; only used by the streaming kind.
    #[serde(default)]
    pub n0: f64,
}

impl Schedule {
    pub fn classic(kappa: f64, tau: f64, batch_size: usize) -> Self {
        Self { kind: ScheduleKind::Classic, kappa, tau, batch_size, n0: 0.0 }
    }

    pub fn streaming(kappa: f64, tau: f64, batch_size: usize, n0: f64) -> Self {
        Self { kind: ScheduleKind::Streaming, kappa, tau, batch_size, n0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::usage(format!("kappa must lie in (0, 1], got {}", self.kappa)));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::usage(format!("tau must be non-negative, got {}", self.tau)));
        }
        if self.batch_size == 0 {
            return Err(Error::usage("batch size must be at least 1"));
        }
        if !(self.n0 >= 0.0) {
            return Err(Error::usage("initial data count must be non-negative"));
        }
        Ok(())
    }
}

/// Step size for step `t` with `n_t` records available, clamped to 1.
pub fn learning_rate(s: &Schedule, t: u64, n_t: f64) -> Result<f64> {
    s.validate()?;
    let progress = match s.kind {
        ScheduleKind::Classic => t as f64,
        ScheduleKind::Streaming => {
            if !(n_t >= s.n0) {
                return Err(Error::usage(format!("data count {n_t} is below the starting count {}", s.n0)));
            }
            (n_t - s.n0) / s.batch_size as f64
        }
    };
    Ok((s.tau + progress).powf(-s.kappa).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let s = Schedule::streaming(0.5, 1.0, 10, 40.0);
        assert_eq!(learning_rate(&s, 7, 40.0).unwrap(), 1.0);
        let c = Schedule::classic(0.5, 100.0, 200);
        assert!((learning_rate(&c, 0, 0.0).unwrap() - 0.1).abs() < 1e-15);
        let c = Schedule::classic(1.0, 0.0, 1);
        assert_eq!(learning_rate(&c, 4, 0.0).unwrap(), 0.25);
        assert!((learning_rate(&c, 5, 0.0).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_base_clamps_to_one() {
        let c = Schedule::classic(0.7, 0.0, 1);
        assert_eq!(learning_rate(&c, 0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn streaming_ignores_step_count() {
        let s = Schedule::streaming(0.5, 4.0, 5, 10.0);
        let a = learning_rate(&s, 0, 30.0).unwrap();
        let b = learning_rate(&s, 1000, 30.0).unwrap();
        assert_eq!(a, b);
        assert!((a - 8f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(learning_rate(&Schedule::classic(0.0, 1.0, 1), 0, 0.0).is_err());
        assert!(learning_rate(&Schedule::classic(1.5, 1.0, 1), 0, 0.0).is_err());
        assert!(learning_rate(&Schedule::classic(0.5, -1.0, 1), 0, 0.0).is_err());
        assert!(learning_rate(&Schedule::streaming(0.5, 1.0, 1, 10.0), 0, 5.0).is_err());
    }
}
