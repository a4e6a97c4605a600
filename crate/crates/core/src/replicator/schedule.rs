//! Positive temperature schedules `T(t)` and the effective time `τ(t) = ∫₀ᵗ du / T(u)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::Temperature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemperatureSchedule {
    Constant { value: f64 },
    /// `values[0]` on `[0, breakpoints[0])`, `values[k]` on `[breakpoints[k-1], breakpoints[k])`,
    /// and the last value after the last breakpoint.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// `T(t) = t0 · exp(rate · t)`; a negative rate anneals.
    Exponential { t0: f64, rate: f64 },
}

/// `τ(t)`, nonnegative and nondecreasing in `t`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EffectiveTime(pub f64);

impl EffectiveTime {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl TemperatureSchedule {
    pub fn constant(t: Temperature) -> Self {
        Self::Constant { value: t.value() }
    }

    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let s = Self::PiecewiseConstant { breakpoints, values };
        s.validate()?;
        Ok(s)
    }

    pub fn exponential(t0: f64, rate: f64) -> Result<Self> {
        let s = Self::Exponential { t0, rate };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { value } => positive("temperature", *value),
            Self::PiecewiseConstant { breakpoints, values } => {
                if values.len() != breakpoints.len() + 1 {
                    return Err(Error::InvalidInput(format!(
                        "piecewise schedule needs {} values for {} breakpoints, got {}",
                        breakpoints.len() + 1,
                        breakpoints.len(),
                        values.len()
                    )));
                }
                for v in values {
                    positive("temperature", *v)?;
                }
                let mut prev = 0.0;
                for &b in breakpoints {
                    if !(b.is_finite() && b > prev) {
                        return Err(Error::InvalidInput(
                            "breakpoints must be positive and strictly increasing".into(),
                        ));
                    }
                    prev = b;
                }
                Ok(())
            }
            Self::Exponential { t0, rate } => {
                positive("initial temperature", *t0)?;
                if !rate.is_finite() {
                    return Err(Error::InvalidInput("rate must be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// `T(t)` for `t ≥ 0`.
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::PiecewiseConstant { breakpoints, values } => {
                let k = breakpoints.partition_point(|&b| b <= t);
                values[k]
            }
            Self::Exponential { t0, rate } => t0 * (rate * t).exp(),
        }
    }

    /// Times where `T` jumps; integrators step exactly onto them.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Self::PiecewiseConstant { breakpoints, .. } => breakpoints,
            _ => &[],
        }
    }

    /// First breakpoint strictly after `t`.
    pub(crate) fn next_breakpoint(&self, t: f64) -> Option<f64> {
        let b = self.breakpoints();
        let k = b.partition_point(|&x| x <= t);
        b.get(k).copied()
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant { .. })
    }
}

/// Closed-form `τ(t) = ∫₀ᵗ du / T(u)`. Negative `t` is treated as 0.
pub fn effective_time(schedule: &TemperatureSchedule, t: f64) -> EffectiveTime {
    let t = t.max(0.0);
    let tau = match schedule {
        TemperatureSchedule::Constant { value } => t / value,
        TemperatureSchedule::PiecewiseConstant { breakpoints, values } => {
            let mut tau = 0.0;
            let mut start = 0.0;
            for (k, &v) in values.iter().enumerate() {
                let end = breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
                if t <= start {
                    break;
                }
                tau += (t.min(end) - start) / v;
                start = end;
            }
            tau
        }
        TemperatureSchedule::Exponential { t0, rate } => {
            if *rate == 0.0 {
                t / t0
            } else {
                -(-rate * t).exp_m1() / (rate * t0)
            }
        }
    };
    EffectiveTime(tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_time_examples() {
        let c = TemperatureSchedule::Constant { value: 2.0 };
        assert_eq!(effective_time(&c, 4.0).value(), 2.0);

        let pw = TemperatureSchedule::piecewise(vec![1.0], vec![1.0, 2.0]).unwrap();
        assert!((effective_time(&pw, 3.0).value() - 2.0).abs() < 1e-15);
        assert!((effective_time(&pw, 0.5).value() - 0.5).abs() < 1e-15);

        let ex = TemperatureSchedule::exponential(1.0, 1.0).unwrap();
        let tau = effective_time(&ex, 1.0).value();
        assert!((tau - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((tau - 0.632_121).abs() < 1e-6);
    }

    #[test]
    fn effective_time_is_monotone() {
        let scheds = [
            TemperatureSchedule::piecewise(vec![0.5, 1.5, 4.0], vec![1.0, 0.2, 3.0, 0.7]).unwrap(),
            TemperatureSchedule::exponential(0.5, -0.3).unwrap(),
            TemperatureSchedule::exponential(2.0, 0.0).unwrap(),
        ];
        for s in &scheds {
            let mut prev = -1.0;
            for k in 0..200 {
                let tau = effective_time(s, k as f64 * 0.05).value();
                assert!(tau > prev);
                prev = tau;
            }
        }
    }

    #[test]
    fn piecewise_lookup_and_validation() {
        let pw = TemperatureSchedule::piecewise(vec![1.0, 2.0], vec![1.0, 0.5, 4.0]).unwrap();
        assert_eq!(pw.at(0.0), 1.0);
        assert_eq!(pw.at(1.0), 0.5);
        assert_eq!(pw.at(1.999), 0.5);
        assert_eq!(pw.at(7.0), 4.0);
        assert_eq!(pw.next_breakpoint(1.0), Some(2.0));
        assert_eq!(pw.next_breakpoint(2.0), None);
        assert!(TemperatureSchedule::piecewise(vec![1.0, 1.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(TemperatureSchedule::piecewise(vec![1.0], vec![1.0]).is_err());
        assert!(TemperatureSchedule::piecewise(vec![1.0], vec![1.0, -1.0]).is_err());
        assert!(TemperatureSchedule::exponential(0.0, 1.0).is_err());
    }
}
