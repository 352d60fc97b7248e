//! Fixed-step closed-loop simulation.
//!
//! The controller side always works with the catalogue parameters of the
//! plant; the integrated plant uses the perturbed copy. Inputs are held
//! constant over each RK4 step.

mod metrics;
mod run;
mod scenario;

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use metrics::{compute_metrics, ConstraintMetrics, Metrics, ViolationInterval, SLIDING_TOL};
pub use run::{run_closed_loop, BarrierRecord, ConstraintInfo, StepRecord, TrajectoryLog};
pub use scenario::{
    ConstraintConfig, ControllerConfig, FilterConfig, FilterMode, PlantConfig, Scenario,
    SmcbfConfig,
};

/// One classical Runge–Kutta step of `ẋ = f(x, u)` with `u` held.
///
/// `t` is only used to label the error when a stage turns non-finite.
pub fn rk4_step<const N: usize, U, F>(
    deriv: F,
    x: &SVector<f64, N>,
    u: &U,
    dt: f64,
    t: f64,
) -> Result<SVector<f64, N>>
where
    F: Fn(&SVector<f64, N>, &U) -> SVector<f64, N>,
{
    let k1 = deriv(x, u);
    let k2 = deriv(&(x + k1 * (0.5 * dt)), u);
    let k3 = deriv(&(x + k2 * (0.5 * dt)), u);
    let k4 = deriv(&(x + k3 * dt), u);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let finite = |v: &SVector<f64, N>| v.iter().all(|e| e.is_finite());
    if !(finite(&k1) && finite(&k2) && finite(&k3) && finite(&k4) && finite(&next)) {
        return Err(Error::NonFinite {
            t,
            state: x.iter().copied().collect(),
        });
    }
    Ok(next)
}

/// Reference signal for one output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    Constant { value: f64 },
    /// `+amplitude` on the first half of every period, `−amplitude` on the second.
    Square { amplitude: f64, period: f64 },
    /// `amplitude` on each `[tᵢ, tᵢ + width)`, zero elsewhere.
    Pulses {
        amplitude: f64,
        width: f64,
        times: Vec<f64>,
    },
    /// Holds `values[i]` from `times[i]` on; zero before the first time.
    Steps { times: Vec<f64>, values: Vec<f64> },
}

impl ReferenceSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ReferenceSpec::Constant { value } if !value.is_finite() => {
                Err(Error::invalid("value", "must be finite"))
            }
            ReferenceSpec::Square { period, .. } if !(*period > 0.0) => {
                Err(Error::invalid("period", "must be positive"))
            }
            ReferenceSpec::Pulses { width, .. } if !(*width > 0.0) => {
                Err(Error::invalid("width", "must be positive"))
            }
            ReferenceSpec::Steps { times, values } => {
                if times.len() != values.len() {
                    return Err(Error::invalid("steps", "times and values differ in length"));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid("times", "must be strictly increasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Value of `spec` at time `t`.
pub fn generate_reference(spec: &ReferenceSpec, t: f64) -> f64 {
    match spec {
        ReferenceSpec::Constant { value } => *value,
        ReferenceSpec::Square { amplitude, period } => {
            if (t / period).fract() < 0.5 {
                *amplitude
            } else {
                -amplitude
            }
        }
        ReferenceSpec::Pulses {
            amplitude,
            width,
            times,
        } => {
            if times.iter().any(|&s| t >= s && t < s + width) {
                *amplitude
            } else {
                0.0
            }
        }
        ReferenceSpec::Steps { times, values } => times
            .iter()
            .zip(values)
            .take_while(|(s, _)| t >= **s)
            .last()
            .map_or(0.0, |(_, v)| *v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector1;

    #[test]
    fn rk4_trivial_and_exponential() {
        let x = Vector1::new(2.0);
        let still = rk4_step(|_, _: &()| Vector1::zeros(), &x, &(), 0.1, 0.0).unwrap();
        assert_eq!(still, x);
        let a = -1.3;
        for dt in [0.1, 0.05] {
            let next = rk4_step(|v, _: &()| v * a, &x, &(), dt, 0.0).unwrap();
            let exact = 2.0 * (a * dt).exp();
            // Local error of RK4 is (aΔt)⁵/120 relative.
            assert!((next[0] - exact).abs() <= 2.0 * (a * dt).abs().powi(5) / 120.0 * 1.01);
        }
    }

    #[test]
    fn rk4_reports_non_finite() {
        let x = Vector1::new(1.0);
        let err = rk4_step(|_, _: &()| Vector1::new(f64::NAN), &x, &(), 0.1, 3.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { t, .. } if t == 3.0));
    }

    #[test]
    fn reference_examples() {
        let sq = ReferenceSpec::Square {
            amplitude: 0.5,
            period: 10.0,
        };
        assert_eq!(generate_reference(&sq, 2.0), 0.5);
        assert_eq!(generate_reference(&sq, 7.0), -0.5);
        assert_eq!(generate_reference(&sq, 12.0), 0.5);
        let pulses = ReferenceSpec::Pulses {
            amplitude: 0.14,
            width: 0.5,
            times: vec![15.0],
        };
        assert_eq!(generate_reference(&pulses, 15.2), 0.14);
        assert_eq!(generate_reference(&pulses, 15.6), 0.0);
        assert_eq!(generate_reference(&pulses, 14.9), 0.0);
        let steps = ReferenceSpec::Steps {
            times: vec![0.0, 2.0],
            values: vec![-0.05, -0.035],
        };
        assert_eq!(generate_reference(&steps, 0.0), -0.05);
        assert_eq!(generate_reference(&steps, 1.999), -0.05);
        assert_eq!(generate_reference(&steps, 2.5), -0.035);
        let late = ReferenceSpec::Steps {
            times: vec![1.0],
            values: vec![3.0],
        };
        assert_eq!(generate_reference(&late, 0.5), 0.0);
    }

    #[test]
    fn reference_validation() {
        assert!(ReferenceSpec::Square {
            amplitude: 1.0,
            period: 0.0
        }
        .validate()
        .is_err());
        assert!(ReferenceSpec::Steps {
            times: vec![1.0, 1.0],
            values: vec![0.0, 1.0]
        }
        .validate()
        .is_err());
        assert!(ReferenceSpec::Steps {
            times: vec![1.0],
            values: vec![]
        }
        .validate()
        .is_err());
    }
}
