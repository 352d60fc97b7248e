//! Furuta (rotary inverted) pendulum driven by a PWM-controlled DC motor.
//!
//! Generalized coordinates are the arm angle `θ₀` and the pendulum angle
//! `θ₁` (zero upright). The equations of motion come from the Lagrangian
//! with kinetic energies
//!
//! ```text
//! K₀ = ½ I₀ θ̇₀²
//! K₁ = ½ I₁ θ̇₁² + ½ m₁ (l₁² θ̇₁² + r² θ̇₀² + l₁² θ̇₀² sin²θ₁ + 2 r l₁ θ̇₀ θ̇₁ cos θ₁)
//! P  = m₁ g l₁ cos θ₁
//! ```
//!
//! and generalized forces `Q₀ = τ − b₀θ̇₀`, `Q₁ = −b₁θ̇₁`. Written out:
//!
//! ```text
//! [I₀ + m₁r² + m₁l₁²sin²θ₁   m₁rl₁cosθ₁ ] [θ̈₀]   [τ − b₀θ̇₀ − 2m₁l₁² sinθ₁cosθ₁ θ̇₀θ̇₁ + m₁rl₁ sinθ₁ θ̇₁²]
//! [m₁rl₁cosθ₁               I₁ + m₁l₁² ] [θ̈₁] = [−b₁θ̇₁ + m₁l₁² sinθ₁cosθ₁ θ̇₀² + m₁gl₁ sinθ₁         ]
//! ```

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::Perturbable;
use crate::barrier::BarrierEvaluation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FurutaParams {
    /// Arm mass, kg.
    pub m0: f64,
    /// Pendulum mass, kg.
    pub m1: f64,
    /// Arm half-length, m.
    pub l0: f64,
    /// Pendulum half-length, m.
    pub l1: f64,
    /// Distance from the motor axis to the pendulum pivot, m.
    pub r: f64,
    /// Arm centre-of-mass offset from the motor axis, m.
    pub d: f64,
    pub g: f64,
    /// Motor torque constant, N·m/A.
    pub kt: f64,
    /// Back-EMF constant, V·s/rad.
    pub ke: f64,
    /// Armature resistance, Ω.
    pub rm: f64,
    /// Volts applied per unit of PWM duty.
    pub drive_voltage: f64,
    /// Arm viscous damping, N·m·s/rad.
    pub b0: f64,
    /// Pendulum viscous damping, N·m·s/rad.
    pub b1: f64,
}

/// Reference linearization entries that depend on the damping coefficients:
/// `A[2][2]`, `A[2][3]`, `A[3][2]`, `A[3][3]`.
pub const REFERENCE_DAMPING_ENTRIES: [f64; 4] = [-0.1446, 0.0003, 0.2200, -0.0015];

impl FurutaParams {
    /// Catalogue values with damping from [`fit_damping`] against
    /// [`REFERENCE_DAMPING_ENTRIES`].
    pub fn nominal() -> Self {
        Self {
            m0: 0.393,
            m1: 0.068,
            l0: 0.365 / 2.0,
            l1: 0.207 / 2.0,
            r: 0.210,
            d: 0.022,
            g: 9.81,
            kt: 0.02,
            ke: 0.08,
            rm: 2.4,
            drive_voltage: 12.0,
            b0: 1.000_758_072_308_156_5e-4,
            b1: 1.033_981_886_489_756_5e-6,
        }
    }

    /// Arm inertia about the motor axis.
    pub fn arm_inertia(&self) -> f64 {
        self.m0 * (2.0 * self.l0).powi(2) / 12.0 + self.m0 * self.d * self.d
    }

    /// Pendulum inertia about its centre of mass.
    pub fn pendulum_inertia(&self) -> f64 {
        self.m1 * (2.0 * self.l1).powi(2) / 12.0
    }

    /// Motor torque per unit duty at zero speed.
    pub fn torque_per_duty(&self) -> f64 {
        self.kt * self.drive_voltage / self.rm
    }

    /// Viscous torque coefficient of the motor back-EMF.
    pub fn back_emf_damping(&self) -> f64 {
        self.kt * self.ke / self.rm
    }

    fn mass_matrix(&self, theta1: f64) -> Matrix2<f64> {
        let (s, c) = theta1.sin_cos();
        let m1 = self.m1;
        let m00 = self.arm_inertia() + m1 * self.r * self.r + m1 * self.l1 * self.l1 * s * s;
        let m01 = m1 * self.r * self.l1 * c;
        let m11 = self.pendulum_inertia() + m1 * self.l1 * self.l1;
        Matrix2::new(m00, m01, m01, m11)
    }
}

impl Perturbable for FurutaParams {
    fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "m0" => &mut self.m0,
            "m1" => &mut self.m1,
            "l0" => &mut self.l0,
            "l1" => &mut self.l1,
            "r" => &mut self.r,
            "d" => &mut self.d,
            "g" => &mut self.g,
            "kt" => &mut self.kt,
            "ke" => &mut self.ke,
            "rm" => &mut self.rm,
            "drive_voltage" => &mut self.drive_voltage,
            "b0" => &mut self.b0,
            "b1" => &mut self.b1,
            _ => return None,
        })
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("m0", self.m0),
            ("m1", self.m1),
            ("l0", self.l0),
            ("l1", self.l1),
            ("r", self.r),
            ("g", self.g),
            ("rm", self.rm),
            ("drive_voltage", self.drive_voltage),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        let non_negative = [
            ("d", self.d),
            ("kt", self.kt),
            ("ke", self.ke),
            ("b0", self.b0),
            ("b1", self.b1),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FurutaState {
    pub theta0: f64,
    pub theta1: f64,
    pub dtheta0: f64,
    pub dtheta1: f64,
}

impl FurutaState {
    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.theta0, self.theta1, self.dtheta0, self.dtheta1)
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            theta0: x[0],
            theta1: x[1],
            dtheta0: x[2],
            dtheta1: x[3],
        }
    }
}

impl From<Vector4<f64>> for FurutaState {
    fn from(v: Vector4<f64>) -> Self {
        Self::from_slice(v.as_slice())
    }
}

/// Clamps the duty command to the physical range `[−1, 1]`.
pub fn clamp_duty(duty: f64) -> f64 {
    duty.clamp(-1.0, 1.0)
}

/// State derivative `[θ̇₀, θ̇₁, θ̈₀, θ̈₁]` for duty `duty` (clamped to `[−1, 1]`).
pub fn furuta_dynamics(x: &FurutaState, duty: f64, p: &FurutaParams) -> Vector4<f64> {
    let v = clamp_duty(duty);
    let (s, c) = x.theta1.sin_cos();
    let (w0, w1) = (x.dtheta0, x.dtheta1);
    let m1 = p.m1;
    let l1 = p.l1;
    let tau = p.kt / p.rm * (p.drive_voltage * v - p.ke * w0);
    let rhs = Vector2::new(
        tau - p.b0 * w0 - 2.0 * m1 * l1 * l1 * s * c * w0 * w1 + m1 * p.r * l1 * s * w1 * w1,
        -p.b1 * w1 + m1 * l1 * l1 * s * c * w0 * w0 + m1 * p.g * l1 * s,
    );
    let acc = p
        .mass_matrix(x.theta1)
        .lu()
        .solve(&rhs)
        .expect("Furuta mass matrix is positive definite for physical parameters");
    Vector4::new(w0, w1, acc[0], acc[1])
}

/// Kinetic plus potential energy.
pub fn furuta_energy(x: &FurutaState, p: &FurutaParams) -> f64 {
    let (s, c) = x.theta1.sin_cos();
    let (w0, w1) = (x.dtheta0, x.dtheta1);
    let k0 = 0.5 * p.arm_inertia() * w0 * w0;
    let k1 = 0.5 * p.pendulum_inertia() * w1 * w1
        + 0.5
            * p.m1
            * (p.l1 * p.l1 * w1 * w1
                + p.r * p.r * w0 * w0
                + p.l1 * p.l1 * w0 * w0 * s * s
                + 2.0 * p.r * p.l1 * w0 * w1 * c);
    k0 + k1 + p.m1 * p.g * p.l1 * c
}

/// Linear model `ẋ = A x + B u` about the upright equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
}

/// Analytic Jacobians of [`furuta_dynamics`] at the origin.
pub fn furuta_linearize(p: &FurutaParams) -> LinearModel {
    let m_inv = p
        .mass_matrix(0.0)
        .try_inverse()
        .expect("Furuta mass matrix is invertible");
    let gravity = m_inv * Vector2::new(0.0, p.m1 * p.g * p.l1);
    let arm_damping = m_inv * Vector2::new(-(p.b0 + p.back_emf_damping()), 0.0);
    let pendulum_damping = m_inv * Vector2::new(0.0, -p.b1);
    let input = m_inv * Vector2::new(p.torque_per_duty(), 0.0);

    let mut a = Matrix4::zeros();
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    for row in 0..2 {
        a[(2 + row, 1)] = gravity[row];
        a[(2 + row, 2)] = arm_damping[row];
        a[(2 + row, 3)] = pendulum_damping[row];
    }
    let b = Vector4::new(0.0, 0.0, input[0], input[1]);
    LinearModel { a, b }
}

/// Result of fitting `b₀, b₁` to the reference damping entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingFit {
    pub b0: f64,
    pub b1: f64,
    /// Model entries `A[2][2], A[2][3], A[3][2], A[3][3]` at the fitted values.
    pub entries: [f64; 4],
    /// Relative residual of each entry against its target.
    pub relative_residuals: [f64; 4],
}

/// Least-squares fit (relative residuals) of the two damping coefficients
/// to the four damping-dependent entries of the linearization.
///
/// `A[2][2]` and `A[3][2]` are proportional to `b₀ + K_tK_e/R_m`, while
/// `A[2][3]` and `A[3][3]` are proportional to `b₁`; each pair is fitted
/// independently.
pub fn fit_damping(p: &FurutaParams, targets: [f64; 4]) -> DampingFit {
    let m_inv = p
        .mass_matrix(0.0)
        .try_inverse()
        .expect("Furuta mass matrix is invertible");
    // entry = coeff * damping
    let arm = [-m_inv[(0, 0)], -m_inv[(1, 0)]];
    let pend = [-m_inv[(0, 1)], -m_inv[(1, 1)]];
    let fit = |coeffs: [f64; 2], t: [f64; 2]| {
        let w = [coeffs[0] / t[0], coeffs[1] / t[1]];
        (w[0] + w[1]) / (w[0] * w[0] + w[1] * w[1])
    };
    let arm_total = fit(arm, [targets[0], targets[2]]);
    let b1 = fit(pend, [targets[1], targets[3]]);
    let b0 = arm_total - p.back_emf_damping();
    let entries = [
        arm[0] * arm_total,
        pend[0] * b1,
        arm[1] * arm_total,
        pend[1] * b1,
    ];
    let mut relative_residuals = [0.0; 4];
    for i in 0..4 {
        relative_residuals[i] = (entries[i] - targets[i]) / targets[i];
    }
    DampingFit {
        b0,
        b1,
        entries,
        relative_residuals,
    }
}

/// `h = θ₁max² − θ₁²` with Lie derivatives on the linear model `(A, B)`.
pub fn furuta_barrier(x: &FurutaState, theta1_max: f64, model: &LinearModel) -> BarrierEvaluation {
    let xv = x.to_vector();
    let h = theta1_max * theta1_max - x.theta1 * x.theta1;
    let h_dot = -2.0 * x.theta1 * x.dtheta1;
    let pendulum_drift = model.a.row(3).transpose().dot(&xv);
    let lie_f2 = -2.0 * x.dtheta1 * x.dtheta1 - 2.0 * x.theta1 * pendulum_drift;
    let lie_g_lie_f = -2.0 * x.theta1 * model.b[3];
    BarrierEvaluation {
        h_derivs: vec![h, h_dot],
        lie_f_r: lie_f2,
        lie_g_lie_f: nalgebra::DVector::from_element(1, lie_g_lie_f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::perturb;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    #[test]
    fn upright_and_hanging_equilibria() {
        let mut p = FurutaParams::nominal();
        let d = furuta_dynamics(&FurutaState::default(), 0.0, &p);
        assert_eq!(d, Vector4::zeros());
        p.b0 = 0.0;
        p.b1 = 0.0;
        let hanging = FurutaState {
            theta1: std::f64::consts::PI,
            ..Default::default()
        };
        let d = furuta_dynamics(&hanging, 0.0, &p);
        assert!(d.amax() < 1e-12, "{d:?}");
    }

    #[test]
    fn duty_is_clamped() {
        let p = FurutaParams::nominal();
        let x = FurutaState::default();
        assert_eq!(furuta_dynamics(&x, 3.0, &p), furuta_dynamics(&x, 1.0, &p));
        assert_eq!(furuta_dynamics(&x, -7.0, &p), furuta_dynamics(&x, -1.0, &p));
    }

    #[test]
    fn nominal_damping_matches_fit() {
        let p = FurutaParams::nominal();
        let fit = fit_damping(&p, REFERENCE_DAMPING_ENTRIES);
        assert_relative_eq!(fit.b0, p.b0, max_relative = 1e-12);
        assert_relative_eq!(fit.b1, p.b1, max_relative = 1e-12);
        let lin = furuta_linearize(&p);
        assert_relative_eq!(lin.a[(2, 2)], fit.entries[0], max_relative = 1e-12);
        assert_relative_eq!(lin.a[(3, 3)], fit.entries[3], max_relative = 1e-12);
    }

    #[test]
    fn heavier_pendulum_has_weaker_input() {
        let nominal = furuta_linearize(&FurutaParams::nominal());
        let scales: BTreeMap<String, f64> =
            [("m0".to_string(), 1.6), ("m1".to_string(), 1.6)].into();
        let heavy = furuta_linearize(&perturb(&FurutaParams::nominal(), &scales).unwrap());
        // Every inertia scales with the masses, so the input column shrinks by 1.6.
        assert_relative_eq!(heavy.b[2], nominal.b[2] / 1.6, max_relative = 1e-12);
        assert_relative_eq!(heavy.b[3], nominal.b[3] / 1.6, max_relative = 1e-12);
        assert_relative_eq!(heavy.a[(3, 1)], nominal.a[(3, 1)], max_relative = 1e-12);
    }

    #[test]
    fn barrier_examples() {
        let lin = LinearModel {
            a: Matrix4::new(
                0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -19.8123, -0.1446, 0.0003, 0.0,
                101.2361, 0.2200, -0.0015,
            ),
            b: Vector4::new(0.0, 0.0, 18.8571, -28.6956),
        };
        let centre = furuta_barrier(&FurutaState::default(), 0.087, &lin);
        assert_relative_eq!(centre.h(), 0.087 * 0.087);
        assert_eq!(centre.h_derivs[1], 0.0);
        assert_eq!(centre.lie_g_lie_f[0], 0.0);

        let edge = FurutaState {
            theta1: 0.087,
            ..Default::default()
        };
        assert_eq!(furuta_barrier(&edge, 0.087, &lin).h(), 0.0);

        let x = FurutaState {
            theta1: 0.05,
            dtheta1: 0.1,
            ..Default::default()
        };
        let ev = furuta_barrier(&x, 0.087, &lin);
        assert_relative_eq!(ev.h_derivs[1], -0.01, max_relative = 1e-12);
        assert_relative_eq!(ev.lie_g_lie_f[0], 2.86956, max_relative = 1e-12);
        let expected_lf2 = -2.0 * 0.01 - 2.0 * 0.05 * (101.2361 * 0.05 - 0.0015 * 0.1);
        assert_relative_eq!(ev.lie_f_r, expected_lf2, max_relative = 1e-12);
    }

    #[test]
    fn validation_rejects_nonphysical() {
        let mut p = FurutaParams::nominal();
        p.m1 = 0.0;
        assert!(p.validate().is_err());
        let mut p = FurutaParams::nominal();
        p.b0 = -1.0;
        assert!(p.validate().is_err());
    }
}
