//! Nominal control laws: LQR for the pendulum and sliding-mode tracking for
//! the levitated plate.

pub mod care;
pub mod smc;

use nalgebra::{DMatrix, Matrix4, RowVector4, Vector4};

use crate::error::{Error, Result};
use crate::plants::furuta::LinearModel;

pub use care::{solve_care, solve_lyapunov};
pub use smc::{smc_tracking_control, SmcOutput, SmcTrackingDesign};

#[derive(Debug, Clone, PartialEq)]
pub struct LqrDesign {
    pub q: Matrix4<f64>,
    pub r: f64,
    pub p: Matrix4<f64>,
    pub k: RowVector4<f64>,
    /// Reference feedforward gains on `θ₀ref` and `θ₁ref`.
    pub k_ref: (f64, f64),
}

impl LqrDesign {
    /// Infinite-horizon LQR for `model` with weights `Q` and scalar `R`.
    pub fn new(model: &LinearModel, q: Matrix4<f64>, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::invalid("r", "input weight must be positive"));
        }
        let a = DMatrix::from_column_slice(4, 4, model.a.as_slice());
        let b = DMatrix::from_column_slice(4, 1, model.b.as_slice());
        let qd = DMatrix::from_column_slice(4, 4, q.as_slice());
        let p = solve_care(&a, &b, &qd, &DMatrix::from_element(1, 1, r))?;
        let p = Matrix4::from_column_slice(p.as_slice());
        let k = (model.b.transpose() * p) / r;
        Ok(Self {
            q,
            r,
            p,
            k,
            k_ref: (k[0], k[1]),
        })
    }

    /// Closed-loop matrix `A − BK`.
    pub fn closed_loop(&self, model: &LinearModel) -> Matrix4<f64> {
        model.a - model.b * self.k
    }
}

/// `u = −Kx + k₁θ₀ref + k₂θ₁ref`.
pub fn lqr_control(design: &LqrDesign, x: &Vector4<f64>, theta0_ref: f64, theta1_ref: f64) -> f64 {
    -(design.k * x)[0] + design.k_ref.0 * theta0_ref + design.k_ref.1 * theta1_ref
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::furuta::{furuta_linearize, FurutaParams};

    #[test]
    fn lqr_law_examples() {
        let model = furuta_linearize(&FurutaParams::nominal());
        let design = LqrDesign::new(&model, Matrix4::identity() * 500.0, 1.0).unwrap();
        assert_eq!(lqr_control(&design, &Vector4::zeros(), 0.0, 0.0), 0.0);
        let u = lqr_control(&design, &Vector4::zeros(), 0.1, 0.0);
        assert!((u - design.k[0] * 0.1).abs() < 1e-15);
        for i in 0..4 {
            let mut e = Vector4::zeros();
            e[i] = 1.0;
            assert_eq!(lqr_control(&design, &e, 0.0, 0.0), -design.k[i]);
        }
        let cl = design.closed_loop(&model);
        let cl = DMatrix::from_column_slice(4, 4, cl.as_slice());
        assert!(care::is_hurwitz(&cl));
    }

    #[test]
    fn rejects_nonpositive_r() {
        let model = furuta_linearize(&FurutaParams::nominal());
        assert!(LqrDesign::new(&model, Matrix4::identity(), 0.0).is_err());
    }
}
