//! Multivariable sliding-mode tracking of the three plate gaps.

use nalgebra::{Matrix3, Vector3};

use crate::barrier::sat;
use crate::error::{Error, Result};
use crate::plants::maglev::{
    maglev_output, maglev_output_dynamics, maglev_output_rate, MaglevParams, MaglevState,
};

/// Largest accepted condition number of the nominal decoupling matrix.
pub const MAX_DECOUPLING_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct SmcTrackingDesign {
    /// Controller-side model.
    pub params: MaglevParams,
    pub lambda: Vector3<f64>,
    pub eta: Vector3<f64>,
    pub phi: Vector3<f64>,
    pub gain: Vector3<f64>,
}

impl SmcTrackingDesign {
    pub fn new(
        params: MaglevParams,
        lambda: Vector3<f64>,
        eta: Vector3<f64>,
        phi: Vector3<f64>,
        gain: Vector3<f64>,
    ) -> Result<Self> {
        for j in 0..3 {
            if !(lambda[j] > 0.0) {
                return Err(Error::invalid("lambda", "entries must be positive"));
            }
            if !(eta[j] > 0.0) {
                return Err(Error::invalid("eta", "entries must be positive"));
            }
            if !(phi[j] > 0.0) {
                return Err(Error::invalid("phi", "entries must be positive"));
            }
            if !(gain[j] >= eta[j]) {
                return Err(Error::invalid("gain", "must be at least eta"));
            }
        }
        Ok(Self {
            params,
            lambda,
            eta,
            phi,
            gain,
        })
    }

    /// Design whose switching gain covers a plate mass of up to
    /// `mass_scale` times nominal at each operating point (at rest, on the
    /// reference); see [`switching_gain_bound`].
    pub fn for_mass_uncertainty(
        params: MaglevParams,
        lambda: Vector3<f64>,
        eta: Vector3<f64>,
        phi: Vector3<f64>,
        mass_scale: f64,
        operating_points: &[MaglevState],
    ) -> Result<Self> {
        if !(mass_scale >= 1.0) {
            return Err(Error::invalid("mass_scale", "must be at least 1"));
        }
        let mut real = params.clone();
        real.mass *= mass_scale;
        let mut gain = eta;
        for x in operating_points {
            let bound = switching_gain_bound(&params, &real, x, &eta, &Vector3::zeros())?;
            gain = gain.sup(&bound);
        }
        Self::new(params, lambda, eta, phi, gain)
    }
}

/// Componentwise switching gain that keeps the sliding condition under the
/// mismatch between `nominal` and `real` at state `x`:
///
/// `K ≥ ḡg⁻¹η + |ḡg⁻¹ f − f̄ + (I − ḡg⁻¹) v|`, with `v = ÿ_d − λẏ̃`.
pub fn switching_gain_bound(
    nominal: &MaglevParams,
    real: &MaglevParams,
    x: &MaglevState,
    eta: &Vector3<f64>,
    v: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let nom = maglev_output_dynamics(x, nominal)?;
    let act = maglev_output_dynamics(x, real)?;
    let act_inv = act
        .g_y
        .try_inverse()
        .ok_or(Error::SingularDecoupling(f64::INFINITY))?;
    let ratio = nom.g_y * act_inv;
    let drift = ratio * act.f_y - nom.f_y + (Matrix3::identity() - ratio) * v;
    Ok(ratio * eta + drift.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcOutput {
    pub forces: Vector3<f64>,
    pub sliding: Vector3<f64>,
}

fn condition_number(m: &Matrix3<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `u = ḡ⁻¹[−f̄ + ÿ_d − λẏ̃ − K sat(S/Φ)]` with `S = ẏ̃ + λỹ`.
pub fn smc_tracking_control(
    design: &SmcTrackingDesign,
    x: &MaglevState,
    y_d: &Vector3<f64>,
    y_d_dot: &Vector3<f64>,
    y_d_ddot: &Vector3<f64>,
) -> Result<SmcOutput> {
    let od = maglev_output_dynamics(x, &design.params)?;
    let cond = condition_number(&od.g_y);
    if !(cond <= MAX_DECOUPLING_CONDITION) {
        return Err(Error::SingularDecoupling(cond));
    }
    let g_inv = od
        .g_y
        .try_inverse()
        .ok_or(Error::SingularDecoupling(cond))?;
    let err = maglev_output(x, &design.params) - y_d;
    let err_dot = maglev_output_rate(x, &design.params) - y_d_dot;
    let sliding = err_dot + design.lambda.component_mul(&err);
    let switching = Vector3::from_fn(|j, _| design.gain[j] * sat(sliding[j] / design.phi[j]));
    let forces = g_inv * (-od.f_y + y_d_ddot - design.lambda.component_mul(&err_dot) - switching);
    Ok(SmcOutput { forces, sliding })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::maglev::maglev_level_equilibrium_forces;
    use approx::assert_relative_eq;

    fn reference_design(gain: f64) -> SmcTrackingDesign {
        SmcTrackingDesign::new(
            MaglevParams::nominal(),
            Vector3::repeat(50.0),
            Vector3::repeat(30.0),
            Vector3::repeat(0.05),
            Vector3::repeat(gain),
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_is_gravity_compensation() {
        let design = reference_design(30.0);
        let x = MaglevState::level(0.03);
        let y_d = Vector3::repeat(0.03);
        let out = smc_tracking_control(&design, &x, &y_d, &Vector3::zeros(), &Vector3::zeros())
            .unwrap();
        let expected = maglev_level_equilibrium_forces(&design.params);
        assert!((out.forces - expected).amax() < 1e-9);
        assert_relative_eq!(
            out.forces.sum(),
            design.params.mass * design.params.g,
            max_relative = 1e-12
        );
    }

    #[test]
    fn saturated_switching_term() {
        let design = reference_design(42.0);
        let x = MaglevState::level(0.05);
        let at_ref = smc_tracking_control(
            &design,
            &x,
            &Vector3::repeat(0.05),
            &Vector3::zeros(),
            &Vector3::zeros(),
        )
        .unwrap();
        // Far below the reference: S = λ·0.1 ≫ Φ on every channel. Removing
        // the λẏ̃ term (ẏ̃ = 0) leaves only the switching contribution.
        let y_d = Vector3::repeat(-0.05);
        let far = smc_tracking_control(&design, &x, &y_d, &Vector3::zeros(), &Vector3::zeros())
            .unwrap();
        assert!(far.sliding.iter().all(|s| *s > design.phi[0]));
        let g_inv = maglev_output_dynamics(&x, &design.params)
            .unwrap()
            .g_y
            .try_inverse()
            .unwrap();
        let expected = at_ref.forces - g_inv * design.gain;
        assert!((far.forces - expected).amax() < 1e-9);
    }

    #[test]
    fn mass_uncertainty_gain_at_level_rest() {
        let p = MaglevParams::nominal();
        let design = SmcTrackingDesign::for_mass_uncertainty(
            p.clone(),
            Vector3::repeat(50.0),
            Vector3::repeat(30.0),
            Vector3::repeat(0.05),
            1.3,
            &[MaglevState::level(0.05)],
        )
        .unwrap();
        // At the level configuration ḡg⁻¹ maps the all-ones direction to
        // 1.3 times itself, so the bound is 1.3η + 0.3g on every channel.
        let expected = 1.3 * 30.0 + 0.3 * p.g;
        for j in 0..3 {
            assert_relative_eq!(design.gain[j], expected, max_relative = 1e-9);
        }
        let exact = SmcTrackingDesign::for_mass_uncertainty(
            p,
            Vector3::repeat(50.0),
            Vector3::repeat(30.0),
            Vector3::repeat(0.05),
            1.0,
            &[MaglevState::level(0.05)],
        )
        .unwrap();
        assert!((exact.gain - Vector3::repeat(30.0)).amax() < 1e-9);
    }

    #[test]
    fn design_validation() {
        let p = MaglevParams::nominal();
        let ok = Vector3::repeat(1.0);
        assert!(SmcTrackingDesign::new(p.clone(), Vector3::zeros(), ok, ok, ok).is_err());
        assert!(SmcTrackingDesign::new(p.clone(), ok, ok, Vector3::zeros(), ok).is_err());
        assert!(SmcTrackingDesign::new(p, ok, ok * 2.0, ok, ok).is_err());
    }
}
