//! Three-magnet levitated plate (heave, pitch and roll).
//!
//! States are the gap at the plate origin `x_v` (positive downward), the
//! pitch and roll angles, and their rates. Inputs are the three attractive
//! magnet forces; outputs are the gaps measured under each magnet.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DVector, Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::Perturbable;
use crate::barrier::BarrierEvaluation;
use crate::error::{Error, Result};

/// Angles closer than this to ±π/2 are rejected by the output maps.
const ANGLE_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaglevParams {
    /// Lever arm of magnet 1 along the pitch axis, m.
    pub l1g: f64,
    /// Lever arm of magnets 2 and 3 along the pitch axis, m.
    pub l2g: f64,
    /// Lever arm of magnets 2 and 3 along the roll axis, m.
    pub l3g: f64,
    /// Plate mass, kg.
    #[serde(rename = "M")]
    pub mass: f64,
    pub g: f64,
    /// Pitch inertia about the origin, kg·m².
    pub j_pm: f64,
    /// Roll inertia about the origin, kg·m².
    pub j_rm: f64,
    /// Magnet constants, N·m²/V².
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Offset between the origin and the centre of gravity, m.
    pub d_ml: f64,
}

impl MaglevParams {
    pub fn nominal() -> Self {
        Self {
            l1g: 0.306,
            l2g: 0.203,
            l3g: 0.120,
            mass: 1.93,
            g: 9.81,
            j_pm: 6.43e-2,
            j_rm: 1.82e-2,
            k1: 3.70e-4,
            k2: 1.03e-4,
            k3: 1.36e-4,
            d_ml: 3.24e-3,
        }
    }

    pub fn magnet_constants(&self) -> [f64; 3] {
        [self.k1, self.k2, self.k3]
    }

    /// Coefficients `(a_j, b_j)` in `r_j = x_v + a_j tanθ_p + b_j tanθ_r`.
    fn output_levers(&self) -> [(f64, f64); 3] {
        [
            (-self.l1g, 0.0),
            (self.l2g, -self.l3g),
            (self.l2g, self.l3g),
        ]
    }

    /// Acceleration input map: `[ẍ_v, θ̈_p, θ̈_r] = f_acc + g_acc F`.
    pub fn acceleration_input_map(&self) -> Matrix3<f64> {
        let inv_m = 1.0 / self.mass;
        Matrix3::new(
            -inv_m,
            -inv_m,
            -inv_m,
            self.l1g / self.j_pm,
            -self.l2g / self.j_pm,
            -self.l2g / self.j_pm,
            0.0,
            self.l3g / self.j_rm,
            -self.l3g / self.j_rm,
        )
    }

    fn acceleration_drift(&self, x: &MaglevState) -> Vector3<f64> {
        let pendulum = self.mass * self.g * self.d_ml;
        Vector3::new(
            self.g,
            -pendulum * x.theta_p.sin() / self.j_pm,
            -pendulum * x.theta_r.sin() / self.j_rm,
        )
    }
}

impl Perturbable for MaglevParams {
    fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "l1g" => &mut self.l1g,
            "l2g" => &mut self.l2g,
            "l3g" => &mut self.l3g,
            "M" | "mass" => &mut self.mass,
            "g" => &mut self.g,
            "J_pm" | "j_pm" => &mut self.j_pm,
            "J_rm" | "j_rm" => &mut self.j_rm,
            "k1" => &mut self.k1,
            "k2" => &mut self.k2,
            "k3" => &mut self.k3,
            "d_ml" => &mut self.d_ml,
            _ => return None,
        })
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("l1g", self.l1g),
            ("l2g", self.l2g),
            ("l3g", self.l3g),
            ("M", self.mass),
            ("g", self.g),
            ("j_pm", self.j_pm),
            ("j_rm", self.j_rm),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("d_ml", self.d_ml),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaglevState {
    pub x_v: f64,
    pub theta_p: f64,
    pub theta_r: f64,
    pub dx_v: f64,
    pub dtheta_p: f64,
    pub dtheta_r: f64,
}

impl MaglevState {
    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            x_v: x[0],
            theta_p: x[1],
            theta_r: x[2],
            dx_v: x[3],
            dtheta_p: x[4],
            dtheta_r: x[5],
        }
    }

    pub fn to_vector(self) -> Vector6<f64> {
        Vector6::new(
            self.x_v,
            self.theta_p,
            self.theta_r,
            self.dx_v,
            self.dtheta_p,
            self.dtheta_r,
        )
    }

    /// Flat plate at rest with every gap equal to `gap`.
    pub fn level(gap: f64) -> Self {
        Self {
            x_v: gap,
            ..Default::default()
        }
    }

    fn check_angles(&self) -> Result<()> {
        for (name, th) in [("theta_p", self.theta_p), ("theta_r", self.theta_r)] {
            if !(th.abs() < FRAC_PI_2 - ANGLE_MARGIN) {
                return Err(Error::Domain(format!("{name} = {th} too close to ±π/2")));
            }
        }
        Ok(())
    }
}

/// State derivative under magnet forces `forces`.
pub fn maglev_dynamics(x: &MaglevState, forces: &Vector3<f64>, p: &MaglevParams) -> Vector6<f64> {
    let acc = p.acceleration_drift(x) + p.acceleration_input_map() * forces;
    Vector6::new(x.dx_v, x.dtheta_p, x.dtheta_r, acc[0], acc[1], acc[2])
}

/// Gaps `[r₁, r₂, r₃]` under the magnets.
pub fn maglev_output(x: &MaglevState, p: &MaglevParams) -> Vector3<f64> {
    let (tp, tr) = (x.theta_p.tan(), x.theta_r.tan());
    Vector3::from_iterator(
        p.output_levers()
            .iter()
            .map(|(a, b)| x.x_v + a * tp + b * tr),
    )
}

/// Gap rates `ṙ`.
pub fn maglev_output_rate(x: &MaglevState, p: &MaglevParams) -> Vector3<f64> {
    let sec2p = 1.0 / x.theta_p.cos().powi(2);
    let sec2r = 1.0 / x.theta_r.cos().powi(2);
    Vector3::from_iterator(
        p.output_levers()
            .iter()
            .map(|(a, b)| x.dx_v + a * sec2p * x.dtheta_p + b * sec2r * x.dtheta_r),
    )
}

/// Output accelerations `ÿ = f_y + g_y F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputDynamics {
    pub f_y: Vector3<f64>,
    pub g_y: Matrix3<f64>,
}

/// Second derivative of the gaps through the rigid-body accelerations.
///
/// With `J` the Jacobian of the gaps with respect to `(x_v, θ_p, θ_r)`,
/// `g_y = J g_acc` and `f_y = J f_acc + 2a sec²θ_p tanθ_p θ̇_p² + 2b sec²θ_r tanθ_r θ̇_r²`.
pub fn maglev_output_dynamics(x: &MaglevState, p: &MaglevParams) -> Result<OutputDynamics> {
    x.check_angles()?;
    let (tp, tr) = (x.theta_p.tan(), x.theta_r.tan());
    let sec2p = 1.0 + tp * tp;
    let sec2r = 1.0 + tr * tr;
    let levers = p.output_levers();
    let jac = Matrix3::from_fn(|i, j| match j {
        0 => 1.0,
        1 => levers[i].0 * sec2p,
        _ => levers[i].1 * sec2r,
    });
    let curvature = Vector3::from_iterator(levers.iter().map(|(a, b)| {
        2.0 * a * sec2p * tp * x.dtheta_p * x.dtheta_p
            + 2.0 * b * sec2r * tr * x.dtheta_r * x.dtheta_r
    }));
    Ok(OutputDynamics {
        f_y: jac * p.acceleration_drift(x) + curvature,
        g_y: jac * p.acceleration_input_map(),
    })
}

/// `h_j = r_max² − (r_j − r_center)²` with Lie derivatives composed from the
/// output dynamics of `p`.
pub fn maglev_barrier(
    x: &MaglevState,
    channel: usize,
    r_max: f64,
    r_center: f64,
    p: &MaglevParams,
) -> Result<BarrierEvaluation> {
    if channel > 2 {
        return Err(Error::invalid("channel", format!("{channel} not in 0..=2")));
    }
    let dynamics = maglev_output_dynamics(x, p)?;
    let err = maglev_output(x, p)[channel] - r_center;
    let rate = maglev_output_rate(x, p)[channel];
    let h = r_max * r_max - err * err;
    let h_dot = -2.0 * err * rate;
    let lie_f2 = -2.0 * rate * rate - 2.0 * err * dynamics.f_y[channel];
    let row = dynamics.g_y.row(channel).transpose() * (-2.0 * err);
    Ok(BarrierEvaluation {
        h_derivs: vec![h, h_dot],
        lie_f_r: lie_f2,
        lie_g_lie_f: DVector::from_column_slice(row.as_slice()),
    })
}

/// Coil voltages producing `forces` at gaps `gaps`: `V_j = |r_j| √(F_j/k_j)`.
pub fn maglev_force_to_voltage(
    forces: &Vector3<f64>,
    gaps: &Vector3<f64>,
    p: &MaglevParams,
) -> Result<Vector3<f64>> {
    let k = p.magnet_constants();
    let mut v = Vector3::zeros();
    for j in 0..3 {
        if forces[j] < 0.0 {
            return Err(Error::invalid(
                format!("force[{j}]"),
                format!("{} is negative; magnets only attract", forces[j]),
            ));
        }
        v[j] = gaps[j].abs() * (forces[j] / k[j]).sqrt();
    }
    Ok(v)
}

/// Plate at rest whose gaps equal `gaps`.
pub fn maglev_state_for_gaps(gaps: &Vector3<f64>, p: &MaglevParams) -> Result<MaglevState> {
    let levers = p.output_levers();
    let map = Matrix3::from_fn(|i, j| match j {
        0 => 1.0,
        1 => levers[i].0,
        _ => levers[i].1,
    });
    let sol = map
        .lu()
        .solve(gaps)
        .ok_or_else(|| Error::Domain("magnet layout does not determine the plate pose".into()))?;
    Ok(MaglevState {
        x_v: sol[0],
        theta_p: sol[1].atan(),
        theta_r: sol[2].atan(),
        ..Default::default()
    })
}

/// Attractive forces `F_j = k_j (V_j / r_j)²`.
pub fn maglev_voltage_to_force(
    voltages: &Vector3<f64>,
    gaps: &Vector3<f64>,
    p: &MaglevParams,
) -> Vector3<f64> {
    let k = p.magnet_constants();
    Vector3::from_fn(|j, _| k[j] * (voltages[j] / gaps[j]).powi(2))
}

/// Forces holding the flat plate at rest: `ΣF = Mg`, zero pitch and roll
/// moments.
pub fn maglev_level_equilibrium_forces(p: &MaglevParams) -> Vector3<f64> {
    let statics = Matrix3::new(
        1.0, 1.0, 1.0, p.l1g, -p.l2g, -p.l2g, 0.0, p.l3g, -p.l3g,
    );
    let rhs = Vector3::new(p.mass * p.g, 0.0, 0.0);
    statics
        .lu()
        .solve(&rhs)
        .expect("static force balance is non-singular")
}
