use nalgebra::{DVector, Matrix4, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use super::scenario::{ConstraintConfig, ControllerConfig, FilterMode, PlantConfig, Scenario, SmcbfConfig};
use super::{generate_reference, rk4_step};
use crate::barrier::{
    assemble_filter_qp, ecbf_constraint, ecbf_virtual_bound, smcbf_constraint, BarrierEvaluation,
    EcbfPolicy, LinearInputConstraint, RowScreen, SmcbfPolicy,
};
use crate::error::{Error, Result};
use crate::nominal::{lqr_control, smc_tracking_control, LqrDesign, SmcTrackingDesign};
use crate::plants::furuta::{
    clamp_duty, furuta_barrier, furuta_dynamics, furuta_linearize, FurutaParams, FurutaState,
    LinearModel,
};
use crate::plants::maglev::{
    maglev_barrier, maglev_dynamics, maglev_output, maglev_state_for_gaps, MaglevParams,
    MaglevState,
};
use crate::plants::perturb;
use crate::qp::{solve_hildreth, QpStatus};

/// Static description of one logged barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintInfo {
    pub channel: usize,
    pub limit: f64,
    pub center: f64,
    pub smcbf: SmcbfConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierRecord {
    pub h: f64,
    pub h_dot: f64,
    /// Sliding variable; NaN unless the sliding-mode filter is selected.
    pub s: f64,
    /// Lower bound on the virtual input; NaN when no filter is selected.
    pub mu_lo: f64,
    /// The row was in the QP with a positive multiplier.
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub state: Vec<f64>,
    pub outputs: Vec<f64>,
    pub references: Vec<f64>,
    pub u_nominal: Vec<f64>,
    pub u_filtered: Vec<f64>,
    pub u_applied: Vec<f64>,
    pub barriers: Vec<BarrierRecord>,
    /// `None` when the QP was not solved at this step.
    pub qp_status: Option<QpStatus>,
    pub qp_iterations: usize,
    pub constraint_active: bool,
    pub qp_fallback: bool,
    pub clamp_hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub scenario: String,
    pub plant: &'static str,
    pub filter_mode: FilterMode,
    pub dt: f64,
    pub barrier_enable_time: f64,
    pub state_names: &'static [&'static str],
    pub output_names: &'static [&'static str],
    pub input_names: &'static [&'static str],
    pub constraints: Vec<ConstraintInfo>,
    pub records: Vec<StepRecord>,
}

impl TrajectoryLog {
    /// Whether barriers are (or would be) enforced at time `t`.
    pub fn enabled_at(&self, t: f64) -> bool {
        t >= self.barrier_enable_time - 1e-9 * self.dt
    }
}

enum Loop {
    Furuta {
        real: FurutaParams,
        model: LinearModel,
        lqr: LqrDesign,
        x: Vector4<f64>,
    },
    Maglev {
        nominal: MaglevParams,
        real: MaglevParams,
        smc: SmcTrackingDesign,
        x: Vector6<f64>,
    },
}

impl Loop {
    fn new(s: &Scenario) -> Result<Self> {
        match (&s.plant, &s.controller) {
            (PlantConfig::Furuta { params, perturbation }, ControllerConfig::Lqr { q_diag, r }) => {
                let model = furuta_linearize(params);
                let q = Matrix4::from_diagonal(&Vector4::from_column_slice(q_diag));
                Ok(Loop::Furuta {
                    real: perturb(params, perturbation)?,
                    lqr: LqrDesign::new(&model, q, *r)?,
                    model,
                    x: Vector4::from_column_slice(&s.initial_state),
                })
            }
            (
                PlantConfig::Maglev { params, perturbation },
                ControllerConfig::Smc {
                    lambda,
                    eta,
                    phi,
                    gain,
                    mass_scale_bound,
                    operating_gaps,
                },
            ) => {
                let (lambda, eta, phi) = (
                    Vector3::from(*lambda),
                    Vector3::from(*eta),
                    Vector3::from(*phi),
                );
                let smc = match gain {
                    Some(k) => {
                        SmcTrackingDesign::new(params.clone(), lambda, eta, phi, Vector3::from(*k))?
                    }
                    None => {
                        let mut points = operating_gaps
                            .iter()
                            .map(|g| maglev_state_for_gaps(&Vector3::from(*g), params))
                            .collect::<Result<Vec<_>>>()?;
                        if points.is_empty() {
                            let x0 = MaglevState::from_slice(&s.initial_state);
                            points.push(maglev_state_for_gaps(&maglev_output(&x0, params), params)?);
                        }
                        SmcTrackingDesign::for_mass_uncertainty(
                            params.clone(),
                            lambda,
                            eta,
                            phi,
                            *mass_scale_bound,
                            &points,
                        )?
                    }
                };
                Ok(Loop::Maglev {
                    nominal: params.clone(),
                    real: perturb(params, perturbation)?,
                    smc,
                    x: Vector6::from_column_slice(&s.initial_state),
                })
            }
            _ => Err(Error::Config("controller does not match plant".into())),
        }
    }

    fn state(&self) -> Vec<f64> {
        match self {
            Loop::Furuta { x, .. } => x.iter().copied().collect(),
            Loop::Maglev { x, .. } => x.iter().copied().collect(),
        }
    }

    fn outputs(&self) -> Vec<f64> {
        match self {
            Loop::Furuta { x, .. } => vec![x[0], x[1]],
            Loop::Maglev { x, nominal, .. } => {
                maglev_output(&MaglevState::from_slice(x.as_slice()), nominal)
                    .iter()
                    .copied()
                    .collect()
            }
        }
    }

    fn nominal_input(&self, refs: &[f64]) -> Result<DVector<f64>> {
        match self {
            Loop::Furuta { lqr, x, .. } => {
                Ok(DVector::from_element(1, lqr_control(lqr, x, refs[0], refs[1])))
            }
            Loop::Maglev { smc, x, .. } => {
                let out = smc_tracking_control(
                    smc,
                    &MaglevState::from_slice(x.as_slice()),
                    &Vector3::from_column_slice(refs),
                    &Vector3::zeros(),
                    &Vector3::zeros(),
                )?;
                Ok(DVector::from_column_slice(out.forces.as_slice()))
            }
        }
    }

    fn barrier(&self, c: &ConstraintConfig) -> Result<BarrierEvaluation> {
        match self {
            Loop::Furuta { model, x, .. } => Ok(furuta_barrier(&FurutaState::from(*x), c.limit, model)),
            Loop::Maglev { nominal, x, .. } => maglev_barrier(
                &MaglevState::from_slice(x.as_slice()),
                c.channel,
                c.limit,
                c.center,
                nominal,
            ),
        }
    }

    /// Plant-side limits; returns whether anything was clipped.
    fn clamp(&self, u: &DVector<f64>) -> (DVector<f64>, bool) {
        let applied = match self {
            Loop::Furuta { .. } => u.map(clamp_duty),
            Loop::Maglev { .. } => u.map(|f| f.max(0.0)),
        };
        let hit = applied != *u;
        (applied, hit)
    }

    fn advance(&mut self, u: &DVector<f64>, dt: f64, t: f64) -> Result<()> {
        match self {
            Loop::Furuta { real, x, .. } => {
                let duty = u[0];
                *x = rk4_step(
                    |v, d: &f64| furuta_dynamics(&FurutaState::from(*v), *d, real),
                    x,
                    &duty,
                    dt,
                    t,
                )?;
            }
            Loop::Maglev { real, x, .. } => {
                let forces = Vector3::from_column_slice(u.as_slice());
                *x = rk4_step(
                    |v, f: &Vector3<f64>| {
                        maglev_dynamics(&MaglevState::from_slice(v.as_slice()), f, real)
                    },
                    x,
                    &forces,
                    dt,
                    t,
                )?;
            }
        }
        Ok(())
    }
}

enum Policy {
    Ecbf(EcbfPolicy),
    Smcbf(SmcbfPolicy),
}

/// Runs `s` from its initial state and logs every step.
pub fn run_closed_loop(s: &Scenario) -> Result<TrajectoryLog> {
    s.validate()?;
    let mut plant = Loop::new(s)?;
    let mode = s.filter.mode;
    let policies = s
        .filter
        .constraints
        .iter()
        .map(|c| {
            Ok(match mode {
                FilterMode::Smcbf => Some(Policy::Smcbf(c.smcbf.policy()?)),
                FilterMode::Ecbf => Some(Policy::Ecbf(EcbfPolicy::from_gain(c.ecbf_gain.clone())?)),
                FilterMode::None => None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut log = TrajectoryLog {
        scenario: s.name.clone(),
        plant: s.plant.kind(),
        filter_mode: mode,
        dt: s.dt,
        barrier_enable_time: s.barrier_enable_time,
        state_names: s.plant.state_names(),
        output_names: s.plant.output_names(),
        input_names: s.plant.input_names(),
        constraints: s
            .filter
            .constraints
            .iter()
            .map(|c| ConstraintInfo {
                channel: c.channel,
                limit: c.limit,
                center: c.center,
                smcbf: c.smcbf,
            })
            .collect(),
        records: Vec::with_capacity(s.steps() + 1),
    };

    let n = s.steps();
    for k in 0..=n {
        let t = k as f64 * s.dt;
        let references: Vec<f64> = s.references.iter().map(|r| generate_reference(r, t)).collect();
        let u_no = plant.nominal_input(&references)?;

        let mut barriers = Vec::with_capacity(policies.len());
        let mut rows: Vec<(usize, LinearInputConstraint)> = Vec::new();
        let mut qp_fallback = false;
        let filtering = mode != FilterMode::None && log.enabled_at(t);
        for (i, (c, policy)) in s.filter.constraints.iter().zip(&policies).enumerate() {
            let ev = plant.barrier(c)?;
            let (h, h_dot) = (ev.h_derivs[0], ev.h_derivs[1]);
            let (sliding, mu_lo, row) = match policy {
                Some(Policy::Smcbf(p)) => (
                    p.sliding_variable(h, h_dot),
                    p.virtual_bound(h, h_dot),
                    Some(smcbf_constraint(&ev, p)?),
                ),
                Some(Policy::Ecbf(p)) => {
                    (f64::NAN, ecbf_virtual_bound(&ev, p), Some(ecbf_constraint(&ev, p)?))
                }
                None => (f64::NAN, f64::NAN, None),
            };
            if let (true, Some(row)) = (filtering, row) {
                match row.screen() {
                    RowScreen::Keep => rows.push((i, row)),
                    RowScreen::Vacuous => {}
                    RowScreen::Infeasible => qp_fallback = true,
                }
            }
            barriers.push(BarrierRecord {
                h,
                h_dot,
                s: sliding,
                mu_lo,
                active: false,
            });
        }

        let mut qp_status = None;
        let mut qp_iterations = 0;
        let u_filtered = if filtering {
            let stacked: Vec<LinearInputConstraint> = rows.iter().map(|(_, r)| r.clone()).collect();
            let problem = assemble_filter_qp(&u_no, &stacked)?;
            let sol = solve_hildreth(&problem, s.qp.tol, s.qp.max_iter);
            qp_status = Some(sol.status);
            qp_iterations = sol.iterations;
            for ((i, _), lambda) in rows.iter().zip(sol.multipliers.iter()) {
                barriers[*i].active = *lambda > 0.0;
            }
            match sol.status {
                QpStatus::Converged => sol.u,
                QpStatus::MaxIterations => {
                    qp_fallback = true;
                    sol.u
                }
                QpStatus::InfeasibleDetected => {
                    qp_fallback = true;
                    u_no.clone()
                }
            }
        } else {
            u_no.clone()
        };
        if qp_fallback {
            log::debug!("{}: QP fallback at t = {t}", s.name);
        }

        let (u_applied, clamp_hit) = plant.clamp(&u_filtered);
        log.records.push(StepRecord {
            t,
            state: plant.state(),
            outputs: plant.outputs(),
            references,
            u_nominal: u_no.iter().copied().collect(),
            u_filtered: u_filtered.iter().copied().collect(),
            u_applied: u_applied.iter().copied().collect(),
            constraint_active: barriers.iter().any(|b| b.active),
            barriers,
            qp_status,
            qp_iterations,
            qp_fallback,
            clamp_hit,
        });
        if k < n {
            plant.advance(&u_applied, s.dt, t)?;
        }
    }
    Ok(log)
}
