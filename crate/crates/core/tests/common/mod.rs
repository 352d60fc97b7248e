#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3, Vector4, Vector6};
use rand::Rng;
use safe_control::experiments::MAGLEV_CENTERS;
use safe_control::plants::furuta::{
    furuta_dynamics, furuta_energy, furuta_linearize, FurutaParams, FurutaState,
};
use safe_control::plants::maglev::{
    maglev_dynamics, maglev_level_equilibrium_forces, maglev_output_dynamics, maglev_output_rate,
    maglev_state_for_gaps, MaglevParams, MaglevState,
};
use safe_control::sim::rk4_step;
use safe_control::qp::QpProblem;

/// Feasibility tolerance used with [`safe_control::qp::KktResiduals::within`].
pub const FEAS_TOL: f64 = 1e-7;
pub const COMP_TOL: f64 = 1e-7;
pub const KKT_TOL: f64 = 1e-6;

/// Random strictly convex QP whose feasible set contains a known point.
///
/// Some rows pass exactly through that point so that active constraints
/// are common.
pub fn random_feasible_qp<R: Rng>(rng: &mut R, n: usize, k: usize) -> QpProblem {
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
    let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let m = DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
    let u0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let slack = DVector::from_fn(k, |_, _| {
        if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(0.0..0.5)
        }
    });
    let gamma = &m * u0 - slack;
    QpProblem::new(h, c, m, gamma).expect("well-formed random problem")
}

pub fn furuta_f(x: &Vector4<f64>, duty: f64, p: &FurutaParams) -> Vector4<f64> {
    furuta_dynamics(&FurutaState::from(*x), duty, p)
}

pub fn maglev_f(x: &Vector6<f64>, f: &Vector3<f64>, p: &MaglevParams) -> Vector6<f64> {
    maglev_dynamics(&MaglevState::from_slice(x.as_slice()), f, p)
}

pub fn maglev_states() -> Vec<MaglevState> {
    vec![
        MaglevState::level(0.05),
        MaglevState::from_slice(&[0.02, 0.03, -0.02, 0.1, -0.2, 0.3]),
        MaglevState::from_slice(&[-0.07, -0.1, 0.08, -0.3, 0.5, -0.4]),
        maglev_state_for_gaps(&Vector3::from(MAGLEV_CENTERS), &MaglevParams::nominal()).unwrap(),
    ]
}

/// Largest entry gap between the analytic `(A, B)` and central differences.
pub fn linearization_fd_error() -> f64 {
    let p = FurutaParams::nominal();
    let model = furuta_linearize(&p);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..4 {
        let mut e = Vector4::zeros();
        e[j] = eps;
        let col = (furuta_f(&e, 0.0, &p) - furuta_f(&-e, 0.0, &p)) / (2.0 * eps);
        worst = worst.max((col - model.a.column(j)).amax());
    }
    let z = Vector4::zeros();
    let b = (furuta_f(&z, eps, &p) - furuta_f(&z, -eps, &p)) / (2.0 * eps);
    worst.max((b - model.b).amax())
}

/// Largest gap between `f_y + g_y F` and the output rate differentiated
/// along the flow, over a few states and force vectors.
pub fn output_dynamics_fd_error() -> f64 {
    let p = MaglevParams::nominal();
    let forces = [
        maglev_level_equilibrium_forces(&p),
        Vector3::new(3.0, 9.0, 1.5),
        Vector3::zeros(),
    ];
    let eps = 1e-6;
    let rate = |v: Vector6<f64>| maglev_output_rate(&MaglevState::from_slice(v.as_slice()), &p);
    let mut worst: f64 = 0.0;
    for x in maglev_states() {
        let od = maglev_output_dynamics(&x, &p).unwrap();
        let xv = x.to_vector();
        for f in &forces {
            let xd = maglev_f(&xv, f, &p);
            let fd = (rate(xv + xd * eps) - rate(xv - xd * eps)) / (2.0 * eps);
            worst = worst.max((fd - (od.f_y + od.g_y * f)).amax());
        }
    }
    worst
}

/// Largest relative energy change over 1 s of unforced, undamped motion at
/// `Δt = 1e-4`. Back-EMF is removed as well since it acts as damping.
pub fn energy_drift() -> f64 {
    let p = FurutaParams {
        b0: 0.0,
        b1: 0.0,
        ke: 0.0,
        ..FurutaParams::nominal()
    };
    let mut x = Vector4::new(0.3, 0.8, 1.5, -2.0);
    let e0 = furuta_energy(&FurutaState::from(x), &p);
    let dt = 1e-4;
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        x = rk4_step(|v, d: &f64| furuta_f(v, *d, &p), &x, &0.0, dt, k as f64 * dt).unwrap();
        let e = furuta_energy(&FurutaState::from(x), &p);
        worst = worst.max(((e - e0) / e0).abs());
    }
    worst
}

fn furuta_free_motion(dt: f64) -> Vector4<f64> {
    let p = FurutaParams::nominal();
    let steps = (1.0 / dt).round() as usize;
    let mut x = Vector4::new(0.0, 0.5, 1.0, -1.0);
    for k in 0..steps {
        x = rk4_step(|v, d: &f64| furuta_f(v, *d, &p), &x, &0.2, dt, k as f64 * dt).unwrap();
    }
    x
}

/// Observed order from three runs at halving step sizes.
pub fn rk4_observed_order() -> f64 {
    let xs: Vec<_> = [0.02, 0.01, 0.005].iter().map(|dt| furuta_free_motion(*dt)).collect();
    ((xs[0] - xs[1]).norm() / (xs[1] - xs[2]).norm()).log2()
}
