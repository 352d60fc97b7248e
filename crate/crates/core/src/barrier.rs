//! Barrier constraints as linear inequalities in the physical input.
//!
//! A barrier `h` of relative degree `r` is described by its derivative chain
//! `η = [h, ḣ, …, h^(r−1)]` together with `L_f^r h` and `L_g L_f^(r−1) h`.
//! Enforcement policies bound the virtual input `μ = L_f^r h + L_g L_f^(r−1) h · u`
//! from below; the virtual input is substituted out so that every policy
//! yields a row `a·u ≥ b` for the safety-filter QP.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::QpProblem;

/// Rows whose coefficient vector is smaller than this (max-norm) are
/// considered degenerate.
pub const DEGENERATE_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEvaluation {
    /// `[h, ḣ, …, h^(r−1)]`.
    pub h_derivs: Vec<f64>,
    /// `L_f^r h`.
    pub lie_f_r: f64,
    /// `L_g L_f^(r−1) h`, one entry per input.
    pub lie_g_lie_f: DVector<f64>,
}

impl BarrierEvaluation {
    pub fn new(h_derivs: Vec<f64>, lie_f_r: f64, lie_g_lie_f: DVector<f64>) -> Result<Self> {
        if h_derivs.is_empty() {
            return Err(Error::Dimension("barrier needs at least h itself".into()));
        }
        Ok(Self {
            h_derivs,
            lie_f_r,
            lie_g_lie_f,
        })
    }

    pub fn relative_degree(&self) -> usize {
        self.h_derivs.len()
    }

    pub fn h(&self) -> f64 {
        self.h_derivs[0]
    }

    /// Virtual input produced by `u`.
    pub fn virtual_input(&self, u: &DVector<f64>) -> f64 {
        self.lie_f_r + self.lie_g_lie_f.dot(u)
    }
}

/// `a·u ≥ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInputConstraint {
    pub row: DVector<f64>,
    pub bound: f64,
}

impl LinearInputConstraint {
    pub fn new(row: DVector<f64>, bound: f64) -> Result<Self> {
        if !bound.is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("constraint", "non-finite entry"));
        }
        Ok(Self { row, bound })
    }

    pub fn is_satisfied(&self, u: &DVector<f64>, tol: f64) -> bool {
        self.row.dot(u) >= self.bound - tol
    }

    pub fn slack(&self, u: &DVector<f64>) -> f64 {
        self.row.dot(u) - self.bound
    }

    /// Classifies rows whose coefficients vanish.
    pub fn screen(&self) -> RowScreen {
        if self.row.amax() >= DEGENERATE_ROW_TOL {
            RowScreen::Keep
        } else if self.bound <= 0.0 {
            RowScreen::Vacuous
        } else {
            RowScreen::Infeasible
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowScreen {
    Keep,
    /// `0·u ≥ b` with `b ≤ 0`: always satisfied.
    Vacuous,
    /// `0·u ≥ b` with `b > 0`: no input satisfies it.
    Infeasible,
}

/// Relative-degree-one CBF row with the linear class-κ function
/// `α(h) = alpha_gain·h`: `L_g h·u ≥ −L_f h − α h`.
pub fn cbf_constraint_r1(ev: &BarrierEvaluation, alpha_gain: f64) -> Result<LinearInputConstraint> {
    if ev.relative_degree() != 1 {
        return Err(Error::Dimension(format!(
            "relative-degree-one CBF given a degree {} barrier",
            ev.relative_degree()
        )));
    }
    if alpha_gain <= 0.0 {
        return Err(Error::invalid("alpha_gain", "must be positive"));
    }
    LinearInputConstraint::new(ev.lie_g_lie_f.clone(), -ev.lie_f_r - alpha_gain * ev.h())
}

/// Gain `K_b` of an exponential CBF, acting on the derivative chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcbfPolicy {
    gain: Vec<f64>,
}

impl EcbfPolicy {
    /// Accepts an explicit gain after checking that the companion closed
    /// loop `F_b − G_b K_b` is Hurwitz.
    pub fn from_gain(gain: Vec<f64>) -> Result<Self> {
        if gain.is_empty() {
            return Err(Error::invalid("ecbf_gain", "empty gain"));
        }
        let eig = companion_closed_loop(&gain).complex_eigenvalues();
        if eig.iter().any(|z| !(z.re < 0.0)) {
            return Err(Error::invalid(
                "ecbf_gain",
                format!("closed loop not Hurwitz for gain {gain:?}"),
            ));
        }
        Ok(Self { gain })
    }

    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    pub fn relative_degree(&self) -> usize {
        self.gain.len()
    }

    /// `F_b − G_b K_b` for this gain.
    pub fn closed_loop(&self) -> DMatrix<f64> {
        companion_closed_loop(&self.gain)
    }
}

/// `F_b − G_b K_b`: shift structure on the super-diagonal, `−K_b` in the
/// last row.
pub fn companion_closed_loop(gain: &[f64]) -> DMatrix<f64> {
    let r = gain.len();
    let mut a = DMatrix::<f64>::zeros(r, r);
    for i in 0..r.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for (j, k) in gain.iter().enumerate() {
        a[(r - 1, j)] = -k;
    }
    a
}

/// Gain placing the companion closed-loop poles at `−p_i`.
///
/// `K_b = [a_0, …, a_{r−1}]` where `∏(s + p_i) = s^r + a_{r−1}s^{r−1} + … + a_0`.
pub fn pole_placement_gain(poles: &[f64]) -> Result<EcbfPolicy> {
    if poles.is_empty() || poles.len() > 3 {
        return Err(Error::invalid(
            "poles",
            format!("relative degree {} not in 1..=3", poles.len()),
        ));
    }
    if let Some(p) = poles.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::invalid("poles", format!("pole magnitude {p} must be > 0")));
    }
    // Coefficients in ascending order, leading 1 implied at the end.
    let mut coeffs = vec![1.0];
    for p in poles {
        let mut next = vec![0.0; coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c * p;
            next[i + 1] += c;
        }
        coeffs = next;
    }
    coeffs.pop();
    Ok(EcbfPolicy { gain: coeffs })
}

/// ECBF row: `L_g L_f^(r−1) h · u ≥ −L_f^r h − K_b·η`.
pub fn ecbf_constraint(ev: &BarrierEvaluation, policy: &EcbfPolicy) -> Result<LinearInputConstraint> {
    if ev.relative_degree() != policy.relative_degree() {
        return Err(Error::Dimension(format!(
            "barrier has relative degree {} but gain has {} entries",
            ev.relative_degree(),
            policy.relative_degree()
        )));
    }
    let mu_lo = ecbf_virtual_bound(ev, policy);
    LinearInputConstraint::new(ev.lie_g_lie_f.clone(), mu_lo - ev.lie_f_r)
}

/// Lower bound `−K_b·η` on the virtual input.
pub fn ecbf_virtual_bound(ev: &BarrierEvaluation, policy: &EcbfPolicy) -> f64 {
    -policy
        .gain
        .iter()
        .zip(&ev.h_derivs)
        .map(|(k, e)| k * e)
        .sum::<f64>()
}

/// Unit saturation: identity on `[−1, 1]`, sign outside.
pub fn sat(z: f64) -> f64 {
    z.clamp(-1.0, 1.0)
}

/// Sliding-mode CBF parameters for a relative-degree-two barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmcbfPolicy {
    lambda: f64,
    eta: f64,
    k_smc: f64,
    phi: f64,
    h_d: f64,
    delta_max: f64,
}

impl SmcbfPolicy {
    /// Uses the smallest admissible switching gain `K = Δ_max + η`.
    pub fn new(lambda: f64, eta: f64, phi: f64, h_d: f64, delta_max: f64) -> Result<Self> {
        Self::with_gain(lambda, eta, phi, h_d, delta_max, delta_max + eta)
    }

    pub fn with_gain(
        lambda: f64,
        eta: f64,
        phi: f64,
        h_d: f64,
        delta_max: f64,
        k_smc: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if !(eta > 0.0) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if !(phi > 0.0) {
            return Err(Error::invalid("phi", "boundary layer must be positive"));
        }
        if !(h_d > 0.0) {
            return Err(Error::invalid(
                "h_d",
                "must be positive when a boundary layer is used",
            ));
        }
        if !(delta_max >= 0.0) {
            return Err(Error::invalid("delta_max", "must be non-negative"));
        }
        if !(k_smc >= delta_max + eta) {
            return Err(Error::invalid(
                "k_smc",
                format!("{k_smc} below Δ_max + η = {}", delta_max + eta),
            ));
        }
        Ok(Self {
            lambda,
            eta,
            k_smc,
            phi,
            h_d,
            delta_max,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn k_smc(&self) -> f64 {
        self.k_smc
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn h_d(&self) -> f64 {
        self.h_d
    }
    pub fn delta_max(&self) -> f64 {
        self.delta_max
    }

    /// `S = ḣ + λ(h − h_d)` for a constant setpoint.
    pub fn sliding_variable(&self, h: f64, h_dot: f64) -> f64 {
        h_dot + self.lambda * (h - self.h_d)
    }

    /// Lower bound `−λḣ − K sat(S/Φ)` on the virtual input.
    pub fn virtual_bound(&self, h: f64, h_dot: f64) -> f64 {
        let s = self.sliding_variable(h, h_dot);
        -self.lambda * h_dot - self.k_smc * sat(s / self.phi)
    }
}

/// SMCBF row for a relative-degree-two barrier:
/// `L_g L_f h · u ≥ μ_lo − L_f² h`.
pub fn smcbf_constraint(ev: &BarrierEvaluation, policy: &SmcbfPolicy) -> Result<LinearInputConstraint> {
    if ev.relative_degree() != 2 {
        return Err(Error::Dimension(format!(
            "sliding-mode CBF needs relative degree 2, got {}",
            ev.relative_degree()
        )));
    }
    let mu_lo = policy.virtual_bound(ev.h_derivs[0], ev.h_derivs[1]);
    LinearInputConstraint::new(ev.lie_g_lie_f.clone(), mu_lo - ev.lie_f_r)
}

/// `min uᵀu − 2u_noᵀu` subject to the stacked rows.
pub fn assemble_filter_qp(
    u_nominal: &DVector<f64>,
    constraints: &[LinearInputConstraint],
) -> Result<QpProblem> {
    let m = u_nominal.len();
    if let Some(c) = constraints.iter().find(|c| c.row.len() != m) {
        return Err(Error::Dimension(format!(
            "constraint row width {} differs from input dimension {m}",
            c.row.len()
        )));
    }
    let rows = DMatrix::from_fn(constraints.len(), m, |i, j| constraints[i].row[j]);
    let bounds = DVector::from_iterator(constraints.len(), constraints.iter().map(|c| c.bound));
    QpProblem::new(DMatrix::identity(m, m) * 2.0, u_nominal * -2.0, rows, bounds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingReport {
    /// Samples outside the boundary layer that were checked.
    pub checked: usize,
    pub violations: usize,
    /// Largest residual over checked samples; `None` when nothing was checked.
    pub max_residual: Option<f64>,
}

/// Discrete check of `½ d/dt S² ≤ −η|S|` outside the boundary layer.
///
/// The residual over step `k` is `½(S²ₖ₊₁ − S²ₖ)/Δt + η(|Sₖ| + |Sₖ₊₁|)/2`;
/// the averaged `|S|` makes the residual exact for a linear segment so that
/// the step size does not bias it. A step is checked only when both
/// endpoints lie outside `|S| ≤ Φ` and, if a mask is supplied, `mask[k]`
/// holds. Residuals above `tol` count as violations.
pub fn check_sliding_condition(
    s_trace: &[f64],
    dt: f64,
    eta: f64,
    phi: f64,
    mask: Option<&[bool]>,
    tol: f64,
) -> Result<SlidingReport> {
    if s_trace.len() < 2 {
        return Err(Error::invalid("s_trace", "need at least two samples"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if let Some(mask) = mask {
        if mask.len() != s_trace.len() {
            return Err(Error::Dimension("mask length differs from trace".into()));
        }
    }
    let mut report = SlidingReport {
        checked: 0,
        violations: 0,
        max_residual: None,
    };
    for k in 0..s_trace.len() - 1 {
        let (s0, s1) = (s_trace[k], s_trace[k + 1]);
        if s0.abs() <= phi || s1.abs() <= phi {
            continue;
        }
        if mask.is_some_and(|m| !m[k]) {
            continue;
        }
        let residual = 0.5 * (s1 * s1 - s0 * s0) / dt + eta * 0.5 * (s0.abs() + s1.abs());
        report.checked += 1;
        if residual > tol {
            report.violations += 1;
        }
        report.max_residual = Some(report.max_residual.map_or(residual, |m| m.max(residual)));
    }
    Ok(report)
}
