//! Strictly convex inequality-constrained quadratic programs.
//!
//! Problems have the form
//!
//! ```text
//! minimize   ½ uᵀ H u + cᵀ u
//! subject to M u ≥ γ
//! ```
//!
//! and are solved in the dual with Hildreth's coordinate-ascent procedure.
//! An exhaustive active-set enumeration is provided as an independent
//! reference for small instances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dual iterates larger than this are treated as evidence of an empty
/// feasible set.
const DUAL_DIVERGENCE: f64 = 1e9;
const FARKAS_CHECK_SCALE: f64 = 1e6;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    hessian: DMatrix<f64>,
    hessian_inv: DMatrix<f64>,
    linear: DVector<f64>,
    constraints: DMatrix<f64>,
    bounds: DVector<f64>,
}

impl QpProblem {
    /// Validates dimensions and positive definiteness of `hessian`.
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        constraints: DMatrix<f64>,
        bounds: DVector<f64>,
    ) -> Result<Self> {
        let n = hessian.nrows();
        if hessian.ncols() != n {
            return Err(Error::Dimension(format!(
                "hessian is {}x{}",
                hessian.nrows(),
                hessian.ncols()
            )));
        }
        if linear.len() != n {
            return Err(Error::Dimension(format!(
                "linear term has length {}, expected {n}",
                linear.len()
            )));
        }
        if constraints.ncols() != n && constraints.nrows() > 0 {
            return Err(Error::Dimension(format!(
                "constraint matrix has {} columns, expected {n}",
                constraints.ncols()
            )));
        }
        if constraints.nrows() != bounds.len() {
            return Err(Error::Dimension(format!(
                "{} constraint rows but {} bounds",
                constraints.nrows(),
                bounds.len()
            )));
        }
        let all_finite = hessian.iter().all(|v| v.is_finite())
            && linear.iter().all(|v| v.is_finite())
            && constraints.iter().all(|v| v.is_finite())
            && bounds.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::invalid("qp", "non-finite entry"));
        }
        let scale = hessian.amax().max(1.0);
        if (&hessian - hessian.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = hessian
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        let hessian_inv = chol.inverse();
        let constraints = if constraints.nrows() == 0 {
            DMatrix::zeros(0, n)
        } else {
            constraints
        };
        Ok(Self {
            hessian,
            hessian_inv,
            linear,
            constraints,
            bounds,
        })
    }

    pub fn unconstrained(hessian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let n = hessian.nrows();
        Self::new(hessian, linear, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.nrows()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn constraints(&self) -> &DMatrix<f64> {
        &self.constraints
    }

    pub fn bounds(&self) -> &DVector<f64> {
        &self.bounds
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.hessian * u)) + self.linear.dot(u)
    }

    /// `−H⁻¹c`.
    pub fn unconstrained_minimizer(&self) -> DVector<f64> {
        self.apply_hessian_inv(-&self.linear)
    }

    /// Primal point associated with a dual vector, `H⁻¹(Mᵀλ − c)`.
    pub fn primal_from_dual(&self, multipliers: &DVector<f64>) -> DVector<f64> {
        self.apply_hessian_inv(self.constraints.transpose() * multipliers - &self.linear)
    }

    // Diagonal Hessians are divided through so that a filter with no active
    // row hands back the nominal input bit for bit.
    fn apply_hessian_inv(&self, v: DVector<f64>) -> DVector<f64> {
        let n = self.hessian.nrows();
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || self.hessian[(i, j)] == 0.0));
        if diagonal {
            v.component_div(&self.hessian.diagonal())
        } else {
            &self.hessian_inv * v
        }
    }

    /// Dual function `q(λ) = −½ λᵀGλ + λᵀd − ½ cᵀH⁻¹c`.
    pub fn dual_objective(&self, multipliers: &DVector<f64>) -> f64 {
        let (g, d) = self.dual_data();
        -0.5 * multipliers.dot(&(&g * multipliers)) + multipliers.dot(&d)
            - 0.5 * self.linear.dot(&(&self.hessian_inv * &self.linear))
    }

    fn dual_data(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m_hinv = &self.constraints * &self.hessian_inv;
        let g = &m_hinv * self.constraints.transpose();
        let d = &self.bounds + &m_hinv * &self.linear;
        (g, d)
    }

    pub fn kkt_residuals(&self, u: &DVector<f64>, multipliers: &DVector<f64>) -> KktResiduals {
        let stationarity = (&self.hessian * u + &self.linear
            - self.constraints.transpose() * multipliers)
            .amax();
        let slack = &self.constraints * u - &self.bounds;
        let primal = slack.iter().fold(0.0_f64, |acc, s| acc.max(-s));
        let dual = multipliers.iter().fold(0.0_f64, |acc, l| acc.max(-l));
        let complementarity = slack
            .iter()
            .zip(multipliers.iter())
            .fold(0.0_f64, |acc, (s, l)| acc.max((s * l).abs()));
        KktResiduals {
            stationarity,
            primal,
            dual,
            complementarity,
        }
    }
}

/// Worst-case violations of the four KKT conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn within(&self, feas_tol: f64, comp_tol: f64, kkt_tol: f64) -> bool {
        self.primal <= feas_tol
            && self.dual <= 0.0
            && self.complementarity <= comp_tol
            && self.stationarity <= kkt_tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Converged,
    MaxIterations,
    InfeasibleDetected,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Converged => "converged",
            QpStatus::MaxIterations => "max_iterations",
            QpStatus::InfeasibleDetected => "infeasible_detected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub iterations: usize,
    pub status: QpStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HildrethOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for HildrethOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

/// Hildreth's dual coordinate ascent.
///
/// Each sweep visits the multipliers in order and maximizes the dual
/// function along one coordinate, clamping at zero. Iteration stops once the
/// largest multiplier change over a sweep is at most `tol`.
pub fn solve_hildreth(p: &QpProblem, tol: f64, max_iter: usize) -> QpSolution {
    solve_hildreth_observed(p, tol, max_iter, |_, _| {})
}

/// Same as [`solve_hildreth`], calling `on_sweep(sweep, λ)` after every sweep.
pub fn solve_hildreth_observed<F>(
    p: &QpProblem,
    tol: f64,
    max_iter: usize,
    mut on_sweep: F,
) -> QpSolution
where
    F: FnMut(usize, &DVector<f64>),
{
    assert!(tol > 0.0, "tolerance must be positive");
    assert!(max_iter >= 1, "max_iter must be at least one");

    let k = p.num_constraints();
    if k == 0 {
        return QpSolution {
            u: p.unconstrained_minimizer(),
            multipliers: DVector::zeros(0),
            iterations: 0,
            status: QpStatus::Converged,
        };
    }

    let degenerate: Vec<bool> = (0..k)
        .map(|i| p.constraints.row(i).iter().all(|v| *v == 0.0))
        .collect();
    if degenerate
        .iter()
        .zip(p.bounds.iter())
        .any(|(&zero, &b)| zero && b > 0.0)
    {
        return QpSolution {
            u: p.unconstrained_minimizer(),
            multipliers: DVector::zeros(k),
            iterations: 0,
            status: QpStatus::InfeasibleDetected,
        };
    }

    let (g, d) = p.dual_data();
    let mut lambda = DVector::<f64>::zeros(k);
    let mut status = QpStatus::MaxIterations;
    let mut iterations = max_iter;

    for sweep in 1..=max_iter {
        let mut max_change = 0.0_f64;
        for i in 0..k {
            let gii = g[(i, i)];
            if degenerate[i] || gii <= 0.0 {
                continue;
            }
            let mut acc = d[i];
            for j in 0..k {
                if j != i {
                    acc -= g[(i, j)] * lambda[j];
                }
            }
            let next = (acc / gii).max(0.0);
            max_change = max_change.max((next - lambda[i]).abs());
            lambda[i] = next;
        }
        on_sweep(sweep, &lambda);
        if lambda.amax() > DUAL_DIVERGENCE || farkas_certificate(p, &lambda) {
            status = QpStatus::InfeasibleDetected;
            iterations = sweep;
            break;
        }
        if max_change <= tol {
            status = QpStatus::Converged;
            iterations = sweep;
            break;
        }
    }

    QpSolution {
        u: p.primal_from_dual(&lambda),
        multipliers: lambda,
        iterations,
        status,
    }
}

/// Once the duals are large, their direction `w` approximates a ray with
/// `Mᵀw ≈ 0` and `γᵀw > 0`. Any `u` with `Mu ≥ γ` then satisfies
/// `γᵀw ≤ ‖Mᵀw‖∞‖u‖₁`, so a feasible point would have to be enormous.
fn farkas_certificate(p: &QpProblem, lambda: &DVector<f64>) -> bool {
    let scale = lambda.amax();
    if scale < FARKAS_CHECK_SCALE {
        return false;
    }
    let w = lambda / scale;
    let row_scale = p.constraints.amax().max(f64::MIN_POSITIVE);
    let combined = (p.constraints.transpose() * &w).amax();
    combined <= 1e-4 * row_scale && p.bounds.dot(&w) > 0.0
}

/// Largest constraint count the enumeration oracle accepts.
pub const ORACLE_MAX_CONSTRAINTS: usize = 20;

/// Exact KKT point by enumerating every active set.
///
/// Intended as a test reference: the cost is `2^k` small dense solves. The
/// returned `iterations` counts the active sets examined.
pub fn solve_active_set_oracle(p: &QpProblem) -> QpSolution {
    let k = p.num_constraints();
    let n = p.dim();
    assert!(
        k <= ORACLE_MAX_CONSTRAINTS,
        "oracle limited to {ORACLE_MAX_CONSTRAINTS} constraints"
    );

    let feas_tol = 1e-9 * (1.0 + p.bounds.amax());
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    let mut examined = 0usize;

    for mask in 0u32..(1u32 << k) {
        examined += 1;
        let active: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let a = active.len();
        let dim = n + a;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
        for i in 0..n {
            rhs[i] = -p.linear[i];
        }
        for (slot, &row) in active.iter().enumerate() {
            for col in 0..n {
                let v = p.constraints[(row, col)];
                kkt[(col, n + slot)] = -v;
                kkt[(n + slot, col)] = v;
            }
            rhs[n + slot] = p.bounds[row];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        if sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let u = sol.rows(0, n).into_owned();
        let mut multipliers = DVector::<f64>::zeros(k);
        for (slot, &row) in active.iter().enumerate() {
            multipliers[row] = sol[n + slot];
        }
        if multipliers.iter().any(|l| *l < -1e-10) {
            continue;
        }
        let slack = &p.constraints * &u - &p.bounds;
        if slack.iter().any(|s| *s < -feas_tol) {
            continue;
        }
        let obj = p.objective(&u);
        let better = best.as_ref().is_none_or(|(b, _, _)| obj < *b);
        if better {
            multipliers.iter_mut().for_each(|l| *l = l.max(0.0));
            best = Some((obj, u, multipliers));
        }
    }

    match best {
        Some((_, u, multipliers)) => QpSolution {
            u,
            multipliers,
            iterations: examined,
            status: QpStatus::Converged,
        },
        None => QpSolution {
            u: p.unconstrained_minimizer(),
            multipliers: DVector::zeros(k),
            iterations: examined,
            status: QpStatus::InfeasibleDetected,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(h: f64, c: f64, rows: &[(f64, f64)]) -> QpProblem {
        let m = DMatrix::from_row_slice(rows.len(), 1, &rows.iter().map(|r| r.0).collect::<Vec<_>>());
        let g = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        QpProblem::new(DMatrix::from_element(1, 1, h), DVector::from_element(1, c), m, g).unwrap()
    }

    #[test]
    fn unconstrained_returns_nominal() {
        let p = QpProblem::unconstrained(
            DMatrix::identity(2, 2) * 2.0,
            DVector::from_vec(vec![-2.0, -2.0]),
        )
        .unwrap();
        let sol = solve_hildreth(&p, 1e-9, 100);
        assert_eq!(sol.status, QpStatus::Converged);
        assert_eq!(sol.iterations, 0);
        assert_abs_diff_eq!(sol.u[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.u[1], 1.0, epsilon = 1e-15);
        let oracle = solve_active_set_oracle(&p);
        assert_eq!(oracle.u, sol.u);
    }

    #[test]
    fn single_active_constraint() {
        let p = scalar(2.0, -2.0, &[(1.0, 2.0)]);
        let sol = solve_hildreth(&p, 1e-12, 100);
        assert_eq!(sol.status, QpStatus::Converged);
        assert_abs_diff_eq!(sol.u[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.multipliers[0], 2.0, epsilon = 1e-12);
        let oracle = solve_active_set_oracle(&p);
        assert_abs_diff_eq!(oracle.u[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle.multipliers[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_detects_empty_feasible_set() {
        let p = scalar(2.0, 0.0, &[(1.0, 1.0), (-1.0, 1.0)]);
        assert_eq!(solve_active_set_oracle(&p).status, QpStatus::InfeasibleDetected);
    }

    #[test]
    fn hildreth_flags_growing_duals_on_infeasible_problem() {
        let p = scalar(2.0, 0.0, &[(1.0, 1.0), (-1.0, 1.0)]);
        let sol = solve_hildreth(&p, 1e-9, 10_000_000);
        assert_eq!(sol.status, QpStatus::InfeasibleDetected);
    }

    #[test]
    fn zero_row_with_positive_bound_is_infeasible() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::zeros(2),
            DMatrix::zeros(1, 2),
            DVector::from_element(1, 0.5),
        )
        .unwrap();
        assert_eq!(solve_hildreth(&p, 1e-9, 10).status, QpStatus::InfeasibleDetected);
    }

    #[test]
    fn zero_row_with_nonpositive_bound_is_ignored() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::from_vec(vec![-1.0, 4.0]),
            DMatrix::zeros(1, 2),
            DVector::from_element(1, -0.5),
        )
        .unwrap();
        let sol = solve_hildreth(&p, 1e-9, 10);
        assert_eq!(sol.status, QpStatus::Converged);
        assert_eq!(sol.u, p.unconstrained_minimizer());
    }

    #[test]
    fn max_iterations_reports_best_iterate() {
        // Two nearly parallel rows converge slowly in coordinate ascent.
        let p = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1e-3]),
            DVector::from_vec(vec![1.0, 1.0 + 1e-3]),
        )
        .unwrap();
        let sol = solve_hildreth(&p, 1e-15, 3);
        assert_eq!(sol.status, QpStatus::MaxIterations);
        assert_eq!(sol.iterations, 3);
        assert!(sol.multipliers.iter().all(|l| *l >= 0.0));
    }

    #[test]
    fn rejects_indefinite_and_asymmetric_hessians() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            QpProblem::unconstrained(h, DVector::zeros(2)),
            Err(Error::NotPositiveDefinite)
        ));
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.0, 2.0]);
        assert!(matches!(
            QpProblem::unconstrained(h, DVector::zeros(2)),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let err = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(3),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        );
        assert!(matches!(err, Err(Error::Dimension(_))));
        let err = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(2, 2),
            DVector::zeros(1),
        );
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn filter_identity_leaves_duals_at_zero() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::from_vec(vec![-0.6, 0.2]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
        )
        .unwrap();
        let sol = solve_hildreth(&p, 1e-9, 100);
        assert_eq!(sol.multipliers, DVector::zeros(2));
        assert_eq!(sol.u, p.unconstrained_minimizer());
        assert_eq!(sol.iterations, 1);
    }
}
