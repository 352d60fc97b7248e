//! Continuous-time algebraic Riccati equation
//! `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` by Kleinman–Newton iteration.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_NEWTON_STEPS: usize = 200;

/// Solves `AᵀX + XA = −C` through the Kronecker-product linear system.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, c.as_slice());
    let vec_x = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Riccati {
            reason: "singular Lyapunov operator".into(),
            residual: f64::NAN,
        })?;
    let x = DMatrix::from_column_slice(n, n, vec_x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Max absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    m.clone().complex_eigenvalues().iter().all(|z| z.re < 0.0)
}

/// Stabilizing gain by Bass's method: with `β` above the spectral
/// abscissa of `−A`, solve `(A+βI)W + W(A+βI)ᵀ = 2BBᵀ`; then `K = BᵀW⁻¹`
/// places every closed-loop eigenvalue on `Re s = −β`.
fn initial_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if is_hurwitz(a) {
        return Ok(DMatrix::zeros(b.ncols(), n));
    }
    let beta = a.norm() + 1.0;
    let shifted = a + DMatrix::<f64>::identity(n, n) * beta;
    let w = solve_lyapunov(&shifted.transpose(), &(-(b * b.transpose()) * 2.0))?;
    let w_inv = w.try_inverse().ok_or_else(|| Error::Riccati {
        reason: "pair (A, B) is not controllable enough for an initial gain".into(),
        residual: f64::NAN,
    })?;
    Ok(b.transpose() * w_inv)
}

/// Stabilizing solution `P` of the CARE.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "CARE shapes A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
        return Err(Error::invalid("Q", "not symmetric"));
    }
    if q.clone().symmetric_eigenvalues().iter().any(|l| *l < -1e-12 * q.amax().max(1.0)) {
        return Err(Error::invalid("Q", "not positive semidefinite"));
    }
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("R", "not positive definite"))?
        .inverse();

    let mut k = initial_gain(a, b)?;
    let mut p = DMatrix::<f64>::zeros(n, n);
    for _ in 0..MAX_NEWTON_STEPS {
        let closed = a - b * &k;
        let next = solve_lyapunov(&closed, &(q + k.transpose() * r * &k))?;
        let change = (&next - &p).amax();
        p = next;
        k = &r_inv * b.transpose() * &p;
        if change <= 1e-14 * p.amax().max(1.0) {
            break;
        }
    }

    let residual = inf_norm(&care_residual(a, b, q, &r_inv, &p));
    let q_norm = inf_norm(q);
    let tol = if q_norm > 0.0 {
        1e-8 * q_norm
    } else {
        1e-12 * (1.0 + inf_norm(&p))
    };
    if !residual.is_finite() || residual > tol {
        return Err(Error::Riccati {
            reason: "Newton iteration did not reach the residual bound".into(),
            residual,
        });
    }
    if !is_hurwitz(&(a - b * &r_inv * b.transpose() * &p)) {
        return Err(Error::Riccati {
            reason: "solution is not stabilizing".into(),
            residual,
        });
    }
    Ok(p)
}
