//! Observability, controllability, and transported Gramians.
//!
//! The primary computation path augments the transition-matrix ODE with the
//! Gramian integrand and lets one adaptive solve control both, rather than
//! sampling the flow and applying a quadrature rule afterwards (that route is
//! kept in [`crate::oracle`] as an independent cross-check).
//!
//! - `M(t, t+s) = int Phi^T(u,t) C^T(u) C(u) Phi(u,t) du`
//! - `W(t, t+s) = int Phi(t,u) B(u) B^T(u) Phi^T(t,u) du`
//! - `K(t, t+s) = Phi(t+s,t) W(t,t+s) Phi^T(t+s,t)`
//!
//! Outputs are symmetrized and eigenvalues come from a symmetric solver only.

use crate::error::{Error, Result};
use crate::flow::{flatten, left_mul_into, right_mul_into, unflatten};
use crate::ode::{integrate_checkpoints, IntegratorConfig};
use crate::tvmat::TvMatrix;
use nalgebra::{DMatrix, DVector};

/// Which Gramian a result holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum GramianKind {
    /// `M(t, t+sigma)`, observability.
    Observability,
    /// `W(t, t+sigma)`, controllability.
    Controllability,
    /// `K(t, t+sigma) = Phi W Phi^T`, the transported controllability Gramian.
    Transported,
}

/// A symmetric PSD Gramian with spectral summary and quadrature diagnostics.
#[derive(Debug, Clone)]
pub struct GramianResult {
    pub kind: GramianKind,
    pub t: f64,
    pub sigma: f64,
    pub matrix: DMatrix<f64>,
    pub quad_error_estimate: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

pub(crate) fn symmetric_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

impl GramianResult {
    fn from_raw(
        kind: GramianKind,
        t: f64,
        sigma: f64,
        raw: DMatrix<f64>,
        quad_error_estimate: f64,
    ) -> Self {
        let matrix = symmetrize(&raw);
        let (lambda_min, lambda_max) = symmetric_eig_range(&matrix);
        GramianResult {
            kind,
            t,
            sigma,
            matrix,
            quad_error_estimate,
            lambda_min,
            lambda_max,
        }
    }

    /// PSD verdict with the numerical floor `-1e-8 * (1 + lambda_max)`.
    pub fn is_psd(&self) -> bool {
        self.lambda_min >= -1e-8 * (1.0 + self.lambda_max)
    }
}

fn check_obs_dims(a: &TvMatrix, c: &TvMatrix) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::dimension("A must be square"));
    }
    if c.cols() != a.rows() {
        return Err(Error::dimension(format!(
            "C must have {} columns, got {}",
            a.rows(),
            c.cols()
        )));
    }
    Ok(a.rows())
}

fn check_ctrl_dims(a: &TvMatrix, b: &TvMatrix) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::dimension("A must be square"));
    }
    if b.rows() != a.rows() {
        return Err(Error::dimension(format!(
            "B must have {} rows, got {}",
            a.rows(),
            b.rows()
        )));
    }
    Ok(a.rows())
}

fn check_sigmas(sigmas: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for &s in sigmas {
        if !(s > 0.0) {
            return Err(Error::config("sigma values must be positive"));
        }
        if s <= prev {
            return Err(Error::config("sigma values must be strictly increasing"));
        }
        prev = s;
    }
    Ok(())
}

/// Observability Gramians `M(t, t+sigma)` for every window in `sigmas`
/// (strictly increasing), all from one augmented solve.
///
/// Augmented state: `X(u) = Phi(u, t)` and the running integral
/// `M'(u) = X^T C^T(u) C(u) X`.
pub fn obs_gramian_profile(
    a: &TvMatrix,
    c: &TvMatrix,
    t: f64,
    sigmas: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<GramianResult>> {
    let n = check_obs_dims(a, c)?;
    check_sigmas(sigmas)?;
    let nn = n * n;

    let mut rhs = |u: f64, y: &DVector<f64>, out: &mut DVector<f64>| -> Result<()> {
        let a_u = a.eval(u)?;
        let c_u = c.eval(u)?;
        left_mul_into(&a_u, &y.as_slice()[..nn], &mut out.as_mut_slice()[..nn], n, n);
        let x = unflatten(&y.as_slice()[..nn], n, n);
        let cx = &c_u * &x;
        let integrand = cx.transpose() * cx;
        out.as_mut_slice()[nn..].copy_from_slice(integrand.as_slice());
        Ok(())
    };

    let mut y0 = DVector::zeros(2 * nn);
    y0.as_mut_slice()[..nn].copy_from_slice(flatten(&DMatrix::identity(n, n)).as_slice());
    let checkpoints: Vec<f64> = sigmas.iter().map(|&s| t + s).collect();
    let run = integrate_checkpoints(&mut rhs, t, &y0, &checkpoints, cfg)?;

    Ok(run
        .states
        .iter()
        .zip(sigmas)
        .map(|(state, &sigma)| {
            let m = unflatten(&state.as_slice()[nn..], n, n);
            GramianResult::from_raw(GramianKind::Observability, t, sigma, m, run.error_estimate)
        })
        .collect())
}

/// Controllability Gramians `W` and transported Gramians `K` for every
/// window in `sigmas`, from one augmented solve.
///
/// Augmented state: `Y(u) = Phi(t, u)` (inverse flow), `Z(u) = Phi(u, t)`
/// (forward flow, used to transport W without inverting anything), and the
/// running integral `W'(u) = Y B B^T Y^T`.
pub fn ctrl_gramian_profile(
    a: &TvMatrix,
    b: &TvMatrix,
    t: f64,
    sigmas: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<(GramianResult, GramianResult)>> {
    let n = check_ctrl_dims(a, b)?;
    check_sigmas(sigmas)?;
    let nn = n * n;

    let mut rhs = |u: f64, y: &DVector<f64>, out: &mut DVector<f64>| -> Result<()> {
        let a_u = a.eval(u)?;
        let b_u = b.eval(u)?;
        // Y' = -Y A
        right_mul_into(&y.as_slice()[..nn], &a_u, &mut out.as_mut_slice()[..nn], n);
        for x in out.as_mut_slice()[..nn].iter_mut() {
            *x = -*x;
        }
        // Z' = A Z
        left_mul_into(
            &a_u,
            &y.as_slice()[nn..2 * nn],
            &mut out.as_mut_slice()[nn..2 * nn],
            n,
            n,
        );
        // W' = Y B B^T Y^T
        let yv = unflatten(&y.as_slice()[..nn], n, n);
        let yb = &yv * b_u;
        let integrand = &yb * yb.transpose();
        out.as_mut_slice()[2 * nn..].copy_from_slice(integrand.as_slice());
        Ok(())
    };

    let ident = flatten(&DMatrix::identity(n, n));
    let mut y0 = DVector::zeros(3 * nn);
    y0.as_mut_slice()[..nn].copy_from_slice(ident.as_slice());
    y0.as_mut_slice()[nn..2 * nn].copy_from_slice(ident.as_slice());
    let checkpoints: Vec<f64> = sigmas.iter().map(|&s| t + s).collect();
    let run = integrate_checkpoints(&mut rhs, t, &y0, &checkpoints, cfg)?;

    Ok(run
        .states
        .iter()
        .zip(sigmas)
        .map(|(state, &sigma)| {
            let z = unflatten(&state.as_slice()[nn..2 * nn], n, n);
            let w_raw = unflatten(&state.as_slice()[2 * nn..], n, n);
            let w = GramianResult::from_raw(
                GramianKind::Controllability,
                t,
                sigma,
                w_raw,
                run.error_estimate,
            );
            let k_raw = &z * &w.matrix * z.transpose();
            let k = GramianResult::from_raw(
                GramianKind::Transported,
                t,
                sigma,
                k_raw,
                run.error_estimate,
            );
            (w, k)
        })
        .collect())
}

/// `M(t, t+sigma)`.
pub fn obs_gramian(
    a: &TvMatrix,
    c: &TvMatrix,
    t: f64,
    sigma: f64,
    cfg: &IntegratorConfig,
) -> Result<GramianResult> {
    Ok(obs_gramian_profile(a, c, t, &[sigma], cfg)?
        .into_iter()
        .next()
        .expect("one sigma"))
}

/// `W(t, t+sigma)`.
pub fn ctrl_gramian(
    a: &TvMatrix,
    b: &TvMatrix,
    t: f64,
    sigma: f64,
    cfg: &IntegratorConfig,
) -> Result<GramianResult> {
    Ok(ctrl_gramian_profile(a, b, t, &[sigma], cfg)?
        .into_iter()
        .next()
        .expect("one sigma")
        .0)
}

/// `K(t, t+sigma) = Phi(t+sigma, t) W(t, t+sigma) Phi^T(t+sigma, t)`.
pub fn transported_gramian(
    a: &TvMatrix,
    b: &TvMatrix,
    t: f64,
    sigma: f64,
    cfg: &IntegratorConfig,
) -> Result<GramianResult> {
    Ok(ctrl_gramian_profile(a, b, t, &[sigma], cfg)?
        .into_iter()
        .next()
        .expect("one sigma")
        .1)
}
