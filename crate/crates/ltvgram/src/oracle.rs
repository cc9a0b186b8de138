//! Independent quadrature routines used to cross-check the ODE-based paths.
//!
//! These deliberately avoid the augmented-ODE accumulation: Gramian oracles
//! sample the flow at fixed nodes and apply composite Simpson weights, and
//! scalar flows are checked against Gauss-Legendre quadrature of the
//! generator's integral.

use crate::error::{Error, Result};
use crate::flow::{flatten, left_mul_into, right_mul_into, unflatten};
use crate::ode::{integrate_checkpoints, IntegratorConfig};
use crate::tvmat::TvMatrix;
use nalgebra::{DMatrix, DVector};

// 10-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_14,
];

/// Composite 10-point Gauss-Legendre quadrature of `f` over `[a, b]`
/// (orientation-aware: swapping the endpoints flips the sign).
pub fn gauss_legendre(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    a: f64,
    b: f64,
    panels: usize,
) -> Result<f64> {
    if panels == 0 {
        return Err(Error::config("quadrature needs at least one panel"));
    }
    if a == b {
        return Ok(0.0);
    }
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + h * (p as f64 + 0.5);
        let half = h / 2.0;
        for k in 0..5 {
            total += GL_WEIGHTS[k] * half * f(mid + half * GL_NODES[k])?;
            total += GL_WEIGHTS[k] * half * f(mid - half * GL_NODES[k])?;
        }
    }
    Ok(total)
}

fn simpson_weights(n_samples: usize, h: f64) -> Result<Vec<f64>> {
    if n_samples < 3 || n_samples % 2 == 0 {
        return Err(Error::config(
            "composite Simpson needs an odd sample count of at least 3",
        ));
    }
    let mut w = vec![0.0; n_samples];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = if i == 0 || i + 1 == n_samples {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        } * h
            / 3.0;
    }
    Ok(w)
}

/// Observability Gramian by sampling `Phi(s, t)` at `n_samples` uniform nodes
/// (one dense flow solve) and applying composite Simpson weights.
pub fn simpson_obs_gramian(
    a: &TvMatrix,
    c: &TvMatrix,
    t: f64,
    sigma: f64,
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    let n = a.rows();
    let h = sigma / (n_samples - 1) as f64;
    let weights = simpson_weights(n_samples, h)?;
    let nodes: Vec<f64> = (0..n_samples).map(|i| t + h * i as f64).collect();

    let mut rhs = |s: f64, y: &DVector<f64>, out: &mut DVector<f64>| -> Result<()> {
        let a_s = a.eval(s)?;
        left_mul_into(&a_s, y.as_slice(), out.as_mut_slice(), n, n);
        Ok(())
    };
    let y0 = flatten(&DMatrix::identity(n, n));
    let run = integrate_checkpoints(&mut rhs, t, &y0, &nodes, cfg)?;

    let mut m = DMatrix::zeros(n, n);
    for (i, state) in run.states.iter().enumerate() {
        let phi = unflatten(state.as_slice(), n, n);
        let cphi = c.eval(nodes[i])? * &phi;
        m += weights[i] * cphi.transpose() * cphi;
    }
    Ok(m)
}

/// Controllability Gramian by sampling `Phi(t, s)` (inverse-direction flow)
/// and applying composite Simpson weights.
pub fn simpson_ctrl_gramian(
    a: &TvMatrix,
    b: &TvMatrix,
    t: f64,
    sigma: f64,
    n_samples: usize,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    let n = a.rows();
    let h = sigma / (n_samples - 1) as f64;
    let weights = simpson_weights(n_samples, h)?;
    let nodes: Vec<f64> = (0..n_samples).map(|i| t + h * i as f64).collect();

    // d/ds Phi(t, s) = -Phi(t, s) A(s), Phi(t, t) = I.
    let mut rhs = |s: f64, y: &DVector<f64>, out: &mut DVector<f64>| -> Result<()> {
        let a_s = a.eval(s)?;
        right_mul_into(y.as_slice(), &a_s, out.as_mut_slice(), n);
        for x in out.iter_mut() {
            *x = -*x;
        }
        Ok(())
    };
    let y0 = flatten(&DMatrix::identity(n, n));
    let run = integrate_checkpoints(&mut rhs, t, &y0, &nodes, cfg)?;

    let mut w = DMatrix::zeros(n, n);
    for (i, state) in run.states.iter().enumerate() {
        let phi = unflatten(state.as_slice(), n, n);
        let pb = &phi * b.eval(nodes[i])?;
        w += weights[i] * &pb * pb.transpose();
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        // Degree <= 19 is integrated exactly by a single 10-point panel.
        let mut f = |s: f64| Ok(3.0 * s * s);
        let v = gauss_legendre(&mut f, 0.0, 2.0, 1).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        // Orientation.
        let v = gauss_legendre(&mut f, 2.0, 0.0, 1).unwrap();
        assert!((v + 8.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_converges_on_transcendentals() {
        let mut f = |s: f64| Ok((-2.0 * s).exp());
        let v = gauss_legendre(&mut f, 0.0, 1.0, 8).unwrap();
        let want = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((v - want).abs() < 1e-13);
    }

    #[test]
    fn simpson_needs_odd_samples() {
        let a = TvMatrix::zeros(1, 1);
        let c = TvMatrix::identity(1);
        let cfg = IntegratorConfig::default();
        assert!(simpson_obs_gramian(&a, &c, 0.0, 1.0, 16, &cfg).is_err());
        assert!(simpson_obs_gramian(&a, &c, 0.0, 1.0, 17, &cfg).is_ok());
    }
}
