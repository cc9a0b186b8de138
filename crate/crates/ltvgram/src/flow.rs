//! Transition matrices of `x' = A(t) x` by numerical integration.
//!
//! `transition` solves the matrix ODE `M'(s) = A(s) M(s), M(tau) = I` up to
//! `t`; backward-time requests integrate the ODE in reverse instead of
//! inverting a matrix. `transition_dual` integrates the adjoint generator
//! `-A^T` and must agree with the transposed, time-swapped primal flow.

use crate::error::{Error, Result};
use crate::ode::{integrate_checkpoints, integrate_to, IntegratorConfig};
use crate::tvmat::TvMatrix;
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::sync::OnceLock;

pub(crate) fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub(crate) fn unflatten(v: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v)
}

// out = A * Mat(y), all column-major, written without temporaries.
pub(crate) fn left_mul_into(a: &DMatrix<f64>, y: &[f64], out: &mut [f64], n: usize, cols: usize) {
    for j in 0..cols {
        let ycol = &y[j * n..(j + 1) * n];
        let ocol = &mut out[j * n..(j + 1) * n];
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[(i, k)] * ycol[k];
            }
            ocol[i] = acc;
        }
    }
}

// out = Mat(y) * A for the inverse-direction flow d/ds Phi(t,s) = -Phi(t,s)A(s).
pub(crate) fn right_mul_into(y: &[f64], a: &DMatrix<f64>, out: &mut [f64], n: usize) {
    for j in 0..n {
        let ocol = &mut out[j * n..(j + 1) * n];
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += y[k * n + i] * a[(k, j)];
            }
            ocol[i] = acc;
        }
    }
}

fn require_square(plant: &TvMatrix) -> Result<usize> {
    if !plant.is_square() {
        return Err(Error::dimension(format!(
            "plant must be square, got {}x{}",
            plant.rows(),
            plant.cols()
        )));
    }
    Ok(plant.rows())
}

/// Transition matrix `Phi_A(t, tau)`.
pub fn transition(
    plant: &TvMatrix,
    t: f64,
    tau: f64,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    let n = require_square(plant)?;
    if t == tau {
        return Ok(DMatrix::identity(n, n));
    }
    let mut rhs = |s: f64, y: &DVector<f64>, out: &mut DVector<f64>| -> Result<()> {
        let a = plant.eval(s)?;
        left_mul_into(&a, y.as_slice(), out.as_mut_slice(), n, n);
        Ok(())
    };
    let y0 = flatten(&DMatrix::identity(n, n));
    let (y, _) = integrate_to(&mut rhs, tau, &y0, t, cfg)?;
    Ok(unflatten(y.as_slice(), n, n))
}

/// Adjoint transition `Psi_{-A^T}(t, tau)`, the flow of `x' = -A^T(t) x`.
/// Equals `Phi_A(tau, t)^T`.
pub fn transition_dual(
    plant: &TvMatrix,
    t: f64,
    tau: f64,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    let n = require_square(plant)?;
    if t == tau {
        return Ok(DMatrix::identity(n, n));
    }
    let mut rhs = |s: f64, y: &DVector<f64>, out: &mut DVector<f64>| -> Result<()> {
        let a_t = plant.eval(s)?.transpose();
        left_mul_into(&a_t, y.as_slice(), out.as_mut_slice(), n, n);
        for x in out.iter_mut() {
            *x = -*x;
        }
        Ok(())
    };
    let y0 = flatten(&DMatrix::identity(n, n));
    let (y, _) = integrate_to(&mut rhs, tau, &y0, t, cfg)?;
    Ok(unflatten(y.as_slice(), n, n))
}

/// One dense solve from base point `tau` through many target times.
///
/// `ts` may lie on both sides of `tau`; the backward and forward halves each
/// reuse a single integration. Results come back in the order of `ts`.
pub fn transition_profile(
    plant: &TvMatrix,
    tau: f64,
    ts: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<DMatrix<f64>>> {
    let n = require_square(plant)?;
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&i, &j| ts[i].total_cmp(&ts[j]));

    let mut out: Vec<Option<DMatrix<f64>>> = vec![None; ts.len()];
    let backward: Vec<usize> = order
        .iter()
        .rev()
        .copied()
        .filter(|&i| ts[i] < tau)
        .collect();
    let forward: Vec<usize> = order.iter().copied().filter(|&i| ts[i] > tau).collect();

    for &i in &order {
        if ts[i] == tau {
            out[i] = Some(DMatrix::identity(n, n));
        }
    }

    let y0 = flatten(&DMatrix::identity(n, n));
    for side in [backward, forward] {
        if side.is_empty() {
            continue;
        }
        let checkpoints: Vec<f64> = side.iter().map(|&i| ts[i]).collect();
        let mut rhs = |s: f64, y: &DVector<f64>, o: &mut DVector<f64>| -> Result<()> {
            let a = plant.eval(s)?;
            left_mul_into(&a, y.as_slice(), o.as_mut_slice(), n, n);
            Ok(())
        };
        let run = integrate_checkpoints(&mut rhs, tau, &y0, &checkpoints, cfg)?;
        for (slot, state) in side.iter().zip(run.states) {
            out[*slot] = Some(unflatten(state.as_slice(), n, n));
        }
    }

    Ok(out.into_iter().map(|m| m.expect("all slots filled")).collect())
}

fn key_bits(x: f64) -> u64 {
    // Normalize -0.0 so cache keys are value-based.
    if x == 0.0 { 0.0f64 } else { x }.to_bits()
}

/// Transition evaluator with a tau-keyed cache.
///
/// `warm_up` populates the cache once from a single-threaded phase; after
/// that, concurrent `phi` lookups on warmed pairs read a frozen map without
/// taking any lock. Cold pairs fall back to a fresh solve and are not cached.
#[derive(Debug)]
pub struct Transition {
    plant: TvMatrix,
    cfg: IntegratorConfig,
    warmed: OnceLock<HashMap<(u64, u64), DMatrix<f64>>>,
}

impl Transition {
    pub fn new(plant: TvMatrix, cfg: IntegratorConfig) -> Result<Self> {
        require_square(&plant)?;
        cfg.validate()?;
        Ok(Transition {
            plant,
            cfg,
            warmed: OnceLock::new(),
        })
    }

    pub fn plant(&self) -> &TvMatrix {
        &self.plant
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.plant.rows()
    }

    /// Solve one dense profile per base point and freeze the results.
    /// Only the first warm-up takes effect.
    pub fn warm_up(&self, taus: &[f64], ts: &[f64]) -> Result<()> {
        if self.warmed.get().is_some() {
            return Ok(());
        }
        let mut map = HashMap::new();
        for &tau in taus {
            let phis = transition_profile(&self.plant, tau, ts, &self.cfg)?;
            for (&t, phi) in ts.iter().zip(phis) {
                map.insert((key_bits(t), key_bits(tau)), phi);
            }
        }
        let _ = self.warmed.set(map);
        Ok(())
    }

    /// `Phi_A(t, tau)`, served from the warmed cache when available.
    pub fn phi(&self, t: f64, tau: f64) -> Result<DMatrix<f64>> {
        if let Some(map) = self.warmed.get() {
            if let Some(m) = map.get(&(key_bits(t), key_bits(tau))) {
                return Ok(m.clone());
            }
        }
        transition(&self.plant, t, tau, &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::gauss_legendre;
    use crate::tvmat::TvMatrix;

    fn mat(rows: &[&[&str]]) -> TvMatrix {
        let rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect();
        TvMatrix::parse_rows(&rows).unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.amax()
    }

    #[test]
    fn zero_generator_gives_identity() {
        let plant = mat(&[&["0"]]);
        let cfg = IntegratorConfig::default();
        for (t, tau) in [(0.0, 0.0), (3.0, -1.0), (-2.5, 4.0)] {
            let phi = transition(&plant, t, tau, &cfg).unwrap();
            assert!((phi[(0, 0)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_decay_matches_closed_form() {
        let plant = mat(&[&["-1"]]);
        let cfg = IntegratorConfig::default();
        let phi = transition(&plant, 1.0, 0.0, &cfg).unwrap();
        assert!((phi[(0, 0)] - 0.3678794411714423).abs() < 1e-9);
    }

    #[test]
    fn ramp_generator_matches_closed_form() {
        let plant = mat(&[&["t"]]);
        let cfg = IntegratorConfig::default();
        let phi = transition(&plant, 1.0, 0.0, &cfg).unwrap();
        assert!((phi[(0, 0)] - 1.6487212707001282).abs() < 1e-9);
    }

    #[test]
    fn identity_at_equal_times_and_inverse_property() {
        let plant = mat(&[&["0", "1"], &["-2", "-0.4*cos(t)"]]);
        let cfg = IntegratorConfig::default();
        let phi_tt = transition(&plant, 2.5, 2.5, &cfg).unwrap();
        assert!(max_abs(&(phi_tt - DMatrix::identity(2, 2))) <= 10.0 * cfg.abs_tol);

        let fwd = transition(&plant, 2.0, 0.5, &cfg).unwrap();
        let bwd = transition(&plant, 0.5, 2.0, &cfg).unwrap();
        let prod = &fwd * &bwd;
        assert!(max_abs(&(prod - DMatrix::identity(2, 2))) < 1e-8);
    }

    #[test]
    fn dual_flow_examples() {
        let cfg = IntegratorConfig::default();
        // A = 0: identity.
        let zero = mat(&[&["0"]]);
        let psi = transition_dual(&zero, 5.0, 1.0, &cfg).unwrap();
        assert!((psi[(0, 0)] - 1.0).abs() < 1e-12);

        // A = [-1]: Psi(0,1) = e^{-1} = Phi(1,0)^T.
        let decay = mat(&[&["-1"]]);
        let psi = transition_dual(&decay, 0.0, 1.0, &cfg).unwrap();
        assert!((psi[(0, 0)] - 0.3678794411714423).abs() < 1e-9);

        // Nilpotent: Psi(1,0) = [[1,0],[-1,1]] = Phi(0,1)^T.
        let nil = mat(&[&["0", "1"], &["0", "0"]]);
        let psi = transition_dual(&nil, 1.0, 0.0, &cfg).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]);
        assert!(max_abs(&(psi - want)) < 1e-9);
    }

    #[test]
    fn dual_equals_transposed_reversed_primal() {
        let cfg = IntegratorConfig::default();
        for plant in [
            mat(&[&["-1"]]),
            mat(&[&["0", "1"], &["0", "0"]]),
            mat(&[&["sin(t)", "1"], &["-1", "-0.5"]]),
        ] {
            for (t, tau) in [(0.0, 1.0), (2.0, 0.5), (1.5, 3.0)] {
                let psi = transition_dual(&plant, t, tau, &cfg).unwrap();
                let phi_t = transition(&plant, tau, t, &cfg).unwrap().transpose();
                let scale = 1.0 + max_abs(&phi_t);
                assert!(
                    max_abs(&(psi - &phi_t)) <= 1e-6 * scale,
                    "dual identity failed for t={t} tau={tau}"
                );
            }
        }
    }

    #[test]
    fn cocycle_on_five_point_grid() {
        let cfg = IntegratorConfig::default();
        let systems = [
            mat(&[&["t"]]),
            mat(&[&["0", "1"], &["0", "0"]]),
            mat(&[&["0", "1"], &["-1", "0"]]),
        ];
        let grid: Vec<f64> = (0..5).map(|i| 0.5 * i as f64).collect();
        for plant in &systems {
            for &r in &grid {
                for &s in &grid {
                    for &t in &grid {
                        let phi_ts = transition(plant, t, s, &cfg).unwrap();
                        let phi_sr = transition(plant, s, r, &cfg).unwrap();
                        let phi_tr = transition(plant, t, r, &cfg).unwrap();
                        let resid = &phi_ts * &phi_sr - &phi_tr;
                        assert!(
                            max_abs(&resid) <= 1e-6 * (1.0 + max_abs(&phi_tr)),
                            "cocycle failed at ({r},{s},{t})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_flow_agrees_with_log_quadrature() {
        // Independent oracle: Phi(t,tau) = exp(int_tau^t a(s) ds) for 1x1
        // plants, the integral evaluated by Gauss-Legendre panels. The
        // absolute 1e-7 band at Phi values near 10^3 needs the tight
        // tolerance profile.
        let cfg = IntegratorConfig::with_tols(1e-12, 1e-14);
        let plants = [mat(&[&["0"]]), mat(&[&["-1"]]), mat(&[&["t"]]),
                      mat(&[&["sin(ln(t+1))+cos(ln(t+1))"]])];
        for plant in &plants {
            for (t, tau) in [(1.0, 0.0), (4.0, 1.5), (0.25, 2.0), (6.0, 5.0)] {
                let phi = transition(plant, t, tau, &cfg).unwrap()[(0, 0)];
                let integral = gauss_legendre(
                    &mut |s| plant.entry(0, 0).eval(s),
                    tau,
                    t,
                    64,
                )
                .unwrap();
                assert!(
                    (phi - integral.exp()).abs() <= 1e-7,
                    "scalar oracle failed: phi={phi} oracle={}",
                    integral.exp()
                );
            }
        }
    }

    #[test]
    fn profile_matches_pointwise_solves() {
        let plant = mat(&[&["sin(t)", "1"], &["-1", "-0.5"]]);
        let cfg = IntegratorConfig::default();
        let tau = 1.0;
        let ts = [-1.0, 0.0, 0.5, 1.0, 1.5, 3.0];
        let prof = transition_profile(&plant, tau, &ts, &cfg).unwrap();
        for (i, &t) in ts.iter().enumerate() {
            let direct = transition(&plant, t, tau, &cfg).unwrap();
            assert!(max_abs(&(&prof[i] - &direct)) < 1e-8);
        }
    }

    #[test]
    fn warmed_cache_serves_concurrent_reads() {
        use rayon::prelude::*;
        let plant = mat(&[&["0", "1"], &["-1", "-0.1*t"]]);
        let tr = Transition::new(plant.clone(), IntegratorConfig::default()).unwrap();
        let taus = [0.0, 1.0];
        let ts = [0.0, 0.5, 1.0, 2.0];
        tr.warm_up(&taus, &ts).unwrap();

        let pairs: Vec<(f64, f64)> = taus
            .iter()
            .flat_map(|&tau| ts.iter().map(move |&t| (t, tau)))
            .collect();
        let results: Vec<DMatrix<f64>> = pairs.par_iter().map(|&(t, tau)| tr.phi(t, tau).unwrap()).collect();
        for (&(t, tau), got) in pairs.iter().zip(&results) {
            let direct = transition(&plant, t, tau, &IntegratorConfig::default()).unwrap();
            assert!(max_abs(&(got - &direct)) < 1e-8);
            // Cached reads are bit-stable.
            let again = tr.phi(t, tau).unwrap();
            assert_eq!(got.as_slice(), again.as_slice());
        }
    }
}
