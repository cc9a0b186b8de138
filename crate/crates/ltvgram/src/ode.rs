//! Vector-valued ODE integration used for transition matrices and Gramian
//! accumulation.
//!
//! The default method is the Dormand-Prince 5(4) pair with FSAL and a
//! standard PI-free step controller; a classical fixed-step RK4 is kept as a
//! cross-check method. Integration can run in either time direction and
//! lands on requested checkpoints exactly (steps are clamped, never
//! interpolated).

use crate::error::{Error, Result};
use nalgebra::DVector;

/// Integration method selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Adaptive Runge-Kutta order 5(4), Dormand-Prince coefficients.
    Dopri5,
    /// Classical fixed-step order 4 with the given step size.
    FixedRk4 { step: f64 },
}

/// Tolerances and method selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Relative tolerance (dimensionless).
    pub rel_tol: f64,
    /// Absolute tolerance.
    pub abs_tol: f64,
    /// Upper bound on the step size, in time units.
    pub max_step: f64,
    pub method: Method,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: 10.0,
            method: Method::Dopri5,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::config("integrator tolerances must be positive"));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::config("max step must be positive"));
        }
        if let Method::FixedRk4 { step } = self.method {
            if !(step > 0.0) {
                return Err(Error::config("fixed step must be positive"));
            }
        }
        Ok(())
    }

    pub fn with_tols(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorConfig {
            rel_tol,
            abs_tol,
            ..IntegratorConfig::default()
        }
    }
}

/// Right-hand side: writes dy/dt into `out`; may fail (entry evaluation).
pub trait Rhs {
    fn eval(&mut self, t: f64, y: &DVector<f64>, out: &mut DVector<f64>) -> Result<()>;
}

impl<F> Rhs for F
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>) -> Result<()>,
{
    fn eval(&mut self, t: f64, y: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        self(t, y, out)
    }
}

/// States at the requested checkpoints plus integration diagnostics.
#[derive(Debug, Clone)]
pub struct CheckpointRun {
    pub states: Vec<DVector<f64>>,
    /// Sum over accepted steps of the embedded local error estimate
    /// (max-norm). Zero for the fixed-step method.
    pub error_estimate: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Integrate from `(t0, y0)` through `checkpoints`, which must move strictly
/// monotonically away from `t0` (either direction). Returns one state per
/// checkpoint.
pub fn integrate_checkpoints(
    rhs: &mut dyn Rhs,
    t0: f64,
    y0: &DVector<f64>,
    checkpoints: &[f64],
    cfg: &IntegratorConfig,
) -> Result<CheckpointRun> {
    cfg.validate()?;
    if checkpoints.is_empty() {
        return Ok(CheckpointRun {
            states: Vec::new(),
            error_estimate: 0.0,
            accepted_steps: 0,
            rejected_steps: 0,
        });
    }
    if !t0.is_finite() || checkpoints.iter().any(|c| !c.is_finite()) {
        return Err(Error::config("times must be finite"));
    }
    let dir = (checkpoints[checkpoints.len() - 1] - t0).signum();
    let dir = if dir == 0.0 { 1.0 } else { dir };
    let mut prev = t0;
    for &c in checkpoints {
        if (c - prev) * dir < 0.0 {
            return Err(Error::config(
                "checkpoints must be monotone in the integration direction",
            ));
        }
        prev = c;
    }
    match cfg.method {
        Method::Dopri5 => dopri5(rhs, t0, y0, checkpoints, dir, cfg),
        Method::FixedRk4 { step } => rk4_fixed(rhs, t0, y0, checkpoints, dir, step),
    }
}

/// Single-endpoint convenience wrapper.
pub fn integrate_to(
    rhs: &mut dyn Rhs,
    t0: f64,
    y0: &DVector<f64>,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<(DVector<f64>, f64)> {
    if t0 == t1 {
        return Ok((y0.clone(), 0.0));
    }
    let run = integrate_checkpoints(rhs, t0, y0, &[t1], cfg)?;
    let err = run.error_estimate;
    Ok((run.states.into_iter().next().expect("one checkpoint"), err))
}

// Dormand-Prince 5(4) coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b_hat, the embedded error weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const MAX_STEPS: usize = 4_000_000;

fn check_finite(t: f64, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationFailure {
            time: t,
            reason: "non-finite state or derivative".to_string(),
        })
    }
}

fn dopri5(
    rhs: &mut dyn Rhs,
    t0: f64,
    y0: &DVector<f64>,
    checkpoints: &[f64],
    dir: f64,
    cfg: &IntegratorConfig,
) -> Result<CheckpointRun> {
    let dim = y0.len();
    let mut y = y0.clone();
    let mut t = t0;
    let mut states = Vec::with_capacity(checkpoints.len());
    let mut error_estimate = 0.0;
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    let mut k1 = DVector::zeros(dim);
    let mut k2 = DVector::zeros(dim);
    let mut k3 = DVector::zeros(dim);
    let mut k4 = DVector::zeros(dim);
    let mut k5 = DVector::zeros(dim);
    let mut k6 = DVector::zeros(dim);
    let mut k7 = DVector::zeros(dim);
    let mut y_stage = DVector::zeros(dim);
    let mut y_new = DVector::zeros(dim);

    rhs.eval(t, &y, &mut k1)?;
    check_finite(t, &k1)?;

    let mut h = initial_step(rhs, t, &y, &k1, dir, cfg)?;
    let mut cp_iter = checkpoints.iter().copied().peekable();

    while let Some(&target) = cp_iter.peek() {
        if (target - t) * dir <= 0.0 || (target - t).abs() < 1e-14 * t.abs().max(1.0) {
            // Checkpoint (numerically) reached; emit and move on.
            states.push(y.clone());
            cp_iter.next();
            continue;
        }
        let mut steps_left = MAX_STEPS;
        'advance: loop {
            if steps_left == 0 {
                return Err(Error::IntegrationFailure {
                    time: t,
                    reason: "step budget exhausted".to_string(),
                });
            }
            steps_left -= 1;

            let remaining = (target - t).abs();
            let mut h_try = h.min(cfg.max_step).min(remaining);
            if h_try < 1e-14 * t.abs().max(1.0) {
                return Err(Error::IntegrationFailure {
                    time: t,
                    reason: "step-size underflow".to_string(),
                });
            }
            let hs = h_try * dir;

            // Stage 2..6 and the two order-5/order-4 combinations.
            y_stage.copy_from(&y);
            y_stage.axpy(hs * A21, &k1, 1.0);
            rhs.eval(t + C2 * hs, &y_stage, &mut k2)?;

            y_stage.copy_from(&y);
            y_stage.axpy(hs * A31, &k1, 1.0);
            y_stage.axpy(hs * A32, &k2, 1.0);
            rhs.eval(t + C3 * hs, &y_stage, &mut k3)?;

            y_stage.copy_from(&y);
            y_stage.axpy(hs * A41, &k1, 1.0);
            y_stage.axpy(hs * A42, &k2, 1.0);
            y_stage.axpy(hs * A43, &k3, 1.0);
            rhs.eval(t + C4 * hs, &y_stage, &mut k4)?;

            y_stage.copy_from(&y);
            y_stage.axpy(hs * A51, &k1, 1.0);
            y_stage.axpy(hs * A52, &k2, 1.0);
            y_stage.axpy(hs * A53, &k3, 1.0);
            y_stage.axpy(hs * A54, &k4, 1.0);
            rhs.eval(t + C5 * hs, &y_stage, &mut k5)?;

            y_stage.copy_from(&y);
            y_stage.axpy(hs * A61, &k1, 1.0);
            y_stage.axpy(hs * A62, &k2, 1.0);
            y_stage.axpy(hs * A63, &k3, 1.0);
            y_stage.axpy(hs * A64, &k4, 1.0);
            y_stage.axpy(hs * A65, &k5, 1.0);
            rhs.eval(t + hs, &y_stage, &mut k6)?;

            y_new.copy_from(&y);
            y_new.axpy(hs * B1, &k1, 1.0);
            y_new.axpy(hs * B3, &k3, 1.0);
            y_new.axpy(hs * B4, &k4, 1.0);
            y_new.axpy(hs * B5, &k5, 1.0);
            y_new.axpy(hs * B6, &k6, 1.0);
            rhs.eval(t + hs, &y_new, &mut k7)?;
            check_finite(t + hs, &y_new)?;
            check_finite(t + hs, &k7)?;

            // Scaled RMS error of the embedded 4th-order difference.
            let mut err_sq = 0.0;
            let mut err_abs: f64 = 0.0;
            for i in 0..dim {
                let e = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc) * (e / sc);
                err_abs = err_abs.max(e.abs());
            }
            let err = (err_sq / dim as f64).sqrt();

            if !err.is_finite() {
                return Err(Error::IntegrationFailure {
                    time: t,
                    reason: "non-finite state or derivative".to_string(),
                });
            }

            if err <= 1.0 {
                t += hs;
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k7); // FSAL
                error_estimate += err_abs;
                accepted += 1;
                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
                h = (h_try * fac).min(cfg.max_step);
                if (target - t) * dir <= 0.0 || (target - t).abs() < 1e-14 * t.abs().max(1.0) {
                    break 'advance;
                }
            } else {
                rejected += 1;
                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                h_try *= fac;
                h = h_try;
            }
        }
        states.push(y.clone());
        cp_iter.next();
    }

    Ok(CheckpointRun {
        states,
        error_estimate,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

// Hairer/Norsett/Wanner starting-step heuristic (II.4).
fn initial_step(
    rhs: &mut dyn Rhs,
    t: f64,
    y: &DVector<f64>,
    f0: &DVector<f64>,
    dir: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let dim = y.len();
    let sc = |i: usize| cfg.abs_tol + cfg.rel_tol * y[i].abs();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..dim {
        d0 += (y[i] / sc(i)).powi(2);
        d1 += (f0[i] / sc(i)).powi(2);
    }
    let d0 = (d0 / dim as f64).sqrt();
    let d1 = (d1 / dim as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };

    let mut y1 = y.clone();
    y1.axpy(h0 * dir, f0, 1.0);
    let mut f1 = DVector::zeros(dim);
    rhs.eval(t + h0 * dir, &y1, &mut f1)?;
    let mut d2 = 0.0;
    for i in 0..dim {
        d2 += ((f1[i] - f0[i]) / sc(i)).powi(2);
    }
    let d2 = (d2 / dim as f64).sqrt() / h0;

    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(cfg.max_step))
}

fn rk4_fixed(
    rhs: &mut dyn Rhs,
    t0: f64,
    y0: &DVector<f64>,
    checkpoints: &[f64],
    dir: f64,
    step: f64,
) -> Result<CheckpointRun> {
    let dim = y0.len();
    let mut y = y0.clone();
    let mut t = t0;
    let mut states = Vec::with_capacity(checkpoints.len());
    let mut accepted = 0usize;

    let mut k1 = DVector::zeros(dim);
    let mut k2 = DVector::zeros(dim);
    let mut k3 = DVector::zeros(dim);
    let mut k4 = DVector::zeros(dim);
    let mut y_stage = DVector::zeros(dim);

    for &target in checkpoints {
        let span = (target - t).abs();
        if span > 0.0 {
            let n = (span / step).ceil().max(1.0) as usize;
            if n > MAX_STEPS {
                return Err(Error::IntegrationFailure {
                    time: t,
                    reason: "step budget exhausted".to_string(),
                });
            }
            let h = span / n as f64 * dir;
            for _ in 0..n {
                rhs.eval(t, &y, &mut k1)?;
                y_stage.copy_from(&y);
                y_stage.axpy(h / 2.0, &k1, 1.0);
                rhs.eval(t + h / 2.0, &y_stage, &mut k2)?;
                y_stage.copy_from(&y);
                y_stage.axpy(h / 2.0, &k2, 1.0);
                rhs.eval(t + h / 2.0, &y_stage, &mut k3)?;
                y_stage.copy_from(&y);
                y_stage.axpy(h, &k3, 1.0);
                rhs.eval(t + h, &y_stage, &mut k4)?;
                y.axpy(h / 6.0, &k1, 1.0);
                y.axpy(h / 3.0, &k2, 1.0);
                y.axpy(h / 3.0, &k3, 1.0);
                y.axpy(h / 6.0, &k4, 1.0);
                t += h;
                accepted += 1;
                check_finite(t, &y)?;
            }
            t = target;
        }
        states.push(y.clone());
    }

    Ok(CheckpointRun {
        states,
        error_estimate: 0.0,
        accepted_steps: accepted,
        rejected_steps: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, y: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        out[0] = -y[0];
        Ok(())
    }

    #[test]
    fn scalar_decay_matches_closed_form() {
        let cfg = IntegratorConfig::default();
        let y0 = DVector::from_element(1, 1.0);
        let (y, _) = integrate_to(&mut decay, 0.0, &y0, 1.0, &cfg).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn backward_integration_works() {
        let cfg = IntegratorConfig::default();
        let y0 = DVector::from_element(1, 1.0);
        let (y, _) = integrate_to(&mut decay, 1.0, &y0, 0.0, &cfg).unwrap();
        assert!((y[0] - 1.0f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn checkpoints_are_hit_exactly() {
        let cfg = IntegratorConfig::default();
        let y0 = DVector::from_element(1, 1.0);
        let cps = [0.25, 0.5, 0.75, 1.0];
        let mut rhs = |t: f64, y: &DVector<f64>, out: &mut DVector<f64>| -> Result<()> {
            out[0] = t * y[0];
            Ok(())
        };
        let run = integrate_checkpoints(&mut rhs, 0.0, &y0, &cps, &cfg).unwrap();
        for (i, &cp) in cps.iter().enumerate() {
            let want = (cp * cp / 2.0).exp();
            assert!(
                (run.states[i][0] - want).abs() < 1e-8,
                "checkpoint {cp}: got {} want {want}",
                run.states[i][0]
            );
        }
    }

    #[test]
    fn fixed_rk4_agrees_with_adaptive() {
        let cfg4 = IntegratorConfig {
            method: Method::FixedRk4 { step: 1e-3 },
            ..IntegratorConfig::default()
        };
        let y0 = DVector::from_element(1, 1.0);
        let (y, _) = integrate_to(&mut decay, 0.0, &y0, 1.0, &cfg4).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn blowup_reports_failure_with_time() {
        // y' = y^2 from y(0)=1 blows up at t = 1.
        let cfg = IntegratorConfig::default();
        let y0 = DVector::from_element(1, 1.0);
        let mut rhs = |_t: f64, y: &DVector<f64>, out: &mut DVector<f64>| -> Result<()> {
            out[0] = y[0] * y[0];
            Ok(())
        };
        match integrate_to(&mut rhs, 0.0, &y0, 2.0, &cfg) {
            Err(Error::IntegrationFailure { time, .. }) => {
                assert!((0.9..=1.1).contains(&time), "failure time {time}");
            }
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn rhs_errors_propagate() {
        let cfg = IntegratorConfig::default();
        let y0 = DVector::from_element(1, 1.0);
        let mut rhs = |t: f64, _y: &DVector<f64>, _out: &mut DVector<f64>| -> Result<()> {
            if t > 0.5 {
                Err(Error::Eval {
                    t,
                    cause: "boom".to_string(),
                })
            } else {
                Ok(())
            }
        };
        assert!(integrate_to(&mut rhs, 0.0, &y0, 1.0, &cfg).is_err());
    }

    #[test]
    fn non_monotone_checkpoints_rejected() {
        let cfg = IntegratorConfig::default();
        let y0 = DVector::from_element(1, 1.0);
        let cps = [0.5, 0.25];
        assert!(integrate_checkpoints(&mut decay, 0.0, &y0, &cps, &cfg).is_err());
    }
}
