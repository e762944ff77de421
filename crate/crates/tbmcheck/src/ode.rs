//! Adaptive Dormand-Prince 5(4) integrator.
//!
//! Small, allocation-light embedded Runge-Kutta pair with step rejection
//! and FSAL reuse. Output points are hit exactly by clipping the step, so
//! sampled trajectories are reproducible bit-for-bit for a given right
//! hand side and tolerance. The right hand side may fail (metric domain
//! errors, chart exits); failures abort the integration and surface as
//! typed errors.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum OdeError<E> {
    #[error("step size underflow at t={t}")]
    StepSizeUnderflow { t: f64 },
    #[error("exceeded {max} steps at t={t}")]
    MaxSteps { t: f64, max: usize },
    #[error(transparent)]
    Rhs(E),
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 100_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t1`, calling `observe` with the
/// state at each requested output time (strictly increasing, within
/// `[t0, t1]`). Returns the state at `t1`.
pub fn integrate<E, F, O>(
    f: &F,
    t0: f64,
    t1: f64,
    y0: &DVector<f64>,
    outputs: &[f64],
    opts: &OdeOptions,
    mut observe: O,
) -> Result<DVector<f64>, OdeError<E>>
where
    F: Fn(f64, &DVector<f64>, &mut DVector<f64>) -> Result<(), E>,
    O: FnMut(f64, &DVector<f64>),
{
    let dim = y0.len();
    let span = t1 - t0;
    let mut out_idx = 0;
    while out_idx < outputs.len() && outputs[out_idx] <= t0 {
        observe(outputs[out_idx], y0);
        out_idx += 1;
    }
    if span == 0.0 {
        while out_idx < outputs.len() {
            observe(outputs[out_idx], y0);
            out_idx += 1;
        }
        return Ok(y0.clone());
    }
    let direction = span.signum();

    let mut t = t0;
    let mut y = y0.clone();
    let mut k: Vec<DVector<f64>> = (0..7).map(|_| DVector::zeros(dim)).collect();
    let mut stage = DVector::zeros(dim);
    f(t, &y, &mut k[0]).map_err(OdeError::Rhs)?;

    // conservative initial step from the first derivative magnitude
    let f_norm = k[0].amax().max(1e-12);
    let y_norm = y.amax().max(1.0);
    let mut h = (0.01 * y_norm / f_norm).min(span.abs() * 0.5).max(1e-10) * direction;

    let mut steps = 0usize;

    loop {
        if (t - t1) * direction >= 0.0 {
            break;
        }
        if steps >= opts.max_steps {
            return Err(OdeError::MaxSteps {
                t,
                max: opts.max_steps,
            });
        }
        steps += 1;

        // clip to the next output time and to the end of the interval
        let mut target = t1;
        if out_idx < outputs.len() && (outputs[out_idx] - target) * direction < 0.0 {
            target = outputs[out_idx];
        }
        let mut h_step = h;
        let mut clipped = false;
        if (t + h_step - target) * direction > 0.0 {
            h_step = target - t;
            clipped = true;
        }
        if h_step.abs() < 1e-15 * t.abs().max(1.0) {
            // already at the target up to roundoff
            if out_idx < outputs.len() && target == outputs[out_idx] {
                observe(outputs[out_idx], &y);
                out_idx += 1;
                continue;
            }
            break;
        }

        let mut failed = false;
        for i in 1..7 {
            stage.copy_from(&y);
            for (j, kj) in k.iter().enumerate().take(i) {
                let a = A[i - 1][j];
                if a != 0.0 {
                    stage.axpy(a * h_step, kj, 1.0);
                }
            }
            let (_, tail) = k.split_at_mut(i);
            if f(t + C[i] * h_step, &stage, &mut tail[0]).is_err() {
                // a failing trial stage usually means the step left the
                // valid domain; retry with a smaller step before giving up
                failed = true;
                break;
            }
        }
        if failed {
            h *= 0.25;
            h_step = h;
            if h_step.abs() < 1e-14 {
                // let the error surface from a direct evaluation
                f(t, &y, &mut stage).map_err(OdeError::Rhs)?;
                return Err(OdeError::StepSizeUnderflow { t });
            }
            continue;
        }

        // 5th order solution and embedded error estimate
        let mut y5 = y.clone();
        let mut err = DVector::zeros(dim);
        for i in 0..7 {
            if B5[i] != 0.0 {
                y5.axpy(B5[i] * h_step, &k[i], 1.0);
            }
            let d = B5[i] - B4[i];
            if d != 0.0 {
                err.axpy(d * h_step, &k[i], 1.0);
            }
        }

        let mut err_norm = 0.0f64;
        for i in 0..dim {
            let tol = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            err_norm = err_norm.max((err[i] / tol).abs());
        }

        if err_norm <= 1.0 {
            t += h_step;
            std::mem::swap(&mut y, &mut y5);
            // FSAL: stage 7 was evaluated at (t+h, y5)
            let k6 = k[6].clone();
            k[0].copy_from(&k6);

            if out_idx < outputs.len() && (t - outputs[out_idx]).abs() <= 1e-14 * t.abs().max(1.0) {
                observe(outputs[out_idx], &y);
                out_idx += 1;
            }

            let scale = if err_norm == 0.0 {
                5.0
            } else {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !clipped {
                h = h_step * scale;
            }
            // when the step was clipped to hit an output, keep the
            // controller's step estimate instead of the truncated one
        } else {
            let scale = (0.9 * err_norm.powf(-0.2)).clamp(0.1, 0.9);
            h = h_step * scale;
            // k[0] still matches (t, y); no re-evaluation needed
            if h.abs() < 1e-15 * t.abs().max(1.0) {
                return Err(OdeError::StepSizeUnderflow { t });
            }
        }
    }

    while out_idx < outputs.len() {
        observe(outputs[out_idx], &y);
        out_idx += 1;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn opts() -> OdeOptions {
        OdeOptions::with_tol(1e-10)
    }

    #[test]
    fn exponential_growth() {
        let f = |_t: f64, y: &DVector<f64>, dy: &mut DVector<f64>| -> Result<(), Infallible> {
            dy[0] = y[0];
            Ok(())
        };
        let y0 = DVector::from_vec(vec![1.0]);
        let y1 = integrate(&f, 0.0, 1.0, &y0, &[], &opts(), |_, _| {}).unwrap();
        assert!((y1[0] - 1.0f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_round_trip() {
        let f = |_t: f64, y: &DVector<f64>, dy: &mut DVector<f64>| -> Result<(), Infallible> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let y0 = DVector::from_vec(vec![1.0, 0.0]);
        let tau = 2.0 * std::f64::consts::PI;
        let y1 = integrate(&f, 0.0, tau, &y0, &[], &opts(), |_, _| {}).unwrap();
        assert!((y1[0] - 1.0).abs() < 1e-8, "y={}", y1[0]);
        assert!(y1[1].abs() < 1e-8);
    }

    #[test]
    fn outputs_hit_exactly() {
        let f = |t: f64, _y: &DVector<f64>, dy: &mut DVector<f64>| -> Result<(), Infallible> {
            dy[0] = 2.0 * t;
            Ok(())
        };
        let y0 = DVector::from_vec(vec![0.0]);
        let req = [0.25, 0.5, 0.75];
        let mut seen = Vec::new();
        integrate(&f, 0.0, 1.0, &y0, &req, &opts(), |t, y| {
            seen.push((t, y[0]));
        })
        .unwrap();
        assert_eq!(seen.len(), 3);
        for (t, v) in seen {
            assert!((v - t * t).abs() < 1e-10, "t={t} v={v}");
        }
    }

    #[test]
    fn rhs_error_propagates() {
        #[derive(Debug, PartialEq)]
        struct Boom;
        let f = |t: f64, _y: &DVector<f64>, dy: &mut DVector<f64>| -> Result<(), Boom> {
            if t > 0.5 {
                return Err(Boom);
            }
            dy[0] = 1.0;
            Ok(())
        };
        let y0 = DVector::from_vec(vec![0.0]);
        let r = integrate(&f, 0.0, 1.0, &y0, &[], &opts(), |_, _| {});
        assert!(r.is_err());
    }
}
