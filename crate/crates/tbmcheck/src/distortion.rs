//! Generalized sine, reduced and full distortion coefficients, and the
//! convexity equivalence they encode.
//!
//! `sin_k` solves `f'' + k f = 0` with `f(0) = 0`, `f'(0) = 1`. The
//! reduced coefficient `sigma_k^(t)(theta) = sin_k(t theta)/sin_k(theta)`
//! is finite on `k theta^2 < pi^2` and `+infinity` otherwise; infinity is
//! a tagged value, never an IEEE float inside arithmetic. The full
//! coefficient is
//! `tau_{K,N}^(t)(theta) = t^{1/N} (sigma_{K/(N-1)}^(t)(theta))^{1-1/N}`.

use thiserror::Error;

const PI2: f64 = std::f64::consts::PI * std::f64::consts::PI;
/// Series branch threshold: `|k| t^2` below this uses the Taylor series
/// of `sin_k` to avoid cancellation.
const SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Error)]
pub enum DistortionError {
    #[error("dimension parameter N = {0} must exceed 1")]
    InvalidDimensionParam(f64),
    #[error("grid too coarse: {got} points, need at least {need}")]
    GridTooCoarse { got: usize, need: usize },
    #[error("factor concavity precondition failed for {which} (worst margin {margin})")]
    PreconditionFailed { which: &'static str, margin: f64 },
}

/// A nonnegative value or a tagged positive infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInfinity,
}

impl ExtReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Finite payload; panics on infinity (callers check first).
    pub fn unwrap_finite(&self) -> f64 {
        match self {
            ExtReal::Finite(v) => *v,
            ExtReal::PosInfinity => panic!("unexpected infinite distortion coefficient"),
        }
    }

    /// Comparison with infinity above every real.
    pub fn as_ordering_key(&self) -> f64 {
        match self {
            ExtReal::Finite(v) => *v,
            ExtReal::PosInfinity => f64::INFINITY,
        }
    }
}

/// Generalized sine: `sin(sqrt(k) t)/sqrt(k)` for `k > 0`, `t` for
/// `k = 0`, `sinh(sqrt(-k) t)/sqrt(-k)` for `k < 0`. A series branch
/// handles `|k| t^2` near zero.
pub fn sin_k(k: f64, t: f64) -> f64 {
    let kt2 = k * t * t;
    if kt2.abs() < SERIES_THRESHOLD {
        // t (1 - k t^2/6 + (k t^2)^2/120 - ...)
        return t * (1.0 - kt2 / 6.0 + kt2 * kt2 / 120.0);
    }
    if k > 0.0 {
        let r = k.sqrt();
        (r * t).sin() / r
    } else {
        let r = (-k).sqrt();
        (r * t).sinh() / r
    }
}

/// First derivative of the generalized sine (the matching cosine).
pub fn cos_k(k: f64, t: f64) -> f64 {
    let kt2 = k * t * t;
    if kt2.abs() < SERIES_THRESHOLD {
        return 1.0 - kt2 / 2.0 + kt2 * kt2 / 24.0;
    }
    if k > 0.0 {
        (k.sqrt() * t).cos()
    } else {
        ((-k).sqrt() * t).cosh()
    }
}

/// Reduced distortion coefficient.
///
/// Finite branch `sin_k(t theta)/sin_k(theta)` requires
/// `k theta^2 < pi^2`; otherwise the value is tagged infinity. The
/// `theta = 0` limit extends continuously to `t`; `t = 0` and `t = 1`
/// give exactly `0` and `1` on the finite branch.
pub fn sigma(k: f64, t: f64, theta: f64) -> ExtReal {
    debug_assert!((0.0..=1.0).contains(&t), "t={t} outside [0,1]");
    if k * theta * theta >= PI2 {
        return ExtReal::PosInfinity;
    }
    if t == 0.0 {
        return ExtReal::Finite(0.0);
    }
    if t == 1.0 {
        return ExtReal::Finite(1.0);
    }
    if theta == 0.0 {
        return ExtReal::Finite(t);
    }
    ExtReal::Finite(sin_k(k, t * theta) / sin_k(k, theta))
}

/// Distortion coefficient
/// `tau_{K,N}^(t)(theta) = t^{1/N} sigma_{K/(N-1)}^(t)(theta)^{1-1/N}`,
/// with `infinity^m = infinity` for `m > 0` and `tau = 0` at `t = 0`.
pub fn tau(k_bound: f64, n_param: f64, t: f64, theta: f64) -> Result<ExtReal, DistortionError> {
    if n_param <= 1.0 {
        return Err(DistortionError::InvalidDimensionParam(n_param));
    }
    if t == 0.0 {
        return Ok(ExtReal::Finite(0.0));
    }
    let s = sigma(k_bound / (n_param - 1.0), t, theta);
    Ok(match s {
        ExtReal::Finite(v) => ExtReal::Finite(t.powf(1.0 / n_param) * v.powf(1.0 - 1.0 / n_param)),
        ExtReal::PosInfinity => ExtReal::PosInfinity,
    })
}

/// Sensitivity of `tau` in `theta` by central differences (used to
/// propagate extremal-statistic sampling resolution into verdicts).
pub fn tau_theta_sensitivity(k_bound: f64, n_param: f64, t: f64, theta: f64) -> f64 {
    let h = 1e-6 * (1.0 + theta.abs());
    let lo = (theta - h).max(0.0);
    let hi = theta + h;
    match (tau(k_bound, n_param, t, hi), tau(k_bound, n_param, t, lo)) {
        (Ok(ExtReal::Finite(a)), Ok(ExtReal::Finite(b))) => ((a - b) / (hi - lo)).abs(),
        _ => f64::INFINITY,
    }
}

/// Outcome of the convexity equivalence check on a sampled function.
#[derive(Debug, Clone)]
pub struct ConvexityCheck {
    /// Second-difference test of `f'' + k f >= 0`.
    pub ode_holds: bool,
    /// Worst (most negative) margin of the second-difference test.
    pub ode_margin: f64,
    /// Combination test `f((1-s)a + s b) <= sigma-combination` over all
    /// grid triples.
    pub combination_holds: bool,
    /// Worst (most negative) margin of the combination test.
    pub combination_margin: f64,
}

/// Minimum number of grid points for second differences.
pub const MIN_GRID: usize = 64;
/// Relative tolerance band for the nonnegativity checks.
pub const CHECK_BAND: f64 = 1e-6;

/// Checks the two equivalent conditions on a uniformly sampled `f`:
/// nonnegativity of `f'' + k f` (second differences) and the reduced
/// distortion combination bound on every grid triple `(a, b, s)`.
pub fn check_convexity_equivalence(
    samples: &[f64],
    a: f64,
    b: f64,
    k: f64,
) -> Result<ConvexityCheck, DistortionError> {
    let m = samples.len();
    if m < MIN_GRID {
        return Err(DistortionError::GridTooCoarse {
            got: m,
            need: MIN_GRID,
        });
    }
    let h = (b - a) / (m - 1) as f64;
    let scale = samples
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    let band = CHECK_BAND * scale;

    let mut ode_margin = f64::INFINITY;
    for i in 1..m - 1 {
        let second = (samples[i + 1] - 2.0 * samples[i] + samples[i - 1]) / (h * h);
        ode_margin = ode_margin.min(second + k * samples[i]);
    }
    let ode_holds = ode_margin >= -band;

    let mut combination_margin = f64::INFINITY;
    for i in 0..m {
        for j in (i + 2)..m {
            let theta = (j - i) as f64 * h;
            for mid in (i + 1)..j {
                let s = (mid - i) as f64 / (j - i) as f64;
                let c1 = sigma(k, 1.0 - s, theta);
                let c2 = sigma(k, s, theta);
                // infinite coefficients bound anything
                if let (ExtReal::Finite(c1), ExtReal::Finite(c2)) = (c1, c2) {
                    let bound = c1 * samples[i] + c2 * samples[j];
                    combination_margin = combination_margin.min(bound - samples[mid]);
                }
            }
        }
    }
    let combination_holds = combination_margin >= -band;

    Ok(ConvexityCheck {
        ode_holds,
        ode_margin,
        combination_holds,
        combination_margin,
    })
}

/// Outcome of the two-factor distortion inequality check.
#[derive(Debug, Clone)]
pub struct MixedDistortionCheck {
    pub holds: bool,
    pub worst_margin: f64,
}

/// Verifies the product-decomposition inequality: for `f = f_par *
/// f_perp` with `(f_par^{1/n1})'' + (k1/n1) f_par^{1/n1} <= 0` and
/// likewise for the second factor, on every grid triple
///
/// `f^{1/N}((1-s)a + s b) >= prod_i sigma_{k_i/n_i}^{(1-s)}(theta)^{n_i/N} * f^{1/N}(a) + ...`
///
/// with `N = n1 + n2` and `theta = b - a`.
pub fn check_mixed_distortion(
    f_par: &[f64],
    f_perp: &[f64],
    a: f64,
    b: f64,
    k1: f64,
    n1: f64,
    k2: f64,
    n2: f64,
) -> Result<MixedDistortionCheck, DistortionError> {
    let m = f_par.len();
    if m < MIN_GRID || f_perp.len() != m {
        return Err(DistortionError::GridTooCoarse {
            got: m.min(f_perp.len()),
            need: MIN_GRID,
        });
    }
    let h = (b - a) / (m - 1) as f64;
    // factor concavity preconditions on the rescaled powers
    for (name, samples, kk, nn) in [("f_par", f_par, k1, n1), ("f_perp", f_perp, k2, n2)] {
        let powered: Vec<f64> = samples.iter().map(|v| v.powf(1.0 / nn)).collect();
        let scale = powered.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let mut worst = f64::INFINITY;
        for i in 1..m - 1 {
            let second = (powered[i + 1] - 2.0 * powered[i] + powered[i - 1]) / (h * h);
            worst = worst.min(-(second + (kk / nn) * powered[i]));
        }
        // band includes the O(h^2) truncation of the second difference
        if worst < -(CHECK_BAND + h * h) * scale {
            return Err(DistortionError::PreconditionFailed {
                which: name,
                margin: worst,
            });
        }
    }

    let n_total = n1 + n2;
    let f: Vec<f64> = f_par.iter().zip(f_perp).map(|(p, q)| p * q).collect();
    let froot: Vec<f64> = f.iter().map(|v| v.powf(1.0 / n_total)).collect();
    let scale = froot.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut worst = f64::INFINITY;
    for i in 0..m {
        for j in (i + 2)..m {
            let theta = (j - i) as f64 * h;
            for mid in (i + 1)..j {
                let s = (mid - i) as f64 / (j - i) as f64;
                let combo = |tt: f64| -> Option<f64> {
                    let s1 = sigma(k1 / n1, tt, theta);
                    let s2 = sigma(k2 / n2, tt, theta);
                    match (s1, s2) {
                        (ExtReal::Finite(a1), ExtReal::Finite(a2)) => {
                            Some(a1.powf(n1 / n_total) * a2.powf(n2 / n_total))
                        }
                        _ => None,
                    }
                };
                if let (Some(c1), Some(c2)) = (combo(1.0 - s), combo(s)) {
                    let bound = c1 * froot[i] + c2 * froot[j];
                    worst = worst.min(froot[mid] - bound);
                }
            }
        }
    }
    Ok(MixedDistortionCheck {
        holds: worst >= -CHECK_BAND * scale,
        worst_margin: worst,
    })
}
