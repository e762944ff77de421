//! Built-in spacetimes.
//!
//! * `minkowski{2,3}` — flat, unweighted, `N = n`.
//! * `weighted_minkowski{2,3}` — flat with weight `psi = c*x0` (linear)
//!   or `psi = c*x0^2` (quadratic), `N > n` required.
//! * `warped2` — `dt^2 - exp(2t) dx^2`, the expanding two-dimensional
//!   warped product with constant timelike Ricci value `-1`.

use crate::exprparse::{parse, Expr};
use crate::geometry::{GeometryError, WeightedSpacetime};

fn diag_metric(n: usize) -> Vec<Vec<Expr>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i != j {
                        Expr::Const(0.0)
                    } else if i == 0 {
                        Expr::Const(1.0)
                    } else {
                        Expr::Const(-1.0)
                    }
                })
                .collect()
        })
        .collect()
}

fn default_chart(n: usize) -> Vec<(f64, f64)> {
    vec![(-10.0, 10.0); n]
}

fn warped2_metric() -> Vec<Vec<Expr>> {
    vec![
        vec![Expr::Const(1.0), Expr::Const(0.0)],
        vec![Expr::Const(0.0), parse("-exp(2*x0)").unwrap()],
    ]
}

/// Flat spacetime `diag(1, -1, ..., -1)` with trivial weight.
pub fn minkowski(n: usize) -> WeightedSpacetime {
    try_minkowski(n, n as f64).expect("catalog metric is valid")
}

pub fn try_minkowski(n: usize, n_param: f64) -> Result<WeightedSpacetime, GeometryError> {
    WeightedSpacetime::new(
        n,
        diag_metric(n),
        Expr::Const(0.0),
        n_param,
        default_chart(n),
    )
}

/// Flat spacetime with linear weight `psi = slope * x0`.
pub fn weighted_minkowski(n: usize, slope: f64, n_param: f64) -> WeightedSpacetime {
    try_weighted_minkowski(n, slope, n_param, false).expect("catalog metric is valid")
}

/// Flat spacetime with quadratic weight `psi = coeff * x0^2`.
pub fn weighted_minkowski_quadratic(n: usize, coeff: f64, n_param: f64) -> WeightedSpacetime {
    try_weighted_minkowski(n, coeff, n_param, true).expect("catalog metric is valid")
}

pub fn try_weighted_minkowski(
    n: usize,
    coeff: f64,
    n_param: f64,
    quadratic: bool,
) -> Result<WeightedSpacetime, GeometryError> {
    let psi = if quadratic {
        parse(&format!("{coeff:e}*x0^2")).expect("catalog weight parses")
    } else {
        parse(&format!("{coeff:e}*x0")).expect("catalog weight parses")
    };
    WeightedSpacetime::new(n, diag_metric(n), psi, n_param, default_chart(n))
}

/// Expanding warped product `dt^2 - exp(2t) dx^2` on a bounded chart.
pub fn warped2() -> WeightedSpacetime {
    try_warped2(2.0).expect("catalog metric is valid")
}

pub fn try_warped2(n_param: f64) -> Result<WeightedSpacetime, GeometryError> {
    WeightedSpacetime::new(
        2,
        warped2_metric(),
        Expr::Const(0.0),
        n_param,
        vec![(-2.0, 2.0), (-2.0, 2.0)],
    )
}

/// Looks up a catalog spacetime by name.
///
/// `weight_coeff` scales the weight profile of the weighted entries
/// (default 1), `quadratic` switches them from `c*x0` to `c*x0^2`, and
/// `n_param` overrides the default synthetic dimension.
pub fn by_name(
    name: &str,
    weight_coeff: Option<f64>,
    quadratic: bool,
    n_param: Option<f64>,
) -> Option<Result<WeightedSpacetime, GeometryError>> {
    let coeff = weight_coeff.unwrap_or(1.0);
    Some(match name {
        "minkowski2" => try_minkowski(2, n_param.unwrap_or(2.0)),
        "minkowski3" => try_minkowski(3, n_param.unwrap_or(3.0)),
        "weighted_minkowski2" => {
            try_weighted_minkowski(2, coeff, n_param.unwrap_or(3.0), quadratic)
        }
        "weighted_minkowski3" => {
            try_weighted_minkowski(3, coeff, n_param.unwrap_or(4.0), quadratic)
        }
        "warped2" => try_warped2(n_param.unwrap_or(2.0)),
        _ => return None,
    })
}

/// Names accepted by [`by_name`].
pub const CATALOG_NAMES: [&str; 5] = [
    "minkowski2",
    "minkowski3",
    "weighted_minkowski2",
    "weighted_minkowski3",
    "warped2",
];
