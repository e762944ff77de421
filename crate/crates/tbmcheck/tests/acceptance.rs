//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line with its measured quantities and runtime.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! lines; every tolerance is pinned in the assertions below.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use std::sync::Arc;
use std::time::Instant;
use tbmcheck::catalog;
use tbmcheck::distortion::{self, ExtReal};
use tbmcheck::flow::FlowOptions;
use tbmcheck::geodesics::{self, SeparationValue};
use tbmcheck::jacobi::{self, ClosureField};
use tbmcheck::regions::{self, RegionSpec};
use tbmcheck::tbm::{self, SearchOutcome, TbmParams, Verdict};

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

fn opts() -> FlowOptions {
    FlowOptions::default()
}

fn report(criterion: &str, pass: bool, budget_s: f64, elapsed_s: f64, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} ({elapsed_s:.1}s of {budget_s:.0}s budget) — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {detail}");
    assert!(
        elapsed_s < budget_s,
        "{criterion} exceeded runtime budget: {elapsed_s:.1}s > {budget_s:.0}s"
    );
}

#[test]
fn criterion_1_flat_consistency() {
    let start = Instant::now();
    let mut detail = String::new();

    // Ricci vanishes identically on flat catalog spacetimes
    let mut max_ric = 0.0f64;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for st in [catalog::minkowski(2), catalog::minkowski(3)] {
        for _ in 0..20 {
            let x: Vec<f64> = (0..st.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let ric = st.ricci(&x, 1e-4).unwrap();
            max_ric = max_ric.max(ric.amax());
        }
    }
    let ric_ok = max_ric < 1e-8;
    detail.push_str(&format!("max|Ric|={max_ric:.2e}; "));

    // exponential/logarithm round trip
    let mut max_rt = 0.0f64;
    for st in [catalog::minkowski(2), catalog::minkowski(3)] {
        let n = st.dim();
        for _ in 0..50 {
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
            let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-0.4..0.4));
            v[0] = rng.gen_range(0.7..1.3);
            let y = geodesics::exp_map(&st, &x, &v, 1.0, &opts()).unwrap();
            let log = geodesics::log_map(&st, &x, &y, &opts()).unwrap();
            max_rt = max_rt.max((&log.tangent.v - &v).amax());
        }
    }
    let rt_ok = max_rt < 1e-7;
    detail.push_str(&format!("roundtrip={max_rt:.2e}; "));

    // closed-form interval
    let st2 = catalog::minkowski(2);
    let sep =
        geodesics::time_separation(&st2, &dv(&[0.0, 0.0]), &dv(&[2.0, 1.0]), &opts()).unwrap();
    let want = 3.0f64.sqrt();
    let sep_err = (sep.value() - want).abs();
    let sep_ok = sep_err < 1e-8;
    detail.push_str(&format!("|l - sqrt3|={sep_err:.2e}; "));

    // interpolant volume of translated congruent cubes
    let delta = 0.4;
    let a = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
    let b = RegionSpec::coordinate_box(&dv(&[1.0, 0.0]), delta);
    let params = regions::InterpolantParams {
        t: 0.5,
        pair_samples: 1 << 17,
        voxel_side: delta / 64.0,
        extra_pairs: vec![],
    };
    let g = regions::interpolant_region(&st2, &a, &b, &params, &opts()).unwrap();
    let est = regions::measure(&st2, &g, delta / 64.0, &opts()).unwrap();
    let vol_err = (est.value - delta * delta).abs() / (delta * delta);
    let vol_ok = vol_err < 1e-3;
    detail.push_str(&format!("interpolant vol rel err={vol_err:.2e}"));

    report(
        "1 flat consistency",
        ric_ok && rt_ok && sep_ok && vol_ok,
        30.0,
        start.elapsed().as_secs_f64(),
        &detail,
    );
}

#[test]
fn criterion_2_distortion_suite() {
    let start = Instant::now();
    let mut detail = String::new();

    // boundary-problem residual of the reduced coefficient
    let m = 10_000usize;
    let h = 1.0 / (m - 1) as f64;
    let mut worst_resid = 0.0f64;
    for (k, theta) in [(1.0, 2.9), (2.0, 2.0), (-1.0, 3.0), (0.5, 0.4), (8.0, 1.0)] {
        assert!(k * theta * theta < 0.9 * std::f64::consts::PI.powi(2));
        let vals: Vec<f64> = (0..m)
            .map(|i| match distortion::sigma(k, i as f64 * h, theta) {
                ExtReal::Finite(v) => v,
                ExtReal::PosInfinity => panic!("finite domain"),
            })
            .collect();
        for i in 1..m - 1 {
            let second = (vals[i + 1] - 2.0 * vals[i] + vals[i - 1]) / (h * h);
            worst_resid = worst_resid.max((second + k * theta * theta * vals[i]).abs());
        }
    }
    let resid_ok = worst_resid <= 1e-6;
    detail.push_str(&format!("bvp residual={worst_resid:.2e}; "));

    // small-theta expansion order
    let mut min_ratio = f64::INFINITY;
    for k in [1.0, -1.0, 2.5, -3.0] {
        for t in [0.3, 0.5, 0.8] {
            let resid = |theta: f64| {
                let s = match distortion::sigma(k, t, theta) {
                    ExtReal::Finite(v) => v,
                    _ => unreachable!(),
                };
                (s - t - t * (1.0 - t) * (1.0 + t) * k * theta * theta / 6.0).abs()
            };
            min_ratio = min_ratio.min(resid(0.2) / resid(0.1));
        }
    }
    let order_ok = min_ratio >= 15.0;
    detail.push_str(&format!("order-4 ratio={min_ratio:.1}; "));

    // full coefficient dominates the reduced one on a 10^4 grid
    let mut violations = 0usize;
    let mut grid_points = 0usize;
    for ki in 0..10 {
        let k = -3.0 + 0.8 * ki as f64;
        for ni in 0..10 {
            let n = 1.2 + 0.5 * ni as f64;
            for ti in 0..10 {
                let t = 0.05 + 0.1 * ti as f64;
                for hi in 0..10 {
                    let theta = 0.05 + 0.15 * hi as f64;
                    grid_points += 1;
                    let lhs = distortion::sigma(k / n, t, theta);
                    let rhs = distortion::tau(k, n, t, theta).unwrap();
                    match (lhs, rhs) {
                        (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                            if b < a - 1e-12 {
                                violations += 1;
                            }
                        }
                        (ExtReal::PosInfinity, ExtReal::Finite(_)) => violations += 1,
                        _ => {}
                    }
                }
            }
        }
    }
    let grid_ok = violations == 0 && grid_points == 10_000;
    detail.push_str(&format!(
        "tau>=sigma violations={violations}/{grid_points}; "
    ));

    // equivalence checker agreement on generated functions
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let mut disagreements = 0usize;
    let mut tested = 0usize;
    while tested < 50 {
        let k: f64 = rng.gen_range(-2.0..2.0);
        let c0: f64 = rng.gen_range(0.5..2.0);
        let c1: f64 = rng.gen_range(-1.0..1.0);
        let c2: f64 = rng.gen_range(-2.0..2.0);
        let w: f64 = rng.gen_range(0.5..3.0);
        let amp: f64 = rng.gen_range(-0.5..0.5);
        let f = |t: f64| c0 + c1 * t + c2 * t * t + amp * (w * t).sin();
        let fpp = |t: f64| 2.0 * c2 - amp * w * w * (w * t).sin();
        let grid = 96usize;
        let samples: Vec<f64> = (0..grid).map(|i| f(i as f64 / (grid - 1) as f64)).collect();
        let scale = samples.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if samples.iter().any(|v| *v <= 0.05) {
            continue; // the statement concerns nonnegative functions
        }
        // analytic direction with a clear margin
        let margin = (0..grid)
            .map(|i| {
                let t = i as f64 / (grid - 1) as f64;
                fpp(t) + k * f(t)
            })
            .fold(f64::INFINITY, f64::min);
        if margin.abs() < 1e-3 * scale {
            continue; // too close to the boundary to decide discretely
        }
        let check = distortion::check_convexity_equivalence(&samples, 0.0, 1.0, k).unwrap();
        let analytic = margin >= 0.0;
        if check.ode_holds != analytic || check.combination_holds != analytic {
            disagreements += 1;
        }
        tested += 1;
    }
    let equiv_ok = disagreements == 0;
    detail.push_str(&format!("equivalence disagreements={disagreements}/50"));

    report(
        "2 distortion suite",
        resid_ok && order_ok && grid_ok && equiv_ok,
        10.0,
        start.elapsed().as_secs_f64(),
        &detail,
    );
}

#[test]
fn criterion_3_jacobi_taylor_suite() {
    let start = Instant::now();
    let mut detail = String::new();
    let st = catalog::warped2();
    let x0 = dv(&[0.0, 0.0]);
    let v0 = dv(&[1.0, 0.0]);

    // boundary-derivative model decays cubically
    let mut df_errors = Vec::new();
    for lambda in [0.2, 0.1, 0.05] {
        let check = jacobi::df_taylor_check(&st, &x0, &v0, lambda, 0.5, &opts()).unwrap();
        df_errors.push(check.error);
    }
    let df_ratios: Vec<f64> = df_errors.windows(2).map(|w| w[0] / w[1]).collect();
    let df_ok = df_ratios.iter().all(|r| *r >= 7.0);
    detail.push_str(&format!("DF ratios={df_ratios:?}; "));

    // transport-derivative quadratic model decays cubically
    let field = ClosureField {
        value_fn: |_: &DVector<f64>| DVector::from_vec(vec![1.0, 0.0]),
        deriv_fn: None,
    };
    let mut dt_errors = Vec::new();
    for lambda in [0.2, 0.1, 0.05] {
        let td = jacobi::transport_derivative(&st, &x0, &field, lambda, &opts()).unwrap();
        dt_errors.push(td.error);
    }
    let dt_ratios: Vec<f64> = dt_errors.windows(2).map(|w| w[0] / w[1]).collect();
    let dt_ok = dt_ratios.iter().all(|r| *r >= 7.0);
    detail.push_str(&format!("DT ratios={dt_ratios:?}; "));

    // determinant trace identity with a fourth-order stencil
    let state = jacobi::propagate_jacobi_ivp(
        &st,
        &x0,
        &dv(&[1.0, 0.1]),
        DMatrix::identity(2, 2),
        0.2 * DMatrix::identity(2, 2),
        1.0,
        64,
        &opts(),
    )
    .unwrap();
    let with_l = jacobi::riccati_state(&state).unwrap();
    let l = with_l.riccati.as_ref().unwrap();
    let det = with_l.det_m();
    let dt = with_l.times[1] - with_l.times[0];
    let mut worst_rel = 0.0f64;
    for i in 2..with_l.times.len() - 2 {
        let ddet = (-det[i + 2] + 8.0 * det[i + 1] - 8.0 * det[i - 1] + det[i - 2]) / (12.0 * dt);
        let want = det[i] * l[i].trace();
        worst_rel = worst_rel.max((ddet - want).abs() / (1.0 + want.abs()));
    }
    let trace_ok = worst_rel <= 1e-6;
    detail.push_str(&format!("trace identity rel={worst_rel:.2e}"));

    report(
        "3 jacobi/taylor suite",
        df_ok && dt_ok && trace_ok,
        60.0,
        start.elapsed().as_secs_f64(),
        &detail,
    );
}

#[test]
fn criterion_4_distortion_ode_realization() {
    let start = Instant::now();
    let mut detail = String::new();
    let st = catalog::weighted_minkowski(2, 1.0, 3.0);
    let x0 = dv(&[0.0, 0.0]);
    let v0 = dv(&[1.0, 0.0]);

    let be = st.bakry_emery_ricci(x0.as_slice(), &v0, 1e-4).unwrap();
    let be_ok = (be + 1.0).abs() < 1e-6;
    detail.push_str(&format!("BE(v0,v0)={be:.9}; "));

    let field = tbm::build_transport_field(&st, &x0, &v0, &opts()).unwrap();
    let mut sups = Vec::new();
    let mut all_hold = true;
    for lambda in [0.1, 0.05, 0.025] {
        let rep = tbm::check_distortion_ode(&st, &field, lambda, 0.0, 0.4, 64, &opts()).unwrap();
        all_hold &= rep.holds;
        sups.push(rep.sup_error_term);
    }
    let monotone = sups[0] > sups[1] && sups[1] > sups[2];
    detail.push_str(&format!("holds={all_hold}, sup|E|={sups:?}"));

    report(
        "4 distortion ode realization",
        be_ok && all_hold && monotone,
        60.0,
        start.elapsed().as_secs_f64(),
        &detail,
    );
}

#[test]
fn criterion_5_main_theorem_realization() {
    let start = Instant::now();
    let mut detail = String::new();

    // positive case: weighted flat spacetime violates TBM(0, 3)
    let st = catalog::weighted_minkowski(2, 1.0, 3.0);
    let search = tbm::SearchParams {
        scan_samples: 128,
        tbm: TbmParams::default(),
        ..Default::default()
    };
    let rep = tbm::find_counterexample(&st, 0.0, 0.4, &search, &opts()).unwrap();
    let found = rep.outcome == SearchOutcome::Found;
    let mut certified = false;
    if let Some(last) = rep.attempts.last() {
        certified = last.verdict == Verdict::Violated
            && last.lhs + last.lhs_gap + last.tolerance < last.rhs - last.rhs_gap
            && last.dualizability.all_timelike;
        detail.push_str(&format!(
            "violation at lambda={:.3}: lhs+gap={:.6e} < rhs-gap={:.6e}; ",
            rep.lambdas.last().unwrap(),
            last.lhs + last.lhs_gap,
            last.rhs - last.rhs_gap
        ));
    }
    // the grid is lambda_max * 2^-j, j <= 4
    let grid_ok = rep
        .lambdas
        .iter()
        .all(|l| (0..5).any(|j| (l - 0.2 * 0.5f64.powi(j)).abs() < 1e-12));

    // negative control: unweighted flat space produces no candidate
    let st0 = catalog::minkowski(2);
    let rep0 = tbm::find_counterexample(&st0, 0.0, 0.4, &search, &opts()).unwrap();
    let control_ok = rep0.outcome == SearchOutcome::NoCandidate && rep0.candidate.is_none();
    detail.push_str(&format!(
        "negative control scan minimum={:.1e}",
        rep0.scan_minimum
    ));

    report(
        "5 main theorem realization",
        found && certified && grid_ok && control_ok,
        900.0,
        start.elapsed().as_secs_f64(),
        &detail,
    );
}

#[test]
fn criterion_6_optimal_vs_geodesic() {
    let start = Instant::now();
    let mut detail = String::new();
    // the cubic remainder needs a tidal operator whose eigenframe
    // rotates along the flow; any two-dimensional metric (and warped
    // products along symmetry directions) keeps the boundary-derivative
    // matrices simultaneously diagonalizable with the cube, which makes
    // optimal and geodesic interpolation agree to machine precision.
    // A time-varying off-diagonal spatial block breaks that degeneracy.
    let e = |src: &str| tbmcheck::exprparse::parse(src).unwrap();
    let st = tbmcheck::WeightedSpacetime::new(
        3,
        vec![
            vec![e("1"), e("0"), e("0")],
            vec![e("0"), e("-1"), e("-0.3*sin(2*x0)")],
            vec![e("0"), e("-0.3*sin(2*x0)"), e("-1.3")],
        ],
        e("0"),
        3.0,
        vec![(-1.5, 1.5), (-1.5, 1.5), (-1.5, 1.5)],
    )
    .unwrap();
    let x0 = dv(&[0.0, 0.0, 0.0]);
    let v0 = dv(&[1.0, 0.0, 0.0]);
    let field = Arc::new(tbm::build_transport_field(&st, &x0, &v0, &opts()).unwrap());

    let delta = 2e-5;
    let lambdas = [0.4, 0.2, 0.1];
    let mut reports = Vec::new();
    for lambda in lambdas {
        let rep = tbm::compare_optimal_geodesic(
            &st,
            &field,
            lambda,
            delta,
            0.5,
            2048,
            delta / 16.0,
            &opts(),
        )
        .unwrap();
        reports.push(rep);
    }

    // containment with the fitted constant: every sampled point within
    // rho = C (delta + lambda^3), C the max ratio across runs
    let fitted_c = reports
        .iter()
        .map(|r| r.containment_ratio)
        .fold(0.0f64, f64::max);
    let offenders: usize = reports
        .iter()
        .map(|r| tbm::containment_offenders(r, fitted_c))
        .sum();
    let total_points: usize = reports.iter().map(|r| r.points_checked).sum();
    let containment_ok = offenders == 0 && total_points > 0;
    detail.push_str(&format!(
        "C_fit={fitted_c:.3}, offenders={offenders}/{total_points}; "
    ));

    // volume-gap scaling exponent in lambda at fixed delta
    let gaps: Vec<f64> = reports.iter().map(|r| r.gap_envelope.max(1e-300)).collect();
    let slope = {
        let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
        let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        num / den
    };
    let slope_ok = slope >= 2.5;
    detail.push_str(&format!("gap exponent={slope:.2} (gaps={gaps:?})"));

    report(
        "6 optimal vs geodesic",
        containment_ok && slope_ok,
        300.0,
        start.elapsed().as_secs_f64(),
        &detail,
    );
}

#[test]
fn criterion_7_coupling_oracle() {
    let start = Instant::now();
    let st = catalog::minkowski(2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut minus_infinity_cases = 0usize;
    let mut exact_matches = 0usize;
    let instances = 200usize;

    for case in 0..instances {
        let m = rng.gen_range(1..=6);
        let spacelike_case = case % 10 == 9;
        let q: f64 = rng.gen_range(0.2..0.9);
        let (mu, nu): (Vec<DVector<f64>>, Vec<DVector<f64>>) = if spacelike_case {
            // same-time slices: every pair is spacelike
            (
                (0..m).map(|i| dv(&[0.0, 0.5 * i as f64])).collect(),
                (0..m).map(|i| dv(&[0.0, 0.5 * i as f64 + 0.25])).collect(),
            )
        } else {
            (
                (0..m)
                    .map(|_| dv(&[rng.gen_range(-0.4..0.4), rng.gen_range(-1.0..1.0)]))
                    .collect(),
                (0..m)
                    .map(|_| dv(&[rng.gen_range(0.8..2.0), rng.gen_range(-1.0..1.0)]))
                    .collect(),
            )
        };
        let coupling = tbm::lw_distance_discrete(&st, &mu, &nu, q, &opts()).unwrap();

        // independent oracle: enumerate all m! permutations directly
        let weights: Vec<Vec<Option<f64>>> = coupling
            .separations
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| match s {
                        SeparationValue::Timelike(v) => Some(v.powf(q)),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        let mut best: Option<f64> = None;
        let mut perm: Vec<usize> = (0..m).collect();
        loop {
            let mut total = Some(0.0);
            for (i, &j) in perm.iter().enumerate() {
                total = match (total, weights[i][j]) {
                    (Some(t), Some(w)) => Some(t + w),
                    _ => None,
                };
            }
            if let Some(t) = total {
                best = Some(best.map_or(t, |b: f64| b.max(t)));
            }
            // next permutation in lexicographic order
            let mut i = m.saturating_sub(1);
            while i > 0 && perm[i - 1] >= perm[i] {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            let mut j = m - 1;
            while perm[j] <= perm[i - 1] {
                j -= 1;
            }
            perm.swap(i - 1, j);
            perm[i..].reverse();
        }
        let oracle = best.map(|t| (t / m as f64).powf(1.0 / q));
        match (coupling.value, oracle) {
            (Some(a), Some(b)) => {
                assert!(
                    (a - b).abs() <= 1e-14 * (1.0 + b.abs()),
                    "case {case}: solver {a} vs oracle {b}"
                );
                exact_matches += 1;
            }
            (None, None) => {
                minus_infinity_cases += 1;
                exact_matches += 1;
            }
            other => panic!("case {case}: solver/oracle mismatch {other:?}"),
        }
    }
    report(
        "7 coupling oracle",
        exact_matches == instances && minus_infinity_cases > 0,
        10.0,
        start.elapsed().as_secs_f64(),
        &format!("{exact_matches}/{instances} exact, {minus_infinity_cases} minus-infinity cases"),
    );
}
