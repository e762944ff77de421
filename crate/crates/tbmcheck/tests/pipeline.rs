//! Cross-module pipeline checks: the integrated volume inequality, the
//! infinitesimal-distortion limit, containment chains, and verdict
//! invariances.

use nalgebra::DVector;
use std::sync::Arc;
use tbmcheck::catalog;
use tbmcheck::exprparse::parse;
use tbmcheck::flow::FlowOptions;
use tbmcheck::jacobi;
use tbmcheck::regions::{self, RegionKind, RegionSpec};
use tbmcheck::tbm::{self, TbmParams, Verdict};
use tbmcheck::WeightedSpacetime;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

fn opts() -> FlowOptions {
    FlowOptions::default()
}

#[test]
fn integrated_inequality_flat_equality() {
    // unweighted flat space, K = 0: the transport is a translation and
    // the inequality collapses to equality up to voxel error
    let st = catalog::minkowski(2);
    let field = Arc::new(
        tbm::build_transport_field(&st, &dv(&[0.0, 0.0]), &dv(&[1.0, 0.0]), &opts()).unwrap(),
    );
    let delta = 0.05;
    let rep = tbm::check_integrated_inequality(
        &st,
        &field,
        0.3,
        delta,
        0.0,
        0.5,
        256,
        delta / 64.0,
        &opts(),
    )
    .unwrap();
    assert!(
        rep.residual.abs() <= 1e-3 * rep.root_volume_a,
        "flat residual {} vs scale {}",
        rep.residual,
        rep.root_volume_a
    );
}

#[test]
fn integrated_inequality_strictly_negative_on_counterexample() {
    // weighted flat space at the scale coupling delta = lambda^3
    let st = catalog::weighted_minkowski(2, 1.0, 3.0);
    let field = Arc::new(
        tbm::build_transport_field(&st, &dv(&[0.0, 0.0]), &dv(&[1.0, 0.0]), &opts()).unwrap(),
    );
    for lambda in [0.2, 0.1] {
        let delta = lambda * lambda * lambda;
        let rep = tbm::check_integrated_inequality(
            &st,
            &field,
            lambda,
            delta,
            0.0,
            0.5,
            256,
            delta / 64.0,
            &opts(),
        )
        .unwrap();
        assert!(
            rep.residual < 0.0,
            "expected negative residual at lambda={lambda}, got {}",
            rep.residual
        );
        // the strict violation must exceed the voxel refinement gaps
        let gap: f64 = rep.volumes.iter().map(|v| v.refinement_gap()).sum();
        assert!(
            rep.residual.abs() > gap,
            "residual {} vs gaps {gap}",
            rep.residual
        );
    }
}

#[test]
fn volume_ratio_converges_to_infinitesimal_distortion() {
    // m^{1/N}(T_{lambda t} A_delta) / m^{1/N}(A_delta) approaches the
    // pointwise distortion as delta shrinks, at first order or better
    let st = catalog::weighted_minkowski(2, 1.0, 3.0);
    let x0 = dv(&[0.0, 0.0]);
    let v0 = dv(&[1.0, 0.0]);
    let field = Arc::new(tbm::build_transport_field(&st, &x0, &v0, &opts()).unwrap());
    let lambda = 0.2;
    let t = 0.7;
    let curve = jacobi::volume_distortion(&st, &x0, field.as_ref(), lambda, 10, &opts()).unwrap();
    let idx = curve
        .t
        .iter()
        .position(|tk| (tk - t).abs() < 1e-9)
        .expect("grid contains t");
    let d_limit = curve.d[idx];

    let n_param = st.n_param();
    let mut gaps = Vec::new();
    for delta in [0.04, 0.02, 0.01] {
        let region_a = regions::eigen_cube(&st, &x0, &v0, delta, &opts()).unwrap();
        let map = Arc::new(tbm::TransportMap {
            field: field.clone(),
            lambda: lambda * t,
        });
        let region_mid = regions::map_region(&region_a, map);
        let va = regions::measure(&st, &region_a, delta / 64.0, &opts()).unwrap();
        let vm = regions::measure(&st, &region_mid, delta / 64.0, &opts()).unwrap();
        let ratio = vm.value.powf(1.0 / n_param) / va.value.powf(1.0 / n_param);
        gaps.push((ratio - d_limit).abs());
    }
    assert!(
        gaps[0] > gaps[1] && gaps[1] > gaps[2],
        "gaps not decreasing: {gaps:?}"
    );
    // halving delta shrinks the gap at order >= 1
    assert!(gaps[0] / gaps[1] >= 1.7, "order too low: {gaps:?}");
    assert!(gaps[1] / gaps[2] >= 1.7, "order too low: {gaps:?}");
}

#[test]
fn containment_chain_on_shared_grid() {
    // optimal image voxelization inside the interpolant, interpolant
    // inside a fattened image
    let st = catalog::weighted_minkowski(2, 1.0, 3.0);
    let x0 = dv(&[0.0, 0.0]);
    let v0 = dv(&[1.0, 0.0]);
    let field = Arc::new(tbm::build_transport_field(&st, &x0, &v0, &opts()).unwrap());
    let lambda = 0.2;
    let delta = 0.02;
    let t = 0.5;
    let region_a = regions::eigen_cube(&st, &x0, &v0, delta, &opts()).unwrap();
    let map_full = Arc::new(tbm::TransportMap {
        field: field.clone(),
        lambda,
    });
    let map_mid = Arc::new(tbm::TransportMap {
        field: field.clone(),
        lambda: lambda * t,
    });
    let region_b = regions::map_region(&region_a, map_full);
    let region_mid = regions::map_region(&region_a, map_mid.clone());

    // diagonal pairs tie the interpolant to the optimal image
    let diag: Vec<_> = (0..4096)
        .map(|i| {
            let u = tbmcheck::sampling::halton(3_000_000 + i as u64, 2);
            let x = region_a.point_from_unit(&st, &u, &opts()).unwrap();
            use tbmcheck::regions::PointMap;
            let y = tbm::TransportMap {
                field: field.clone(),
                lambda,
            }
            .apply(&st, &x, &opts())
            .unwrap();
            (x, y)
        })
        .collect();
    let params = regions::InterpolantParams {
        t,
        pair_samples: 1 << 14,
        voxel_side: delta / 32.0,
        extra_pairs: diag,
    };
    let interp = regions::interpolant_region(&st, &region_a, &region_b, &params, &opts()).unwrap();
    let levels = match &interp.kind {
        RegionKind::Voxels(v) => v,
        _ => unreachable!(),
    };
    let grid = levels.fine.grid.clone();

    // the analytic image voxelization on the interpolant grid is a subset
    let image_vox = regions::voxelize_analytic(&st, &region_mid, grid.clone(), &opts()).unwrap();
    assert!(
        image_vox.is_subset_of(&levels.fine).unwrap(),
        "optimal image escapes the interpolant rasterization"
    );

    // the interpolant sits inside a modest dilation of the image
    let pitch = grid.mean_pitch();
    let dilated = image_vox.dilate(3.0 * pitch);
    for lin in levels.fine.iter_occupied() {
        let c = levels.fine.grid.center_of_linear(lin);
        assert!(
            dilated.contains_point(&c),
            "interpolant voxel at {:?} outside the fattened image",
            c.as_slice()
        );
    }
}

#[test]
fn verdicts_invariant_under_measure_scaling() {
    // adding a constant to the weight scales the measure by a constant
    // and must not change any verdict
    let base = catalog::weighted_minkowski(2, 1.0, 3.0);
    let shifted = WeightedSpacetime::new(
        2,
        vec![
            vec![parse("1").unwrap(), parse("0").unwrap()],
            vec![parse("0").unwrap(), parse("-1").unwrap()],
        ],
        parse("x0 + 0.7").unwrap(),
        3.0,
        vec![(-10.0, 10.0); 2],
    )
    .unwrap();
    let x0 = dv(&[0.0, 0.0]);
    let v0 = dv(&[1.0, 0.0]);
    let lambda = 0.1;
    let delta = 1e-3;
    let params = TbmParams {
        pair_samples: 1 << 14,
        theta_samples: 512,
        voxel_side: delta / 64.0,
        tolerance: 1e-9,
        q: 0.5,
    };
    let mut verdicts = Vec::new();
    let mut lhs_values = Vec::new();
    for st in [&base, &shifted] {
        let field = Arc::new(tbm::build_transport_field(st, &x0, &v0, &opts()).unwrap());
        let region_a = regions::eigen_cube(st, &x0, &v0, delta, &opts()).unwrap();
        let map = Arc::new(tbm::TransportMap {
            field: field.clone(),
            lambda,
        });
        let region_b = regions::map_region(&region_a, map.clone());
        let res = tbm::check_tbm(
            st,
            &region_a,
            &region_b,
            0.0,
            &[0.5],
            &params,
            Some(map as Arc<dyn regions::PointMap>),
            &opts(),
        )
        .unwrap();
        verdicts.push(res[0].verdict);
        lhs_values.push(res[0].lhs);
    }
    assert_eq!(verdicts[0], Verdict::Violated);
    assert_eq!(verdicts[0], verdicts[1]);
    // the left sides scale by exp(-0.7/N)
    let scale = (-0.7f64 / 3.0).exp();
    assert!(
        (lhs_values[1] / lhs_values[0] - scale).abs() < 1e-6,
        "scaling {} vs {scale}",
        lhs_values[1] / lhs_values[0]
    );
}

#[test]
fn negative_bound_branch_uses_supremum_and_holds() {
    // flat translation case with K = -1: tau < t strictly, so the
    // inequality holds with a certifiable margin; the extremal statistic
    // switches to the supremum
    let st = catalog::minkowski(2);
    let delta = 0.1;
    let a = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
    let translate = Arc::new(regions::Translation(dv(&[1.0, 0.0])));
    let b = regions::map_region(&a, translate.clone());
    let params = TbmParams {
        pair_samples: 1 << 14,
        theta_samples: 1024,
        voxel_side: delta / 32.0,
        tolerance: 1e-9,
        q: 0.5,
    };
    let res = tbm::check_tbm(
        &st,
        &a,
        &b,
        -1.0,
        &[0.5],
        &params,
        Some(translate as Arc<dyn regions::PointMap>),
        &opts(),
    )
    .unwrap();
    let r = &res[0];
    // supremum of the separation over the corner pairs: dt = 1 + delta
    assert!(
        (r.theta.value - (1.0 + delta)).abs() < 1e-6,
        "theta {}",
        r.theta.value
    );
    assert_eq!(r.verdict, Verdict::Holds, "lhs={} rhs={}", r.lhs, r.rhs);
}

#[test]
fn non_timelike_pairs_make_verdict_inconclusive() {
    // spacelike-separated cubes cannot provide dualizability evidence
    let st = catalog::minkowski(2);
    let delta = 0.1;
    let a = RegionSpec::coordinate_box(&dv(&[0.0, 0.0]), delta);
    let b = RegionSpec::coordinate_box(&dv(&[0.0, 1.0]), delta);
    let params = TbmParams {
        pair_samples: 1 << 10,
        theta_samples: 64,
        voxel_side: delta / 16.0,
        tolerance: 1e-9,
        q: 0.5,
    };
    let res = tbm::check_tbm(&st, &a, &b, 0.0, &[0.5], &params, None, &opts());
    match res {
        Ok(results) => {
            assert_eq!(results[0].verdict, Verdict::Inconclusive);
            assert!(!results[0].dualizability.all_timelike);
        }
        Err(e) => panic!("expected inconclusive verdict, got error {e}"),
    }
}

#[test]
fn theta_interior_sampling_refines_corners() {
    // adding interior pairs can only sharpen the extremal statistic
    let st = catalog::minkowski(2);
    let a = RegionSpec::coordinate_box(&dv(&[0.05, 0.05]), 0.1);
    let b = RegionSpec::coordinate_box(&dv(&[1.05, 0.05]), 0.1);
    let theta = tbmcheck::geodesics::theta_statistic(&st, &a, &b, 0.0, 2048, &opts()).unwrap();
    // infimum over a larger sample set cannot exceed the corner value
    assert!(theta.value <= theta.corner_value + 1e-12);
    assert!(theta.min_ell_plus > 0.0);
}

#[test]
fn transport_matches_interpolation_of_its_own_graph() {
    // F_t(x, T_lambda(x)) equals the transport at lambda*t: both are
    // points of the same geodesic
    let st = catalog::weighted_minkowski(2, 1.0, 3.0);
    let x0 = dv(&[0.0, 0.0]);
    let v0 = dv(&[1.0, 0.0]);
    let field = Arc::new(tbm::build_transport_field(&st, &x0, &v0, &opts()).unwrap());
    let lambda = 0.2;
    use tbmcheck::jacobi::VectorField;
    let mut worst = 0.0f64;
    for idx in 0..20u64 {
        let u = tbmcheck::sampling::halton(idx, 2);
        let x = dv(&[0.05 * (u[0] - 0.5), 0.05 * (u[1] - 0.5)]);
        let v = field.value(&st, &x, &opts()).unwrap();
        let y = tbmcheck::geodesics::exp_map(&st, &x, &v, lambda, &opts()).unwrap();
        for t in [0.25, 0.5, 0.75] {
            let via_f = tbmcheck::geodesics::interpolate_f(&st, &x, &y, t, &opts()).unwrap();
            let via_t = tbmcheck::geodesics::exp_map(&st, &x, &v, lambda * t, &opts()).unwrap();
            worst = worst.max((&via_f - &via_t).amax());
        }
    }
    assert!(worst <= 1e-7, "transport/interpolation deviation {worst}");
}

#[test]
fn theta_of_pipeline_regions_tracks_lambda() {
    // for the cube and its transported image the extremal statistic is
    // lambda up to a first-order delta correction
    let st = catalog::weighted_minkowski(2, 1.0, 3.0);
    let x0 = dv(&[0.0, 0.0]);
    let v0 = dv(&[1.0, 0.0]);
    let field = Arc::new(tbm::build_transport_field(&st, &x0, &v0, &opts()).unwrap());
    for (lambda, delta) in [(0.2, 0.008), (0.1, 0.001)] {
        let region_a = regions::eigen_cube(&st, &x0, &v0, delta, &opts()).unwrap();
        let map = Arc::new(tbm::TransportMap {
            field: field.clone(),
            lambda,
        });
        let region_b = regions::map_region(&region_a, map);
        let theta =
            tbmcheck::geodesics::theta_statistic(&st, &region_a, &region_b, 0.0, 512, &opts())
                .unwrap();
        assert!(
            (theta.value - lambda).abs() <= 6.0 * delta,
            "theta {} vs lambda {lambda} (delta {delta})",
            theta.value
        );
    }
}

#[test]
fn verdict_monotone_in_tolerance() {
    // loosening the tolerance can only soften a violation to
    // inconclusive, never flip it to holds
    let st = catalog::weighted_minkowski(2, 1.0, 3.0);
    let x0 = dv(&[0.0, 0.0]);
    let v0 = dv(&[1.0, 0.0]);
    let field = Arc::new(tbm::build_transport_field(&st, &x0, &v0, &opts()).unwrap());
    let lambda = 0.1;
    let delta = 1e-3;
    let region_a = regions::eigen_cube(&st, &x0, &v0, delta, &opts()).unwrap();
    let map = Arc::new(tbm::TransportMap {
        field: field.clone(),
        lambda,
    });
    let region_b = regions::map_region(&region_a, map.clone());
    let mut verdicts = Vec::new();
    for tolerance in [1e-9, 1e-5, 1e-2] {
        let params = TbmParams {
            pair_samples: 1 << 14,
            theta_samples: 256,
            voxel_side: delta / 64.0,
            tolerance,
            q: 0.5,
        };
        let res = tbm::check_tbm(
            &st,
            &region_a,
            &region_b,
            0.0,
            &[0.5],
            &params,
            Some(map.clone() as Arc<dyn regions::PointMap>),
            &opts(),
        )
        .unwrap();
        verdicts.push(res[0].verdict);
    }
    assert_eq!(verdicts[0], Verdict::Violated);
    for v in &verdicts {
        assert_ne!(
            *v,
            Verdict::Holds,
            "tolerance loosening flipped the verdict"
        );
    }
}
