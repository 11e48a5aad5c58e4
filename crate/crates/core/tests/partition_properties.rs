use std::f64::consts::PI;

use proptest::prelude::*;

use segflow::asymptotics::{detect_plateau, dirichlet_eigen, extract_limit, EigenOptions};
use segflow::flow::{run_flow, FlowParams};
use segflow::grid::{build_grid, Geometry, ScalarField};
use segflow::oracle::{optimal_partition_1d, optimal_partition_2d_search, LineFamily};
use segflow::sigma::normalize_components;

fn opts() -> EigenOptions {
    EigenOptions::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigenvalue_is_monotone_under_nested_intervals(
        a in 0.0f64..0.3,
        b in 0.7f64..1.0,
        shrink_lo in 0.0f64..0.2,
        shrink_hi in 0.0f64..0.2,
    ) {
        let g = build_grid(1, &[1.0], &[121], Geometry::Box).unwrap();
        let x = |n: usize| g.coords(n)[0];
        let outer: Vec<bool> = (0..g.len()).map(|n| (a..=b).contains(&x(n))).collect();
        let inner: Vec<bool> = (0..g.len()).map(|n| (a + shrink_lo..=b - shrink_hi).contains(&x(n))).collect();
        let lo = dirichlet_eigen(&outer, &g, opts()).unwrap().value;
        let hi = dirichlet_eigen(&inner, &g, opts()).unwrap().value;
        prop_assert!(hi >= lo * (1.0 - 1e-10), "inner {hi} < outer {lo}");
    }

    #[test]
    fn eigenvalue_is_monotone_under_nested_masks_2d(
        cx in 0.3f64..0.7,
        cy in 0.3f64..0.7,
        r in 0.2f64..0.4,
        holes in prop::collection::vec((0usize..21, 0usize..21), 0..12),
    ) {
        let g = build_grid(2, &[1.0, 1.0], &[21, 21], Geometry::Box).unwrap();
        let outer: Vec<bool> = (0..g.len())
            .map(|n| {
                let p = g.coords(n);
                (p[0] - cx).hypot(p[1] - cy) <= r
            })
            .collect();
        let mut inner = outer.clone();
        for (i, j) in holes {
            inner[g.index_of(&[i, j])] = false;
        }
        prop_assume!(inner.iter().enumerate().any(|(n, &b)| b && g.is_interior(n)));
        let lo = dirichlet_eigen(&outer, &g, opts()).unwrap().value;
        let hi = dirichlet_eigen(&inner, &g, opts()).unwrap().value;
        prop_assert!(hi >= lo * (1.0 - 1e-10), "inner {hi} < outer {lo}");
    }
}

#[test]
fn refining_the_cut_stride_never_raises_the_objective() {
    let g = build_grid(2, &[1.0, 1.0], &[33, 33], Geometry::Box).unwrap();
    let objective = |stride: usize| {
        optimal_partition_2d_search(&g, 2, LineFamily::AxisAlignedLines, stride, opts())
            .unwrap()
            .objective
    };
    let (coarse, mid, fine) = (objective(8), objective(4), objective(2));
    assert!(mid <= coarse * (1.0 + 1e-9), "{mid} > {coarse}");
    assert!(fine <= mid * (1.0 + 1e-9), "{fine} > {mid}");
    assert!((fine - 10.0 * PI * PI).abs() < 0.01 * 10.0 * PI * PI);
}

#[test]
fn asymmetric_split_is_worse_than_the_oracle() {
    let g = build_grid(1, &[1.0], &[201], Geometry::Box).unwrap();
    let x = |n: usize| g.coords(n)[0];
    let left: Vec<bool> = (0..g.len()).map(|n| x(n) < 0.25 - 1e-12).collect();
    let right: Vec<bool> = (0..g.len()).map(|n| x(n) > 0.25 + 1e-12).collect();
    let l1 = dirichlet_eigen(&left, &g, opts()).unwrap().value;
    let l2 = dirichlet_eigen(&right, &g, opts()).unwrap().value;
    assert!((l1 - 16.0 * PI * PI).abs() < 2e-3 * 16.0 * PI * PI);
    assert!((l2 - 16.0 / 9.0 * PI * PI).abs() < 2e-3 * 16.0 / 9.0 * PI * PI);
    let oracle = optimal_partition_1d(1.0, 2).unwrap().objective;
    assert!(l1 + l2 > oracle);
}

#[test]
fn single_component_limit_is_the_ground_state() {
    let g = build_grid(1, &[1.0], &[51], Geometry::Box).unwrap();
    let mut u = vec![ScalarField::from_fn(&g, |x| x[0] * (1.0 - x[0]) * (1.0 + x[0]))];
    normalize_components(&mut u, &[1.0]).unwrap();
    let traj = run_flow(&u, &FlowParams::new(vec![1.0], 0.1, 1.5), 500).unwrap();
    let t_plateau = detect_plateau(&traj.lambda_series(), 1e-4, 0.2).unwrap();
    let (part, report) = extract_limit(&traj, t_plateau, None, opts()).unwrap();
    let lambda = report.lambda_inf[0];
    assert!((lambda - PI * PI).abs() < 0.01 * PI * PI);
    assert!(report.stationarity_residual[0] <= 1e-2);
    assert!(report.eigenvalue_mismatch[0] <= 0.02);
    assert!((part.eigvals[0] - lambda).abs() < 1e-6 * lambda);
    assert_eq!(report.d_series.last().unwrap().1, 0.0);
}
