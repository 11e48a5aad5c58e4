use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

use segflow::flow::{epsilon_continuation, run_flow, EpsStage, FlowParams, TimeStep, Trajectory};
use segflow::grid::{build_grid, Geometry, ScalarField};
use segflow::sigma::normalize_components;

fn tent(s: f64, lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (1.0 - (s - mid).abs() / half).max(0.0)
}

fn two_phase(n: usize, split: f64) -> Vec<ScalarField> {
    let g = build_grid(1, &[1.0], &[n], Geometry::Box).unwrap();
    let mut u = vec![
        ScalarField::from_fn(&g, |x| tent(x[0], 0.0, split)),
        ScalarField::from_fn(&g, |x| tent(x[0], split, 1.0)),
    ];
    normalize_components(&mut u, &[1.0, 1.0]).unwrap();
    u
}

/// With one component the implicit step is `u ← (I + dt A)⁻¹ u` up to
/// normalization, so the multiplier is a Rayleigh quotient over the modes of
/// the discrete Dirichlet matrix `A`.
#[test]
fn single_component_multiplier_matches_dense_modal_oracle() {
    let n = 51;
    let g = build_grid(1, &[1.0], &[n], Geometry::Box).unwrap();
    let mut u = vec![ScalarField::from_fn(&g, |x| {
        (PI * x[0]).sin() + 0.2 * (3.0 * PI * x[0]).sin() + 0.1 * (5.0 * PI * x[0]).sin().abs()
    })];
    normalize_components(&mut u, &[1.0]).unwrap();
    let mut params = FlowParams::new(vec![1.0], 0.1, 0.05);
    params.dt = TimeStep::Fixed(1e-4);
    let traj = run_flow(&u, &params, 1000).unwrap();
    let dt = traj.stages[0].dt;

    let k = n - 2;
    let h = 1.0 / (n - 1) as f64;
    let a = DMatrix::from_fn(k, k, |i, j| match i.abs_diff(j) {
        0 => 2.0 / (h * h),
        1 => -1.0 / (h * h),
        _ => 0.0,
    });
    let eig = SymmetricEigen::new(a);
    let g0 = DVector::from_iterator(k, u[0].values()[1..n - 1].iter().copied());
    let b = eig.eigenvectors.transpose() * g0;

    let mut worst: f64 = 0.0;
    for r in &traj.series {
        let num: f64 = (0..k)
            .map(|i| {
                let mu = eig.eigenvalues[i];
                mu * (b[i] * (1.0 + dt * mu).powi(-(r.step as i32))).powi(2)
            })
            .sum();
        let den: f64 = (0..k)
            .map(|i| (b[i] * (1.0 + dt * eig.eigenvalues[i]).powi(-(r.step as i32))).powi(2))
            .sum();
        worst = worst.max((r.lambda[0] - num / den).abs() / (num / den));
    }
    assert!(worst < 1e-10, "worst relative deviation {worst:e}");
}

#[test]
fn mirrored_initial_data_stays_mirrored() {
    let u = two_phase(61, 0.5);
    let params = FlowParams::new(vec![1.0, 1.0], 0.05, 0.05);
    let traj = run_flow(&u, &params, 1000).unwrap();
    let last = traj.final_state();
    let (a, b) = (last.u[0].values(), last.u[1].values());
    let n = a.len();
    let sup = last.u[0].sup_abs();
    let worst = (0..n).map(|i| (a[i] - b[n - 1 - i]).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-10 * sup, "asymmetry {worst:e}");
    assert!((last.lambda[0] - last.lambda[1]).abs() <= 1e-10 * last.lambda[0]);
}

fn check_invariants(traj: &Trajectory) -> Result<(), TestCaseError> {
    for r in &traj.series {
        prop_assert!(r.constraint_error <= 1e-10, "constraint error {} at t = {}", r.constraint_error, r.t);
    }
    for w in traj.series.windows(2) {
        if w[0].stage == w[1].stage {
            let inc = (w[1].total_energy - w[0].total_energy) / w[0].total_energy;
            prop_assert!(inc <= 1e-8, "energy increase {inc:e} at t = {}", w[1].t);
        }
    }
    for s in &traj.snapshots {
        for f in &s.u {
            prop_assert!(f.values().iter().all(|&v| v >= 0.0));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flow_keeps_constraint_energy_and_sign(
        split in 0.3f64..0.7,
        eps in 0.05f64..0.3,
        n in 31usize..61,
    ) {
        let u = two_phase(n, split);
        let params = FlowParams::new(vec![1.0, 1.0], eps, 0.02);
        check_invariants(&run_flow(&u, &params, 50).unwrap())?;
    }

    #[test]
    fn continuation_keeps_constraint_energy_and_sign(
        split in 0.35f64..0.65,
        eps0 in 0.1f64..0.3,
        ratio in 0.2f64..0.6,
    ) {
        let u = two_phase(41, split);
        let params = FlowParams::new(vec![1.0, 1.0], eps0, 0.03);
        let stages = EpsStage::uniform(&[eps0, eps0 * ratio, eps0 * ratio * ratio], 0.03);
        let traj = epsilon_continuation(&u, &params, &stages, 50).unwrap();
        prop_assert_eq!(traj.stages.len(), 3);
        check_invariants(&traj)?;
    }
}
