//! Long-time behaviour of the flow: plateau detection for the multipliers,
//! the masked Dirichlet eigensolver, extraction of the limiting partition,
//! the `L²` defect `D(t)` and the functional `E_λ`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::grid::{dirichlet_form_values, laplacian_into, weighted_dot, Grid, ScalarField};
use crate::interface::{default_threshold, support_labels};
use crate::linalg::conjugate_gradient;
use crate::par;
use crate::sigma::{map_fields, project_sigma};

/// Earliest sample time `T` such that every trailing window `[T' − window, T']`
/// with `T' ≥ T` shows relative variation `(max − min) / max|·|` below
/// `rel_tol` in every component. Only windows that fit inside the series
/// count, so the earliest possible answer is the first window end. `None`
/// if the last window is still moving.
pub fn detect_plateau(series: &[(f64, Vec<f64>)], rel_tol: f64, window: f64) -> Option<f64> {
    let (t_first, m) = match series.first() {
        Some((t, v)) => (*t, v.len()),
        None => return None,
    };
    let tol_t = 1e-12 * window.abs().max(1.0);
    // Monotone deques of sample indices, per component.
    let mut max_q: Vec<VecDeque<usize>> = vec![VecDeque::new(); m];
    let mut min_q: Vec<VecDeque<usize>> = vec![VecDeque::new(); m];
    let mut start = 0;
    let mut candidate: Option<f64> = None;
    let mut any_window = false;
    for (e, (t, v)) in series.iter().enumerate() {
        for j in 0..m {
            while max_q[j].back().is_some_and(|&i| series[i].1[j] <= v[j]) {
                max_q[j].pop_back();
            }
            max_q[j].push_back(e);
            while min_q[j].back().is_some_and(|&i| series[i].1[j] >= v[j]) {
                min_q[j].pop_back();
            }
            min_q[j].push_back(e);
        }
        while series[start].0 < t - window - tol_t {
            start += 1;
        }
        for j in 0..m {
            while max_q[j].front().is_some_and(|&i| i < start) {
                max_q[j].pop_front();
            }
            while min_q[j].front().is_some_and(|&i| i < start) {
                min_q[j].pop_front();
            }
        }
        if *t < t_first + window - tol_t {
            continue;
        }
        any_window = true;
        let flat = (0..m).all(|j| {
            let hi = series[max_q[j][0]].1[j];
            let lo = series[min_q[j][0]].1[j];
            let scale = hi.abs().max(lo.abs());
            hi - lo <= 0.0 || (scale > 0.0 && (hi - lo) / scale < rel_tol)
        });
        if flat {
            candidate.get_or_insert(*t);
        } else {
            candidate = None;
        }
    }
    if any_window {
        candidate
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Nonnegative, unit `L²` norm, zero off the support.
    pub vector: ScalarField,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Relative change of the Rayleigh quotient between iterations.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-11,
            max_iter: 2000,
        }
    }
}

/// First eigenpair of `−Δ` on the interior nodes in `support`, with zero
/// Dirichlet values everywhere else. Inverse power iteration from the
/// masked all-ones vector with warm-started CG inner solves.
pub fn dirichlet_eigen(
    support: &[bool],
    grid: &std::sync::Arc<Grid>,
    opts: EigenOptions,
) -> Result<EigenPair> {
    if support.len() != grid.len() {
        return Err(Error::Usage("support mask length does not match the grid".into()));
    }
    let active: Vec<bool> = (0..grid.len()).map(|n| support[n] && grid.is_interior(n)).collect();
    let count = active.iter().filter(|&&a| a).count();
    if count == 0 {
        return Err(Error::Domain("support contains no interior node".into()));
    }
    let len = grid.len();
    let apply = |x: &[f64], y: &mut [f64]| {
        laplacian_into(grid, x, y);
        for n in 0..len {
            y[n] = if active[n] { -y[n] } else { 0.0 };
        }
    };
    let rayleigh = |x: &[f64]| dirichlet_form_values(grid, x) / weighted_dot(grid, x, x);
    let normalize = |x: &mut [f64]| {
        let s = weighted_dot(grid, x, x).sqrt();
        x.iter_mut().for_each(|v| *v /= s);
    };

    let mut x: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    normalize(&mut x);
    let mut lambda = rayleigh(&x);
    let mut y: Vec<f64> = x.iter().map(|v| v / lambda).collect();
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.max_iter {
        iterations = it;
        conjugate_gradient(apply, &x, &mut y, 1e-13, 20 * count + 100)?;
        let mut next = y.clone();
        normalize(&mut next);
        let new_lambda = rayleigh(&next);
        let change = (new_lambda - lambda).abs() / new_lambda.abs();
        x = next;
        lambda = new_lambda;
        // Warm start: the next solve's answer is close to x / λ.
        y = x.iter().map(|v| v / lambda).collect();
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    normalize(&mut x);
    let value = rayleigh(&x);
    if !converged {
        return Err(Error::EigenNotConverged {
            value,
            iterations,
            last_iterate: x,
        });
    }
    Ok(EigenPair {
        value,
        vector: ScalarField::from_values(grid, x)?,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    /// One node mask per component.
    pub supports: Vec<Vec<bool>>,
    pub eigvals: Vec<f64>,
    pub eigfuns: Vec<ScalarField>,
    pub objective: f64,
}

impl PartitionResult {
    pub fn summary(&self) -> PartitionSummary {
        PartitionSummary {
            eigvals: self.eigvals.clone(),
            objective: self.objective,
            support_nodes: self
                .supports
                .iter()
                .map(|s| s.iter().filter(|&&b| b).count())
                .collect(),
        }
    }
}

/// The serializable part of a [`PartitionResult`]; eigenfunctions are
/// written as field snapshots instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub eigvals: Vec<f64>,
    pub objective: f64,
    pub support_nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub t_plateau: f64,
    pub t_final: f64,
    pub lambda_inf: Vec<f64>,
    #[serde(rename = "D_series")]
    pub d_series: Vec<(f64, f64)>,
    /// `‖Δu_j + λ_j u_j‖ / (λ_j ‖u_j‖)`, two cells inside each support.
    pub stationarity_residual: Vec<f64>,
    /// `|λ_j^∞ − λ_1(Ω_j)| / λ_1(Ω_j)`.
    pub eigenvalue_mismatch: Vec<f64>,
    /// `E_λ` at the limit state.
    #[serde(rename = "E_lambda_value")]
    pub e_lambda_value: f64,
    /// `E_λ` at the partition's own eigenfunctions.
    #[serde(rename = "E_lambda_eigfuns")]
    pub e_lambda_eigfuns: f64,
    pub interface_threshold: f64,
    /// Largest pointwise overlap left in the raw final state.
    pub residual_overlap: f64,
    /// Set when some `c_j ≠ 1`; the limit statements assume unit masses.
    pub nonunit_c: bool,
}

/// `D(t) = Σ_j ∫ (u_j(t) − u_j^∞)²` at every snapshot.
pub fn l2_defect_series(traj: &Trajectory, u_inf: &[ScalarField]) -> Result<Vec<(f64, f64)>> {
    if u_inf.len() != traj.components() {
        return Err(Error::Usage("limit has the wrong number of components".into()));
    }
    if u_inf.iter().any(|f| !f.grid().same_as(&traj.grid)) {
        return Err(Error::Usage("limit lives on a different grid".into()));
    }
    let grid = &traj.grid;
    Ok(traj
        .snapshots
        .iter()
        .map(|s| {
            let d: f64 = s
                .u
                .iter()
                .zip(u_inf)
                .map(|(a, b)| {
                    let diff: Vec<f64> =
                        a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
                    weighted_dot(grid, &diff, &diff)
                })
                .sum();
            (s.t, d)
        })
        .collect())
}

/// `E_λ(v) = Σ_j (∫|∇v_j|² − λ_1(Ω_j) ∫v_j²)`.
pub fn evaluate_e_lambda(v: &[ScalarField], partition: &PartitionResult) -> Result<f64> {
    if v.len() != partition.eigvals.len() {
        return Err(Error::Usage("component count does not match the partition".into()));
    }
    let mut e = 0.0;
    for (f, &lambda) in v.iter().zip(&partition.eigvals) {
        let g = f.grid();
        e += dirichlet_form_values(g, f.values()) - lambda * weighted_dot(g, f.values(), f.values());
    }
    Ok(e)
}

/// Nodes of `mask` whose whole Chebyshev neighborhood of radius `cells`
/// lies in `mask`.
pub fn erode(grid: &Grid, mask: &[bool], cells: usize) -> Vec<bool> {
    let dim = grid.dim();
    let counts = grid.counts();
    let r = cells as isize;
    (0..grid.len())
        .map(|n| {
            if !mask[n] {
                return false;
            }
            let idx = grid.multi_index(n);
            let mut offsets = vec![-r; dim];
            loop {
                let mut inside = true;
                let mut nb = vec![0usize; dim];
                for a in 0..dim {
                    let i = idx[a] as isize + offsets[a];
                    if i < 0 || i >= counts[a] as isize {
                        inside = false;
                        break;
                    }
                    nb[a] = i as usize;
                }
                if !inside || !mask[grid.index_of(&nb)] {
                    return false;
                }
                let mut a = 0;
                loop {
                    if a == dim {
                        return true;
                    }
                    offsets[a] += 1;
                    if offsets[a] <= r {
                        break;
                    }
                    offsets[a] = -r;
                    a += 1;
                }
            }
        })
        .collect()
}

/// Cells the stationarity residual stays away from each support boundary.
pub const RESIDUAL_MARGIN_CELLS: usize = 2;

/// Builds the limiting partition from the final snapshot and compares it
/// with the flow's multipliers. `threshold` defaults to
/// [`default_threshold`] of the projected limit.
pub fn extract_limit(
    traj: &Trajectory,
    t_plateau: f64,
    threshold: Option<f64>,
    opts: EigenOptions,
) -> Result<(PartitionResult, ConvergenceReport)> {
    let last = traj.final_state();
    let grid = &traj.grid;
    let u_inf = map_fields(&last.u, project_sigma);
    let threshold = threshold.unwrap_or_else(|| default_threshold(&u_inf));
    let labels = support_labels(&u_inf, last.t, threshold)?;
    let m = traj.components();
    let supports: Vec<Vec<bool>> = (0..m).map(|j| labels.support(j)).collect();

    let pairs: Vec<EigenPair> = par::map(&supports, |s| dirichlet_eigen(s, grid, opts))
        .into_iter()
        .collect::<Result<_>>()?;
    let eigvals: Vec<f64> = pairs.iter().map(|p| p.value).collect();
    let partition = PartitionResult {
        supports: supports.clone(),
        objective: eigvals.iter().sum(),
        eigvals,
        eigfuns: pairs.into_iter().map(|p| p.vector).collect(),
    };

    let lambda_inf = last.lambda.clone();
    let mut lap = vec![0.0; grid.len()];
    let mut stationarity_residual = Vec::with_capacity(m);
    for j in 0..m {
        let inner = erode(grid, &supports[j], RESIDUAL_MARGIN_CELLS);
        let u = u_inf[j].values();
        laplacian_into(grid, u, &mut lap);
        let r: Vec<f64> = (0..grid.len())
            .map(|n| if inner[n] { lap[n] + lambda_inf[j] * u[n] } else { 0.0 })
            .collect();
        let scale = lambda_inf[j].abs() * weighted_dot(grid, u, u).sqrt();
        let res = weighted_dot(grid, &r, &r).sqrt();
        stationarity_residual.push(if scale > 0.0 { res / scale } else { f64::INFINITY });
    }
    let eigenvalue_mismatch = lambda_inf
        .iter()
        .zip(&partition.eigvals)
        .map(|(a, b)| (a - b).abs() / b)
        .collect();

    let report = ConvergenceReport {
        t_plateau,
        t_final: last.t,
        lambda_inf,
        d_series: l2_defect_series(traj, &last.u)?,
        stationarity_residual,
        eigenvalue_mismatch,
        e_lambda_value: evaluate_e_lambda(&u_inf, &partition)?,
        e_lambda_eigfuns: evaluate_e_lambda(&partition.eigfuns, &partition)?,
        interface_threshold: threshold,
        residual_overlap: last.max_overlap,
        nonunit_c: traj.c.iter().any(|&c| (c - 1.0).abs() > 1e-12),
    };
    Ok((partition, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Geometry};
    use std::f64::consts::PI;

    fn series(f: impl Fn(f64) -> f64, t_end: f64, dt: f64) -> Vec<(f64, Vec<f64>)> {
        let n = (t_end / dt).round() as usize;
        (0..=n).map(|k| (k as f64 * dt, vec![f(k as f64 * dt)])).collect()
    }

    #[test]
    fn plateau_of_constant_series_is_first_window_end() {
        let s = series(|_| 3.0, 5.0, 0.1);
        assert!((detect_plateau(&s, 1e-4, 1.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn plateau_of_exponential_relaxation_matches_bisection() {
        // Window [T-1, T]: variation e^{-T}(e - 1), maximum π² + e^{1-T}.
        let g = |t: f64| (-t).exp() * (1f64.exp() - 1.0) / (PI * PI + (1.0 - t).exp()) - 1e-4;
        let (mut lo, mut hi) = (1.0, 30.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let dt = 1e-3;
        let s = series(|t| PI * PI + (-t).exp(), 20.0, dt);
        let t = detect_plateau(&s, 1e-4, 1.0).unwrap();
        assert!((t - hi).abs() <= dt + 1e-9, "{t} vs {hi}");
        assert!((hi - 7.4622).abs() < 1e-3);
    }

    #[test]
    fn oscillating_series_never_plateaus() {
        let s = series(|t| 10.0 + (5.0 * t).sin(), 20.0, 0.01);
        assert_eq!(detect_plateau(&s, 1e-4, 1.0), None);
        assert_eq!(detect_plateau(&[], 1e-4, 1.0), None);
    }

    #[test]
    fn interval_eigenvalues() {
        let g = build_grid(1, &[1.0], &[201], Geometry::Box).unwrap();
        let full = vec![true; g.len()];
        let e = dirichlet_eigen(&full, &g, EigenOptions::default()).unwrap();
        let h: f64 = 0.005;
        let discrete = 2.0 / (h * h) * (1.0 - (PI * h).cos());
        assert!((e.value - discrete).abs() < 1e-8 * discrete);
        assert!((e.value - PI * PI).abs() < 1e-3 * PI * PI);
        assert!(e.vector.values().iter().all(|&v| v >= 0.0));
        assert!((weighted_dot(&g, e.vector.values(), e.vector.values()) - 1.0).abs() < 1e-12);

        let half: Vec<bool> = (0..g.len()).map(|n| g.coords(n)[0] < 0.5 - 1e-9).collect();
        let e = dirichlet_eigen(&half, &g, EigenOptions::default()).unwrap();
        assert!((e.value - 4.0 * PI * PI).abs() < 2e-3 * 4.0 * PI * PI);
        assert!(e.vector.values()[150] == 0.0);
    }

    #[test]
    fn empty_support_is_a_domain_error() {
        let g = build_grid(1, &[1.0], &[21], Geometry::Box).unwrap();
        let mut mask = vec![false; g.len()];
        mask[0] = true;
        assert!(matches!(
            dirichlet_eigen(&mask, &g, EigenOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_last_iterate() {
        let g = build_grid(1, &[1.0], &[101], Geometry::Box).unwrap();
        let full = vec![true; g.len()];
        let opts = EigenOptions { tol: 1e-15, max_iter: 1 };
        match dirichlet_eigen(&full, &g, opts) {
            Err(Error::EigenNotConverged { last_iterate, iterations, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(last_iterate.len(), g.len());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn erosion_by_two_cells() {
        let g = build_grid(1, &[1.0], &[11], Geometry::Box).unwrap();
        let mask: Vec<bool> = (0..11).map(|i| (2..=8).contains(&i)).collect();
        let e = erode(&g, &mask, 2);
        let kept: Vec<usize> = (0..11).filter(|&i| e[i]).collect();
        assert_eq!(kept, vec![4, 5, 6]);
    }
}
