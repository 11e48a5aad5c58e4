//! Free interface extraction and parabolic geometry helpers.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::grid::{Grid, ScalarField};
use crate::io::format::fmt_f64;

/// Per-node support labels at one time. Label `j + 1` marks component `j`;
/// label 0 marks the interface (zero set, label boundaries, and every node
/// off the interior).
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceSlice {
    pub t: f64,
    pub threshold: f64,
    pub labels: Vec<usize>,
    /// Node indices with label 0, ascending.
    pub nodes: Vec<usize>,
}

impl InterfaceSlice {
    pub fn is_interface(&self, node: usize) -> bool {
        self.labels[node] == 0
    }

    /// Mask of nodes carrying component `j`.
    pub fn support(&self, j: usize) -> Vec<bool> {
        self.labels.iter().map(|&l| l == j + 1).collect()
    }

    /// Interface nodes that are interior to Ω.
    pub fn interior_band<'a>(&'a self, grid: &'a Grid) -> impl Iterator<Item = usize> + 'a {
        self.nodes.iter().copied().filter(|&n| grid.is_interior(n))
    }

    /// Quadrature volume of the interior part of the band.
    pub fn band_volume(&self, grid: &Grid) -> f64 {
        self.interior_band(grid).map(|n| grid.quad_weight()[n]).sum()
    }
}

/// `10 · machine epsilon · sup|u|`, or the smallest positive normal number
/// for a zero state.
pub fn default_threshold(u: &[ScalarField]) -> f64 {
    let sup = u.iter().map(ScalarField::sup_abs).fold(0.0, f64::max);
    (10.0 * f64::EPSILON * sup).max(f64::MIN_POSITIVE)
}

/// Labels each node by its dominant component. Nodes where every component
/// is below `threshold` are interface; where two differently labeled nodes
/// are axis neighbors, the one with the smaller dominant value becomes
/// interface (both on an exact tie).
pub fn support_labels(u: &[ScalarField], t: f64, threshold: f64) -> Result<InterfaceSlice> {
    let Some(first) = u.first() else {
        return Err(Error::Usage("no components".into()));
    };
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!("threshold must be positive, got {threshold}")));
    }
    let grid = first.grid();
    if u.iter().any(|f| !f.grid().same_as(grid)) {
        return Err(Error::Usage("fields live on different grids".into()));
    }
    let len = grid.len();
    let mut raw = vec![0usize; len];
    let mut top = vec![0.0; len];
    for n in 0..len {
        if !grid.is_interior(n) {
            continue;
        }
        let mut best = 0;
        for j in 1..u.len() {
            if u[j].values()[n] > u[best].values()[n] {
                best = j;
            }
        }
        let v = u[best].values()[n];
        if v >= threshold {
            raw[n] = best + 1;
            top[n] = v;
        }
    }
    let mut labels = raw.clone();
    for n in 0..len {
        if raw[n] == 0 {
            continue;
        }
        for a in 0..grid.dim() {
            let Some(m) = grid.neighbor(n, a, true) else {
                continue;
            };
            if raw[m] == 0 || raw[m] == raw[n] {
                continue;
            }
            if top[n] <= top[m] {
                labels[n] = 0;
            }
            if top[m] <= top[n] {
                labels[m] = 0;
            }
        }
    }
    let nodes = (0..len).filter(|&n| labels[n] == 0).collect();
    Ok(InterfaceSlice {
        t,
        threshold,
        labels,
        nodes,
    })
}

/// `u* = u_j − u_k`: equal to `u_j` on the support of `j` and to `−u_k` on
/// that of `k` when they are disjoint.
pub fn signed_two_phase(u: &[ScalarField], j: usize, k: usize) -> Result<ScalarField> {
    if j == k {
        return Err(Error::Usage(format!("components must differ, got {j} twice")));
    }
    let (a, b) = match (u.get(j), u.get(k)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Usage(format!("component index out of range for m = {}", u.len()))),
    };
    a.zip_with(b, |x, y| x - y)
}

/// Subcell position of the first sign change of a 1-D field, by linear
/// interpolation between the two nonzero nodes that bracket it.
pub fn zero_crossing_1d(f: &ScalarField) -> Result<f64> {
    let grid = f.grid();
    if grid.dim() != 1 {
        return Err(Error::Usage("zero crossing needs a 1-D grid".into()));
    }
    let v = f.values();
    let mut last: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        if let Some(p) = last {
            if (v[p] > 0.0) != (x > 0.0) {
                let (xa, xb) = (grid.coords(p)[0], grid.coords(i)[0]);
                return Ok(xa + (xb - xa) * v[p] / (v[p] - x));
            }
        }
        last = Some(i);
    }
    Err(Error::NotFound("field has no sign change".into()))
}

/// Zero crossing of `u_j − u_k` on a 1-D grid.
pub fn interface_position_1d(u: &[ScalarField], j: usize, k: usize) -> Result<f64> {
    zero_crossing_1d(&signed_two_phase(u, j, k)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicPoint {
    pub x: Vec<f64>,
    pub t: f64,
}

/// `√(|Δt| + |Δx|²)`.
pub fn parabolic_distance(p: &ParabolicPoint, q: &ParabolicPoint) -> f64 {
    let dx2: f64 = p.x.iter().zip(&q.x).map(|(a, b)| (a - b) * (a - b)).sum();
    ((p.t - q.t).abs() + dx2).sqrt()
}

/// `max |u(x) − u(y)|_∞ / |x − y|` over the pairs, with `u` interpolated.
pub fn lipschitz_ratio_scan(u: &[ScalarField], pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (x, y) in pairs {
        let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        let mut diff: f64 = 0.0;
        for f in u {
            let (Some(a), Some(b)) = (f.sample(x), f.sample(y)) else {
                return Err(Error::Range(format!("pair {x:?}, {y:?} leaves the grid")));
            };
            diff = diff.max((a - b).abs());
        }
        best = best.max(diff / dist);
    }
    Ok(best)
}

/// Seeded random pairs at distance at most `max_sep`, both ends at least
/// `margin` inside Ω.
pub fn random_interior_pairs(
    grid: &Grid,
    count: usize,
    max_sep: f64,
    margin: f64,
    seed: u64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let mut pairs = Vec::with_capacity(count);
    let mut attempts = 0;
    while pairs.len() < count && attempts < 1000 * count.max(1) {
        attempts += 1;
        let x: Vec<f64> = (0..dim)
            .map(|a| grid.origin()[a] + rng.random::<f64>() * grid.extents()[a])
            .collect();
        let dir: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let r = max_sep * rng.random::<f64>();
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + r * d / norm).collect();
        if grid.distance_to_boundary(&x) >= margin && grid.distance_to_boundary(&y) >= margin {
            pairs.push((x, y));
        }
    }
    pairs
}

/// Lipschitz ratio at every snapshot with `t ≥ t_from`.
pub fn lipschitz_over_trajectory(
    traj: &Trajectory,
    pairs: &[(Vec<f64>, Vec<f64>)],
    t_from: f64,
) -> Result<Vec<(f64, f64)>> {
    traj.snapshots
        .iter()
        .filter(|s| s.t >= t_from)
        .map(|s| Ok((s.t, lipschitz_ratio_scan(&s.u, pairs)?)))
        .collect()
}

/// CSV rows `t,node,x[,y],label` for every node of the slice.
pub fn write_interface_csv(w: &mut impl Write, grid: &Grid, slice: &InterfaceSlice) -> Result<()> {
    let axes = ["x", "y"];
    write!(w, "t,node")?;
    for a in axes.iter().take(grid.dim()) {
        write!(w, ",{a}")?;
    }
    writeln!(w, ",label")?;
    for n in 0..grid.len() {
        write!(w, "{},{n}", fmt_f64(slice.t))?;
        for c in grid.coords(n) {
            write!(w, ",{}", fmt_f64(c))?;
        }
        writeln!(w, ",{}", slice.labels[n])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Geometry};
    use std::f64::consts::PI;

    #[test]
    fn single_positive_component_has_only_boundary_interface() {
        let g = build_grid(1, &[1.0], &[51], Geometry::Box).unwrap();
        let u = vec![ScalarField::from_fn(&g, |x| (PI * x[0]).sin())];
        let s = support_labels(&u, 0.0, default_threshold(&u)).unwrap();
        assert_eq!(s.nodes, vec![0, 50]);
    }

    #[test]
    fn zero_state_is_all_interface() {
        let g = build_grid(2, &[1.0, 1.0], &[9, 9], Geometry::Box).unwrap();
        let u = vec![ScalarField::zeros(&g), ScalarField::zeros(&g)];
        let s = support_labels(&u, 0.0, default_threshold(&u)).unwrap();
        assert_eq!(s.nodes.len(), 81);
    }

    #[test]
    fn weaker_side_of_a_label_boundary_is_interface() {
        let g = build_grid(1, &[1.0], &[11], Geometry::Box).unwrap();
        let a = vec![0.0, 0.4, 0.3, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b: Vec<f64> = a.iter().rev().cloned().collect();
        let u = vec![
            ScalarField::from_values(&g, a.clone()).unwrap(),
            ScalarField::from_values(&g, b).unwrap(),
        ];
        let s = support_labels(&u, 0.0, default_threshold(&u)).unwrap();
        assert_eq!(s.nodes, vec![0, 5, 10]);
        assert_eq!(s.labels[4], 1);
        assert_eq!(s.labels[6], 2);

        // Nodes 4 and 5 both dominant with equal values: both become interface.
        let mut c = a.clone();
        c[4] = 0.1;
        let mut d = vec![0.0; 11];
        d[5] = 0.1;
        d[6] = 0.2;
        let u = vec![
            ScalarField::from_values(&g, c).unwrap(),
            ScalarField::from_values(&g, d).unwrap(),
        ];
        let s = support_labels(&u, 0.0, default_threshold(&u)).unwrap();
        assert_eq!(s.nodes, vec![0, 4, 5, 7, 8, 9, 10]);
    }

    #[test]
    fn signed_field_and_crossing() {
        let g = build_grid(1, &[1.0], &[101], Geometry::Box).unwrap();
        let u = vec![
            ScalarField::from_fn(&g, |x| (x[0] - 0.5).max(0.0)),
            ScalarField::from_fn(&g, |x| (0.5 - x[0]).max(0.0)),
        ];
        let s = signed_two_phase(&u, 0, 1).unwrap();
        for n in 1..100 {
            assert!((s.values()[n] - (g.coords(n)[0] - 0.5)).abs() < 1e-15);
        }
        let r = signed_two_phase(&u, 1, 0).unwrap();
        assert!(s.values().iter().zip(r.values()).all(|(a, b)| *a == -*b));
        assert!((interface_position_1d(&u, 0, 1).unwrap() - 0.5).abs() < 1e-12);

        let q = ScalarField::from_fn_unmasked(&g, |x| x[0] * x[0] - 0.25);
        assert!((zero_crossing_1d(&q).unwrap() - 0.5).abs() < 1e-4);
        let p = ScalarField::from_fn_unmasked(&g, |x| 1.0 + x[0]);
        assert!(matches!(zero_crossing_1d(&p), Err(Error::NotFound(_))));
    }

    #[test]
    fn distances() {
        let p = ParabolicPoint { x: vec![0.0, 0.0], t: 0.0 };
        assert_eq!(parabolic_distance(&p, &p), 0.0);
        let q = ParabolicPoint { x: vec![0.0, 0.0], t: 4.0 };
        assert_eq!(parabolic_distance(&p, &q), 2.0);
        let r = ParabolicPoint { x: vec![3.0, 4.0], t: 0.0 };
        assert_eq!(parabolic_distance(&p, &r), 5.0);
    }

    #[test]
    fn lipschitz_of_sine_and_constant() {
        let g = build_grid(1, &[1.0], &[201], Geometry::Box).unwrap();
        let pairs = random_interior_pairs(&g, 400, 0.05, 0.0, 7);
        assert_eq!(pairs.len(), 400);
        let u = vec![ScalarField::from_fn(&g, |x| (PI * x[0]).sin())];
        let ratio = lipschitz_ratio_scan(&u, &pairs).unwrap();
        assert!(ratio <= PI + 0.01 && ratio > 3.0);
        let c = vec![ScalarField::from_fn_unmasked(&g, |_| 2.0)];
        assert_eq!(lipschitz_ratio_scan(&c, &pairs).unwrap(), 0.0);
    }
}
