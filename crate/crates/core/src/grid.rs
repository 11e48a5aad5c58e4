//! Uniform tensor grids on boxes and disk-masked boxes, with the discrete
//! Laplacian, trapezoidal quadrature and backward heat kernel weights.
//!
//! Nodes are stored x-fastest: node `(i, j)` lives at `i + counts[0] * j`.
//! Nodes on the bounding box are never interior, so every interior node
//! has its full five-point (or three-point) stencil available.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    Box,
    DiskMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    origin: Vec<f64>,
    extents: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    geometry: Geometry,
    interior_mask: Vec<bool>,
    quad_weight: Vec<f64>,
    interior_nodes: Vec<usize>,
}

/// Builds a grid anchored at the origin.
pub fn build_grid(
    dim: usize,
    extents: &[f64],
    counts: &[usize],
    geometry: Geometry,
) -> Result<Arc<Grid>> {
    Grid::new(dim, &vec![0.0; dim], extents, counts, geometry).map(Arc::new)
}

impl Grid {
    pub fn new(
        dim: usize,
        origin: &[f64],
        extents: &[f64],
        counts: &[usize],
        geometry: Geometry,
    ) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dim must be 1 or 2, got {dim}")));
        }
        if extents.len() != dim || counts.len() != dim || origin.len() != dim {
            return Err(Error::Config(format!(
                "extents, counts and origin need {dim} entries"
            )));
        }
        if let Some(c) = counts.iter().find(|&&c| c < 3) {
            return Err(Error::Config(format!("counts must be >= 3 per axis, got {c}")));
        }
        if let Some(e) = extents.iter().find(|&&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::Config(format!("extents must be positive, got {e}")));
        }
        let spacing: Vec<f64> = extents
            .iter()
            .zip(counts)
            .map(|(&e, &c)| e / (c - 1) as f64)
            .collect();
        let len: usize = counts.iter().product();

        let mut interior_mask = vec![false; len];
        let mut quad_weight = vec![0.0; len];
        let center: Vec<f64> = (0..dim).map(|a| origin[a] + 0.5 * extents[a]).collect();
        let radius = 0.5 * extents.iter().cloned().fold(f64::INFINITY, f64::min);
        for node in 0..len {
            let idx = unravel(node, counts);
            let on_box = (0..dim).any(|a| idx[a] == 0 || idx[a] + 1 == counts[a]);
            let mut w = 1.0;
            for a in 0..dim {
                let end = idx[a] == 0 || idx[a] + 1 == counts[a];
                w *= if end { 0.5 * spacing[a] } else { spacing[a] };
            }
            quad_weight[node] = w;
            interior_mask[node] = !on_box
                && match geometry {
                    Geometry::Box => true,
                    Geometry::DiskMask => {
                        let r2: f64 = (0..dim)
                            .map(|a| {
                                let x = origin[a] + idx[a] as f64 * spacing[a] - center[a];
                                x * x
                            })
                            .sum();
                        r2 < radius * radius
                    }
                };
        }
        let interior_nodes = (0..len).filter(|&n| interior_mask[n]).collect();
        Ok(Grid {
            dim,
            origin: origin.to_vec(),
            extents: extents.to_vec(),
            counts: counts.to_vec(),
            spacing,
            geometry,
            interior_mask,
            quad_weight,
            interior_nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn extents(&self) -> &[f64] {
        &self.extents
    }
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }
    pub fn geometry(&self) -> Geometry {
        self.geometry
    }
    pub fn len(&self) -> usize {
        self.interior_mask.len()
    }
    pub fn is_empty(&self) -> bool {
        self.interior_mask.is_empty()
    }
    pub fn interior_mask(&self) -> &[bool] {
        &self.interior_mask
    }
    pub fn is_interior(&self, node: usize) -> bool {
        self.interior_mask[node]
    }
    pub fn quad_weight(&self) -> &[f64] {
        &self.quad_weight
    }
    /// Interior node indices in ascending (x-fastest) order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }
    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Linear offset between a node and its neighbor along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.counts[..axis].iter().product()
    }

    pub fn index_of(&self, idx: &[usize]) -> usize {
        let mut node = 0;
        let mut stride = 1;
        for a in 0..self.dim {
            node += idx[a] * stride;
            stride *= self.counts[a];
        }
        node
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        unravel(node, &self.counts)
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let idx = self.multi_index(node);
        (0..self.dim)
            .map(|a| self.origin[a] + idx[a] as f64 * self.spacing[a])
            .collect()
    }

    /// Distance from `p` to the boundary of Ω (box faces, or the inscribed
    /// circle for disk masks). Negative outside.
    pub fn distance_to_boundary(&self, p: &[f64]) -> f64 {
        match self.geometry {
            Geometry::Box => (0..self.dim)
                .map(|a| {
                    let lo = p[a] - self.origin[a];
                    let hi = self.origin[a] + self.extents[a] - p[a];
                    lo.min(hi)
                })
                .fold(f64::INFINITY, f64::min),
            Geometry::DiskMask => {
                let radius = 0.5 * self.extents.iter().cloned().fold(f64::INFINITY, f64::min);
                let r: f64 = (0..self.dim)
                    .map(|a| {
                        let x = p[a] - self.origin[a] - 0.5 * self.extents[a];
                        x * x
                    })
                    .sum::<f64>()
                    .sqrt();
                radius - r
            }
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        (0..self.dim).all(|a| {
            let tol = 1e-12 * self.extents[a];
            p[a] >= self.origin[a] - tol && p[a] <= self.origin[a] + self.extents[a] + tol
        })
    }

    /// Neighbor along `axis`, forward or backward, if it exists.
    pub fn neighbor(&self, node: usize, axis: usize, forward: bool) -> Option<usize> {
        let i = (node / self.stride(axis)) % self.counts[axis];
        if forward {
            (i + 1 < self.counts[axis]).then(|| node + self.stride(axis))
        } else {
            (i > 0).then(|| node - self.stride(axis))
        }
    }

    pub fn same_as(self: &Arc<Self>, other: &Arc<Grid>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }
}

fn unravel(mut node: usize, counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .map(|&c| {
            let i = node % c;
            node /= c;
            i
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    /// Wraps raw nodal values. Nothing is masked; use [`ScalarField::masked`]
    /// to enforce the Dirichlet condition.
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f` at interior nodes; non-interior nodes are exactly 0.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|n| if grid.is_interior(n) { f(&grid.coords(n)) } else { 0.0 })
            .collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    /// Samples `f` at every node of the bounding box.
    pub fn from_fn_unmasked(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|n| f(&grid.coords(n))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn masked(mut self) -> Self {
        for (v, &inside) in self.values.iter_mut().zip(self.grid.interior_mask()) {
            if !inside {
                *v = 0.0;
            }
        }
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        check_same(self, other)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Multilinear interpolation at a physical point inside the bounding box.
    pub fn sample(&self, p: &[f64]) -> Option<f64> {
        let g = &self.grid;
        if !g.contains(p) {
            return None;
        }
        let dim = g.dim();
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..dim {
            let s = ((p[a] - g.origin[a]) / g.spacing[a]).clamp(0.0, (g.counts[a] - 1) as f64);
            let i = (s.floor() as usize).min(g.counts[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = [0usize; 2];
            for a in 0..dim {
                let up = (corner >> a) & 1 == 1;
                idx[a] = base[a] + up as usize;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.values[g.index_of(&idx[..dim])];
            }
        }
        Some(acc)
    }
}

pub(crate) fn check_same(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid.same_as(&b.grid) {
        Ok(())
    } else {
        Err(Error::Usage("fields live on different grids".into()))
    }
}

/// Second-order central Laplacian on interior nodes, 0 elsewhere.
pub fn apply_laplacian(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.values.len()];
    laplacian_into(&f.grid, &f.values, &mut out);
    ScalarField {
        grid: f.grid.clone(),
        values: out,
    }
}

pub(crate) fn laplacian_into(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let inv_h2: Vec<f64> = grid.spacing.iter().map(|h| 1.0 / (h * h)).collect();
    let strides: Vec<usize> = (0..grid.dim).map(|a| grid.stride(a)).collect();
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for &n in &grid.interior_nodes {
        let mut acc = 0.0;
        for a in 0..grid.dim {
            let s = strides[a];
            acc += (u[n + s] - 2.0 * u[n] + u[n - s]) * inv_h2[a];
        }
        out[n] = acc;
    }
}

/// Discrete Dirichlet energy ∫|∇f|² as a sum of squared edge differences
/// over every edge touching an interior node. For fields vanishing off the
/// interior this equals `-integrate(f * apply_laplacian(f))` exactly, so it is
/// the quadratic form the flow and the eigensolver dissipate or minimize.
pub fn dirichlet_form(f: &ScalarField) -> f64 {
    dirichlet_form_values(&f.grid, &f.values)
}

pub(crate) fn dirichlet_form_values(grid: &Grid, u: &[f64]) -> f64 {
    let cell: f64 = grid.spacing.iter().product();
    let mask = &grid.interior_mask;
    let len = grid.len();
    let mut acc = 0.0;
    for a in 0..grid.dim {
        let s = grid.stride(a);
        let c = grid.counts[a];
        let h2 = grid.spacing[a] * grid.spacing[a];
        let mut axis_acc = 0.0;
        // Blocks of `s * c` nodes share their coordinates above axis `a`.
        for block in (0..len).step_by(s * c) {
            for n in block..block + s * (c - 1) {
                let m = n + s;
                if mask[n] || mask[m] {
                    let d = u[m] - u[n];
                    axis_acc += d * d;
                }
            }
        }
        acc += axis_acc / h2;
    }
    acc * cell
}

/// Backward heat kernel `(4πτ)^{-n/2} exp(-|x - x0|²/4τ)` on every node of
/// the bounding box.
pub fn heat_kernel_weight(grid: &Arc<Grid>, x0: &[f64], tau: f64) -> Result<ScalarField> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("kernel time lag must be positive, got {tau}")));
    }
    if x0.len() != grid.dim() {
        return Err(Error::Usage("base point dimension mismatch".into()));
    }
    let norm = (4.0 * PI * tau).powf(-0.5 * grid.dim() as f64);
    Ok(ScalarField::from_fn_unmasked(grid, |x| {
        let r2: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
        norm * (-r2 / (4.0 * tau)).exp()
    }))
}

/// Trapezoidal quadrature, summed in node order.
pub fn integrate(f: &ScalarField) -> f64 {
    f.values
        .iter()
        .zip(&f.grid.quad_weight)
        .map(|(v, w)| v * w)
        .sum()
}

/// `∫ f g` without materializing the product.
pub fn inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    check_same(f, g)?;
    Ok(weighted_dot(&f.grid, &f.values, &g.values))
}

pub(crate) fn weighted_dot(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(&grid.quad_weight)
        .map(|((x, y), w)| x * y * w)
        .sum()
}

pub fn l2_norm_sq(f: &ScalarField) -> f64 {
    weighted_dot(&f.grid, &f.values, &f.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_interval(n: usize) -> Arc<Grid> {
        build_grid(1, &[1.0], &[n], Geometry::Box).unwrap()
    }

    #[test]
    fn uniform_grid_arithmetic() {
        let g = unit_interval(101);
        assert!((g.spacing()[0] - 0.01).abs() < 1e-15);
        assert_eq!(g.interior_nodes().len(), 99);

        let g2 = build_grid(2, &[1.0, 1.0], &[65, 65], Geometry::Box).unwrap();
        assert_eq!(g2.spacing(), &[0.015625, 0.015625]);
        assert_eq!(g2.interior_nodes().len(), 63 * 63);
    }

    #[test]
    fn disk_mask_matches_brute_force_lattice_count() {
        let g = build_grid(2, &[1.0, 1.0], &[65, 65], Geometry::DiskMask).unwrap();
        let h = 1.0 / 64.0;
        let mut count = 0;
        for i in 0..65 {
            for j in 0..65 {
                let (x, y) = (i as f64 * h - 0.5, j as f64 * h - 0.5);
                if x * x + y * y < 0.25 {
                    count += 1;
                }
            }
        }
        assert_eq!(g.interior_nodes().len(), count);
        for &n in g.interior_nodes() {
            for a in 0..2 {
                assert!(g.neighbor(n, a, true).is_some() && g.neighbor(n, a, false).is_some());
            }
        }
    }

    #[test]
    fn configuration_errors() {
        assert!(matches!(build_grid(1, &[1.0], &[2], Geometry::Box), Err(Error::Config(_))));
        assert!(matches!(build_grid(1, &[0.0], &[10], Geometry::Box), Err(Error::Config(_))));
        assert!(matches!(build_grid(1, &[-1.0], &[10], Geometry::Box), Err(Error::Config(_))));
        assert!(matches!(build_grid(3, &[1.0; 3], &[5; 3], Geometry::Box), Err(Error::Config(_))));
    }

    #[test]
    fn laplacian_examples() {
        let g = unit_interval(101);
        let c = ScalarField::from_fn_unmasked(&g, |_| 3.5);
        assert!(apply_laplacian(&c).values().iter().all(|&v| v.abs() < 1e-9));

        let q = ScalarField::from_fn_unmasked(&g, |x| x[0] * x[0]);
        let lq = apply_laplacian(&q);
        for &n in g.interior_nodes() {
            assert!((lq.values()[n] - 2.0).abs() < 1e-9, "{}", lq.values()[n]);
        }

        let s = ScalarField::from_fn(&g, |x| (PI * x[0]).sin());
        let ls = apply_laplacian(&s);
        let h = 0.01;
        let bound = PI.powi(4) / 12.0 * h * h * 1.01;
        for &n in g.interior_nodes() {
            let x = g.coords(n)[0];
            let exact = -PI * PI * (PI * x).sin();
            assert!((ls.values()[n] - exact).abs() <= bound);
        }
    }

    #[test]
    fn laplacian_exact_on_affine_2d() {
        let g = build_grid(2, &[1.0, 2.0], &[9, 17], Geometry::Box).unwrap();
        let f = ScalarField::from_fn_unmasked(&g, |x| 1.0 + 2.0 * x[0] - 3.0 * x[1]);
        assert!(apply_laplacian(&f).values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn laplacian_is_symmetric_form() {
        let g = build_grid(2, &[1.0, 1.0], &[21, 21], Geometry::DiskMask).unwrap();
        let f = ScalarField::from_fn(&g, |x| (3.0 * x[0]).sin() + x[1] * x[1]);
        let k = ScalarField::from_fn(&g, |x| (x[0] * x[1]).exp());
        let a = inner(&f, &apply_laplacian(&k)).unwrap();
        let b = inner(&k, &apply_laplacian(&f)).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        let e = dirichlet_form(&f);
        assert!((e + inner(&f, &apply_laplacian(&f)).unwrap()).abs() < 1e-10 * e);
    }

    #[test]
    fn kernel_normalization_and_moments() {
        let tau = 0.01;
        let g = Arc::new(Grid::new(1, &[-1.0], &[2.0], &[2001], Geometry::Box).unwrap());
        let k = heat_kernel_weight(&g, &[0.0], tau).unwrap();
        assert!((integrate(&k) - 1.0).abs() < 1e-6);
        assert!(k.values().iter().all(|&v| v > 0.0));
        assert!((k.sample(&[0.0]).unwrap() - (0.04 * PI).powf(-0.5)).abs() < 1e-12);
        assert!((k.sample(&[0.0]).unwrap() - 2.82095).abs() < 1e-5);
        let m2 = ScalarField::from_fn_unmasked(&g, |x| x[0] * x[0]);
        let second = inner(&m2, &k).unwrap();
        assert!((second - 2.0 * tau).abs() < 1e-8);

        let g2 = Arc::new(Grid::new(2, &[-1.0, -1.0], &[2.0, 2.0], &[201, 201], Geometry::Box).unwrap());
        let k2 = heat_kernel_weight(&g2, &[0.1, -0.05], tau).unwrap();
        assert!((integrate(&k2) - 1.0).abs() < 1e-6);
        let r2 = ScalarField::from_fn_unmasked(&g2, |x| (x[0] - 0.1).powi(2) + (x[1] + 0.05).powi(2));
        assert!((inner(&r2, &k2).unwrap() - 4.0 * tau).abs() < 1e-6);
    }

    #[test]
    fn kernel_rejects_nonpositive_lag() {
        let g = unit_interval(11);
        assert!(matches!(heat_kernel_weight(&g, &[0.5], 0.0), Err(Error::Domain(_))));
        assert!(matches!(heat_kernel_weight(&g, &[0.5], -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn integration_examples() {
        let g = unit_interval(101);
        let one = ScalarField::from_fn_unmasked(&g, |_| 1.0);
        assert!((integrate(&one) - 1.0).abs() <= 0.01);
        let s2 = ScalarField::from_fn(&g, |x| (PI * x[0]).sin().powi(2));
        assert!((integrate(&s2) - 0.5).abs() < 1e-4);
        assert_eq!(integrate(&ScalarField::zeros(&g)), 0.0);
    }

    #[test]
    fn grid_mismatch_is_usage_error() {
        let a = ScalarField::zeros(&unit_interval(11));
        let b = ScalarField::zeros(&unit_interval(12));
        assert!(matches!(inner(&a, &b), Err(Error::Usage(_))));
    }

    #[test]
    fn bilinear_sampling_is_exact_on_bilinear_functions() {
        let g = build_grid(2, &[1.0, 1.0], &[11, 11], Geometry::Box).unwrap();
        let f = ScalarField::from_fn_unmasked(&g, |x| 1.0 + x[0] - 2.0 * x[1] + 3.0 * x[0] * x[1]);
        let p = [0.337, 0.781];
        let exact = 1.0 + p[0] - 2.0 * p[1] + 3.0 * p[0] * p[1];
        assert!((f.sample(&p).unwrap() - exact).abs() < 1e-12);
        assert!(f.sample(&[1.2, 0.5]).is_none());
        assert!((f.sample(&[1.0, 1.0]).unwrap() - 3.0).abs() < 1e-12);
    }
}
