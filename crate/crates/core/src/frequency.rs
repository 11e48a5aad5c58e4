//! Parabolic frequency functionals at a base point `(x0, t0)`:
//!
//! ```text
//! I(R) = R² ∫ |∇v|² G dx,   H(R) = ∫ d²(v, v(x0,t0)) G dx,   N(R) = 2I/H,
//! ```
//!
//! all on the slice `t = t0 − R²`, with `G` the backward heat kernel of lag
//! `R²` and `v` extended by zero outside Ω. The monotonicity statement under
//! test is that `N(R) + C R⁴` is nondecreasing in `R` for some `C`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{grad_sq_density, Trajectory};
use crate::grid::{heat_kernel_weight, Grid, ScalarField};
use crate::par;
use crate::sigma::{d_sigma_raw, map_fields, retract_sigma};

/// Below this many mesh widths the extrapolation ignores a radius.
pub const MIN_RADIUS_CELLS: f64 = 3.0;
/// Radii used for the `R → 0` fit.
pub const FIT_POINTS: usize = 4;
/// `H ≤ H_CUTOFF_REL · sup|v|²` marks a degenerate probe.
pub const H_CUTOFF_REL: f64 = 1e-14;

/// How distances in the target are measured inside `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMetric {
    /// Fields are read as Σ-valued (through the continuous retraction) and
    /// compared with `d_Σ`.
    Sigma,
    /// Plain `|v − v(x0,t0)|` in R^m, for fields that are not Σ-valued.
    Euclidean,
}

/// Anything that can produce the component fields at a given time.
pub trait SliceSource: Sync {
    fn grid(&self) -> &Arc<Grid>;
    fn time_range(&self) -> (f64, f64);
    fn slice_at(&self, t: f64) -> Result<Vec<ScalarField>>;
}

impl SliceSource for Trajectory {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    fn time_range(&self) -> (f64, f64) {
        Trajectory::time_range(self)
    }
    fn slice_at(&self, t: f64) -> Result<Vec<ScalarField>> {
        Trajectory::slice_at(self, t)
    }
}

/// A closed-form space-time field sampled on every node of a grid.
pub struct SyntheticSource<F> {
    grid: Arc<Grid>,
    range: (f64, f64),
    field: F,
}

impl<F> SyntheticSource<F>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    pub fn new(grid: Arc<Grid>, range: (f64, f64), field: F) -> Self {
        SyntheticSource { grid, range, field }
    }
}

impl<F> SliceSource for SyntheticSource<F>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    fn time_range(&self) -> (f64, f64) {
        self.range
    }
    fn slice_at(&self, t: f64) -> Result<Vec<ScalarField>> {
        let g = &self.grid;
        let values: Vec<Vec<f64>> = (0..g.len()).map(|n| (self.field)(&g.coords(n), t)).collect();
        let m = values.first().map_or(0, Vec::len);
        (0..m)
            .map(|j| ScalarField::from_values(g, values.iter().map(|v| v[j]).collect()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ihn {
    pub i: f64,
    pub h: f64,
    pub n: f64,
}

fn as_target(fields: &[ScalarField], metric: TargetMetric) -> Vec<ScalarField> {
    match metric {
        TargetMetric::Sigma => map_fields(fields, retract_sigma),
        TargetMetric::Euclidean => fields.to_vec(),
    }
}

fn base_in_target(base: &[f64], metric: TargetMetric) -> Vec<f64> {
    match metric {
        TargetMetric::Sigma => retract_sigma(base).comps().to_vec(),
        TargetMetric::Euclidean => base.to_vec(),
    }
}

/// `I`, `H`, `N` for one slice already taken at `t0 − R²`.
pub fn compute_ihn(
    slice: &[ScalarField],
    base_value: &[f64],
    x0: &[f64],
    radius: f64,
    metric: TargetMetric,
) -> Result<Ihn> {
    if slice.is_empty() || base_value.len() != slice.len() {
        return Err(Error::Usage("base value and slice have different component counts".into()));
    }
    let grid = slice[0].grid();
    let v = as_target(slice, metric);
    let b = base_in_target(base_value, metric);
    let kernel = heat_kernel_weight(grid, x0, radius * radius)?;
    let k = kernel.values();
    let w = grid.quad_weight();
    let m = v.len();

    let mut grad = vec![0.0; grid.len()];
    for f in &v {
        for (g, d) in grad.iter_mut().zip(grad_sq_density(f).values()) {
            *g += d;
        }
    }
    let mut i_acc = 0.0;
    let mut h_acc = 0.0;
    let mut sup: f64 = b.iter().fold(0.0, |s, x| s.max(x.abs()));
    let mut y = vec![0.0; m];
    for n in 0..grid.len() {
        for j in 0..m {
            y[j] = v[j].values()[n];
            sup = sup.max(y[j].abs());
        }
        let d2 = match metric {
            TargetMetric::Sigma => {
                let d = d_sigma_raw(&y, &b);
                d * d
            }
            TargetMetric::Euclidean => y.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum(),
        };
        h_acc += d2 * k[n] * w[n];
        i_acc += grad[n] * k[n] * w[n];
    }
    let i = radius * radius * i_acc;
    let cutoff = H_CUTOFF_REL * sup * sup;
    if !(h_acc > cutoff) {
        return Err(Error::DegenerateProbe {
            h: h_acc,
            cutoff,
            radius,
        });
    }
    Ok(Ihn {
        i,
        h: h_acc,
        n: 2.0 * i / h_acc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProbe {
    pub x0: Vec<f64>,
    pub t0: f64,
    /// Parabolic distance from the base to the parabolic boundary.
    pub r0: f64,
    pub base_value: Vec<f64>,
    /// Strictly decreasing.
    pub radii: Vec<f64>,
    pub i_vals: Vec<f64>,
    pub h_vals: Vec<f64>,
    pub n_vals: Vec<f64>,
    pub fitted_c: f64,
    pub alpha_hat: Option<f64>,
}

impl FrequencyProbe {
    /// `N(R) + C R⁴` on the sampled radii.
    pub fn compensated(&self, c: f64) -> Vec<f64> {
        self.radii
            .iter()
            .zip(&self.n_vals)
            .map(|(r, n)| n + c * r.powi(4))
            .collect()
    }
}

/// Least `C ≥ 0` making `N(R) + C R⁴` nondecreasing in `R` on the samples.
/// Radii may come in any order.
pub fn fit_monotonicity_constant(radii: &[f64], n_vals: &[f64]) -> f64 {
    let mut pairs: Vec<(f64, f64)> = radii.iter().cloned().zip(n_vals.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| {
            let (small, big) = (w[0], w[1]);
            (small.1 - big.1) / (big.0.powi(4) - small.0.powi(4))
        })
        .fold(0.0, f64::max)
}

/// Intercept of the least-squares line `N ≈ α + s R⁴` over the smallest
/// radii that are at least `min_radius`.
pub fn extrapolate_frequency(radii: &[f64], n_vals: &[f64], min_radius: f64) -> Result<f64> {
    let mut usable: Vec<(f64, f64)> = radii
        .iter()
        .cloned()
        .zip(n_vals.iter().cloned())
        .filter(|&(r, _)| r >= min_radius * (1.0 - 1e-9))
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientResolution(format!(
            "{} radii at or above {min_radius}; need 3",
            usable.len()
        )));
    }
    usable.sort_by(|a, b| a.0.total_cmp(&b.0));
    usable.truncate(FIT_POINTS);
    let k = usable.len() as f64;
    let xs: Vec<f64> = usable.iter().map(|(r, _)| r.powi(4)).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = usable.iter().map(|(_, n)| n).sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&usable).map(|(x, (_, n))| (x - mx) * (n - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(my - slope * mx)
}

/// Geometric radii from `r0/2` down to `3h`, ratio `√2`.
pub fn default_radii(r0: f64, h: f64) -> Vec<f64> {
    let mut radii = Vec::new();
    let mut r = 0.5 * r0;
    let floor = MIN_RADIUS_CELLS * h * (1.0 - 1e-9);
    while r >= floor && radii.len() < 64 {
        radii.push(r);
        r /= 2f64.sqrt();
    }
    radii
}

/// Parabolic distance from `(x0, t0)` to the parabolic boundary of
/// `Ω × (t_start, ∞)`.
pub fn parabolic_boundary_distance(source: &dyn SliceSource, x0: &[f64], t0: f64) -> f64 {
    let (t_start, _) = source.time_range();
    let dx = source.grid().distance_to_boundary(x0);
    let dt = (t0 - t_start).max(0.0).sqrt();
    dx.min(dt)
}

fn sample_components(slice: &[ScalarField], x: &[f64]) -> Result<Vec<f64>> {
    slice
        .iter()
        .map(|f| {
            f.sample(x)
                .ok_or_else(|| Error::Range(format!("point {x:?} outside the grid")))
        })
        .collect()
}

/// Samples `I, H, N` at every radius and fits the monotonicity constant.
pub fn probe(
    source: &dyn SliceSource,
    x0: &[f64],
    t0: f64,
    radii: &[f64],
    metric: TargetMetric,
) -> Result<FrequencyProbe> {
    let grid = source.grid();
    if x0.len() != grid.dim() {
        return Err(Error::Usage("base point dimension mismatch".into()));
    }
    if radii.is_empty() {
        return Err(Error::Usage("no radii given".into()));
    }
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| b.total_cmp(a));
    radii.dedup();
    if radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Domain("radii must be positive".into()));
    }
    let (ts, te) = source.time_range();
    if t0 > te + 1e-12 * te.abs().max(1.0) || t0 < ts {
        return Err(Error::Range(format!("t0 = {t0} outside the time range [{ts}, {te}]")));
    }
    let r0 = parabolic_boundary_distance(source, x0, t0);
    if radii[0] >= r0 {
        return Err(Error::Range(format!(
            "radius {} is not below the parabolic boundary distance {r0}",
            radii[0]
        )));
    }
    let base_value = sample_components(&source.slice_at(t0)?, x0)?;
    let mut i_vals = Vec::with_capacity(radii.len());
    let mut h_vals = Vec::with_capacity(radii.len());
    let mut n_vals = Vec::with_capacity(radii.len());
    for &r in &radii {
        let slice = source.slice_at(t0 - r * r)?;
        let ihn = compute_ihn(&slice, &base_value, x0, r, metric)?;
        i_vals.push(ihn.i);
        h_vals.push(ihn.h);
        n_vals.push(ihn.n);
    }
    let fitted_c = fit_monotonicity_constant(&radii, &n_vals);
    let alpha_hat =
        extrapolate_frequency(&radii, &n_vals, MIN_RADIUS_CELLS * grid.min_spacing()).ok();
    Ok(FrequencyProbe {
        x0: x0.to_vec(),
        t0,
        r0,
        base_value,
        radii,
        i_vals,
        h_vals,
        n_vals,
        fitted_c,
        alpha_hat,
    })
}

/// Extrapolated frequency `lim_{R→0} N(R)` at `(x0, t0)`.
pub fn frequency_at(
    source: &dyn SliceSource,
    x0: &[f64],
    t0: f64,
    radii: &[f64],
    metric: TargetMetric,
) -> Result<f64> {
    let p = probe(source, x0, t0, radii, metric)?;
    extrapolate_frequency(&p.radii, &p.n_vals, MIN_RADIUS_CELLS * source.grid().min_spacing())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RadiiPolicy {
    /// [`default_radii`] from each base's own parabolic boundary distance.
    Geometric,
    Explicit(Vec<f64>),
}

/// Probes many bases concurrently; results keep the order of `bases`.
pub fn probe_many(
    source: &(dyn SliceSource + Sync),
    bases: &[(Vec<f64>, f64)],
    radii: &RadiiPolicy,
    metric: TargetMetric,
) -> Vec<Result<FrequencyProbe>> {
    let h = source.grid().min_spacing();
    par::map(bases, |(x0, t0)| {
        let r = match radii {
            RadiiPolicy::Geometric => {
                // Stay strictly inside the parabolic boundary.
                let r0 = parabolic_boundary_distance(source, x0, *t0);
                let r = default_radii(r0 * (1.0 - 1e-9), h);
                if r.is_empty() {
                    return Err(Error::Range(format!(
                        "base ({x0:?}, {t0}) is within {r0:.3e} of the parabolic boundary; no radius of at least {MIN_RADIUS_CELLS} cells fits"
                    )));
                }
                r
            }
            RadiiPolicy::Explicit(r) => r.clone(),
        };
        probe(source, x0, *t0, &r, metric)
    })
}

/// Sampling window for a blow-up: a box `[-half_width, half_width]^n` with
/// `counts` nodes per axis, at rescaled times `times` (all ≤ 0).
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupWindow {
    pub half_width: f64,
    pub counts: usize,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupSlice {
    pub s: f64,
    pub fields: Vec<ScalarField>,
}

/// `u_ρ(y, s) = u(x0 + ρy, t0 + ρ²s)` sampled on the window.
pub fn blowup_rescale(
    source: &dyn SliceSource,
    x0: &[f64],
    t0: f64,
    rho: f64,
    window: &BlowupWindow,
) -> Result<Vec<BlowupSlice>> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    let dim = source.grid().dim();
    let hw = window.half_width;
    let wgrid = Arc::new(Grid::new(
        dim,
        &vec![-hw; dim],
        &vec![2.0 * hw; dim],
        &vec![window.counts; dim],
        crate::grid::Geometry::Box,
    )?);
    let (ts, te) = source.time_range();
    let mut out = Vec::with_capacity(window.times.len());
    for &s in &window.times {
        let t = t0 + rho * rho * s;
        if t < ts - 1e-12 || t > te + 1e-12 {
            return Err(Error::Range(format!("rescaled time {t} leaves [{ts}, {te}]")));
        }
        let slice = source.slice_at(t)?;
        let mut fields: Vec<Vec<f64>> = vec![Vec::with_capacity(wgrid.len()); slice.len()];
        for n in 0..wgrid.len() {
            let y = wgrid.coords(n);
            let x: Vec<f64> = x0.iter().zip(&y).map(|(a, b)| a + rho * b).collect();
            if source.grid().distance_to_boundary(&x) < -1e-12 {
                return Err(Error::Range(format!("rescaled point {x:?} leaves the domain")));
            }
            for (j, f) in slice.iter().enumerate() {
                let v = f
                    .sample(&x)
                    .ok_or_else(|| Error::Range(format!("rescaled point {x:?} leaves the grid")))?;
                fields[j].push(v);
            }
        }
        out.push(BlowupSlice {
            s,
            fields: fields
                .into_iter()
                .map(|v| ScalarField::from_values(&wgrid, v))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// First Dirichlet eigenvalue `(π/θ)²` of an arc of length `θ` on the unit circle.
pub fn arc_eigenvalue(theta: f64) -> f64 {
    (PI / theta).powi(2)
}

/// `c(n, α) = α(α + n − 2)`.
pub fn homogeneity_constant(n: usize, alpha: f64) -> f64 {
    alpha * (alpha + n as f64 - 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapConstants {
    pub n: usize,
    pub d: usize,
    /// Lower bound on the first eigenvalue of the smallest spherical phase.
    pub sphere_eigenvalue: f64,
    /// Excess of that bound over `n − 1`.
    pub eta: f64,
    /// Frequencies at free-boundary points are either 1 or at least `1 + delta`.
    pub delta: f64,
}

/// Frequency gap for `d ≥ 3` phases meeting at a point in dimension `n`.
///
/// With three or more phases one of them occupies at most a third of the
/// sphere. In the plane that is an arc of length `2π/3`, whose first
/// eigenvalue exceeds `n − 1 = 1` by `η`; the gap `δ` then solves
/// `c(n, 1 + δ) = n − 1 + η/6`.
pub fn gap_constants(n: usize, d: usize) -> Result<GapConstants> {
    if n != 2 {
        return Err(Error::NotImplemented(format!(
            "gap constants need spherical-cap eigenvalue bounds for n = {n}; only n = 2 is available"
        )));
    }
    if d < 3 {
        return Err(Error::Domain(format!(
            "gap constants are defined for d >= 3 phases, got d = {d}"
        )));
    }
    let sphere_eigenvalue = arc_eigenvalue(2.0 * PI / 3.0);
    let eta = sphere_eigenvalue - (n as f64 - 1.0);
    let target = n as f64 - 1.0 + eta / 6.0;
    // Positive root of α² + (n − 2)α − target = 0.
    let b = n as f64 - 2.0;
    let alpha = 0.5 * (-b + (b * b + 4.0 * target).sqrt());
    Ok(GapConstants {
        n,
        d,
        sphere_eigenvalue,
        eta,
        delta: alpha - 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointClass {
    Regular,
    Singular,
    Unresolved,
}

impl PointClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PointClass::Regular => "Regular",
            PointClass::Singular => "Singular",
            PointClass::Unresolved => "Unresolved",
        }
    }
}

/// Splits at `1 + δ/2` with a dead band of width `2·tol`.
pub fn classify_point(alpha_hat: f64, delta: f64, tol: f64) -> PointClass {
    let mid = 1.0 + 0.5 * delta;
    if alpha_hat <= mid - tol {
        PointClass::Regular
    } else if alpha_hat >= mid + tol {
        PointClass::Singular
    } else {
        PointClass::Unresolved
    }
}
