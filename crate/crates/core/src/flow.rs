//! Time integration of the penalized, L²-constrained segregation flow
//!
//! ```text
//! ∂t u_j − Δu_j = λ_j(t) u_j − ∂F/∂u_j,   F(u) = ε⁻² Σ_{i<j} u_i² u_j²,
//! ∫ u_j² = c_j²,   u_j = 0 on ∂Ω,
//! ```
//!
//! with the multiplier
//! `λ_j = c_j⁻² ∫ (|∇u_j|² + 2 ε⁻² Σ_{i≠j} u_i² u_j²)`.
//!
//! Each step evaluates the reaction explicitly, solves the θ-implicit
//! diffusion with a factorization cached per `(dt, grid)`, clips negatives
//! and finally rescales every component back onto its constraint sphere.
//! Because the rescaling comes last, `∫ u_j² = c_j²` holds to rounding after
//! every step regardless of `dt`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    apply_laplacian, dirichlet_form, laplacian_into, weighted_dot, Grid, ScalarField,
};
use crate::linalg::ImplicitDiffusion;
use crate::par;
use crate::sigma::validate_initial;

/// Relative tolerance used when validating initial data.
pub const INITIAL_TOL: f64 = 1e-8;

/// Field size (nodes × components) above which per-component work is fanned out.
const PARALLEL_MIN_WORK: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeStep {
    /// Used as an upper bound; each stage rounds it down so its duration is
    /// an integer number of steps.
    Fixed(f64),
    /// `min(0.25 h², κ ε² / max|u|²)`, recomputed at the start of each stage.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    pub epsilon: f64,
    pub dt: TimeStep,
    pub t_end: f64,
    pub m: usize,
    pub c: Vec<f64>,
    pub theta: f64,
    pub clip_negative: bool,
    /// Penalty stiffness factor in the automatic step size.
    pub kappa: f64,
}

impl FlowParams {
    pub fn new(c: Vec<f64>, epsilon: f64, t_end: f64) -> Self {
        FlowParams {
            epsilon,
            dt: TimeStep::Auto,
            t_end,
            m: c.len(),
            c,
            theta: 1.0,
            clip_negative: true,
            kappa: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.c.len() != self.m {
            return Err(Error::Config(format!(
                "m = {} but {} constraint values given",
                self.m,
                self.c.len()
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if let Some(c) = self.c.iter().find(|&&c| !(c > 0.0)) {
            return Err(Error::Config(format!("constraint values must be positive, got {c}")));
        }
        if let TimeStep::Fixed(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must lie in [1/2, 1], got {}", self.theta)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config("kappa must be positive".into()));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::Config("t_end must be nonnegative".into()));
        }
        Ok(())
    }

    /// Automatic (or capped fixed) step size for a stage starting from `u`.
    pub fn step_cap(&self, grid: &Grid, u: &[ScalarField]) -> f64 {
        match self.dt {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Auto => {
                let h = grid.min_spacing();
                let mut dt = 0.25 * h * h;
                if self.m > 1 {
                    let sup = u.iter().map(|f| f.sup_abs()).fold(0.0, f64::max);
                    if sup > 0.0 {
                        dt = dt.min(self.kappa * self.epsilon * self.epsilon / (sup * sup));
                    }
                }
                dt
            }
        }
    }
}

/// `|∇u|²` by central differences on interior nodes, 0 elsewhere.
pub fn grad_sq_density(u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let v = u.values();
    let mut out = vec![0.0; grid.len()];
    let strides: Vec<usize> = (0..grid.dim()).map(|a| grid.stride(a)).collect();
    let inv_2h: Vec<f64> = grid.spacing().iter().map(|h| 0.5 / h).collect();
    for &n in grid.interior_nodes() {
        let mut acc = 0.0;
        for a in 0..grid.dim() {
            let d = (v[n + strides[a]] - v[n - strides[a]]) * inv_2h[a];
            acc += d * d;
        }
        out[n] = acc;
    }
    ScalarField::from_values(grid, out).expect("same grid")
}

/// Penalty density `F = ε⁻² Σ_{i<j} u_i² u_j²`.
pub fn penalty_f(u: &[ScalarField], epsilon: f64) -> ScalarField {
    let grid = u[0].grid();
    let inv_eps2 = 1.0 / (epsilon * epsilon);
    let mut out = vec![0.0; grid.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..u.len() {
            let ui = u[i].values()[n];
            for uj in &u[i + 1..] {
                let uj = uj.values()[n];
                acc += ui * ui * uj * uj;
            }
        }
        *o = inv_eps2 * acc;
    }
    ScalarField::from_values(grid, out).expect("same grid")
}

/// Pairwise overlap integrals `∫ u_i² u_j²`, row-major `m × m`, zero diagonal.
fn overlap_matrix(u: &[ScalarField]) -> Vec<f64> {
    let m = u.len();
    let mut x = vec![0.0; m * m];
    if m < 2 {
        return x;
    }
    let grid = u[0].grid();
    let w = grid.quad_weight();
    for i in 0..m {
        for j in (i + 1)..m {
            let s: f64 = u[i]
                .values()
                .iter()
                .zip(u[j].values())
                .zip(w)
                .map(|((a, b), w)| a * a * b * b * w)
                .sum();
            x[i * m + j] = s;
            x[j * m + i] = s;
        }
    }
    x
}

/// Multipliers `λ_j = c_j⁻² (∫|∇u_j|² + 2 ε⁻² Σ_{i≠j} ∫ u_i² u_j²)`, using
/// the discrete Dirichlet form for the gradient term.
pub fn lambda_eps(u: &[ScalarField], epsilon: f64, c: &[f64]) -> Vec<f64> {
    let energies: Vec<f64> = u.iter().map(dirichlet_form).collect();
    multipliers(&energies, &overlap_matrix(u), epsilon, c)
}

fn multipliers(energies: &[f64], overlap: &[f64], epsilon: f64, c: &[f64]) -> Vec<f64> {
    let m = energies.len();
    let inv_eps2 = 1.0 / (epsilon * epsilon);
    (0..m)
        .map(|j| {
            let cross: f64 = (0..m).filter(|&i| i != j).map(|i| overlap[i * m + j]).sum();
            (energies[j] + 2.0 * inv_eps2 * cross) / (c[j] * c[j])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Vec<ScalarField>,
    pub t: f64,
    pub epsilon: f64,
    pub lambda: Vec<f64>,
    /// `Σ_j ∫ |∇u_j|²`.
    pub dirichlet_energy: f64,
    /// `2 ∫ F`.
    pub penalty_energy: f64,
    /// `max_{i≠j} ∫ u_i² u_j²`.
    pub max_overlap: f64,
}

impl FlowState {
    pub fn new(u: Vec<ScalarField>, t: f64, epsilon: f64, c: &[f64]) -> Result<Self> {
        if u.is_empty() || u.len() != c.len() {
            return Err(Error::Usage(format!("{} fields for {} constraints", u.len(), c.len())));
        }
        for f in &u[1..] {
            crate::grid::check_same(&u[0], f)?;
        }
        let energies: Vec<f64> = u.iter().map(dirichlet_form).collect();
        let overlap = overlap_matrix(&u);
        let lambda = multipliers(&energies, &overlap, epsilon, c);
        let m = u.len();
        let pair_sum: f64 = (0..m)
            .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
            .map(|(i, j)| overlap[i * m + j])
            .sum();
        Ok(FlowState {
            t,
            epsilon,
            lambda,
            dirichlet_energy: energies.iter().sum(),
            penalty_energy: 2.0 * pair_sum / (epsilon * epsilon),
            max_overlap: overlap.iter().cloned().fold(0.0, f64::max),
            u,
        })
    }

    pub fn total_energy(&self) -> f64 {
        self.dirichlet_energy + self.penalty_energy
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u[0].grid()
    }

    pub fn m(&self) -> usize {
        self.u.len()
    }

    /// Max over components of `|∫ u_j² − c_j²| / c_j²`.
    pub fn constraint_error(&self, c: &[f64]) -> f64 {
        self.u
            .iter()
            .zip(c)
            .map(|(f, cj)| {
                let ns = weighted_dot(f.grid(), f.values(), f.values());
                (ns - cj * cj).abs() / (cj * cj)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub stage: usize,
    pub epsilon: f64,
    pub lambda: Vec<f64>,
    pub dirichlet_energy: f64,
    pub penalty_energy: f64,
    pub total_energy: f64,
    pub max_overlap: f64,
    /// `∫` of the negative part removed by clipping in this step.
    pub clip_mass: f64,
    /// Max over components of `|∫u_j² − c_j²| / c_j²`.
    pub constraint_error: f64,
    /// `E(t) + Σ dt ∫|∂t u|² − E(stage start)`; nonpositive for an
    /// energy-dissipating scheme.
    pub energy_residual: f64,
    /// `∫ (λ_j u_j − ∂t u_j + Δu_j)` over the near-zero set of `u_j`: the
    /// discrete stand-in for the defect measures of the limit problem.
    pub defect_mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    pub epsilon: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
    /// Index into the series of the record opening this stage.
    pub first_record: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Arc<Grid>,
    pub c: Vec<f64>,
    pub snapshot_stride: usize,
    pub snapshots: Vec<FlowState>,
    pub series: Vec<StepRecord>,
    pub stages: Vec<StageInfo>,
}

impl Trajectory {
    pub fn final_state(&self) -> &FlowState {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.snapshots[0].t, self.final_state().t)
    }

    pub fn components(&self) -> usize {
        self.c.len()
    }

    /// Fields at time `t`, linearly interpolated between snapshots.
    pub fn slice_at(&self, t: f64) -> Result<Vec<ScalarField>> {
        let (t0, t1) = self.time_range();
        let tol = 1e-12 * t1.abs().max(1.0);
        if t < t0 - tol || t > t1 + tol {
            return Err(Error::Range(format!("t = {t} outside the trajectory range [{t0}, {t1}]")));
        }
        let k = self.snapshots.partition_point(|s| s.t <= t);
        if k == 0 {
            return Ok(self.snapshots[0].u.clone());
        }
        if k == self.snapshots.len() {
            return Ok(self.final_state().u.clone());
        }
        let (a, b) = (&self.snapshots[k - 1], &self.snapshots[k]);
        let w = (t - a.t) / (b.t - a.t);
        if w == 0.0 {
            return Ok(a.u.clone());
        }
        a.u.iter()
            .zip(&b.u)
            .map(|(fa, fb)| fa.zip_with(fb, |x, y| (1.0 - w) * x + w * y))
            .collect()
    }

    /// `(t, λ_1..λ_m)` for every recorded step.
    pub fn lambda_series(&self) -> Vec<(f64, Vec<f64>)> {
        self.series.iter().map(|r| (r.t, r.lambda.clone())).collect()
    }

    /// The part of the trajectory belonging to stage `k`.
    pub fn stage(&self, k: usize) -> Result<Trajectory> {
        let info = self
            .stages
            .get(k)
            .ok_or_else(|| Error::Range(format!("no stage {k}")))?
            .clone();
        let first = info.first_record;
        let last = self
            .stages
            .get(k + 1)
            .map_or(self.series.len(), |s| s.first_record);
        let snapshots: Vec<FlowState> = self
            .snapshots
            .iter()
            .filter(|s| s.t >= info.t_start && s.t <= info.t_end)
            .cloned()
            .collect();
        if snapshots.is_empty() {
            return Err(Error::Range(format!("stage {k} has no snapshots")));
        }
        Ok(Trajectory {
            grid: self.grid.clone(),
            c: self.c.clone(),
            snapshot_stride: self.snapshot_stride,
            snapshots,
            series: self.series[first..last].to_vec(),
            stages: vec![StageInfo { first_record: 0, ..info }],
        })
    }
}

struct StepOutput {
    state: FlowState,
    clip_mass: f64,
    kinetic: f64,
    defect_mass: Vec<f64>,
}

/// Advances a flow at fixed `(dt, ε)`; owns the cached diffusion factor.
pub struct Stepper {
    grid: Arc<Grid>,
    params: FlowParams,
    dt: f64,
    solver: ImplicitDiffusion,
}

impl Stepper {
    pub fn new(grid: &Arc<Grid>, params: &FlowParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let solver = ImplicitDiffusion::new(grid, params.theta * dt)?;
        Ok(Stepper {
            grid: grid.clone(),
            params: params.clone(),
            dt,
            solver,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &FlowState) -> Result<FlowState> {
        self.advance(state).map(|o| o.state)
    }

    fn advance(&self, state: &FlowState) -> Result<StepOutput> {
        let grid = &*self.grid;
        let p = &self.params;
        let m = state.m();
        let dt = self.dt;
        let inv_eps2 = 1.0 / (p.epsilon * p.epsilon);
        let len = grid.len();

        // Σ_i u_i² per node, shared by every component's reaction term.
        let mut sq_sum = vec![0.0; len];
        for f in &state.u {
            for (s, v) in sq_sum.iter_mut().zip(f.values()) {
                *s += v * v;
            }
        }

        let component = |j: usize| -> Result<(Vec<f64>, f64)> {
            let u = state.u[j].values();
            let lam = state.lambda[j];
            let mut rhs = vec![0.0; len];
            for &n in grid.interior_nodes() {
                let others = sq_sum[n] - u[n] * u[n];
                let reaction = lam * u[n] - 2.0 * inv_eps2 * u[n] * others;
                rhs[n] = u[n] + dt * reaction;
            }
            if p.theta < 1.0 {
                let mut lap = vec![0.0; len];
                laplacian_into(grid, u, &mut lap);
                for &n in grid.interior_nodes() {
                    rhs[n] += dt * (1.0 - p.theta) * lap[n];
                }
            }
            let mut next = vec![0.0; len];
            self.solver.solve(grid, &rhs, &mut next);
            let mut clipped = 0.0;
            if p.clip_negative {
                for (v, w) in next.iter_mut().zip(grid.quad_weight()) {
                    if *v < 0.0 {
                        clipped -= *v * w;
                        *v = 0.0;
                    }
                }
            }
            let ns = weighted_dot(grid, &next, &next);
            if !(ns > 0.0) || !ns.is_finite() {
                return Err(Error::DegenerateComponent {
                    component: j,
                    t: state.t,
                });
            }
            let s = p.c[j] / ns.sqrt();
            next.iter_mut().for_each(|v| *v *= s);
            Ok((next, clipped))
        };

        let results: Vec<Result<(Vec<f64>, f64)>> = if m > 1 && m * len >= PARALLEL_MIN_WORK {
            par::map_range(m, component)
        } else {
            (0..m).map(component).collect()
        };
        let mut u_next = Vec::with_capacity(m);
        let mut clip_mass = 0.0;
        for r in results {
            let (vals, clipped) = r?;
            clip_mass += clipped;
            u_next.push(ScalarField::from_values(&self.grid, vals)?);
        }
        let next = FlowState::new(u_next, state.t + dt, p.epsilon, &p.c)?;

        let mut kinetic = 0.0;
        let mut defect_mass = vec![0.0; m];
        for j in 0..m {
            let (old, new) = (state.u[j].values(), next.u[j].values());
            let lap = apply_laplacian(&next.u[j]);
            let sup = next.u[j].sup_abs();
            let w = grid.quad_weight();
            for &n in grid.interior_nodes() {
                let ut = (new[n] - old[n]) / dt;
                kinetic += ut * ut * w[n];
                if new[n] < 0.1 * sup {
                    defect_mass[j] += (next.lambda[j] * new[n] - ut + lap.values()[n]) * w[n];
                }
            }
        }
        Ok(StepOutput {
            state: next,
            clip_mass,
            kinetic,
            defect_mass,
        })
    }
}

/// One step of the flow with the step size implied by `params`.
pub fn step(state: &FlowState, params: &FlowParams) -> Result<FlowState> {
    let dt = params.step_cap(state.grid(), &state.u);
    Stepper::new(state.grid(), params, dt)?.step(state)
}

/// A stage of an ε-continuation: run at `epsilon` until absolute time `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsStage {
    pub epsilon: f64,
    pub t_end: f64,
}

impl EpsStage {
    /// Splits `[0, t_end]` into equal stages, one per entry of `eps`.
    pub fn uniform(eps: &[f64], t_end: f64) -> Vec<EpsStage> {
        let k = eps.len() as f64;
        eps.iter()
            .enumerate()
            .map(|(i, &epsilon)| EpsStage {
                epsilon,
                t_end: t_end * (i + 1) as f64 / k,
            })
            .collect()
    }
}

/// Runs the flow from `g` to `params.t_end`.
pub fn run_flow(g: &[ScalarField], params: &FlowParams, snapshot_stride: usize) -> Result<Trajectory> {
    let stage = EpsStage {
        epsilon: params.epsilon,
        t_end: params.t_end,
    };
    run_stages(g, params, &[stage], snapshot_stride).map_err(|e| match e {
        Error::Stage { source, .. } => *source,
        other => other,
    })
}

/// Runs the flow piecewise over a strictly decreasing ε schedule, each
/// stage warm-started from the previous terminal state.
pub fn epsilon_continuation(
    g: &[ScalarField],
    params: &FlowParams,
    schedule: &[EpsStage],
    snapshot_stride: usize,
) -> Result<Trajectory> {
    if schedule.is_empty() {
        return Err(Error::Config("empty epsilon schedule".into()));
    }
    for w in schedule.windows(2) {
        if !(w[1].epsilon < w[0].epsilon) {
            return Err(Error::Config(format!(
                "epsilon schedule must be strictly decreasing ({} then {})",
                w[0].epsilon, w[1].epsilon
            )));
        }
        if !(w[1].t_end > w[0].t_end) {
            return Err(Error::Config("stage end times must be strictly increasing".into()));
        }
    }
    run_stages(g, params, schedule, snapshot_stride)
}

fn run_stages(
    g: &[ScalarField],
    params: &FlowParams,
    schedule: &[EpsStage],
    snapshot_stride: usize,
) -> Result<Trajectory> {
    params.validate()?;
    if snapshot_stride == 0 {
        return Err(Error::Config("snapshot stride must be >= 1".into()));
    }
    if g.len() != params.m {
        return Err(Error::Config(format!("{} initial fields for m = {}", g.len(), params.m)));
    }
    let check = validate_initial(g, &params.c, INITIAL_TOL);
    if !check.passed() {
        return Err(Error::InvalidInitial(check));
    }
    let grid = g[0].grid().clone();
    let mut traj = Trajectory {
        grid: grid.clone(),
        c: params.c.clone(),
        snapshot_stride,
        snapshots: Vec::new(),
        series: Vec::new(),
        stages: Vec::new(),
    };
    let mut u = g.to_vec();
    let mut t = 0.0;
    let mut step_index = 0usize;
    for (k, stage) in schedule.iter().enumerate() {
        let wrap = |e: Error| Error::Stage {
            stage: k,
            epsilon: stage.epsilon,
            source: Box::new(e),
        };
        if k > 0 {
            revalidate(&u, &params.c).map_err(wrap)?;
        }
        let stage_params = FlowParams {
            epsilon: stage.epsilon,
            t_end: stage.t_end,
            ..params.clone()
        };
        stage_params.validate().map_err(wrap)?;
        let state = FlowState::new(u, t, stage.epsilon, &params.c).map_err(wrap)?;
        let end = run_stage(&mut traj, state, &stage_params, k, &mut step_index).map_err(wrap)?;
        t = end.t;
        u = end.u;
    }
    Ok(traj)
}

fn revalidate(u: &[ScalarField], c: &[f64]) -> Result<()> {
    for (j, (f, &cj)) in u.iter().zip(c).enumerate() {
        let ns = weighted_dot(f.grid(), f.values(), f.values());
        if !(ns > 0.0) || !ns.is_finite() {
            return Err(Error::DegenerateComponent { component: j, t: f64::NAN });
        }
        if (ns - cj * cj).abs() > INITIAL_TOL * cj * cj {
            return Err(Error::Numerical(format!(
                "component {j} left its constraint sphere ({ns} vs {})",
                cj * cj
            )));
        }
        if f.values().iter().any(|&v| v < 0.0) {
            return Err(Error::Numerical(format!("component {j} has negative values")));
        }
    }
    Ok(())
}

fn run_stage(
    traj: &mut Trajectory,
    mut state: FlowState,
    params: &FlowParams,
    stage: usize,
    step_index: &mut usize,
) -> Result<FlowState> {
    let duration = params.t_end - state.t;
    if duration < 0.0 {
        return Err(Error::Config(format!(
            "stage ends at {} before it starts at {}",
            params.t_end, state.t
        )));
    }
    let cap = params.step_cap(&traj.grid, &state.u);
    let steps = if duration > 0.0 { (duration / cap).ceil().max(1.0) as usize } else { 0 };
    let dt = if steps > 0 { duration / steps as f64 } else { cap };
    let t_start = state.t;
    let e_start = state.total_energy();
    traj.stages.push(StageInfo {
        epsilon: params.epsilon,
        t_start,
        t_end: params.t_end,
        dt,
        steps,
        first_record: traj.series.len(),
    });
    traj.series.push(record(&state, &traj.c, *step_index, stage, 0.0, 0.0, vec![0.0; state.m()]));
    if traj.snapshots.last().is_none_or(|s| s.t < state.t) {
        traj.snapshots.push(state.clone());
    }
    if steps == 0 {
        return Ok(state);
    }
    let stepper = Stepper::new(&traj.grid, params, dt)?;
    let mut dissipated = 0.0;
    for i in 1..=steps {
        let mut out = stepper.advance(&state)?;
        if i == steps {
            out.state.t = params.t_end;
        } else {
            out.state.t = t_start + i as f64 * dt;
        }
        dissipated += dt * out.kinetic;
        *step_index += 1;
        let residual = out.state.total_energy() + dissipated - e_start;
        traj.series.push(record(
            &out.state,
            &traj.c,
            *step_index,
            stage,
            out.clip_mass,
            residual,
            out.defect_mass,
        ));
        state = out.state;
        if step_index.is_multiple_of(traj.snapshot_stride) || i == steps {
            traj.snapshots.push(state.clone());
        }
    }
    Ok(state)
}

fn record(
    s: &FlowState,
    c: &[f64],
    step: usize,
    stage: usize,
    clip_mass: f64,
    energy_residual: f64,
    defect_mass: Vec<f64>,
) -> StepRecord {
    StepRecord {
        step,
        t: s.t,
        stage,
        epsilon: s.epsilon,
        lambda: s.lambda.clone(),
        dirichlet_energy: s.dirichlet_energy,
        penalty_energy: s.penalty_energy,
        total_energy: s.total_energy(),
        max_overlap: s.max_overlap,
        clip_mass,
        constraint_error: s.constraint_error(c),
        energy_residual,
        defect_mass,
    }
}

/// `∫_{t1}^{t2} ∫_Ω F dx dt` by the trapezoidal rule over the recorded steps.
pub fn segregation_integral(traj: &Trajectory, t1: f64, t2: f64) -> Result<f64> {
    let series = &traj.series;
    let (lo, hi) = (series[0].t, series[series.len() - 1].t);
    let tol = 1e-12 * hi.abs().max(1.0);
    if t1 > t2 || t1 < lo - tol || t2 > hi + tol {
        return Err(Error::Range(format!(
            "[{t1}, {t2}] is not a subinterval of [{lo}, {hi}]"
        )));
    }
    if t1 == t2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for w in series.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.t <= a.t {
            continue;
        }
        let s = a.t.max(t1);
        let e = b.t.min(t2);
        if e <= s {
            continue;
        }
        // ∫F = penalty_energy / 2, linear in time between records.
        let fa = 0.5 * a.penalty_energy;
        let fb = 0.5 * b.penalty_energy;
        let at = |t: f64| fa + (fb - fa) * (t - a.t) / (b.t - a.t);
        total += 0.5 * (at(s) + at(e)) * (e - s);
    }
    Ok(total)
}
