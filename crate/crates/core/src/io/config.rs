//! Run configuration, read from TOML. Every optional field has a default,
//! and [`RunConfig::resolve`] writes those defaults back so the emitted
//! `resolved_config.toml` reproduces the run on its own.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{EpsStage, FlowParams, TimeStep};
use crate::frequency::{gap_constants, RadiiPolicy, TargetMetric};
use crate::grid::{Geometry, Grid, ScalarField};
use crate::io::expr::Expr;
use crate::sigma::normalize_components;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the random pair scans; the flow itself is deterministic.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    pub flow: FlowSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub probe: ProbeSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default = "default_geometry")]
    pub geometry: Geometry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
}

fn default_geometry() -> Geometry {
    Geometry::Box
}

/// `dt = "auto"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DtRepr", into = "DtRepr")]
pub struct DtSpec(pub TimeStep);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DtRepr {
    Num(f64),
    Word(String),
}

impl TryFrom<DtRepr> for DtSpec {
    type Error = String;
    fn try_from(r: DtRepr) -> std::result::Result<Self, String> {
        match r {
            DtRepr::Num(v) => Ok(DtSpec(TimeStep::Fixed(v))),
            DtRepr::Word(w) if w == "auto" => Ok(DtSpec(TimeStep::Auto)),
            DtRepr::Word(w) => Err(format!("dt must be \"auto\" or a number, got {w:?}")),
        }
    }
}

impl From<DtSpec> for DtRepr {
    fn from(d: DtSpec) -> DtRepr {
        match d.0 {
            TimeStep::Fixed(v) => DtRepr::Num(v),
            TimeStep::Auto => DtRepr::Word("auto".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub m: usize,
    /// Constraint values; all ones by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    /// A single penalty parameter; exclusive with `eps_schedule`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_schedule: Option<Vec<f64>>,
    /// Absolute end time of each stage; by default `[0, t_end]` is split
    /// evenly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_ends: Option<Vec<f64>>,
    #[serde(default = "default_dt")]
    pub dt: DtSpec,
    pub t_end: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_true")]
    pub clip_negative: bool,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

fn default_dt() -> DtSpec {
    DtSpec(TimeStep::Auto)
}
fn default_theta() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_kappa() -> f64 {
    0.25
}
fn default_stride() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// One of [`PRESETS`]; exclusive with `components`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// One closed-form expression per component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<String>>,
    /// Where two-phase presets divide the first axis, as a fraction of its
    /// extent.
    #[serde(default = "default_split")]
    pub split: f64,
    /// Rescale each component onto its constraint before validation.
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn default_split() -> f64 {
    0.5
}

pub const PRESETS: &[&str] = &["tent", "ground_state", "two_phase_tent"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBase {
    pub x: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default)]
    pub bases: Vec<ProbeBase>,
    /// Explicit radii; default geometric from each base's boundary distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default = "default_metric")]
    pub metric: TargetMetric,
}

fn default_metric() -> TargetMetric {
    TargetMetric::Sigma
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            bases: Vec::new(),
            radii: None,
            metric: default_metric(),
        }
    }
}

impl ProbeSpec {
    pub fn radii_policy(&self) -> RadiiPolicy {
        match &self.radii {
            Some(r) => RadiiPolicy::Explicit(r.clone()),
            None => RadiiPolicy::Geometric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_plateau_rel_tol")]
    pub plateau_rel_tol: f64,
    #[serde(default = "default_plateau_window")]
    pub plateau_window: f64,
    /// Support threshold; default `10 · machine epsilon · sup|u|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface_threshold: Option<f64>,
    #[serde(default = "default_eig_tol")]
    pub eig_tol: f64,
    #[serde(default = "default_eig_max_iter")]
    pub eig_max_iter: usize,
    /// Frequency gap used to classify probes; default the planar
    /// three-phase gap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_delta: Option<f64>,
    #[serde(default = "default_class_tol")]
    pub class_tol: f64,
}

fn default_plateau_rel_tol() -> f64 {
    1e-4
}
fn default_plateau_window() -> f64 {
    0.2
}
fn default_eig_tol() -> f64 {
    1e-11
}
fn default_eig_max_iter() -> usize {
    2000
}
fn default_class_tol() -> f64 {
    0.02
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            plateau_rel_tol: default_plateau_rel_tol(),
            plateau_window: default_plateau_window(),
            interface_threshold: None,
            eig_tol: default_eig_tol(),
            eig_max_iter: default_eig_max_iter(),
            class_delta: None,
            class_tol: default_class_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("segflow-out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: default_dir() }
    }
}

impl RunConfig {
    /// Parses and resolves; TOML errors keep their line and column.
    pub fn from_toml_str(src: &str) -> Result<RunConfig> {
        let raw: RunConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        raw.resolve()
    }

    pub fn from_file(path: &std::path::Path) -> Result<RunConfig> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml_str(&src)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Checks cross-field constraints and fills every defaulted value.
    pub fn resolve(mut self) -> Result<RunConfig> {
        let g = &mut self.grid;
        let cfg = |field: &str, msg: String| Error::Config(format!("{field}: {msg}"));
        if g.dim != 1 && g.dim != 2 {
            return Err(cfg("grid.dim", format!("must be 1 or 2, got {}", g.dim)));
        }
        if g.extents.len() != g.dim {
            return Err(cfg("grid.extents", format!("expected {} entries", g.dim)));
        }
        if g.counts.len() != g.dim {
            return Err(cfg("grid.counts", format!("expected {} entries", g.dim)));
        }
        if g.origin.is_none() {
            g.origin = Some(vec![0.0; g.dim]);
        }

        let f = &mut self.flow;
        if f.m == 0 {
            return Err(cfg("flow.m", "must be at least 1".into()));
        }
        let c = f.c.get_or_insert_with(|| vec![1.0; f.m]);
        if c.len() != f.m {
            return Err(cfg("flow.c", format!("expected {} entries, got {}", f.m, c.len())));
        }
        let schedule = match (f.epsilon.take(), f.eps_schedule.take()) {
            (Some(e), None) => vec![e],
            (None, Some(s)) if !s.is_empty() => s,
            (None, Some(_)) => return Err(cfg("flow.eps_schedule", "is empty".into())),
            (None, None) => return Err(cfg("flow.epsilon", "missing (or give flow.eps_schedule)".into())),
            (Some(_), Some(_)) => {
                return Err(cfg("flow.epsilon", "give either epsilon or eps_schedule, not both".into()))
            }
        };
        if !(f.t_end > 0.0) {
            return Err(cfg("flow.t_end", format!("must be positive, got {}", f.t_end)));
        }
        let ends = match f.stage_ends.take() {
            Some(e) => {
                if e.len() != schedule.len() {
                    return Err(cfg("flow.stage_ends", format!("expected {} entries", schedule.len())));
                }
                if (e[e.len() - 1] - f.t_end).abs() > 1e-12 * f.t_end {
                    return Err(cfg("flow.stage_ends", "last entry must equal flow.t_end".into()));
                }
                e
            }
            None => EpsStage::uniform(&schedule, f.t_end).iter().map(|s| s.t_end).collect(),
        };
        f.eps_schedule = Some(schedule);
        f.stage_ends = Some(ends);
        if f.snapshot_stride == 0 {
            return Err(cfg("flow.snapshot_stride", "must be at least 1".into()));
        }

        let i = &self.initial;
        match (&i.preset, &i.components) {
            (Some(p), None) => {
                if !PRESETS.contains(&p.as_str()) {
                    return Err(cfg("initial.preset", format!("unknown preset {p:?}; known: {PRESETS:?}")));
                }
            }
            (None, Some(c)) => {
                if c.len() != self.flow.m {
                    return Err(cfg("initial.components", format!("expected {} expressions", self.flow.m)));
                }
                for e in c {
                    Expr::parse(e, self.grid.dim)?;
                }
            }
            _ => return Err(cfg("initial", "give exactly one of preset or components".into())),
        }
        if !(i.split > 0.0 && i.split < 1.0) {
            return Err(cfg("initial.split", format!("must lie in (0, 1), got {}", i.split)));
        }

        for (k, b) in self.probe.bases.iter().enumerate() {
            if b.x.len() != self.grid.dim {
                return Err(cfg(&format!("probe.bases[{k}].x"), format!("expected {} entries", self.grid.dim)));
            }
        }
        if self.analysis.class_delta.is_none() {
            self.analysis.class_delta = Some(gap_constants(2, 3)?.delta);
        }
        // Fail early on a broken flow block.
        self.flow_params().validate()?;
        self.build_grid()?;
        Ok(self)
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        let g = &self.grid;
        let origin = g.origin.clone().unwrap_or_else(|| vec![0.0; g.dim]);
        Grid::new(g.dim, &origin, &g.extents, &g.counts, g.geometry).map(Arc::new)
    }

    /// Parameters of the first stage; stage values come from [`Self::schedule`].
    pub fn flow_params(&self) -> FlowParams {
        let f = &self.flow;
        let c = f.c.clone().unwrap_or_else(|| vec![1.0; f.m]);
        let eps = f.eps_schedule.as_ref().and_then(|s| s.first().copied()).or(f.epsilon).unwrap_or(f64::NAN);
        FlowParams {
            epsilon: eps,
            dt: f.dt.0,
            t_end: f.t_end,
            m: f.m,
            c,
            theta: f.theta,
            clip_negative: f.clip_negative,
            kappa: f.kappa,
        }
    }

    pub fn schedule(&self) -> Vec<EpsStage> {
        let f = &self.flow;
        let eps = f.eps_schedule.clone().unwrap_or_default();
        let ends = f.stage_ends.clone().unwrap_or_default();
        eps.into_iter()
            .zip(ends)
            .map(|(epsilon, t_end)| EpsStage { epsilon, t_end })
            .collect()
    }

    pub fn initial_fields(&self, grid: &Arc<Grid>) -> Result<Vec<ScalarField>> {
        let m = self.flow.m;
        let i = &self.initial;
        let origin = grid.origin().to_vec();
        let ext = grid.extents().to_vec();
        // Coordinates scaled to the unit box.
        let unit = move |x: &[f64]| -> Vec<f64> {
            x.iter().zip(&origin).zip(&ext).map(|((v, o), l)| (v - o) / l).collect()
        };
        let tent = |s: f64, lo: f64, hi: f64| -> f64 {
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            (1.0 - (s - mid).abs() / half).max(0.0)
        };
        let mut fields: Vec<ScalarField> = match (&i.preset, &i.components) {
            (Some(p), _) => match p.as_str() {
                "tent" | "ground_state" => {
                    let shape = |s: &[f64]| -> f64 {
                        s.iter()
                            .map(|&v| {
                                if p == "tent" {
                                    tent(v, 0.0, 1.0)
                                } else {
                                    (std::f64::consts::PI * v).sin()
                                }
                            })
                            .product()
                    };
                    (0..m)
                        .map(|_| ScalarField::from_fn(grid, |x| shape(&unit(x))))
                        .collect()
                }
                "two_phase_tent" => {
                    if m != 2 {
                        return Err(Error::Config(format!("initial.preset: two_phase_tent needs m = 2, got {m}")));
                    }
                    let a = i.split;
                    let phase = |s: &[f64], lo: f64, hi: f64| -> f64 {
                        tent(s[0], lo, hi) * s[1..].iter().map(|&v| tent(v, 0.0, 1.0)).product::<f64>()
                    };
                    vec![
                        ScalarField::from_fn(grid, |x| phase(&unit(x), 0.0, a)),
                        ScalarField::from_fn(grid, |x| phase(&unit(x), a, 1.0)),
                    ]
                }
                other => return Err(Error::Config(format!("initial.preset: unknown preset {other:?}"))),
            },
            (None, Some(exprs)) => exprs
                .iter()
                .map(|s| {
                    let e = Expr::parse(s, grid.dim())?;
                    Ok(ScalarField::from_fn(grid, |x| e.eval(x)))
                })
                .collect::<Result<_>>()?,
            (None, None) => return Err(Error::Config("initial: no preset or components".into())),
        };
        if i.normalize {
            let c = self.flow.c.clone().unwrap_or_else(|| vec![1.0; m]);
            normalize_components(&mut fields, &c)?;
        }
        Ok(fields)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
dim = 1
extents = [1.0]
counts = [101]

[flow]
m = 1
epsilon = 0.1
t_end = 0.5

[initial]
preset = "tent"
"#;

    #[test]
    fn defaults_are_resolved_and_round_trip() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.flow.c, Some(vec![1.0]));
        assert_eq!(cfg.flow.eps_schedule, Some(vec![0.1]));
        assert_eq!(cfg.flow.stage_ends, Some(vec![0.5]));
        assert_eq!(cfg.flow.dt, DtSpec(TimeStep::Auto));
        assert!(cfg.analysis.class_delta.is_some());
        let text = cfg.to_toml_string().unwrap();
        let again = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn missing_counts_names_the_field() {
        let src = MINIMAL.replace("counts = [101]\n", "");
        let msg = RunConfig::from_toml_str(&src).unwrap_err().to_string();
        assert!(msg.contains("counts"), "{msg}");
    }

    #[test]
    fn bad_values_are_rejected() {
        for (from, to) in [
            ("epsilon = 0.1", "epsilon = 0.1\neps_schedule = [0.1]"),
            ("preset = \"tent\"", "preset = \"nope\""),
            ("m = 1", "m = 0"),
            ("t_end = 0.5", "t_end = 0.5\ndt = \"fast\""),
            ("preset = \"tent\"", "components = [\"sin(pi*y)\"]"),
            ("dim = 1", "dim = 1\nbogus = 3"),
        ] {
            let src = MINIMAL.replace(from, to);
            assert!(matches!(RunConfig::from_toml_str(&src), Err(Error::Config(_))), "{to}");
        }
    }

    #[test]
    fn presets_are_normalized() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        let g = cfg.build_grid().unwrap();
        let u = cfg.initial_fields(&g).unwrap();
        assert!((crate::grid::l2_norm_sq(&u[0]) - 1.0).abs() < 1e-14);
    }
}
