//! The singular target Σ: m nonnegative coordinate half-lines glued at the
//! origin. A point of Σ has at most one strictly positive component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{l2_norm_sq, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoint {
    comps: Vec<f64>,
}

impl SigmaPoint {
    pub fn new(comps: Vec<f64>) -> Result<Self> {
        if comps.iter().any(|&c| c < 0.0 || !c.is_finite()) {
            return Err(Error::Domain(format!("negative or non-finite component in {comps:?}")));
        }
        if comps.iter().filter(|&&c| c > 0.0).count() > 1 {
            return Err(Error::Domain(format!("{comps:?} has two positive components")));
        }
        Ok(SigmaPoint { comps })
    }

    pub fn origin(m: usize) -> Self {
        SigmaPoint { comps: vec![0.0; m] }
    }

    pub fn comps(&self) -> &[f64] {
        &self.comps
    }

    /// The active line and the distance from the origin along it.
    pub fn line(&self) -> Option<(usize, f64)> {
        self.comps
            .iter()
            .enumerate()
            .find(|(_, &c)| c > 0.0)
            .map(|(j, &c)| (j, c))
    }

    pub fn norm(&self) -> f64 {
        self.line().map_or(0.0, |(_, r)| r)
    }
}

/// Intrinsic distance: Euclidean along a shared line, |p| + |q| across lines.
pub fn d_sigma(p: &SigmaPoint, q: &SigmaPoint) -> Result<f64> {
    if p.comps.len() != q.comps.len() {
        return Err(Error::Usage("points have different component counts".into()));
    }
    Ok(d_sigma_raw(&p.comps, &q.comps))
}

/// `d_sigma` on slices already known to lie in Σ.
pub(crate) fn d_sigma_raw(p: &[f64], q: &[f64]) -> f64 {
    let lp = p.iter().position(|&c| c > 0.0);
    let lq = q.iter().position(|&c| c > 0.0);
    match (lp, lq) {
        (None, None) => 0.0,
        (Some(i), None) => p[i],
        (None, Some(j)) => q[j],
        (Some(i), Some(j)) if i == j => (p[i] - q[i]).abs(),
        (Some(i), Some(j)) => p[i] + q[j],
    }
}

fn argmax_lowest(y: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &v) in y.iter().enumerate() {
        match best {
            Some(b) if y[b] >= v => {}
            _ => best = Some(j),
        }
    }
    best
}

/// Keeps the largest component (after clipping negatives), zeros the rest.
/// Ties go to the lowest index.
pub fn project_sigma(y: &[f64]) -> SigmaPoint {
    let clipped: Vec<f64> = y.iter().map(|&v| v.max(0.0)).collect();
    let mut comps = vec![0.0; y.len()];
    if let Some(j) = argmax_lowest(&clipped) {
        comps[j] = clipped[j];
    }
    SigmaPoint { comps }
}

/// Continuous retraction onto Σ: the leading component minus the runner-up,
/// everything else zero. Identity on Σ; unlike [`project_sigma`] it does not
/// jump where two components tie, so it is the map used to read a
/// penalized (slightly overlapping) state as a Σ-valued field.
pub fn retract_sigma(y: &[f64]) -> SigmaPoint {
    let clipped: Vec<f64> = y.iter().map(|&v| v.max(0.0)).collect();
    let mut comps = vec![0.0; y.len()];
    if let Some(j) = argmax_lowest(&clipped) {
        let runner_up = clipped
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, &v)| v)
            .fold(0.0, f64::max);
        comps[j] = clipped[j] - runner_up;
    }
    SigmaPoint { comps }
}

/// Applies a pointwise Σ map node by node.
pub fn map_fields(fields: &[ScalarField], f: impl Fn(&[f64]) -> SigmaPoint) -> Vec<ScalarField> {
    let Some(first) = fields.first() else {
        return Vec::new();
    };
    let m = fields.len();
    let mut out: Vec<ScalarField> = fields.iter().map(|f| ScalarField::zeros(f.grid())).collect();
    let mut y = vec![0.0; m];
    for n in 0..first.grid().len() {
        for j in 0..m {
            y[j] = fields[j].values()[n];
        }
        let p = f(&y);
        for j in 0..m {
            out[j].values_mut()[n] = p.comps[j];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    Overlap { node: usize, value: f64 },
    Negative { node: usize, component: usize, value: f64 },
    Constraint { component: usize, integral: f64, target: f64 },
    ComponentCount { fields: usize, constraints: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaFieldCheck {
    /// Max over nodes of the second-largest component.
    pub max_overlap: f64,
    /// `-min` over nodes and components (positive when something is negative).
    pub negative_mass: f64,
    /// `∫ g_j²` per component.
    pub norms_sq: Vec<f64>,
    pub violations: Vec<Violation>,
}

impl SigmaFieldCheck {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn describe(&self) -> String {
        if self.violations.is_empty() {
            return "ok".into();
        }
        self.violations
            .iter()
            .map(|v| match v {
                Violation::Overlap { node, value } => {
                    format!("supports overlap at node {node} (second component {value:e})")
                }
                Violation::Negative { node, component, value } => {
                    format!("component {component} is negative ({value:e}) at node {node}")
                }
                Violation::Constraint { component, integral, target } => {
                    format!("component {component}: integral of square {integral} != c^2 = {target}")
                }
                Violation::ComponentCount { fields, constraints } => {
                    format!("{fields} fields but {constraints} constraint values")
                }
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Checks that `g` is Σ-valued and satisfies `∫ g_j² = c_j²`.
///
/// Overlap and negativity are measured against `tol · sup|g|` and the norm
/// constraint against `tol · c_j²`, so `tol` is relative throughout.
/// Only the first offending node of each kind is listed.
pub fn validate_initial(g: &[ScalarField], c: &[f64], tol: f64) -> SigmaFieldCheck {
    let mut violations = Vec::new();
    if g.len() != c.len() {
        violations.push(Violation::ComponentCount {
            fields: g.len(),
            constraints: c.len(),
        });
    }
    let sup = g.iter().map(|f| f.sup_abs()).fold(0.0, f64::max);
    let scale = if sup > 0.0 { sup } else { 1.0 };
    let mut max_overlap: f64 = 0.0;
    let mut negative_mass: f64 = 0.0;
    let mut first_overlap = None;
    let mut first_negative = None;
    if let Some(first) = g.first() {
        let mut y = vec![0.0; g.len()];
        for n in 0..first.grid().len() {
            for (j, f) in g.iter().enumerate() {
                y[j] = f.values()[n];
                if -y[j] > negative_mass {
                    negative_mass = -y[j];
                }
                if -y[j] > tol * scale && first_negative.is_none() {
                    first_negative = Some(Violation::Negative {
                        node: n,
                        component: j,
                        value: y[j],
                    });
                }
            }
            let second = second_largest(&y);
            if second > max_overlap {
                max_overlap = second;
            }
            if second > tol * scale && first_overlap.is_none() {
                first_overlap = Some(Violation::Overlap { node: n, value: second });
            }
        }
    }
    violations.extend(first_overlap);
    violations.extend(first_negative);
    let norms_sq: Vec<f64> = g.iter().map(l2_norm_sq).collect();
    for (j, (&ns, &cj)) in norms_sq.iter().zip(c).enumerate() {
        let target = cj * cj;
        if !(cj > 0.0) || (ns - target).abs() > tol * target {
            violations.push(Violation::Constraint {
                component: j,
                integral: ns,
                target,
            });
        }
    }
    SigmaFieldCheck {
        max_overlap,
        negative_mass,
        norms_sq,
        violations,
    }
}

fn second_largest(y: &[f64]) -> f64 {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in y {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    if second.is_finite() {
        second
    } else {
        0.0
    }
}

/// Rescales each component so that `∫ g_j² = c_j²`.
pub fn normalize_components(g: &mut [ScalarField], c: &[f64]) -> Result<()> {
    for (j, (f, &cj)) in g.iter_mut().zip(c).enumerate() {
        let ns = l2_norm_sq(f);
        if !(ns > 0.0) {
            return Err(Error::Domain(format!("component {j} is identically zero")));
        }
        let s = cj / ns.sqrt();
        for v in f.values_mut() {
            *v *= s;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Geometry};
    use std::f64::consts::PI;

    fn p(v: &[f64]) -> SigmaPoint {
        SigmaPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn metric_examples() {
        assert_eq!(d_sigma(&p(&[2.0, 0.0, 0.0]), &p(&[0.5, 0.0, 0.0])).unwrap(), 1.5);
        assert_eq!(d_sigma(&p(&[1.0, 0.0, 0.0]), &p(&[0.0, 2.0, 0.0])).unwrap(), 3.0);
        let q = p(&[0.0, 0.7, 0.0]);
        assert_eq!(d_sigma(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn invalid_points_are_domain_errors() {
        assert!(matches!(SigmaPoint::new(vec![1.0, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(SigmaPoint::new(vec![-1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_sigma(&[0.3, 0.4]).comps(), &[0.0, 0.4]);
        assert_eq!(project_sigma(&[0.5, 0.0]).comps(), &[0.5, 0.0]);
        assert_eq!(project_sigma(&[0.3, 0.3]).comps(), &[0.3, 0.0]);
        assert_eq!(project_sigma(&[-0.2, -0.1]).comps(), &[0.0, 0.0]);
    }

    #[test]
    fn retraction_is_continuous_across_ties() {
        assert_eq!(retract_sigma(&[0.3, 0.3]).comps(), &[0.0, 0.0]);
        let a = retract_sigma(&[0.3 + 1e-9, 0.3]);
        let b = retract_sigma(&[0.3, 0.3 + 1e-9]);
        assert!(d_sigma(&a, &b).unwrap() < 3e-9);
        assert_eq!(retract_sigma(&[0.0, 0.8, 0.0]).comps(), &[0.0, 0.8, 0.0]);
    }

    #[test]
    fn validation_examples() {
        let grid = build_grid(1, &[1.0], &[201], Geometry::Box).unwrap();
        let mut g = vec![
            ScalarField::from_fn(&grid, |x| {
                if x[0] < 0.5 {
                    2f64.sqrt() * (2.0 * PI * x[0]).sin()
                } else {
                    0.0
                }
            }),
            ScalarField::from_fn(&grid, |x| {
                if x[0] > 0.5 {
                    2f64.sqrt() * (2.0 * PI * x[0]).sin().abs()
                } else {
                    0.0
                }
            }),
        ];
        normalize_components(&mut g, &[1.0, 1.0]).unwrap();
        let check = validate_initial(&g, &[1.0, 1.0], 1e-3);
        assert!(check.passed(), "{}", check.describe());

        let s = ScalarField::from_fn(&grid, |x| (PI * x[0]).sin());
        let check = validate_initial(&[s.clone(), s.clone()], &[1.0, 1.0], 1e-3);
        assert!(check.max_overlap > 0.0);
        assert!(check
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Overlap { .. })));

        let mut neg = s.clone();
        neg.values_mut()[50] = -0.1;
        let check = validate_initial(&[neg], &[1.0], 1e-3);
        assert!(check.negative_mass > 0.0);
        assert!(!check.passed());
        assert!(check.describe().contains("negative"));
    }
}
