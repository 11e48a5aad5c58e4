//! Banded Cholesky for the implicit diffusion operator and a matrix-free
//! conjugate gradient solver for the masked eigenproblem.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Cholesky factor of a symmetric positive definite band matrix. Row `i`
/// stores `L[i][i-b..=i]` contiguously, padded with zeros above row `b`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    /// `entry(i, j)` is queried only for `i - bandwidth <= j <= i`.
    pub fn factor(n: usize, bandwidth: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = bandwidth + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bandwidth);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bandwidth));
                let mut s = entry(i, j);
                for k in k0..j {
                    s -= band[i * w + (k + bandwidth - i)] * band[j * w + (k + bandwidth - j)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Numerical(format!(
                            "matrix is not positive definite at pivot {i} ({s:e})"
                        )));
                    }
                    band[i * w + bandwidth] = s.sqrt();
                } else {
                    band[i * w + (j + bandwidth - i)] = s / band[j * w + bandwidth];
                }
            }
        }
        Ok(BandedCholesky { n, bandwidth, band })
    }

    /// Solves `L Lᵀ x = rhs` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, b, w) = (self.n, self.bandwidth, self.bandwidth + 1);
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            let row = &self.band[i * w..(i + 1) * w];
            let mut s = x[i];
            for j in j0..i {
                s -= row[j + b - i] * x[j];
            }
            x[i] = s / row[b];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n.min(i + b + 1) {
                s -= self.band[k * w + (i + b - k)] * x[k];
            }
            x[i] = s / self.band[i * w + b];
        }
    }
}

/// `I - coeff·Δ` on the interior nodes of `grid`, factored once.
#[derive(Debug, Clone)]
pub struct ImplicitDiffusion {
    chol: BandedCholesky,
    unknown_of: Vec<usize>,
}

const NOT_UNKNOWN: usize = usize::MAX;

impl ImplicitDiffusion {
    pub fn new(grid: &Grid, coeff: f64) -> Result<Self> {
        let nodes = grid.interior_nodes();
        let mut unknown_of = vec![NOT_UNKNOWN; grid.len()];
        for (k, &n) in nodes.iter().enumerate() {
            unknown_of[n] = k;
        }
        let dim = grid.dim();
        let mut bandwidth = 0;
        for (k, &n) in nodes.iter().enumerate() {
            for a in 0..dim {
                if let Some(m) = grid.neighbor(n, a, false) {
                    if unknown_of[m] != NOT_UNKNOWN {
                        bandwidth = bandwidth.max(k - unknown_of[m]);
                    }
                }
            }
        }
        let inv_h2: Vec<f64> = grid.spacing().iter().map(|h| 1.0 / (h * h)).collect();
        let diag = 1.0 + coeff * 2.0 * inv_h2.iter().sum::<f64>();
        let entry = |i: usize, j: usize| -> f64 {
            if i == j {
                return diag;
            }
            let (ni, nj) = (nodes[i], nodes[j]);
            for a in 0..dim {
                if grid.neighbor(ni, a, false) == Some(nj) {
                    return -coeff * inv_h2[a];
                }
            }
            0.0
        };
        let chol = BandedCholesky::factor(nodes.len(), bandwidth, entry)?;
        Ok(ImplicitDiffusion {
            chol,
            unknown_of,
        })
    }

    /// Solves `(I - coeff·Δ) u = rhs` for a nodal `rhs`; the result vanishes
    /// off the interior.
    pub fn solve(&self, grid: &Grid, rhs: &[f64], out: &mut [f64]) {
        let nodes = grid.interior_nodes();
        let mut x: Vec<f64> = nodes.iter().map(|&n| rhs[n]).collect();
        self.chol.solve_in_place(&mut x);
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for (k, &n) in nodes.iter().enumerate() {
            debug_assert_eq!(self.unknown_of[n], k);
            out[n] = x[k];
        }
    }
}

/// Conjugate gradients for an SPD operator, warm-started from `x`. Returns
/// the final relative residual.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(p, q)| p * q).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0.0);
    }
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        let res = rr.sqrt() / b_norm;
        if res <= rel_tol {
            return Ok(res);
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical(format!("operator not positive definite (pAp = {pap:e})")));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let res = rr.sqrt() / b_norm;
    if res <= rel_tol {
        Ok(res)
    } else {
        Err(Error::Numerical(format!(
            "conjugate gradient stalled at relative residual {res:e} after {max_iter} iterations"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{apply_laplacian, build_grid, Geometry, ScalarField};

    #[test]
    fn banded_cholesky_solves_tridiagonal() {
        let n = 6;
        let chol = BandedCholesky::factor(n, 1, |i, j| if i == j { 4.0 } else { -1.0 }).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            b[i] = 4.0 * x_true[i];
            if i > 0 {
                b[i] -= x_true[i - 1];
            }
            if i + 1 < n {
                b[i] -= x_true[i + 1];
            }
        }
        chol.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - x_true[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn implicit_diffusion_inverts_operator_on_disk() {
        let grid = build_grid(2, &[1.0, 1.0], &[17, 17], Geometry::DiskMask).unwrap();
        let coeff = 0.003;
        let op = ImplicitDiffusion::new(&grid, coeff).unwrap();
        let u = ScalarField::from_fn(&grid, |x| (x[0] * 3.0).cos() + x[1]);
        let lu = apply_laplacian(&u);
        let rhs: Vec<f64> = u
            .values()
            .iter()
            .zip(lu.values())
            .map(|(a, b)| a - coeff * b)
            .collect();
        let mut out = vec![0.0; grid.len()];
        op.solve(&grid, &rhs, &mut out);
        for n in 0..grid.len() {
            assert!((out[n] - u.values()[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_matches_direct_solve() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = 3.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 };
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut x = vec![0.0; n];
        let out = conjugate_gradient(apply, &b, &mut x, 1e-13, 500).unwrap();
        assert!(out <= 1e-13);
        let chol = BandedCholesky::factor(n, 1, |i, j| if i == j { 3.0 } else { -1.0 }).unwrap();
        let mut xd = b.clone();
        chol.solve_in_place(&mut xd);
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-11);
        }
    }
}
