use crate::error::{domain_err, Error, Result};

use super::{axpy, dot, Matrix};

/// Sweep cap for the one-sided Jacobi iteration.
pub const SVD_MAX_SWEEPS: usize = 60;
/// A column pair is orthogonal once `|⟨a_p, a_q⟩| ≤ tol · ‖a_p‖‖a_q‖`.
pub const SVD_TOLERANCE: f64 = 1e-12;
/// Singular values below this fraction of the largest are set to zero.
const RANK_CUTOFF: f64 = 1e-12;

/// Thin SVD `a = u · diag(singular_values) · vt` with `r = min(rows, cols)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdResult {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    /// `u · diag(σ) · vt`.
    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.u.clone();
        let r = self.singular_values.len();
        for i in 0..scaled.rows() {
            for (j, s) in self.singular_values.iter().enumerate().take(r) {
                let v = scaled.get(i, j) * s;
                scaled.set(i, j, v);
            }
        }
        // Both factors are finite; the product cannot overflow for finite input.
        scaled.matmul(&self.vt).expect("consistent SVD factor shapes")
    }
}

/// One-sided (Hestenes) Jacobi SVD. Works on the taller orientation and
/// transposes back, so the cost is governed by `min(rows, cols)²` column pairs.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Shape("svd of an empty matrix".into()));
    }
    if !a.is_finite() {
        return domain_err("svd input contains non-finite entries");
    }
    if a.cols() > a.rows() {
        let t = jacobi_tall(&a.transpose())?;
        // aᵀ = U Σ Vᵀ  ⇒  a = V Σ Uᵀ
        Ok(SvdResult {
            u: t.v,
            singular_values: t.sigma,
            vt: t.u.transpose(),
        })
    } else {
        let t = jacobi_tall(a)?;
        Ok(SvdResult {
            u: t.u,
            singular_values: t.sigma,
            vt: t.v.transpose(),
        })
    }
}

struct TallSvd {
    u: Matrix,
    sigma: Vec<f64>,
    v: Matrix,
}

fn jacobi_tall(a: &Matrix) -> Result<TallSvd> {
    let (m, n) = a.shape();
    // Column-major working copies keep the inner loops contiguous.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let fro2: f64 = a.as_slice().iter().map(|v| v * v).sum();
    let negligible = (f64::EPSILON * f64::EPSILON) * fro2;

    let mut converged = n < 2;
    let mut residual = 0.0;
    let mut sweeps = 0;
    while !converged && sweeps < SVD_MAX_SWEEPS {
        sweeps += 1;
        residual = 0.0_f64;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let scale = (alpha * beta).sqrt();
                if scale <= negligible {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                let off = gamma.abs() / scale;
                residual = residual.max(off);
                if off <= SVD_TOLERANCE {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Convergence { sweeps, residual });
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let sigma_max = norms[order[0]];

    let mut sigma = Vec::with_capacity(n);
    let mut ucols: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut vsorted: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &j in &order {
        let s = norms[j];
        if sigma_max > 0.0 && s > RANK_CUTOFF * sigma_max {
            sigma.push(s);
            ucols.push(Some(cols[j].iter().map(|v| v / s).collect()));
        } else {
            sigma.push(0.0);
            ucols.push(None);
        }
        vsorted.push(vcols[j].clone());
    }
    let ucols = complete_orthonormal(ucols, m);

    let mut u = Matrix::zeros(m, n);
    for (j, col) in ucols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate().take(m) {
            u.set(i, j, x);
        }
    }
    let mut v = Matrix::zeros(n, n);
    for (j, col) in vsorted.iter().enumerate() {
        for (i, &x) in col.iter().enumerate().take(n) {
            v.set(i, j, x);
        }
    }
    Ok(TallSvd { u, sigma, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the `None` slots (null-space directions) with unit vectors orthogonal
/// to every other column, drawn from the standard basis by Gram-Schmidt.
fn complete_orthonormal(cols: Vec<Option<Vec<f64>>>, m: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    let mut out = Vec::with_capacity(cols.len());
    for slot in cols {
        match slot {
            Some(c) => out.push(c),
            None => {
                let mut best: Option<Vec<f64>> = None;
                let mut best_norm = 0.0;
                for k in 0..m {
                    let mut e = vec![0.0; m];
                    e[k] = 1.0;
                    // Two passes of classical Gram-Schmidt.
                    for _ in 0..2 {
                        for b in &basis {
                            let proj = dot(b, &e);
                            axpy(-proj, b, &mut e);
                        }
                    }
                    let norm = dot(&e, &e).sqrt();
                    if norm > best_norm {
                        best_norm = norm;
                        best = Some(e);
                    }
                    if best_norm > 0.7 {
                        break;
                    }
                }
                let mut e = best.expect("column count never exceeds the row count");
                for v in e.iter_mut() {
                    *v /= best_norm;
                }
                basis.push(e.clone());
                out.push(e);
            }
        }
    }
    out
}
