//! Small dense/banded factorizations and conjugate gradients.

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// LU factorization with partial pivoting of a dense square matrix.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factor(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut lu: Vec<f64> = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), n, "matrix must be square");
                r.iter().copied()
            })
            .collect();
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut best, mut best_val) = (k, lu[k * n + k].abs());
            for r in k + 1..n {
                let v = lu[r * n + k].abs();
                if v > best_val {
                    best = r;
                    best_val = v;
                }
            }
            if best_val <= 1e-14 * scale {
                return Err(Error::Singular { row: k, pivot: best_val });
            }
            if best != k {
                for c in 0..n {
                    lu.swap(k * n + c, best * n + c);
                }
                piv.swap(k, best);
            }
            let pivot = lu[k * n + k];
            for r in k + 1..n {
                let f = lu[r * n + k] / pivot;
                lu[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[r * n + c] -= f * lu[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, piv })
    }

    pub fn from_sparse(a: &SparseOperator) -> Result<Self> {
        Self::factor(&a.to_dense())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..n {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        b.copy_from_slice(&x);
    }
}

/// LU factorization without pivoting of a banded matrix.
///
/// Valid for B-spline collocation matrices at admissible nodes, which are
/// totally positive.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    // row-major band storage: entry (r, c) at r * width + (c + lower - r)
    band: Vec<f64>,
}

impl BandedLu {
    pub fn factor(a: &SparseOperator) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let (mut lower, mut upper) = (0, 0);
        for (r, c, _) in a.triplets() {
            if r > c {
                lower = lower.max(r - c);
            } else {
                upper = upper.max(c - r);
            }
        }
        // fill-in stays within the band without pivoting
        let width = lower + upper + 1;
        let mut band = vec![0.0; n * width];
        for (r, c, v) in a.triplets() {
            band[r * width + (c + lower - r)] = v;
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let pivot = band[k * width + lower];
            if pivot.abs() <= 1e-14 * scale {
                return Err(Error::Singular { row: k, pivot: pivot.abs() });
            }
            for r in k + 1..(k + lower + 1).min(n) {
                let idx = r * width + (k + lower - r);
                let f = band[idx] / pivot;
                band[idx] = f;
                if f == 0.0 {
                    continue;
                }
                for c in k + 1..(k + upper + 1).min(n) {
                    band[r * width + (c + lower - r)] -= f * band[k * width + (c + lower - k)];
                }
            }
        }
        Ok(Self { n, lower, upper, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, lo, up) = (self.n, self.lower, self.upper);
        let width = lo + up + 1;
        for r in 0..n {
            let mut acc = b[r];
            for c in r.saturating_sub(lo)..r {
                acc -= self.band[r * width + (c + lo - r)] * b[c];
            }
            b[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = b[r];
            for c in r + 1..(r + up + 1).min(n) {
                acc -= self.band[r * width + (c + lo - r)] * b[c];
            }
            b[r] = acc / self.band[r * width + lo];
        }
    }
}

/// Cholesky factorization `A = L Lᵀ` of a symmetric positive definite
/// sparse matrix, stored as a band after an optional symmetric permutation.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // row-major lower band: L(r, c) at r * (bw + 1) + (c + bw - r)
    band: Vec<f64>,
    perm: Option<Vec<usize>>,
}

impl BandedCholesky {
    /// `perm[new] = old` reorders unknowns before factorization.
    pub fn factor(a: &SparseOperator, perm: Option<Vec<usize>>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let a = match &perm {
            Some(p) => a.permute_symmetric(p),
            None => a.clone(),
        };
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for (r, c, v) in a.triplets() {
            if c <= r {
                band[r * w + (c + bw - r)] = v;
            }
        }
        for r in 0..n {
            let c0 = r.saturating_sub(bw);
            for c in c0..=r {
                let k0 = c0.max(c.saturating_sub(bw));
                let mut acc = band[r * w + (c + bw - r)];
                for k in k0..c {
                    acc -= band[r * w + (k + bw - r)] * band[c * w + (k + bw - c)];
                }
                if c == r {
                    if acc <= 0.0 {
                        return Err(Error::Singular { row: r, pivot: acc });
                    }
                    band[r * w + bw] = acc.sqrt();
                } else {
                    band[r * w + (c + bw - r)] = acc / band[c * w + bw];
                }
            }
        }
        Ok(Self { n, bw, band, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut x: Vec<f64> = match &self.perm {
            Some(p) => p.iter().map(|&old| b[old]).collect(),
            None => b.to_vec(),
        };
        for r in 0..n {
            let mut acc = x[r];
            for c in r.saturating_sub(bw)..r {
                acc -= self.band[r * w + (c + bw - r)] * x[c];
            }
            x[r] = acc / self.band[r * w + bw];
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..(r + bw + 1).min(n) {
                acc -= self.band[c * w + (r + bw - c)] * x[c];
            }
            x[r] = acc / self.band[r * w + bw];
        }
        match &self.perm {
            Some(p) => {
                let mut out = vec![0.0; n];
                for (new, &old) in p.iter().enumerate() {
                    out[old] = x[new];
                }
                out
            }
            None => x,
        }
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `‖b − A x‖ / ‖b‖`.
    pub residual: f64,
}

/// Preconditioned conjugate gradients on a symmetric positive (semi-)definite
/// operator. `inv_diag` enables Jacobi preconditioning.
pub fn conjugate_gradient(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    inv_diag: Option<&[f64]>,
) -> Result<CgOutcome> {
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(CgOutcome { solution: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.apply(&x);
        r.iter_mut().zip(&ax).for_each(|(ri, ai)| *ri -= ai);
    }
    let precondition = |r: &[f64]| -> Vec<f64> {
        match inv_diag {
            Some(d) => r.iter().zip(d).map(|(ri, di)| ri * di).collect(),
            None => r.to_vec(),
        }
    };
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut residual = norm(&r) / b_norm;
    if residual < tol {
        return Ok(CgOutcome { solution: x, iterations: 0, residual });
    }
    for it in 1..=max_iter {
        a.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotConverged { iterations: it, residual });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = norm(&r) / b_norm;
        if residual < tol {
            return Ok(CgOutcome { solution: x, iterations: it, residual });
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> SparseOperator {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + i as f64 * 0.1));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
            if i + 3 < n {
                t.push((i, i + 3, 0.5));
                t.push((i + 3, i, 0.5));
            }
        }
        SparseOperator::from_triplets(n, n, t)
    }

    fn residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.apply(x);
        ax.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn factorizations_agree() {
        let a = spd(20);
        let b: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();

        let mut x1 = b.clone();
        DenseLu::from_sparse(&a).unwrap().solve_in_place(&mut x1);
        let mut x2 = b.clone();
        BandedLu::factor(&a).unwrap().solve_in_place(&mut x2);
        let perm: Vec<usize> = (0..20).rev().collect();
        let x3 = BandedCholesky::factor(&a, Some(perm)).unwrap().solve(&b);
        let x4 = conjugate_gradient(&a, &b, None, 1e-14, 200, None).unwrap().solution;

        for x in [&x1, &x2, &x3, &x4] {
            assert!(residual(&a, x, &b) < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = SparseOperator::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(DenseLu::from_sparse(&a), Err(Error::Singular { .. })));
        assert!(matches!(BandedCholesky::factor(&a, None), Err(Error::Singular { .. })));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = spd(50);
        let b = vec![1.0; 50];
        assert!(matches!(
            conjugate_gradient(&a, &b, None, 1e-14, 2, None),
            Err(Error::NotConverged { iterations: 2, .. })
        ));
    }
}
