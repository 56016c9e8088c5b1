//! Broken-FEEC Poisson solver with homogeneous Dirichlet conditions:
//! `((𝐆𝐏⁰)ᵀ𝐌¹𝐆𝐏⁰ + α(𝐈−𝐏⁰)ᵀ𝐌⁰(𝐈−𝐏⁰)) φ = (𝐏⁰)ᵀ𝐟`.

use crate::assembly::symmetrized;
use crate::derham::FieldCoeffs;
use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, norm, BandedCholesky};
use crate::sparse::SparseOperator;

/// How the symmetric positive definite system is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    ConjugateGradient { tol: f64, max_iter: usize, jacobi: bool },
    Cholesky,
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::ConjugateGradient { tol: 1e-12, max_iter: 100_000, jacobi: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonProblem {
    /// Stabilization weight of the non-conforming part.
    pub alpha: f64,
    pub solver: LinearSolver,
}

impl Default for PoissonProblem {
    fn default() -> Self {
        Self { alpha: 1.0, solver: LinearSolver::default() }
    }
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub phi: FieldCoeffs,
    pub iterations: usize,
    pub residual: f64,
    /// `‖(𝐈−𝐏⁰)φ‖ / ‖φ‖`.
    pub conformity_defect: f64,
}

/// `(𝐆𝐏)ᵀ𝐌¹(𝐆𝐏) + α(𝐈−𝐏)ᵀ𝐌⁰(𝐈−𝐏)`.
pub fn poisson_matrix(
    grad: &SparseOperator,
    p0: &SparseOperator,
    m0: &SparseOperator,
    m1: &SparseOperator,
    alpha: f64,
) -> SparseOperator {
    let gp = grad.matmul(p0);
    let stiff = gp.transpose().matmul(&m1.matmul(&gp));
    let q = SparseOperator::identity(p0.nrows()).sub(p0);
    let stab = q.transpose().matmul(&m0.matmul(&q));
    symmetrized(&stiff.add_scaled(1.0, &stab, alpha)).pruned(1e-15)
}

/// Solves the stabilized system for the load vector `f_μ = ∫ f Λ⁰_μ`;
/// `p0` must include the boundary condition.
pub fn solve_poisson(
    problem: &PoissonProblem,
    load: &[f64],
    grad: &SparseOperator,
    p0: &SparseOperator,
    m0: &SparseOperator,
    m1: &SparseOperator,
) -> Result<PoissonSolution> {
    if !(problem.alpha > 0.0) {
        return Err(Error::InvalidInput(format!("stabilization must be positive, got {}", problem.alpha)));
    }
    let n = p0.nrows();
    if load.len() != n || grad.ncols() != n || m0.nrows() != n || m1.nrows() != grad.nrows() {
        return Err(Error::InvalidInput("Poisson operators have inconsistent shapes".into()));
    }
    let k = poisson_matrix(grad, p0, m0, m1, problem.alpha);
    let rhs = p0.apply_transpose(load);
    let (x, iterations, residual) = match problem.solver {
        LinearSolver::ConjugateGradient { tol, max_iter, jacobi } => {
            let inv = jacobi.then(|| k.diagonal().iter().map(|d| 1.0 / d).collect::<Vec<_>>());
            let out = conjugate_gradient(&k, &rhs, None, tol, max_iter, inv.as_deref())?;
            (out.solution, out.iterations, out.residual)
        }
        LinearSolver::Cholesky => {
            let x = BandedCholesky::factor(&k, None)?.solve(&rhs);
            let r: Vec<f64> = rhs.iter().zip(k.apply(&x)).map(|(b, ax)| b - ax).collect();
            let res = norm(&r) / norm(&rhs).max(f64::MIN_POSITIVE);
            (x, 0, res)
        }
    };
    let px = p0.apply(&x);
    let xn = norm(&x);
    let defect = if xn > 0.0 { norm(&x.iter().zip(&px).map(|(a, b)| a - b).collect::<Vec<_>>()) / xn } else { 0.0 };
    Ok(PoissonSolution { phi: FieldCoeffs { level: 0, data: x }, iterations, residual, conformity_defect: defect })
}

/// Manufactured solution `φ = sin(7π(1 − x² − y²)/2)` on the unit disk.
pub fn manufactured_solution(x: [f64; 2]) -> f64 {
    let a = 3.5 * std::f64::consts::PI;
    (a * (1.0 - x[0] * x[0] - x[1] * x[1])).sin()
}

/// `f = −Δφ` for [`manufactured_solution`].
pub fn manufactured_source(x: [f64; 2]) -> f64 {
    let a = 3.5 * std::f64::consts::PI;
    let r2 = x[0] * x[0] + x[1] * x[1];
    let u = a * (1.0 - r2);
    4.0 * a * u.cos() + 4.0 * a * a * r2 * u.sin()
}
