//! Geometric projections: interpolation of point values, histopolation of
//! edge and cell integrals, solved with Kronecker-structured collocation.

use crate::conforming::ConformingProjections;
use crate::derham::{Component, FieldCoeffs, FieldValue, TensorDeRham};
use crate::error::{Error, Result};
use crate::geometry::{pullback, PolarMapping};
use crate::linalg::{BandedLu, DenseLu};
use crate::quadrature::GaussRule;
use crate::sparse::SparseOperator;
use crate::splines::{edges_from_nodes, greville_points, histopolation_matrix, interpolation_matrix, KnotVector};

#[derive(Debug, Clone)]
enum AxisSolver {
    Banded(BandedLu),
    Dense(DenseLu),
}

impl AxisSolver {
    /// Banded elimination for open axes (fall back to pivoting if it breaks down),
    /// dense pivoted LU for the periodic axis.
    fn new(a: &SparseOperator, periodic: bool) -> Result<Self> {
        if !periodic {
            if let Ok(lu) = BandedLu::factor(a) {
                return Ok(AxisSolver::Banded(lu));
            }
        }
        Ok(AxisSolver::Dense(DenseLu::from_sparse(a)?))
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        match self {
            AxisSolver::Banded(lu) => lu.solve_in_place(b),
            AxisSolver::Dense(lu) => lu.solve_in_place(b),
        }
    }
}

/// Solver for `(A_s ⊗ A_θ) x = y` with `x, y` row-major in `(i, j)`.
#[derive(Debug, Clone)]
pub struct KroneckerSolver {
    s: AxisSolver,
    theta: AxisSolver,
    rows: usize,
    cols: usize,
}

impl KroneckerSolver {
    /// `a_s` acts on the radial index, `a_theta` on the periodic angular index.
    pub fn new(a_s: SparseOperator, a_theta: SparseOperator) -> Result<Self> {
        Ok(Self {
            s: AxisSolver::new(&a_s, false)?,
            theta: AxisSolver::new(&a_theta, true)?,
            rows: a_s.nrows(),
            cols: a_theta.nrows(),
        })
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "Kronecker system of size {} got right-hand side of length {}",
                self.dim(),
                rhs.len()
            )));
        }
        let (r, c) = (self.rows, self.cols);
        let mut x = rhs.to_vec();
        let mut col = vec![0.0; r];
        for j in 0..c {
            for i in 0..r {
                col[i] = x[i * c + j];
            }
            self.s.solve_in_place(&mut col);
            for i in 0..r {
                x[i * c + j] = col[i];
            }
        }
        for i in 0..r {
            self.theta.solve_in_place(&mut x[i * c..(i + 1) * c]);
        }
        Ok(x)
    }
}

/// Interpolation/histopolation projections on the Greville grid of a tensor space.
#[derive(Debug, Clone)]
pub struct GeometricProjector {
    space: TensorDeRham,
    nodes_s: Vec<f64>,
    nodes_theta: Vec<f64>,
    edges_s: Vec<(f64, f64)>,
    edges_theta: Vec<(f64, f64)>,
    rule: GaussRule,
    level0: KroneckerSolver,
    level1_s: KroneckerSolver,
    level1_theta: KroneckerSolver,
    level2: KroneckerSolver,
}

impl GeometricProjector {
    /// Projector with `p + 2` Gauss points per knot span on edges and cells.
    pub fn new(space: &TensorDeRham) -> Result<Self> {
        Self::with_quadrature(space, space.degree() + 2)
    }

    pub fn with_quadrature(space: &TensorDeRham, points: usize) -> Result<Self> {
        let (kv_s, kv_t) = (space.kv_s(), space.kv_theta());
        let nodes_s = greville_points(kv_s);
        let nodes_theta = greville_points(kv_t);
        let edges_s = edges_from_nodes(kv_s, &nodes_s);
        let edges_theta = edges_from_nodes(kv_t, &nodes_theta);
        let a_s = interpolation_matrix(kv_s, &nodes_s)?;
        let a_t = interpolation_matrix(kv_t, &nodes_theta)?;
        let h_s = histopolation_matrix(kv_s, &edges_s)?;
        let h_t = histopolation_matrix(kv_t, &edges_theta)?;
        Ok(Self {
            space: space.clone(),
            level0: KroneckerSolver::new(a_s.clone(), a_t.clone())?,
            level1_s: KroneckerSolver::new(h_s.clone(), a_t)?,
            level1_theta: KroneckerSolver::new(a_s, h_t.clone())?,
            level2: KroneckerSolver::new(h_s, h_t)?,
            nodes_s,
            nodes_theta,
            edges_s,
            edges_theta,
            rule: GaussRule::new(points),
        })
    }

    pub fn space(&self) -> &TensorDeRham {
        &self.space
    }

    pub fn nodes_s(&self) -> &[f64] {
        &self.nodes_s
    }

    pub fn nodes_theta(&self) -> &[f64] {
        &self.nodes_theta
    }

    pub fn edges_s(&self) -> &[(f64, f64)] {
        &self.edges_s
    }

    pub fn edges_theta(&self) -> &[(f64, f64)] {
        &self.edges_theta
    }

    fn line_integral<F: Fn(f64) -> Result<f64>>(&self, kv: &KnotVector, edge: (f64, f64), f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (a, b) in kv.segments(edge.0, edge.1) {
            for (x, w) in self.rule.on(a, b) {
                acc += w * f(x)?;
            }
        }
        Ok(acc)
    }

    /// Geometric degrees of freedom of a logical field: point values,
    /// tangential edge integrals or cell integrals.
    pub fn logical_dofs<F>(&self, level: usize, f: F) -> Result<Vec<f64>>
    where
        F: Fn(f64, f64) -> Result<FieldValue>,
    {
        let sp = &self.space;
        let (kv_s, kv_t) = (sp.kv_s(), sp.kv_theta());
        let (ns, nt) = (sp.n_s(), sp.n_theta());
        let mut dofs = vec![0.0; sp.dim(level)];
        match level {
            0 => {
                for (i, &s) in self.nodes_s.iter().enumerate() {
                    for (j, &th) in self.nodes_theta.iter().enumerate() {
                        dofs[sp.idx0(i, j)] = f(s, th)?.scalar();
                    }
                }
            }
            1 => {
                for i in 0..ns - 1 {
                    for (j, &th) in self.nodes_theta.iter().enumerate() {
                        dofs[sp.idx1(Component::S, i, j)] =
                            self.line_integral(kv_s, self.edges_s[i], |s| Ok(f(s, th)?.vector()[0]))?;
                    }
                }
                for (i, &s) in self.nodes_s.iter().enumerate() {
                    for j in 0..nt {
                        dofs[sp.idx1(Component::Theta, i, j)] =
                            self.line_integral(kv_t, self.edges_theta[j], |th| Ok(f(s, th)?.vector()[1]))?;
                    }
                }
            }
            2 => {
                for i in 0..ns - 1 {
                    for j in 0..nt {
                        dofs[sp.idx2(i, j)] = self.line_integral(kv_s, self.edges_s[i], |s| {
                            self.line_integral(kv_t, self.edges_theta[j], |th| Ok(f(s, th)?.scalar()))
                        })?;
                    }
                }
            }
            _ => panic!("de Rham level {level} out of range"),
        }
        Ok(dofs)
    }

    /// Spline coefficients with prescribed geometric degrees of freedom.
    pub fn solve_dofs(&self, level: usize, dofs: &[f64]) -> Result<FieldCoeffs> {
        let sp = &self.space;
        let data = match level {
            0 => self.level0.solve(dofs)?,
            1 => {
                let split = sp.dim1_s();
                let mut out = self.level1_s.solve(&dofs[..split])?;
                out.extend(self.level1_theta.solve(&dofs[split..])?);
                out
            }
            2 => self.level2.solve(dofs)?,
            _ => panic!("de Rham level {level} out of range"),
        };
        Ok(FieldCoeffs { level, data })
    }

    /// Logical projection of a field given on `[0, L] × [0, 2π)`.
    pub fn project_logical<F>(&self, level: usize, f: F) -> Result<FieldCoeffs>
    where
        F: Fn(f64, f64) -> Result<FieldValue>,
    {
        self.solve_dofs(level, &self.logical_dofs(level, f)?)
    }

    /// Projection of a physical field: pull back, project, push forward.
    pub fn project_polar<G>(&self, level: usize, map: &PolarMapping, g: G) -> Result<FieldCoeffs>
    where
        G: Fn([f64; 2]) -> FieldValue,
    {
        self.project_logical(level, |s, th| pullback(level, map, &g, s, th))
    }

    /// Conforming projection of a physical field, `P Π`.
    pub fn project_conforming<G>(
        &self,
        level: usize,
        proj: &ConformingProjections,
        map: &PolarMapping,
        g: G,
    ) -> Result<FieldCoeffs>
    where
        G: Fn([f64; 2]) -> FieldValue,
    {
        Ok(proj.apply_coeffs(&self.project_polar(level, map, g)?))
    }
}
