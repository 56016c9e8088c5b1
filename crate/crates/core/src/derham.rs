//! Tensor-product spline de Rham sequence on the logical annulus `[0, L] × [0, 2π)`.
//!
//! Level 0 uses `B_i(s) B̊_j(θ)`, level 1 the pair `(M_i B̊_j, B_i M̊_j)` and
//! level 2 `M_i M̊_j`. Flat indices are row-major in `(i, j)` with `i` radial;
//! level 1 stores the `s`-block before the `θ`-block.

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;
use crate::splines::{make_periodic_knots, make_uniform_open_knots, KnotVector, SplineBasisEval};

#[derive(Debug, Clone, PartialEq)]
pub struct TensorDeRham {
    kv_s: KnotVector,
    kv_theta: KnotVector,
    n_s: usize,
    n_theta: usize,
}

/// Component block of a level-1 coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    S,
    Theta,
}

/// Coefficients of one member of a de Rham space.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCoeffs {
    pub level: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldValue {
    Scalar(f64),
    Vector([f64; 2]),
}

impl FieldValue {
    pub fn scalar(self) -> f64 {
        match self {
            FieldValue::Scalar(v) => v,
            FieldValue::Vector(_) => panic!("expected a scalar field value"),
        }
    }

    pub fn vector(self) -> [f64; 2] {
        match self {
            FieldValue::Vector(v) => v,
            FieldValue::Scalar(_) => panic!("expected a vector field value"),
        }
    }
}

/// Univariate evaluations at one logical point, shared by all levels.
#[derive(Debug, Clone)]
pub struct PointBasis {
    pub b_s: SplineBasisEval,
    pub m_s: SplineBasisEval,
    pub b_theta: SplineBasisEval,
    pub m_theta: SplineBasisEval,
}

impl TensorDeRham {
    /// Spaces on `N_s` uniform radial cells of `[0, L]` and `N_θ` angular cells.
    pub fn new(degree: usize, cells_s: usize, cells_theta: usize, length: f64) -> Result<Self> {
        let kv_s = make_uniform_open_knots(degree, cells_s, length)?;
        let kv_theta = make_periodic_knots(degree, cells_theta)?;
        Self::from_knots(kv_s, kv_theta)
    }

    pub fn from_knots(kv_s: KnotVector, kv_theta: KnotVector) -> Result<Self> {
        if kv_s.is_periodic() || !kv_theta.is_periodic() {
            return Err(Error::InvalidInput("need open radial and periodic angular knots".into()));
        }
        if kv_s.degree() != kv_theta.degree() {
            return Err(Error::InvalidInput("radial and angular degrees differ".into()));
        }
        let (n_s, n_theta) = (kv_s.dim(), kv_theta.dim());
        Ok(Self { kv_s, kv_theta, n_s, n_theta })
    }

    pub fn degree(&self) -> usize {
        self.kv_s.degree()
    }

    pub fn kv_s(&self) -> &KnotVector {
        &self.kv_s
    }

    pub fn kv_theta(&self) -> &KnotVector {
        &self.kv_theta
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn length(&self) -> f64 {
        self.kv_s.length()
    }

    pub fn assumption1_ok(&self) -> bool {
        self.kv_theta.assumption1_ok()
    }

    pub fn dim(&self, level: usize) -> usize {
        match level {
            0 => self.n_s * self.n_theta,
            1 => self.dim1_s() + self.n_s * self.n_theta,
            2 => (self.n_s - 1) * self.n_theta,
            _ => panic!("de Rham level {level} out of range"),
        }
    }

    /// Size of the `s`-block of level 1.
    pub fn dim1_s(&self) -> usize {
        (self.n_s - 1) * self.n_theta
    }

    fn wrap(&self, j: i64) -> usize {
        j.rem_euclid(self.n_theta as i64) as usize
    }

    pub fn idx0(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    pub fn idx1(&self, c: Component, i: usize, j: usize) -> usize {
        match c {
            Component::S => i * self.n_theta + j,
            Component::Theta => self.dim1_s() + i * self.n_theta + j,
        }
    }

    pub fn idx2(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    /// Inverse of [`Self::idx1`].
    pub fn split1(&self, mu: usize) -> (Component, usize, usize) {
        if mu < self.dim1_s() {
            (Component::S, mu / self.n_theta, mu % self.n_theta)
        } else {
            let r = mu - self.dim1_s();
            (Component::Theta, r / self.n_theta, r % self.n_theta)
        }
    }

    pub fn zeros(&self, level: usize) -> FieldCoeffs {
        FieldCoeffs { level, data: vec![0.0; self.dim(level)] }
    }

    pub fn coeffs(&self, level: usize, data: Vec<f64>) -> Result<FieldCoeffs> {
        if data.len() != self.dim(level) {
            return Err(Error::InvalidInput(format!(
                "level {level} needs {} coefficients, got {}",
                self.dim(level),
                data.len()
            )));
        }
        Ok(FieldCoeffs { level, data })
    }

    /// Discrete gradient `Ŵ⁰ → Ŵ¹` as a signed incidence matrix.
    pub fn grad_matrix(&self) -> SparseOperator {
        let (ns, nt) = (self.n_s, self.n_theta);
        let mut t = Vec::with_capacity(4 * ns * nt);
        for i in 0..ns {
            for j in 0..nt {
                let col = self.idx0(i, j);
                // s-block: (δ_{l,i-1} - δ_{l,i}) δ_{k,j}
                if i >= 1 {
                    t.push((self.idx1(Component::S, i - 1, j), col, 1.0));
                }
                if i < ns - 1 {
                    t.push((self.idx1(Component::S, i, j), col, -1.0));
                }
                // θ-block: δ_{l,i} (δ_{k,j-1} - δ_{k,j})
                t.push((self.idx1(Component::Theta, i, self.wrap(j as i64 - 1)), col, 1.0));
                t.push((self.idx1(Component::Theta, i, j), col, -1.0));
            }
        }
        SparseOperator::from_triplets(self.dim(1), self.dim(0), t)
    }

    /// Discrete curl `Ŵ¹ → Ŵ²`.
    pub fn curl_matrix(&self) -> SparseOperator {
        let (ns, nt) = (self.n_s, self.n_theta);
        let mut t = Vec::with_capacity(4 * ns * nt);
        for i in 0..ns - 1 {
            for j in 0..nt {
                let col = self.idx1(Component::S, i, j);
                // -δ_{l,i} (δ_{k,j-1} - δ_{k,j})
                t.push((self.idx2(i, self.wrap(j as i64 - 1)), col, -1.0));
                t.push((self.idx2(i, j), col, 1.0));
            }
        }
        for i in 0..ns {
            for j in 0..nt {
                let col = self.idx1(Component::Theta, i, j);
                // (δ_{l,i-1} - δ_{l,i}) δ_{k,j}
                if i >= 1 {
                    t.push((self.idx2(i - 1, j), col, 1.0));
                }
                if i < ns - 1 {
                    t.push((self.idx2(i, j), col, -1.0));
                }
            }
        }
        SparseOperator::from_triplets(self.dim(2), self.dim(1), t)
    }

    pub fn point_basis(&self, s: f64, theta: f64) -> Result<PointBasis> {
        Ok(PointBasis {
            b_s: self.kv_s.eval_b(s)?,
            m_s: self.kv_s.eval_m(s)?,
            b_theta: self.kv_theta.eval_b(theta)?,
            m_theta: self.kv_theta.eval_m(theta)?,
        })
    }

    /// Nonzero level-`ℓ` basis functions at a point as `(flat index, value)`;
    /// level-1 values are logical vectors.
    pub fn local_basis(&self, level: usize, pb: &PointBasis) -> Vec<(usize, FieldValue)> {
        let mut out = Vec::new();
        match level {
            0 => {
                for (i, bi) in pb.b_s.iter() {
                    for (j, bj) in pb.b_theta.iter() {
                        out.push((self.idx0(i, j), FieldValue::Scalar(bi * bj)));
                    }
                }
            }
            1 => {
                for (i, mi) in pb.m_s.iter() {
                    for (j, bj) in pb.b_theta.iter() {
                        out.push((self.idx1(Component::S, i, j), FieldValue::Vector([mi * bj, 0.0])));
                    }
                }
                for (i, bi) in pb.b_s.iter() {
                    for (j, mj) in pb.m_theta.iter() {
                        out.push((self.idx1(Component::Theta, i, j), FieldValue::Vector([0.0, bi * mj])));
                    }
                }
            }
            2 => {
                for (i, mi) in pb.m_s.iter() {
                    for (j, mj) in pb.m_theta.iter() {
                        out.push((self.idx2(i, j), FieldValue::Scalar(mi * mj)));
                    }
                }
            }
            _ => panic!("de Rham level {level} out of range"),
        }
        out
    }

    pub fn eval_with(&self, coeffs: &FieldCoeffs, pb: &PointBasis) -> FieldValue {
        let local = self.local_basis(coeffs.level, pb);
        if coeffs.level == 1 {
            let mut v = [0.0; 2];
            for (mu, val) in local {
                let [a, b] = val.vector();
                v[0] += coeffs.data[mu] * a;
                v[1] += coeffs.data[mu] * b;
            }
            FieldValue::Vector(v)
        } else {
            FieldValue::Scalar(local.into_iter().map(|(mu, val)| coeffs.data[mu] * val.scalar()).sum())
        }
    }

    /// Value of a spline field at the logical point `(s, θ)`.
    pub fn eval_logical(&self, coeffs: &FieldCoeffs, s: f64, theta: f64) -> Result<FieldValue> {
        if coeffs.data.len() != self.dim(coeffs.level) {
            return Err(Error::InvalidInput("coefficient length does not match the space".into()));
        }
        Ok(self.eval_with(coeffs, &self.point_basis(s, theta)?))
    }

    /// Logical gradient `(∂_s φ, ∂_θ φ)` of a level-0 field.
    pub fn eval_logical_gradient(&self, coeffs: &FieldCoeffs, s: f64, theta: f64) -> Result<[f64; 2]> {
        if coeffs.level != 0 {
            return Err(Error::InvalidInput("gradient needs a level-0 field".into()));
        }
        let b_s = self.kv_s.eval_b(s)?;
        let d_s = self.kv_s.eval_b_derivative(s)?;
        let b_t = self.kv_theta.eval_b(theta)?;
        let d_t = self.kv_theta.eval_b_derivative(theta)?;
        let mut g = [0.0; 2];
        for ((i, bi), (_, di)) in b_s.iter().zip(d_s.iter()) {
            for ((j, bj), (_, dj)) in b_t.iter().zip(d_t.iter()) {
                let c = coeffs.data[self.idx0(i, j)];
                g[0] += c * di * bj;
                g[1] += c * bi * dj;
            }
        }
        Ok(g)
    }
}
