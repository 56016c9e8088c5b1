//! Mapped Gauss quadrature on the logical grid: mass matrices, load vectors
//! and error norms on the physical domain `Ω_h = F([0, L] × [0, 2π))`.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::derham::{FieldCoeffs, FieldValue, TensorDeRham};
use crate::error::{Error, Result};
use crate::geometry::{Jacobian, PolarMapping};
use crate::quadrature::GaussRule;
use crate::sparse::SparseOperator;
use crate::splines::{KnotVector, SplineBasisEval};

/// Univariate basis values at the Gauss points of one axis.
#[derive(Debug, Clone)]
struct AxisSamples {
    x: Vec<f64>,
    w: Vec<f64>,
    b: Vec<SplineBasisEval>,
    db: Vec<SplineBasisEval>,
    m: Vec<SplineBasisEval>,
}

impl AxisSamples {
    fn new(kv: &KnotVector, rule: &GaussRule) -> Result<Self> {
        let bp = kv.breakpoints();
        let mut out = Self { x: Vec::new(), w: Vec::new(), b: Vec::new(), db: Vec::new(), m: Vec::new() };
        for cell in bp.windows(2) {
            for (x, w) in rule.on(cell[0], cell[1]) {
                out.x.push(x);
                out.w.push(w);
                out.b.push(kv.eval_b(x)?);
                out.db.push(kv.eval_b_derivative(x)?);
                out.m.push(kv.eval_m(x)?);
            }
        }
        Ok(out)
    }
}

/// Tensor Gauss points of every logical cell with cached basis values,
/// physical positions and Jacobians.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    space: TensorDeRham,
    points: usize,
    s: AxisSamples,
    theta: AxisSamples,
    // row-major in (s-point, θ-point)
    phys: Vec<[f64; 2]>,
    jac: Vec<Jacobian>,
}

/// One quadrature point: logical coordinates, logical weight, image and Jacobian.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub s: f64,
    pub theta: f64,
    pub weight: f64,
    pub x: [f64; 2],
    pub jac: Jacobian,
}

/// Local basis functions of one cell: global indices and, for each point of
/// the cell, the logical vector value of each function (scalars in slot 0).
struct CellBasis {
    index: Vec<usize>,
    values: Vec<Vec<[f64; 2]>>,
    weight: Vec<f64>,
    jac: Vec<Jacobian>,
}

impl QuadratureGrid {
    /// Grid with `p + 2` Gauss points per direction and cell.
    pub fn new(space: &TensorDeRham, map: &PolarMapping) -> Result<Self> {
        Self::with_points(space, map, space.degree() + 2)
    }

    pub fn with_points(space: &TensorDeRham, map: &PolarMapping, points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidInput("quadrature needs at least one point per cell".into()));
        }
        let rule = GaussRule::new(points);
        let s = AxisSamples::new(space.kv_s(), &rule)?;
        let theta = AxisSamples::new(space.kv_theta(), &rule)?;
        let mut phys = Vec::with_capacity(s.x.len() * theta.x.len());
        let mut jac = Vec::with_capacity(phys.capacity());
        for &sv in &s.x {
            for &tv in &theta.x {
                phys.push(map.eval_map(sv, tv)?);
                jac.push(map.jacobian(sv, tv)?);
            }
        }
        Ok(Self { space: space.clone(), points, s, theta, phys, jac })
    }

    pub fn space(&self) -> &TensorDeRham {
        &self.space
    }

    pub fn points_per_cell(&self) -> usize {
        self.points
    }

    pub fn len(&self) -> usize {
        self.phys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phys.is_empty()
    }

    fn point(&self, a: usize, b: usize) -> QuadPoint {
        let k = a * self.theta.x.len() + b;
        QuadPoint {
            s: self.s.x[a],
            theta: self.theta.x[b],
            weight: self.s.w[a] * self.theta.w[b],
            x: self.phys[k],
            jac: self.jac[k],
        }
    }

    /// All quadrature points, cell by cell.
    pub fn iter(&self) -> impl Iterator<Item = QuadPoint> + '_ {
        let nts = self.theta.x.len();
        (0..self.s.x.len()).flat_map(move |a| (0..nts).map(move |b| self.point(a, b)))
    }

    /// `∫_{Ω_h} 1 = Σ w |det J|`.
    pub fn area(&self) -> f64 {
        self.iter().map(|q| q.weight * q.jac.det.abs()).sum()
    }

    fn cells(&self) -> (usize, usize) {
        (self.s.x.len() / self.points, self.theta.x.len() / self.points)
    }

    fn cell_basis(&self, level: usize, ci: usize, cj: usize) -> CellBasis {
        let sp = &self.space;
        let q = self.points;
        let nts = self.theta.x.len();
        let pts: Vec<(usize, usize)> =
            (ci * q..(ci + 1) * q).flat_map(|a| (cj * q..(cj + 1) * q).map(move |b| (a, b))).collect();
        let (a0, b0) = pts[0];
        let mut index = Vec::new();
        // (s-family, θ-family, component) of each block
        let blocks: &[(bool, bool, usize)] = match level {
            0 => &[(false, false, 0)],
            1 => &[(true, false, 0), (false, true, 1)],
            2 => &[(true, true, 0)],
            _ => panic!("de Rham level {level} out of range"),
        };
        let pick = |ax: &AxisSamples, m: bool, k: usize| if m { ax.m[k].clone() } else { ax.b[k].clone() };
        let mut layout = Vec::new();
        for &(ms, mt, comp) in blocks {
            let es = pick(&self.s, ms, a0);
            let et = pick(&self.theta, mt, b0);
            for (ls, (i, _)) in es.iter().enumerate() {
                for (lt, (j, _)) in et.iter().enumerate() {
                    index.push(match (level, comp) {
                        (0, _) => sp.idx0(i, j),
                        (1, 0) => sp.idx1(crate::derham::Component::S, i, j),
                        (1, _) => sp.idx1(crate::derham::Component::Theta, i, j),
                        _ => sp.idx2(i, j),
                    });
                    layout.push((ms, mt, comp, ls, lt));
                }
            }
        }
        let mut values = Vec::with_capacity(pts.len());
        let mut weight = Vec::with_capacity(pts.len());
        let mut jac = Vec::with_capacity(pts.len());
        for &(a, b) in &pts {
            let row: Vec<[f64; 2]> = layout
                .iter()
                .map(|&(ms, mt, comp, ls, lt)| {
                    let vs = if ms { self.s.m[a].values[ls] } else { self.s.b[a].values[ls] };
                    let vt = if mt { self.theta.m[b].values[lt] } else { self.theta.b[b].values[lt] };
                    let mut v = [0.0; 2];
                    v[comp] = vs * vt;
                    v
                })
                .collect();
            values.push(row);
            weight.push(self.s.w[a] * self.theta.w[b]);
            jac.push(self.jac[a * nts + b]);
        }
        CellBasis { index, values, weight, jac }
    }

    /// Triplets of one radial row of cells, in cell order.
    fn row_triplets(&self, level: usize, ci: usize) -> Vec<(usize, usize, f64)> {
        let (_, cells_t) = self.cells();
        let mut out = Vec::new();
        for cj in 0..cells_t {
            let cb = self.cell_basis(level, ci, cj);
            let n = cb.index.len();
            let mut local = vec![0.0; n * n];
            for (k, vals) in cb.values.iter().enumerate() {
                let jac = &cb.jac[k];
                let w = cb.weight[k];
                match level {
                    0 | 2 => {
                        let f = if level == 0 { w * jac.det.abs() } else { w / jac.det.abs() };
                        for u in 0..n {
                            let fu = f * vals[u][0];
                            for v in 0..n {
                                local[u * n + v] += fu * vals[v][0];
                            }
                        }
                    }
                    _ => {
                        let g = jac.covariant_metric();
                        let sgn = jac.det.signum();
                        for u in 0..n {
                            let a = vals[u];
                            let ga = [
                                sgn * w * (g[0][0] * a[0] + g[1][0] * a[1]),
                                sgn * w * (g[0][1] * a[0] + g[1][1] * a[1]),
                            ];
                            for v in 0..n {
                                local[u * n + v] += ga[0] * vals[v][0] + ga[1] * vals[v][1];
                            }
                        }
                    }
                }
            }
            for u in 0..n {
                for v in 0..n {
                    out.push((cb.index[u], cb.index[v], local[u * n + v]));
                }
            }
        }
        out
    }

    /// Mass matrix `𝐌^ℓ` of the broken space on `Ω_h`. Entries of levels 1
    /// and 2 near the pole are quadrature dependent.
    pub fn mass_matrix(&self, level: usize) -> SparseOperator {
        let (cells_s, _) = self.cells();
        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<(usize, usize, f64)>> =
            (0..cells_s).into_par_iter().map(|ci| self.row_triplets(level, ci)).collect();
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<(usize, usize, f64)>> = (0..cells_s).map(|ci| self.row_triplets(level, ci)).collect();
        let n = self.space.dim(level);
        let m = SparseOperator::from_triplets(n, n, rows.into_iter().flatten());
        m.pruned(1e-15)
    }

    /// Moments `∫ g · Λ^ℓ_μ` of a physical field against the pushed-forward basis.
    pub fn load_vector<G>(&self, level: usize, g: G) -> Vec<f64>
    where
        G: Fn([f64; 2]) -> FieldValue + Sync,
    {
        let (cells_s, cells_t) = self.cells();
        let row = |ci: usize| -> Vec<(usize, f64)> {
            let mut out = Vec::new();
            for cj in 0..cells_t {
                let cb = self.cell_basis(level, ci, cj);
                let a0 = ci * self.points;
                let b0 = cj * self.points;
                let mut local = vec![0.0; cb.index.len()];
                for (k, vals) in cb.values.iter().enumerate() {
                    let (a, b) = (a0 + k / self.points, b0 + k % self.points);
                    let qp = self.point(a, b);
                    let gv = g(qp.x);
                    let jac = &qp.jac;
                    for (u, val) in vals.iter().enumerate() {
                        // physical measure |det J| cancels the level-2 pushforward
                        local[u] += qp.weight
                            * match level {
                                0 => gv.scalar() * val[0] * jac.det.abs(),
                                1 => {
                                    let gl = jac.transpose_apply(gv.vector());
                                    jac.det.signum() * (gl[0] * val[0] + gl[1] * val[1])
                                }
                                _ => jac.det.signum() * gv.scalar() * val[0],
                            };
                    }
                }
                out.extend(cb.index.iter().copied().zip(local));
            }
            out
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<(usize, f64)>> = (0..cells_s).into_par_iter().map(row).collect();
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<(usize, f64)>> = (0..cells_s).map(row).collect();
        let mut f = vec![0.0; self.space.dim(level)];
        for (mu, v) in rows.into_iter().flatten() {
            f[mu] += v;
        }
        f
    }

    /// Physical value of a spline field at grid point `(a, b)`.
    fn field_at(&self, c: &FieldCoeffs, a: usize, b: usize) -> FieldValue {
        let sp = &self.space;
        let jac = &self.jac[a * self.theta.x.len() + b];
        match c.level {
            0 => {
                let mut v = 0.0;
                for (i, bi) in self.s.b[a].iter() {
                    for (j, bj) in self.theta.b[b].iter() {
                        v += c.data[sp.idx0(i, j)] * bi * bj;
                    }
                }
                FieldValue::Scalar(v)
            }
            1 => {
                let mut v = [0.0; 2];
                for (i, mi) in self.s.m[a].iter() {
                    for (j, bj) in self.theta.b[b].iter() {
                        v[0] += c.data[sp.idx1(crate::derham::Component::S, i, j)] * mi * bj;
                    }
                }
                for (i, bi) in self.s.b[a].iter() {
                    for (j, mj) in self.theta.m[b].iter() {
                        v[1] += c.data[sp.idx1(crate::derham::Component::Theta, i, j)] * bi * mj;
                    }
                }
                FieldValue::Vector(jac.inverse_transpose_apply(v))
            }
            2 => {
                let mut v = 0.0;
                for (i, mi) in self.s.m[a].iter() {
                    for (j, mj) in self.theta.m[b].iter() {
                        v += c.data[sp.idx2(i, j)] * mi * mj;
                    }
                }
                FieldValue::Scalar(v / jac.det)
            }
            l => panic!("de Rham level {l} out of range"),
        }
    }

    /// Physical gradient of a level-0 field at grid point `(a, b)`.
    fn gradient_at(&self, c: &FieldCoeffs, a: usize, b: usize) -> [f64; 2] {
        let sp = &self.space;
        let mut g = [0.0; 2];
        for ((i, bi), (_, di)) in self.s.b[a].iter().zip(self.s.db[a].iter()) {
            for ((j, bj), (_, dj)) in self.theta.b[b].iter().zip(self.theta.db[b].iter()) {
                let v = c.data[sp.idx0(i, j)];
                g[0] += v * di * bj;
                g[1] += v * bi * dj;
            }
        }
        self.jac[a * self.theta.x.len() + b].inverse_transpose_apply(g)
    }

    fn sum_points<F: Fn(usize, usize) -> f64 + Sync>(&self, f: F) -> f64 {
        let nts = self.theta.x.len();
        (0..self.s.x.len()).map(|a| (0..nts).map(|b| f(a, b) * self.s.w[a] * self.theta.w[b]).sum::<f64>()).sum()
    }

    fn check(&self, c: &FieldCoeffs) -> Result<()> {
        if c.level > 2 || c.data.len() != self.space.dim(c.level) {
            return Err(Error::InvalidInput("coefficients do not match the quadrature space".into()));
        }
        Ok(())
    }

    /// Squared physical `L²` norm of a spline field.
    pub fn l2_norm_sq(&self, c: &FieldCoeffs) -> Result<f64> {
        self.check(c)?;
        let nts = self.theta.x.len();
        Ok(self.sum_points(|a, b| sq(self.field_at(c, a, b)) * self.jac[a * nts + b].det.abs()))
    }

    /// Squared `H¹` seminorm `‖∇φ‖²` of a level-0 field.
    pub fn h1_seminorm_sq(&self, c: &FieldCoeffs) -> Result<f64> {
        self.check(c)?;
        if c.level != 0 {
            return Err(Error::InvalidInput("the H1 norm needs a level-0 field".into()));
        }
        let nts = self.theta.x.len();
        Ok(self.sum_points(|a, b| {
            let g = self.gradient_at(c, a, b);
            (g[0] * g[0] + g[1] * g[1]) * self.jac[a * nts + b].det.abs()
        }))
    }

    /// `‖a − b‖_{L²} / ‖b‖_{L²}` on `Ω_h`.
    pub fn l2_error(&self, a: &FieldCoeffs, b: &FieldCoeffs) -> Result<f64> {
        let diff = difference(a, b)?;
        relative(self.l2_norm_sq(&diff)?, self.l2_norm_sq(b)?)
    }

    /// `‖a − b‖_{H¹} / ‖b‖_{H¹}` on `Ω_h` with the full norm `‖φ‖² + ‖∇φ‖²`.
    pub fn h1_error(&self, a: &FieldCoeffs, b: &FieldCoeffs) -> Result<f64> {
        let diff = difference(a, b)?;
        let num = self.l2_norm_sq(&diff)? + self.h1_seminorm_sq(&diff)?;
        let den = self.l2_norm_sq(b)? + self.h1_seminorm_sq(b)?;
        relative(num, den)
    }

    /// `‖φ_h − g‖ / ‖g‖` against a physical field evaluated at the quadrature points.
    pub fn l2_error_exact<G>(&self, c: &FieldCoeffs, g: G) -> Result<f64>
    where
        G: Fn([f64; 2]) -> FieldValue + Sync,
    {
        self.check(c)?;
        let nts = self.theta.x.len();
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..self.s.x.len() {
            for b in 0..nts {
                let k = a * nts + b;
                let w = self.s.w[a] * self.theta.w[b] * self.jac[k].det.abs();
                let exact = g(self.phys[k]);
                num += w * sq(sub(self.field_at(c, a, b), exact));
                den += w * sq(exact);
            }
        }
        relative(num, den)
    }

    /// `∫_{Ω_h} f_h` of a level-0 or level-2 field.
    pub fn integral(&self, c: &FieldCoeffs) -> Result<f64> {
        self.check(c)?;
        if c.level == 1 {
            return Err(Error::InvalidInput("integral of a vector field".into()));
        }
        let nts = self.theta.x.len();
        Ok(self.sum_points(|a, b| self.field_at(c, a, b).scalar() * self.jac[a * nts + b].det.abs()))
    }
}

fn sq(v: FieldValue) -> f64 {
    match v {
        FieldValue::Scalar(x) => x * x,
        FieldValue::Vector([x, y]) => x * x + y * y,
    }
}

fn sub(a: FieldValue, b: FieldValue) -> FieldValue {
    match (a, b) {
        (FieldValue::Scalar(x), FieldValue::Scalar(y)) => FieldValue::Scalar(x - y),
        (FieldValue::Vector(x), FieldValue::Vector(y)) => FieldValue::Vector([x[0] - y[0], x[1] - y[1]]),
        _ => panic!("mismatched field kinds"),
    }
}

fn difference(a: &FieldCoeffs, b: &FieldCoeffs) -> Result<FieldCoeffs> {
    if a.level != b.level || a.data.len() != b.data.len() {
        return Err(Error::InvalidInput("fields live in different spaces".into()));
    }
    Ok(FieldCoeffs { level: a.level, data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect() })
}

fn relative(num_sq: f64, den_sq: f64) -> Result<f64> {
    if den_sq <= 0.0 {
        return Err(Error::InvalidInput("relative error with a zero reference norm".into()));
    }
    Ok((num_sq / den_sq).sqrt())
}

/// Regularized mass `𝐏ᵀ𝐌𝐏 + (𝐈−𝐏)ᵀ(𝐈−𝐏)`.
pub fn regularized_mass(mass: &SparseOperator, proj: &SparseOperator) -> SparseOperator {
    let n = mass.nrows();
    assert_eq!(proj.shape(), (n, n), "projection and mass matrix shapes differ");
    let pt = proj.transpose();
    let ptmp = pt.matmul(&mass.matmul(proj));
    let q = SparseOperator::identity(n).sub(proj);
    let qtq = q.transpose().matmul(&q);
    symmetrized(&ptmp.add(&qtq)).pruned(1e-15)
}

/// `(A + Aᵀ)/2`, removing roundoff asymmetry of triple products.
pub fn symmetrized(a: &SparseOperator) -> SparseOperator {
    a.add_scaled(0.5, &a.transpose(), 0.5)
}
