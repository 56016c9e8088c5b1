//! Univariate B-splines and M-splines on open and periodic knot vectors.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;
use crate::sparse::SparseOperator;

const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flavor {
    /// Clamped knots on `[0, length]`.
    Open { length: f64 },
    /// Uniform knots `2πj/n` on the circle.
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    flavor: Flavor,
    // open: full clamped sequence; periodic: extended uniform sequence
    // ext[m] = (m - p)·Δθ for m in 0..n+2p+1
    knots: Vec<f64>,
    dim: usize,
    assumption1_ok: bool,
}

/// Which family to evaluate on a knot vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    B,
    M,
}

/// Nonzero basis values at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasisEval {
    pub first_index: usize,
    pub values: Vec<f64>,
    /// Periodic wrap-around modulus, `None` on open knots.
    pub modulus: Option<usize>,
}

impl SplineBasisEval {
    /// `(basis index, value)` pairs with periodic indices already wrapped.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(move |(a, &v)| {
            let idx = self.first_index + a;
            (self.modulus.map_or(idx, |m| idx % m), v)
        })
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Value of basis function `index` (zero outside the local support).
    pub fn get(&self, index: usize) -> f64 {
        self.iter().filter(|&(i, _)| i == index).map(|(_, v)| v).sum()
    }
}

pub fn make_open_knots(degree: usize, breakpoints: &[f64]) -> Result<KnotVector> {
    if degree == 0 {
        return Err(Error::InvalidInput("spline degree must be at least 1".into()));
    }
    if breakpoints.len() < 2 {
        return Err(Error::InvalidInput("need at least two breakpoints".into()));
    }
    if breakpoints[0] != 0.0 {
        return Err(Error::InvalidInput("first breakpoint must be 0".into()));
    }
    if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || breakpoints.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("breakpoints must be finite and strictly increasing".into()));
    }
    let length = *breakpoints.last().unwrap();
    let mut knots = vec![0.0; degree];
    knots.extend_from_slice(breakpoints);
    knots.extend(std::iter::repeat_n(length, degree));
    let dim = breakpoints.len() - 1 + degree;
    Ok(KnotVector { degree, flavor: Flavor::Open { length }, knots, dim, assumption1_ok: true })
}

/// Uniform open knots with `cells` cells on `[0, length]`.
pub fn make_uniform_open_knots(degree: usize, cells: usize, length: f64) -> Result<KnotVector> {
    if cells == 0 || !(length > 0.0) {
        return Err(Error::InvalidInput("need at least one cell and a positive length".into()));
    }
    let bp: Vec<f64> = (0..=cells).map(|i| length * i as f64 / cells as f64).collect();
    make_open_knots(degree, &bp)
}

pub fn make_periodic_knots(degree: usize, n_theta: usize) -> Result<KnotVector> {
    if degree == 0 {
        return Err(Error::InvalidInput("spline degree must be at least 1".into()));
    }
    if n_theta <= degree {
        return Err(Error::InvalidInput(format!(
            "periodic knots need n_theta > degree, got n_theta={n_theta}, degree={degree}"
        )));
    }
    let dtheta = TAU / n_theta as f64;
    let knots = (0..n_theta + 2 * degree + 1).map(|m| (m as f64 - degree as f64) * dtheta).collect();
    Ok(KnotVector {
        degree,
        flavor: Flavor::Periodic,
        knots,
        dim: n_theta,
        assumption1_ok: n_theta.is_multiple_of(4) && n_theta >= 4 * degree,
    })
}

impl KnotVector {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.flavor, Flavor::Periodic)
    }

    /// Number of B-splines.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of M-splines.
    pub fn dim_m(&self) -> usize {
        if self.is_periodic() {
            self.dim
        } else {
            self.dim - 1
        }
    }

    pub fn dim_of(&self, family: Family) -> usize {
        match family {
            Family::B => self.dim(),
            Family::M => self.dim_m(),
        }
    }

    pub fn assumption1_ok(&self) -> bool {
        self.assumption1_ok
    }

    /// Full knot sequence (open) or one period of breakpoints `θ_0..θ_{n-1}` (periodic).
    pub fn knots(&self) -> &[f64] {
        match self.flavor {
            Flavor::Open { .. } => &self.knots,
            Flavor::Periodic => &self.knots[self.degree..self.degree + self.dim],
        }
    }

    /// Domain length: `L` or `2π`.
    pub fn length(&self) -> f64 {
        match self.flavor {
            Flavor::Open { length } => length,
            Flavor::Periodic => TAU,
        }
    }

    /// Angular step for periodic knots.
    pub fn spacing(&self) -> Option<f64> {
        self.is_periodic().then(|| TAU / self.dim as f64)
    }

    /// Distinct breakpoints including both endpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.flavor {
            Flavor::Open { .. } => {
                let n = self.knots.len();
                self.knots[self.degree..n - self.degree].to_vec()
            }
            Flavor::Periodic => self.knots[self.degree..=self.degree + self.dim].to_vec(),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Periodic angle `θ_j` for any integer `j`.
    pub fn angle(&self, j: i64) -> f64 {
        let dtheta = TAU / self.dim as f64;
        j as f64 * dtheta
    }

    /// Reduce `x` to the domain; returns the extended-knot span index and reduced x.
    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite evaluation point {x}")));
        }
        let p = self.degree;
        match self.flavor {
            Flavor::Open { length } => {
                if x < -DOMAIN_SLACK * length || x > length * (1.0 + DOMAIN_SLACK) {
                    return Err(Error::Domain { value: x, lower: 0.0, upper: length });
                }
                let x = x.clamp(0.0, length);
                let last = self.dim - 1;
                // binary search for t_k <= x < t_{k+1} with k in p..=last
                let (mut lo, mut hi) = (p, last + 1);
                if x >= self.knots[last] {
                    return Ok((last, x));
                }
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if self.knots[mid] <= x {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok((lo, x))
            }
            Flavor::Periodic => {
                let dtheta = TAU / self.dim as f64;
                let mut y = x.rem_euclid(TAU);
                if y >= TAU {
                    y = 0.0;
                }
                let cell = ((y / dtheta).floor() as usize).min(self.dim - 1);
                Ok((cell + p, y))
            }
        }
    }

    pub fn eval(&self, family: Family, x: f64) -> Result<SplineBasisEval> {
        match family {
            Family::B => self.eval_b(x),
            Family::M => self.eval_m(x),
        }
    }

    /// Nonzero B-splines at `x`.
    pub fn eval_b(&self, x: f64) -> Result<SplineBasisEval> {
        let (span, x) = self.locate(x)?;
        let p = self.degree;
        let values = basis_funs(&self.knots, span, x, p);
        Ok(self.wrap(span - p, values))
    }

    /// Nonzero M-splines at `x`; the first value belongs to index `first_index`.
    pub fn eval_m(&self, x: f64) -> Result<SplineBasisEval> {
        let (span, x) = self.locate(x)?;
        let p = self.degree;
        // degree p-1 splines on the knots without their outer entries
        let reduced = &self.knots[1..self.knots.len() - 1];
        let mut values = basis_funs(reduced, span - 1, x, p - 1);
        for (a, v) in values.iter_mut().enumerate() {
            let i = span - p + a;
            let width = self.knots[i + p + 1] - self.knots[i + 1];
            *v *= p as f64 / width;
        }
        Ok(self.wrap(span - p, values))
    }

    /// Derivatives `B_i' = M_{i-1} - M_i` of the nonzero B-splines at `x`.
    pub fn eval_b_derivative(&self, x: f64) -> Result<SplineBasisEval> {
        let m = self.eval_m(x)?;
        let p = self.degree;
        let mut values = vec![0.0; p + 1];
        for (a, v) in values.iter_mut().enumerate() {
            let left = if a > 0 { m.values[a - 1] } else { 0.0 };
            let right = if a < p { m.values[a] } else { 0.0 };
            *v = left - right;
        }
        Ok(SplineBasisEval { first_index: m.first_index, values, modulus: m.modulus })
    }

    fn wrap(&self, ext_first: usize, values: Vec<f64>) -> SplineBasisEval {
        match self.flavor {
            Flavor::Open { .. } => SplineBasisEval { first_index: ext_first, values, modulus: None },
            Flavor::Periodic => {
                // extended index e is the periodic spline j = e - p
                let n = self.dim as i64;
                let first = (ext_first as i64 - self.degree as i64).rem_euclid(n) as usize;
                SplineBasisEval { first_index: first, values, modulus: Some(self.dim) }
            }
        }
    }

    /// Sum of `c_i B_i(x)` (or M-splines).
    pub fn eval_combination(&self, family: Family, coeffs: &[f64], x: f64) -> Result<f64> {
        Ok(self.eval(family, x)?.iter().map(|(i, v)| coeffs[i] * v).sum())
    }

    /// Integrals of every basis function of `family` over `[a, b]`, as a dense vector.
    ///
    /// For periodic knots `b` may exceed `2π`; the interval is unwrapped.
    pub fn integrate_basis(&self, family: Family, a: f64, b: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim_of(family)];
        let rule = GaussRule::new(self.degree + 2);
        for (lo, hi) in self.segments(a, b) {
            for (x, w) in rule.on(lo, hi) {
                for (i, v) in self.eval(family, x)?.iter() {
                    out[i] += w * v;
                }
            }
        }
        Ok(out)
    }

    /// Split `[a, b]` at the knots it contains.
    pub fn segments(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        if !(b > a) {
            return Vec::new();
        }
        let mut cuts = vec![a];
        match self.flavor {
            Flavor::Open { .. } => {
                for &k in &self.breakpoints() {
                    if k > a && k < b {
                        cuts.push(k);
                    }
                }
            }
            Flavor::Periodic => {
                let dtheta = TAU / self.dim as f64;
                let mut m = (a / dtheta).floor() as i64 + 1;
                while (m as f64) * dtheta < b {
                    let k = m as f64 * dtheta;
                    if k > a {
                        cuts.push(k);
                    }
                    m += 1;
                }
            }
        }
        cuts.push(b);
        cuts.windows(2).filter(|w| w[1] - w[0] > 1e-15 * self.length()).map(|w| (w[0], w[1])).collect()
    }
}

/// Nonzero degree-`p` B-splines `N_{span-p..=span}` at `x` (Piegl–Tiller A2.2).
fn basis_funs(knots: &[f64], span: usize, x: f64, p: usize) -> Vec<f64> {
    let mut n = vec![0.0; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    n[0] = 1.0;
    for j in 1..=p {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Greville abscissae, the default interpolation nodes.
pub fn greville_points(kv: &KnotVector) -> Vec<f64> {
    let p = kv.degree;
    match kv.flavor {
        Flavor::Open { length } => {
            let mut pts: Vec<f64> =
                (0..kv.dim).map(|i| kv.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64).collect();
            pts[0] = 0.0;
            pts[kv.dim - 1] = length;
            pts
        }
        Flavor::Periodic => {
            // θ_j + (p+1)Δθ/2 reduced mod 2π: half-offset for even p, on the knots for odd p
            let dtheta = TAU / kv.dim as f64;
            let offset = if p.is_multiple_of(2) { 0.5 * dtheta } else { 0.0 };
            (0..kv.dim).map(|j| j as f64 * dtheta + offset).collect()
        }
    }
}

/// Collocation matrix `A[i][j] = B_j(nodes[i])`.
pub fn interpolation_matrix(kv: &KnotVector, nodes: &[f64]) -> Result<SparseOperator> {
    if nodes.len() != kv.dim {
        return Err(Error::InvalidInput(format!("interpolation needs {} nodes, got {}", kv.dim, nodes.len())));
    }
    let mut trip = Vec::with_capacity(nodes.len() * (kv.degree + 1));
    for (r, &x) in nodes.iter().enumerate() {
        for (c, v) in kv.eval_b(x)?.iter() {
            trip.push((r, c, v));
        }
    }
    Ok(SparseOperator::from_triplets(kv.dim, kv.dim, trip))
}

/// Edges between consecutive nodes; the periodic flavor closes the loop through `2π`.
pub fn edges_from_nodes(kv: &KnotVector, nodes: &[f64]) -> Vec<(f64, f64)> {
    let mut edges: Vec<(f64, f64)> = nodes.windows(2).map(|w| (w[0], w[1])).collect();
    if kv.is_periodic() {
        edges.push((nodes[nodes.len() - 1], nodes[0] + TAU));
    }
    edges
}

/// Histopolation matrix `H[i][j] = ∫_{edge_i} M_j`.
pub fn histopolation_matrix(kv: &KnotVector, edges: &[(f64, f64)]) -> Result<SparseOperator> {
    let dim = kv.dim_m();
    if edges.len() != dim {
        return Err(Error::InvalidInput(format!("histopolation needs {dim} edges, got {}", edges.len())));
    }
    let mut trip = Vec::new();
    for (r, &(a, b)) in edges.iter().enumerate() {
        if !(b > a) {
            return Err(Error::InvalidInput(format!("degenerate edge [{a}, {b}]")));
        }
        for (c, v) in kv.integrate_basis(Family::M, a, b)?.into_iter().enumerate() {
            trip.push((r, c, v));
        }
    }
    Ok(SparseOperator::from_triplets(dim, dim, trip).pruned(1e-15))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Cox–de Boor recursion straight from the definition, right-continuous.
    fn cox_de_boor(t: &[f64], i: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            let last = t[t.len() - 1];
            let in_span = t[i] <= x && x < t[i + 1];
            let at_end = x == last && t[i] < t[i + 1] && t[i + 1] == last;
            return if in_span || at_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = t[i + p] - t[i];
        if d1 > 0.0 {
            v += (x - t[i]) / d1 * cox_de_boor(t, i, p - 1, x);
        }
        let d2 = t[i + p + 1] - t[i + 1];
        if d2 > 0.0 {
            v += (t[i + p + 1] - x) / d2 * cox_de_boor(t, i + 1, p - 1, x);
        }
        v
    }

    #[test]
    fn open_knot_examples() {
        let kv = make_open_knots(2, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]);
        assert_eq!(kv.dim(), 4);
        let kv = make_open_knots(1, &[0.0, 1.0]).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(kv.dim(), 2);
        assert_eq!(make_uniform_open_knots(3, 8, 1.0).unwrap().dim(), 11);
        assert!(make_open_knots(2, &[0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(make_open_knots(2, &[0.0, 0.7, 0.5]).is_err());
    }

    #[test]
    fn periodic_assumption_flag() {
        assert!(make_periodic_knots(2, 8).unwrap().assumption1_ok());
        assert!(!make_periodic_knots(2, 6).unwrap().assumption1_ok());
        assert!(make_periodic_knots(3, 12).unwrap().assumption1_ok());
        assert!(!make_periodic_knots(2, 3).unwrap().assumption1_ok());
        assert!(make_periodic_knots(2, 2).is_err());
    }

    #[test]
    fn endpoint_interpolation() {
        let kv = make_uniform_open_knots(2, 4, 1.0).unwrap();
        let e = kv.eval_b(0.0).unwrap();
        assert_eq!(e.get(0), 1.0);
        for i in 1..kv.dim() {
            assert_eq!(e.get(i), 0.0);
        }
        let e = kv.eval_b(1.0).unwrap();
        assert_abs_diff_eq!(e.get(kv.dim() - 1), 1.0, epsilon = 1e-15);
        assert!(kv.eval_b(1.5).is_err());
        assert!(kv.eval_b(-0.1).is_err());
    }

    #[test]
    fn matches_direct_recursion() {
        let kv = make_uniform_open_knots(2, 2, 1.0).unwrap();
        let e = kv.eval_b(0.5).unwrap();
        for i in 0..kv.dim() {
            assert_abs_diff_eq!(e.get(i), cox_de_boor(kv.knots(), i, 2, 0.5), epsilon = 1e-15);
        }
        let kv = make_open_knots(3, &[0.0, 0.1, 0.35, 0.4, 0.8, 1.3]).unwrap();
        for k in 0..50 {
            let x = 1.3 * k as f64 / 50.0 + 0.003;
            let e = kv.eval_b(x).unwrap();
            for i in 0..kv.dim() {
                assert_abs_diff_eq!(e.get(i), cox_de_boor(kv.knots(), i, 3, x), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn m_spline_values() {
        let kv = make_uniform_open_knots(2, 4, 1.0).unwrap();
        assert_abs_diff_eq!(kv.eval_m(0.0).unwrap().get(0), 8.0, epsilon = 1e-13);
        let d = kv.eval_b_derivative(0.0).unwrap();
        assert_abs_diff_eq!(d.get(0), -8.0, epsilon = 1e-13);
        assert_abs_diff_eq!(d.get(1), 8.0, epsilon = 1e-13);
        for i in 2..kv.dim() {
            assert_eq!(d.get(i), 0.0);
        }
        let integrals = kv.integrate_basis(Family::M, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(integrals[1], 1.0, epsilon = 1e-12);

        let kv = make_periodic_knots(2, 8).unwrap();
        for k in 0..17 {
            let th = 0.37 * k as f64;
            assert_abs_diff_eq!(kv.eval_m(th).unwrap().sum(), 4.0 / std::f64::consts::PI, epsilon = 1e-13);
        }
    }

    #[test]
    fn periodic_supports() {
        // B̊_j lives on [θ_j, θ_{j+p+1}], M̊_j on [θ_{j+1}, θ_{j+p+1}]
        let kv = make_periodic_knots(3, 10).unwrap();
        let dth = TAU / 10.0;
        let x = 4.5 * dth;
        let b = kv.eval_b(x).unwrap();
        let nonzero: Vec<usize> = b.iter().filter(|(_, v)| *v > 0.0).map(|(i, _)| i).collect();
        assert_eq!(nonzero, vec![1, 2, 3, 4]);
        let m = kv.eval_m(x).unwrap();
        let nonzero: Vec<usize> = m.iter().filter(|(_, v)| *v > 0.0).map(|(i, _)| i).collect();
        assert_eq!(nonzero, vec![1, 2, 3]);
        let x = 0.5 * dth;
        let b = kv.eval_b(x).unwrap();
        let mut idx: Vec<usize> = b.iter().map(|(i, _)| i).collect();
        idx.sort();
        assert_eq!(idx, vec![0, 7, 8, 9]);
    }

    #[test]
    fn greville_examples() {
        let kv = make_open_knots(2, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(greville_points(&kv), vec![0.0, 0.25, 0.75, 1.0]);
        let kv = make_periodic_knots(2, 4).unwrap();
        let g = greville_points(&kv);
        // oracle: average of the p interior knots θ_{j+1}, θ_{j+2} of each B̊_j, reduced mod 2π
        let dth = TAU / 4.0;
        let mut oracle: Vec<f64> = (0..4).map(|j| ((j + 1) as f64 * dth + (j + 2) as f64 * dth) / 2.0 % TAU).collect();
        oracle.sort_by(f64::total_cmp);
        for (a, b) in g.iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(g[0], 0.5 * dth, epsilon = 1e-15);
    }

    #[test]
    fn collocation_matrices() {
        let kv = make_uniform_open_knots(1, 2, 1.0).unwrap();
        let a = interpolation_matrix(&kv, &greville_points(&kv)).unwrap();
        assert_eq!(a.max_abs_diff(&SparseOperator::identity(3)), 0.0);

        let kv = make_periodic_knots(2, 8).unwrap();
        let nodes = greville_points(&kv);
        let a = interpolation_matrix(&kv, &nodes).unwrap();
        let d = a.to_dense();
        for r in 0..8 {
            assert_abs_diff_eq!(d[r].iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            for c in 0..8 {
                assert_abs_diff_eq!(d[r][c], d[(r + 1) % 8][(c + 1) % 8], epsilon = 1e-14);
            }
        }
        let f: Vec<f64> = nodes.iter().map(|x| x.sin()).collect();
        let mut c = f.clone();
        crate::linalg::DenseLu::from_sparse(&a).unwrap().solve_in_place(&mut c);
        for (x, fx) in nodes.iter().zip(&f) {
            assert_abs_diff_eq!(kv.eval_combination(Family::B, &c, *x).unwrap(), fx, epsilon = 1e-12);
        }

        let h = histopolation_matrix(&kv, &edges_from_nodes(&kv, &nodes)).unwrap();
        for row in h.to_dense() {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        }
    }

    /// Adaptive Simpson as an independent integration oracle.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
    }

    #[test]
    fn histopolation_against_adaptive_quadrature() {
        let kv = make_uniform_open_knots(2, 4, 1.0).unwrap();
        let nodes = greville_points(&kv);
        let edges = edges_from_nodes(&kv, &nodes);
        let h = histopolation_matrix(&kv, &edges).unwrap().to_dense();
        for (r, &(a, b)) in edges.iter().enumerate() {
            for j in 0..kv.dim_m() {
                let f = |x: f64| kv.eval_m(x).unwrap().get(j);
                // integrate span by span so the oracle never straddles a kink
                let oracle: f64 = kv.segments(a, b).iter().map(|&(lo, hi)| adaptive_simpson(&f, lo, hi, 1e-15)).sum();
                assert_abs_diff_eq!(h[r][j], oracle, epsilon = 1e-12);
            }
        }
        let col_sums: Vec<f64> = (0..kv.dim_m()).map(|j| h.iter().map(|row| row[j]).sum()).collect();
        for s in col_sums {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn discrete_trigonometry() {
        for n in [8usize, 12, 16, 20] {
            let th: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
            let sum = |f: &dyn Fn(f64) -> f64| th.iter().map(|&t| f(t)).sum::<f64>();
            let nf = n as f64;
            assert_abs_diff_eq!(sum(&|t| t.cos()), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(sum(&|t| t.sin()), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(sum(&|t| (2.0 * t).cos()), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(sum(&|t| (2.0 * t).sin()), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(sum(&|t| 2.0 * t.cos().powi(2)), nf, epsilon = 1e-12);
            assert_abs_diff_eq!(sum(&|t| 2.0 * t.sin().powi(2)), nf, epsilon = 1e-12);
            for &tk in &th {
                assert_abs_diff_eq!(sum(&|t| 2.0 * t.cos() * (t - tk).cos()), nf * tk.cos(), epsilon = 1e-12);
                assert_abs_diff_eq!(sum(&|t| 2.0 * t.sin() * (t - tk).cos()), nf * tk.sin(), epsilon = 1e-12);
            }
        }
    }

    fn knot_vectors() -> impl Strategy<Value = KnotVector> {
        let open = (1usize..=5, prop::collection::vec(0.05f64..1.0, 1..8)).prop_map(|(p, gaps)| {
            let mut bp = vec![0.0];
            for g in gaps {
                bp.push(bp.last().unwrap() + g);
            }
            make_open_knots(p, &bp).unwrap()
        });
        let periodic = (1usize..=5, 0usize..10).prop_map(|(p, extra)| make_periodic_knots(p, p + 1 + extra).unwrap());
        prop_oneof![open, periodic]
    }

    proptest! {
        #[test]
        fn partition_of_unity(kv in knot_vectors(), u in prop::collection::vec(0.0f64..=1.0, 1000)) {
            for t in u {
                let x = t * kv.length();
                let e = kv.eval_b(x).unwrap();
                prop_assert!((e.sum() - 1.0).abs() < 1e-13);
                prop_assert!(kv.eval_b_derivative(x).unwrap().sum().abs() < 1e-9);
            }
        }

        #[test]
        fn derivative_matches_finite_difference(kv in knot_vectors(), t in 0.02f64..0.98) {
            let x = t * kv.length();
            let h = 1e-6;
            let d = kv.eval_b_derivative(x).unwrap();
            let (bp, bm) = (kv.eval_b(x + h).unwrap(), kv.eval_b(x - h).unwrap());
            let bps = kv.breakpoints();
            prop_assume!(bps.iter().all(|b| (b - x).abs() > 2.0 * h));
            for i in 0..kv.dim() {
                let fd = (bp.get(i) - bm.get(i)) / (2.0 * h);
                prop_assert!((fd - d.get(i)).abs() < 1e-6 * (1.0 + d.get(i).abs()));
            }
        }

        #[test]
        fn m_spline_normalization(kv in knot_vectors()) {
            if kv.is_periodic() {
                let dth = kv.spacing().unwrap();
                for k in 0..20 {
                    let e = kv.eval_m(0.31 * k as f64).unwrap();
                    prop_assert!((e.sum() - 1.0 / dth).abs() < 1e-12 / dth);
                }
            } else {
                for v in kv.integrate_basis(Family::M, 0.0, kv.length()).unwrap() {
                    prop_assert!((v - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
