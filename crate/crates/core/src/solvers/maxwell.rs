//! Time-dependent Maxwell solver: leap-frog on the broken-FEEC curl
//! complex with regularized mass matrices, and its Suzuki–Yoshida
//! fourth-order composition.

use crate::assembly::regularized_mass;
use crate::conforming::ConformingProjections;
use crate::derham::{Component, FieldCoeffs, FieldValue, TensorDeRham};
use crate::error::{Error, Result};
use crate::geometry::PolarMapping;
use crate::linalg::{dot, norm, BandedCholesky};
use crate::projection::GeometricProjector;
use crate::sparse::SparseOperator;

/// Triple-jump weights `(w₁, w₀)` with `w₁ = 1/(2 − 2^{1/3})`, `w₀ = 1 − 2w₁`.
pub fn suzuki_yoshida_weights() -> (f64, f64) {
    let w1 = 1.0 / (2.0 - 2f64.cbrt());
    (w1, 1.0 - 2.0 * w1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellState {
    pub e: FieldCoeffs,
    pub b: FieldCoeffs,
    pub t: f64,
}

/// Assembled operators of the discrete scheme.
#[derive(Debug, Clone)]
pub struct MaxwellOperators {
    p1: SparseOperator,
    cp: SparseOperator,
    m1t: SparseOperator,
    m1t_chol: BandedCholesky,
    m2t: SparseOperator,
}

/// Ordering of level-1 unknowns ring by ring (`s`-block row, then `θ`-block row)
/// that keeps `𝐌̃¹` banded; `perm[new] = old`.
pub fn ring_interleaved_order(space: &TensorDeRham) -> Vec<usize> {
    let (ns, nt) = (space.n_s(), space.n_theta());
    let mut perm = Vec::with_capacity(space.dim(1));
    for i in 0..ns {
        if i + 1 < ns {
            perm.extend((0..nt).map(|j| space.idx1(Component::S, i, j)));
        }
        perm.extend((0..nt).map(|j| space.idx1(Component::Theta, i, j)));
    }
    perm
}

impl MaxwellOperators {
    /// `m1`, `m2` are the broken mass matrices; `proj` fixes the conforming
    /// subspaces (with the tangential boundary condition for perfect conductors).
    pub fn new(proj: &ConformingProjections, m1: &SparseOperator, m2: &SparseOperator) -> Result<Self> {
        let space = proj.space();
        let p1 = proj.matrix(1).clone();
        let cp = space.curl_matrix().matmul(&p1);
        let m1t = regularized_mass(m1, &p1);
        let m2t = regularized_mass(m2, proj.matrix(2));
        let m1t_chol = BandedCholesky::factor(&m1t, Some(ring_interleaved_order(space)))?;
        Ok(Self { p1, cp, m1t, m1t_chol, m2t })
    }

    pub fn curl_projected(&self) -> &SparseOperator {
        &self.cp
    }

    pub fn regularized_mass1(&self) -> &SparseOperator {
        &self.m1t
    }

    pub fn regularized_mass2(&self) -> &SparseOperator {
        &self.m2t
    }

    /// `½(𝐄ᵀ𝐌̃¹𝐄 + 𝐁ᵀ𝐌̃²𝐁)`.
    pub fn energy(&self, state: &MaxwellState) -> f64 {
        0.5 * (dot(&state.e.data, &self.m1t.apply(&state.e.data)) + dot(&state.b.data, &self.m2t.apply(&state.b.data)))
    }

    /// `‖(𝐈−𝐏¹)𝐄‖ / ‖𝐄‖`.
    pub fn conformity_defect(&self, e: &FieldCoeffs) -> f64 {
        let pe = self.p1.apply(&e.data);
        let n = norm(&e.data);
        if n == 0.0 {
            return 0.0;
        }
        norm(&e.data.iter().zip(&pe).map(|(a, b)| a - b).collect::<Vec<_>>()) / n
    }

    /// Largest eigenvalue of `𝐌̃¹⁻¹(𝐂𝐏¹)ᵀ𝐌̃²(𝐂𝐏¹)` by power iteration.
    pub fn max_frequency_squared(&self, iterations: usize) -> f64 {
        let n = self.m1t.nrows();
        // deterministic start with all harmonics present
        let mut x: Vec<f64> = (0..n).map(|k| 1.0 + ((k * 7919) % 101) as f64 / 101.0).collect();
        let mut lambda = 0.0;
        for _ in 0..iterations {
            let y = self.m1t_chol.solve(&self.cp.apply_transpose(&self.m2t.apply(&self.cp.apply(&x))));
            let num = dot(&y, &self.m1t.apply(&x));
            let den = dot(&x, &self.m1t.apply(&x));
            lambda = num / den;
            let ny = norm(&y);
            if ny == 0.0 {
                return 0.0;
            }
            x = y.into_iter().map(|v| v / ny).collect();
        }
        lambda
    }

    /// Largest stable step for the fourth-order composition, with a 10% margin.
    pub fn stable_step(&self) -> f64 {
        let lambda = self.max_frequency_squared(100) * 1.05;
        let (_, w0) = suzuki_yoshida_weights();
        0.9 * 2.0 / (w0.abs() * lambda.sqrt())
    }
}

/// One leap-frog (Strang) step of size `dt`; `source` holds the time-averaged
/// current moments `𝐉ⁿ⁺½`.
pub fn maxwell_leapfrog_step(
    state: &MaxwellState,
    ops: &MaxwellOperators,
    dt: f64,
    source: Option<&[f64]>,
) -> Result<MaxwellState> {
    let (ne, nb) = (ops.m1t.nrows(), ops.m2t.nrows());
    if state.e.data.len() != ne || state.b.data.len() != nb {
        return Err(Error::InvalidInput("state does not match the Maxwell operators".into()));
    }
    let half = 0.5 * dt;
    let ce = ops.cp.apply(&state.e.data);
    let b_half: Vec<f64> = state.b.data.iter().zip(&ce).map(|(b, c)| b - half * c).collect();
    let mut rhs = ops.cp.apply_transpose(&ops.m2t.apply(&b_half));
    if let Some(j) = source {
        if j.len() != ne {
            return Err(Error::InvalidInput("current array does not match level 1".into()));
        }
        let pj = ops.p1.apply_transpose(j);
        rhs.iter_mut().zip(&pj).for_each(|(r, v)| *r -= v);
    }
    let de = ops.m1t_chol.solve(&rhs);
    if de.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("mass solve produced non-finite values".into()));
    }
    let e: Vec<f64> = state.e.data.iter().zip(&de).map(|(e, d)| e + dt * d).collect();
    let ce = ops.cp.apply(&e);
    let b: Vec<f64> = b_half.iter().zip(&ce).map(|(b, c)| b - half * c).collect();
    Ok(MaxwellState { e: FieldCoeffs { level: 1, data: e }, b: FieldCoeffs { level: 2, data: b }, t: state.t + dt })
}

/// Current moments for the sub-step `[t, t + dt]`.
pub type CurrentSource<'a> = &'a dyn Fn(f64, f64) -> Vec<f64>;

/// `n_steps` macro-steps of size `dt`, each the composition of leap-frog
/// sub-steps `w₁dt, w₀dt, w₁dt`.
pub fn suzuki_yoshida4(
    state: &MaxwellState,
    ops: &MaxwellOperators,
    dt: f64,
    n_steps: usize,
    source: Option<CurrentSource>,
) -> Result<MaxwellState> {
    let (w1, w0) = suzuki_yoshida_weights();
    let mut st = state.clone();
    for _ in 0..n_steps {
        for w in [w1, w0, w1] {
            let h = w * dt;
            let j = source.map(|f| f(st.t, h));
            st = maxwell_leapfrog_step(&st, ops, h, j.as_deref())?;
        }
    }
    Ok(st)
}

/// Smallest physical length of the mapped grid edges, skipping the collapsed ring.
pub fn min_edge_length(space: &TensorDeRham, map: &PolarMapping) -> Result<f64> {
    let bs = space.kv_s().breakpoints();
    let bt = space.kv_theta().breakpoints();
    let mut h = f64::INFINITY;
    for (a, &s) in bs.iter().enumerate() {
        for w in bt.windows(2) {
            let x0 = map.eval_map(s, w[0])?;
            if a + 1 < bs.len() {
                let x1 = map.eval_map(bs[a + 1], w[0])?;
                h = h.min((x1[0] - x0[0]).hypot(x1[1] - x0[1]));
            }
            if s > 0.0 {
                let x1 = map.eval_map(s, w[1])?;
                h = h.min((x1[0] - x0[0]).hypot(x1[1] - x0[1]));
            }
        }
    }
    Ok(h)
}

/// Time step hitting `t_final` exactly: `0.5·h_min` (or `requested`), capped by
/// the stability bound. Returns `(dt, n_steps)`.
pub fn choose_time_step(
    ops: &MaxwellOperators,
    space: &TensorDeRham,
    map: &PolarMapping,
    t_final: f64,
    requested: Option<f64>,
) -> Result<(f64, usize)> {
    if !(t_final > 0.0) {
        return Err(Error::InvalidInput("final time must be positive".into()));
    }
    let mut dt = match requested {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::InvalidInput(format!("time step must be positive, got {dt}"))),
        None => 0.5 * min_edge_length(space, map)?,
    };
    dt = dt.min(ops.stable_step());
    let n = (t_final / dt).ceil().max(1.0) as usize;
    Ok((t_final / n as f64, n))
}

/// Gaussian pulse `E = (y, −x) exp(−|x|²/2σ²)`.
pub fn gaussian_pulse_e(x: [f64; 2], sigma: f64) -> [f64; 2] {
    let g = (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * sigma * sigma)).exp();
    [x[1] * g, -x[0] * g]
}

/// `curl E = ∂_x E_y − ∂_y E_x = (|x|²/σ² − 2) exp(−|x|²/2σ²)`.
pub fn gaussian_pulse_b(x: [f64; 2], sigma: f64) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let s2 = sigma * sigma;
    (r2 / s2 - 2.0) * (-r2 / (2.0 * s2)).exp()
}

/// Conforming projections `𝐏Π` of the Gaussian pulse and its curl.
pub fn gaussian_pulse_initial(
    gp: &GeometricProjector,
    proj: &ConformingProjections,
    map: &PolarMapping,
    sigma: f64,
) -> Result<MaxwellState> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("pulse width must be positive, got {sigma}")));
    }
    let e = gp.project_conforming(1, proj, map, |x| FieldValue::Vector(gaussian_pulse_e(x, sigma)))?;
    let b = gp.project_conforming(2, proj, map, |x| FieldValue::Scalar(gaussian_pulse_b(x, sigma)))?;
    Ok(MaxwellState { e, b, t: 0.0 })
}
