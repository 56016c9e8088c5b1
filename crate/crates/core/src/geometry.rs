//! Polar mappings, Jacobians, pole singularity checks and the
//! pushforward/pullback transforms between logical and physical fields.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use crate::derham::{FieldValue, TensorDeRham};
use crate::error::{Error, Result};
use crate::projection::KroneckerSolver;
use crate::splines::{greville_points, interpolation_matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    /// `m[r][c] = ∂_c F_r` with columns `(∂_s, ∂_θ)`.
    pub m: [[f64; 2]; 2],
    pub det: f64,
}

impl Jacobian {
    pub fn new(m: [[f64; 2]; 2]) -> Self {
        Self { m, det: m[0][0] * m[1][1] - m[0][1] * m[1][0] }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.m[0][0] * v[0] + self.m[0][1] * v[1], self.m[1][0] * v[0] + self.m[1][1] * v[1]]
    }

    pub fn transpose_apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.m[0][0] * v[0] + self.m[1][0] * v[1], self.m[0][1] * v[0] + self.m[1][1] * v[1]]
    }

    /// `J^{-T} v`; requires a nonzero determinant.
    pub fn inverse_transpose_apply(&self, v: [f64; 2]) -> [f64; 2] {
        let d = self.det;
        [(self.m[1][1] * v[0] - self.m[1][0] * v[1]) / d, (-self.m[0][1] * v[0] + self.m[0][0] * v[1]) / d]
    }

    /// `J^{-1} v`.
    pub fn inverse_apply(&self, v: [f64; 2]) -> [f64; 2] {
        let d = self.det;
        [(self.m[1][1] * v[0] - self.m[0][1] * v[1]) / d, (-self.m[1][0] * v[0] + self.m[0][0] * v[1]) / d]
    }

    /// `det J (JᵀJ)^{-1}`, the weight of the level-1 mass matrix.
    pub fn covariant_metric(&self) -> [[f64; 2]; 2] {
        let g00 = self.m[0][0].powi(2) + self.m[1][0].powi(2);
        let g11 = self.m[0][1].powi(2) + self.m[1][1].powi(2);
        let g01 = self.m[0][0] * self.m[0][1] + self.m[1][0] * self.m[1][1];
        // (JᵀJ)^{-1} = adj / det², so det·(JᵀJ)^{-1} = adj / det
        let d = self.det;
        [[g11 / d, -g01 / d], [-g01 / d, g00 / d]]
    }
}

/// Tensor spline mapping `F = x₀ + Σ P_ij B_i(s) B̊_j(θ)`; control points are
/// stored as offsets from the pole.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineMapping {
    space: TensorDeRham,
    control: Vec<[f64; 2]>,
    pole: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolarMapping {
    /// `x₀ + (s cos θ, s sin θ)` on `[0, L]`.
    Analytical {
        pole: [f64; 2],
        length: f64,
    },
    Spline(SplineMapping),
}

impl SplineMapping {
    /// Offsets must be row-major over `(i, j)` like level-0 coefficients.
    pub fn new(space: TensorDeRham, pole: [f64; 2], control: Vec<[f64; 2]>) -> Result<Self> {
        if control.len() != space.dim(0) {
            return Err(Error::InvalidInput(format!(
                "mapping needs {} control points, got {}",
                space.dim(0),
                control.len()
            )));
        }
        Ok(Self { space, control, pole })
    }

    pub fn space(&self) -> &TensorDeRham {
        &self.space
    }

    pub fn control(&self) -> &[[f64; 2]] {
        &self.control
    }

    pub fn pole(&self) -> [f64; 2] {
        self.pole
    }

    /// Radius of the first control ring (mean distance to the pole).
    pub fn rho1(&self) -> f64 {
        let nt = self.space.n_theta();
        (0..nt).map(|j| norm2(self.control[self.space.idx0(1, j)])).sum::<f64>() / nt as f64
    }

    /// Largest distance of rings 0 and 1 from the exact polar form.
    pub fn polar_form_defect(&self) -> f64 {
        let (nt, rho1) = (self.space.n_theta(), self.rho1());
        let mut defect: f64 = 0.0;
        for j in 0..nt {
            let th = self.space.kv_theta().angle(j as i64);
            defect = defect.max(norm2(self.control[self.space.idx0(0, j)]));
            let p = self.control[self.space.idx0(1, j)];
            defect = defect.max(norm2([p[0] - rho1 * th.cos(), p[1] - rho1 * th.sin()]));
        }
        defect
    }
}

impl PolarMapping {
    pub fn analytical(pole: [f64; 2]) -> Self {
        PolarMapping::Analytical { pole, length: 1.0 }
    }

    pub fn pole(&self) -> [f64; 2] {
        match self {
            PolarMapping::Analytical { pole, .. } => *pole,
            PolarMapping::Spline(m) => m.pole,
        }
    }

    pub fn length(&self) -> f64 {
        match self {
            PolarMapping::Analytical { length, .. } => *length,
            PolarMapping::Spline(m) => m.space.length(),
        }
    }

    pub fn is_analytical(&self) -> bool {
        matches!(self, PolarMapping::Analytical { .. })
    }

    fn check_s(&self, s: f64) -> Result<()> {
        let l = self.length();
        if !(s >= -1e-12 * l && s <= l * (1.0 + 1e-12)) {
            return Err(Error::Domain { value: s, lower: 0.0, upper: l });
        }
        Ok(())
    }

    pub fn eval_map(&self, s: f64, theta: f64) -> Result<[f64; 2]> {
        self.check_s(s)?;
        match self {
            PolarMapping::Analytical { pole, .. } => Ok([pole[0] + s * theta.cos(), pole[1] + s * theta.sin()]),
            PolarMapping::Spline(m) => {
                let bs = m.space.kv_s().eval_b(s)?;
                let bt = m.space.kv_theta().eval_b(theta)?;
                let mut x = [0.0; 2];
                for (i, bi) in bs.iter() {
                    for (j, bj) in bt.iter() {
                        let p = m.control[m.space.idx0(i, j)];
                        x[0] += p[0] * bi * bj;
                        x[1] += p[1] * bi * bj;
                    }
                }
                Ok([m.pole[0] + x[0], m.pole[1] + x[1]])
            }
        }
    }

    pub fn jacobian(&self, s: f64, theta: f64) -> Result<Jacobian> {
        self.check_s(s)?;
        match self {
            PolarMapping::Analytical { .. } => {
                let (sn, cs) = theta.sin_cos();
                Ok(Jacobian::new([[cs, -s * sn], [sn, s * cs]]))
            }
            PolarMapping::Spline(m) => {
                let kv_s = m.space.kv_s();
                let kv_t = m.space.kv_theta();
                let (bs, ds) = (kv_s.eval_b(s)?, kv_s.eval_b_derivative(s)?);
                let (bt, dt) = (kv_t.eval_b(theta)?, kv_t.eval_b_derivative(theta)?);
                let mut jm = [[0.0; 2]; 2];
                for ((i, bi), (_, dbi)) in bs.iter().zip(ds.iter()) {
                    for ((j, bj), (_, dbj)) in bt.iter().zip(dt.iter()) {
                        let p = m.control[m.space.idx0(i, j)];
                        for r in 0..2 {
                            jm[r][0] += p[r] * dbi * bj;
                            jm[r][1] += p[r] * bi * dbj;
                        }
                    }
                }
                Ok(Jacobian::new(jm))
            }
        }
    }

    /// Logical coordinates of a physical point by Newton iteration, or `None`
    /// when the point lies outside the mapped domain.
    pub fn invert(&self, x: [f64; 2]) -> Option<(f64, f64)> {
        let pole = self.pole();
        let l = self.length();
        let (dx, dy) = (x[0] - pole[0], x[1] - pole[1]);
        let mut s = (dx * dx + dy * dy).sqrt().min(l);
        let mut th = dy.atan2(dx).rem_euclid(TAU);
        if s < 1e-14 {
            return Some((0.0, 0.0));
        }
        for _ in 0..60 {
            let f = self.eval_map(s, th).ok()?;
            let r = [f[0] - x[0], f[1] - x[1]];
            if norm2(r) < 1e-13 * (1.0 + l) {
                return (s <= l * (1.0 + 1e-9)).then_some((s.min(l), th));
            }
            let jac = self.jacobian(s, th).ok()?;
            if jac.det.abs() < 1e-300 {
                return None;
            }
            let step = jac.inverse_apply(r);
            let (mut ns, mut nth) = (s - step[0], th - step[1]);
            if ns < 0.0 {
                // crossing the pole: reflect to the opposite angle
                ns = -ns;
                nth += std::f64::consts::PI;
            }
            if ns > l {
                // allow probing slightly outside, then give up if it stays there
                if s >= l && ns > l {
                    let fb = self.eval_map(l, th).ok()?;
                    let out = norm2([fb[0] - pole[0], fb[1] - pole[1]]) < norm2([dx, dy]);
                    if out {
                        return None;
                    }
                }
                ns = l;
            }
            s = ns;
            th = nth.rem_euclid(TAU);
        }
        None
    }
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Empirical pole-singularity data of a mapping.
#[derive(Debug, Clone)]
pub struct SingularityProfile {
    pub theta: Vec<f64>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub dc: Vec<f64>,
    pub ds: Vec<f64>,
    /// `C S' − S C'` at each angle.
    pub d: Vec<f64>,
    /// Smallest `det J / s` over the full verification grid.
    pub d_star: f64,
    /// Largest mismatch between `D` and the limit of `det J / s`.
    pub limit_consistency: f64,
    /// Largest mismatch of `C, S` with the closed form (spline mappings).
    pub closed_form_defect: Option<f64>,
    /// Largest distance of control rings 0 and 1 from the polar form (spline mappings).
    pub polar_form_defect: Option<f64>,
    pub failures: Vec<String>,
}

impl SingularityProfile {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Sampling grid of the singularity verifier.
#[derive(Debug, Clone)]
pub struct SingularityGrid {
    pub n_theta: usize,
    /// Smallest radial sample; the limits use `h, 2h, 4h`.
    pub h: f64,
    /// Radial samples of the global `det J` check.
    pub n_s: usize,
    pub tol: f64,
}

impl Default for SingularityGrid {
    fn default() -> Self {
        Self { n_theta: 64, h: 1e-5, n_s: 64, tol: 1e-6 }
    }
}

/// Limit at zero of `f` sampled at `h, 2h, 4h`, exact for quadratics.
fn richardson(f1: f64, f2: f64, f4: f64) -> f64 {
    (8.0 * f1 - 6.0 * f2 + f4) / 3.0
}

pub fn verify_first_order_singularity(map: &PolarMapping, grid: &SingularityGrid) -> Result<SingularityProfile> {
    let nt = grid.n_theta;
    let h = grid.h;
    let theta: Vec<f64> = (0..nt).map(|k| TAU * (k as f64 + 0.25) / nt as f64).collect();
    let mut prof = SingularityProfile {
        theta: theta.clone(),
        c: vec![],
        s: vec![],
        dc: vec![],
        ds: vec![],
        d: vec![],
        d_star: f64::INFINITY,
        limit_consistency: 0.0,
        closed_form_defect: None,
        polar_form_defect: None,
        failures: vec![],
    };
    for &th in &theta {
        let jac: Vec<Jacobian> = [h, 2.0 * h, 4.0 * h].iter().map(|&s| map.jacobian(s, th)).collect::<Result<_>>()?;
        let lim =
            |f: &dyn Fn(&Jacobian, f64) -> f64| richardson(f(&jac[0], h), f(&jac[1], 2.0 * h), f(&jac[2], 4.0 * h));
        let c = lim(&|j, _| j.m[0][0]);
        let s = lim(&|j, _| j.m[1][0]);
        let dc = lim(&|j, sv| j.m[0][1] / sv);
        let ds = lim(&|j, sv| j.m[1][1] / sv);
        let det_lim = lim(&|j, sv| j.det / sv);
        let d = c * ds - s * dc;
        prof.limit_consistency = prof.limit_consistency.max((d - det_lim).abs() / (1.0 + d.abs()));
        prof.c.push(c);
        prof.s.push(s);
        prof.dc.push(dc);
        prof.ds.push(ds);
        prof.d.push(d);
    }
    if let Some(bad) = prof.d.iter().position(|&d| !(d > 0.0)) {
        prof.failures.push(format!("D(θ) = {:.3e} <= 0 at θ = {:.4}", prof.d[bad], theta[bad]));
    }
    if prof.limit_consistency > grid.tol {
        prof.failures
            .push(format!("D(θ) and lim det J / s disagree by {:.3e} (tol {:.1e})", prof.limit_consistency, grid.tol));
    }
    // det J ≥ s D_* on the whole grid
    let l = map.length();
    let mut min_ratio = f64::INFINITY;
    let mut worst = (0.0, 0.0);
    for a in 1..=grid.n_s {
        let sv = l * a as f64 / grid.n_s as f64;
        for &th in &theta {
            let r = map.jacobian(sv, th)?.det / sv;
            if r < min_ratio {
                min_ratio = r;
                worst = (sv, th);
            }
        }
    }
    for &dv in &prof.d {
        min_ratio = min_ratio.min(dv);
    }
    prof.d_star = min_ratio;
    if !(min_ratio > 0.0) {
        prof.failures.push(format!(
            "det J / s reaches {:.3e} at (s, θ) = ({:.4}, {:.4}): mapping not orientation preserving",
            min_ratio, worst.0, worst.1
        ));
    }
    if let PolarMapping::Spline(m) = map {
        let polar = m.polar_form_defect();
        prof.polar_form_defect = Some(polar);
        let scale = m.rho1().max(f64::MIN_POSITIVE);
        if polar > 1e-12 * scale.max(1.0) {
            prof.failures.push(format!("control rings 0-1 are not in polar form (defect {polar:.3e})"));
        }
        let mu = m.rho1() * m.space.kv_s().eval_m(0.0)?.get(0);
        let kv_t = m.space.kv_theta();
        let mut defect: f64 = 0.0;
        for (k, &th) in theta.iter().enumerate() {
            let bt = kv_t.eval_b(th)?;
            let (mut cc, mut ss) = (0.0, 0.0);
            for (j, v) in bt.iter() {
                let tj = kv_t.angle(j as i64);
                cc += tj.cos() * v;
                ss += tj.sin() * v;
            }
            defect = defect.max((mu * cc - prof.c[k]).abs()).max((mu * ss - prof.s[k]).abs());
        }
        prof.closed_form_defect = Some(defect);
        if defect > 1e-8 * (1.0 + mu) {
            prof.failures.push(format!("C, S deviate from the closed form by {defect:.3e}"));
        }
    }
    Ok(prof)
}

/// Logical-to-physical transform of a field value at `(s, θ)`.
pub fn pushforward(level: usize, map: &PolarMapping, value: FieldValue, s: f64, theta: f64) -> Result<FieldValue> {
    if level == 0 {
        return Ok(value);
    }
    let jac = map.jacobian(s, theta)?;
    if s <= 0.0 || jac.det == 0.0 {
        return Err(Error::PoleSingularity { level });
    }
    Ok(match level {
        1 => FieldValue::Vector(jac.inverse_transpose_apply(value.vector())),
        2 => FieldValue::Scalar(value.scalar() / jac.det),
        _ => panic!("de Rham level {level} out of range"),
    })
}

/// Physical-to-logical transform of `g` at `(s, θ)`; bounded up to the pole.
pub fn pullback<G>(level: usize, map: &PolarMapping, g: G, s: f64, theta: f64) -> Result<FieldValue>
where
    G: Fn([f64; 2]) -> FieldValue,
{
    let x = map.eval_map(s, theta)?;
    let v = g(x);
    if level == 0 {
        return Ok(v);
    }
    let jac = map.jacobian(s, theta)?;
    Ok(match level {
        1 => FieldValue::Vector(jac.transpose_apply(v.vector())),
        2 => FieldValue::Scalar(jac.det * v.scalar()),
        _ => panic!("de Rham level {level} out of range"),
    })
}

/// Spline interpolant of the shifted-disk map
/// `(D, 0) − D (s², 0) + s (cos θ, sin θ)` with rings 0–1 put in polar form.
pub fn build_shifted_disk_map(degree: usize, cells_s: usize, cells_theta: usize, shift: f64) -> Result<PolarMapping> {
    if !(shift > -0.5 && shift < 0.5) {
        return Err(Error::InvalidInput(format!("pole shift must lie in (-1/2, 1/2), got {shift}")));
    }
    let space = TensorDeRham::new(degree, cells_s, cells_theta, 1.0)?;
    let pole = [shift, 0.0];
    let gs = greville_points(space.kv_s());
    let gt = greville_points(space.kv_theta());
    let solver =
        KroneckerSolver::new(interpolation_matrix(space.kv_s(), &gs)?, interpolation_matrix(space.kv_theta(), &gt)?)?;
    let (ns, nt) = (space.n_s(), space.n_theta());
    let mut rhs_x = vec![0.0; ns * nt];
    let mut rhs_y = vec![0.0; ns * nt];
    for (i, &s) in gs.iter().enumerate() {
        for (j, &th) in gt.iter().enumerate() {
            // offsets from the pole
            rhs_x[i * nt + j] = -shift * s * s + s * th.cos();
            rhs_y[i * nt + j] = s * th.sin();
        }
    }
    let cx = solver.solve(&rhs_x)?;
    let cy = solver.solve(&rhs_y)?;
    let mut control: Vec<[f64; 2]> = cx.iter().zip(&cy).map(|(&a, &b)| [a, b]).collect();
    let rho1 = (0..nt).map(|j| norm2(control[space.idx0(1, j)])).sum::<f64>() / nt as f64;
    for j in 0..nt {
        let th = space.kv_theta().angle(j as i64);
        control[space.idx0(0, j)] = [0.0, 0.0];
        control[space.idx0(1, j)] = [rho1 * th.cos(), rho1 * th.sin()];
    }
    Ok(PolarMapping::Spline(SplineMapping::new(space, pole, control)?))
}

/// Writes a spline mapping as text: header `p N_s N_θ x0 y0 L`, then `i j Px Py`.
pub fn write_mapping<W: Write>(map: &SplineMapping, mut out: W) -> Result<()> {
    let sp = &map.space;
    let cells_s = sp.kv_s().num_cells();
    writeln!(
        out,
        "{} {} {} {:.16e} {:.16e} {:.16e}",
        sp.degree(),
        cells_s,
        sp.n_theta(),
        map.pole[0],
        map.pole[1],
        sp.length()
    )?;
    for i in 0..sp.n_s() {
        for j in 0..sp.n_theta() {
            let p = map.control[sp.idx0(i, j)];
            writeln!(out, "{i} {j} {:.16e} {:.16e}", p[0], p[1])?;
        }
    }
    Ok(())
}

/// Reads the format of [`write_mapping`]; radial breakpoints are uniform.
pub fn read_mapping<R: BufRead>(input: R) -> Result<SplineMapping> {
    let mut lines = input.lines().enumerate().filter_map(|(n, l)| match l {
        Ok(l) if l.trim().is_empty() || l.trim_start().starts_with('#') => None,
        other => Some((n + 1, other)),
    });
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty mapping file".into()))?;
    let header = header?;
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 6 {
        return Err(parse_err(hl, format!("expected 6 header fields, found {}", f.len())));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| parse_err(hl, format!("{s}: {e}")));
    let real = |s: &str, line: usize| s.parse::<f64>().map_err(|e| parse_err(line, format!("{s}: {e}")));
    let (p, cells_s, nt) = (int(f[0])?, int(f[1])?, int(f[2])?);
    let pole = [real(f[3], hl)?, real(f[4], hl)?];
    let length = real(f[5], hl)?;
    let space = TensorDeRham::new(p, cells_s, nt, length)?;
    let mut control = vec![[f64::NAN; 2]; space.dim(0)];
    for (ln, line) in lines {
        let line = line?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(parse_err(ln, format!("expected `i j Px Py`, found {} fields", f.len())));
        }
        let i = f[0].parse::<usize>().map_err(|e| parse_err(ln, e.to_string()))?;
        let j = f[1].parse::<usize>().map_err(|e| parse_err(ln, e.to_string()))?;
        if i >= space.n_s() || j >= nt {
            return Err(parse_err(ln, format!("control index ({i}, {j}) out of range")));
        }
        control[space.idx0(i, j)] = [real(f[2], ln)?, real(f[3], ln)?];
    }
    if let Some(mu) = control.iter().position(|p| p[0].is_nan()) {
        return Err(parse_err(0, format!("missing control point ({}, {})", mu / nt, mu % nt)));
    }
    SplineMapping::new(space, pole, control)
}
