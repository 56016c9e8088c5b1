//! Experiment drivers: Poisson and Maxwell convergence studies, the
//! Gaussian-pulse wave demo, raster sampling and the verification report.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{regularized_mass, QuadratureGrid};
use crate::conforming::{ConformingProjections, ConformityKind, MapVariant};
use crate::derham::{FieldCoeffs, FieldValue, TensorDeRham};
use crate::error::{Error, Result};
use crate::geometry::{
    build_shifted_disk_map, pushforward, verify_first_order_singularity, PolarMapping, SingularityGrid, SplineMapping,
};
use crate::linalg::{norm, BandedCholesky};
use crate::projection::GeometricProjector;
use crate::solvers::maxwell::{
    choose_time_step, gaussian_pulse_initial, maxwell_leapfrog_step, ring_interleaved_order, suzuki_yoshida4,
    MaxwellOperators, MaxwellState,
};
use crate::solvers::poisson::{
    manufactured_solution, manufactured_source, solve_poisson, LinearSolver, PoissonProblem,
};
use crate::solvers::BesselMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Poisson,
    MaxwellBessel,
    MaxwellWave,
    Verify,
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(ProblemKind::Poisson),
            "maxwell-bessel" => Ok(ProblemKind::MaxwellBessel),
            "maxwell-wave" => Ok(ProblemKind::MaxwellWave),
            "verify" => Ok(ProblemKind::Verify),
            _ => Err(Error::InvalidInput(format!("unknown problem '{s}'"))),
        }
    }
}

/// Parses `c0` / `c1` into the conforming kind.
pub fn parse_kind(s: &str) -> Result<ConformityKind> {
    match s {
        "c0" => Ok(ConformityKind::V),
        "c1" => Ok(ConformityKind::U),
        _ => Err(Error::InvalidInput(format!("unknown conformity kind '{s}' (expected c0 or c1)"))),
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub degree: usize,
    pub ns: Vec<usize>,
    /// `N_θ = ntheta_factor · N_s`.
    pub ntheta_factor: usize,
    pub pole_shift: f64,
    pub kind: ConformityKind,
    pub alpha: f64,
    pub solver: LinearSolver,
    /// Fixed time step; `None` uses half the smallest mesh edge.
    pub dt: Option<f64>,
    /// Replaces the shifted-disk map for every grid.
    pub mapping: Option<SplineMapping>,
    pub final_time: f64,
    /// Bessel mode `(n, m)`.
    pub mode: (u32, u32),
    pub sigma: f64,
    pub snapshot_times: Vec<f64>,
    pub raster: usize,
    /// Record wall-clock seconds in CSV output (zeros otherwise).
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Poisson,
            degree: 3,
            ns: vec![8, 16, 32, 64],
            ntheta_factor: 2,
            pole_shift: 0.2,
            kind: ConformityKind::U,
            alpha: 1.0,
            solver: LinearSolver::default(),
            dt: None,
            mapping: None,
            final_time: 0.1,
            mode: (3, 2),
            sigma: 0.1,
            snapshot_times: vec![2.5, 5.0, 7.5],
            raster: 256,
            timing: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 || self.ns.is_empty() || self.ns.contains(&0) || self.ntheta_factor == 0 {
            return Err(Error::InvalidInput("degree and grid sizes must be positive".into()));
        }
        if self.kind == ConformityKind::U && self.degree < 2 {
            return Err(Error::InvalidInput("c1 requires degree >= 2".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidInput("alpha must be positive".into()));
        }
        if !(self.final_time > 0.0) || !(self.sigma > 0.0) || self.raster < 2 {
            return Err(Error::InvalidInput("final time, pulse width and raster size must be positive".into()));
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::InvalidInput("snapshot times must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n_theta(&self, ns: usize) -> usize {
        self.ntheta_factor * ns
    }
}

/// Everything defined on one grid: spaces, mapping, quadrature and projections.
#[derive(Debug, Clone)]
pub struct Domain {
    pub space: TensorDeRham,
    pub map: PolarMapping,
    pub quad: QuadratureGrid,
    pub proj: ConformingProjections,
    pub geometric: GeometricProjector,
}

impl Domain {
    /// `dirichlet` adds the homogeneous boundary condition to the projections.
    pub fn build(cfg: &RunConfig, ns: usize, dirichlet: bool) -> Result<Self> {
        let nt = cfg.n_theta(ns);
        let map = match &cfg.mapping {
            Some(m) => PolarMapping::Spline(m.clone()),
            None => build_shifted_disk_map(cfg.degree, ns, nt, cfg.pole_shift)?,
        };
        Self::with_map(cfg.degree, ns, nt, map, cfg.kind, dirichlet)
    }

    pub fn with_map(
        degree: usize,
        ns: usize,
        nt: usize,
        map: PolarMapping,
        kind: ConformityKind,
        dirichlet: bool,
    ) -> Result<Self> {
        let space = TensorDeRham::new(degree, ns, nt, map.length())?;
        let variant = if map.is_analytical() { MapVariant::Analytical } else { MapVariant::Spline };
        let quad = QuadratureGrid::new(&space, &map)?;
        let proj = ConformingProjections::new(&space, kind, variant, dirichlet)?;
        let geometric = GeometricProjector::new(&space)?;
        Ok(Self { space, map, quad, proj, geometric })
    }

    pub fn warnings(&self) -> &[String] {
        self.proj.warnings()
    }
}

/// Scientific notation with 12 significant digits.
pub fn sci(v: f64) -> String {
    format!("{v:.11e}")
}

fn opt_sci(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), sci)
}

/// Rate between consecutive grids, `log(e_{k−1}/e_k) / log(N_k/N_{k−1})`.
pub fn rates(ns: &[usize], errs: &[f64]) -> Vec<Option<f64>> {
    (0..errs.len())
        .map(|k| (k > 0).then(|| (errs[k - 1] / errs[k]).ln() / (ns[k] as f64 / ns[k - 1] as f64).ln()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonRow {
    pub ns: usize,
    pub dofs: usize,
    pub l2_err: f64,
    pub h1_err: f64,
    pub l2_rate: Option<f64>,
    pub h1_rate: Option<f64>,
    pub cg_iters: usize,
    pub seconds: f64,
    pub conformity_defect: f64,
}

pub const POISSON_HEADER: &str = "N_s,dofs,L2_err,H1_err,L2_rate,H1_rate,cg_iters,seconds";

impl PoissonRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.ns,
            self.dofs,
            sci(self.l2_err),
            sci(self.h1_err),
            opt_sci(self.l2_rate),
            opt_sci(self.h1_rate),
            self.cg_iters,
            sci(self.seconds)
        )
    }
}

/// Stabilized Poisson solution on one grid with errors against `Π⁰φ`.
pub fn poisson_on_grid(cfg: &RunConfig, ns: usize) -> Result<(PoissonRow, FieldCoeffs)> {
    let start = cfg.timing.then(Instant::now);
    let dom = Domain::build(cfg, ns, true)?;
    let sp = &dom.space;
    let m0 = dom.quad.mass_matrix(0);
    let m1 = dom.quad.mass_matrix(1);
    let load = dom.quad.load_vector(0, |x| FieldValue::Scalar(manufactured_source(x)));
    let problem = PoissonProblem { alpha: cfg.alpha, solver: cfg.solver };
    let sol = solve_poisson(&problem, &load, &sp.grad_matrix(), dom.proj.matrix(0), &m0, &m1)?;
    let reference = dom.geometric.project_polar(0, &dom.map, |x| FieldValue::Scalar(manufactured_solution(x)))?;
    let row = PoissonRow {
        ns,
        dofs: sp.dim(0),
        l2_err: dom.quad.l2_error(&sol.phi, &reference)?,
        h1_err: dom.quad.h1_error(&sol.phi, &reference)?,
        l2_rate: None,
        h1_rate: None,
        cg_iters: sol.iterations,
        seconds: start.map_or(0.0, |t| t.elapsed().as_secs_f64()),
        conformity_defect: sol.conformity_defect,
    };
    Ok((row, sol.phi))
}

/// Runs all grids, writing CSV rows as they complete.
pub fn run_poisson_study(cfg: &RunConfig, mut csv: Option<&mut dyn Write>) -> Result<Vec<PoissonRow>> {
    cfg.validate()?;
    if let Some(w) = csv.as_mut() {
        writeln!(w, "{POISSON_HEADER}")?;
    }
    let mut rows: Vec<PoissonRow> = Vec::new();
    for &ns in &cfg.ns {
        let (mut row, _) = poisson_on_grid(cfg, ns)?;
        if let Some(prev) = rows.last() {
            let r = rates(&[prev.ns, ns], &[prev.l2_err, row.l2_err]);
            let h = rates(&[prev.ns, ns], &[prev.h1_err, row.h1_err]);
            row.l2_rate = r[1];
            row.h1_rate = h[1];
        }
        if let Some(w) = csv.as_mut() {
            writeln!(w, "{}", row.csv())?;
            w.flush()?;
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellRow {
    pub ns: usize,
    pub e_err: f64,
    pub b_err: f64,
    pub e_rate: Option<f64>,
    pub b_rate: Option<f64>,
    pub dt: f64,
    pub steps: usize,
    pub seconds: f64,
    pub conformity_defect: f64,
}

pub const MAXWELL_HEADER: &str = "N_s,E_err,B_err,E_rate,B_rate,dt,steps,seconds";

impl MaxwellRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.ns,
            sci(self.e_err),
            sci(self.b_err),
            opt_sci(self.e_rate),
            opt_sci(self.b_rate),
            sci(self.dt),
            self.steps,
            sci(self.seconds)
        )
    }
}

/// Assembled Maxwell operators of a domain.
pub fn maxwell_operators(dom: &Domain) -> Result<MaxwellOperators> {
    MaxwellOperators::new(&dom.proj, &dom.quad.mass_matrix(1), &dom.quad.mass_matrix(2))
}

/// Bessel mode evolved to `T` with SY4; relative `L²` errors against the exact fields.
pub fn maxwell_bessel_on_grid(cfg: &RunConfig, ns: usize, dt: Option<f64>) -> Result<MaxwellRow> {
    let start = cfg.timing.then(Instant::now);
    let mode = BesselMode::new(cfg.mode.0, cfg.mode.1)?;
    let dom = Domain::build(cfg, ns, true)?;
    let ops = maxwell_operators(&dom)?;
    let gp = &dom.geometric;
    let e0 = gp.project_conforming(1, &dom.proj, &dom.map, |x| FieldValue::Vector(mode.electric(0.0, x)))?;
    let b0 = gp.project_conforming(2, &dom.proj, &dom.map, |x| FieldValue::Scalar(mode.magnetic(0.0, x)))?;
    let (dt, steps) = choose_time_step(&ops, &dom.space, &dom.map, cfg.final_time, dt)?;
    let st = suzuki_yoshida4(&MaxwellState { e: e0, b: b0, t: 0.0 }, &ops, dt, steps, None)?;
    let t = cfg.final_time;
    Ok(MaxwellRow {
        ns,
        e_err: dom.quad.l2_error_exact(&st.e, |x| FieldValue::Vector(mode.electric(t, x)))?,
        b_err: dom.quad.l2_error_exact(&st.b, |x| FieldValue::Scalar(mode.magnetic(t, x)))?,
        e_rate: None,
        b_rate: None,
        dt,
        steps,
        seconds: start.map_or(0.0, |t| t.elapsed().as_secs_f64()),
        conformity_defect: ops.conformity_defect(&st.e),
    })
}

pub fn run_maxwell_bessel_study(cfg: &RunConfig, mut csv: Option<&mut dyn Write>) -> Result<Vec<MaxwellRow>> {
    cfg.validate()?;
    if let Some(w) = csv.as_mut() {
        writeln!(w, "{MAXWELL_HEADER}")?;
    }
    let mut rows: Vec<MaxwellRow> = Vec::new();
    for &ns in &cfg.ns {
        let mut row = maxwell_bessel_on_grid(cfg, ns, cfg.dt)?;
        if let Some(prev) = rows.last() {
            row.e_rate = rates(&[prev.ns, ns], &[prev.e_err, row.e_err])[1];
            row.b_rate = rates(&[prev.ns, ns], &[prev.b_err, row.b_err])[1];
        }
        if let Some(w) = csv.as_mut() {
            writeln!(w, "{}", row.csv())?;
            w.flush()?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Samples of a physical field on a uniform grid over the bounding box of `Ω_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub n: usize,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    /// Row-major in `(y, x)`; NaN outside the domain.
    pub values: Vec<f64>,
}

impl Raster {
    pub fn point(&self, ix: usize, iy: usize) -> [f64; 2] {
        let f = |k: usize, a: f64, b: f64| a + (b - a) * k as f64 / (self.n - 1) as f64;
        [f(ix, self.lower[0], self.upper[0]), f(iy, self.lower[1], self.upper[1])]
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.n + ix]
    }

    /// `x y value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 48);
        for iy in 0..self.n {
            for ix in 0..self.n {
                let p = self.point(ix, iy);
                let v = self.get(ix, iy);
                let _ = writeln!(out, "{} {} {}", sci(p[0]), sci(p[1]), if v.is_nan() { "NaN".into() } else { sci(v) });
            }
        }
        out
    }

    /// Largest five-point second difference within `radius` of `center`,
    /// relative to the largest absolute sample.
    pub fn roughness(&self, center: [f64; 2], radius: f64) -> f64 {
        let vmax = self.values.iter().filter(|v| !v.is_nan()).fold(0.0f64, |m, v| m.max(v.abs()));
        if vmax == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for iy in 1..self.n - 1 {
            for ix in 1..self.n - 1 {
                let p = self.point(ix, iy);
                if (p[0] - center[0]).hypot(p[1] - center[1]) > radius {
                    continue;
                }
                let c = self.get(ix, iy);
                let nb = [self.get(ix + 1, iy), self.get(ix - 1, iy), self.get(ix, iy + 1), self.get(ix, iy - 1)];
                if c.is_nan() || nb.iter().any(|v| v.is_nan()) {
                    continue;
                }
                worst = worst.max((nb.iter().sum::<f64>() - 4.0 * c).abs());
            }
        }
        worst / vmax
    }
}

/// Bounding box of the mapped domain from boundary samples.
pub fn bounding_box(map: &PolarMapping) -> Result<([f64; 2], [f64; 2])> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for k in 0..720 {
        let th = std::f64::consts::TAU * k as f64 / 720.0;
        let x = map.eval_map(map.length(), th)?;
        for d in 0..2 {
            lo[d] = lo[d].min(x[d]);
            hi[d] = hi[d].max(x[d]);
        }
    }
    Ok((lo, hi))
}

/// Physical values of a level-0 or level-2 field on an `n × n` raster.
pub fn sample_raster(space: &TensorDeRham, map: &PolarMapping, field: &FieldCoeffs, n: usize) -> Result<Raster> {
    if field.level == 1 {
        return Err(Error::InvalidInput("raster sampling needs a scalar field".into()));
    }
    let (lower, upper) = bounding_box(map)?;
    let mut r = Raster { n, lower, upper, values: vec![f64::NAN; n * n] };
    for iy in 0..n {
        for ix in 0..n {
            let x = r.point(ix, iy);
            if let Some((s, th)) = map.invert(x) {
                // the pole value of a level-2 field is its limit
                let s = s.max(1e-9 * map.length());
                let v = space.eval_logical(field, s, th)?;
                r.values[iy * n + ix] = pushforward(field.level, map, v, s, th)?.scalar();
            }
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveSnapshot {
    pub ns: usize,
    pub time: f64,
    pub roughness: f64,
    pub energy: f64,
    pub raster: Raster,
    pub warning: Option<String>,
}

/// Grids coarser than this are flagged for spurious oscillations near the pole.
pub const COARSE_GRID: usize = 16;

/// Gaussian pulse centred at the origin, propagated through the pole; `B`
/// sampled at the requested times. Rasters are written to `out_dir`.
pub fn run_wave_demo(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<Vec<WaveSnapshot>> {
    cfg.validate()?;
    let mut times = cfg.snapshot_times.clone();
    times.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for &ns in &cfg.ns {
        let dom = Domain::build(cfg, ns, true)?;
        let ops = maxwell_operators(&dom)?;
        let mut st = gaussian_pulse_initial(&dom.geometric, &dom.proj, &dom.map, cfg.sigma)?;
        let warning = (ns < COARSE_GRID)
            .then(|| format!("N_s = {ns}: coarse grid, spurious oscillations possible near the pole"));
        for &t in &times {
            if t > st.t {
                let (dt, n) = choose_time_step(&ops, &dom.space, &dom.map, t - st.t, cfg.dt)?;
                st = suzuki_yoshida4(&st, &ops, dt, n, None)?;
                st.t = t;
            }
            let raster = sample_raster(&dom.space, &dom.map, &st.b, cfg.raster)?;
            let roughness = raster.roughness(dom.map.pole(), 0.25);
            if let Some(dir) = out_dir {
                std::fs::write(dir.join(format!("wave_ns{ns}_t{t:.3}.txt")), raster.to_text())?;
            }
            out.push(WaveSnapshot {
                ns,
                time: t,
                roughness,
                energy: ops.energy(&st),
                raster,
                warning: warning.clone(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckResult {
    fn from_bool(name: String, ok: bool, detail: String) -> Self {
        Self { name, status: if ok { CheckStatus::Pass } else { CheckStatus::Fail }, detail }
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIPPED",
        };
        format!("{tag} {} {}", self.name, self.detail)
    }
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Runs the invariant suites on every configured grid.
pub fn run_verify(cfg: &RunConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    if let Err(e) = cfg.validate() {
        out.push(CheckResult { name: "config".into(), status: CheckStatus::Fail, detail: e.to_string() });
        return out;
    }
    for &ns in &cfg.ns {
        verify_grid(cfg, ns, &mut out);
    }
    out
}

fn verify_grid(cfg: &RunConfig, ns: usize, out: &mut Vec<CheckResult>) {
    let tag = |name: &str| format!("ns={ns}/{name}");
    let fail = |name: &str, e: Error| CheckResult { name: tag(name), status: CheckStatus::Fail, detail: e.to_string() };
    let nt = cfg.n_theta(ns);
    let space = match TensorDeRham::new(cfg.degree, ns, nt, 1.0) {
        Ok(s) => s,
        Err(e) => return out.push(fail("spaces", e)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ns as u64);

    // spline bases
    let mut pu: f64 = 0.0;
    for k in 0..=100 {
        let x = k as f64 / 100.0;
        pu = pu.max((space.kv_s().eval_b(x).map(|e| e.sum()).unwrap_or(f64::NAN) - 1.0).abs());
        let t = std::f64::consts::TAU * k as f64 / 101.0;
        pu = pu.max((space.kv_theta().eval_b(t).map(|e| e.sum()).unwrap_or(f64::NAN) - 1.0).abs());
    }
    out.push(CheckResult::from_bool(tag("splines/partition-of-unity"), pu < 1e-14, format!("max defect {pu:.2e}")));

    let cg = space.curl_matrix().matmul(&space.grad_matrix());
    out.push(CheckResult::from_bool(
        tag("derham/curl-grad"),
        cg.max_abs() == 0.0,
        format!("max |CG| {:.2e}", cg.max_abs()),
    ));

    let map = match &cfg.mapping {
        Some(m) => Ok(PolarMapping::Spline(m.clone())),
        None => build_shifted_disk_map(cfg.degree, ns, nt, cfg.pole_shift),
    };
    let map = match map {
        Ok(m) => m,
        Err(e) => return out.push(fail("geometry/mapping", e)),
    };
    match verify_first_order_singularity(&map, &SingularityGrid::default()) {
        Ok(prof) => out.push(CheckResult::from_bool(
            tag("geometry/pole-singularity"),
            prof.passed(),
            if prof.passed() { format!("D* = {:.3e}", prof.d_star) } else { prof.failures.join("; ") },
        )),
        Err(e) => out.push(fail("geometry/pole-singularity", e)),
    }

    let needs_assumption = cfg.kind == ConformityKind::U && !space.assumption1_ok();
    let skip = |name: &str| CheckResult {
        name: tag(name),
        status: CheckStatus::Skipped,
        detail: format!("n_theta = {nt} violates the angular grid assumption"),
    };
    let dom = match Domain::with_map(cfg.degree, ns, nt, map.clone(), cfg.kind, false) {
        Ok(d) => d,
        Err(e) => return out.push(fail("conforming/setup", e)),
    };

    // conforming projections
    let mut mf: f64 = 0.0;
    let mut idem: f64 = 0.0;
    let mut charac = true;
    for level in 0..3 {
        for _ in 0..20 {
            let x = random_vec(&mut rng, space.dim(level));
            let y = dom.proj.apply(level, &x);
            mf = mf.max(diff_norm(&y, &dom.proj.matrix(level).apply(&x)) / norm(&x));
            idem = idem.max(diff_norm(&dom.proj.apply(level, &y), &y) / norm(&x));
            charac &=
                dom.proj.is_conforming(&FieldCoeffs { level, data: y }, 1e-12).map(|r| r.conforming).unwrap_or(false);
        }
    }
    out.push(CheckResult::from_bool(tag("conforming/matrix-free"), mf < 1e-15, format!("max rel diff {mf:.2e}")));
    if needs_assumption {
        out.push(skip("conforming/idempotence"));
        out.push(skip("conforming/characterization"));
    } else {
        out.push(CheckResult::from_bool(
            tag("conforming/idempotence"),
            idem < 1e-13,
            format!("max rel defect {idem:.2e}"),
        ));
        out.push(CheckResult::from_bool(tag("conforming/characterization"), charac, String::new()));
    }

    // commuting projections on a smooth potential; the edge integrals need
    // enough points to sit below the tolerance
    let phi = |x: [f64; 2]| (2.0 * x[0]).sin() * (1.0 + x[1] * x[1]) + x[0] * x[1];
    let grad =
        |x: [f64; 2]| [2.0 * (2.0 * x[0]).cos() * (1.0 + x[1] * x[1]) + x[1], 2.0 * x[1] * (2.0 * x[0]).sin() + x[0]];
    let commute = (|| -> Result<f64> {
        let gp = GeometricProjector::with_quadrature(&space, 12)?;
        let p0 = gp.project_conforming(0, &dom.proj, &dom.map, |x| FieldValue::Scalar(phi(x)))?;
        let p1 = gp.project_conforming(1, &dom.proj, &dom.map, |x| FieldValue::Vector(grad(x)))?;
        Ok(diff_norm(&space.grad_matrix().apply(&p0.data), &p1.data) / norm(&p1.data))
    })();
    match commute {
        Ok(d) if needs_assumption => out.push(CheckResult {
            name: tag("projection/commuting"),
            status: CheckStatus::Skipped,
            detail: format!("rel diff {d:.2e}"),
        }),
        Ok(d) => out.push(CheckResult::from_bool(tag("projection/commuting"), d < 1e-9, format!("rel diff {d:.2e}"))),
        Err(e) => out.push(fail("projection/commuting", e)),
    }

    // mass matrices
    let masses: Vec<_> = (0..3).map(|l| dom.quad.mass_matrix(l)).collect();
    let asym = masses.iter().map(|m| m.max_abs_diff(&m.transpose()) / m.max_abs()).fold(0.0, f64::max);
    out.push(CheckResult::from_bool(tag("assembly/symmetry"), asym < 1e-13, format!("max rel asymmetry {asym:.2e}")));
    let m1t = regularized_mass(&masses[1], dom.proj.matrix(1));
    match BandedCholesky::factor(&m1t, Some(ring_interleaved_order(&space))) {
        Ok(_) => out.push(CheckResult::from_bool(tag("assembly/regularized-spd"), true, "Cholesky succeeded".into())),
        Err(e) => out.push(fail("assembly/regularized-spd", e)),
    }

    // solvers
    if needs_assumption {
        out.push(skip("solvers/poisson-conformity"));
    } else {
        let res = (|| -> Result<f64> {
            let bc = ConformingProjections::new(&space, cfg.kind, dom.proj.variant(), true)?;
            let load = dom.quad.load_vector(0, |x| FieldValue::Scalar(manufactured_source(x)));
            let pb = PoissonProblem { alpha: cfg.alpha, solver: LinearSolver::Cholesky };
            Ok(solve_poisson(&pb, &load, &space.grad_matrix(), bc.matrix(0), &masses[0], &masses[1])?.conformity_defect)
        })();
        match res {
            Ok(d) => {
                out.push(CheckResult::from_bool(tag("solvers/poisson-conformity"), d < 1e-8, format!("defect {d:.2e}")))
            }
            Err(e) => out.push(fail("solvers/poisson-conformity", e)),
        }
    }
    let rev = (|| -> Result<f64> {
        let bc = ConformingProjections::new(&space, cfg.kind, dom.proj.variant(), true)?;
        let ops = MaxwellOperators::new(&bc, &masses[1], &masses[2])?;
        let st = gaussian_pulse_initial(&dom.geometric, &bc, &dom.map, 0.2)?;
        let dt = 0.5 * ops.stable_step();
        let fwd = maxwell_leapfrog_step(&st, &ops, dt, None)?;
        let back = maxwell_leapfrog_step(&fwd, &ops, -dt, None)?;
        Ok((diff_norm(&back.e.data, &st.e.data) + diff_norm(&back.b.data, &st.b.data))
            / (norm(&st.e.data) + norm(&st.b.data)))
    })();
    match rev {
        Ok(d) => out.push(CheckResult::from_bool(
            tag("solvers/leapfrog-reversibility"),
            d < 1e-11,
            format!("rel defect {d:.2e}"),
        )),
        Err(e) => out.push(fail("solvers/leapfrog-reversibility", e)),
    }
}

/// One line per check, failures included.
pub fn verify_report(results: &[CheckResult]) -> String {
    results.iter().map(|r| r.line() + "\n").collect()
}

#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::read_mapping;

    fn small() -> RunConfig {
        RunConfig { degree: 2, ns: vec![4, 8], raster: 24, timing: false, ..Default::default() }
    }

    #[test]
    fn csv_cells_have_twelve_digits() {
        assert_eq!(sci(0.00012345678901234), "1.23456789012e-4");
        let row = PoissonRow {
            ns: 8,
            dofs: 160,
            l2_err: 0.5,
            h1_err: 0.25,
            l2_rate: None,
            h1_rate: Some(2.0),
            cg_iters: 3,
            seconds: 0.0,
            conformity_defect: 0.0,
        };
        assert_eq!(row.csv(), "8,160,5.00000000000e-1,2.50000000000e-1,nan,2.00000000000e0,3,0.00000000000e0");
        assert_eq!(POISSON_HEADER.split(',').count(), row.csv().split(',').count());
    }

    #[test]
    fn rates_between_consecutive_grids() {
        let r = rates(&[8, 16, 32], &[1.0, 0.25, 0.0625]);
        assert_eq!(r[0], None);
        assert!((r[1].unwrap() - 2.0).abs() < 1e-14 && (r[2].unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn poisson_csv_is_reproducible() {
        let cfg = small();
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_poisson_study(&cfg, Some(&mut a)).unwrap();
        run_poisson_study(&cfg, Some(&mut b)).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(POISSON_HEADER));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = RunConfig { degree: 1, ..small() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { alpha: -1.0, ..small() };
        assert!(cfg.validate().is_err());
        assert!("heat".parse::<ProblemKind>().is_err());
        assert!(parse_kind("c2").is_err());
    }

    #[test]
    fn verify_passes_on_default_sizes() {
        let cfg = RunConfig { ns: vec![4], ..small() };
        let res = run_verify(&cfg);
        let report = verify_report(&res);
        assert!(res.iter().all(|r| r.status == CheckStatus::Pass), "{report}");
    }

    #[test]
    fn verify_skips_without_angular_assumption() {
        let cfg = RunConfig { ns: vec![3], ..small() };
        let res = run_verify(&cfg);
        let skipped: Vec<_> = res.iter().filter(|r| r.status == CheckStatus::Skipped).collect();
        assert!(!skipped.is_empty(), "{}", verify_report(&res));
        assert!(skipped.iter().any(|r| r.name.contains("idempotence")));
    }

    #[test]
    fn verify_reports_broken_mapping() {
        let map = match build_shifted_disk_map(2, 4, 8, 0.2).unwrap() {
            PolarMapping::Spline(m) => m,
            _ => unreachable!(),
        };
        let mut text = Vec::new();
        crate::geometry::write_mapping(&map, &mut text).unwrap();
        // reverse the orientation by mirroring y
        let flipped: String = String::from_utf8(text)
            .unwrap()
            .lines()
            .enumerate()
            .map(|(k, line)| {
                if k == 0 {
                    return line.to_string();
                }
                let mut f: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                let y: f64 = f[3].parse().unwrap();
                f[3] = format!("{:.16e}", -y);
                f.join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n");
        let broken = read_mapping(flipped.as_bytes()).unwrap();
        let cfg = RunConfig { ns: vec![4], mapping: Some(broken), ..small() };
        let res = run_verify(&cfg);
        let sing = res.iter().find(|r| r.name.contains("pole-singularity")).unwrap();
        assert_eq!(sing.status, CheckStatus::Fail, "{}", verify_report(&res));
    }

    #[test]
    fn wave_demo_flags_coarse_grid_and_samples_pulse() {
        let cfg = RunConfig { ns: vec![8], snapshot_times: vec![0.0, 0.05], sigma: 0.3, raster: 32, ..small() };
        let snaps = run_wave_demo(&cfg, None).unwrap();
        assert_eq!(snaps.len(), 2);
        assert!(snaps[0].warning.as_deref().unwrap().contains("spurious oscillations possible"));
        let r = &snaps[0].raster;
        assert!(r.values.iter().any(|v| v.is_nan()));
        assert!(r.values.iter().filter(|v| !v.is_nan()).all(|v| v.is_finite()));
        // the raster near the origin reproduces the pulse curl within projection error
        let (mut worst, mut peak): (f64, f64) = (0.0, 0.0);
        for iy in 0..r.n {
            for ix in 0..r.n {
                let v = r.get(ix, iy);
                if v.is_nan() {
                    continue;
                }
                let exact = crate::solvers::maxwell::gaussian_pulse_b(r.point(ix, iy), cfg.sigma);
                worst = worst.max((v - exact).abs());
                peak = peak.max(exact.abs());
            }
        }
        assert!(worst < 0.5 * peak, "{worst} vs {peak}");
    }

    #[test]
    fn raster_text_has_one_line_per_pixel() {
        let cfg = small();
        let dom = Domain::build(&cfg, 4, false).unwrap();
        let f = FieldCoeffs { level: 0, data: vec![1.0; dom.space.dim(0)] };
        let r = sample_raster(&dom.space, &dom.map, &f, 8).unwrap();
        let text = r.to_text();
        assert_eq!(text.lines().count(), 64);
        assert!(text.contains("NaN"));
        assert!(r.values.iter().filter(|v| !v.is_nan()).all(|v| (v - 1.0).abs() < 1e-12));
    }
}
