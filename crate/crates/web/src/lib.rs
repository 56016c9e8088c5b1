//! Browser bindings: mapped grid lines, a Poisson solution raster and a
//! steppable Maxwell wave, all returned as flat `f64` arrays.

use polar_feec::conforming::ConformityKind;
use polar_feec::derham::FieldValue;
use polar_feec::geometry::{build_shifted_disk_map, PolarMapping};
use polar_feec::solvers::maxwell::{
    choose_time_step, gaussian_pulse_initial, suzuki_yoshida4, MaxwellOperators, MaxwellState,
};
use polar_feec::solvers::poisson::{manufactured_solution, manufactured_source, solve_poisson, PoissonProblem};
use polar_feec::study::{bounding_box, maxwell_operators, sample_raster, Domain};
use wasm_bindgen::prelude::*;

fn js_err(e: polar_feec::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn kind_from(c1: bool) -> ConformityKind {
    if c1 {
        ConformityKind::U
    } else {
        ConformityKind::V
    }
}

fn domain(degree: usize, ns: usize, shift: f64, c1: bool) -> Result<Domain, JsValue> {
    let map = build_shifted_disk_map(degree, ns, 2 * ns, shift).map_err(js_err)?;
    Domain::with_map(degree, ns, 2 * ns, map, kind_from(c1), true).map_err(js_err)
}

/// `[x_min, y_min, x_max, y_max]` of the mapped disk.
fn bounds_of(map: &PolarMapping) -> Result<Vec<f64>, JsValue> {
    let (lo, hi) = bounding_box(map).map_err(js_err)?;
    Ok(vec![lo[0], lo[1], hi[0], hi[1]])
}

/// Images of the logical grid lines, as `x, y` pairs with a NaN pair
/// between polylines.
#[wasm_bindgen]
pub fn mapping_grid(degree: usize, ns: usize, shift: f64, samples: usize) -> Result<Vec<f64>, JsValue> {
    let map = build_shifted_disk_map(degree, ns, 2 * ns, shift).map_err(js_err)?;
    let nt = 2 * ns;
    let samples = samples.max(2);
    let mut out = Vec::new();
    let mut push_line = |pts: &mut dyn Iterator<Item = (f64, f64)>| -> Result<(), JsValue> {
        for (s, th) in pts {
            let x = map.eval_map(s, th).map_err(js_err)?;
            out.extend_from_slice(&x);
        }
        out.extend_from_slice(&[f64::NAN, f64::NAN]);
        Ok(())
    };
    for i in 1..=ns {
        let s = i as f64 / ns as f64;
        let n = samples * nt;
        push_line(&mut (0..=n).map(|k| (s, std::f64::consts::TAU * k as f64 / n as f64)))?;
    }
    for j in 0..nt {
        let th = std::f64::consts::TAU * j as f64 / nt as f64;
        let n = samples * ns;
        push_line(&mut (0..=n).map(|k| (k as f64 / n as f64, th)))?;
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn domain_bounds(degree: usize, ns: usize, shift: f64) -> Result<Vec<f64>, JsValue> {
    let map = build_shifted_disk_map(degree, ns, 2 * ns, shift).map_err(js_err)?;
    bounds_of(&map)
}

/// Stabilized Poisson solution on an `n × n` raster (row-major, NaN outside).
#[wasm_bindgen]
pub struct PoissonView {
    values: Vec<f64>,
    bounds: Vec<f64>,
    l2_error: f64,
    iterations: usize,
}

#[wasm_bindgen]
impl PoissonView {
    #[wasm_bindgen(constructor)]
    pub fn new(degree: usize, ns: usize, shift: f64, c1: bool, raster: usize) -> Result<PoissonView, JsValue> {
        let dom = domain(degree, ns, shift, c1)?;
        let m0 = dom.quad.mass_matrix(0);
        let m1 = dom.quad.mass_matrix(1);
        let load = dom.quad.load_vector(0, |x| FieldValue::Scalar(manufactured_source(x)));
        let sol =
            solve_poisson(&PoissonProblem::default(), &load, &dom.space.grad_matrix(), dom.proj.matrix(0), &m0, &m1)
                .map_err(js_err)?;
        let l2_error =
            dom.quad.l2_error_exact(&sol.phi, |x| FieldValue::Scalar(manufactured_solution(x))).map_err(js_err)?;
        let r = sample_raster(&dom.space, &dom.map, &sol.phi, raster).map_err(js_err)?;
        Ok(PoissonView { values: r.values, bounds: bounds_of(&dom.map)?, l2_error, iterations: sol.iterations })
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.bounds.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn l2_error(&self) -> f64 {
        self.l2_error
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// Gaussian pulse through the pole, advanced in fixed SY4 steps.
#[wasm_bindgen]
pub struct WaveSim {
    dom: Domain,
    ops: MaxwellOperators,
    state: MaxwellState,
    dt: f64,
}

#[wasm_bindgen]
impl WaveSim {
    #[wasm_bindgen(constructor)]
    pub fn new(degree: usize, ns: usize, shift: f64, c1: bool, sigma: f64) -> Result<WaveSim, JsValue> {
        let dom = domain(degree, ns, shift, c1)?;
        let ops = maxwell_operators(&dom).map_err(js_err)?;
        let state = gaussian_pulse_initial(&dom.geometric, &dom.proj, &dom.map, sigma).map_err(js_err)?;
        let (dt, _) = choose_time_step(&ops, &dom.space, &dom.map, 1.0, None).map_err(js_err)?;
        Ok(WaveSim { dom, ops, state, dt })
    }

    pub fn step(&mut self, n: usize) -> Result<(), JsValue> {
        self.state = suzuki_yoshida4(&self.state, &self.ops, self.dt, n, None).map_err(js_err)?;
        Ok(())
    }

    #[wasm_bindgen(getter)]
    pub fn time(&self) -> f64 {
        self.state.t
    }

    #[wasm_bindgen(getter)]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[wasm_bindgen(getter)]
    pub fn energy(&self) -> f64 {
        self.ops.energy(&self.state)
    }

    /// `B` on an `n × n` raster.
    pub fn raster(&self, n: usize) -> Result<Vec<f64>, JsValue> {
        Ok(sample_raster(&self.dom.space, &self.dom.map, &self.state.b, n).map_err(js_err)?.values)
    }

    pub fn bounds(&self) -> Result<Vec<f64>, JsValue> {
        bounds_of(&self.dom.map)
    }
}
