//! Local conforming projections onto the polar subspaces of the tensor
//! spline sequence, in matrix and matrix-free form.
//!
//! Only the two innermost coefficient rings are touched (plus the outer ring
//! when homogeneous Dirichlet conditions are requested).

use crate::derham::{Component, FieldCoeffs, TensorDeRham};
use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Target smoothness of the projected sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConformityKind {
    /// `H¹ / H(curl) / L²` sequence, continuous at the pole.
    V,
    /// `C¹ / C⁰ / L²` sequence.
    U,
}

/// The `U` characterization depends on how the domain is mapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapVariant {
    Analytical,
    Spline,
}

/// Value, gradient and vector-value parameters at the pole.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoleParameters {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub eta1: f64,
    pub eta2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformityReport {
    pub conforming: bool,
    /// Largest violation of the ring constraints.
    pub defect: f64,
    pub params: PoleParameters,
}

#[derive(Debug, Clone)]
pub struct ConformingProjections {
    space: TensorDeRham,
    kind: ConformityKind,
    variant: MapVariant,
    dirichlet: bool,
    cos: Vec<f64>,
    sin: Vec<f64>,
    matrices: [SparseOperator; 3],
    warnings: Vec<String>,
}

impl ConformingProjections {
    pub fn new(space: &TensorDeRham, kind: ConformityKind, variant: MapVariant, dirichlet: bool) -> Result<Self> {
        if space.n_s() < 3 {
            return Err(Error::InvalidInput("conforming projections need at least three radial rings".into()));
        }
        if kind == ConformityKind::U && space.degree() < 2 {
            return Err(Error::InvalidInput("the C1 sequence needs degree >= 2".into()));
        }
        if dirichlet && space.n_s() < 4 {
            return Err(Error::InvalidInput("boundary conditions need at least four radial rings".into()));
        }
        let nt = space.n_theta();
        let angles: Vec<f64> = (0..nt).map(|j| space.kv_theta().angle(j as i64)).collect();
        let mut warnings = Vec::new();
        if kind == ConformityKind::U && !space.assumption1_ok() {
            warnings
                .push(format!("n_theta = {nt} violates n_theta = 4n' >= 4p; the C1 projections may not be idempotent"));
        }
        let mut out = Self {
            space: space.clone(),
            kind,
            variant,
            dirichlet,
            cos: angles.iter().map(|t| t.cos()).collect(),
            sin: angles.iter().map(|t| t.sin()).collect(),
            matrices: [SparseOperator::zeros(0, 0), SparseOperator::zeros(0, 0), SparseOperator::zeros(0, 0)],
            warnings,
        };
        out.matrices = [out.build_matrix(0), out.build_matrix(1), out.build_matrix(2)];
        Ok(out)
    }

    pub fn space(&self) -> &TensorDeRham {
        &self.space
    }

    pub fn kind(&self) -> ConformityKind {
        self.kind
    }

    pub fn variant(&self) -> MapVariant {
        self.variant
    }

    pub fn dirichlet(&self) -> bool {
        self.dirichlet
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn matrix(&self, level: usize) -> &SparseOperator {
        &self.matrices[level]
    }

    /// Whether ring 1 carries the first angular harmonic (spline-mapped `U`).
    fn harmonic(&self) -> bool {
        self.kind == ConformityKind::U && self.variant == MapVariant::Spline
    }

    /// `(2/n) Σ_k cos(θ_j − θ_k) x_k` for all `j`, via the two discrete Fourier sums.
    fn first_harmonic(&self, x: &[f64]) -> Vec<f64> {
        let (a, b) = self.fourier(x);
        (0..x.len()).map(|j| a * self.cos[j] + b * self.sin[j]).collect()
    }

    /// `((2/n) Σ x_k cos θ_k, (2/n) Σ x_k sin θ_k)`.
    fn fourier(&self, x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let a = x.iter().zip(&self.cos).map(|(v, c)| v * c).sum::<f64>() * 2.0 / n;
        let b = x.iter().zip(&self.sin).map(|(v, s)| v * s).sum::<f64>() * 2.0 / n;
        (a, b)
    }

    /// Matrix-free application to a coefficient vector.
    pub fn apply(&self, level: usize, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.space.dim(level), "coefficient length does not match level {level}");
        match level {
            0 => self.apply0(x),
            1 => self.apply1(x),
            2 => self.apply2(x),
            _ => panic!("de Rham level {level} out of range"),
        }
    }

    pub fn apply_coeffs(&self, c: &FieldCoeffs) -> FieldCoeffs {
        FieldCoeffs { level: c.level, data: self.apply(c.level, &c.data) }
    }

    fn apply0(&self, x: &[f64]) -> Vec<f64> {
        let sp = &self.space;
        let nt = sp.n_theta();
        let mut y = x.to_vec();
        let ring0 = &x[sp.idx0(0, 0)..sp.idx0(1, 0)];
        let mean = ring0.iter().sum::<f64>() / nt as f64;
        y[..nt].iter_mut().for_each(|v| *v = mean);
        if self.kind == ConformityKind::U {
            let ring1 = &x[sp.idx0(1, 0)..sp.idx0(2, 0)];
            let h = if self.harmonic() { self.first_harmonic(ring1) } else { vec![0.0; nt] };
            for j in 0..nt {
                y[sp.idx0(1, j)] = mean + h[j];
            }
        }
        if self.dirichlet {
            let last = sp.n_s() - 1;
            y[sp.idx0(last, 0)..].iter_mut().for_each(|v| *v = 0.0);
        }
        y
    }

    fn apply1(&self, x: &[f64]) -> Vec<f64> {
        let sp = &self.space;
        let nt = sp.n_theta();
        let mut y = x.to_vec();
        let s0: Vec<f64> = (0..nt).map(|j| x[sp.idx1(Component::S, 0, j)]).collect();
        let new_s0 = match self.kind {
            ConformityKind::V => s0.clone(),
            ConformityKind::U if self.harmonic() => self.first_harmonic(&s0),
            ConformityKind::U => vec![0.0; nt],
        };
        if self.kind == ConformityKind::U {
            for j in 0..nt {
                y[sp.idx1(Component::S, 0, j)] = new_s0[j];
                y[sp.idx1(Component::S, 1, j)] = x[sp.idx1(Component::S, 1, j)] - new_s0[j] + s0[j];
            }
        }
        for j in 0..nt {
            y[sp.idx1(Component::Theta, 0, j)] = 0.0;
            y[sp.idx1(Component::Theta, 1, j)] = new_s0[(j + 1) % nt] - new_s0[j];
        }
        if self.dirichlet {
            let last = sp.n_s() - 1;
            for j in 0..nt {
                y[sp.idx1(Component::Theta, last, j)] = 0.0;
            }
        }
        y
    }

    fn apply2(&self, x: &[f64]) -> Vec<f64> {
        let sp = &self.space;
        let nt = sp.n_theta();
        let mut y = x.to_vec();
        for j in 0..nt {
            y[sp.idx2(1, j)] = x[sp.idx2(0, j)] + x[sp.idx2(1, j)];
            y[sp.idx2(0, j)] = 0.0;
        }
        y
    }

    fn ring_block(&self) -> Vec<Vec<f64>> {
        let nt = self.space.n_theta();
        (0..nt)
            .map(|j| {
                (0..nt)
                    .map(|k| {
                        if self.harmonic() {
                            2.0 / nt as f64 * (self.cos[j] * self.cos[k] + self.sin[j] * self.sin[k])
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn build_matrix(&self, level: usize) -> SparseOperator {
        let sp = &self.space;
        let (ns, nt) = (sp.n_s(), sp.n_theta());
        let dim = sp.dim(level);
        let inv_n = 1.0 / nt as f64;
        let pblock = self.ring_block();
        let mut t = Vec::new();
        match level {
            0 => {
                for j in 0..nt {
                    for k in 0..nt {
                        t.push((sp.idx0(0, j), sp.idx0(0, k), inv_n));
                    }
                }
                let first_identity_ring = if self.kind == ConformityKind::U { 2 } else { 1 };
                if self.kind == ConformityKind::U {
                    for j in 0..nt {
                        for k in 0..nt {
                            t.push((sp.idx0(1, j), sp.idx0(0, k), inv_n));
                            t.push((sp.idx0(1, j), sp.idx0(1, k), pblock[j][k]));
                        }
                    }
                }
                let last = if self.dirichlet { ns - 1 } else { ns };
                for i in first_identity_ring..last {
                    for j in 0..nt {
                        t.push((sp.idx0(i, j), sp.idx0(i, j), 1.0));
                    }
                }
            }
            1 => {
                let s = |i, j| sp.idx1(Component::S, i, j);
                let th = |i, j| sp.idx1(Component::Theta, i, j);
                // new ring-0 s coefficients as rows of a block acting on old ring 0
                let s0_block: Vec<Vec<f64>> = match self.kind {
                    ConformityKind::V => {
                        (0..nt).map(|j| (0..nt).map(|k| f64::from(u8::from(j == k))).collect()).collect()
                    }
                    ConformityKind::U => pblock.clone(),
                };
                for j in 0..nt {
                    for k in 0..nt {
                        let v = s0_block[j][k];
                        t.push((s(0, j), s(0, k), v));
                        if self.kind == ConformityKind::U {
                            // v̄_1 = v_1 + (I − block) v_0
                            let id = f64::from(u8::from(j == k));
                            t.push((s(1, j), s(0, k), id - v));
                        }
                        // v̄^θ_1j = v̄^s_{0,j+1} − v̄^s_{0,j}
                        let d = s0_block[(j + 1) % nt][k] - s0_block[j][k];
                        t.push((th(1, j), s(0, k), d));
                    }
                }
                for i in 1..ns - 1 {
                    for j in 0..nt {
                        t.push((s(i, j), s(i, j), 1.0));
                    }
                }
                let last = if self.dirichlet { ns - 1 } else { ns };
                for i in 2..last {
                    for j in 0..nt {
                        t.push((th(i, j), th(i, j), 1.0));
                    }
                }
            }
            2 => {
                for j in 0..nt {
                    t.push((sp.idx2(1, j), sp.idx2(0, j), 1.0));
                }
                for i in 1..ns - 1 {
                    for j in 0..nt {
                        t.push((sp.idx2(i, j), sp.idx2(i, j), 1.0));
                    }
                }
            }
            _ => panic!("de Rham level {level} out of range"),
        }
        SparseOperator::from_triplets(dim, dim, t)
    }

    /// Checks the ring constraints characterizing the conforming subspace and
    /// extracts the pole parameters.
    pub fn is_conforming(&self, coeffs: &FieldCoeffs, tol: f64) -> Result<ConformityReport> {
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
        }
        let sp = &self.space;
        if coeffs.data.len() != sp.dim(coeffs.level) {
            return Err(Error::InvalidInput("coefficient length does not match the space".into()));
        }
        let x = &coeffs.data;
        let nt = sp.n_theta();
        let mut params = PoleParameters::default();
        let mut defect: f64 = 0.0;
        match coeffs.level {
            0 => {
                let ring0: Vec<f64> = (0..nt).map(|j| x[sp.idx0(0, j)]).collect();
                let g0 = ring0.iter().sum::<f64>() / nt as f64;
                params.gamma0 = g0;
                defect = ring0.iter().fold(defect, |d, v| d.max((v - g0).abs()));
                if self.kind == ConformityKind::U {
                    let ring1: Vec<f64> = (0..nt).map(|j| x[sp.idx0(1, j)]).collect();
                    let (g1, g2) = if self.harmonic() { self.fourier(&ring1) } else { (0.0, 0.0) };
                    params.gamma1 = g1;
                    params.gamma2 = g2;
                    for j in 0..nt {
                        let target = g0 + g1 * self.cos[j] + g2 * self.sin[j];
                        defect = defect.max((ring1[j] - target).abs());
                    }
                }
                if self.dirichlet {
                    for j in 0..nt {
                        defect = defect.max(x[sp.idx0(sp.n_s() - 1, j)].abs());
                    }
                }
            }
            1 => {
                let s0: Vec<f64> = (0..nt).map(|j| x[sp.idx1(Component::S, 0, j)]).collect();
                if self.kind == ConformityKind::U {
                    let (e1, e2) = if self.harmonic() { self.fourier(&s0) } else { (0.0, 0.0) };
                    params.eta1 = e1;
                    params.eta2 = e2;
                    for j in 0..nt {
                        defect = defect.max((s0[j] - e1 * self.cos[j] - e2 * self.sin[j]).abs());
                    }
                }
                for j in 0..nt {
                    defect = defect.max(x[sp.idx1(Component::Theta, 0, j)].abs());
                    let d = s0[(j + 1) % nt] - s0[j];
                    defect = defect.max((x[sp.idx1(Component::Theta, 1, j)] - d).abs());
                    if self.dirichlet {
                        defect = defect.max(x[sp.idx1(Component::Theta, sp.n_s() - 1, j)].abs());
                    }
                }
            }
            2 => {
                for j in 0..nt {
                    defect = defect.max(x[sp.idx2(0, j)].abs());
                }
            }
            l => panic!("de Rham level {l} out of range"),
        }
        Ok(ConformityReport { conforming: defect <= tol, defect, params })
    }
}
