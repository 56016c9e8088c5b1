//! Bessel functions of the first kind, roots of `J_n'` and the
//! Bessel–Fourier Maxwell mode on the unit disk.

use crate::error::{Error, Result};

/// Power series; accurate for moderate `|x|`.
pub fn bessel_j_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let mut sum = term;
    let q = half * half;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -q / (k * (k + n as f64));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() && k > half.abs() {
            break;
        }
        if k > 500.0 {
            break;
        }
    }
    sum
}

/// Miller's downward recurrence normalized by `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_miller(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let (x, sign) = if x < 0.0 && n % 2 == 1 { (-x, -1.0) } else { (x.abs(), 1.0) };
    let top = n.max(x as u32) as f64;
    let mut start = (top + 30.0 + (50.0 * top).sqrt()) as u32;
    start += start % 2;
    let (mut next, mut cur) = (0.0f64, 1e-300f64);
    let mut wanted = 0.0;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // cur now holds J_{k-1}
        if k - 1 == n {
            wanted = cur;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            wanted *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += cur;
    sign * wanted / norm
}

pub fn bessel_j(n: u32, x: f64) -> f64 {
    if x.abs() < 1.0 {
        bessel_j_series(n, x)
    } else {
        bessel_j_miller(n, x)
    }
}

/// `J_n` for any integer order, `J_{-n} = (-1)^n J_n`.
fn bessel_j_signed(n: i64, x: f64) -> f64 {
    let v = bessel_j(n.unsigned_abs() as u32, x);
    if n < 0 && n % 2 != 0 {
        -v
    } else {
        v
    }
}

/// `J_n' = (J_{n-1} − J_{n+1}) / 2`.
pub fn bessel_jp(n: u32, x: f64) -> f64 {
    let n = n as i64;
    0.5 * (bessel_j_signed(n - 1, x) - bessel_j_signed(n + 1, x))
}

/// `J_n'' = (J_{n-2} − 2 J_n + J_{n+2}) / 4`.
pub fn bessel_jpp(n: u32, x: f64) -> f64 {
    let n = n as i64;
    0.25 * (bessel_j_signed(n - 2, x) - 2.0 * bessel_j_signed(n, x) + bessel_j_signed(n + 2, x))
}

/// `J_n(x) / x` without cancellation at the origin (`n ≥ 1`).
pub fn bessel_j_over_x(n: u32, x: f64) -> f64 {
    if n == 0 {
        panic!("J_0(x)/x is unbounded at the origin");
    }
    if x.abs() < 1.0 {
        // Σ (−1)^k (x/2)^{2k+n−1} / (2 k! (k+n)!)
        let half = 0.5 * x;
        let mut term = 0.5;
        for k in 1..=n {
            term /= k as f64;
        }
        for _ in 1..n {
            term *= half;
        }
        let mut sum = term;
        let q = half * half;
        for k in 1..60 {
            let k = k as f64;
            term *= -q / (k * (k + n as f64));
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        bessel_j(n, x) / x
    }
}

/// `m`-th positive root of `J_n'` (the origin is not counted).
pub fn bessel_jp_root(n: u32, m: u32) -> Result<f64> {
    if m == 0 {
        return Err(Error::BesselRoot { n: n as usize, m: m as usize });
    }
    let step = 0.01;
    let mut a = step;
    let mut fa = bessel_jp(n, a);
    let mut count = 0;
    while a < 200.0 + 4.0 * m as f64 {
        let b = a + step;
        let fb = bessel_jp(n, b);
        if fa == 0.0 || fa * fb < 0.0 {
            count += 1;
            if count == m {
                return polish(n, a, b, m);
            }
        }
        a = b;
        fa = fb;
    }
    Err(Error::BesselRoot { n: n as usize, m: m as usize })
}

fn polish(n: u32, mut a: f64, mut b: f64, m: u32) -> Result<f64> {
    let mut fa = bessel_jp(n, a);
    if fa == 0.0 {
        return Ok(a);
    }
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        let fc = bessel_jp(n, c);
        if fc == 0.0 {
            return Ok(c);
        }
        if fa * fc < 0.0 {
            b = c;
        } else {
            a = c;
            fa = fc;
        }
        if b - a < 1e-10 {
            break;
        }
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..8 {
        let dx = bessel_jp(n, x) / bessel_jpp(n, x);
        x -= dx;
        if dx.abs() < 1e-15 * x {
            break;
        }
    }
    if !(x > a - 1e-8 && x < b + 1e-8) || bessel_jp(n, x).abs() > 1e-12 {
        return Err(Error::BesselRoot { n: n as usize, m: m as usize });
    }
    Ok(x)
}

/// Real Bessel–Fourier mode `(n, m)` of the unit disk with `k = ω = j'_{n,m}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselMode {
    pub n: u32,
    pub m: u32,
    pub k: f64,
}

impl BesselMode {
    pub fn new(n: u32, m: u32) -> Result<Self> {
        Ok(Self { n, m, k: bessel_jp_root(n, m)? })
    }

    pub fn omega(&self) -> f64 {
        self.k
    }

    /// `B = cos(ωt) J_n(kr) cos(nφ)`.
    pub fn magnetic(&self, t: f64, x: [f64; 2]) -> f64 {
        let (r, phi) = polar(x);
        (self.k * t).cos() * bessel_j(self.n, self.k * r) * (self.n as f64 * phi).cos()
    }

    /// `E = −sin(ωt) R(φ) (n J_n(kr)/(kr) sin nφ, J_n'(kr) cos nφ)` in Cartesian components.
    pub fn electric(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let (r, phi) = polar(x);
        let n = self.n as f64;
        let kr = self.k * r;
        let radial = if self.n == 0 { 0.0 } else { n * bessel_j_over_x(self.n, kr) * (n * phi).sin() };
        let angular = bessel_jp(self.n, kr) * (n * phi).cos();
        let (sn, cs) = phi.sin_cos();
        let amp = -(self.k * t).sin();
        [amp * (radial * cs - angular * sn), amp * (radial * sn + angular * cs)]
    }
}

fn polar(x: [f64; 2]) -> (f64, f64) {
    (x[0].hypot(x[1]), x[1].atan2(x[0]))
}
