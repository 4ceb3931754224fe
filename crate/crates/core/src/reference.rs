//! Ground-truth solutions: finite differences for Poisson, closed forms for
//! constant-speed transport, and characteristic inversion for the
//! variable-speed problem.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::wrap_signed;
use crate::linalg::{solve_five_point, FivePointSystem, LinalgError};

/// Source center used by the advection-diffusion family.
pub const ADVDIFF_XC: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("foot point not bracketed for x = {x}, t = {t}")]
    RootNotBracketed { x: f64, t: f64 },
    #[error("invalid reference input: {0}")]
    InvalidInput(String),
}

/// Uniform axis `lo..=hi` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n }
    }

    pub fn spacing(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.hi - self.lo) / (self.n - 1) as f64
        }
    }

    pub fn at(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i)).collect()
    }
}

/// Values of a scalar field on a tensor grid; the first axis varies
/// fastest (`values[j * x.n + i]` is the value at `(x_i, y_j)`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub x: Axis,
    pub y: Axis,
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn from_fn(x: Axis, y: Axis, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(x.n * y.n);
        for j in 0..y.n {
            let yj = y.at(j);
            for i in 0..x.n {
                values.push(f(x.at(i), yj));
            }
        }
        Self { x, y, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.x.n + i]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Header line with both axes, then one line per `y` row.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# x {:.17e} {:.17e} {} y {:.17e} {:.17e} {}\n",
            self.x.lo, self.x.hi, self.x.n, self.y.lo, self.y.hi, self.y.n
        );
        for row in self.values.chunks(self.x.n.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }
}

/// One Gaussian forcing term `weight/(2πν²) exp(−r²/(2ν²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSource {
    pub x0: f64,
    pub y0: f64,
    pub nu: f64,
    pub weight: f64,
}

impl GaussianSource {
    pub fn new(x0: f64, y0: f64, nu: f64) -> Self {
        Self { x0, y0, nu, weight: 1.0 }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r2 = (x - self.x0).powi(2) + (y - self.y0).powi(2);
        let v2 = self.nu * self.nu;
        self.weight / (2.0 * PI * v2) * (-r2 / (2.0 * v2)).exp()
    }
}

/// Homogeneous-Dirichlet solution of `−Δu = Σ f_k` on an `n × n` node grid
/// over the unit square (boundary nodes included).
pub fn poisson_fd(sources: &[GaussianSource], n: usize) -> Result<SampledField, ReferenceError> {
    if sources.is_empty() {
        return Err(ReferenceError::InvalidInput("no sources".into()));
    }
    poisson_fd_with(n, |x, y| sources.iter().map(|s| s.eval(x, y)).sum())
}

/// As [`poisson_fd`] for an arbitrary forcing.
pub fn poisson_fd_with(n: usize, f: impl Fn(f64, f64) -> f64) -> Result<SampledField, ReferenceError> {
    if n < 3 {
        return Err(ReferenceError::InvalidInput(format!("grid of {n} nodes")));
    }
    let axis = Axis::new(0.0, 1.0, n);
    let m = n - 2;
    let mut rhs = vec![0.0; m * m];
    for j in 0..m {
        for i in 0..m {
            rhs[j * m + i] = f(axis.at(i + 1), axis.at(j + 1));
        }
    }
    let u = solve_five_point(&FivePointSystem { n: m, h: axis.spacing(), rhs })?;
    let mut values = vec![0.0; n * n];
    for j in 0..m {
        for i in 0..m {
            values[(j + 1) * n + i + 1] = u[j * m + i];
        }
    }
    Ok(SampledField { x: axis, y: axis, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    PeriodicGaussian,
    MexicanHat,
}

/// Periodic initial profile centered at `x0`; `width` is `ν` for the
/// Gaussian and `σ` for the Mexican hat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCondition {
    pub kind: IcKind,
    pub x0: f64,
    pub width: f64,
}

impl InitialCondition {
    pub fn gaussian(x0: f64, nu: f64) -> Self {
        Self { kind: IcKind::PeriodicGaussian, x0, width: nu }
    }

    pub fn mexican_hat(x0: f64, sigma: f64) -> Self {
        Self { kind: IcKind::MexicanHat, x0, width: sigma }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            IcKind::PeriodicGaussian => {
                let d = wrap_signed(x - self.x0);
                (-d * d / (2.0 * self.width * self.width)).exp()
            }
            IcKind::MexicanHat => mexican_hat_ic(self.x0, self.width, self.x0 + wrap_signed(x - self.x0)),
        }
    }
}

/// `Σ_{k=−1..1} (1 − z_k²/σ²) exp(−z_k²/(2σ²))` with `z_k = x − x0 + k`.
pub fn mexican_hat_ic(x0: f64, sigma: f64, x: f64) -> f64 {
    let s2 = sigma * sigma;
    (-1..=1)
        .map(|k| {
            let z2 = (x - x0 + k as f64).powi(2);
            (1.0 - z2 / s2) * (-z2 / (2.0 * s2)).exp()
        })
        .sum()
}

/// `u₀(x − t)` with periodic wrapping.
pub fn advection_exact(ic: &InitialCondition, x: f64, t: f64) -> f64 {
    ic.eval((x - t).rem_euclid(1.0))
}

pub fn advdiff_exact(a: f64, nu: f64, x: f64, t: f64) -> f64 {
    let s = 4.0 * t + 1.0;
    (-(x - ADVDIFF_XC - a * t).powi(2) / (nu * s)).exp() / s.sqrt()
}

pub fn varadv_speed(beta: f64, x: f64) -> f64 {
    1.0 + beta * (2.0 * PI * x).sin()
}

// Seven-point Gauss–Legendre nodes and weights on [−1, 1].
const GL_NODES: [f64; 7] = [
    0.0,
    0.405_845_151_377_397_2,
    -0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    -0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
    -0.949_107_912_342_758_5,
];
const GL_WEIGHTS: [f64; 7] = [
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
    0.129_484_966_168_869_7,
];

fn gauss7(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    r * GL_NODES.iter().zip(&GL_WEIGHTS).map(|(x, w)| w * f(c + r * x)).sum::<f64>()
}

fn adaptive_gauss(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (l, r) = (gauss7(f, a, m), gauss7(f, m, b));
    if depth == 0 || (l + r - whole).abs() <= tol {
        l + r
    } else {
        adaptive_gauss(f, a, m, l, 0.5 * tol, depth - 1) + adaptive_gauss(f, m, b, r, 0.5 * tol, depth - 1)
    }
}

/// Travel time `∫_p^q dx / a(x; β)`.
pub fn travel_time(beta: f64, p: f64, q: f64, tol: f64) -> f64 {
    let f = |x: f64| 1.0 / varadv_speed(beta, x);
    // Split at unit intervals so each panel sees at most one period.
    let pieces = ((q - p).abs().ceil() as usize).max(1) * 4;
    let step = (q - p) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let (a, b) = (p + k as f64 * step, p + (k + 1) as f64 * step);
            adaptive_gauss(&f, a, b, gauss7(&f, a, b), tol / pieces as f64, 30)
        })
        .sum()
}

/// Solution of `u_t + (1 + β sin 2πx) u_x = 0` with periodic `u₀`, found by
/// locating the foot point whose characteristic reaches `x` at time `t`.
pub fn varadv_exact(ic: &InitialCondition, beta: f64, x: f64, t: f64, tol: f64) -> Result<f64, ReferenceError> {
    Ok(ic.eval(varadv_foot(beta, x, t, tol)?.rem_euclid(1.0)))
}

/// Foot point `p ≤ x` with `T(p, x) = t mod P`, `P` the travel time of one
/// full period.
pub fn varadv_foot(beta: f64, x: f64, t: f64, tol: f64) -> Result<f64, ReferenceError> {
    if beta.abs() >= 1.0 || t < 0.0 || !t.is_finite() || !x.is_finite() {
        return Err(ReferenceError::RootNotBracketed { x, t });
    }
    let period = 1.0 / (1.0 - beta * beta).sqrt();
    let r = t - (t / period).floor() * period;
    if r <= 0.0 {
        return Ok(x);
    }
    let qtol = tol * 1e-2;
    let g = |p: f64| travel_time(beta, p, x, qtol) - r;
    let (mut lo, mut hi) = (x - 1.0, x);
    let (mut glo, mut ghi) = (g(lo), -r);
    if glo < 0.0 || ghi > 0.0 {
        return Err(ReferenceError::RootNotBracketed { x, t });
    }
    // g is decreasing in p: g(lo) ≥ 0 ≥ g(hi).
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let secant = lo + glo * (hi - lo) / (glo - ghi);
        let mid = 0.5 * (lo + hi);
        let cand = if secant > lo + 0.01 * (hi - lo) && secant < hi - 0.01 * (hi - lo) { secant } else { mid };
        let gc = g(cand);
        if gc == 0.0 {
            return Ok(cand);
        }
        if gc > 0.0 {
            lo = cand;
            glo = gc;
        } else {
            hi = cand;
            ghi = gc;
        }
        // Keep the bracket shrinking geometrically even when the secant
        // point hugs one end.
        let gm = g(0.5 * (lo + hi));
        if gm > 0.0 {
            lo = 0.5 * (lo + hi);
            glo = gm;
        } else {
            hi = 0.5 * (lo + hi);
            ghi = gm;
        }
        if glo.abs() < 1e-15 {
            return Ok(lo);
        }
    }
    Ok(lo + glo * (hi - lo) / (glo - ghi))
}
