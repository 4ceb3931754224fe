//! Gaussian atoms and closed-form application of the differential
//! operators of each PDE family.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use crate::autodiff::Jet;

/// Lower bound applied to every width parameter.
pub const WIDTH_FLOOR: f64 = 1e-3;

/// Scalars the kernel formulas are generic over: plain floats for
/// evaluation, jets when local parameter gradients are needed.
pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> + Add<f64, Output = Self> + Mul<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn val(&self) -> f64;
    fn exp(self) -> Self;
    fn recip(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn val(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

impl<const N: usize> Real for Jet<N> {
    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }
    fn val(&self) -> f64 {
        self.value
    }
    fn exp(self) -> Self {
        Jet::exp(self)
    }
    fn recip(self) -> Self {
        Jet::recip(self)
    }
    fn sin(self) -> Self {
        Jet::sin(self)
    }
    fn cos(self) -> Self {
        Jet::cos(self)
    }
}

/// `min(|x−y|, 1−|x−y|)` for points on the unit circle.
pub fn wrapped_distance(x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    d.min(1.0 - d)
}

/// Representative of `d` modulo 1 in `[−0.5, 0.5]`.
pub fn wrap_signed(d: f64) -> f64 {
    d - d.round()
}

fn wrap_signed_r<R: Real>(d: R) -> R {
    d + (-d.val().round())
}

/// Isotropic planar Gaussian `exp(−r²/σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarAtom {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarEval {
    pub phi: f64,
    pub dx: f64,
    pub dy: f64,
    pub laplacian: f64,
}

impl PlanarAtom {
    pub fn eval(&self, x: f64, y: f64) -> PlanarEval {
        let [phi, dx, dy, laplacian] = planar_kernel(self.mu_x, self.mu_y, self.sigma, x, y);
        PlanarEval { phi, dx, dy, laplacian }
    }
}

/// `[φ, φ_x, φ_y, Δφ]` for `φ = exp(−r²/σ²)`.
pub fn planar_kernel<R: Real>(mu_x: R, mu_y: R, sigma: R, x: f64, y: f64) -> [R; 4] {
    let s = (sigma * sigma).recip();
    let dx = -mu_x + x;
    let dy = -mu_y + y;
    let r2 = dx * dx + dy * dy;
    let phi = (-(r2 * s)).exp();
    let gx = -(phi * dx * s) * 2.0;
    let gy = -(phi * dy * s) * 2.0;
    // Δφ = φ(4r²s² − 4s)
    let lap = phi * (r2 * s * s * 4.0 - s * 4.0);
    [phi, gx, gy, lap]
}

/// The Dirichlet bubble `x(1−x)y(1−y)` with `[T, T_x, T_y, ΔT]`.
pub fn bubble(x: f64, y: f64) -> [f64; 4] {
    let (px, py) = (x * (1.0 - x), y * (1.0 - y));
    [px * py, (1.0 - 2.0 * x) * py, px * (1.0 - 2.0 * y), -2.0 * (px + py)]
}

/// `(Tφ, Δ(Tφ))` for a bubble-multiplied planar kernel.
pub fn bubble_kernel<R: Real>(mu_x: R, mu_y: R, sigma: R, x: f64, y: f64) -> (R, R) {
    let [t, tx, ty, lt] = bubble(x, y);
    let [phi, px, py, lp] = planar_kernel(mu_x, mu_y, sigma, x, y);
    let lap = lp * t + (px * tx + py * ty) * 2.0 + phi * lt;
    (phi * t, lap)
}

/// Space-time atom for the corrector dictionary. The spatial factor is
/// evaluated at `x − ξ − v(t − τ)`, so `velocity = 0` gives a separable
/// kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeAtom {
    pub xi: f64,
    pub h: f64,
    pub tau: f64,
    pub s: f64,
    pub velocity: f64,
    pub periodic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeEval {
    pub phi: f64,
    pub dx: f64,
    pub dxx: f64,
    pub dt: f64,
}

impl SpaceTimeAtom {
    /// Concentration of the periodic kernel, matched so that its curvature
    /// at the center equals the Gaussian's `−1/h²`.
    pub fn kappa(&self) -> f64 {
        1.0 / (4.0 * PI * PI * self.h * self.h)
    }

    pub fn eval(&self, x: f64, t: f64) -> SpaceTimeEval {
        let dt = t - self.tau;
        let d = x - self.xi - self.velocity * dt;
        let (k, k1, k2) = if self.periodic {
            let kappa = self.kappa();
            let th = 2.0 * PI * d;
            let k = (kappa * (th.cos() - 1.0)).exp();
            let g = -kappa * 2.0 * PI * th.sin();
            (k, k * g, k * (g * g - kappa * 4.0 * PI * PI * th.cos()))
        } else {
            let ih2 = 1.0 / (self.h * self.h);
            let k = (-0.5 * d * d * ih2).exp();
            (k, -d * ih2 * k, (d * d * ih2 - 1.0) * ih2 * k)
        };
        let is2 = 1.0 / (self.s * self.s);
        let g = (-0.5 * dt * dt * is2).exp();
        SpaceTimeEval {
            phi: k * g,
            dx: k1 * g,
            dxx: k2 * g,
            dt: g * (-self.velocity * k1 - dt * is2 * k),
        }
    }
}

/// Instantaneous state of a moving packet and its time rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicAtomState<R = f64> {
    pub alpha: R,
    pub xi: R,
    pub h: R,
    pub dalpha_dt: R,
    pub dxi_dt: R,
    pub dh_dt: R,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketEval<R = f64> {
    pub u: R,
    pub du_dx: R,
    pub d2u_dx2: R,
    pub du_dt: R,
}

/// `α exp(−d²/(2h²))` with `d` the (wrapped, if `periodic`) offset from the
/// center; the time derivative follows the chain rule through `(α, ξ, h)`.
pub fn dynamic_packet_eval<R: Real>(state: &DynamicAtomState<R>, x: f64, periodic: bool) -> PacketEval<R> {
    let raw = -state.xi + x;
    let d = if periodic { wrap_signed_r(raw) } else { raw };
    let ih = state.h.recip();
    let ih2 = ih * ih;
    let e = (-(d * d * ih2) * 0.5).exp();
    let u = state.alpha * e;
    let du_dx = -(u * d * ih2);
    let d2u_dx2 = u * (d * d * ih2 + (-1.0)) * ih2;
    let du_dh = u * d * d * ih2 * ih;
    let du_dt = e * state.dalpha_dt - du_dx * state.dxi_dt + du_dh * state.dh_dt;
    PacketEval {
        u,
        du_dx,
        d2u_dx2,
        du_dt,
    }
}
