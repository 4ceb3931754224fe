//! Forward-mode numbers.
//!
//! [`Dual`] carries one tangent in plain `f64`. [`TapeDual`] is the same pair
//! recorded as two tape nodes, so a time derivative computed in forward mode
//! can itself be differentiated with respect to the weights by the reverse
//! sweep. [`Jet`] carries `N` tangents at once and is used for small local
//! gradients of closed-form kernel expressions.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{sigmoid, softplus, Tape, Var, VarSpan};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub value: f64,
    pub tangent: f64,
}

impl Dual {
    pub fn new(value: f64, tangent: f64) -> Self {
        Self { value, tangent }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(value, 0.0)
    }

    /// Seed for differentiating with respect to this input.
    pub fn variable(value: f64) -> Self {
        Self::new(value, 1.0)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        Self::new(e, e * self.tangent)
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        Self::new(t, (1.0 - t * t) * self.tangent)
    }

    pub fn sin(self) -> Self {
        Self::new(self.value.sin(), self.value.cos() * self.tangent)
    }

    pub fn cos(self) -> Self {
        Self::new(self.value.cos(), -self.value.sin() * self.tangent)
    }

    pub fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        Self::new(s, 0.5 / s * self.tangent)
    }

    pub fn powi(self, n: i32) -> Self {
        Self::new(
            self.value.powi(n),
            n as f64 * self.value.powi(n - 1) * self.tangent,
        )
    }

    pub fn sigmoid(self) -> Self {
        let s = sigmoid(self.value);
        Self::new(s, s * (1.0 - s) * self.tangent)
    }

    pub fn softplus(self) -> Self {
        Self::new(softplus(self.value), sigmoid(self.value) * self.tangent)
    }

    pub fn scale(self, c: f64) -> Self {
        Self::new(self.value * c, self.tangent * c)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.value + o.value, self.tangent + o.tangent)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.value - o.value, self.tangent - o.tangent)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(
            self.value * o.value,
            self.tangent * o.value + self.value * o.tangent,
        )
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let q = self.value / o.value;
        Dual::new(q, (self.tangent - q * o.tangent) / o.value)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.value, -self.tangent)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, c: f64) -> Dual {
        Dual::new(self.value + c, self.tangent)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, c: f64) -> Dual {
        self.scale(c)
    }
}

/// A dual number whose value and tangent both live on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapeDual {
    pub value: Var,
    pub tangent: Var,
}

impl Tape {
    pub fn dual_const(&mut self, value: f64, tangent: f64) -> TapeDual {
        TapeDual {
            value: self.constant(value),
            tangent: self.constant(tangent),
        }
    }

    pub fn dual_add(&mut self, a: TapeDual, b: TapeDual) -> TapeDual {
        TapeDual {
            value: self.add(a.value, b.value),
            tangent: self.add(a.tangent, b.tangent),
        }
    }

    pub fn dual_sub(&mut self, a: TapeDual, b: TapeDual) -> TapeDual {
        TapeDual {
            value: self.sub(a.value, b.value),
            tangent: self.sub(a.tangent, b.tangent),
        }
    }

    pub fn dual_mul(&mut self, a: TapeDual, b: TapeDual) -> TapeDual {
        let value = self.mul(a.value, b.value);
        let t1 = self.mul(a.tangent, b.value);
        let t2 = self.mul(a.value, b.tangent);
        TapeDual {
            value,
            tangent: self.add(t1, t2),
        }
    }

    pub fn dual_add_const(&mut self, a: TapeDual, c: f64) -> TapeDual {
        TapeDual {
            value: self.add_const(a.value, c),
            tangent: a.tangent,
        }
    }

    pub fn dual_mul_const(&mut self, a: TapeDual, c: f64) -> TapeDual {
        TapeDual {
            value: self.mul_const(a.value, c),
            tangent: self.mul_const(a.tangent, c),
        }
    }

    pub fn dual_tanh(&mut self, a: TapeDual) -> TapeDual {
        let y = self.tanh(a.value);
        let y2 = self.mul(y, y);
        let one_minus = self.mul_const(y2, -1.0);
        let one_minus = self.add_const(one_minus, 1.0);
        TapeDual {
            value: y,
            tangent: self.mul(one_minus, a.tangent),
        }
    }

    pub fn dual_exp(&mut self, a: TapeDual) -> TapeDual {
        let e = self.exp(a.value);
        TapeDual {
            value: e,
            tangent: self.mul(e, a.tangent),
        }
    }

    pub fn dual_sin(&mut self, a: TapeDual) -> TapeDual {
        let s = self.sin(a.value);
        let c = self.cos(a.value);
        TapeDual {
            value: s,
            tangent: self.mul(c, a.tangent),
        }
    }

    pub fn dual_sigmoid(&mut self, a: TapeDual) -> TapeDual {
        let s = self.sigmoid(a.value);
        let s2 = self.mul(s, s);
        let ds = self.sub(s, s2);
        TapeDual {
            value: s,
            tangent: self.mul(ds, a.tangent),
        }
    }

    pub fn dual_softplus(&mut self, a: TapeDual) -> TapeDual {
        let y = self.softplus(a.value);
        let s = self.sigmoid(a.value);
        TapeDual {
            value: y,
            tangent: self.mul(s, a.tangent),
        }
    }

    /// `Σ w_k x_k + bias` with tangent `Σ w_k ẋ_k + ḃias`; weights carry no
    /// tangent.
    pub fn dual_affine(&mut self, w: VarSpan, x: &[TapeDual], bias: Option<TapeDual>) -> TapeDual {
        let xv: Vec<Var> = x.iter().map(|d| d.value).collect();
        let xt: Vec<Var> = x.iter().map(|d| d.tangent).collect();
        let value = self.affine(w, &xv, bias.map(|b| b.value));
        let tangent = self.affine(w, &xt, bias.map(|b| b.tangent));
        TapeDual { value, tangent }
    }
}

/// Value plus `N` directional derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub value: f64,
    pub grad: [f64; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            grad: [0.0; N],
        }
    }

    /// Seeds direction `i`.
    pub fn seed(value: f64, i: usize) -> Self {
        let mut grad = [0.0; N];
        grad[i] = 1.0;
        Self { value, grad }
    }

    #[inline]
    fn chain(self, value: f64, d: f64) -> Self {
        let mut grad = self.grad;
        for g in &mut grad {
            *g *= d;
        }
        Self { value, grad }
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.value;
        self.chain(r, -r * r)
    }

    pub fn sin(self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }

    pub fn scale(self, c: f64) -> Self {
        self.chain(self.value * c, c)
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut grad = self.grad;
        for (g, h) in grad.iter_mut().zip(o.grad) {
            *g += h;
        }
        Self {
            value: self.value + o.value,
            grad,
        }
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut grad = self.grad;
        for (g, h) in grad.iter_mut().zip(o.grad) {
            *g -= h;
        }
        Self {
            value: self.value - o.value,
            grad,
        }
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut grad = [0.0; N];
        for i in 0..N {
            grad[i] = self.grad[i] * o.value + self.value * o.grad[i];
        }
        Self {
            value: self.value * o.value,
            grad,
        }
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        self.scale(c)
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Self {
            value: self.value + c,
            grad: self.grad,
        }
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}
