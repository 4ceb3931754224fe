//! Append-only reverse-mode tape over scalar nodes.
//!
//! Every node stores its value and a CSR slice of `(parent, local partial)`
//! pairs. Besides the usual scalar primitives the tape has two fused nodes:
//! [`Tape::affine`] (a dot product plus bias, one node per output unit) and
//! [`Tape::custom`] (a value with caller-supplied partials), which keep dense
//! layers and closed-form basis sums from exploding into millions of nodes.

use super::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A contiguous run of tape nodes, typically a row of a weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarSpan {
    pub start: Var,
    pub len: usize,
}

impl VarSpan {
    pub fn at(self, i: usize) -> Var {
        debug_assert!(i < self.len);
        Var(self.start.0 + i as u32)
    }

    pub fn slice(self, from: usize, len: usize) -> VarSpan {
        debug_assert!(from + len <= self.len);
        VarSpan {
            start: Var(self.start.0 + from as u32),
            len,
        }
    }

    pub fn iter(self) -> impl Iterator<Item = Var> {
        (self.start.0..self.start.0 + self.len as u32).map(Var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddConst,
    MulConst,
    Exp,
    Ln,
    Tanh,
    Sin,
    Cos,
    Sqrt,
    Powf,
    Min,
    Max,
    Abs,
    Sigmoid,
    Softplus,
    Sum,
    Affine,
    Custom,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<f64>,
    ops: Vec<Op>,
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        let mut t = Self::default();
        t.offsets.push(0);
        t
    }

    /// Drops all nodes but keeps the allocations.
    pub fn clear(&mut self) {
        self.values.clear();
        self.ops.clear();
        self.offsets.clear();
        self.offsets.push(0);
        self.parents.clear();
        self.partials.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of stored `(parent, partial)` edges.
    pub fn edge_count(&self) -> usize {
        self.parents.len()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    pub fn op(&self, v: Var) -> Op {
        self.ops[v.index()]
    }

    pub fn parents_of(&self, v: Var) -> &[u32] {
        let i = v.index();
        &self.parents[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    #[inline]
    fn push(&mut self, op: Op, value: f64) -> Var {
        let id = self.values.len() as u32;
        self.values.push(value);
        self.ops.push(op);
        self.offsets.push(self.parents.len() as u32);
        Var(id)
    }

    #[inline]
    fn push1(&mut self, op: Op, value: f64, a: Var, da: f64) -> Var {
        self.parents.push(a.0);
        self.partials.push(da);
        self.push(op, value)
    }

    #[inline]
    fn push2(&mut self, op: Op, value: f64, a: Var, da: f64, b: Var, db: f64) -> Var {
        self.parents.push(a.0);
        self.partials.push(da);
        self.parents.push(b.0);
        self.partials.push(db);
        self.push(op, value)
    }

    /// New independent leaf (parameter, input, or constant).
    pub fn var(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.var(value)
    }

    /// Appends `values.len()` consecutive leaves.
    pub fn leaves(&mut self, values: &[f64]) -> VarSpan {
        let start = Var(self.values.len() as u32);
        for &v in values {
            self.var(v);
        }
        VarSpan {
            start,
            len: values.len(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push2(Op::Add, v, a, 1.0, b, 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push2(Op::Sub, v, a, 1.0, b, -1.0)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.push2(Op::Mul, va * vb, a, vb, b, va)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let q = va / vb;
        self.push2(Op::Div, q, a, 1.0 / vb, b, -q / vb)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.push1(Op::Neg, v, a, -1.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push1(Op::AddConst, v, a, 1.0)
    }

    pub fn mul_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push1(Op::MulConst, v, a, c)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.value(a).exp();
        self.push1(Op::Exp, e, a, e)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push1(Op::Ln, x.ln(), a, 1.0 / x)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).tanh();
        self.push1(Op::Tanh, t, a, 1.0 - t * t)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push1(Op::Sin, x.sin(), a, x.cos())
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push1(Op::Cos, x.cos(), a, -x.sin())
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let s = self.value(a).sqrt();
        self.push1(Op::Sqrt, s, a, 0.5 / s)
    }

    /// `a^p` for a constant exponent.
    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let x = self.value(a);
        self.push1(Op::Powf, x.powf(p), a, p * x.powf(p - 1.0))
    }

    /// Ties send the whole adjoint to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        if va <= vb {
            self.push2(Op::Min, va, a, 1.0, b, 0.0)
        } else {
            self.push2(Op::Min, vb, a, 0.0, b, 1.0)
        }
    }

    /// Ties send the whole adjoint to `a`.
    pub fn max(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        if va >= vb {
            self.push2(Op::Max, va, a, 1.0, b, 0.0)
        } else {
            self.push2(Op::Max, vb, a, 0.0, b, 1.0)
        }
    }

    /// Subgradient 0 at the origin.
    pub fn abs(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let d = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.push1(Op::Abs, x.abs(), a, d)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = sigmoid(self.value(a));
        self.push1(Op::Sigmoid, s, a, s * (1.0 - s))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push1(Op::Softplus, softplus(x), a, sigmoid(x))
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let mut v = 0.0;
        for &x in xs {
            v += self.value(x);
            self.parents.push(x.0);
            self.partials.push(1.0);
        }
        self.push(Op::Sum, v)
    }

    /// `Σ_k w_k x_k (+ bias)` as a single node.
    pub fn affine(&mut self, w: VarSpan, x: &[Var], bias: Option<Var>) -> Var {
        debug_assert_eq!(w.len, x.len());
        let mut v = 0.0;
        let w0 = w.start.0;
        for (k, &xk) in x.iter().enumerate() {
            let wk = w0 + k as u32;
            let (wv, xv) = (self.values[wk as usize], self.values[xk.index()]);
            v += wv * xv;
            self.parents.push(wk);
            self.partials.push(xv);
            self.parents.push(xk.0);
            self.partials.push(wv);
        }
        if let Some(b) = bias {
            v += self.value(b);
            self.parents.push(b.0);
            self.partials.push(1.0);
        }
        self.push(Op::Affine, v)
    }

    /// Node with externally computed value and local partials.
    pub fn custom(&mut self, value: f64, parents: &[Var], partials: &[f64]) -> Var {
        debug_assert_eq!(parents.len(), partials.len());
        self.parents.extend(parents.iter().map(|p| p.0));
        self.partials.extend_from_slice(partials);
        self.push(Op::Custom, value)
    }

    /// Reverse sweep from `output`; returns the adjoint of every node.
    pub fn backward(&self, output: Var) -> Result<Vec<f64>, AutodiffError> {
        let mut adj = vec![0.0f64; self.values.len()];
        adj[output.index()] = 1.0;
        for i in (0..=output.index()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            if !a.is_finite() {
                return Err(AutodiffError::NaNDetected { node: i });
            }
            let (lo, hi) = (self.offsets[i] as usize, self.offsets[i + 1] as usize);
            for k in lo..hi {
                adj[self.parents[k] as usize] += a * self.partials[k];
            }
        }
        Ok(adj)
    }

    /// Gradient of `output` with respect to the leaves in `span`.
    pub fn gradient(&self, output: Var, span: VarSpan) -> Result<Vec<f64>, AutodiffError> {
        let adj = self.backward(output)?;
        let g = adj[span.start.index()..span.start.index() + span.len].to_vec();
        if let Some(k) = g.iter().position(|v| !v.is_finite()) {
            return Err(AutodiffError::NaNDetected {
                node: span.start.index() + k,
            });
        }
        Ok(g)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-5;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.var(3.0);
        let y = t.mul(x, x);
        let g = t.backward(y).unwrap();
        assert_eq!(g[x.index()], 6.0);
    }

    #[test]
    fn tanh_at_zero() {
        let mut t = Tape::new();
        let x = t.var(0.0);
        let y = t.tanh(x);
        assert_eq!(t.backward(y).unwrap()[x.index()], 1.0);
    }

    #[test]
    fn least_squares_closed_form() {
        // Σ(w x_i − y_i)² over {(1,1),(2,2)} at w = 0: gradient −10.
        let mut t = Tape::new();
        let w = t.var(0.0);
        let mut terms = Vec::new();
        for (x, y) in [(1.0, 1.0), (2.0, 2.0)] {
            let wx = t.mul_const(w, x);
            let r = t.add_const(wx, -y);
            terms.push(t.mul(r, r));
        }
        let loss = t.sum(&terms);
        assert_eq!(t.backward(loss).unwrap()[w.index()], -10.0);
    }

    #[test]
    fn each_primitive_matches_finite_differences() {
        type Build = fn(&mut Tape, Var) -> Var;
        let cases: Vec<(&str, Build, fn(f64) -> f64)> = vec![
            ("exp", |t, x| t.exp(x), f64::exp),
            ("tanh", |t, x| t.tanh(x), f64::tanh),
            ("sin", |t, x| t.sin(x), f64::sin),
            ("cos", |t, x| t.cos(x), f64::cos),
            ("sqrt", |t, x| t.sqrt(x), f64::sqrt),
            ("ln", |t, x| t.ln(x), f64::ln),
            ("pow", |t, x| t.powf(x, 2.5), |x| x.powf(2.5)),
            ("sigmoid", |t, x| t.sigmoid(x), sigmoid),
            ("softplus", |t, x| t.softplus(x), softplus),
            ("recip", |t, x| {
                let one = t.constant(1.0);
                t.div(one, x)
            }, |x| 1.0 / x),
        ];
        for (name, build, f) in cases {
            for &x0 in &[0.3, 0.9, 1.7] {
                let mut t = Tape::new();
                let x = t.var(x0);
                let y = build(&mut t, x);
                assert_eq!(t.value(y), f(x0), "{name} value");
                let g = t.backward(y).unwrap()[x.index()];
                let fd = central_diff(f, x0);
                assert!((g - fd).abs() <= 1e-7 * fd.abs().max(1.0), "{name}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn min_max_abs_subgradients() {
        let mut t = Tape::new();
        let a = t.var(1.0);
        let b = t.var(1.0);
        let m = t.max(a, b);
        let g = t.backward(m).unwrap();
        assert_eq!((g[a.index()], g[b.index()]), (1.0, 0.0));
        let z = t.var(0.0);
        let az = t.abs(z);
        assert_eq!(t.backward(az).unwrap()[z.index()], 0.0);
        let n = t.var(-2.0);
        let an = t.abs(n);
        assert_eq!(t.backward(an).unwrap()[n.index()], -1.0);
        let lo = t.min(n, a);
        assert_eq!(t.value(lo), -2.0);
        assert_eq!(t.backward(lo).unwrap()[n.index()], 1.0);
    }

    #[test]
    fn affine_and_custom_nodes() {
        let mut t = Tape::new();
        let w = t.leaves(&[1.0, -2.0, 0.5]);
        let x: Vec<Var> = [3.0, 1.0, 4.0].iter().map(|&v| t.var(v)).collect();
        let b = t.var(0.25);
        let y = t.affine(w, &x, Some(b));
        assert_eq!(t.value(y), 3.0 - 2.0 + 2.0 + 0.25);
        let z = t.custom(7.0, &[y, x[0]], &[2.0, -1.0]);
        let g = t.backward(z).unwrap();
        assert_eq!(g[w.at(1).index()], 2.0 * 1.0);
        assert_eq!(g[x[0].index()], 2.0 * 1.0 - 1.0);
        assert_eq!(g[b.index()], 2.0);
    }

    #[test]
    fn nan_is_reported_with_node() {
        let mut t = Tape::new();
        let x = t.var(0.0);
        let s = t.sqrt(x); // derivative 0.5/0 = inf
        match t.backward(s) {
            Err(AutodiffError::NaNDetected { node }) => assert_eq!(node, x.index()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn clear_keeps_tape_usable() {
        let mut t = Tape::new();
        let x = t.var(2.0);
        let _ = t.exp(x);
        t.clear();
        assert!(t.is_empty());
        let y = t.var(5.0);
        assert_eq!(y.index(), 0);
        assert_eq!(t.edge_count(), 0);
    }
}
