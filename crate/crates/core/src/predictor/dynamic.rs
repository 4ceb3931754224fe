use std::f64::consts::PI;

use crate::autodiff::{sigmoid, Dual, ParamVars, Tape, TapeDual, Var};
use crate::geometry::{dynamic_packet_eval, wrap_signed, DynamicAtomState, WIDTH_FLOOR};
use crate::reference::{advdiff_exact, varadv_speed, IcKind, ADVDIFF_XC};

use super::{Family, PredictorModel, TaskParams};

/// `[t, sin 2πkt, cos 2πkt]` for `k = 1..=harmonics`, with time derivatives.
pub fn time_features(t: f64, harmonics: usize) -> Vec<Dual> {
    let mut f = Vec::with_capacity(1 + 2 * harmonics);
    f.push(Dual::new(t, 1.0));
    for k in 1..=harmonics {
        let w = 2.0 * PI * k as f64;
        let (s, c) = (w * t).sin_cos();
        f.push(Dual::new(s, w * c));
        f.push(Dual::new(c, -w * s));
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DynEval {
    pub u: f64,
    pub u_x: f64,
    pub u_xx: f64,
    pub u_t: f64,
}

/// Per-task quantities that do not depend on time.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicContext {
    pub task: TaskParams,
    pub emb: Vec<f64>,
    pub gates: Vec<f64>,
}

/// Tape counterpart of [`DynamicContext`]. `shared_pre` holds the
/// first-layer pre-activations contributed by the embedding.
#[derive(Debug, Clone)]
pub struct TapeDynamicContext {
    pub task: TaskParams,
    pub gates: Option<Vec<Var>>,
    pub shared_pre: Vec<Var>,
}

#[derive(Debug, Clone, Copy)]
pub struct TapeState {
    pub alpha: TapeDual,
    pub xi: TapeDual,
    pub h: TapeDual,
}

/// `(u₀, u₀′, u₀″)` of the family's initial profile.
pub fn initial_profile(task: &TaskParams, ic_kind: IcKind, x: f64) -> [f64; 3] {
    match *task {
        TaskParams::AdvDiff { nu, .. } => {
            let d = x - ADVDIFF_XC;
            let u = (-d * d / nu).exp();
            let k = 2.0 * d / nu;
            [u, -k * u, (k * k - 2.0 / nu) * u]
        }
        TaskParams::Advection { x0, nu } if ic_kind == IcKind::MexicanHat => {
            let s2 = nu * nu;
            let z0 = wrap_signed(x - x0);
            let mut out = [0.0; 3];
            for k in -1..=1 {
                let z = z0 + k as f64;
                let q = z * z / s2;
                let e = (-0.5 * q).exp();
                out[0] += (1.0 - q) * e;
                out[1] += e * z * (q - 3.0) / s2;
                out[2] += e * (-q * q + 6.0 * q - 3.0) / s2;
            }
            out
        }
        TaskParams::Advection { x0, nu } | TaskParams::VarAdv { x0, nu, .. } => {
            let d = wrap_signed(x - x0);
            let iv2 = 1.0 / (nu * nu);
            let u = (-0.5 * d * d * iv2).exp();
            [u, -d * iv2 * u, (d * d * iv2 - 1.0) * iv2 * u]
        }
        TaskParams::Poisson { .. } => [0.0; 3],
    }
}

/// Combines packet states into the family's ansatz at `(x, t)`.
pub fn assemble_dynamic(
    task: &TaskParams,
    ic_kind: IcKind,
    states: &[DynamicAtomState],
    gates: &[f64],
    x: f64,
    t: f64,
) -> DynEval {
    let family = task.family();
    let periodic = family.is_periodic();
    let mut s = DynEval::default();
    for (st, g) in states.iter().zip(gates) {
        let p = dynamic_packet_eval(st, x, periodic);
        s.u += g * p.u;
        s.u_x += g * p.du_dx;
        s.u_xx += g * p.d2u_dx2;
        s.u_t += g * p.du_dt;
    }
    match family {
        Family::Advection => s,
        _ => {
            let [u0, u0x, u0xx] = initial_profile(task, ic_kind, x);
            DynEval {
                u: u0 + t * s.u,
                u_x: u0x + t * s.u_x,
                u_xx: u0xx + t * s.u_xx,
                u_t: s.u + t * s.u_t,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Interior,
    Initial,
    Boundary,
}

/// A residual that is affine in the packets:
/// `r = r0 + Σ_j g_j (cu P + ct P_t + cx P_x + cxx P_xx)(x)`, minus the same
/// packet combination at `x_minus` when present.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RowForm {
    pub r0: f64,
    pub cu: f64,
    pub ct: f64,
    pub cx: f64,
    pub cxx: f64,
    pub x_minus: Option<f64>,
}

impl RowForm {
    pub fn is_trivial(&self) -> bool {
        self.r0 == 0.0 && self.cu == 0.0 && self.ct == 0.0 && self.cx == 0.0 && self.cxx == 0.0
    }
}

/// Residual of the predictor ansatz at one collocation point. Boundary
/// rows of periodic families pair `x = 0` with `x = 1`.
pub fn residual_form(task: &TaskParams, ic_kind: IcKind, kind: RowKind, x: f64, t: f64) -> RowForm {
    let family = task.family();
    let [u0, u0x, u0xx] = initial_profile(task, ic_kind, x);
    match (kind, *task) {
        (RowKind::Interior, TaskParams::Advection { .. }) => RowForm { ct: 1.0, cx: 1.0, ..Default::default() },
        (RowKind::Interior, TaskParams::AdvDiff { a, nu }) => RowForm {
            r0: a * u0x - nu * u0xx,
            cu: 1.0,
            ct: t,
            cx: a * t,
            cxx: -nu * t,
            x_minus: None,
        },
        (RowKind::Interior, TaskParams::VarAdv { beta, .. }) => {
            let a = varadv_speed(beta, x);
            RowForm { r0: a * u0x, cu: 1.0, ct: t, cx: a * t, ..Default::default() }
        }
        (RowKind::Initial, TaskParams::Advection { .. }) => RowForm { r0: -u0, cu: 1.0, ..Default::default() },
        (RowKind::Boundary, TaskParams::AdvDiff { a, nu }) => RowForm {
            r0: u0 - advdiff_exact(a, nu, x, t),
            cu: t,
            ..Default::default()
        },
        (RowKind::Boundary, _) if family.is_periodic() => RowForm {
            cu: if family == Family::Advection { 1.0 } else { t },
            x_minus: Some(1.0),
            ..Default::default()
        },
        // The remaining initial rows hold by construction of the ansatz.
        _ => RowForm::default(),
    }
}

fn state_from_raw(family: Family, xi: Dual, h: Dual, alpha: Dual, base: Option<(f64, f64)>) -> DynamicAtomState {
    let (xi, h) = match family {
        Family::Advection => (xi, h.softplus() + WIDTH_FLOOR),
        Family::AdvDiff => (xi.sigmoid(), h.softplus() + WIDTH_FLOOR),
        _ => {
            let (c, w) = base.unwrap();
            (xi.tanh().scale(0.5) + c, (h + w).softplus() + WIDTH_FLOOR)
        }
    };
    DynamicAtomState {
        alpha: alpha.value,
        xi: xi.value,
        h: h.value,
        dalpha_dt: alpha.tangent,
        dxi_dt: xi.tangent,
        dh_dt: h.tangent,
    }
}

impl PredictorModel {
    pub fn dynamic_context(&self, task: &TaskParams) -> DynamicContext {
        assert_eq!(task.family(), self.family);
        let lam = self.normalize(task);
        let (emb, gates) = match self.family {
            Family::Advection => match (&self.nets.encoder, &self.nets.gate) {
                (Some(enc), Some(gate)) => {
                    let e: Vec<f64> = enc.forward(&self.store, &lam).iter().map(|v| v.tanh()).collect();
                    let g = gate.forward(&self.store, &e).iter().map(|&v| sigmoid(v)).collect();
                    (e, g)
                }
                _ => (Vec::new(), self.store.get("inst.gate").unwrap().iter().map(|&v| sigmoid(v)).collect()),
            },
            _ => (if self.is_conditioned() { lam } else { Vec::new() }, vec![1.0; self.m]),
        };
        DynamicContext { task: *task, emb, gates }
    }

    pub fn dynamic_states(&self, ctx: &DynamicContext, t: f64) -> Vec<DynamicAtomState> {
        let net = self.nets.dynamic.as_ref().expect("dynamic family");
        let mut input = time_features(t, self.nets.harmonics);
        input.extend(ctx.emb.iter().map(|&v| Dual::constant(v)));
        let raw = net.forward_dual(&self.store, &input);
        let m = self.m;
        let base = (self.family == Family::VarAdv).then(|| (self.store.get("base.center").unwrap(), self.store.get("base.width").unwrap()));
        (0..m)
            .map(|j| state_from_raw(self.family, raw[j], raw[m + j], raw[2 * m + j], base.map(|(c, w)| (c[j], w[j]))))
            .collect()
    }

    pub fn eval_dynamic(&self, task: &TaskParams, x: f64, t: f64) -> DynEval {
        let ctx = self.dynamic_context(task);
        let states = self.dynamic_states(&ctx, t);
        assemble_dynamic(task, self.ic_kind, &states, &ctx.gates, x, t)
    }

    /// Predicted values on a tensor grid, `values[j * xs.len() + i]` at
    /// `(xs[i], ts[j])`.
    pub fn eval_dynamic_grid(&self, task: &TaskParams, xs: &[f64], ts: &[f64]) -> Vec<f64> {
        let ctx = self.dynamic_context(task);
        let mut out = Vec::with_capacity(xs.len() * ts.len());
        for &t in ts {
            let states = self.dynamic_states(&ctx, t);
            out.extend(xs.iter().map(|&x| assemble_dynamic(task, self.ic_kind, &states, &ctx.gates, x, t).u));
        }
        out
    }

    pub fn tape_dynamic_context(&self, tape: &mut Tape, pv: ParamVars, task: &TaskParams) -> TapeDynamicContext {
        let net = self.nets.dynamic.as_ref().expect("dynamic family");
        let lam = self.normalize(task);
        let feats = 1 + 2 * self.nets.harmonics;
        let (emb, gates): (Vec<Var>, Option<Vec<Var>>) = match self.family {
            Family::Advection => match (&self.nets.encoder, &self.nets.gate) {
                (Some(enc), Some(gate)) => {
                    let lv: Vec<Var> = lam.iter().map(|&v| tape.constant(v)).collect();
                    let e: Vec<Var> = enc.forward_tape(tape, pv, &lv).into_iter().map(|v| tape.tanh(v)).collect();
                    let g = gate.forward_tape(tape, pv, &e).into_iter().map(|v| tape.sigmoid(v)).collect();
                    (e, Some(g))
                }
                _ => {
                    let off = self.store.entry("inst.gate").unwrap().offset;
                    (Vec::new(), Some((0..self.m).map(|j| tape.sigmoid(pv.at(off + j))).collect()))
                }
            },
            _ if self.is_conditioned() => (lam.iter().map(|&v| tape.constant(v)).collect(), None),
            _ => (Vec::new(), None),
        };
        TapeDynamicContext {
            task: *task,
            gates,
            shared_pre: net.first_layer_partial(tape, pv, feats, &emb),
        }
    }

    pub fn tape_states(&self, tape: &mut Tape, pv: ParamVars, ctx: &TapeDynamicContext, t: f64) -> Vec<TapeState> {
        let net = self.nets.dynamic.as_ref().expect("dynamic family");
        let lead: Vec<TapeDual> = time_features(t, self.nets.harmonics)
            .iter()
            .map(|d| tape.dual_const(d.value, d.tangent))
            .collect();
        let raw = net.forward_tape_dual(tape, pv, &lead, &ctx.shared_pre);
        let m = self.m;
        let zero = tape.constant(0.0);
        let base = (self.family == Family::VarAdv).then(|| {
            (
                self.store.entry("base.center").unwrap().offset,
                self.store.entry("base.width").unwrap().offset,
            )
        });
        (0..m)
            .map(|j| {
                let (rx, rh, alpha) = (raw[j], raw[m + j], raw[2 * m + j]);
                let (xi, h) = match self.family {
                    Family::Advection => (rx, tape.dual_softplus(rh)),
                    Family::AdvDiff => (tape.dual_sigmoid(rx), tape.dual_softplus(rh)),
                    _ => {
                        let (co, wo) = base.unwrap();
                        let th = tape.dual_tanh(rx);
                        let half = tape.dual_mul_const(th, 0.5);
                        let xi = tape.dual_add(half, TapeDual { value: pv.at(co + j), tangent: zero });
                        let shifted = tape.dual_add(rh, TapeDual { value: pv.at(wo + j), tangent: zero });
                        (xi, tape.dual_softplus(shifted))
                    }
                };
                TapeState {
                    alpha,
                    xi,
                    h: tape.dual_add_const(h, WIDTH_FLOOR),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{jitter, small};
    use super::super::ModelConfig;
    use super::*;

    fn tasks() -> Vec<TaskParams> {
        vec![
            TaskParams::Advection { x0: 0.45, nu: 0.07 },
            TaskParams::AdvDiff { a: 0.7, nu: 0.03 },
            TaskParams::VarAdv { x0: 0.35, nu: 0.06, beta: 0.4 },
        ]
    }

    #[test]
    fn feature_derivatives() {
        let f = time_features(0.25, 2);
        assert_eq!(f.len(), 5);
        assert!((f[1].value - 1.0).abs() < 1e-15);
        assert!(f[1].tangent.abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for task in tasks() {
            let f = task.family();
            let mut model = PredictorModel::new(f, &small(f), 8);
            jitter(&mut model, 9, 0.4);
            for &(x, t) in &[(0.31, 0.2), (0.52, 0.45), (0.77, 0.05)] {
                let e = model.eval_dynamic(&task, x, t);
                let h = 1e-5;
                let ux = (model.eval_dynamic(&task, x + h, t).u - model.eval_dynamic(&task, x - h, t).u) / (2.0 * h);
                let uxx = (model.eval_dynamic(&task, x + h, t).u_x - model.eval_dynamic(&task, x - h, t).u_x) / (2.0 * h);
                let ut = (model.eval_dynamic(&task, x, t + h).u - model.eval_dynamic(&task, x, t - h).u) / (2.0 * h);
                let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-2);
                assert!(rel(e.u_x, ux) < 1e-5, "{f} u_x {} {}", e.u_x, ux);
                assert!(rel(e.u_xx, uxx) < 1e-5, "{f} u_xx");
                assert!(rel(e.u_t, ut) < 1e-5, "{f} u_t {} {}", e.u_t, ut);
            }
        }
    }

    #[test]
    fn tape_states_match_plain_states() {
        for task in tasks() {
            let f = task.family();
            let mut model = PredictorModel::new(f, &small(f), 10);
            jitter(&mut model, 11, 0.3);
            let ctx = model.dynamic_context(&task);
            let plain = model.dynamic_states(&ctx, 0.37);
            let mut tape = Tape::new();
            let pv = model.store.leaves(&mut tape);
            let tctx = model.tape_dynamic_context(&mut tape, pv, &task);
            let taped = model.tape_states(&mut tape, pv, &tctx, 0.37);
            for (p, q) in plain.iter().zip(&taped) {
                for (a, b) in [
                    (p.alpha, q.alpha.value),
                    (p.xi, q.xi.value),
                    (p.h, q.h.value),
                    (p.dalpha_dt, q.alpha.tangent),
                    (p.dxi_dt, q.xi.tangent),
                    (p.dh_dt, q.h.tangent),
                ] {
                    assert!((a - tape.value(b)).abs() < 1e-13);
                }
            }
            if let Some(g) = &tctx.gates {
                for (a, b) in ctx.gates.iter().zip(g) {
                    assert!((a - tape.value(*b)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn frozen_packets_have_no_time_derivative() {
        let task = TaskParams::Advection { x0: 0.5, nu: 0.07 };
        let states: Vec<DynamicAtomState> = (0..4)
            .map(|j| DynamicAtomState { alpha: 0.3 + j as f64 * 0.1, xi: 0.2 * j as f64, h: 0.05, dalpha_dt: 0.0, dxi_dt: 0.0, dh_dt: 0.0 })
            .collect();
        let gates = vec![0.7; 4];
        for &x in &[0.0, 0.3, 0.65, 0.99] {
            assert_eq!(assemble_dynamic(&task, IcKind::PeriodicGaussian, &states, &gates, x, 0.4).u_t, 0.0);
        }
    }

    #[test]
    fn translating_packets_solve_advection() {
        let task = TaskParams::Advection { x0: 0.5, nu: 0.07 };
        let t = 0.3;
        let states: Vec<DynamicAtomState> = (0..5)
            .map(|j| DynamicAtomState { alpha: 1.0 - 0.1 * j as f64, xi: 0.1 + 0.17 * j as f64 + t, h: 0.04 + 0.01 * j as f64, dalpha_dt: 0.0, dxi_dt: 1.0, dh_dt: 0.0 })
            .collect();
        let gates = vec![0.9; 5];
        for k in 0..50 {
            let x = k as f64 / 50.0;
            let e = assemble_dynamic(&task, IcKind::PeriodicGaussian, &states, &gates, x, t);
            assert!((e.u_t + e.u_x).abs() <= 1e-10);
        }
        let f = residual_form(&task, IcKind::PeriodicGaussian, RowKind::Interior, 0.4, t);
        assert_eq!((f.ct, f.cx), (1.0, 1.0));
    }

    #[test]
    fn mexican_hat_profile_derivatives() {
        let task = TaskParams::Advection { x0: 0.4, nu: 0.08 };
        let h = 1e-5;
        for &x in &[0.3, 0.41, 0.5, 0.95] {
            let [u, ux, uxx] = initial_profile(&task, IcKind::MexicanHat, x);
            let p = initial_profile(&task, IcKind::MexicanHat, x + h);
            let m = initial_profile(&task, IcKind::MexicanHat, x - h);
            assert!((u - crate::reference::InitialCondition::mexican_hat(0.4, 0.08).eval(x)).abs() < 1e-14);
            assert!((ux - (p[0] - m[0]) / (2.0 * h)).abs() < 1e-5 * ux.abs().max(1.0));
            assert!((uxx - (p[1] - m[1]) / (2.0 * h)).abs() < 1e-5 * uxx.abs().max(1.0));
        }
    }

    #[test]
    fn grid_eval_matches_pointwise() {
        let task = TaskParams::VarAdv { x0: 0.5, nu: 0.07, beta: 0.3 };
        let mut model = PredictorModel::new(Family::VarAdv, &ModelConfig { m: 5, hidden: vec![4], ..ModelConfig::paper(Family::VarAdv) }, 1);
        jitter(&mut model, 2, 0.2);
        let xs = [0.0, 0.4, 0.9];
        let ts = [0.0, 0.5];
        let g = model.eval_dynamic_grid(&task, &xs, &ts);
        assert_eq!(g[4], model.eval_dynamic(&task, 0.4, 0.5).u);
    }
}
