use crate::autodiff::{Jet, ParamVars, Tape, Var};
use crate::geometry::{bubble_kernel, dynamic_packet_eval, wrap_signed, DynamicAtomState};
use crate::predictor::{residual_form, PoissonTapeGeometry, PredictorModel, RowKind, TapeState, TaskParams};
use crate::reference::{GaussianSource, IcKind};

use super::sampling::CollocationSet;

/// Loss-term weights and regularization strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub w_int: f64,
    pub w_ic: f64,
    pub w_bc: f64,
    pub w_reg: f64,
    /// Gate sparsity (Poisson).
    pub lambda_sp: f64,
    /// Smooth motion and coefficient magnitude (unsteady families).
    pub lambda_c: f64,
    /// Width anchoring (unsteady families).
    pub lambda_w: f64,
    pub eta: f64,
    /// Overrides the family's width target.
    pub h_target: Option<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_int: 1.0,
            w_ic: 10.0,
            w_bc: 10.0,
            w_reg: 1.0,
            lambda_sp: 1e-3,
            lambda_c: 1e-3,
            lambda_w: 1e-3,
            eta: 1e-2,
            h_target: None,
        }
    }
}

/// Width the regularizer pulls packets toward.
pub fn width_target(task: &TaskParams) -> f64 {
    match *task {
        TaskParams::Advection { nu, .. } => nu,
        TaskParams::AdvDiff { nu, .. } => (nu / 2.0).sqrt(),
        _ => 0.05,
    }
}

/// Kernel evaluations beyond this many widths squared are dropped.
const CUTOFF: f64 = 80.0;

/// Interior residual plus gate sparsity for one Poisson task.
pub fn poisson_task_loss(
    tape: &mut Tape,
    geom: &PoissonTapeGeometry,
    task: &TaskParams,
    points: &[(f64, f64)],
    weights: &LossWeights,
) -> Var {
    let TaskParams::Poisson { x0, y0, nu } = *task else { panic!("poisson loss on {task:?}") };
    let src = GaussianSource::new(x0, y0, nu);
    let m = geom.coef.len();
    let val = |vs: &[Var], tape: &Tape| vs.iter().map(|&v| tape.value(v)).collect::<Vec<f64>>();
    let (mx, my, sg, g, c) = (
        val(&geom.mu_x, tape),
        val(&geom.mu_y, tape),
        val(&geom.sigma, tape),
        val(&geom.gate, tape),
        val(&geom.coef, tape),
    );
    let n = points.len().max(1) as f64;
    let scale = weights.w_int / n;
    // Per-atom partials: [μx, μy, σ, g, c].
    let mut grad = vec![0.0; 5 * m];
    let mut value = 0.0;
    let mut laps: Vec<(usize, Jet<3>)> = Vec::with_capacity(m);
    for &(x, y) in points {
        laps.clear();
        let mut lap_u = 0.0;
        for j in 0..m {
            let r2 = (x - mx[j]).powi(2) + (y - my[j]).powi(2);
            if r2 > CUTOFF * sg[j] * sg[j] {
                continue;
            }
            let (_, l) = bubble_kernel(Jet::seed(mx[j], 0), Jet::seed(my[j], 1), Jet::seed(sg[j], 2), x, y);
            lap_u += g[j] * c[j] * l.value;
            laps.push((j, l));
        }
        let r = -lap_u - src.eval(x, y);
        value += scale * r * r;
        let dr = 2.0 * scale * r;
        for &(j, l) in &laps {
            let k = 5 * j;
            let w = -dr * g[j] * c[j];
            for d in 0..3 {
                grad[k + d] += w * l.grad[d];
            }
            grad[k + 3] += -dr * c[j] * l.value;
            grad[k + 4] += -dr * g[j] * l.value;
        }
    }
    let mut parents = Vec::with_capacity(5 * m);
    for j in 0..m {
        parents.extend([geom.mu_x[j], geom.mu_y[j], geom.sigma[j], geom.gate[j], geom.coef[j]]);
    }
    let residual = tape.custom(value, &parents, &grad);
    let gsum = tape.sum(&geom.gate);
    let sparsity = tape.mul_const(gsum, weights.w_reg * weights.lambda_sp / m as f64);
    tape.add(residual, sparsity)
}

/// One collocation row sharing the slab time.
#[derive(Debug, Clone, Copy)]
struct SlabRow {
    kind: RowKind,
    x: f64,
    weight: f64,
}

#[derive(Debug, Clone)]
struct Slab {
    t: f64,
    rows: Vec<SlabRow>,
    regularize: bool,
}

fn slab_index(slabs: &mut Vec<Slab>, t: f64, regularize: bool) -> usize {
    match slabs.iter().position(|s| s.t == t) {
        Some(i) => i,
        None => {
            slabs.push(Slab { t, rows: Vec::new(), regularize });
            slabs.len() - 1
        }
    }
}

fn build_slabs(task: &TaskParams, ic_kind: IcKind, colloc: &CollocationSet, w: &LossWeights) -> Vec<Slab> {
    let mut slabs: Vec<Slab> = Vec::new();
    let n_int = (colloc.interior.len() + colloc.near_initial.len()).max(1) as f64;
    for &(x, t) in &colloc.interior {
        let i = slab_index(&mut slabs, t, true);
        slabs[i].rows.push(SlabRow { kind: RowKind::Interior, x, weight: w.w_int / n_int });
    }
    for &(x, t) in &colloc.near_initial {
        let i = slab_index(&mut slabs, t, false);
        slabs[i].rows.push(SlabRow { kind: RowKind::Interior, x, weight: w.w_int / n_int });
    }
    let n_bc = colloc.boundary.len().max(1) as f64;
    for &(x, t) in &colloc.boundary {
        let i = slab_index(&mut slabs, t, false);
        slabs[i].rows.push(SlabRow { kind: RowKind::Boundary, x, weight: w.w_bc / n_bc });
    }
    let n_ic = colloc.initial.len().max(1) as f64;
    for &(x, t) in &colloc.initial {
        if residual_form(task, ic_kind, RowKind::Initial, x, t).is_trivial() {
            continue;
        }
        let i = slab_index(&mut slabs, t, false);
        slabs[i].rows.push(SlabRow { kind: RowKind::Initial, x, weight: w.w_ic / n_ic });
    }
    slabs
}

/// Regularizer strengths for one slab.
#[derive(Debug, Clone, Copy)]
struct SlabReg {
    weight: f64,
    lambda_c: f64,
    lambda_w: f64,
    eta: f64,
    h_target: f64,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[allow(clippy::too_many_arguments)]
fn slab_loss(
    tape: &mut Tape,
    task: &TaskParams,
    ic_kind: IcKind,
    slab: &Slab,
    states: &[TapeState],
    gates: Option<&[Var]>,
    reg: Option<SlabReg>,
) -> Var {
    let periodic = task.family().is_periodic();
    let m = states.len();
    let stride = if gates.is_some() { 7 } else { 6 };
    let vals: Vec<[f64; 6]> = states
        .iter()
        .map(|s| {
            [
                tape.value(s.alpha.value),
                tape.value(s.xi.value),
                tape.value(s.h.value),
                tape.value(s.alpha.tangent),
                tape.value(s.xi.tangent),
                tape.value(s.h.tangent),
            ]
        })
        .collect();
    let g: Vec<f64> = match gates {
        Some(gs) => gs.iter().map(|&v| tape.value(v)).collect(),
        None => vec![1.0; m],
    };
    let jets: Vec<DynamicAtomState<Jet<6>>> = vals
        .iter()
        .map(|v| DynamicAtomState {
            alpha: Jet::seed(v[0], 0),
            xi: Jet::seed(v[1], 1),
            h: Jet::seed(v[2], 2),
            dalpha_dt: Jet::seed(v[3], 3),
            dxi_dt: Jet::seed(v[4], 4),
            dh_dt: Jet::seed(v[5], 5),
        })
        .collect();
    let mut grad = vec![0.0; stride * m];
    let mut value = 0.0;
    let mut rho: Vec<(usize, Jet<6>)> = Vec::with_capacity(m);
    for row in &slab.rows {
        let form = residual_form(task, ic_kind, row.kind, row.x, slab.t);
        let mut r = form.r0;
        rho.clear();
        for j in 0..m {
            let near = |x: f64| {
                let d = if periodic { wrap_signed(x - vals[j][1]) } else { x - vals[j][1] };
                d * d <= CUTOFF * vals[j][2] * vals[j][2]
            };
            let mut acc: Option<Jet<6>> = None;
            let mut add = |x: f64, sgn: f64| {
                let p = dynamic_packet_eval(&jets[j], x, periodic);
                let c = (p.u * form.cu + p.du_dt * form.ct + p.du_dx * form.cx + p.d2u_dx2 * form.cxx) * sgn;
                acc = Some(match acc {
                    Some(a) => a + c,
                    None => c,
                });
            };
            if near(row.x) {
                add(row.x, 1.0);
            }
            if let Some(xm) = form.x_minus {
                if near(xm) {
                    add(xm, -1.0);
                }
            }
            if let Some(a) = acc {
                r += g[j] * a.value;
                rho.push((j, a));
            }
        }
        value += row.weight * r * r;
        let dr = 2.0 * row.weight * r;
        for &(j, a) in &rho {
            let k = stride * j;
            for d in 0..6 {
                grad[k + d] += dr * g[j] * a.grad[d];
            }
            if stride == 7 {
                grad[k + 6] += dr * a.value;
            }
        }
    }
    if let Some(reg) = reg {
        let s = reg.weight / m as f64;
        for j in 0..m {
            let [alpha, _, h, _, xi_dot, _] = vals[j];
            let ga = g[j] * alpha;
            let dh = h - reg.h_target;
            value += s * (reg.lambda_c * (xi_dot.abs() + reg.eta * ga.abs()) + reg.lambda_w * dh * dh);
            let k = stride * j;
            grad[k + 4] += s * reg.lambda_c * sign(xi_dot);
            grad[k] += s * reg.lambda_c * reg.eta * sign(ga) * g[j];
            grad[k + 2] += s * reg.lambda_w * 2.0 * dh;
            if stride == 7 {
                grad[k + 6] += s * reg.lambda_c * reg.eta * sign(ga) * alpha;
            }
        }
    }
    let mut parents = Vec::with_capacity(stride * m);
    for (j, s) in states.iter().enumerate() {
        parents.extend([s.alpha.value, s.xi.value, s.h.value, s.alpha.tangent, s.xi.tangent, s.h.tangent]);
        if let Some(gs) = gates {
            parents.push(gs[j]);
        }
    }
    tape.custom(value, &parents, &grad)
}

/// Residual, boundary, initial and regularization terms for one task of an
/// unsteady family.
pub fn dynamic_task_loss(
    model: &PredictorModel,
    tape: &mut Tape,
    pv: ParamVars,
    task: &TaskParams,
    colloc: &CollocationSet,
    weights: &LossWeights,
) -> Var {
    let ctx = model.tape_dynamic_context(tape, pv, task);
    let slabs = build_slabs(task, model.ic_kind, colloc, weights);
    let n_reg = slabs.iter().filter(|s| s.regularize).count().max(1) as f64;
    let reg = SlabReg {
        weight: weights.w_reg / n_reg,
        lambda_c: weights.lambda_c,
        lambda_w: weights.lambda_w,
        eta: weights.eta,
        h_target: weights.h_target.unwrap_or_else(|| width_target(task)),
    };
    let mut terms = Vec::with_capacity(slabs.len());
    for slab in &slabs {
        let states = model.tape_states(tape, pv, &ctx, slab.t);
        let r = slab.regularize.then_some(reg);
        terms.push(slab_loss(tape, task, model.ic_kind, slab, &states, ctx.gates.as_deref(), r));
    }
    tape.sum(&terms)
}

/// Loss of one task, dispatched on the model's family.
pub fn task_loss(
    model: &PredictorModel,
    tape: &mut Tape,
    pv: ParamVars,
    task: &TaskParams,
    colloc: &CollocationSet,
    weights: &LossWeights,
) -> Var {
    if model.family.is_dynamic() {
        dynamic_task_loss(model, tape, pv, task, colloc, weights)
    } else {
        let geom = model.poisson_geometry_tape(tape, pv, task);
        poisson_task_loss(tape, &geom, task, &colloc.interior, weights)
    }
}

/// Mean task loss over a batch; also returns the per-task nodes.
pub fn meta_loss(
    model: &PredictorModel,
    tape: &mut Tape,
    pv: ParamVars,
    batch: &[(TaskParams, CollocationSet)],
    weights: &LossWeights,
) -> (Var, Vec<Var>) {
    let per_task: Vec<Var> = batch
        .iter()
        .map(|(task, colloc)| task_loss(model, tape, pv, task, colloc, weights))
        .collect();
    let total = tape.sum(&per_task);
    (tape.mul_const(total, 1.0 / batch.len().max(1) as f64), per_task)
}
