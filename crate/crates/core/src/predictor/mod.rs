//! Task-conditioned Gaussian-basis predictors for the four PDE families.

mod checkpoint;
mod dynamic;
mod poisson;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, MAGIC};
pub use dynamic::{
    assemble_dynamic, initial_profile, residual_form, time_features, DynEval, DynamicContext, RowForm, RowKind,
    TapeDynamicContext, TapeState,
};
pub use poisson::{PoissonGeometry, PoissonTapeGeometry};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{logit, softplus_inv, Mlp, ParamStore};
use crate::geometry::{DynamicAtomState, WIDTH_FLOOR};
use crate::reference::IcKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Poisson,
    Advection,
    AdvDiff,
    VarAdv,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Poisson, Family::Advection, Family::AdvDiff, Family::VarAdv];

    pub fn name(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::Advection => "advection",
            Family::AdvDiff => "advdiff",
            Family::VarAdv => "varadv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s.trim().to_ascii_lowercase())
    }

    pub fn tag(self) -> u8 {
        match self {
            Family::Poisson => 1,
            Family::Advection => 2,
            Family::AdvDiff => 3,
            Family::VarAdv => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.tag() == tag)
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Poisson => &["x0", "y0", "nu"],
            Family::Advection => &["x0", "nu"],
            Family::AdvDiff => &["a", "nu"],
            Family::VarAdv => &["x0", "nu", "beta"],
        }
    }

    /// Training ranges, also used to normalize the network inputs.
    pub fn training_ranges(self) -> Vec<(f64, f64)> {
        match self {
            Family::Poisson => vec![(0.4, 0.6), (0.4, 0.6), (0.05, 0.10)],
            Family::Advection => vec![(0.2, 0.8), (0.03, 0.12)],
            Family::AdvDiff => vec![(0.5, 1.0), (0.01, 0.05)],
            Family::VarAdv => vec![(0.2, 0.8), (0.03, 0.12), (0.2, 0.6)],
        }
    }

    /// Index of the log-uniformly sampled parameter (always `ν`).
    pub fn nu_index(self) -> usize {
        match self {
            Family::Poisson => 2,
            _ => 1,
        }
    }

    pub fn is_dynamic(self) -> bool {
        self != Family::Poisson
    }

    pub fn is_periodic(self) -> bool {
        matches!(self, Family::Advection | Family::VarAdv)
    }

    pub fn has_gates(self) -> bool {
        matches!(self, Family::Poisson | Family::Advection)
    }

    /// Final time of the space-time domain.
    pub fn horizon(self) -> f64 {
        match self {
            Family::AdvDiff => 0.5,
            _ => 1.0,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One PDE instance `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskParams {
    Poisson { x0: f64, y0: f64, nu: f64 },
    Advection { x0: f64, nu: f64 },
    AdvDiff { a: f64, nu: f64 },
    VarAdv { x0: f64, nu: f64, beta: f64 },
}

impl TaskParams {
    pub fn family(&self) -> Family {
        match self {
            TaskParams::Poisson { .. } => Family::Poisson,
            TaskParams::Advection { .. } => Family::Advection,
            TaskParams::AdvDiff { .. } => Family::AdvDiff,
            TaskParams::VarAdv { .. } => Family::VarAdv,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            TaskParams::Poisson { x0, y0, nu } => vec![x0, y0, nu],
            TaskParams::Advection { x0, nu } => vec![x0, nu],
            TaskParams::AdvDiff { a, nu } => vec![a, nu],
            TaskParams::VarAdv { x0, nu, beta } => vec![x0, nu, beta],
        }
    }

    pub fn from_values(family: Family, v: &[f64]) -> Option<Self> {
        if v.len() != family.param_names().len() || v.iter().any(|x| !x.is_finite()) || v[family.nu_index()] <= 0.0 {
            return None;
        }
        Some(match family {
            Family::Poisson => TaskParams::Poisson { x0: v[0], y0: v[1], nu: v[2] },
            Family::Advection => TaskParams::Advection { x0: v[0], nu: v[1] },
            Family::AdvDiff => TaskParams::AdvDiff { a: v[0], nu: v[1] },
            Family::VarAdv => TaskParams::VarAdv { x0: v[0], nu: v[1], beta: v[2] },
        })
    }

    pub fn nu(&self) -> f64 {
        self.values()[self.family().nu_index()]
    }

    /// True when every parameter lies in the family's training range.
    pub fn in_training_range(&self) -> bool {
        self.values()
            .iter()
            .zip(self.family().training_ranges())
            .all(|(v, (lo, hi))| (lo..=hi).contains(v))
    }
}

/// Architecture of a predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub m: usize,
    /// Hidden widths of the conditioning net (Poisson) or the dynamic net.
    pub hidden: Vec<usize>,
    /// Width of the task encoder (advection only).
    pub encoder_width: usize,
    pub harmonics: usize,
    pub ic_kind: IcKind,
    /// `false` builds a single-instance model with direct parameters.
    pub conditioned: bool,
}

impl ModelConfig {
    /// Architecture from the published implementation settings.
    pub fn paper(family: Family) -> Self {
        let (m, hidden) = match family {
            Family::Poisson => (128, vec![64, 64]),
            Family::Advection => (32, vec![96, 96]),
            Family::AdvDiff => (48, vec![128, 128, 128]),
            Family::VarAdv => (64, vec![128, 128]),
        };
        Self {
            m,
            hidden,
            encoder_width: 64,
            harmonics: 4,
            ic_kind: IcKind::PeriodicGaussian,
            conditioned: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Nets {
    pub meta: Option<Mlp>,
    pub encoder: Option<Mlp>,
    pub gate: Option<Mlp>,
    pub dynamic: Option<Mlp>,
    pub harmonics: usize,
}

/// Trainable predictor: parameters plus the layout needed to evaluate them.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub family: Family,
    pub m: usize,
    pub ic_kind: IcKind,
    /// Per-parameter `(lo, hi)` mapped to `[−1, 1]` before entering a net.
    pub ranges: Vec<(f64, f64)>,
    pub store: ParamStore,
    pub(crate) nets: Nets,
}

/// Initial Poisson center layout: a Halton sequence in `[0.05, 0.95]²`.
fn halton(mut i: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

impl PredictorModel {
    pub fn new(family: Family, config: &ModelConfig, seed: u64) -> Self {
        assert!(config.m > 0, "M must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = config.m;
        let ranges = family.training_ranges();
        let n_lambda = ranges.len();
        let mut store = ParamStore::new();
        let mut nets = Nets {
            meta: None,
            encoder: None,
            gate: None,
            dynamic: None,
            harmonics: config.harmonics,
        };
        let feats = 1 + 2 * config.harmonics;
        match family {
            Family::Poisson => {
                let mut bias = vec![0.0; 4 * m];
                for j in 0..m {
                    bias[j] = logit(0.05 + 0.9 * halton(j + 1, 2));
                    bias[m + j] = logit(0.05 + 0.9 * halton(j + 1, 3));
                    bias[2 * m + j] = softplus_inv(0.1 - WIDTH_FLOOR);
                }
                if config.conditioned {
                    let mut sizes = vec![n_lambda];
                    sizes.extend(&config.hidden);
                    sizes.push(4 * m);
                    let meta = Mlp::register(&mut store, "meta", &sizes, &mut rng);
                    let b = meta.output_layer().bias;
                    store.values_mut()[b..b + 4 * m].copy_from_slice(&bias);
                    nets.meta = Some(meta);
                } else {
                    store.add("inst.raw", &[4 * m], bias);
                }
                store.add("coef", &[m], vec![1.0; m]);
            }
            Family::Advection => {
                let emb = if config.conditioned {
                    let e = config.encoder_width;
                    nets.encoder = Some(Mlp::register(&mut store, "enc", &[n_lambda, e, e], &mut rng));
                    nets.gate = Some(Mlp::register(&mut store, "gate", &[e, m], &mut rng));
                    e
                } else {
                    store.add("inst.gate", &[m], vec![0.0; m]);
                    0
                };
                let dynamic = Self::register_dynamic(&mut store, feats + emb, &config.hidden, m, &mut rng);
                let b = dynamic.output_layer().bias;
                for j in 0..m {
                    store.values_mut()[b + j] = (j as f64 + 0.5) / m as f64;
                    store.values_mut()[b + m + j] = softplus_inv(0.06 - WIDTH_FLOOR);
                }
                nets.dynamic = Some(dynamic);
            }
            Family::AdvDiff => {
                let emb = if config.conditioned { n_lambda } else { 0 };
                let dynamic = Self::register_dynamic(&mut store, feats + emb, &config.hidden, m, &mut rng);
                let b = dynamic.output_layer().bias;
                for j in 0..m {
                    store.values_mut()[b + j] = logit((j as f64 + 0.5) / m as f64);
                    store.values_mut()[b + m + j] = softplus_inv(0.05 - WIDTH_FLOOR);
                }
                nets.dynamic = Some(dynamic);
            }
            Family::VarAdv => {
                let emb = if config.conditioned { n_lambda } else { 0 };
                let dynamic = Self::register_dynamic(&mut store, feats + emb, &config.hidden, m, &mut rng);
                store.add("base.center", &[m], (0..m).map(|j| j as f64 / m as f64).collect());
                store.add("base.width", &[m], vec![softplus_inv(0.08 - WIDTH_FLOOR); m]);
                nets.dynamic = Some(dynamic);
            }
        }
        Self {
            family,
            m,
            ic_kind: if family == Family::Advection { config.ic_kind } else { IcKind::PeriodicGaussian },
            ranges,
            store,
            nets,
        }
    }

    fn register_dynamic(store: &mut ParamStore, input: usize, hidden: &[usize], m: usize, rng: &mut ChaCha8Rng) -> Mlp {
        let mut sizes = vec![input];
        sizes.extend(hidden);
        sizes.push(3 * m);
        Mlp::register(store, "dyn", &sizes, rng)
    }

    /// Rebuilds a model around an existing parameter store.
    pub fn from_parts(
        family: Family,
        m: usize,
        ic_kind: IcKind,
        harmonics: usize,
        ranges: Vec<(f64, f64)>,
        store: ParamStore,
    ) -> Option<Self> {
        let n_lambda = family.param_names().len();
        if ranges.len() != n_lambda || m == 0 {
            return None;
        }
        let nets = Nets {
            meta: Mlp::from_store(&store, "meta"),
            encoder: Mlp::from_store(&store, "enc"),
            gate: Mlp::from_store(&store, "gate"),
            dynamic: Mlp::from_store(&store, "dyn"),
            harmonics,
        };
        let len_is = |name: &str, n: usize| store.get(name).map(|c| c.len()) == Some(n);
        let feats = 1 + 2 * harmonics;
        let dyn_ok = |emb: &[usize]| {
            nets.dynamic
                .as_ref()
                .is_some_and(|d| d.output_dim() == 3 * m && emb.iter().any(|e| d.input_dim() == feats + e))
        };
        let ok = match family {
            Family::Poisson => {
                len_is("coef", m)
                    && (nets.meta.as_ref().is_some_and(|n| n.output_dim() == 4 * m && n.input_dim() == n_lambda)
                        || len_is("inst.raw", 4 * m))
            }
            Family::Advection => match (&nets.encoder, &nets.gate) {
                (Some(e), Some(g)) => {
                    e.input_dim() == n_lambda && g.input_dim() == e.output_dim() && g.output_dim() == m && dyn_ok(&[e.output_dim()])
                }
                _ => len_is("inst.gate", m) && dyn_ok(&[0]),
            },
            Family::AdvDiff => dyn_ok(&[0, n_lambda]),
            Family::VarAdv => dyn_ok(&[0, n_lambda]) && len_is("base.center", m) && len_is("base.width", m),
        };
        ok.then_some(Self {
            family,
            m,
            ic_kind,
            ranges,
            store,
            nets,
        })
    }

    /// `false` for single-instance models with direct parameters.
    pub fn is_conditioned(&self) -> bool {
        match self.family {
            Family::Poisson => self.nets.meta.is_some(),
            Family::Advection => self.nets.encoder.is_some(),
            _ => {
                let d = self.nets.dynamic.as_ref().unwrap();
                d.input_dim() > 1 + 2 * self.nets.harmonics
            }
        }
    }

    pub fn harmonics(&self) -> usize {
        self.nets.harmonics
    }

    pub fn parameter_count(&self) -> usize {
        self.store.len()
    }

    /// `λ` mapped linearly so the training range becomes `[−1, 1]`.
    pub fn normalize(&self, task: &TaskParams) -> Vec<f64> {
        task.values()
            .iter()
            .zip(&self.ranges)
            .map(|(v, (lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }

    /// Flat parameter index ranges that receive decoupled weight decay:
    /// the rows producing the Poisson gates.
    pub fn gate_decay_ranges(&self) -> Vec<std::ops::Range<usize>> {
        if self.family != Family::Poisson {
            return Vec::new();
        }
        let m = self.m;
        match &self.nets.meta {
            Some(meta) => {
                let l = meta.output_layer();
                let w0 = l.weight + 3 * m * l.fan_in;
                vec![w0..w0 + m * l.fan_in, l.bias + 3 * m..l.bias + 4 * m]
            }
            None => {
                let off = self.store.entry("inst.raw").unwrap().offset;
                vec![off + 3 * m..off + 4 * m]
            }
        }
    }

    /// Task-adaptive basis description `Γ(λ)`; dynamic families are
    /// sampled at `snapshots` equispaced times over the horizon.
    pub fn generate_geometry(&self, task: &TaskParams, snapshots: usize) -> BasisGeometry {
        assert_eq!(task.family(), self.family, "task family does not match model");
        match self.family {
            Family::Poisson => BasisGeometry::Planar(self.poisson_geometry(task)),
            _ => {
                let ctx = self.dynamic_context(task);
                let horizon = self.family.horizon();
                let n = snapshots.max(1);
                let snaps = (0..n)
                    .map(|k| {
                        let t = if n == 1 { 0.0 } else { horizon * k as f64 / (n - 1) as f64 };
                        (t, self.dynamic_states(&ctx, t))
                    })
                    .collect();
                BasisGeometry::Dynamic(DynamicGeometry {
                    gates: ctx.gates.clone(),
                    snapshots: snaps,
                })
            }
        }
    }

    /// `(u, Δu)` of the Poisson hypothesis.
    pub fn eval_poisson(&self, task: &TaskParams, x: f64, y: f64) -> (f64, f64) {
        self.poisson_geometry(task).eval(x, y)
    }

    /// `(u, u_x, u_t)` of the advection hypothesis.
    pub fn eval_advection(&self, task: &TaskParams, x: f64, t: f64) -> (f64, f64, f64) {
        let e = self.eval_dynamic(task, x, t);
        (e.u, e.u_x, e.u_t)
    }

    /// `(u, u_x, u_xx, u_t)` of the advection-diffusion hypothesis.
    pub fn eval_advdiff(&self, task: &TaskParams, x: f64, t: f64) -> (f64, f64, f64, f64) {
        let e = self.eval_dynamic(task, x, t);
        (e.u, e.u_x, e.u_xx, e.u_t)
    }

    /// `(u, u_x, u_t)` of the variable-speed hypothesis.
    pub fn eval_varadv(&self, task: &TaskParams, x: f64, t: f64) -> (f64, f64, f64) {
        let e = self.eval_dynamic(task, x, t);
        (e.u, e.u_x, e.u_t)
    }

    /// Predicted solution value at a point of the family's domain.
    pub fn predict(&self, task: &TaskParams, x: f64, y_or_t: f64) -> f64 {
        match self.family {
            Family::Poisson => self.eval_poisson(task, x, y_or_t).0,
            _ => self.eval_dynamic(task, x, y_or_t).u,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGeometry {
    /// Task gates; families without gates report 1.
    pub gates: Vec<f64>,
    pub snapshots: Vec<(f64, Vec<DynamicAtomState>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisGeometry {
    Planar(PoissonGeometry),
    Dynamic(DynamicGeometry),
}

impl BasisGeometry {
    pub fn len(&self) -> usize {
        match self {
            BasisGeometry::Planar(g) => g.atoms.len(),
            BasisGeometry::Dynamic(g) => g.gates.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gates(&self) -> &[f64] {
        match self {
            BasisGeometry::Planar(g) => &g.gates,
            BasisGeometry::Dynamic(g) => &g.gates,
        }
    }
}
