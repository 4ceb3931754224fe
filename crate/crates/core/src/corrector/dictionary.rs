use std::fmt::Write as _;

use crate::geometry::{bubble_kernel, PlanarAtom, SpaceTimeAtom, WIDTH_FLOOR};
use crate::predictor::{BasisGeometry, Family, PredictorModel, TaskParams};
use crate::reference::{varadv_speed, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Inherited,
    Refinement,
    Background,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Inherited => "inherited",
            Provenance::Refinement => "refinement",
            Provenance::Background => "background",
        }
    }
}

/// A frozen hidden unit of the corrector. Planar atoms are always used
/// multiplied by the Dirichlet bubble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrectorAtom {
    Planar(PlanarAtom),
    SpaceTime(SpaceTimeAtom),
}

/// Operator-ready values of one column at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ColumnEval {
    pub value: f64,
    pub dx: f64,
    pub dxx: f64,
    pub dt: f64,
    /// Laplacian of the bubble-multiplied planar column.
    pub laplacian: f64,
}

impl CorrectorAtom {
    pub fn eval(&self, x: f64, y_or_t: f64) -> ColumnEval {
        match self {
            CorrectorAtom::Planar(a) => {
                let (value, laplacian) = bubble_kernel(a.mu_x, a.mu_y, a.sigma, x, y_or_t);
                ColumnEval { value, laplacian, ..Default::default() }
            }
            CorrectorAtom::SpaceTime(a) => {
                let e = a.eval(x, y_or_t);
                ColumnEval { value: e.phi, dx: e.dx, dxx: e.dxx, dt: e.dt, laplacian: 0.0 }
            }
        }
    }

    fn dump_fields(&self) -> [f64; 6] {
        match self {
            CorrectorAtom::Planar(a) => [a.mu_x, a.mu_y, a.sigma, f64::NAN, f64::NAN, f64::NAN],
            CorrectorAtom::SpaceTime(a) => [a.xi, f64::NAN, a.h, a.tau, a.s, a.velocity],
        }
    }
}

/// Enriched dictionary `inherited ∪ refinement ∪ background`, kept in that
/// order, with solved coefficients once available.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorDictionary {
    pub atoms: Vec<CorrectorAtom>,
    pub provenance: Vec<Provenance>,
    pub coefficients: Vec<f64>,
}

impl CorrectorDictionary {
    pub fn new(inherited: Vec<CorrectorAtom>, refinement: Vec<CorrectorAtom>, background: Vec<CorrectorAtom>) -> Self {
        let mut provenance = vec![Provenance::Inherited; inherited.len()];
        provenance.extend(vec![Provenance::Refinement; refinement.len()]);
        provenance.extend(vec![Provenance::Background; background.len()]);
        let mut atoms = inherited;
        atoms.extend(refinement);
        atoms.extend(background);
        Self { atoms, provenance, coefficients: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&q| q == p).count()
    }

    pub fn m_inh(&self) -> usize {
        self.count(Provenance::Inherited)
    }

    pub fn m_ref(&self) -> usize {
        self.count(Provenance::Refinement)
    }

    pub fn m_bg(&self) -> usize {
        self.count(Provenance::Background)
    }

    /// Corrected solution `Σ c_m φ_m`.
    pub fn eval(&self, x: f64, y_or_t: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.coefficients)
            .map(|(a, c)| c * a.eval(x, y_or_t).value)
            .sum()
    }

    /// Whitespace-separated table, one atom per line. Fields that do not
    /// apply to an atom kind are written as `nan`.
    pub fn dump(&self) -> String {
        let mut s = String::from("provenance x y width tau s velocity coefficient\n");
        for (i, (a, p)) in self.atoms.iter().zip(&self.provenance).enumerate() {
            let c = self.coefficients.get(i).copied().unwrap_or(f64::NAN);
            let _ = write!(s, "{}", p.name());
            for v in a.dump_fields().into_iter().chain([c]) {
                let _ = write!(s, " {v:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Characteristic speed at `x`, used as the drift of refinement atoms.
pub fn drift_speed(task: &TaskParams, x: f64) -> f64 {
    match *task {
        TaskParams::Advection { .. } => 1.0,
        TaskParams::AdvDiff { a, .. } => a,
        TaskParams::VarAdv { beta, .. } => varadv_speed(beta, x),
        TaskParams::Poisson { .. } => 0.0,
    }
}

/// Indices of the `k` highest scores; ties go to the lower index.
pub(crate) fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Top-`k` predictor atoms by activity. Dynamic atoms are converted into
/// one space-time atom per geometry snapshot; the temporal width is 1.5
/// snapshot spacings and the drift is the packet velocity at the snapshot.
pub fn select_inherited(geometry: &BasisGeometry, k: usize, family: Family) -> Vec<CorrectorAtom> {
    match geometry {
        BasisGeometry::Planar(g) => {
            let scores: Vec<f64> = g.gates.iter().zip(&g.coefs).map(|(a, c)| (a * c).abs()).collect();
            top_k(&scores, k).into_iter().map(|j| CorrectorAtom::Planar(g.atoms[j])).collect()
        }
        BasisGeometry::Dynamic(g) => {
            let m = g.gates.len();
            let scores: Vec<f64> = (0..m)
                .map(|j| {
                    let amp = g.snapshots.iter().map(|(_, s)| s[j].alpha.abs()).fold(0.0, f64::max);
                    g.gates[j].abs() * amp
                })
                .collect();
            let n = g.snapshots.len();
            let spacing = if n > 1 { g.snapshots[1].0 - g.snapshots[0].0 } else { family.horizon() };
            let periodic = family.is_periodic();
            let mut out = Vec::new();
            for j in top_k(&scores, k) {
                for (t, states) in &g.snapshots {
                    let st = states[j];
                    let xi = if periodic { st.xi.rem_euclid(1.0) } else { st.xi };
                    out.push(CorrectorAtom::SpaceTime(SpaceTimeAtom {
                        xi,
                        h: st.h.max(WIDTH_FLOOR),
                        tau: *t,
                        s: 1.5 * spacing,
                        velocity: st.dxi_dt,
                        periodic,
                    }));
                }
            }
            out
        }
    }
}

/// Probe lattice for refinement scores. Periodic spatial axes omit the
/// right endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dx: f64,
    pub dy: f64,
}

impl ProbeGrid {
    pub fn for_family(family: Family, nx: usize, ny: usize) -> Self {
        let x = if family.is_periodic() {
            (0..nx).map(|i| i as f64 / nx as f64).collect()
        } else {
            Axis::new(0.0, 1.0, nx).points()
        };
        let hi = if family == Family::Poisson { 1.0 } else { family.horizon() };
        let y = Axis::new(0.0, hi, ny).points();
        let dx = if family.is_periodic() { 1.0 / nx as f64 } else { 1.0 / (nx - 1) as f64 };
        Self { x, y, dx, dy: hi / (ny - 1) as f64 }
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point `k` in row-major order (x fastest).
    pub fn point(&self, k: usize) -> (f64, f64) {
        (self.x[k % self.x.len()], self.y[k / self.x.len()])
    }
}

/// `|∇u|` (spatial) and `|residual|` of the predictor at every probe point.
pub fn probe_predictor(model: &PredictorModel, task: &TaskParams, probe: &ProbeGrid) -> (Vec<f64>, Vec<f64>) {
    let n = probe.len();
    let (mut grad, mut res) = (Vec::with_capacity(n), Vec::with_capacity(n));
    match *task {
        TaskParams::Poisson { x0, y0, nu } => {
            let g = model.poisson_geometry(task);
            let src = crate::reference::GaussianSource::new(x0, y0, nu);
            for k in 0..n {
                let (x, y) = probe.point(k);
                let [_, ux, uy, lap] = g.eval_full(x, y);
                grad.push(ux.hypot(uy));
                res.push((-lap - src.eval(x, y)).abs());
            }
        }
        _ => {
            let ctx = model.dynamic_context(task);
            for &t in &probe.y {
                let states = model.dynamic_states(&ctx, t);
                for &x in &probe.x {
                    let e = crate::predictor::assemble_dynamic(task, model.ic_kind, &states, &ctx.gates, x, t);
                    let (a, nu) = transport_coefficients(task, x);
                    grad.push(e.u_x.abs());
                    res.push((e.u_t + a * e.u_x - nu * e.u_xx).abs());
                }
            }
        }
    }
    (grad, res)
}

/// `(a, ν)` in `u_t + a u_x − ν u_xx = 0`.
pub fn transport_coefficients(task: &TaskParams, x: f64) -> (f64, f64) {
    match *task {
        TaskParams::Advection { .. } => (1.0, 0.0),
        TaskParams::AdvDiff { a, nu } => (a, nu),
        TaskParams::VarAdv { beta, .. } => (varadv_speed(beta, x), 0.0),
        TaskParams::Poisson { .. } => (0.0, 0.0),
    }
}

/// Combined score `|∇u|/max|∇u| + |r|/max|r|`; a vanishing field
/// contributes nothing.
pub fn refinement_scores(grad: &[f64], residual: &[f64]) -> Vec<f64> {
    let norm = |v: &[f64]| {
        let m = v.iter().cloned().fold(0.0, f64::max);
        if m > 0.0 && m.is_finite() { 1.0 / m } else { 0.0 }
    };
    let (a, b) = (norm(grad), norm(residual));
    grad.iter().zip(residual).map(|(g, r)| g * a + r * b).collect()
}

/// Greedy top-`q` probe points by score, skipping points within one probe
/// spacing (per axis, inclusive) of an accepted point. Widths are 1.5
/// spacings.
pub fn extract_refinement(task: &TaskParams, probe: &ProbeGrid, scores: &[f64], q: usize) -> Vec<CorrectorAtom> {
    let family = task.family();
    let periodic = family.is_periodic();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen: Vec<(f64, f64)> = Vec::with_capacity(q);
    let tol = 1.0 + 1e-9;
    for k in order {
        if chosen.len() == q {
            break;
        }
        let (x, y) = probe.point(k);
        let close = chosen.iter().any(|&(cx, cy)| {
            let dx = if periodic { crate::geometry::wrapped_distance(x, cx) } else { (x - cx).abs() };
            dx <= probe.dx * tol && (y - cy).abs() <= probe.dy * tol
        });
        if !close {
            chosen.push((x, y));
        }
    }
    chosen
        .into_iter()
        .map(|(x, y)| match family {
            Family::Poisson => CorrectorAtom::Planar(PlanarAtom { mu_x: x, mu_y: y, sigma: 1.5 * probe.dx }),
            _ => CorrectorAtom::SpaceTime(SpaceTimeAtom {
                xi: x,
                h: 1.5 * probe.dx,
                tau: y,
                s: 1.5 * probe.dy,
                velocity: drift_speed(task, x),
                periodic,
            }),
        })
        .collect()
}

/// Tensor-grid scaffold with widths 1.2 grid spacings per axis.
pub fn background_scaffold(family: Family, nx: usize, ny: usize) -> Vec<CorrectorAtom> {
    assert!(nx >= 2 && ny >= 2, "background resolution must be at least 2 per axis");
    let probe = ProbeGrid::for_family(family, nx, ny);
    (0..probe.len())
        .map(|k| {
            let (x, y) = probe.point(k);
            match family {
                Family::Poisson => CorrectorAtom::Planar(PlanarAtom { mu_x: x, mu_y: y, sigma: 1.2 * probe.dx }),
                _ => CorrectorAtom::SpaceTime(SpaceTimeAtom {
                    xi: x,
                    h: 1.2 * probe.dx,
                    tau: y,
                    s: 1.2 * probe.dy,
                    velocity: 0.0,
                    periodic: family.is_periodic(),
                }),
            }
        })
        .collect()
}
