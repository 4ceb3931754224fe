use std::ops::Range;

use crate::linalg::{norm2, DenseMatrix, LinalgError, RidgeSolver};
use crate::predictor::{Family, TaskParams};
use crate::reference::{advdiff_exact, GaussianSource, IcKind, InitialCondition, ADVDIFF_XC};

use super::dictionary::{transport_coefficients, CorrectorAtom};

/// Forcing and trace data of one problem instance.
pub struct ProblemData<'a> {
    pub task: TaskParams,
    /// Interior right-hand side; zero for the transport families.
    pub forcing: Box<dyn Fn(f64, f64) -> f64 + 'a>,
    pub initial: Box<dyn Fn(f64) -> f64 + 'a>,
    /// Dirichlet data `(x, t)` on non-periodic boundaries.
    pub boundary: Box<dyn Fn(f64, f64) -> f64 + 'a>,
}

impl<'a> ProblemData<'a> {
    pub fn for_task(task: &TaskParams, ic_kind: IcKind) -> ProblemData<'static> {
        let task = *task;
        match task {
            TaskParams::Poisson { x0, y0, nu } => {
                let src = GaussianSource::new(x0, y0, nu);
                ProblemData {
                    task,
                    forcing: Box::new(move |x, y| src.eval(x, y)),
                    initial: Box::new(|_| 0.0),
                    boundary: Box::new(|_, _| 0.0),
                }
            }
            TaskParams::AdvDiff { a, nu } => ProblemData {
                task,
                forcing: Box::new(|_, _| 0.0),
                initial: Box::new(move |x| (-(x - ADVDIFF_XC).powi(2) / nu).exp()),
                boundary: Box::new(move |x, t| advdiff_exact(a, nu, x, t)),
            },
            TaskParams::Advection { x0, nu } | TaskParams::VarAdv { x0, nu, .. } => {
                let ic = match (task, ic_kind) {
                    (TaskParams::Advection { .. }, IcKind::MexicanHat) => InitialCondition::mexican_hat(x0, nu),
                    _ => InitialCondition::gaussian(x0, nu),
                };
                ProblemData {
                    task,
                    forcing: Box::new(|_, _| 0.0),
                    initial: Box::new(move |x| ic.eval(x)),
                    boundary: Box::new(|_, _| 0.0),
                }
            }
        }
    }
}

/// Collocation points of the corrector solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrectorPoints {
    pub interior: Vec<(f64, f64)>,
    pub initial: Vec<f64>,
    /// `(x, t)`; periodic rows pair `x = 0` with `x = 1`.
    pub boundary: Vec<(f64, f64)>,
    pub anchor: Vec<(f64, f64)>,
}

fn open_axis(n: usize, hi: f64) -> Vec<f64> {
    (1..=n).map(|i| hi * i as f64 / (n + 1) as f64).collect()
}

fn cell_centers(n: usize, hi: f64) -> Vec<f64> {
    (0..n).map(|i| hi * (i as f64 + 0.5) / n as f64).collect()
}

impl CorrectorPoints {
    /// Poisson: `n × n` strictly interior grid plus an `anchor × anchor`
    /// anchor grid.
    pub fn poisson(n: usize, anchor: usize) -> Self {
        let ax = open_axis(n, 1.0);
        let an = open_axis(anchor, 1.0);
        Self {
            interior: ax.iter().flat_map(|&y| ax.iter().map(move |&x| (x, y))).collect(),
            anchor: an.iter().flat_map(|&y| an.iter().map(move |&x| (x, y))).collect(),
            ..Default::default()
        }
    }

    /// Transport: `nx × nt` cell-centered in space and ending at the
    /// horizon in time, `n_ic` initial points and `n_bc` boundary rows.
    pub fn transport(family: Family, nx: usize, nt: usize, n_ic: usize, n_bc: usize) -> Self {
        Self::transport_shifted(family, nx, nt, n_ic, n_bc, 0.0)
    }

    /// As [`CorrectorPoints::transport`] with every point moved by `shift`
    /// cells, for held-out validation rows.
    pub fn transport_shifted(family: Family, nx: usize, nt: usize, n_ic: usize, n_bc: usize, shift: f64) -> Self {
        let horizon = family.horizon();
        let xs: Vec<f64> = cell_centers(nx, 1.0).iter().map(|x| x + shift / nx as f64).collect();
        let ts: Vec<f64> = (1..=nt).map(|k| horizon * (k as f64 - shift) / nt as f64).collect();
        let interior = ts.iter().flat_map(|&t| xs.iter().map(move |&x| (x, t))).collect();
        let initial = cell_centers(n_ic, 1.0).iter().map(|x| x + shift / n_ic.max(1) as f64).collect();
        let boundary = if family.is_periodic() {
            (1..=n_bc).map(|k| (0.0, horizon * (k as f64 - shift) / n_bc as f64)).collect()
        } else {
            let per_side = n_bc / 2;
            (1..=per_side)
                .flat_map(|k| {
                    let t = horizon * (k as f64 - shift) / per_side as f64;
                    [(0.0, t), (1.0, t)]
                })
                .collect()
        };
        Self { interior, initial, boundary, anchor: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Interior,
    Boundary,
    Initial,
    Anchor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowBlock {
    pub kind: BlockKind,
    pub rows: Range<usize>,
    pub weight: f64,
}

/// Weighted collocation system `A z ≈ b`. Columns of `A` are normalized;
/// the coefficient of atom `j` is `z_j · column_scale[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub ridge: f64,
    pub blocks: Vec<RowBlock>,
    pub column_scale: Vec<f64>,
}

impl LinearSystem {
    /// `‖A z − b‖₂` for normalized-column coefficients `z`.
    pub fn residual_norm(&self, z: &[f64]) -> f64 {
        let r: Vec<f64> = self.a.matvec(z).iter().zip(&self.b).map(|(x, y)| x - y).collect();
        norm2(&r)
    }

    /// Maps normalized-column coefficients to atom coefficients.
    pub fn unscale(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.column_scale).map(|(z, s)| z * s).collect()
    }

    /// Maps atom coefficients to normalized-column coefficients.
    pub fn scale(&self, c: &[f64]) -> Vec<f64> {
        c.iter().zip(&self.column_scale).map(|(c, s)| c / s).collect()
    }
}

/// Block weights of the corrector rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockWeights {
    pub interior: f64,
    pub boundary: f64,
    pub initial: f64,
    pub anchor: f64,
}

impl Default for BlockWeights {
    fn default() -> Self {
        Self { interior: 1.0, boundary: 10.0, initial: 10.0, anchor: 0.05 }
    }
}

/// Applies each family's operator and trace conditions to the frozen
/// dictionary. `anchor` supplies the predictor field for anchor rows.
pub fn assemble_system(
    data: &ProblemData<'_>,
    atoms: &[CorrectorAtom],
    points: &CorrectorPoints,
    anchor: Option<&dyn Fn(f64, f64) -> f64>,
    weights: &BlockWeights,
    ridge: f64,
) -> Result<LinearSystem, LinalgError> {
    let family = data.task.family();
    let n = atoms.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let mut blocks = Vec::new();
    let push_block = |kind, weight, rows_before: usize, rows_after: usize, blocks: &mut Vec<RowBlock>| {
        if rows_after > rows_before {
            blocks.push(RowBlock { kind, rows: rows_before..rows_after, weight });
        }
    };

    let start = b.len();
    let w = weights.interior;
    for &(x, y) in &points.interior {
        let (a, nu) = transport_coefficients(&data.task, x);
        for atom in atoms {
            let e = atom.eval(x, y);
            rows.push(
                w * match family {
                    Family::Poisson => -e.laplacian,
                    _ => e.dt + a * e.dx - nu * e.dxx,
                },
            );
        }
        b.push(w * (data.forcing)(x, y));
    }
    push_block(BlockKind::Interior, w, start, b.len(), &mut blocks);

    if family != Family::Poisson {
        let start = b.len();
        let w = weights.boundary;
        for &(x, t) in &points.boundary {
            for atom in atoms {
                let v = if family.is_periodic() { atom.eval(0.0, t).value - atom.eval(1.0, t).value } else { atom.eval(x, t).value };
                rows.push(w * v);
            }
            b.push(if family.is_periodic() { 0.0 } else { w * (data.boundary)(x, t) });
        }
        push_block(BlockKind::Boundary, w, start, b.len(), &mut blocks);

        let start = b.len();
        let w = weights.initial;
        for &x in &points.initial {
            for atom in atoms {
                rows.push(w * atom.eval(x, 0.0).value);
            }
            b.push(w * (data.initial)(x));
        }
        push_block(BlockKind::Initial, w, start, b.len(), &mut blocks);
    }

    if let Some(field) = anchor {
        let start = b.len();
        let w = weights.anchor;
        if w > 0.0 {
            for &(x, y) in &points.anchor {
                for atom in atoms {
                    rows.push(w * atom.eval(x, y).value);
                }
                b.push(w * field(x, y));
            }
        }
        push_block(BlockKind::Anchor, w, start, b.len(), &mut blocks);
    }

    let mut a = DenseMatrix::from_row_major(b.len(), n, rows)?;
    if !a.is_finite() {
        return Err(LinalgError::NonFiniteInput { what: "design matrix" });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFiniteInput { what: "right-hand side" });
    }
    let column_scale: Vec<f64> = (0..n)
        .map(|j| {
            let c = a.column_norm(j);
            if c > 0.0 { 1.0 / c } else { 1.0 }
        })
        .collect();
    for i in 0..a.rows() {
        for (v, s) in a.row_mut(i).iter_mut().zip(&column_scale) {
            *v *= s;
        }
    }
    Ok(LinearSystem { a, b, ridge, blocks, column_scale })
}

/// Factorization of an emitted system, reusable across ridge values.
pub struct SystemSolver<'s> {
    system: &'s LinearSystem,
    solver: RidgeSolver,
}

impl<'s> SystemSolver<'s> {
    pub fn new(system: &'s LinearSystem) -> Result<Self, LinalgError> {
        Ok(Self { system, solver: RidgeSolver::new(&system.a, &system.b)? })
    }

    /// Coefficients of the normalized columns.
    pub fn solve_scaled(&self, ridge: f64) -> Result<Vec<f64>, LinalgError> {
        self.solver.solve(ridge)
    }

    /// Coefficients of the original atoms.
    pub fn solve(&self, ridge: f64) -> Result<Vec<f64>, LinalgError> {
        Ok(self.system.unscale(&self.solve_scaled(ridge)?))
    }

    pub fn rank(&self) -> usize {
        self.solver.rank()
    }
}

/// Atom coefficients of `system` at its own ridge.
pub fn solve_system(system: &LinearSystem) -> Result<Vec<f64>, LinalgError> {
    SystemSolver::new(system)?.solve(system.ridge)
}
