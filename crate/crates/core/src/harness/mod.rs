//! Experiment orchestration: error metrics, predictor-corrector runs,
//! ablations, geometry export and the command-line front end.

pub mod cli;
mod config;

pub use config::{default_sweep, default_tasks, ConfigError, Mode, RunConfig};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::corrector::{correct, uniform_baseline, CorrectorDictionary, CorrectorError};
use crate::predictor::{load_checkpoint, save_checkpoint, BasisGeometry, CheckpointError, Family, PredictorModel, TaskParams};
use crate::reference::{
    advdiff_exact, advection_exact, poisson_fd, varadv_exact, Axis, GaussianSource, IcKind, InitialCondition,
    ReferenceError, SampledField,
};
use crate::training::{train_model_with, train_single_instance, TrainConfig, TrainError, TrainOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("reference field has zero norm")]
    ZeroReference,
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Corrector(#[from] CorrectorError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// `‖pred − ref‖₂ / ‖ref‖₂` over all grid values.
pub fn relative_l2(pred: &SampledField, reference: &SampledField) -> Result<f64, HarnessError> {
    if pred.x != reference.x || pred.y != reference.y || pred.values.len() != reference.values.len() {
        return Err(HarnessError::GridMismatch);
    }
    let den: f64 = reference.values.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(HarnessError::ZeroReference);
    }
    let num: f64 = pred.values.iter().zip(&reference.values).map(|(p, r)| (p - r) * (p - r)).sum();
    Ok((num / den).sqrt())
}

/// Uniform evaluation axes; the second axis is `y` or `t`.
pub fn evaluation_axes(family: Family, grid: (usize, usize)) -> (Axis, Axis) {
    let hi = if family == Family::Poisson { 1.0 } else { family.horizon() };
    (Axis::new(0.0, 1.0, grid.0), Axis::new(0.0, hi, grid.1))
}

fn bilinear(field: &SampledField, x: f64, y: f64) -> f64 {
    let locate = |a: &Axis, v: f64| {
        let s = ((v - a.lo) / a.spacing()).clamp(0.0, (a.n - 1) as f64);
        let i = (s.floor() as usize).min(a.n - 2);
        (i, s - i as f64)
    };
    let (i, fx) = locate(&field.x, x);
    let (j, fy) = locate(&field.y, y);
    let v = |i, j| field.get(i, j);
    (1.0 - fy) * ((1.0 - fx) * v(i, j) + fx * v(i + 1, j)) + fy * ((1.0 - fx) * v(i, j + 1) + fx * v(i + 1, j + 1))
}

/// Ground truth of `task` on the evaluation grid. Poisson uses an FD solve
/// with `reference_n` nodes per axis, sampled (bilinearly between nodes when
/// the grids are not nested).
pub fn reference_field(task: &TaskParams, ic_kind: IcKind, grid: (usize, usize), reference_n: usize) -> Result<SampledField, HarnessError> {
    let (ax, ay) = evaluation_axes(task.family(), grid);
    Ok(match *task {
        TaskParams::Poisson { x0, y0, nu } => {
            let fd = poisson_fd(&[GaussianSource::new(x0, y0, nu)], reference_n)?;
            let nested = (reference_n - 1).is_multiple_of(grid.0 - 1) && (reference_n - 1).is_multiple_of(grid.1 - 1);
            if nested {
                let (sx, sy) = ((reference_n - 1) / (grid.0 - 1), (reference_n - 1) / (grid.1 - 1));
                let mut values = Vec::with_capacity(grid.0 * grid.1);
                for j in 0..grid.1 {
                    for i in 0..grid.0 {
                        values.push(fd.get(i * sx, j * sy));
                    }
                }
                SampledField { x: ax, y: ay, values }
            } else {
                SampledField::from_fn(ax, ay, |x, y| bilinear(&fd, x, y))
            }
        }
        TaskParams::Advection { x0, nu } => {
            let ic = match ic_kind {
                IcKind::MexicanHat => InitialCondition::mexican_hat(x0, nu),
                IcKind::PeriodicGaussian => InitialCondition::gaussian(x0, nu),
            };
            SampledField::from_fn(ax, ay, |x, t| advection_exact(&ic, x, t))
        }
        TaskParams::AdvDiff { a, nu } => SampledField::from_fn(ax, ay, |x, t| advdiff_exact(a, nu, x, t)),
        TaskParams::VarAdv { x0, nu, beta } => {
            let ic = InitialCondition::gaussian(x0, nu);
            let mut err = None;
            let f = SampledField::from_fn(ax, ay, |x, t| {
                varadv_exact(&ic, beta, x, t, 1e-10).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    f64::NAN
                })
            });
            if let Some(e) = err {
                return Err(e.into());
            }
            f
        }
    })
}

/// Samples `f` on the family's evaluation grid.
pub fn sample(family: Family, grid: (usize, usize), f: impl Fn(f64, f64) -> f64) -> SampledField {
    let (ax, ay) = evaluation_axes(family, grid);
    SampledField::from_fn(ax, ay, f)
}

/// `in-range` when every parameter lies in the training box.
pub fn regime(task: &TaskParams) -> &'static str {
    if task.in_training_range() {
        "in-range"
    } else {
        "out-of-range"
    }
}

/// Errors and bookkeeping for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub task: TaskParams,
    pub e_pred: f64,
    pub e_corr: f64,
    pub m_inh: usize,
    pub m_ref: usize,
    pub m_bg: usize,
    /// Total corrector columns `M_λ`.
    pub m_lambda: usize,
    pub ridge: f64,
    pub train_s: f64,
    pub infer_s: f64,
    pub solve_s: f64,
    pub seed: u64,
    pub config_hash: String,
}

pub const REPORT_HEADER: &str = "family,task,regime,E_pred,E_corr,M_inh,M_ref,M_bg,ridge,train_s,solve_s,seed";

/// `name=value` pairs joined by `;`.
pub fn task_label(task: &TaskParams) -> String {
    let names = task.family().param_names();
    let vals = task.values();
    names.iter().zip(vals).map(|(n, v)| format!("{n}={v:.16e}")).collect::<Vec<_>>().join(";")
}

impl ErrorReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.16e},{:.16e},{},{},{},{:.16e},{:.16e},{:.16e},{}",
            self.task.family().name(),
            task_label(&self.task),
            regime(&self.task),
            self.e_pred,
            self.e_corr,
            self.m_inh,
            self.m_ref,
            self.m_bg,
            self.ridge,
            self.train_s,
            self.solve_s,
            self.seed
        )
    }

    /// Copy with wall times zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self { train_s: 0.0, infer_s: 0.0, solve_s: 0.0, ..self.clone() }
    }
}

pub fn reports_csv(reports: &[ErrorReport]) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// A predictor trained or loaded for a run, with its wall time.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    pub model: PredictorModel,
    pub train_s: f64,
    pub history: Option<Vec<f64>>,
}

/// Training config of a run with the run seed applied.
pub fn effective_train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig { seed: cfg.seed, ..cfg.train.clone() }
}

/// Meta-trains a predictor for `cfg`.
pub fn train(cfg: &RunConfig, progress: impl FnMut(usize, f64)) -> Result<TrainOutcome, HarnessError> {
    let tc = effective_train_config(cfg);
    let mc = crate::predictor::ModelConfig { conditioned: true, ..cfg.model.clone() };
    Ok(train_model_with(PredictorModel::new(cfg.family, &mc, tc.seed), &tc, progress)?)
}

/// Writes the checkpoint and loss history of a training outcome into the
/// run directory.
pub fn save_training(cfg: &RunConfig, outcome: &TrainOutcome) -> Result<PathBuf, HarnessError> {
    let path = cfg.checkpoint_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(&outcome.model, &path)?;
    std::fs::create_dir_all(cfg.run_dir())?;
    std::fs::write(cfg.run_dir().join("loss_history.txt"), outcome.history_table())?;
    std::fs::write(cfg.run_dir().join("config.txt"), cfg.canonical())?;
    Ok(path)
}

/// Loads the run's checkpoint; with `train_if_missing` trains and saves
/// one instead.
pub fn prepare_model(cfg: &RunConfig, train_if_missing: bool, progress: impl FnMut(usize, f64)) -> Result<PreparedModel, HarnessError> {
    let path = cfg.checkpoint_path();
    if path.exists() {
        let model = load_checkpoint(&path)?;
        if model.family != cfg.family {
            return Err(ConfigError::BadValue { key: "run.checkpoint".into(), value: path.display().to_string() }.into());
        }
        return Ok(PreparedModel { model, train_s: 0.0, history: None });
    }
    if !train_if_missing {
        return Err(HarnessError::MissingCheckpoint(path));
    }
    let t0 = Instant::now();
    let outcome = train(cfg, progress)?;
    let train_s = t0.elapsed().as_secs_f64();
    save_training(cfg, &outcome)?;
    Ok(PreparedModel { model: outcome.model, train_s, history: Some(outcome.history) })
}

/// Predictor and corrector errors with the corrector dictionary of one task.
#[derive(Debug, Clone)]
pub struct TaskRun {
    pub report: ErrorReport,
    pub dictionary: CorrectorDictionary,
}

/// Evaluates `E_pred` and `E_corr` for every configured task. Reports are
/// produced even when the correction makes things worse.
pub fn run_predictor_corrector(cfg: &RunConfig, prepared: &PreparedModel) -> Result<Vec<TaskRun>, HarnessError> {
    let model = &prepared.model;
    let hash = cfg.hash();
    cfg.tasks
        .iter()
        .map(|task| {
            let reference = reference_field(task, model.ic_kind, cfg.eval_grid, cfg.reference_n)?;
            let t0 = Instant::now();
            let pred = sample(cfg.family, cfg.eval_grid, |x, y| model.predict(task, x, y));
            let infer_s = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let correction = correct(model, task, &cfg.corrector)?;
            let solve_s = t1.elapsed().as_secs_f64();
            let corr = sample(cfg.family, cfg.eval_grid, |x, y| correction.eval(x, y));
            let d = &correction.dictionary;
            let report = ErrorReport {
                task: *task,
                e_pred: relative_l2(&pred, &reference)?,
                e_corr: relative_l2(&corr, &reference)?,
                m_inh: d.m_inh(),
                m_ref: d.m_ref(),
                m_bg: d.m_bg(),
                m_lambda: d.len(),
                ridge: correction.ridge,
                train_s: prepared.train_s,
                infer_s,
                solve_s,
                seed: cfg.seed,
                config_hash: hash.clone(),
            };
            Ok(TaskRun { report, dictionary: correction.dictionary })
        })
        .collect()
}

/// One task of the uniform-grid ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAblation {
    pub task: TaskParams,
    pub guided: f64,
    /// `(resolution, E)` for every background-only run.
    pub uniform: Vec<((usize, usize), f64)>,
}

impl GridAblation {
    /// Lowest uniform-only error over the sweep with its resolution.
    pub fn best_uniform(&self) -> Option<((usize, usize), f64)> {
        self.uniform.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Guided correction versus background-only correctors over `cfg.sweep`.
pub fn ablate_uniform_grid(cfg: &RunConfig, model: &PredictorModel) -> Result<Vec<GridAblation>, HarnessError> {
    cfg.tasks
        .iter()
        .map(|task| {
            let reference = reference_field(task, model.ic_kind, cfg.eval_grid, cfg.reference_n)?;
            let guided = correct(model, task, &cfg.corrector)?;
            let guided = relative_l2(&sample(cfg.family, cfg.eval_grid, |x, y| guided.eval(x, y)), &reference)?;
            let uniform = cfg
                .sweep
                .iter()
                .map(|&res| {
                    let u = uniform_baseline(task, model.ic_kind, res)?;
                    let e = relative_l2(&sample(cfg.family, cfg.eval_grid, |x, y| u.eval(x, y)), &reference)?;
                    Ok((res, e))
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            Ok(GridAblation { task: *task, guided, uniform })
        })
        .collect()
}

pub fn grid_ablation_csv(rows: &[GridAblation]) -> String {
    let mut s = String::from("family,task,method,resolution,E\n");
    for r in rows {
        let head = format!("{},{}", r.task.family().name(), task_label(&r.task));
        let _ = writeln!(s, "{head},guided,,{:.16e}", r.guided);
        for ((a, b), e) in &r.uniform {
            let _ = writeln!(s, "{head},uniform,{a}x{b},{e:.16e}");
        }
        if let Some(((a, b), e)) = r.best_uniform() {
            let _ = writeln!(s, "{head},uniform-best,{a}x{b},{e:.16e}");
        }
    }
    s
}

/// One method of the single-instance comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRow {
    pub task: TaskParams,
    pub method: &'static str,
    pub error: f64,
    pub train_s: f64,
    pub infer_s: f64,
    pub retraining: bool,
}

/// The meta-trained predictor against a per-task model of the same form
/// trained from scratch with the run's training settings.
pub fn ablate_single_instance(cfg: &RunConfig, prepared: &PreparedModel) -> Result<Vec<InstanceRow>, HarnessError> {
    let model = &prepared.model;
    let mut rows = Vec::new();
    for task in &cfg.tasks {
        let reference = reference_field(task, model.ic_kind, cfg.eval_grid, cfg.reference_n)?;
        let t0 = Instant::now();
        let pred = sample(cfg.family, cfg.eval_grid, |x, y| model.predict(task, x, y));
        let infer_s = t0.elapsed().as_secs_f64();
        rows.push(InstanceRow {
            task: *task,
            method: "kapi",
            error: relative_l2(&pred, &reference)?,
            train_s: prepared.train_s,
            infer_s,
            retraining: false,
        });
        let t1 = Instant::now();
        let single = train_single_instance(task, &cfg.model, &effective_train_config(cfg))?;
        let train_s = t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        let pred = sample(cfg.family, cfg.eval_grid, |x, y| single.model.predict(task, x, y));
        let infer_s = t2.elapsed().as_secs_f64();
        rows.push(InstanceRow {
            task: *task,
            method: "single-instance",
            error: relative_l2(&pred, &reference)?,
            train_s,
            infer_s,
            retraining: true,
        });
    }
    Ok(rows)
}

pub fn instance_ablation_csv(rows: &[InstanceRow]) -> String {
    let mut s = String::from("family,task,method,E,train_s,infer_s,retraining\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.16e},{:.16e},{:.16e},{}",
            r.task.family().name(),
            task_label(&r.task),
            r.method,
            r.error,
            r.train_s,
            r.infer_s,
            if r.retraining { "yes" } else { "no" }
        );
    }
    s
}

pub const GEOMETRY_HEADER: &str = "id,provenance,x,y,width,tau,s,time,gate,coef_norm";

/// Geometry table: predictor atoms (one row per snapshot for dynamic
/// families), then the corrector dictionary when given. `coef_norm` is
/// `|coefficient|` scaled to a maximum of 1 within each group.
pub fn geometry_csv(model: &PredictorModel, task: &TaskParams, snapshots: usize, dictionary: Option<&CorrectorDictionary>) -> String {
    let mut s = format!("{GEOMETRY_HEADER}\n");
    let nan = f64::NAN;
    let normalize = |v: Vec<f64>| {
        let m = v.iter().map(|c| c.abs()).fold(0.0, f64::max);
        v.into_iter().map(|c| if m > 0.0 { c.abs() / m } else { 0.0 }).collect::<Vec<_>>()
    };
    let mut row = |id: usize, prov: &str, f: [f64; 8]| {
        let _ = write!(s, "{id},{prov}");
        for v in f {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    };
    match model.generate_geometry(task, snapshots) {
        BasisGeometry::Planar(g) => {
            let c = normalize(g.gates.iter().zip(&g.coefs).map(|(a, b)| a * b).collect());
            for (j, a) in g.atoms.iter().enumerate() {
                row(j, "predictor", [a.mu_x, a.mu_y, a.sigma, nan, nan, nan, g.gates[j], c[j]]);
            }
        }
        BasisGeometry::Dynamic(g) => {
            let amp: Vec<f64> = g.snapshots.iter().flat_map(|(_, st)| st.iter().zip(&g.gates).map(|(a, gate)| a.alpha * gate)).collect();
            let c = normalize(amp);
            let m = g.gates.len();
            for (k, (t, st)) in g.snapshots.iter().enumerate() {
                for (j, a) in st.iter().enumerate() {
                    row(j, "predictor", [a.xi, nan, a.h, nan, nan, *t, g.gates[j], c[k * m + j]]);
                }
            }
        }
    }
    if let Some(d) = dictionary {
        let c = normalize(d.coefficients.clone());
        for (j, (atom, prov)) in d.atoms.iter().zip(&d.provenance).enumerate() {
            let f = match atom {
                crate::corrector::CorrectorAtom::Planar(a) => [a.mu_x, a.mu_y, a.sigma, nan, nan, nan, nan, c.get(j).copied().unwrap_or(nan)],
                crate::corrector::CorrectorAtom::SpaceTime(a) => [a.xi, nan, a.h, a.tau, a.s, nan, nan, c.get(j).copied().unwrap_or(nan)],
            };
            row(j, prov.name(), f);
        }
    }
    s
}

/// Writes [`geometry_csv`] to `path`.
pub fn export_geometry(
    model: &PredictorModel,
    task: &TaskParams,
    snapshots: usize,
    dictionary: Option<&CorrectorDictionary>,
    path: &Path,
) -> Result<(), HarnessError> {
    std::fs::write(path, geometry_csv(model, task, snapshots, dictionary))?;
    Ok(())
}

#[cfg(test)]
mod tests;
