//! Predictor-guided least-squares corrector.

mod dictionary;
mod system;

pub use dictionary::{
    background_scaffold, drift_speed, extract_refinement, probe_predictor, refinement_scores, select_inherited,
    transport_coefficients, ColumnEval, CorrectorAtom, CorrectorDictionary, ProbeGrid, Provenance,
};
pub use system::{
    assemble_system, solve_system, BlockKind, BlockWeights, CorrectorPoints, LinearSystem, ProblemData, RowBlock,
    SystemSolver,
};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::predictor::{Family, PredictorModel, TaskParams};
use crate::reference::IcKind;

#[derive(Debug, Error)]
pub enum CorrectorError {
    #[error("corrector solve failed with {m_inh} inherited, {m_ref} refinement and {m_bg} background atoms: {source}")]
    Solve {
        source: LinalgError,
        m_inh: usize,
        m_ref: usize,
        m_bg: usize,
    },
    #[error("task belongs to {task} but the model to {model}")]
    FamilyMismatch { task: Family, model: Family },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorConfig {
    pub m_inh: usize,
    pub m_ref: usize,
    /// Background resolution `(x, y)` or `(x, t)`.
    pub background: (usize, usize),
    pub probe: (usize, usize),
    /// Interior collocation resolution.
    pub interior: (usize, usize),
    /// Anchor grid per axis (Poisson).
    pub anchor: usize,
    pub n_ic: usize,
    pub n_bc: usize,
    pub snapshots: usize,
    pub weights: BlockWeights,
    pub ridge: f64,
    /// Candidate ridges; when non-empty the one with the smallest held-out
    /// residual wins.
    pub ridge_grid: Vec<f64>,
    pub use_inherited: bool,
    pub use_refinement: bool,
}

impl CorrectorConfig {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Poisson => Self {
                m_inh: 32,
                m_ref: 32,
                background: (10, 10),
                probe: (41, 41),
                interior: (48, 48),
                anchor: 12,
                n_ic: 0,
                n_bc: 0,
                snapshots: 1,
                weights: BlockWeights::default(),
                ridge: 1e-8,
                ridge_grid: Vec::new(),
                use_inherited: true,
                use_refinement: true,
            },
            _ => Self {
                m_inh: 24,
                m_ref: 32,
                background: (12, 8),
                probe: (64, 16),
                interior: (64, 32),
                anchor: 0,
                n_ic: 64,
                n_bc: 32,
                snapshots: 8,
                weights: BlockWeights::default(),
                ridge: 1e-8,
                ridge_grid: if family == Family::Advection { vec![1e-10, 1e-8, 1e-6, 1e-4] } else { Vec::new() },
                use_inherited: true,
                use_refinement: true,
            },
        }
    }

    /// Background-only configuration of the uniform-grid ablation.
    pub fn uniform(family: Family, resolution: (usize, usize)) -> Self {
        Self {
            background: resolution,
            use_inherited: false,
            use_refinement: false,
            weights: BlockWeights { anchor: 0.0, ..BlockWeights::default() },
            ..Self::default_for(family)
        }
    }
}

/// Outcome of one corrector solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub dictionary: CorrectorDictionary,
    pub ridge: f64,
    /// `‖A z − b‖₂` of the weighted collocation system.
    pub residual_norm: f64,
    pub rows: usize,
    pub rank: usize,
}

impl Correction {
    pub fn eval(&self, x: f64, y_or_t: f64) -> f64 {
        self.dictionary.eval(x, y_or_t)
    }
}

/// Collocation points for `family` under `config`.
pub fn corrector_points(family: Family, config: &CorrectorConfig) -> CorrectorPoints {
    match family {
        Family::Poisson => CorrectorPoints::poisson(config.interior.0, config.anchor),
        _ => CorrectorPoints::transport(family, config.interior.0, config.interior.1, config.n_ic, config.n_bc),
    }
}

/// Builds the enriched dictionary for `task` from a trained predictor.
pub fn build_dictionary(model: &PredictorModel, task: &TaskParams, config: &CorrectorConfig) -> CorrectorDictionary {
    let family = model.family;
    let inherited = if config.use_inherited && config.m_inh > 0 {
        let geometry = model.generate_geometry(task, config.snapshots);
        select_inherited(&geometry, config.m_inh.min(model.m), family)
    } else {
        Vec::new()
    };
    let refinement = if config.use_refinement && config.m_ref > 0 {
        let probe = ProbeGrid::for_family(family, config.probe.0, config.probe.1);
        let (grad, res) = probe_predictor(model, task, &probe);
        extract_refinement(task, &probe, &refinement_scores(&grad, &res), config.m_ref)
    } else {
        Vec::new()
    };
    let background = background_scaffold(family, config.background.0, config.background.1);
    CorrectorDictionary::new(inherited, refinement, background)
}

/// Solves for the coefficients of a frozen dictionary.
pub fn solve_dictionary(
    mut dictionary: CorrectorDictionary,
    data: &ProblemData<'_>,
    anchor: Option<&dyn Fn(f64, f64) -> f64>,
    config: &CorrectorConfig,
) -> Result<Correction, CorrectorError> {
    let family = data.task.family();
    let diag = |source: LinalgError, d: &CorrectorDictionary| CorrectorError::Solve {
        source,
        m_inh: d.m_inh(),
        m_ref: d.m_ref(),
        m_bg: d.m_bg(),
    };
    let points = corrector_points(family, config);
    let system = assemble_system(data, &dictionary.atoms, &points, anchor, &config.weights, config.ridge)
        .map_err(|e| diag(e, &dictionary))?;
    let solver = SystemSolver::new(&system).map_err(|e| diag(e, &dictionary))?;
    let (ridge, z) = if config.ridge_grid.is_empty() {
        (config.ridge, solver.solve_scaled(config.ridge).map_err(|e| diag(e, &dictionary))?)
    } else {
        let held_out = match family {
            Family::Poisson => CorrectorPoints::poisson(config.interior.0 + 1, 0),
            _ => CorrectorPoints::transport_shifted(family, config.interior.0, config.interior.1, config.n_ic, config.n_bc, 0.5),
        };
        let check = assemble_system(data, &dictionary.atoms, &held_out, None, &config.weights, config.ridge)
            .map_err(|e| diag(e, &dictionary))?;
        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        for &ridge in &config.ridge_grid {
            let z = solver.solve_scaled(ridge).map_err(|e| diag(e, &dictionary))?;
            let c = system.unscale(&z);
            let r = check.residual_norm(&check.scale(&c));
            if best.as_ref().is_none_or(|b| r < b.0) {
                best = Some((r, ridge, z));
            }
        }
        let (_, ridge, z) = best.expect("non-empty ridge grid");
        (ridge, z)
    };
    let residual_norm = system.residual_norm(&z);
    dictionary.coefficients = system.unscale(&z);
    Ok(Correction {
        dictionary,
        ridge,
        residual_norm,
        rows: system.b.len(),
        rank: solver.rank(),
    })
}

/// Predictor-guided correction of `task`.
pub fn correct(model: &PredictorModel, task: &TaskParams, config: &CorrectorConfig) -> Result<Correction, CorrectorError> {
    if task.family() != model.family {
        return Err(CorrectorError::FamilyMismatch { task: task.family(), model: model.family });
    }
    let dictionary = build_dictionary(model, task, config);
    let data = ProblemData::for_task(task, model.ic_kind);
    let field = |x: f64, y: f64| model.predict(task, x, y);
    let anchor: Option<&dyn Fn(f64, f64) -> f64> =
        (model.family == Family::Poisson && config.weights.anchor > 0.0).then_some(&field);
    solve_dictionary(dictionary, &data, anchor, config)
}

/// Background-only corrector at `resolution`, without a predictor.
pub fn uniform_baseline(task: &TaskParams, ic_kind: IcKind, resolution: (usize, usize)) -> Result<Correction, CorrectorError> {
    let family = task.family();
    let config = CorrectorConfig::uniform(family, resolution);
    let dictionary = CorrectorDictionary::new(Vec::new(), Vec::new(), background_scaffold(family, resolution.0, resolution.1));
    solve_dictionary(dictionary, &ProblemData::for_task(task, ic_kind), None, &config)
}
