//! Physics-informed meta-training of the predictors.

mod adam;
mod loss;
mod sampling;

pub use adam::AdamState;
pub use loss::{dynamic_task_loss, meta_loss, poisson_task_loss, task_loss, width_target, LossWeights};
pub use sampling::{
    feature_location, log_uniform_map, sample_collocation, sample_task, CollocationCounts, CollocationSet,
    CurriculumPhase, TaskDistribution, NEAR_INITIAL_WINDOW,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape};
use crate::predictor::{Family, ModelConfig, PredictorModel, TaskParams};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, task {task}")]
    NonFiniteLoss { epoch: usize, task: usize },
    #[error("non-finite gradient at epoch {epoch}: {source}")]
    NaNDetected { epoch: usize, source: AutodiffError },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub tasks_per_batch: usize,
    pub seed: u64,
    /// Decoupled decay on the Poisson gate rows.
    pub weight_decay: f64,
    pub counts: CollocationCounts,
    pub weights: LossWeights,
    pub distribution: TaskDistribution,
}

impl TrainConfig {
    /// Published optimizer settings for each family.
    pub fn paper(family: Family) -> Self {
        let (epochs, lr) = match family {
            Family::Poisson => (2000, 1e-3),
            Family::VarAdv => (5000, 5e-4),
            _ => (5000, 1e-3),
        };
        Self {
            epochs,
            lr,
            tasks_per_batch: 4,
            seed: 0,
            weight_decay: if family == Family::Poisson { 1e-4 } else { 0.0 },
            counts: CollocationCounts::default_for(family),
            weights: LossWeights::default(),
            distribution: TaskDistribution::default_for(family),
        }
    }

    fn validate(&self, family: Family) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.distribution.family != family {
            return bad("task distribution belongs to another family");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.tasks_per_batch == 0 || self.counts.interior == 0 {
            return bad("batch and collocation counts must be positive");
        }
        if self.distribution.ranges.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return bad("empty parameter range");
        }
        Ok(())
    }
}

/// A trained model with its per-epoch mean batch loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PredictorModel,
    pub history: Vec<f64>,
}

impl TrainOutcome {
    /// Two-column `epoch loss` table.
    pub fn history_table(&self) -> String {
        let mut s = String::from("epoch loss\n");
        for (i, l) in self.history.iter().enumerate() {
            s.push_str(&format!("{} {:.16e}\n", i, l));
        }
        s
    }
}

/// Runs `config.epochs` Adam steps on `model`. Task sampling and
/// collocation draw from a stream separate from the initializer.
pub fn train_model(model: PredictorModel, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_model_with(model, config, |_, _| {})
}

/// As [`train_model`], calling `progress(epoch, loss)` after every step.
pub fn train_model_with(
    mut model: PredictorModel,
    config: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome, TrainError> {
    config.validate(model.family)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let n = model.parameter_count();
    let mut adam = AdamState::new(n, config.lr).with_decay(config.weight_decay, model.gate_decay_ranges());
    let mut history = Vec::with_capacity(config.epochs);
    let mut tape = Tape::new();
    for epoch in 0..config.epochs {
        let frac = epoch as f64 / config.epochs as f64;
        let batch: Vec<(TaskParams, CollocationSet)> = (0..config.tasks_per_batch)
            .map(|_| {
                let task = sample_task(&config.distribution, frac, &mut rng);
                let colloc = sample_collocation(&task, &config.counts, &mut rng);
                (task, colloc)
            })
            .collect();
        tape.clear();
        let pv = model.store.leaves(&mut tape);
        let (loss, per_task) = meta_loss(&model, &mut tape, pv, &batch, &config.weights);
        if let Some(task) = per_task.iter().position(|&v| !tape.value(v).is_finite()) {
            return Err(TrainError::NonFiniteLoss { epoch, task });
        }
        let value = tape.value(loss);
        let grads = tape.gradient(loss, pv.span).map_err(|source| TrainError::NaNDetected { epoch, source })?;
        adam.step(model.store.values_mut(), &grads);
        history.push(value);
        progress(epoch, value);
    }
    Ok(TrainOutcome { model, history })
}

/// Meta-trains a conditioned predictor initialized from `config.seed`.
pub fn train_predictor(family: Family, model_config: &ModelConfig, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let cfg = ModelConfig { conditioned: true, ..model_config.clone() };
    train_model(PredictorModel::new(family, &cfg, config.seed), config)
}

/// Fits the same Gaussian-basis hypothesis to a single task with direct
/// parameters in place of the conditioning nets.
pub fn train_single_instance(task: &TaskParams, model_config: &ModelConfig, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let family = task.family();
    let cfg = ModelConfig { conditioned: false, ..model_config.clone() };
    let config = TrainConfig {
        distribution: TaskDistribution::fixed(task),
        tasks_per_batch: 1,
        ..config.clone()
    };
    train_model(PredictorModel::new(family, &cfg, config.seed), &config)
}
