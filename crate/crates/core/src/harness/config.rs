use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::corrector::CorrectorConfig;
use crate::predictor::{Family, ModelConfig, TaskParams};
use crate::reference::IcKind;
use crate::training::TrainConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error("missing `{0}`")]
    Missing(String),
    #[error("task {0} does not match the family")]
    BadTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Solve,
    Eval,
    AblateGrid,
    AblateInstance,
    ExportGeometry,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Solve => "solve",
            Mode::Eval => "eval",
            Mode::AblateGrid => "ablate-grid",
            Mode::AblateInstance => "ablate-instance",
            Mode::ExportGeometry => "export-geometry",
        }
    }
}

/// Everything one harness invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub mode: Mode,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub corrector: CorrectorConfig,
    pub tasks: Vec<TaskParams>,
    /// Evaluation grid `(nx, ny)`; `y` is time for transport families.
    pub eval_grid: (usize, usize),
    /// Poisson FD reference resolution.
    pub reference_n: usize,
    /// Background resolutions of the uniform-grid sweep.
    pub sweep: Vec<(usize, usize)>,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
}

/// Tasks reported for each family when the config lists none.
pub fn default_tasks(family: Family) -> Vec<TaskParams> {
    let v: &[&[f64]] = match family {
        Family::Poisson => &[&[0.5, 0.5, 0.07], &[0.45, 0.55, 0.09], &[0.5, 0.5, 0.03]],
        Family::Advection => &[&[0.5, 0.07], &[0.5, 0.02]],
        Family::AdvDiff => &[&[0.75, 0.03], &[0.75, 0.008], &[0.95, 0.015]],
        Family::VarAdv => &[&[0.5, 0.07, 0.4]],
    };
    v.iter().filter_map(|p| TaskParams::from_values(family, p)).collect()
}

pub fn default_sweep(family: Family) -> Vec<(usize, usize)> {
    match family {
        Family::Poisson => (4..=16).map(|r| (r, r)).collect(),
        _ => [(8, 4), (12, 6), (16, 8), (24, 12), (32, 16)].to_vec(),
    }
}

impl RunConfig {
    pub fn new(family: Family, mode: Mode) -> Self {
        Self {
            family,
            mode,
            model: ModelConfig::paper(family),
            train: TrainConfig::paper(family),
            corrector: CorrectorConfig::default_for(family),
            tasks: default_tasks(family),
            eval_grid: if family == Family::Poisson { (101, 101) } else { (201, 101) },
            reference_n: 201,
            sweep: default_sweep(family),
            out_dir: PathBuf::from("runs"),
            checkpoint: None,
            seed: 7,
        }
    }

    /// Parses `key = value` lines; `#` starts a comment. Later lines win.
    pub fn parse(text: &str, mode: Mode) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut order = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            order.push(k.clone());
            entries.insert(k, v);
        }
        let family_name = entries.get("family.name").ok_or_else(|| ConfigError::Missing("family.name".into()))?;
        let family = Family::parse(family_name).ok_or_else(|| bad("family.name", family_name))?;
        let mut cfg = Self::new(family, mode);
        for k in order {
            let v = &entries[&k];
            cfg.set(&k, v)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let c = &mut self.corrector;
        match key {
            "family.name" => {}
            "family.ic" => {
                self.model.ic_kind = match v {
                    "gaussian" => IcKind::PeriodicGaussian,
                    "mexican-hat" => IcKind::MexicanHat,
                    _ => return Err(bad(key, v)),
                }
            }
            "family.tasks" => {
                self.tasks = v
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        let p: Vec<f64> = list(key, s)?;
                        TaskParams::from_values(self.family, &p).ok_or_else(|| ConfigError::BadTask(s.trim().into()))
                    })
                    .collect::<Result<_, _>>()?
            }
            "run.seed" => self.seed = num(key, v)?,
            "run.out" => self.out_dir = PathBuf::from(v),
            "run.checkpoint" => self.checkpoint = Some(PathBuf::from(v)),
            "model.m" => self.model.m = positive(key, v)?,
            "model.hidden" => self.model.hidden = list(key, v)?,
            "model.encoder_width" => self.model.encoder_width = positive(key, v)?,
            "model.harmonics" => self.model.harmonics = num(key, v)?,
            "train.epochs" => self.train.epochs = num(key, v)?,
            "train.lr" => self.train.lr = num(key, v)?,
            "train.tasks_per_batch" => self.train.tasks_per_batch = positive(key, v)?,
            "train.weight_decay" => self.train.weight_decay = num(key, v)?,
            "train.interior" => self.train.counts.interior = positive(key, v)?,
            "corrector.m_inh" => c.m_inh = num(key, v)?,
            "corrector.m_ref" => c.m_ref = num(key, v)?,
            "corrector.background" => c.background = pair(key, v)?,
            "corrector.probe" => c.probe = pair(key, v)?,
            "corrector.interior" => c.interior = pair(key, v)?,
            "corrector.anchor" => c.anchor = num(key, v)?,
            "corrector.anchor_weight" => c.weights.anchor = num(key, v)?,
            "corrector.n_ic" => c.n_ic = num(key, v)?,
            "corrector.n_bc" => c.n_bc = num(key, v)?,
            "corrector.snapshots" => c.snapshots = positive(key, v)?,
            "corrector.ridge" => c.ridge = num(key, v)?,
            "corrector.ridge_grid" => c.ridge_grid = list(key, v)?,
            "eval.grid" => self.eval_grid = pair(key, v)?,
            "eval.reference_n" => self.reference_n = num(key, v)?,
            "ablate.sweep" => {
                self.sweep = v.split(',').map(|s| pair(key, s.trim())).collect::<Result<_, _>>()?;
            }
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; hashing it names the run directory.
    pub fn canonical(&self) -> String {
        let c = &self.corrector;
        let join = |v: &[String]| v.join(",");
        let f = |x: f64| format!("{x:e}");
        let tasks: Vec<String> = self.tasks.iter().map(|t| join(&t.values().into_iter().map(f).collect::<Vec<_>>())).collect();
        let ic = match self.model.ic_kind {
            IcKind::PeriodicGaussian => "gaussian",
            IcKind::MexicanHat => "mexican-hat",
        };
        let lines = [
            ("family.name", self.family.name().to_string()),
            ("family.ic", ic.into()),
            ("family.tasks", tasks.join(";")),
            ("model.m", self.model.m.to_string()),
            ("model.hidden", join(&self.model.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>())),
            ("model.encoder_width", self.model.encoder_width.to_string()),
            ("model.harmonics", self.model.harmonics.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.lr", f(self.train.lr)),
            ("train.tasks_per_batch", self.train.tasks_per_batch.to_string()),
            ("train.weight_decay", f(self.train.weight_decay)),
            ("train.interior", self.train.counts.interior.to_string()),
            ("corrector.m_inh", c.m_inh.to_string()),
            ("corrector.m_ref", c.m_ref.to_string()),
            ("corrector.background", format!("{}x{}", c.background.0, c.background.1)),
            ("corrector.probe", format!("{}x{}", c.probe.0, c.probe.1)),
            ("corrector.interior", format!("{}x{}", c.interior.0, c.interior.1)),
            ("corrector.anchor", c.anchor.to_string()),
            ("corrector.anchor_weight", f(c.weights.anchor)),
            ("corrector.n_ic", c.n_ic.to_string()),
            ("corrector.n_bc", c.n_bc.to_string()),
            ("corrector.snapshots", c.snapshots.to_string()),
            ("corrector.ridge", f(c.ridge)),
            ("corrector.ridge_grid", join(&c.ridge_grid.iter().map(|&r| f(r)).collect::<Vec<_>>())),
            ("eval.grid", format!("{}x{}", self.eval_grid.0, self.eval_grid.1)),
            ("eval.reference_n", self.reference_n.to_string()),
            ("ablate.sweep", join(&self.sweep.iter().map(|(a, b)| format!("{a}x{b}")).collect::<Vec<_>>())),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let d = Sha256::digest(self.canonical().as_bytes());
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// `<out>/<family>-<hash>-s<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!("{}-{}-s{}", self.family.name(), self.hash(), self.seed))
    }

    /// Checkpoint path: explicit, or inside the run directory.
    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.run_dir().join("model.kapi"))
    }
}

fn bad(key: &str, value: &str) -> ConfigError {
    ConfigError::BadValue { key: key.into(), value: value.into() }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.trim().parse().map_err(|_| bad(key, v))
}

fn positive(key: &str, v: &str) -> Result<usize, ConfigError> {
    match num::<usize>(key, v)? {
        0 => Err(bad(key, v)),
        n => Ok(n),
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s)).collect()
}

fn pair(key: &str, v: &str) -> Result<(usize, usize), ConfigError> {
    let (a, b) = v.split_once('x').ok_or_else(|| bad(key, v))?;
    Ok((num(key, a)?, num(key, b)?))
}
