use super::*;
use crate::predictor::ModelConfig;

fn field(values: Vec<f64>) -> SampledField {
    SampledField { x: Axis::new(0.0, 1.0, values.len()), y: Axis::new(0.0, 1.0, 1), values }
}

#[test]
fn relative_l2_examples() {
    let r = field(vec![1.0, -2.0, 3.0]);
    assert_eq!(relative_l2(&r, &r).unwrap(), 0.0);
    let twice = field(r.values.iter().map(|v| 2.0 * v).collect());
    assert!((relative_l2(&twice, &r).unwrap() - 1.0).abs() < 1e-15);
    assert!((relative_l2(&field(vec![0.0; 3]), &r).unwrap() - 1.0).abs() < 1e-15);
    assert!(matches!(relative_l2(&r, &field(vec![0.0; 3])), Err(HarnessError::ZeroReference)));
    assert!(matches!(relative_l2(&field(vec![1.0; 2]), &r), Err(HarnessError::GridMismatch)));
}

#[test]
fn poisson_reference_sampling_matches_nodes_and_interpolation() {
    let task = TaskParams::Poisson { x0: 0.5, y0: 0.5, nu: 0.08 };
    let nested = reference_field(&task, IcKind::PeriodicGaussian, (11, 11), 41).unwrap();
    let fd = poisson_fd(&[GaussianSource::new(0.5, 0.5, 0.08)], 41).unwrap();
    assert_eq!(nested.get(5, 5), fd.get(20, 20));
    let off = reference_field(&task, IcKind::PeriodicGaussian, (13, 13), 41).unwrap();
    assert_eq!(off.get(0, 0), 0.0);
    assert!((off.get(6, 6) - fd.get(20, 20)).abs() < 1e-12);
}

#[test]
fn config_parses_sections_and_rejects_garbage() {
    let text = "family.name = poisson  # comment\n\nmodel.m = 16\ntrain.epochs = 3\ncorrector.background = 6x5\nfamily.tasks = 0.5,0.5,0.07; 0.4,0.6,0.05\nablate.sweep = 4x4,8x8\nrun.seed = 11\n";
    let cfg = RunConfig::parse(text, Mode::Solve).unwrap();
    assert_eq!(cfg.model.m, 16);
    assert_eq!(cfg.train.epochs, 3);
    assert_eq!(cfg.corrector.background, (6, 5));
    assert_eq!(cfg.tasks.len(), 2);
    assert_eq!(cfg.sweep, vec![(4, 4), (8, 8)]);
    assert_eq!(effective_train_config(&cfg).seed, 11);
    assert!(matches!(RunConfig::parse("model.m = 3\n", Mode::Solve), Err(ConfigError::Missing(_))));
    assert!(matches!(RunConfig::parse("family.name = poisson\nbogus = 1\n", Mode::Solve), Err(ConfigError::UnknownKey(_))));
    assert!(matches!(RunConfig::parse("family.name = poisson\nmodel.m\n", Mode::Solve), Err(ConfigError::Syntax { line: 2 })));
    assert!(matches!(RunConfig::parse("family.name = advection\nfamily.tasks = 0.5,0.5,0.07\n", Mode::Solve), Err(ConfigError::BadTask(_))));
    assert!(matches!(RunConfig::parse("family.name = poisson\nmodel.m = 0\n", Mode::Solve), Err(ConfigError::BadValue { .. })));
}

#[test]
fn run_dir_depends_on_config_and_seed() {
    let a = RunConfig::new(Family::Poisson, Mode::Solve);
    let mut b = a.clone();
    b.seed = 8;
    let mut c = a.clone();
    c.corrector.ridge = 1e-6;
    assert_ne!(a.run_dir(), b.run_dir());
    assert_ne!(a.hash(), c.hash());
    assert_eq!(a.hash(), RunConfig::parse(&a.canonical(), Mode::Train).unwrap().hash());
}

#[test]
fn geometry_export_has_one_row_per_atom_and_snapshot() {
    let task = TaskParams::Poisson { x0: 0.5, y0: 0.5, nu: 0.07 };
    let model = PredictorModel::new(Family::Poisson, &ModelConfig::paper(Family::Poisson), 1);
    let csv = geometry_csv(&model, &task, 1, None);
    assert_eq!(csv.lines().count(), 129);
    let max = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert_eq!(max, 1.0);
    let task = TaskParams::Advection { x0: 0.5, nu: 0.07 };
    let model = PredictorModel::new(Family::Advection, &ModelConfig { hidden: vec![8], encoder_width: 8, ..ModelConfig::paper(Family::Advection) }, 1);
    assert_eq!(geometry_csv(&model, &task, 8, None).lines().count(), 1 + 32 * 8);
}

fn tiny_run(family: Family, dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::new(family, Mode::Solve);
    cfg.model = ModelConfig { m: 8, hidden: vec![8], encoder_width: 8, harmonics: 1, ..ModelConfig::paper(family) };
    cfg.train.epochs = 0;
    cfg.tasks.truncate(1);
    cfg.eval_grid = if family == Family::Poisson { (21, 21) } else { (41, 21) };
    cfg.reference_n = 81;
    cfg.out_dir = dir.to_path_buf();
    cfg
}

#[test]
fn reports_are_well_formed_and_count_columns() {
    let dir = tempfile::tempdir().unwrap();
    for family in Family::ALL {
        let cfg = tiny_run(family, dir.path());
        let prepared = prepare_model(&cfg, true, |_, _| {}).unwrap();
        let runs = run_predictor_corrector(&cfg, &prepared).unwrap();
        let r = &runs[0].report;
        assert_eq!(r.m_lambda, r.m_inh + r.m_ref + r.m_bg);
        assert!(r.e_pred >= 0.0 && r.e_corr >= 0.0);
        let csv = reports_csv(std::slice::from_ref(r));
        assert_eq!(csv.lines().next().unwrap(), REPORT_HEADER);
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), REPORT_HEADER.split(',').count());
    }
}

#[test]
fn single_resolution_sweep_reports_that_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_run(Family::Poisson, dir.path());
    cfg.sweep = vec![(6, 6)];
    let prepared = prepare_model(&cfg, true, |_, _| {}).unwrap();
    let rows = ablate_uniform_grid(&cfg, &prepared.model).unwrap();
    assert_eq!(rows[0].uniform.len(), 1);
    assert_eq!(rows[0].best_uniform(), Some(rows[0].uniform[0]));
}

#[test]
fn zero_epoch_instance_ablation_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_run(Family::Advection, dir.path());
    let prepared = prepare_model(&cfg, true, |_, _| {}).unwrap();
    let rows = ablate_single_instance(&cfg, &prepared).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(!rows[0].retraining && rows[1].retraining);
    assert!(rows[1].error.is_finite());
    let csv = instance_ablation_csv(&rows);
    assert!(csv.lines().nth(1).unwrap().ends_with(",no"));
    assert!(csv.lines().nth(2).unwrap().ends_with(",yes"));
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("p.cfg");
    std::fs::write(&cfg_path, "family.name = poisson\nmodel.m = 4\nmodel.hidden = 4\ntrain.epochs = 2\nfamily.tasks = 0.5,0.5,0.07\neval.grid = 21x21\neval.reference_n = 41\n").unwrap();
    let c = cfg_path.to_str().unwrap();
    let out = dir.path().join("runs");
    let o = out.to_str().unwrap();
    assert_eq!(cli::main_with_args(["kapi", "frobnicate"]), 1);
    assert_eq!(cli::main_with_args(["kapi", "eval", "--config", c, "--out", o]), 1);
    assert_eq!(cli::main_with_args(["kapi", "solve", "--config", "/nonexistent.cfg"]), 1);
    assert_eq!(cli::main_with_args(["kapi", "train", "--config", c, "--out", o, "--seed", "7", "--log-every", "0"]), 0);
    assert_eq!(cli::main_with_args(["kapi", "eval", "--config", c, "--out", o, "--seed", "7"]), 0);
    let run = std::fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    for f in ["model.kapi", "loss_history.txt", "report.csv", "dictionary_0.txt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    std::fs::write(&cfg_path, "family.name = poisson\nfamily.tasks = 0.5,0.5,-1\n").unwrap();
    assert_eq!(cli::main_with_args(["kapi", "solve", "--config", c, "--out", o]), 1);
}
