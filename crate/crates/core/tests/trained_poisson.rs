//! Checks that need a fully trained Poisson predictor (seed 7, M = 128,
//! 2000 epochs). Training runs once and is shared.

use std::sync::OnceLock;

use kapi_core::corrector::{build_dictionary, CorrectorAtom, CorrectorConfig, Provenance};
use kapi_core::harness::{geometry_csv, prepare_model, run_predictor_corrector, Mode, PreparedModel, RunConfig};
use kapi_core::predictor::{Family, TaskParams};

fn trained() -> &'static (RunConfig, PreparedModel) {
    static CELL: OnceLock<(RunConfig, PreparedModel)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(Family::Poisson, Mode::Solve);
        cfg.out_dir = dir.path().to_path_buf();
        let prepared = prepare_model(&cfg, true, |_, _| {}).unwrap();
        (cfg, prepared)
    })
}

#[test]
fn refinement_atoms_gather_around_an_offset_source() {
    let (cfg, prepared) = trained();
    let task = TaskParams::Poisson { x0: 0.3, y0: 0.3, nu: 0.06 };
    let d = build_dictionary(&prepared.model, &task, &cfg.corrector);
    let near = d
        .atoms
        .iter()
        .zip(&d.provenance)
        .filter(|(_, p)| **p == Provenance::Refinement)
        .filter(|(a, _)| match a {
            CorrectorAtom::Planar(p) => (p.mu_x - 0.3).hypot(p.mu_y - 0.3) <= 0.2,
            _ => false,
        })
        .count();
    assert!(2 * near >= d.m_ref(), "{near} of {}", d.m_ref());
}

#[test]
fn second_table_task_is_corrected_below_target() {
    let (cfg, prepared) = trained();
    let mut cfg = cfg.clone();
    cfg.tasks = vec![TaskParams::Poisson { x0: 0.45, y0: 0.55, nu: 0.09 }];
    let r = &run_predictor_corrector(&cfg, prepared).unwrap()[0].report;
    assert!(r.e_corr <= 5e-3, "{}", r.e_corr);
    assert!(r.e_corr < r.e_pred);
}

#[test]
fn trained_geometry_export_lists_every_atom() {
    let (_, prepared) = trained();
    let task = TaskParams::Poisson { x0: 0.5, y0: 0.5, nu: 0.07 };
    let csv = geometry_csv(&prepared.model, &task, 1, None);
    assert_eq!(csv.lines().count(), 1 + 128);
    let cfg = CorrectorConfig::default_for(Family::Poisson);
    let d = build_dictionary(&prepared.model, &task, &cfg);
    assert_eq!((d.m_inh(), d.m_ref(), d.m_bg()), (32, 32, 100));
}
