//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails. With `ACCEPTANCE_QUICK` set only
//! the training-free criteria run.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kapi_core::autodiff::{Mlp, ParamStore, Tape, TapeDual};
use kapi_core::corrector::{background_scaffold, solve_dictionary, CorrectorAtom, CorrectorConfig, CorrectorDictionary, ProblemData};
use kapi_core::geometry::{bubble, bubble_kernel, dynamic_packet_eval, planar_kernel, DynamicAtomState, PlanarAtom, SpaceTimeAtom};
use kapi_core::harness::{
    ablate_uniform_grid, prepare_model, reports_csv, run_predictor_corrector, ErrorReport, Mode, RunConfig,
};
use kapi_core::linalg::{norm_inf, ridge_lstsq, DenseMatrix};
use kapi_core::predictor::{Family, ModelConfig, PredictorModel, TaskParams};
use kapi_core::reference::{
    advdiff_exact, advection_exact, poisson_fd_with, varadv_exact, varadv_speed, IcKind, InitialCondition,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn ridge_optimality(rng: &mut ChaCha8Rng) -> (bool, f64) {
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let m = rng.gen_range(3..40);
        let n = rng.gen_range(1..=m.min(25));
        let data: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = DenseMatrix::from_row_major(m, n, data).unwrap();
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ridge = [0.0, 1e-10, 1e-8, 1e-4, 1e-1][k % 5];
        let c = ridge_lstsq(&a, &b, ridge).unwrap();
        let r: Vec<f64> = a.matvec(&c).iter().zip(&b).map(|(x, y)| x - y).collect();
        let g: Vec<f64> = a.tr_matvec(&r).iter().zip(&c).map(|(g, c)| g + ridge * c).collect();
        worst = worst.max(norm_inf(&g) / (norm_inf(&a.tr_matvec(&b)) + 1.0));
    }
    (worst <= 1e-8, worst)
}

fn atom_derivatives(rng: &mut ChaCha8Rng) -> (bool, f64) {
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for k in 0..1000 {
        let (x, y) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        match k % 4 {
            0 => {
                let (mx, my, s) = (rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.05..0.3));
                let f = |x, y| planar_kernel(mx, my, s, x, y);
                let [_, gx, gy, lap] = f(x, y);
                let fx = (f(x + h, y)[0] - f(x - h, y)[0]) / (2.0 * h);
                let fy = (f(x, y + h)[0] - f(x, y - h)[0]) / (2.0 * h);
                let fl = (f(x + h, y)[1] - f(x - h, y)[1] + f(x, y + h)[2] - f(x, y - h)[2]) / (2.0 * h);
                worst = worst.max(rel(gx, fx, 1.0)).max(rel(gy, fy, 1.0)).max(rel(lap, fl, 1.0));
            }
            1 => {
                let (mx, my, s) = (rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.05..0.3));
                // Gradient of T·φ by the product rule from the two factors.
                let grad = |x: f64, y: f64| {
                    let [t, tx, ty, _] = bubble(x, y);
                    let [phi, px, py, _] = planar_kernel(mx, my, s, x, y);
                    (tx * phi + t * px, ty * phi + t * py)
                };
                let (_, lap) = bubble_kernel(mx, my, s, x, y);
                let fd = (grad(x + h, y).0 - grad(x - h, y).0 + grad(x, y + h).1 - grad(x, y - h).1) / (2.0 * h);
                worst = worst.max(rel(lap, fd, 1.0));
            }
            2 => {
                let atom = SpaceTimeAtom {
                    xi: rng.gen_range(0.0..1.0),
                    h: rng.gen_range(0.03..0.2),
                    tau: rng.gen_range(0.0..1.0),
                    s: rng.gen_range(0.05..0.5),
                    velocity: rng.gen_range(-1.5..1.5),
                    periodic: rng.gen_bool(0.5),
                };
                let e = atom.eval(x, y);
                let fx = (atom.eval(x + h, y).phi - atom.eval(x - h, y).phi) / (2.0 * h);
                let fxx = (atom.eval(x + h, y).dx - atom.eval(x - h, y).dx) / (2.0 * h);
                let ft = (atom.eval(x, y + h).phi - atom.eval(x, y - h).phi) / (2.0 * h);
                worst = worst.max(rel(e.dx, fx, 1.0)).max(rel(e.dxx, fxx, 1.0)).max(rel(e.dt, ft, 1.0));
            }
            _ => {
                let base = DynamicAtomState {
                    alpha: rng.gen_range(-2.0..2.0),
                    xi: rng.gen_range(0.0..1.0),
                    h: rng.gen_range(0.03..0.2),
                    dalpha_dt: rng.gen_range(-1.0..1.0),
                    dxi_dt: rng.gen_range(-1.5..1.5),
                    dh_dt: rng.gen_range(-0.1..0.1),
                };
                let periodic = rng.gen_bool(0.5);
                let at = |dt: f64| DynamicAtomState {
                    alpha: base.alpha + dt * base.dalpha_dt,
                    xi: base.xi + dt * base.dxi_dt,
                    h: base.h + dt * base.dh_dt,
                    ..base
                };
                let e = dynamic_packet_eval(&base, x, periodic);
                let fx = (dynamic_packet_eval(&base, x + h, periodic).u - dynamic_packet_eval(&base, x - h, periodic).u) / (2.0 * h);
                let fxx = (dynamic_packet_eval(&base, x + h, periodic).du_dx - dynamic_packet_eval(&base, x - h, periodic).du_dx) / (2.0 * h);
                let ft = (dynamic_packet_eval(&at(h), x, periodic).u - dynamic_packet_eval(&at(-h), x, periodic).u) / (2.0 * h);
                worst = worst.max(rel(e.du_dx, fx, 1.0)).max(rel(e.d2u_dx2, fxx, 1.0)).max(rel(e.du_dt, ft, 1.0));
            }
        }
    }
    (worst <= 1e-6, worst)
}

fn autodiff_gradients(rng: &mut ChaCha8Rng) -> (bool, f64, f64) {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut store = ParamStore::new();
        let widths = [2, rng.gen_range(2..5), rng.gen_range(1..4), 1];
        let net = Mlp::register(&mut store, "net", &widths, rng);
        let pts: Vec<([f64; 2], f64)> = (0..5).map(|_| ([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(-1.0..1.0))).collect();
        let loss = |s: &ParamStore| pts.iter().map(|(x, y)| (net.forward(s, x)[0] - y).powi(2)).sum::<f64>();
        let mut tape = Tape::new();
        let pv = store.leaves(&mut tape);
        let mut terms = Vec::new();
        for (x, y) in &pts {
            let xs: Vec<_> = x.iter().map(|&v| tape.constant(v)).collect();
            let out = net.forward_tape(&mut tape, pv, &xs)[0];
            let d = tape.add_const(out, -y);
            terms.push(tape.mul(d, d));
        }
        let l = tape.sum(&terms);
        let g = tape.gradient(l, pv.span).unwrap();
        for k in 0..store.len() {
            let hh = 1e-6;
            let mut p = store.clone();
            p.values_mut()[k] += hh;
            let mut q = store.clone();
            q.values_mut()[k] -= hh;
            let fd = (loss(&p) - loss(&q)) / (2.0 * hh);
            worst = worst.max(rel(g[k], fd, 1e-3));
        }
    }
    // ∂/∂w of ∂/∂t tanh(w t) = sech² − 2wt sech² tanh.
    let mut mixed: f64 = 0.0;
    for &(w, t) in &[(1.0, 0.0), (0.5, 0.3), (-1.2, 0.7), (2.0, -0.4)] {
        let mut tape = Tape::new();
        let wv = tape.var(w);
        let wd = TapeDual { value: wv, tangent: tape.constant(0.0) };
        let td = tape.dual_const(t, 1.0);
        let p = tape.dual_mul(wd, td);
        let f = tape.dual_tanh(p);
        let g = tape.backward(f.tangent).unwrap()[wv.index()];
        let th = (w * t).tanh();
        let sech2 = 1.0 - th * th;
        mixed = mixed.max((g - (sech2 - 2.0 * w * t * sech2 * th)).abs());
    }
    (worst <= 1e-5 && mixed <= 1e-6, worst, mixed)
}

fn fd_order() -> (bool, f64) {
    let pi = std::f64::consts::PI;
    let err = |n: usize| {
        let u = poisson_fd_with(n, |x, y| 2.0 * pi * pi * (pi * x).sin() * (pi * y).sin()).unwrap();
        let mut e: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (u.x.at(i), u.y.at(j));
                e = e.max((u.get(i, j) - (pi * x).sin() * (pi * y).sin()).abs());
            }
        }
        e
    };
    let order = (err(65) / err(129)).log2();
    ((1.8..=2.2).contains(&order), order)
}

fn advdiff_residual(rng: &mut ChaCha8Rng) -> (bool, f64) {
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (a, nu) = (rng.gen_range(0.5..1.0), rng.gen_range(0.005..0.05));
        let (x, t) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.5));
        let s = 4.0 * t + 1.0;
        let z = x - 0.2 - a * t;
        let u = advdiff_exact(a, nu, x, t);
        let closed = (-z * z / (nu * s)).exp() / s.sqrt();
        let ux = u * (-2.0 * z / (nu * s));
        let uxx = u * (4.0 * z * z / (nu * s).powi(2) - 2.0 / (nu * s));
        let ut = u * (-2.0 / s + 2.0 * a * z / (nu * s) + 4.0 * z * z / (nu * s * s));
        worst = worst.max((ut + a * ux - nu * uxx).abs()).max((u - closed).abs());
    }
    (worst <= 1e-9, worst)
}

fn varadv_checks(rng: &mut ChaCha8Rng) -> (bool, f64, f64) {
    let mut same: f64 = 0.0;
    for _ in 0..200 {
        let ic = InitialCondition::gaussian(rng.gen_range(0.2..0.8), rng.gen_range(0.03..0.12));
        let (x, t) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        same = same.max((varadv_exact(&ic, 0.0, x, t, 1e-10).unwrap() - advection_exact(&ic, x, t)).abs());
    }
    let mut drift: f64 = 0.0;
    for _ in 0..50 {
        let beta = rng.gen_range(0.2..0.6);
        let ic = InitialCondition::gaussian(rng.gen_range(0.2..0.8), rng.gen_range(0.03..0.12));
        let x0: f64 = rng.gen_range(0.0..1.0);
        let steps = 2000;
        let dt = 1.0 / steps as f64;
        let mut x = x0;
        for k in 1..=steps {
            let f = |x: f64| varadv_speed(beta, x);
            let k1 = f(x);
            let k2 = f(x + 0.5 * dt * k1);
            let k3 = f(x + 0.5 * dt * k2);
            let k4 = f(x + dt * k3);
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if k % 400 == 0 {
                let t = k as f64 * dt;
                drift = drift.max((varadv_exact(&ic, beta, x.rem_euclid(1.0), t, 1e-10).unwrap() - ic.eval(x0)).abs());
            }
        }
    }
    (same <= 1e-9 && drift <= 1e-6, same, drift)
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (p1, ridge) = ridge_optimality(&mut rng);
    let (p2, atoms) = atom_derivatives(&mut rng);
    let (p3, ad, mixed) = autodiff_gradients(&mut rng);
    let (p4, order) = fd_order();
    let (p5, adv) = advdiff_residual(&mut rng);
    let (p6, beta0, chars) = varadv_checks(&mut rng);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        p1 && p2 && p3 && p4 && p5 && p6 && secs < 30.0,
        format!(
            "ridge {ridge:.2e}, atoms {atoms:.2e}, autodiff {ad:.2e}, mixed {mixed:.2e}, FD order {order:.3}, advdiff residual {adv:.2e}, varadv beta=0 {beta0:.2e}, characteristics {chars:.2e}, {secs:.1}s"
        ),
    )
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let target = PlanarAtom { mu_x: 0.42, mu_y: 0.57, sigma: 0.11 };
    let coef = 1.7;
    let task = TaskParams::Poisson { x0: 0.5, y0: 0.5, nu: 0.07 };
    let data = ProblemData {
        forcing: Box::new(move |x, y| -coef * bubble_kernel(target.mu_x, target.mu_y, target.sigma, x, y).1),
        ..ProblemData::for_task(&task, IcKind::PeriodicGaussian)
    };
    let dict = CorrectorDictionary::new(vec![CorrectorAtom::Planar(target)], Vec::new(), background_scaffold(Family::Poisson, 6, 6));
    let cfg = CorrectorConfig { anchor: 0, ..CorrectorConfig::default_for(Family::Poisson) };
    let c = solve_dictionary(dict, &data, None, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..101 {
        for i in 0..101 {
            let (x, y) = (i as f64 / 100.0, j as f64 / 100.0);
            worst = worst.max((c.eval(x, y) - coef * bubble_kernel(0.42, 0.57, 0.11, x, y).0).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(worst <= 1e-6 && secs < 10.0, format!("max evaluation error {worst:.2e}, residual {:.2e}, {secs:.2}s", c.residual_norm))
}

struct Run {
    reports: Vec<ErrorReport>,
    checkpoint: Vec<u8>,
    history: Vec<f64>,
    seconds: f64,
    cfg: RunConfig,
    model: PredictorModel,
}

fn run(family: Family, tasks: &[&[f64]], out: &std::path::Path) -> Run {
    let mut cfg = RunConfig::new(family, Mode::Solve);
    cfg.tasks = tasks.iter().map(|v| TaskParams::from_values(family, v).unwrap()).collect();
    cfg.out_dir = out.to_path_buf();
    cfg.seed = 7;
    let t0 = Instant::now();
    let prepared = prepare_model(&cfg, true, |_, _| {}).unwrap();
    let runs = run_predictor_corrector(&cfg, &prepared).unwrap();
    let seconds = t0.elapsed().as_secs_f64();
    Run {
        reports: runs.into_iter().map(|r| r.report).collect(),
        checkpoint: std::fs::read(cfg.checkpoint_path()).unwrap(),
        history: prepared.history.unwrap_or_default(),
        seconds,
        model: prepared.model,
        cfg,
    }
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    if std::env::var_os("ACCEPTANCE_QUICK").is_some() {
        println!("ACCEPTANCE_QUICK set: training criteria 3-8 not run");
        return;
    }

    let dir = tempfile::tempdir().unwrap();
    let poisson = run(Family::Poisson, &[&[0.5, 0.5, 0.07]], &dir.path().join("a"));
    let r = &poisson.reports[0];
    report(
        3,
        outcome(
            r.e_pred <= 8e-2 && r.e_corr <= 5e-3 && r.e_corr <= r.e_pred / 5.0 && poisson.seconds <= 900.0,
            format!("E_pred {:.3e}, E_corr {:.3e}, {:.0}s", r.e_pred, r.e_corr, poisson.seconds),
        ),
    );

    let mut all_reports: Vec<ErrorReport> = poisson.reports.clone();
    let mut cfg5 = poisson.cfg.clone();
    cfg5.tasks = vec![TaskParams::Poisson { x0: 0.5, y0: 0.5, nu: 0.03 }];
    let ab = &ablate_uniform_grid(&cfg5, &poisson.model).unwrap()[0];
    let (res, best) = ab.best_uniform().unwrap();
    let spread = format!("{}..{}", cfg5.sweep[0].0, cfg5.sweep[cfg5.sweep.len() - 1].0);

    let advdiff = run(Family::AdvDiff, &[&[0.75, 0.03], &[0.75, 0.008]], &dir.path().join("b"));
    let (a, b) = (&advdiff.reports[0], &advdiff.reports[1]);
    report(
        4,
        outcome(
            a.e_corr <= 5e-3 && b.e_corr <= 2e-2 && b.e_corr <= b.e_pred / 5.0 && advdiff.seconds <= 1800.0,
            format!(
                "(0.75,0.03) E_pred {:.3e} E_corr {:.3e}; (0.75,0.008) E_pred {:.3e} E_corr {:.3e}; {:.0}s",
                a.e_pred, a.e_corr, b.e_pred, b.e_corr, advdiff.seconds
            ),
        ),
    );
    all_reports.extend(advdiff.reports.iter().cloned());

    report(
        5,
        outcome(
            ab.guided <= best / 10.0,
            format!("guided {:.3e}, best uniform {best:.3e} at {}x{} (sweep {spread}), ratio {:.1}", ab.guided, res.0, res.1, best / ab.guided),
        ),
    );

    let advection = run(Family::Advection, &[&[0.5, 0.02]], &dir.path().join("c"));
    let r = &advection.reports[0];
    report(
        6,
        outcome(
            r.e_corr.is_finite() && r.e_corr <= 1.2 * r.e_pred,
            format!("E_pred {:.3e}, E_corr {:.3e}, ridge {:e}, {:.0}s", r.e_pred, r.e_corr, r.ridge, advection.seconds),
        ),
    );
    all_reports.extend(advection.reports.iter().cloned());

    let again = run(Family::Poisson, &[&[0.5, 0.5, 0.07]], &dir.path().join("d"));
    let strip = |v: &[ErrorReport]| reports_csv(&v.iter().map(|r| r.without_timing()).collect::<Vec<_>>());
    let same_ckpt = again.checkpoint == poisson.checkpoint;
    let same_report = strip(&again.reports) == strip(&poisson.reports);
    let same_hist = again.history.iter().map(|v| v.to_bits()).eq(poisson.history.iter().map(|v| v.to_bits()));
    report(
        7,
        outcome(
            same_ckpt && same_report && same_hist,
            format!("checkpoint identical {same_ckpt}, report identical {same_report}, history identical {same_hist}"),
        ),
    );
    all_reports.extend(again.reports.iter().cloned());

    let counts_ok = all_reports.iter().all(|r| r.m_lambda == r.m_inh + r.m_ref + r.m_bg);
    let (hard_ok, hard_worst) = hard_constraints();
    report(
        8,
        outcome(
            counts_ok && hard_ok,
            format!("M_lambda sums on {} reports: {counts_ok}; hard constraints on 100 models per family, worst {hard_worst:.2e}", all_reports.len()),
        ),
    );

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn hard_constraints() -> (bool, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        for family in Family::ALL {
            let cfg = ModelConfig { m: 8, hidden: vec![8, 8], encoder_width: 8, harmonics: 2, ..ModelConfig::paper(family) };
            let mut model = PredictorModel::new(family, &cfg, seed);
            for v in model.store.values_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
            let ranges = family.training_ranges();
            let vals: Vec<f64> = ranges.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
            let task = TaskParams::from_values(family, &vals).unwrap();
            let s: f64 = rng.gen();
            match task {
                TaskParams::Poisson { .. } => {
                    for (x, y) in [(0.0, s), (1.0, s), (s, 0.0), (s, 1.0)] {
                        worst = worst.max(model.predict(&task, x, y).abs());
                    }
                }
                TaskParams::Advection { .. } => {
                    worst = worst.max((model.predict(&task, 0.0, s) - model.predict(&task, 1.0, s)).abs());
                }
                TaskParams::VarAdv { x0, nu, .. } => {
                    worst = worst.max((model.predict(&task, 0.0, s) - model.predict(&task, 1.0, s)).abs());
                    worst = worst.max((model.predict(&task, s, 0.0) - InitialCondition::gaussian(x0, nu).eval(s)).abs());
                }
                TaskParams::AdvDiff { a, nu } => {
                    worst = worst.max((model.predict(&task, s, 0.0) - advdiff_exact(a, nu, s, 0.0)).abs());
                }
            }
        }
    }
    (worst <= 1e-12, worst)
}
