use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::predictor::{Family, TaskParams};
use crate::reference::varadv_speed;

/// Restricts some parameters to sub-ranges until `until` (a fraction of the
/// epochs) has elapsed.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumPhase {
    pub until: f64,
    pub overrides: Vec<(usize, (f64, f64))>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDistribution {
    pub family: Family,
    pub ranges: Vec<(f64, f64)>,
    pub log_uniform: Vec<bool>,
    pub curriculum: Vec<CurriculumPhase>,
}

impl TaskDistribution {
    /// Training ranges with `ν` log-uniform and the family's curriculum.
    pub fn default_for(family: Family) -> Self {
        let ranges = family.training_ranges();
        let nu = family.nu_index();
        let curriculum = match family {
            Family::AdvDiff => vec![CurriculumPhase { until: 0.5, overrides: vec![(nu, (0.03, 0.05))] }],
            Family::VarAdv => vec![CurriculumPhase { until: 0.4, overrides: vec![(nu, (0.06, 0.12))] }],
            _ => Vec::new(),
        };
        Self {
            family,
            log_uniform: (0..ranges.len()).map(|i| i == nu).collect(),
            ranges,
            curriculum,
        }
    }

    /// A distribution concentrated on a single task.
    pub fn fixed(task: &TaskParams) -> Self {
        let v = task.values();
        Self {
            family: task.family(),
            log_uniform: vec![false; v.len()],
            ranges: v.iter().map(|&x| (x, x)).collect(),
            curriculum: Vec::new(),
        }
    }

    /// Ranges in force at `epoch_fraction`.
    pub fn active_ranges(&self, epoch_fraction: f64) -> Vec<(f64, f64)> {
        let mut r = self.ranges.clone();
        if let Some(phase) = self.curriculum.iter().find(|p| epoch_fraction < p.until) {
            for &(i, range) in &phase.overrides {
                r[i] = range;
            }
        }
        r
    }
}

/// Maps `u ∈ [0, 1]` log-uniformly onto `[lo, hi]`.
pub fn log_uniform_map(u: f64, lo: f64, hi: f64) -> f64 {
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

pub fn sample_task(dist: &TaskDistribution, epoch_fraction: f64, rng: &mut impl Rng) -> TaskParams {
    let values: Vec<f64> = dist
        .active_ranges(epoch_fraction)
        .iter()
        .zip(&dist.log_uniform)
        .map(|(&(lo, hi), &log)| {
            let u: f64 = rng.gen();
            if lo == hi {
                lo
            } else if log {
                log_uniform_map(u, lo, hi)
            } else {
                lo + u * (hi - lo)
            }
        })
        .collect();
    TaskParams::from_values(dist.family, &values).expect("sampled parameters are valid")
}

/// Collocation sizes per task and step.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationCounts {
    pub interior: usize,
    /// Distinct times the interior points share (unsteady families).
    pub interior_times: usize,
    pub localized_fraction: f64,
    pub initial: usize,
    pub near_initial: usize,
    pub near_initial_times: usize,
}

impl CollocationCounts {
    pub fn default_for(family: Family) -> Self {
        Self {
            interior: 256,
            interior_times: if family.is_dynamic() { 16 } else { 1 },
            localized_fraction: 0.5,
            initial: if family.is_dynamic() { 64 } else { 0 },
            near_initial: if family == Family::Advection { 64 } else { 0 },
            near_initial_times: 4,
        }
    }
}

/// Upper end of the time window used for near-initial samples.
pub const NEAR_INITIAL_WINDOW: f64 = 0.1;

/// Points as `(x, y)` for Poisson and `(x, t)` otherwise. Unsteady sets are
/// stored in runs that share one time value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollocationSet {
    pub interior: Vec<(f64, f64)>,
    pub boundary: Vec<(f64, f64)>,
    pub initial: Vec<(f64, f64)>,
    pub near_initial: Vec<(f64, f64)>,
}

/// Center and width of the task's localized feature at time `t`.
pub fn feature_location(task: &TaskParams, t: f64) -> (f64, f64) {
    match *task {
        TaskParams::Poisson { x0, nu, .. } => (x0, nu),
        TaskParams::Advection { x0, nu } => ((x0 + t).rem_euclid(1.0), nu),
        TaskParams::AdvDiff { a, nu } => (0.2 + a * t, (nu * (4.0 * t + 1.0) / 2.0).sqrt()),
        TaskParams::VarAdv { x0, nu, beta } => {
            let steps = 20;
            let dt = t / steps as f64;
            let f = |x: f64| varadv_speed(beta, x);
            let mut x = x0;
            for _ in 0..steps {
                let k1 = f(x);
                let k2 = f(x + 0.5 * dt * k1);
                let k3 = f(x + 0.5 * dt * k2);
                let k4 = f(x + dt * k3);
                x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            (x.rem_euclid(1.0), nu)
        }
    }
}

fn place(x: f64, periodic: bool) -> f64 {
    if periodic {
        x.rem_euclid(1.0)
    } else {
        x.clamp(0.0, 1.0)
    }
}

fn spatial_points(task: &TaskParams, t: f64, n: usize, frac: f64, rng: &mut impl Rng) -> Vec<f64> {
    let periodic = task.family().is_periodic();
    let (c, w) = feature_location(task, t);
    let normal = Normal::new(0.0, 2.0 * w).expect("positive width");
    let n_loc = (n as f64 * frac).round() as usize;
    (0..n)
        .map(|k| {
            if k < n_loc {
                place(c + normal.sample(rng), periodic)
            } else {
                let x: f64 = rng.gen();
                x
            }
        })
        .collect()
}

pub fn sample_collocation(task: &TaskParams, counts: &CollocationCounts, rng: &mut impl Rng) -> CollocationSet {
    let family = task.family();
    let mut set = CollocationSet::default();
    if family == Family::Poisson {
        let TaskParams::Poisson { x0, y0, nu } = *task else { unreachable!() };
        let normal = Normal::new(0.0, 2.0 * nu).expect("positive width");
        let n_loc = (counts.interior as f64 * counts.localized_fraction).round() as usize;
        for k in 0..counts.interior {
            let p = if k < n_loc {
                (place(x0 + normal.sample(rng), false), place(y0 + normal.sample(rng), false))
            } else {
                (rng.gen(), rng.gen())
            };
            set.interior.push(p);
        }
        return set;
    }
    let horizon = family.horizon();
    let n_times = counts.interior_times.max(1);
    let per_time = counts.interior.div_ceil(n_times);
    for _ in 0..n_times {
        let t = horizon * (1.0 - rng.gen::<f64>());
        for x in spatial_points(task, t, per_time, counts.localized_fraction, rng) {
            set.interior.push((x, t));
        }
        set.boundary.push((0.0, t));
        if !family.is_periodic() {
            set.boundary.push((1.0, t));
        }
    }
    let n_near = counts.near_initial_times.max(1);
    if counts.near_initial > 0 {
        let per_time = counts.near_initial.div_ceil(n_near);
        for _ in 0..n_near {
            let t = NEAR_INITIAL_WINDOW * (1.0 - rng.gen::<f64>());
            for x in spatial_points(task, t, per_time, counts.localized_fraction, rng) {
                set.near_initial.push((x, t));
            }
        }
    }
    for x in spatial_points(task, 0.0, counts.initial, counts.localized_fraction, rng) {
        set.initial.push((x, 0.0));
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_uniform_endpoints() {
        assert!((log_uniform_map(0.0, 0.05, 0.1) - 0.05).abs() < 1e-15);
        assert!((log_uniform_map(1.0, 0.05, 0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn advdiff_curriculum_first_half() {
        let d = TaskDistribution::default_for(Family::AdvDiff);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let nu = sample_task(&d, 0.25, &mut rng).nu();
            assert!((0.03..=0.05).contains(&nu));
        }
        let late: Vec<f64> = (0..500).map(|_| sample_task(&d, 0.75, &mut rng).nu()).collect();
        assert!(late.iter().any(|&v| v < 0.03));
    }

    #[test]
    fn log_uniform_median_is_geometric_mean() {
        let d = TaskDistribution::default_for(Family::Poisson);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut nus: Vec<f64> = (0..100_000).map(|_| sample_task(&d, 0.5, &mut rng).nu()).collect();
        nus.sort_by(f64::total_cmp);
        let median = nus[nus.len() / 2];
        let expect = (0.05f64 * 0.10).sqrt();
        assert!((median / expect - 1.0).abs() < 0.02, "median {median}");
    }

    #[test]
    fn uniform_interior_is_centered() {
        let task = TaskParams::Poisson { x0: 0.5, y0: 0.5, nu: 0.07 };
        let counts = CollocationCounts { interior: 4000, localized_fraction: 0.0, ..CollocationCounts::default_for(Family::Poisson) };
        let set = sample_collocation(&task, &counts, &mut ChaCha8Rng::seed_from_u64(3));
        let mean = set.interior.iter().map(|p| p.0).sum::<f64>() / 4000.0;
        let sd = (1.0f64 / 12.0 / 4000.0).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sd);
    }

    #[test]
    fn localized_interior_is_near_source() {
        let task = TaskParams::Poisson { x0: 0.5, y0: 0.5, nu: 0.07 };
        let counts = CollocationCounts { interior: 2000, localized_fraction: 1.0, ..CollocationCounts::default_for(Family::Poisson) };
        let set = sample_collocation(&task, &counts, &mut ChaCha8Rng::seed_from_u64(4));
        let inside = set.interior.iter().filter(|p| ((p.0 - 0.5).powi(2) + (p.1 - 0.5).powi(2)).sqrt() <= 0.42).count();
        assert!(inside as f64 >= 0.95 * 2000.0);
    }

    #[test]
    fn unsteady_sets_stay_in_their_domains() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for task in [
            TaskParams::Advection { x0: 0.7, nu: 0.1 },
            TaskParams::AdvDiff { a: 0.9, nu: 0.02 },
            TaskParams::VarAdv { x0: 0.3, nu: 0.05, beta: 0.5 },
        ] {
            let f = task.family();
            let set = sample_collocation(&task, &CollocationCounts::default_for(f), &mut rng);
            assert_eq!(set.interior.len(), 256);
            assert_eq!(set.initial.len(), 64);
            assert!(set.interior.iter().all(|&(x, t)| (0.0..=1.0).contains(&x) && t > 0.0 && t <= f.horizon()));
            assert!(set.near_initial.iter().all(|&(_, t)| t > 0.0 && t <= NEAR_INITIAL_WINDOW));
            assert!(set.initial.iter().all(|&(_, t)| t == 0.0));
            if f == Family::Advection {
                assert_eq!(set.near_initial.len(), 64);
                assert_eq!(set.boundary.len(), 16);
            }
            if f == Family::AdvDiff {
                assert_eq!(set.boundary.len(), 32);
            }
        }
    }
}
