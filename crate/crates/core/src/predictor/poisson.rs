use crate::autodiff::{sigmoid, softplus, ParamVars, Tape, Var};
use crate::geometry::{bubble, bubble_kernel, planar_kernel, PlanarAtom, WIDTH_FLOOR};

use super::{PredictorModel, TaskParams};

/// Static Poisson basis for one task: `u = T Σ g_j c_j φ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonGeometry {
    pub atoms: Vec<PlanarAtom>,
    pub gates: Vec<f64>,
    pub coefs: Vec<f64>,
}

impl PoissonGeometry {
    /// `(u, Δu)` with the bubble factor included.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let (mut u, mut lap) = (0.0, 0.0);
        for ((a, g), c) in self.atoms.iter().zip(&self.gates).zip(&self.coefs) {
            let (v, l) = bubble_kernel(a.mu_x, a.mu_y, a.sigma, x, y);
            u += g * c * v;
            lap += g * c * l;
        }
        (u, lap)
    }

    /// `[u, u_x, u_y, Δu]` with the bubble factor included.
    pub fn eval_full(&self, x: f64, y: f64) -> [f64; 4] {
        let [t, tx, ty, _] = bubble(x, y);
        let mut out = [0.0; 4];
        for ((a, g), c) in self.atoms.iter().zip(&self.gates).zip(&self.coefs) {
            let w = g * c;
            let [phi, px, py, _] = planar_kernel(a.mu_x, a.mu_y, a.sigma, x, y);
            let (_, l) = bubble_kernel(a.mu_x, a.mu_y, a.sigma, x, y);
            out[0] += w * t * phi;
            out[1] += w * (tx * phi + t * px);
            out[2] += w * (ty * phi + t * py);
            out[3] += w * l;
        }
        out
    }
}

/// Tape handles for the Poisson geometry of one task.
#[derive(Debug, Clone)]
pub struct PoissonTapeGeometry {
    pub mu_x: Vec<Var>,
    pub mu_y: Vec<Var>,
    pub sigma: Vec<Var>,
    pub gate: Vec<Var>,
    pub coef: Vec<Var>,
}

impl PredictorModel {
    fn poisson_raw(&self, task: &TaskParams) -> Vec<f64> {
        match &self.nets.meta {
            Some(meta) => meta.forward(&self.store, &self.normalize(task)),
            None => self.store.get("inst.raw").unwrap().to_vec(),
        }
    }

    pub fn poisson_geometry(&self, task: &TaskParams) -> PoissonGeometry {
        let m = self.m;
        let raw = self.poisson_raw(task);
        PoissonGeometry {
            atoms: (0..m)
                .map(|j| PlanarAtom {
                    mu_x: sigmoid(raw[j]),
                    mu_y: sigmoid(raw[m + j]),
                    sigma: softplus(raw[2 * m + j]) + WIDTH_FLOOR,
                })
                .collect(),
            gates: raw[3 * m..].iter().map(|&r| sigmoid(r)).collect(),
            coefs: self.store.get("coef").unwrap().to_vec(),
        }
    }

    pub fn poisson_geometry_tape(&self, tape: &mut Tape, pv: ParamVars, task: &TaskParams) -> PoissonTapeGeometry {
        let m = self.m;
        let raw: Vec<Var> = match &self.nets.meta {
            Some(meta) => {
                let lam: Vec<Var> = self.normalize(task).iter().map(|&v| tape.constant(v)).collect();
                meta.forward_tape(tape, pv, &lam)
            }
            None => {
                let off = self.store.entry("inst.raw").unwrap().offset;
                (0..4 * m).map(|k| pv.at(off + k)).collect()
            }
        };
        let coef_off = self.store.entry("coef").unwrap().offset;
        let sig = |tape: &mut Tape, r: &[Var]| r.iter().map(|&v| tape.sigmoid(v)).collect::<Vec<_>>();
        let mu_x = sig(tape, &raw[..m]);
        let mu_y = sig(tape, &raw[m..2 * m]);
        let gate = sig(tape, &raw[3 * m..]);
        let sigma = raw[2 * m..3 * m]
            .iter()
            .map(|&v| {
                let s = tape.softplus(v);
                tape.add_const(s, WIDTH_FLOOR)
            })
            .collect();
        PoissonTapeGeometry {
            mu_x,
            mu_y,
            sigma,
            gate,
            coef: (0..m).map(|j| pv.at(coef_off + j)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::jitter;
    use super::super::{Family, ModelConfig};
    use super::*;

    #[test]
    fn single_atom_closed_form() {
        let g = PoissonGeometry {
            atoms: vec![PlanarAtom { mu_x: 0.5, mu_y: 0.5, sigma: 1.0 }],
            gates: vec![1.0],
            coefs: vec![1.0],
        };
        let (u, lap) = g.eval(0.5, 0.5);
        assert!((u - 0.0625).abs() < 1e-15);
        assert!((lap + 1.25).abs() < 1e-14);
        // Independent check by a five-point difference of u.
        let h = 1e-4;
        let fd = (g.eval(0.5 + h, 0.5).0 + g.eval(0.5 - h, 0.5).0 + g.eval(0.5, 0.5 + h).0 + g.eval(0.5, 0.5 - h).0 - 4.0 * u) / (h * h);
        assert!((fd + 1.25).abs() < 1e-6);
    }

    #[test]
    fn laplacian_matches_five_point_difference() {
        let cfg = ModelConfig { m: 10, hidden: vec![6], ..ModelConfig::paper(Family::Poisson) };
        let mut model = PredictorModel::new(Family::Poisson, &cfg, 1);
        jitter(&mut model, 2, 0.4);
        let task = TaskParams::Poisson { x0: 0.45, y0: 0.55, nu: 0.08 };
        let g = model.poisson_geometry(&task);
        for &(x, y) in &[(0.3, 0.4), (0.5, 0.5), (0.71, 0.62), (0.1, 0.9)] {
            let (u, lap) = g.eval(x, y);
            let h = 1e-4;
            let fd = (g.eval(x + h, y).0 + g.eval(x - h, y).0 + g.eval(x, y + h).0 + g.eval(x, y - h).0 - 4.0 * u) / (h * h);
            assert!((fd - lap).abs() <= 1e-5 * lap.abs().max(1.0), "{fd} vs {lap}");
        }
        for &(x, y) in &[(0.3, 0.4), (0.62, 0.21)] {
            let [u, ux, uy, lap] = g.eval_full(x, y);
            let h = 1e-6;
            assert!((u - g.eval(x, y).0).abs() < 1e-15 && (lap - g.eval(x, y).1).abs() < 1e-12);
            assert!((ux - (g.eval(x + h, y).0 - g.eval(x - h, y).0) / (2.0 * h)).abs() < 1e-7);
            assert!((uy - (g.eval(x, y + h).0 - g.eval(x, y - h).0) / (2.0 * h)).abs() < 1e-7);
        }
        for &s in &[0.0, 0.3, 1.0] {
            assert_eq!(g.eval(0.0, s).0, 0.0);
        }
    }

    #[test]
    fn tape_and_plain_geometry_agree() {
        let cfg = ModelConfig { m: 7, hidden: vec![5, 5], ..ModelConfig::paper(Family::Poisson) };
        let mut model = PredictorModel::new(Family::Poisson, &cfg, 3);
        jitter(&mut model, 4, 0.2);
        let task = TaskParams::Poisson { x0: 0.41, y0: 0.58, nu: 0.06 };
        let g = model.poisson_geometry(&task);
        let mut tape = Tape::new();
        let pv = model.store.leaves(&mut tape);
        let tg = model.poisson_geometry_tape(&mut tape, pv, &task);
        for j in 0..7 {
            assert!((tape.value(tg.mu_x[j]) - g.atoms[j].mu_x).abs() < 1e-15);
            assert!((tape.value(tg.sigma[j]) - g.atoms[j].sigma).abs() < 1e-15);
            assert!((tape.value(tg.gate[j]) - g.gates[j]).abs() < 1e-15);
            assert_eq!(tape.value(tg.coef[j]), g.coefs[j]);
        }
    }
}
