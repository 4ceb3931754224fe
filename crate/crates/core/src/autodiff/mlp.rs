//! Fully connected tanh networks stored in a [`ParamStore`].

use rand::Rng;

use super::dual::{Dual, TapeDual};
use super::params::{ParamStore, ParamVars};
use super::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// `tanh` on every hidden layer, identity on the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub prefix: String,
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Registers layers `prefix.l{i}.w` / `prefix.l{i}.b` with Glorot weights
    /// and zero biases. `sizes` lists input, hidden and output widths.
    pub fn register(store: &mut ParamStore, prefix: &str, sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let weight = store.add_glorot(&format!("{prefix}.l{i}.w"), w[1], w[0], rng);
                let bias = store.add(&format!("{prefix}.l{i}.b"), &[w[1]], vec![0.0; w[1]]);
                Dense {
                    weight,
                    bias,
                    fan_in: w[0],
                    fan_out: w[1],
                }
            })
            .collect();
        Self {
            prefix: prefix.to_string(),
            layers,
        }
    }

    /// Rebuilds the layer list from parameter names and shapes.
    pub fn from_store(store: &ParamStore, prefix: &str) -> Option<Self> {
        let mut layers = Vec::new();
        for i in 0.. {
            let (Some(w), Some(b)) = (
                store.entry(&format!("{prefix}.l{i}.w")),
                store.entry(&format!("{prefix}.l{i}.b")),
            ) else {
                break;
            };
            if w.shape.len() != 2 || b.shape != [w.shape[0]] {
                return None;
            }
            layers.push(Dense {
                weight: w.offset,
                bias: b.offset,
                fan_in: w.shape[1],
                fan_out: w.shape[0],
            });
        }
        if layers.is_empty() || layers.windows(2).any(|p| p[0].fan_out != p[1].fan_in) {
            return None;
        }
        Some(Self {
            prefix: prefix.to_string(),
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    pub fn output_layer(&self) -> &Dense {
        self.layers.last().unwrap()
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let p = store.values();
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            h = (0..l.fan_out)
                .map(|i| {
                    let row = &p[l.weight + i * l.fan_in..l.weight + (i + 1) * l.fan_in];
                    let z = row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + p[l.bias + i];
                    if li < last {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
        }
        h
    }

    pub fn forward_dual(&self, store: &ParamStore, x: &[Dual]) -> Vec<Dual> {
        let p = store.values();
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            h = (0..l.fan_out)
                .map(|i| {
                    let row = &p[l.weight + i * l.fan_in..l.weight + (i + 1) * l.fan_in];
                    let mut z = Dual::constant(p[l.bias + i]);
                    for (w, v) in row.iter().zip(&h) {
                        z = z + v.scale(*w);
                    }
                    if li < last {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
        }
        h
    }

    pub fn forward_tape(&self, tape: &mut Tape, pv: ParamVars, x: &[Var]) -> Vec<Var> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            h = (0..l.fan_out)
                .map(|i| {
                    let row = pv.span(l.weight + i * l.fan_in, l.fan_in);
                    let z = tape.affine(row, &h, Some(pv.at(l.bias + i)));
                    if li < last {
                        tape.tanh(z)
                    } else {
                        z
                    }
                })
                .collect();
        }
        h
    }

    /// Pre-activations of the first layer restricted to input columns
    /// `from..`, plus bias. Used when those inputs do not depend on the
    /// forward-mode variable, so the partial sum can be shared.
    pub fn first_layer_partial(&self, tape: &mut Tape, pv: ParamVars, from: usize, x: &[Var]) -> Vec<Var> {
        let l = &self.layers[0];
        debug_assert_eq!(from + x.len(), l.fan_in);
        (0..l.fan_out)
            .map(|i| {
                let row = pv.span(l.weight + i * l.fan_in + from, x.len());
                tape.affine(row, x, Some(pv.at(l.bias + i)))
            })
            .collect()
    }

    /// Forward-over-reverse evaluation. The first `lead.len()` inputs carry
    /// tangents; the remaining inputs enter through `shared_pre`, as returned
    /// by [`Mlp::first_layer_partial`].
    pub fn forward_tape_dual(
        &self,
        tape: &mut Tape,
        pv: ParamVars,
        lead: &[TapeDual],
        shared_pre: &[Var],
    ) -> Vec<TapeDual> {
        let l0 = &self.layers[0];
        let zero = tape.constant(0.0);
        let mut h: Vec<TapeDual> = (0..l0.fan_out)
            .map(|i| {
                let row = pv.span(l0.weight + i * l0.fan_in, lead.len());
                let bias = TapeDual {
                    value: shared_pre[i],
                    tangent: zero,
                };
                tape.dual_affine(row, lead, Some(bias))
            })
            .collect();
        let last = self.layers.len() - 1;
        if last > 0 {
            h = h.into_iter().map(|z| tape.dual_tanh(z)).collect();
        }
        for (li, l) in self.layers.iter().enumerate().skip(1) {
            h = (0..l.fan_out)
                .map(|i| {
                    let row = pv.span(l.weight + i * l.fan_in, l.fan_in);
                    let bias = TapeDual {
                        value: pv.at(l.bias + i),
                        tangent: zero,
                    };
                    let z = tape.dual_affine(row, &h, Some(bias));
                    if li < last {
                        tape.dual_tanh(z)
                    } else {
                        z
                    }
                })
                .collect();
        }
        h
    }
}
