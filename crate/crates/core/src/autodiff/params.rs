use rand::Rng;

use super::tape::{Tape, Var, VarSpan};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named flat arrays of parameters sharing one contiguous buffer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new array; returns its offset into the flat buffer.
    pub fn add(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> usize {
        assert_eq!(values.len(), shape.iter().product::<usize>(), "shape of {name}");
        assert!(self.entry(name).is_none(), "duplicate parameter {name}");
        let offset = self.data.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
        });
        self.data.extend(values);
        offset
    }

    /// Glorot-uniform matrix `[fan_out, fan_in]`.
    pub fn add_glorot(&mut self, name: &str, fan_out: usize, fan_in: usize, rng: &mut impl Rng) -> usize {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        self.add(name, &[fan_out, fan_in], values)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entry(name).map(|e| &self.data[e.offset..e.offset + e.len()])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let (offset, len) = self.entry(name).map(|e| (e.offset, e.len()))?;
        Some(&mut self.data[offset..offset + len])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Pushes every parameter as a leaf on `tape`.
    pub fn leaves(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            span: tape.leaves(&self.data),
        }
    }
}

/// The tape leaves of a [`ParamStore`], addressed by flat offset.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub span: VarSpan,
}

impl ParamVars {
    pub fn at(&self, offset: usize) -> Var {
        self.span.at(offset)
    }

    pub fn span(&self, offset: usize, len: usize) -> VarSpan {
        self.span.slice(offset, len)
    }
}
