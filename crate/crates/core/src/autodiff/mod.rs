//! Scalar automatic differentiation: a reverse-mode tape for weight
//! gradients and forward-mode duals (plain or recorded on the tape) for
//! derivatives with respect to time.

mod dual;
mod mlp;
mod params;
mod tape;

pub use dual::{Dual, Jet, TapeDual};
pub use mlp::{Dense, Mlp};
pub use params::{ParamEntry, ParamStore, ParamVars};
pub use tape::{logit, sigmoid, softplus, softplus_inv, Op, Tape, Var, VarSpan};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("non-finite adjoint at tape node {node}")]
    NaNDetected { node: usize },
}
