//! Predictor-corrector solver for parametric linear PDEs.
//!
//! A shallow Gaussian-basis predictor, whose basis geometry is generated
//! from the PDE parameters by a small conditioning network, is trained with
//! physics-informed losses over a family of tasks. For each new task the
//! predicted geometry seeds a frozen, enriched dictionary, and a single
//! ridge-regularized least-squares collocation solve produces the corrected
//! solution.

pub mod autodiff;
pub mod geometry;
pub mod linalg;
pub mod predictor;
pub mod reference;
pub mod training;
pub mod corrector;
pub mod harness;
