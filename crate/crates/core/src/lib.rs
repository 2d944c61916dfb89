//! Model library for a tubular ethanol steam reformer: reaction kinetics,
//! the transformed quasi-linear system and its matrix pencils, a
//! characteristic (slowness-form) solver, and a method-of-lines solver for
//! the conservation/convection reformulation.

pub mod charsolver;
pub mod kinetics;
pub mod molsolver;
pub mod numcore;
pub mod pencil;
pub mod scenario;
pub mod statespace;
