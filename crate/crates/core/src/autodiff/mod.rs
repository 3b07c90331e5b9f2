//! Reverse-mode differentiation.
//!
//! Network code is written once against [`Graph`]. [`Tape`] records every
//! operation for a later [`Tape::backward`] pass; [`Eval`] computes values
//! only and keeps nothing alive.

mod fd;
mod graph;
mod tape;

pub use fd::{finite_diff_check, finite_diff_check_at, relative_error};
pub use graph::{Eval, Graph};
pub use tape::{Gradients, OpKind, Tape, Var};
