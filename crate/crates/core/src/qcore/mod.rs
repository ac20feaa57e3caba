//! Dense exact kernel: operators, states, matrix functions, channels.

pub mod channel;
pub mod gf2;
pub mod info;
pub mod linalg;
pub mod operator;
pub mod pauli;

pub use channel::{induced_trace_norm, AffineGate, ChannelGate, GateKind, LinearMap, NormAscent, SuperOp};
pub use info::{cmi, entropy_of, fidelity, mutual_information};
pub use linalg::{matrix_function, trace_norm, MatFn, Mat, C64};
pub use pauli::PauliWord;
pub use operator::{DenseOperator, DenseState, STATE_TOL, STATE_TOL_LOOSE};

use crate::error::Result;

/// Apply a gate to a state.
pub fn apply_gate(state: &DenseState, gate: &ChannelGate) -> Result<DenseState> {
    gate.apply(state)
}

/// Partial trace keeping `keep`.
pub fn partial_trace(state: &DenseState, keep: &[usize]) -> Result<DenseState> {
    state.marginal(keep)
}
