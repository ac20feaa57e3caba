//! Numerical laboratory for channel circuits that connect Gibbs states of
//! local Hamiltonians inside a thermal phase.
//!
//! Everything is dense and exact at desk scale (a dozen qubits at most).
//! The crate is organised bottom-up: [`qcore`] holds operators, states and
//! channels; [`model`] builds lattices and Gibbs states; the remaining
//! modules implement recovery maps, belief propagation, circuits,
//! Lindbladian flows, stabilizer combinatorics and the memory experiment.

pub mod audit;
pub mod circuits;
pub mod correlations;
pub mod error;
pub mod lindblad;
pub mod memory;
pub mod model;
pub mod qbp;
pub mod qcore;
pub mod recovery;
pub mod stabilizer;
pub mod verify;

pub use audit::{Audit, AuditSet};
pub use circuits::{ChannelCircuit, CircuitLedger, VariationStep};
pub use correlations::{ClusteringFit, CovarianceEstimate, Restriction};
pub use error::{GlabError, Result};
pub use lindblad::LocalLindbladian;
pub use memory::{MemoryRun, QuantumCode};
pub use model::{AnnulusPartition, BlockPartition, InteractionFamily, Lattice, Region};
pub use qbp::QbpFilter;
pub use qcore::channel::{ChannelGate, GateKind};
pub use qcore::linalg::{Mat, C64};
pub use qcore::operator::{DenseOperator, DenseState};
pub use qcore::pauli::PauliWord;
pub use recovery::{Quadrature, RecoveryMap};
pub use stabilizer::StabilizerModel;
pub use verify::{CriterionReport, VerifyOptions};
