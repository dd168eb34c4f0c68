//! Finite factual probability laws, a finite-dimensional quantum oracle,
//! generation/measurement successions, probability trees, state
//! reconstruction from measured laws, and pilot-wave guidance checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dbb;
pub mod error;
pub mod finprob;
pub mod genesis;
pub mod hilbert;
pub mod histogram;
pub mod probtree;
pub mod reconstruct;
pub mod rng;
pub mod serde_complex;

pub use error::{Error, Result};
pub use finprob::{FactualLaw, LawParams, OutcomeLabel, StabilityVerdict};
pub use genesis::{CodedOutcome, GenerationOp, PreparedGeneration, Specimen};
pub use hilbert::{HamiltonianSpec, ObservableSpec, OracleState, TransformMatrix, C64};
pub use probtree::{CompatibilityGroup, MetaCorrelationRecord, ProbabilityTree};
pub use reconstruct::{Ambiguity, ExpansionSet, RetrievalConfig, RetrievalReport};
