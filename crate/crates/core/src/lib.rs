//! Parallel replica (ParRep) acceleration for metastable continuous-time
//! Markov chains, with a focus on stochastic reaction networks.
//!
//! The crate provides the CTMC-level engine and the embedded-chain engine,
//! rejection and Fleming-Viot dephasing, a Gillespie kernel, and a dense
//! linear-algebra oracle for quasi-stationary distributions on small chains.

pub mod dephase;
pub mod engine;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod harness;
pub mod label;
pub mod model;
pub mod oracle;
pub mod parse;
pub mod rng;
pub mod ssa;
pub mod stats;
pub mod validate;

pub use error::{Error, Result};
pub use model::{
    embedded_matrix, ConstantObservable, Dynamics, ExplicitChain, Observable, ObservableSpec,
    PopulationState, Propensity, Reaction, ReactionNetwork, StateFunction,
};
pub use exec::Executor;
pub use label::{Label, Labeler, MetastableLabeler, SetLabeler};
pub use rng::{CycleStreams, Role, RngStream};
