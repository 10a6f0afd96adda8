//! Circuit cutting engine: circuit IR and generators, a noisy statevector
//! simulator, quasi-probability decompositions for gate and wire cuts,
//! cut-selection strategies and the benchmark harness.

pub mod circuit;
pub mod config;
pub mod cutfind;
pub mod error;
pub mod harness;
pub mod observables;
pub mod qpd;
pub mod simulator;

pub use circuit::{Circuit, Gate, GateKind, InteractionGraph, PrepState};
pub use config::CliConfig;
pub use cutfind::{CutBudget, PresetConfig, ScoreWeights, StrategyOutcome};
pub use error::{CutError, Result};
pub use harness::{Family, ObservableFamily, RunRecord, Strategy, SweepConfig};
pub use observables::{Observable, Pauli, PauliString};
pub use qpd::{CutLocation, CutPlan, ReconstructionMode};
pub use simulator::{Counts, NoiseProfile, StateVector};
