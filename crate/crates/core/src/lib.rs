//! Quantum computation powered by a shared bosonic-mode battery.
//!
//! The crate simulates `N` qubits coupled to one bosonic mode prepared in a
//! Fock state, synthesizes gates from piecewise-constant detuning schedules
//! and evaluates the cryogenic heat budget of the resulting architecture.
//!
//! Units: `ħ = 1`, the coupling `g` sets the frequency scale and times are in
//! `1/g`. The heat-budget module works in SI units.

pub mod basis;
pub mod circuits;
pub mod error;
pub mod evolution;
pub mod fidelity;
pub mod gates;
pub mod hamiltonian;
pub mod heatbudget;
pub mod linalg;
pub mod optimizer;

pub use basis::SystemConfig;
pub use error::{Error, Result};
pub use evolution::{DetuningSchedule, Propagator, QuantumState, Segment};
pub use gates::{GateSpec, ParkPolicy};
pub use hamiltonian::{BasisTag, DetuningVector, HermitianOperator};
