//! Exact qudit state-vector simulation of remote state preparation (RSP).
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`]: dense complex vectors and matrices, Kronecker products,
//!   Householder unitary completion and pure-state fidelity.
//! - [`register`]: labelled multi-qudit registers with gate application,
//!   Born-rule probabilities, seeded measurement and partial traces.
//! - [`gates`]: shift/clock operators, generalized controlled shifts, the
//!   concentration gate, encoders and correction operators.
//! - [`protocols`]: the deterministic RSP protocol over a Schmidt-form
//!   channel, the probabilistic concentration baseline and the maximal-channel
//!   protocol with an ancilla, each producing a [`protocols::Transcript`].
//! - [`tomography`]: simulated single-qubit state tomography.
//! - [`oracle`]: an independent full-matrix enumeration of every protocol and
//!   statistical checks of the sampler.
//! - [`harness`]: the `rsp` command-line front end (run, sweep, verify, tomo).

pub mod error;
pub mod gates;
pub mod harness;
pub mod oracle;
pub mod protocols;
pub mod register;
pub mod rng;
pub mod tensor;
pub mod tomography;

pub use error::{Error, Result};
pub use gates::{GateMatrix, ShiftTable};
pub use protocols::{ChannelSpec, Mode, OutcomeTable, Protocol, TargetState, Transcript};
pub use register::{DensityMatrix, MeasurementRecord, StateRegister};
pub use tensor::{CMat, CVec, C64};
