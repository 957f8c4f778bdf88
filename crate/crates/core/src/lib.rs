//! Synthesis and validation of counterdiabatic driving protocols for few-qubit
//! Hamiltonians.
//!
//! The library trains a small dense network that maps physical time to a full
//! driving protocol: the schedule `lambda(t)`, its rate, a Hermitian
//! counterdiabatic term, and the Pauli coefficients of its experimentally
//! realizable projection. Training minimizes a weighted sum of boundary,
//! least-action, adiabaticity, and coupling losses; everything is plain `f64`
//! and deterministic for a fixed seed.
//!
//! Modules:
//!
//! * [`linalg`]: dense complex matrices, a Hermitian eigensolver, and the Pauli
//!   string basis.
//! * [`autodiff`]: a scalar reverse-mode tape plus the [`autodiff::Scalar`]
//!   trait that lets the loss functions run on either `f64` or tape variables.
//! * [`problem`]: specifications of the control problems (built-in H2 curves
//!   and JSON files).
//! * [`sampling`]: deterministic low-discrepancy time batches.
//! * [`net`]: the network, its parameter initialization, forward passes with
//!   exact input derivatives, and parameter gradients.
//! * [`physics`]: the loss terms and their batch assembly.
//! * [`train`]: the Adam training loop, checkpoints, and profiles.
//! * [`oracle`]: exact gauge potentials, the nested-commutator baseline,
//!   spectral tracks, and Schroedinger evolution for fidelity checks.

pub mod autodiff;
pub mod linalg;
pub mod net;
pub mod oracle;
pub mod physics;
pub mod problem;
pub mod sampling;
pub mod train;
