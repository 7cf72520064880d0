//! Ground-state preparation toolkit for small spin chains.
//!
//! The crate strings together three classical stages that feed a quantum
//! state-preparation workflow:
//!
//! 1. a two-site DMRG solver producing a matrix product state ([`mps`]),
//! 2. a sequential matrix-product-disentangler encoder that turns the MPS into
//!    a staircase circuit and tracks the central Schmidt rank layer by layer
//!    ([`encoder`]),
//! 3. a deterministically scheduled probabilistic imaginary-time evolution
//!    (PITE) refinement with Trotterized, RZZ-native step circuits ([`pite`],
//!    [`circuit`]).
//!
//! Curve fits for the encoder diagnostics and resource scaling live in
//! [`fits`]; orchestration, file formats and reports in [`pipeline`] and
//! [`io`].
//!
//! # Conventions
//!
//! Sites are indexed from 0 in code. Site 0 is the *most significant* bit of
//! a computational-basis index, so the Néel state `|0101…⟩` on 4 sites is basis
//! index 5. Every file written by this crate records this in its header as
//! [`BIT_CONVENTION`].
//!
//! Data-parallel kernels (Pauli-sum matvecs, gate application, inner
//! products) run on rayon when the `parallel` feature is enabled, which it is by
//! default. Reductions are chunked so results are bit-identical with and
//! without the feature.

pub mod circuit;
pub mod encoder;
pub mod error;
pub mod fits;
pub mod hamiltonian;
pub mod io;
pub mod mps;
pub mod numerics;
pub mod par;
pub mod pipeline;
pub mod pite;
pub mod state;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use state::StateVector;

/// Bit-ordering tag written into every file header.
pub const BIT_CONVENTION: &str = "site0-msb";

/// Version string recorded in manifests and fit files.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Chemical-accuracy energy threshold in units of J.
pub const CHEMICAL_ACCURACY: f64 = 1.5936e-3;

/// Largest chain handled with explicit state vectors.
pub const MAX_STATEVECTOR_SITES: usize = 20;
