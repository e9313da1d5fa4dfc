//! Wigner function reconstruction from lossy homodyne data.
//!
//! The Wigner function at a phase-space point is the parity of the state
//! displaced to the origin. Shifting homodyne samples by the displacement
//! turns the phase-averaged histogram into the statistics of that displaced
//! state, whose photon distribution is then recovered by
//! expectation-maximization against a kernel that already includes detector
//! losses. The same kernel serves every point of the grid.
//!
//! Module map:
//!
//! - [`fock`], [`kernel`]: Fock wavefunctions, lossy Fock densities and the
//!   bin-integrated kernel.
//! - [`em`]: positive linear model, likelihood and EM iteration.
//! - [`state`], [`sampling`], [`record`], [`histogram`]: reference states,
//!   simulated homodyne records and shifted histograms.
//! - [`oracle`]: exact displaced photon statistics and Wigner functions.
//! - [`pipeline`]: per-point and grid reconstruction.

pub mod em;
pub mod error;
pub mod fock;
pub mod grid;
pub mod histogram;
pub mod kernel;
pub mod oracle;
pub mod pipeline;
pub mod quadrature;
pub mod record;
pub mod sampling;
pub mod state;

pub use em::{EmDiagnostics, EmParams, Frequencies, ModelMatrix, PhotonDistribution, StopReason};
pub use error::{Error, Result};
pub use grid::BinGrid;
pub use histogram::{shift_and_histogram, Histogram};
pub use kernel::KernelMatrix;
pub use pipeline::{ReconstructionConfig, WignerGrid};
pub use record::{HomodyneRecord, Sample};
pub use state::{make_state, StateKind, StateSpec};
