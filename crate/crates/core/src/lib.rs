//! Capacity of dual-hop MIMO amplify-and-forward multi-relay networks with
//! matched-filter (MF), zero-forcing (MF-ZF) and regularized zero-forcing
//! (MF-RZF) relay beamforming when the relays only know a noisy estimate of
//! their relay-to-destination channels.
//!
//! The crate is organized bottom-up:
//!
//! * [`matrix`]: small dense complex linear algebra (QR, Cholesky,
//!   pseudo-inverse, Hermitian eigendecomposition).
//! * [`channel`]: seeded Rayleigh channel draws and the Gaussian CSI error
//!   model `Ghat = G + e Omega`.
//! * [`beamforming`]: relay beamformers and power-control factors.
//! * [`receiver`]: effective channels, QR-based SIC detection and per-stream
//!   SINR, both closed-form and by symbol-level simulation.
//! * [`capacity`]: ergodic capacity, the cut-set bound, large-`K` closed
//!   forms and the optimal regularizer.
//! * [`experiment`]: sweep configuration, figure presets and CSV output.
//! * [`verify`]: quick self-checks of the model.
//!
//! The guide under `book/` walks through the model with runnable snippets;
//! those snippets are compiled and run as doc-tests of this crate.

pub mod beamforming;
pub mod capacity;
pub mod channel;
pub mod experiment;
pub mod matrix;
pub mod receiver;
pub mod verify;

pub use beamforming::{BeamformerKind, NetworkConfig};
pub use channel::{ChannelRealization, RngStream};
pub use matrix::{ComplexMatrix, C64};

// The guide's code blocks run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/beamformers.md")]
    mod beamformers {}
    #[doc = include_str!("../../../book/src/receiver.md")]
    mod receiver {}
    #[doc = include_str!("../../../book/src/capacity.md")]
    mod capacity {}
    #[doc = include_str!("../../../book/src/sweeps.md")]
    mod sweeps {}
}
