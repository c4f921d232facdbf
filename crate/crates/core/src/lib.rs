//! Community structure and consensus over stochastic-block-model networks.
//!
//! - [`sbm`]: block models, sampling, blockwise moment kernels
//! - [`spectra`]: empirical normalized-Laplacian spectra
//! - [`rmt`]: random-matrix prediction of bulk density, support edges and
//!   isolated eigenvalues
//! - [`consensus`]: synchronous scalar consensus and convergence time
//! - [`gossip`]: Pegasos + Push Sum decentralized SVM (GADGET)
//! - [`data`]: sparse datasets, partitioning, synthetic blobs
//! - [`bench`]: Δ sweeps, reciprocal fits, bifurcation detection

pub mod bench;
pub mod consensus;
pub mod data;
pub mod error;
pub mod gossip;
pub mod linalg;
pub mod rmt;
pub mod sbm;
pub mod spectra;

pub use error::{Error, Result};
pub use sbm::{BlockMatrices, Network, SbmModel, TwoLevelProbs};
