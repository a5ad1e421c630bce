//! Source separation of underdetermined convolutive mixtures with known
//! mixing filters.
//!
//! Sources are estimated by minimising a weighted analysis-ℓ1 cost on their
//! STFT coefficients, subject to a wideband data-fidelity ball and an upper
//! bound on the rank of every source spectrogram. The inner problem is solved
//! with a preconditioned simultaneous-direction method of multipliers
//! ([`solver::psdmm_solve`]) and wrapped in an ℓ1 reweighting loop
//! ([`solver::sslr_separate`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, WAV I/O, the
//! benchmark harness and the command line live in the `sslr` crate.

#![no_std]

extern crate alloc;

mod error;
pub mod eval;
pub mod fft;
pub mod frame;
pub mod mixing;
pub mod prox;
pub mod signal;
pub mod solver;

pub use error::{Error, Result};
pub use frame::{Spectrogram, StftConfig, TfTensor, WindowKind};
pub use mixing::{FilterBank, MixingOperator};
pub use prox::{RankBudget, WeightMatrix};
pub use signal::MultichannelSignal;
pub use solver::{IterationDiagnostics, SeparationResult, SolverConfig};

pub use nalgebra::DMatrix;
pub use num_complex::Complex64;
