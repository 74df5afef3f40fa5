//! Discrete-time Zak-OTFS transceiver and bistatic ISAC receiver.
//!
//! The crate covers the full desk-scale simulation chain:
//!
//! * [`frame`] — delay-Doppler grid geometry, embedded-pilot frame layout,
//!   PSK constellations and the convex-hull projection used by the detector.
//! * [`modem`] — Zak-OTFS modulation/demodulation, the time-domain channel,
//!   the delay-Doppler effective channel matrix, the sampled channel response
//!   kernel and its alias-sum reconstruction, and the discrete twisted
//!   convolution.
//! * [`channel`] — random bistatic target scenarios and AWGN.
//! * [`init`] — model-free pilot-based channel estimation and the LMMSE
//!   detector used to initialise the iterative receiver.
//! * [`anm`] — coordinate-descent atomic-norm denoising with FFT grid seeding
//!   and Newton refinement (gridless delay-Doppler estimation).
//! * [`isac`] — the outer receiver loop alternating an inexact accelerated
//!   proximal channel update with a majorize-minimize accelerated projected
//!   gradient symbol update under a penalty homotopy.
//! * [`eval`] — Hungarian association, detection bookkeeping, RMSE and BER.
//! * [`sim`] — Monte-Carlo harness: config parsing, SNR sweeps, convergence
//!   traces, self test, CSV/JSON emission.
//!
//! Runnable demonstrations live in `examples/`; `src/bin/zak_isac.rs` is a
//! thin CLI over [`sim`] with `sweep`, `trace` and `selftest` subcommands.

pub mod anm;
pub mod channel;
pub mod eval;
pub mod frame;
pub mod init;
pub mod isac;
pub mod modem;
pub mod sim;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("frame layout error: {0}")]
    Layout(String),
    #[error("bit count {0} not divisible by bits per symbol {1}")]
    BitCount(usize, usize),
    #[error("matrix factorization failed: {0}")]
    Factorization(String),
    #[error("cost matrix contains NaN")]
    NanCost,
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
