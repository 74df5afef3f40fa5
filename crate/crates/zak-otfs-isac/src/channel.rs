//! Bistatic target scenarios: random path draws, AWGN, SNR bookkeeping.
//!
//! SNR definition: transmit power is normalized to `M*N` over `M*N` samples,
//! so the per-sample symbol energy is 1 and `sigma2 = 10^(-snr_db/10)` is the
//! per-sample complex noise variance. This is echoed in the result metadata.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::frame::GridConfig;

/// One propagation path: complex gain, delay in seconds, Doppler in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    pub delay_s: f64,
    pub doppler_hz: f64,
}

/// Scenario distribution knobs. Target 1 sits at zero delay; target 2 (when
/// present) has delay uniform in `[0.5, 1.5]` delay resolutions. All Dopplers
/// are uniform in `[0, 1.5]` Doppler resolutions and gains are CN(0, 1).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub num_targets: usize,
}

impl ScenarioSpec {
    pub fn new(num_targets: usize) -> Self {
        Self { num_targets }
    }
}

/// Circularly-symmetric complex normal with unit variance.
fn cn01(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws a random path set for the scenario.
pub fn draw_paths(grid: &GridConfig, spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<Path> {
    let tau_res = grid.delay_resolution();
    let nu_res = grid.doppler_resolution();
    (0..spec.num_targets)
        .map(|i| {
            let delay_s = if i == 0 { 0.0 } else { rng.gen_range(0.5..1.5) * tau_res };
            let doppler_hz = rng.gen_range(0.0..1.5) * nu_res;
            Path { gain: cn01(rng), delay_s, doppler_hz }
        })
        .collect()
}

/// Adds i.i.d. circular complex Gaussian noise of per-sample variance
/// `sigma2` (real and imaginary variances sum to `sigma2`).
pub fn add_noise(r_clean: &[Complex64], sigma2: f64, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    assert!(sigma2 >= 0.0);
    if sigma2 == 0.0 {
        return r_clean.to_vec();
    }
    let s = (sigma2 / 2.0).sqrt();
    r_clean
        .iter()
        .map(|&v| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            v + Complex64::new(re * s, im * s)
        })
        .collect()
}

/// Per-sample unit-symbol-energy SNR: `sigma2 = 10^(-snr_db/10)`.
pub fn snr_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Counter-based per-trial RNG stream: independent streams keyed by
/// `(master seed, stream index)` so parallel trial execution is
/// order-independent.
pub fn trial_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
