//! # Model-free pilot-based channel estimation
//!
//! Sends a frame that carries only the embedded pilot through a fractional
//! channel, reads the channel response off the pilot region, and compares
//! the reconstructed effective channel matrix against the exact one.
//!
//! Run with: cargo run --release --example pilot_estimation

use num_complex::Complex64;
use zak_otfs_isac::channel::Path;
use zak_otfs_isac::frame::{build_layout, GridConfig, GridRect};
use zak_otfs_isac::init;
use zak_otfs_isac::modem;

fn main() {
    println!("=== model-free pilot estimation ===\n");
    let grid = GridConfig::new(8, 16, 30e3, 24e9).unwrap();
    let layout = build_layout(&grid, GridRect::new(2, 6, 5, 11), GridRect::new(1, 7, 4, 12))
        .unwrap();
    println!(
        "pilot at {:?}, amplitude sqrt({:.0}); {} data cells, {} guard cells",
        layout.pilot,
        layout.pilot_amplitude.powi(2),
        layout.data_indices.len(),
        grid.mn() - layout.data_indices.len()
    );

    let paths = vec![Path {
        gain: Complex64::new(1.0, -0.55),
        delay_s: 0.73 * grid.delay_resolution(),
        doppler_hz: 0.91 * grid.doppler_resolution(),
    }];

    // pilot-only frame through the exact channel, noiseless
    let x = layout.pilot_frame(layout.pilot_amplitude);
    let h_true = modem::effective_channel_from_paths(&grid, &paths);
    let y = h_true.apply(&x);

    let est = init::model_free_estimate(&grid, &layout, &y);
    println!("\npilot-region offsets vs exact response (centre rows):");
    for b in -2..=2i64 {
        let mut line = String::new();
        for a in -2..=2i64 {
            let e = est.get(a, b);
            let t = modem::h_eff_response(&grid, &paths, a, b);
            line.push_str(&format!("  {:.3}/{:.3}", e.norm(), t.norm()));
        }
        println!("  b={b:>2}:{line}");
    }

    let mut max_err = 0.0f64;
    let mut max_true = 0.0f64;
    for (a, b) in est.offsets() {
        let t = modem::h_eff_response(&grid, &paths, a, b);
        max_true = max_true.max(t.norm());
        max_err = max_err.max((est.get(a, b) - t).norm());
    }
    println!("\nsample residual (pilot aliasing): {:.4} of peak", max_err / max_true);

    let rec = init::reconstruct_heff_from_estimate(&grid, &est);
    let num: f64 = rec
        .mat
        .iter()
        .zip(&h_true.mat)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let rel = (num.sqrt()) / h_true.frobenius_norm();
    println!("reconstructed matrix rel. Frobenius error (truncation-limited): {rel:.4}");
    println!("\nthe estimate seeds the joint receiver; the atomic-norm iterations close the gap");
}
