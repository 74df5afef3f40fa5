//! # Accelerated vs ordinary convergence
//!
//! Runs the receiver twice on the same 10 dB realization: once with the
//! momentum extrapolation on (accelerated) and once with it off (ordinary
//! descent), and prints the objective trajectory of both.
//!
//! Run with: cargo run --release --example convergence_comparison

use zak_otfs_isac::sim::{self, RunConfig};

fn main() {
    println!("=== accelerated vs ordinary convergence ===\n");
    let mut cfg = RunConfig::default();
    cfg.snr_db = vec![10.0];
    cfg.seed = 7;
    cfg.t_max = 300;

    let out = sim::convergence_trace(&cfg).expect("trace");
    let mut finals = Vec::new();
    for (label, trace) in &out.traces {
        let last = trace.last().expect("non-empty trace");
        finals.push((label, last.objective));
        println!("{label}: {} iterations, final objective {:.4}", trace.len(), last.objective);
    }

    println!("\n  t    accelerated      ordinary");
    let (acc, ord) = (&out.traces[0].1, &out.traces[1].1);
    for t in (0..acc.len().max(ord.len())).step_by(15) {
        let a = acc.get(t).map(|r| format!("{:>12.4}", r.objective)).unwrap_or_else(|| "           -".into());
        let o = ord.get(t).map(|r| format!("{:>12.4}", r.objective)).unwrap_or_else(|| "           -".into());
        println!("{t:>4} {a} {o}");
    }

    // iterations until each run enters the 1% band of its own final value
    for (label, trace) in &out.traces {
        let final_obj = trace.last().unwrap().objective;
        let t_star = trace
            .iter()
            .position(|r| r.objective <= final_obj * 1.01)
            .unwrap_or(trace.len());
        println!("\n{label}: within 1% of final objective after {t_star} iterations");
    }
}
