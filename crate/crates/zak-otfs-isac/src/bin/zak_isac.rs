//! Thin CLI over the simulation harness: `sweep`, `trace`, `selftest`.

use clap::{Parser, Subcommand};
use zak_otfs_isac::sim::{self, RunConfig};

#[derive(Parser)]
#[command(name = "zak-isac", about = "Zak-OTFS ISAC Monte-Carlo harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured Monte-Carlo SNR sweep and write CSV + metadata.
    Sweep {
        /// Flat key=value config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<String>,
        /// Override single keys, e.g. --set trials=50 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Output base path (overrides the config's `out`).
        #[arg(long)]
        out: Option<String>,
    },
    /// Emit accelerated-vs-ordinary objective traces for one trial.
    Trace {
        #[arg(long)]
        config: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Run the cross-module oracle self test (fast, 4x8 grid).
    Selftest,
}

fn load_config(path: &Option<String>, sets: &[String]) -> Result<RunConfig, String> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{p}: {e}"))?;
            sim::parse_config(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| format!("--set expects KEY=VALUE, got '{s}'"))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| e.to_string())?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Sweep { config, sets, out } => match load_config(&config, &sets) {
            Ok(mut cfg) => {
                if let Some(o) = out {
                    cfg.out = o;
                }
                match sim::run_sweep(&cfg) {
                    Ok(result) => {
                        if let Err(e) = sim::write_outputs(&result, &cfg.out) {
                            eprintln!("error: {e}");
                            1
                        } else {
                            println!(
                                "wrote {} rows to {}.csv (+ {}.meta.json)",
                                result.rows.len(),
                                cfg.out,
                                cfg.out
                            );
                            0
                        }
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        1
                    }
                }
            }
            Err(e) => {
                eprintln!("config error: {e}");
                2
            }
        },
        Command::Trace { config, sets, out } => match load_config(&config, &sets) {
            Ok(cfg) => match sim::convergence_trace(&cfg) {
                Ok(result) => {
                    let base = out.unwrap_or_else(|| format!("{}_trace", cfg.out));
                    match std::fs::write(format!("{base}.csv"), &result.csv) {
                        Ok(()) => {
                            for (label, trace) in &result.traces {
                                if let Some(last) = trace.last() {
                                    println!(
                                        "{label}: {} iterations, final objective {:.6}",
                                        trace.len(),
                                        last.objective
                                    );
                                }
                            }
                            println!("wrote {base}.csv");
                            0
                        }
                        Err(e) => {
                            eprintln!("error: {e}");
                            1
                        }
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            },
            Err(e) => {
                eprintln!("config error: {e}");
                2
            }
        },
        Command::Selftest => {
            let report = sim::selftest();
            for (name, ok, detail) in &report.checks {
                println!("{} {name} ({detail})", if *ok { "PASS" } else { "FAIL" });
            }
            if report.passed() {
                println!("selftest: all checks passed");
                0
            } else {
                eprintln!("selftest: FAILURES present");
                1
            }
        }
    };
    std::process::exit(code);
}
