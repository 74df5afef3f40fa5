//! Monte-Carlo harness: flat key/value configuration, reproducible SNR
//! sweeps across receiver modes, convergence traces, and a fast self test.
//!
//! Outputs are a CSV table (one row per `(mode, snr, trial)`, sorted, byte
//! stable across worker counts) plus a JSON metadata sidecar echoing the
//! configuration and the SNR definition.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{add_noise, draw_paths, snr_to_sigma2, trial_rng, Path, ScenarioSpec};
use crate::eval::{self, match_targets, TrialMetrics};
use crate::frame::{
    assemble_frame, build_layout, Constellation, ConstellationKind, FrameLayout, GridConfig,
    GridRect,
};
use crate::init;
use crate::isac::{self, IsacOptions};
use crate::modem;
use crate::{anm, Error, Result};

/// Receiver under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Joint atomic-norm receiver.
    Proposed,
    /// LMMSE on the model-free reconstructed channel.
    LmmseModelFree,
    /// LMMSE with the exact effective channel.
    LmmsePerfect,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::LmmseModelFree => "lmmse_modelfree",
            Mode::LmmsePerfect => "lmmse_perfect",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Mode::Proposed),
            "lmmse_modelfree" => Ok(Mode::LmmseModelFree),
            "lmmse_perfect" => Ok(Mode::LmmsePerfect),
            other => Err(Error::ConfigParse(format!("unknown mode '{other}'"))),
        }
    }
}

/// Full sweep configuration; every field maps 1:1 to a config-file key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f_hz: f64,
    pub carrier_hz: f64,
    pub pilot_region: GridRect,
    pub guard_region: GridRect,
    pub constellation: ConstellationKind,
    pub targets: usize,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub mode: Mode,
    pub workers: usize,
    pub out: String,
    pub t_max: usize,
    pub accelerated: bool,
    pub gamma: usize,
    pub newton_steps: usize,
    pub k_max: usize,
    pub eta_scale: f64,
    pub paper_alpha: bool,
    pub rho0_factor: f64,
    pub rho_growth: f64,
    pub rho_period: usize,
    pub rho_upb_factor: f64,
    pub amplitude_floor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            m: 8,
            n: 16,
            delta_f_hz: 30e3,
            carrier_hz: 24e9,
            pilot_region: GridRect::new(2, 6, 5, 11),
            guard_region: GridRect::new(1, 7, 4, 12),
            constellation: ConstellationKind::Bpsk,
            targets: 1,
            snr_db: vec![10.0],
            trials: 100,
            seed: 1,
            mode: Mode::Proposed,
            workers: 0,
            out: "results".into(),
            t_max: 200,
            accelerated: true,
            gamma: 4,
            newton_steps: 10,
            k_max: 200,
            eta_scale: 0.04,
            paper_alpha: false,
            rho0_factor: 0.01,
            rho_growth: 2.0,
            rho_period: 10,
            rho_upb_factor: 10.0,
            amplitude_floor: 1.0,
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<GridConfig> {
        GridConfig::new(self.m, self.n, self.delta_f_hz, self.carrier_hz)
    }

    pub fn layout(&self) -> Result<FrameLayout> {
        build_layout(&self.grid()?, self.pilot_region, self.guard_region)
    }

    pub fn isac_options(&self) -> IsacOptions {
        IsacOptions {
            t_max: self.t_max,
            accelerated: self.accelerated,
            eta_scale: self.eta_scale,
            paper_alpha: self.paper_alpha,
            rho0_beta_factor: self.rho0_factor,
            rho_growth: self.rho_growth,
            rho_period: self.rho_period,
            rho_upb_beta_factor: self.rho_upb_factor,
            amplitude_floor_kappa: self.amplitude_floor,
            budget: anm::SolverBudget {
                k_max: self.k_max,
                oversampling: self.gamma,
                newton_steps: self.newton_steps,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::InvalidConfig("snr_db list must be non-empty".into()));
        }
        if self.targets == 0 {
            return Err(Error::InvalidConfig("targets must be >= 1".into()));
        }
        self.layout()?;
        Ok(())
    }

    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::ConfigParse(format!("invalid {what}: '{value}'"));
        match key {
            "m" => self.m = value.parse().map_err(|_| bad("m"))?,
            "n" => self.n = value.parse().map_err(|_| bad("n"))?,
            "delta_f_hz" => self.delta_f_hz = value.parse().map_err(|_| bad("delta_f_hz"))?,
            "carrier_hz" => self.carrier_hz = value.parse().map_err(|_| bad("carrier_hz"))?,
            "pilot_region" => self.pilot_region = parse_rect(value)?,
            "guard_region" => self.guard_region = parse_rect(value)?,
            "constellation" => {
                self.constellation = match value {
                    "bpsk" => ConstellationKind::Bpsk,
                    "qpsk" => ConstellationKind::Qpsk,
                    _ => return Err(bad("constellation")),
                }
            }
            "targets" => self.targets = value.parse().map_err(|_| bad("targets"))?,
            "snr_db" => {
                self.snr_db = value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| bad("snr_db")))
                    .collect::<Result<_>>()?
            }
            "trials" => self.trials = value.parse().map_err(|_| bad("trials"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "mode" => self.mode = Mode::parse(value)?,
            "workers" => self.workers = value.parse().map_err(|_| bad("workers"))?,
            "out" => self.out = value.to_string(),
            "t_max" => self.t_max = value.parse().map_err(|_| bad("t_max"))?,
            "accelerated" => self.accelerated = parse_bool(value)?,
            "gamma" => self.gamma = value.parse().map_err(|_| bad("gamma"))?,
            "newton_steps" => self.newton_steps = value.parse().map_err(|_| bad("newton_steps"))?,
            "k_max" => self.k_max = value.parse().map_err(|_| bad("k_max"))?,
            "eta_scale" => self.eta_scale = value.parse().map_err(|_| bad("eta_scale"))?,
            "paper_alpha" => self.paper_alpha = parse_bool(value)?,
            "rho0_factor" => self.rho0_factor = value.parse().map_err(|_| bad("rho0_factor"))?,
            "rho_growth" => self.rho_growth = value.parse().map_err(|_| bad("rho_growth"))?,
            "rho_period" => self.rho_period = value.parse().map_err(|_| bad("rho_period"))?,
            "rho_upb_factor" => {
                self.rho_upb_factor = value.parse().map_err(|_| bad("rho_upb_factor"))?
            }
            "amplitude_floor" => {
                self.amplitude_floor = value.parse().map_err(|_| bad("amplitude_floor"))?
            }
            other => return Err(Error::ConfigParse(format!("unknown key '{other}'"))),
        }
        Ok(())
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::ConfigParse(format!("invalid bool '{v}'"))),
    }
}

fn parse_rect(v: &str) -> Result<GridRect> {
    let parts: Vec<usize> = v
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::ConfigParse(format!("invalid rect '{v}'")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != 4 {
        return Err(Error::ConfigParse(format!(
            "rect needs 4 values l_lo,l_hi,k_lo,k_hi: '{v}'"
        )));
    }
    Ok(GridRect::new(parts[0], parts[1], parts[2], parts[3]))
}

/// Parses the flat `key = value` config text (`#` starts a comment).
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::ConfigParse(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        cfg.set(key.trim(), value.trim())?;
    }
    Ok(cfg)
}

/// One `(mode, snr, trial)` result.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub mode: &'static str,
    pub snr_db: f64,
    pub trial: usize,
    pub stream: u64,
    pub truths: usize,
    pub detections: usize,
    pub misses: usize,
    pub false_alarms: usize,
    pub range_sq_err_sum: f64,
    pub velocity_sq_err_sum: f64,
    pub channel_rel_err: f64,
    pub bit_errors: usize,
    pub bit_count: usize,
    pub iterations: usize,
    pub converged: bool,
}

pub const CSV_HEADER: &str = "mode,snr_db,trial,stream,truths,detections,misses,false_alarms,\
range_sq_err_sum,velocity_sq_err_sum,channel_rel_err,bit_errors,bit_count,iterations,converged";

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.mode,
            self.snr_db,
            self.trial,
            self.stream,
            self.truths,
            self.detections,
            self.misses,
            self.false_alarms,
            self.range_sq_err_sum,
            self.velocity_sq_err_sum,
            self.channel_rel_err,
            self.bit_errors,
            self.bit_count,
            self.iterations,
            self.converged as u8,
        )
    }
}

/// Sweep output: sorted rows plus serialized artifacts.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub csv: String,
    pub metadata_json: String,
}

struct TrialRealization {
    paths: Vec<Path>,
    bits: Vec<u8>,
    r: Vec<Complex64>,
    y_dd: Vec<Complex64>,
    sigma2: f64,
}

/// Draws the shared realization of one `(snr, trial)` cell. Scenario, data
/// bits and noise use separate sub-streams so the same bits and noise are
/// reused across target counts and receiver modes.
fn realize_trial(
    grid: &GridConfig,
    layout: &FrameLayout,
    constellation: &Constellation,
    spec: &ScenarioSpec,
    seed: u64,
    stream_base: u64,
    snr_db: f64,
) -> TrialRealization {
    let paths = draw_paths(grid, spec, &mut trial_rng(seed, stream_base));
    let mut bits_rng = trial_rng(seed, stream_base + 1);
    let bits: Vec<u8> = (0..layout.data_indices.len() * constellation.bits_per_symbol)
        .map(|_| bits_rng.gen_range(0..2u8))
        .collect();
    let data = constellation.bits_to_symbols(&bits).expect("bit count");
    let x_dd = assemble_frame(layout, &data, layout.pilot_amplitude).expect("layout");
    let s = modem::modulate(grid, &x_dd).expect("size");
    let r_clean = modem::apply_time_channel(grid, &s, &paths);
    let sigma2 = snr_to_sigma2(snr_db);
    let r = add_noise(&r_clean, sigma2, &mut trial_rng(seed, stream_base + 2));
    let y_dd = modem::demodulate(grid, &r).expect("size");
    TrialRealization { paths, bits, r, y_dd, sigma2 }
}

fn lmmse_bits(
    grid: &GridConfig,
    layout: &FrameLayout,
    constellation: &Constellation,
    h_hat: &modem::EffectiveChannel,
    y_dd: &[Complex64],
    sigma2: f64,
) -> Vec<u8> {
    let mut reg = sigma2;
    for _ in 0..4 {
        match init::lmmse_detect(h_hat, y_dd, reg) {
            Ok(x) => {
                let data: Vec<Complex64> = layout
                    .data_indices
                    .iter()
                    .map(|&(l, k)| x[grid.idx(l, k)])
                    .collect();
                return constellation.symbols_to_bits(&data);
            }
            Err(_) => reg = reg.max(1e-12) * 10.0,
        }
    }
    // unrecoverable factorization: decide everything as the first point
    vec![0; layout.data_indices.len() * constellation.bits_per_symbol]
}

/// Runs one trial of the configured mode on a shared realization.
fn run_trial(cfg: &RunConfig, snr_idx: usize, trial: usize) -> ResultRow {
    let grid = cfg.grid().expect("validated");
    let layout = cfg.layout().expect("validated");
    let constellation = Constellation::of(cfg.constellation);
    let spec = ScenarioSpec::new(cfg.targets);
    let snr_db = cfg.snr_db[snr_idx];
    let stream_base = ((snr_idx as u64) * (cfg.trials as u64) + trial as u64) * 4;
    let real = realize_trial(&grid, &layout, &constellation, &spec, cfg.seed, stream_base, snr_db);
    let h_true = modem::effective_channel_from_paths(&grid, &real.paths);

    let (bits_hat, est, h_est, iterations, converged) = match cfg.mode {
        Mode::Proposed => {
            let out = isac::run(
                &grid,
                &layout,
                &constellation,
                &real.r,
                &real.y_dd,
                real.sigma2,
                &cfg.isac_options(),
            )
            .expect("receiver run");
            // the denoiser objective must never increase across tuple updates
            assert_eq!(
                out.solver_violations, 0,
                "solver objective rose during trial {trial} at {snr_db} dB"
            );
            let bits_hat = constellation.symbols_to_bits(&out.x_data);
            (bits_hat, out.estimate, out.h_eff, out.iterations, out.converged)
        }
        Mode::LmmseModelFree => {
            let est = init::model_free_estimate(&grid, &layout, &real.y_dd);
            let h_hat = init::reconstruct_heff_from_estimate(&grid, &est);
            let bits_hat =
                lmmse_bits(&grid, &layout, &constellation, &h_hat, &real.y_dd, real.sigma2);
            (bits_hat, Vec::new(), h_hat, 0, true)
        }
        Mode::LmmsePerfect => {
            let bits_hat =
                lmmse_bits(&grid, &layout, &constellation, &h_true, &real.y_dd, real.sigma2);
            (bits_hat, Vec::new(), h_true.clone(), 0, true)
        }
    };

    let mr = match_targets(&real.paths, &est, &grid);
    let mut metrics = TrialMetrics::from_match(&real.paths, &est, &grid, &mr);
    metrics.channel_rel_err = eval::channel_rmse(&h_true, &h_est);
    metrics.bit_count = real.bits.len();
    metrics.bit_errors = real
        .bits
        .iter()
        .zip(&bits_hat)
        .filter(|(a, b)| a != b)
        .count();

    ResultRow {
        mode: cfg.mode.as_str(),
        snr_db,
        trial,
        stream: stream_base,
        truths: metrics.truths,
        detections: metrics.detections,
        misses: metrics.misses,
        false_alarms: metrics.false_alarms,
        range_sq_err_sum: metrics.range_sq_err_sum,
        velocity_sq_err_sum: metrics.velocity_sq_err_sum,
        channel_rel_err: metrics.channel_rel_err,
        bit_errors: metrics.bit_errors,
        bit_count: metrics.bit_count,
        iterations,
        converged,
    }
}

/// Runs the configured Monte-Carlo sweep. Deterministic for a fixed config
/// and seed regardless of worker count; rows come back sorted by
/// `(snr index, trial)`.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let tasks: Vec<(usize, usize)> = (0..cfg.snr_db.len())
        .flat_map(|si| (0..cfg.trials).map(move |t| (si, t)))
        .collect();
    let compute = || -> Vec<((usize, usize), ResultRow)> {
        tasks
            .par_iter()
            .map(|&(si, t)| ((si, t), run_trial(cfg, si, t)))
            .collect()
    };
    let mut keyed = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(compute)
    } else {
        compute()
    };
    keyed.sort_by_key(|(k, _)| *k);
    let rows: Vec<ResultRow> = keyed.into_iter().map(|(_, r)| r).collect();

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    let metadata = serde_json::json!({
        "config": cfg,
        "snr_definition": "per-sample unit-symbol-energy SNR: sigma2 = 10^(-snr_db/10); \
transmit power normalized to M*N over M*N samples",
        "range_definition": "delay-equivalent path range c*tau with c = 2.998e8 m/s",
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_ms": started.elapsed().as_millis() as u64,
    });
    Ok(SweepOutput {
        rows,
        csv,
        metadata_json: serde_json::to_string_pretty(&metadata).expect("json"),
    })
}

/// Writes `<out>.csv` and `<out>.meta.json`.
pub fn write_outputs(out: &SweepOutput, base: &str) -> Result<()> {
    if let Some(dir) = FsPath::new(base).parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(format!("{base}.csv"), &out.csv)?;
    std::fs::write(format!("{base}.meta.json"), &out.metadata_json)?;
    Ok(())
}

/// Aggregate statistics over the rows of one mode (already filtered).
#[derive(Debug, Clone, Copy, Default)]
pub struct Aggregate {
    pub trials: usize,
    pub ber: f64,
    pub pd: f64,
    pub false_alarms: usize,
    pub range_rmse_m: f64,
    pub velocity_rmse_mps: f64,
    pub mean_channel_rel_err: f64,
    pub mean_iterations: f64,
}

/// Recomputes the headline metrics from raw rows.
pub fn aggregate<'a>(rows: impl Iterator<Item = &'a ResultRow>) -> Aggregate {
    let mut agg = Aggregate::default();
    let (mut bits, mut errs, mut truths, mut dets, mut matched) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let (mut range_sq, mut vel_sq, mut ch_sum, mut iter_sum) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for r in rows {
        agg.trials += 1;
        bits += r.bit_count;
        errs += r.bit_errors;
        truths += r.truths;
        dets += r.detections;
        matched += r.detections;
        agg.false_alarms += r.false_alarms;
        range_sq += r.range_sq_err_sum;
        vel_sq += r.velocity_sq_err_sum;
        ch_sum += r.channel_rel_err;
        iter_sum += r.iterations as f64;
    }
    if bits > 0 {
        agg.ber = errs as f64 / bits as f64;
    }
    if truths > 0 {
        agg.pd = dets as f64 / truths as f64;
    }
    if matched > 0 {
        agg.range_rmse_m = (range_sq / matched as f64).sqrt();
        agg.velocity_rmse_mps = (vel_sq / matched as f64).sqrt();
    }
    if agg.trials > 0 {
        agg.mean_channel_rel_err = ch_sum / agg.trials as f64;
        agg.mean_iterations = iter_sum / agg.trials as f64;
    }
    agg
}

/// Convergence-trace output of the accelerated/ordinary comparison.
#[derive(Debug, Clone)]
pub struct TraceOutput {
    pub csv: String,
    /// (variant, trace) pairs.
    pub traces: Vec<(&'static str, Vec<isac::TraceRow>)>,
}

/// Runs the first configured `(snr, trial 0)` cell in accelerated and
/// ordinary mode on identical streams and reports objective-vs-iteration.
pub fn convergence_trace(cfg: &RunConfig) -> Result<TraceOutput> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let layout = cfg.layout()?;
    let constellation = Constellation::of(cfg.constellation);
    let spec = ScenarioSpec::new(cfg.targets);
    let real = realize_trial(&grid, &layout, &constellation, &spec, cfg.seed, 0, cfg.snr_db[0]);
    let mut traces = Vec::new();
    for (label, accelerated) in [("accelerated", true), ("ordinary", false)] {
        let opts = IsacOptions { accelerated, ..cfg.isac_options() };
        let out = isac::run(
            &grid,
            &layout,
            &constellation,
            &real.r,
            &real.y_dd,
            real.sigma2,
            &opts,
        )?;
        traces.push((label, out.trace));
    }
    let mut csv = String::from("variant,t,objective,penalty_objective,dh_norm,rho,tuples\n");
    for (label, trace) in &traces {
        for row in trace {
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                label, row.t, row.objective, row.penalty_objective, row.dh_norm, row.rho, row.tuples
            )
            .expect("string write");
        }
    }
    Ok(TraceOutput { csv, traces })
}

/// Self-test report: named checks with pass/fail.
#[derive(Debug, Clone, Default)]
pub struct SelftestReport {
    pub checks: Vec<(String, bool, String)>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok, _)| *ok)
    }

    fn push(&mut self, name: &str, ok: bool, detail: String) {
        self.checks.push((name.to_string(), ok, detail));
    }
}

/// Executes the cross-module oracle equivalences at 4x8 scale.
pub fn selftest() -> SelftestReport {
    use rand::SeedableRng;
    let mut report = SelftestReport::default();
    let grid = GridConfig::new(4, 8, 30e3, 24e9).expect("grid");
    let mn = grid.mn();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xD15C);
    let rand_frame = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Complex64> {
        (0..mn)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect()
    };
    let paths = vec![
        Path {
            gain: Complex64::new(0.9, -0.2),
            delay_s: grid.grid_to_delay(0.63),
            doppler_hz: grid.grid_to_doppler(1.37),
        },
        Path {
            gain: Complex64::new(-0.4, 0.7),
            delay_s: grid.grid_to_delay(1.4),
            doppler_hz: grid.grid_to_doppler(0.21),
        },
    ];
    let rel = |num: f64, den: f64| (num / den.max(1e-300)).sqrt();

    // identity-channel roundtrip
    {
        let x = rand_frame(&mut rng);
        let s = modem::modulate(&grid, &x).expect("size");
        let unit = [Path { gain: Complex64::new(1.0, 0.0), delay_s: 0.0, doppler_hz: 0.0 }];
        let y = modem::demodulate(&grid, &modem::apply_time_channel(&grid, &s, &unit))
            .expect("size");
        let err = y.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        report.push("modulate/demodulate identity roundtrip", err < 1e-10, format!("max err {err:.2e}"));
    }
    // effective channel vs basis composition
    {
        let fast = modem::effective_channel_from_paths(&grid, &paths);
        let oracle = modem::effective_channel_by_composition(&grid, &paths);
        let num: f64 = fast.mat.iter().zip(&oracle.mat).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = oracle.mat.iter().map(|c| c.norm_sqr()).sum();
        let e = rel(num, den);
        report.push("effective channel matches basis-vector oracle", e < 1e-10, format!("rel err {e:.2e}"));
    }
    // reconstruction equivalence from exact samples
    {
        let truth = modem::effective_channel_from_paths(&grid, &paths);
        let rec = modem::reconstruct_heff_from_response(&grid, |a, b| {
            modem::h_eff_response(&grid, &paths, a, b)
        });
        let num: f64 = rec.mat.iter().zip(&truth.mat).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = truth.mat.iter().map(|c| c.norm_sqr()).sum();
        let e = rel(num, den);
        report.push("response-sample reconstruction equivalence", e < 1e-8, format!("rel err {e:.2e}"));
    }
    // twisted convolution vs matrix path
    {
        let x = rand_frame(&mut rng);
        let y_mat = modem::effective_channel_from_paths(&grid, &paths).apply(&x);
        let y_tw = modem::twisted_convolution(
            &grid,
            |a, b| modem::h_eff_response(&grid, &paths, a, b),
            &x,
        );
        let num: f64 = y_tw.iter().zip(&y_mat).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = y_mat.iter().map(|c| c.norm_sqr()).sum();
        let e = rel(num, den);
        report.push("twisted convolution equals matrix relation", e < 1e-6, format!("rel err {e:.2e}"));
    }
    // ambiguity kernels
    {
        let direct: Complex64 = (0..mn)
            .map(|q| {
                Complex64::new(0.0, -2.0 * std::f64::consts::PI * q as f64 * 2.7 / mn as f64).exp()
            })
            .sum();
        let closed = modem::time_window_ambiguity(&grid, 2.7);
        let e1 = (closed - direct).norm();
        let quad = {
            // coarse Simpson on the rectangular-window ambiguity integral
            let tau = 0.4 * grid.delay_resolution();
            let nu = -0.3 * grid.sample_rate();
            let (lo, hi) = (nu.max(0.0), grid.sample_rate() + nu.min(0.0));
            let n = 4096;
            let h = (hi - lo) / n as f64;
            let f = |x: f64| Complex64::new(0.0, 2.0 * std::f64::consts::PI * x * tau).exp();
            let mut acc = f(lo) + f(hi);
            for i in 1..n {
                acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let quad = acc * h / 3.0;
            (modem::freq_window_ambiguity(&grid, tau, nu) - quad).norm() / quad.norm()
        };
        report.push(
            "ambiguity kernels match direct sum / quadrature",
            e1 < 1e-10 && quad < 1e-6,
            format!("time {e1:.2e}, freq rel {quad:.2e}"),
        );
    }
    // forward/adjoint identity
    {
        let s = rand_frame(&mut rng);
        let h: Vec<Complex64> = (0..mn * mn)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let u = rand_frame(&mut rng);
        let lhs: Complex64 = isac::forward_s(&grid, &s, &h)
            .iter()
            .zip(&u)
            .map(|(f, uv)| f.conj() * uv)
            .sum();
        let rhs: Complex64 = h
            .iter()
            .zip(&isac::adjoint_s(&grid, &s, &u))
            .map(|(hv, av)| hv.conj() * av)
            .sum();
        let e = (lhs - rhs).norm() / (1.0 + lhs.norm());
        report.push("spreading operator adjoint identity", e < 1e-10, format!("rel err {e:.2e}"));
    }
    // assignment vs brute force
    {
        let mut ok = true;
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let r = rng.gen_range(1..=4);
            let c = rng.gen_range(1..=4);
            let cost: Vec<f64> = (0..r * c).map(|_| rng.gen::<f64>()).collect();
            let pairs = eval::hungarian(&cost, r, c).expect("finite");
            let total: f64 = pairs.iter().map(|&(i, j)| cost[i * c + j]).sum();
            // brute force over the smaller side
            let mut best = f64::INFINITY;
            let idx: Vec<usize> = (0..r.max(c)).collect();
            permute(&idx, &mut |p| {
                let tot: f64 = (0..r.min(c))
                    .map(|i| if r <= c { cost[i * c + p[i]] } else { cost[p[i] * c + i] })
                    .sum();
                best = best.min(tot);
            });
            worst = worst.max((total - best).abs());
            ok &= (total - best).abs() < 1e-9;
        }
        report.push("assignment matches exhaustive minimum", ok, format!("max dev {worst:.2e}"));
    }
    // single-atom recovery
    {
        let c0 = Complex64::new(0.7, -0.4);
        let lt0 = 1.43;
        let kn0 = 5.27;
        let h: Vec<Complex64> =
            anm::atom_vector(&grid, grid.grid_to_delay(lt0), grid.grid_to_doppler(kn0))
                .iter()
                .map(|a| c0 * a)
                .collect();
        let eta = 1e-4 * c0.norm() * (mn * mn) as f64;
        let budget = anm::SolverBudget { epsilon: 1e-6 * eta, ..Default::default() };
        let (rep, stats) = anm::coordinate_descent(&grid, &h, 1.0, eta, &budget);
        let ok = rep.tuples.len() == 1
            && stats.objective_violations == 0
            && (grid.delay_to_grid(rep.tuples[0].delay_s) - lt0).abs() < 1e-3
            && (grid.doppler_to_grid(rep.tuples[0].doppler_hz) - kn0).abs() < 1e-3;
        report.push("atomic denoiser recovers a lone atom", ok, format!("tuples {}", rep.tuples.len()));
    }
    report
}

fn permute(items: &[usize], visit: &mut impl FnMut(&[usize])) {
    let mut v = items.to_vec();
    permute_rec(&mut v, 0, visit);
}

fn permute_rec(v: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute_rec(v, k + 1, visit);
        v.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parse_roundtrip_and_errors() {
        let text = "\
# comment
m = 8
n = 16
snr_db = 0, 5, 10
trials = 3
mode = lmmse_perfect
constellation = qpsk
pilot_region = 2,6,5,11
accelerated = false
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.snr_db, vec![0.0, 5.0, 10.0]);
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.mode, Mode::LmmsePerfect);
        assert_eq!(cfg.constellation, ConstellationKind::Qpsk);
        assert!(!cfg.accelerated);
        assert!(parse_config("bogus = 1").is_err());
        assert!(parse_config("m 8").is_err());
        assert!(parse_config("trials = -3").is_err());
        let mut bad = RunConfig::default();
        bad.trials = 0;
        assert!(bad.validate().is_err());
        bad = RunConfig::default();
        bad.snr_db.clear();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn near_noiseless_perfect_csi_has_zero_ber() {
        let mut cfg = RunConfig::default();
        cfg.mode = Mode::LmmsePerfect;
        cfg.snr_db = vec![100.0];
        cfg.trials = 1;
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].bit_errors, 0);
        assert_eq!(out.rows[0].bit_count, 65);
    }

    #[test]
    fn sweep_worker_count_does_not_change_csv() {
        let mut cfg = RunConfig::default();
        cfg.mode = Mode::LmmseModelFree;
        cfg.snr_db = vec![5.0, 15.0];
        cfg.trials = 4;
        cfg.workers = 1;
        let a = run_sweep(&cfg).unwrap();
        cfg.workers = 2;
        let b = run_sweep(&cfg).unwrap();
        assert_eq!(a.csv, b.csv);
    }

    #[test]
    fn selftest_passes() {
        let report = selftest();
        for (name, ok, detail) in &report.checks {
            assert!(ok, "selftest check failed: {name} ({detail})");
        }
        assert!(report.passed());
    }
}
