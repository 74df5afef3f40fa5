//! Sensing and communication metrics: minimum-cost assignment, gated
//! detection bookkeeping, range/velocity/channel errors, BER.

use crate::channel::Path;
use crate::frame::GridConfig;
use crate::modem::EffectiveChannel;
use crate::{Error, Result};

/// Propagation speed used for range conversion, m/s.
pub const C_LIGHT: f64 = 2.998e8;

/// Minimum-total-cost one-to-one assignment of `min(rows, cols)` pairs.
///
/// Shortest-augmenting-path implementation with potentials, O(n^3). The cost
/// matrix is `rows x cols`, row-major; rectangular inputs are padded with
/// zero-cost dummies internally. Returns `(row, col)` pairs.
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Result<Vec<(usize, usize)>> {
    assert_eq!(cost.len(), rows * cols, "cost matrix shape mismatch");
    if cost.iter().any(|c| c.is_nan()) {
        return Err(Error::NanCost);
    }
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    let n = rows.max(cols);
    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            cost[i * cols + j]
        } else {
            0.0
        }
    };
    // potentials over rows (u) and columns (v); p[j] = row matched to column j
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs = Vec::new();
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            pairs.push((i - 1, j - 1));
        }
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Association outcome between ground-truth and estimated targets.
#[derive(Debug, Clone, Default)]
pub struct MatchResult {
    /// Valid detections within the half-resolution gate.
    pub pairs: Vec<(usize, usize)>,
    /// Truth indices with no in-gate match.
    pub misses: Vec<usize>,
    /// Estimate indices with no in-gate match.
    pub false_alarms: Vec<usize>,
}

impl MatchResult {
    pub fn detections(&self) -> usize {
        self.pairs.len()
    }
}

/// Maps an estimated delay/Doppler to the centered branch of the fundamental
/// domain so boundary truths (zero delay, near-zero Doppler) gate correctly.
pub fn centered_estimate(grid: &GridConfig, p: &Path) -> Path {
    let t_period = grid.symbol_period();
    let mut tau = p.delay_s.rem_euclid(t_period);
    if tau > t_period / 2.0 {
        tau -= t_period;
    }
    let mut nu = p.doppler_hz.rem_euclid(grid.delta_f);
    if nu > grid.delta_f / 2.0 {
        nu -= grid.delta_f;
    }
    Path { gain: p.gain, delay_s: tau, doppler_hz: nu }
}

/// Associates estimates to truths with the Hungarian algorithm on the
/// resolution-normalized delay-Doppler distance, then gates every matched
/// pair at half a resolution cell in both axes. Gated-out pairs count as a
/// miss plus a false alarm.
pub fn match_targets(truth: &[Path], est: &[Path], grid: &GridConfig) -> MatchResult {
    let tau_res = grid.delay_resolution();
    let nu_res = grid.doppler_resolution();
    let est_c: Vec<Path> = est.iter().map(|p| centered_estimate(grid, p)).collect();
    let mut result = MatchResult::default();
    if truth.is_empty() || est.is_empty() {
        result.misses = (0..truth.len()).collect();
        result.false_alarms = (0..est.len()).collect();
        return result;
    }
    let mut cost = vec![0.0f64; truth.len() * est.len()];
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in est_c.iter().enumerate() {
            cost[i * est.len() + j] = (t.delay_s - e.delay_s).abs() / tau_res
                + (t.doppler_hz - e.doppler_hz).abs() / nu_res;
        }
    }
    let pairs = hungarian(&cost, truth.len(), est.len()).expect("finite costs");
    let mut truth_matched = vec![false; truth.len()];
    let mut est_matched = vec![false; est.len()];
    for (i, j) in pairs {
        let dt = (truth[i].delay_s - est_c[j].delay_s).abs();
        let dn = (truth[i].doppler_hz - est_c[j].doppler_hz).abs();
        if dt <= tau_res / 2.0 && dn <= nu_res / 2.0 {
            result.pairs.push((i, j));
            truth_matched[i] = true;
            est_matched[j] = true;
        }
    }
    result.misses = truth_matched
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| (!m).then_some(i))
        .collect();
    result.false_alarms = est_matched
        .iter()
        .enumerate()
        .filter_map(|(j, &m)| (!m).then_some(j))
        .collect();
    result
}

/// Range and radial-velocity errors of a matched pair: `c |dtau|` metres and
/// `(c/f_c) |dnu|` metres per second.
pub fn range_velocity_errors(truth: &Path, est: &Path, grid: &GridConfig) -> (f64, f64) {
    let e = centered_estimate(grid, est);
    let range = C_LIGHT * (truth.delay_s - e.delay_s).abs();
    let velocity = C_LIGHT / grid.f_c * (truth.doppler_hz - e.doppler_hz).abs();
    (range, velocity)
}

/// Relative Frobenius error `||H_est - H_true||_F / ||H_true||_F`.
pub fn channel_rmse(h_true: &EffectiveChannel, h_est: &EffectiveChannel) -> f64 {
    assert_eq!(h_true.mn, h_est.mn);
    let num: f64 = h_true
        .mat
        .iter()
        .zip(&h_est.mat)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    (num.sqrt()) / h_true.frobenius_norm()
}

/// Bit error rate between two equal-length bit vectors.
pub fn ber(bits_true: &[u8], bits_est: &[u8]) -> f64 {
    assert_eq!(bits_true.len(), bits_est.len(), "bit vectors must match");
    if bits_true.is_empty() {
        return 0.0;
    }
    let errs = bits_true
        .iter()
        .zip(bits_est)
        .filter(|(a, b)| a != b)
        .count();
    errs as f64 / bits_true.len() as f64
}

/// Per-trial metric bundle; sums are kept raw so aggregation stays exact.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialMetrics {
    pub truths: usize,
    pub detections: usize,
    pub misses: usize,
    pub false_alarms: usize,
    pub range_sq_err_sum: f64,
    pub velocity_sq_err_sum: f64,
    pub channel_rel_err: f64,
    pub bit_errors: usize,
    pub bit_count: usize,
}

impl TrialMetrics {
    /// Detection, errors and channel metric of one trial.
    pub fn from_match(
        truth: &[Path],
        est: &[Path],
        grid: &GridConfig,
        mr: &MatchResult,
    ) -> Self {
        let mut m = TrialMetrics {
            truths: truth.len(),
            detections: mr.detections(),
            misses: mr.misses.len(),
            false_alarms: mr.false_alarms.len(),
            ..Default::default()
        };
        for &(i, j) in &mr.pairs {
            let (re, ve) = range_velocity_errors(&truth[i], &est[j], grid);
            m.range_sq_err_sum += re * re;
            m.velocity_sq_err_sum += ve * ve;
        }
        m
    }
}
