//! Model-free pilot-based channel estimation, LMMSE detection, and the
//! starting point of the iterative receiver.
//!
//! The model-free estimate reads the effective channel response directly off
//! the pilot response samples inside the pilot region; aliased pilot replicas
//! are the residual error, which shrinks in the crystalline regime (larger
//! grids). The estimate reconstructs an approximate effective channel matrix
//! through the same alias-sum machinery as the exact kernel, with the samples
//! zero-padded outside the pilot region.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::frame::{Constellation, FrameLayout, GridConfig};
use crate::modem::{self, ChannelSource, EffectiveChannel};
use crate::{Error, Result};

/// Pilot-region samples of the effective channel response, indexed by signed
/// offsets from the pilot cell. Zero outside the sampled rectangle.
#[derive(Debug, Clone)]
pub struct PilotEstimate {
    pub a_lo: i64,
    pub a_hi: i64,
    pub b_lo: i64,
    pub b_hi: i64,
    values: Vec<Complex64>,
}

impl PilotEstimate {
    #[inline]
    pub fn get(&self, a: i64, b: i64) -> Complex64 {
        if a < self.a_lo || a > self.a_hi || b < self.b_lo || b > self.b_hi {
            return Complex64::new(0.0, 0.0);
        }
        let w = (self.a_hi - self.a_lo + 1) as usize;
        self.values[(b - self.b_lo) as usize * w + (a - self.a_lo) as usize]
    }

    pub fn offsets(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let (a_lo, a_hi, b_lo, b_hi) = (self.a_lo, self.a_hi, self.b_lo, self.b_hi);
        (b_lo..=b_hi).flat_map(move |b| (a_lo..=a_hi).map(move |a| (a, b)))
    }
}

/// Samples the received pilot response over the pilot region:
/// `h_hat[a, b] = y_dd[l_p + a, k_p + b] / x_p * e^{-j2pi b l_p/(MN)}`.
pub fn model_free_estimate(
    grid: &GridConfig,
    layout: &FrameLayout,
    y_dd: &[Complex64],
) -> PilotEstimate {
    assert_eq!(y_dd.len(), grid.mn());
    let (l_p, k_p) = (layout.pilot.0 as i64, layout.pilot.1 as i64);
    let a_lo = layout.pilot_region.l_lo as i64 - l_p;
    let a_hi = layout.pilot_region.l_hi as i64 - l_p;
    let b_lo = layout.pilot_region.k_lo as i64 - k_p;
    let b_hi = layout.pilot_region.k_hi as i64 - k_p;
    let mnf = grid.mn() as f64;
    let xp = layout.pilot_amplitude;
    let mut values = Vec::with_capacity(((a_hi - a_lo + 1) * (b_hi - b_lo + 1)) as usize);
    for b in b_lo..=b_hi {
        for a in a_lo..=a_hi {
            let l = (l_p + a) as usize;
            let k = (k_p + b) as usize;
            let phase = Complex64::new(0.0, -2.0 * PI * b as f64 * l_p as f64 / mnf).exp();
            values.push(y_dd[grid.idx(l, k)] / xp * phase);
        }
    }
    PilotEstimate { a_lo, a_hi, b_lo, b_hi, values }
}

/// Reconstructs the effective channel matrix from a pilot estimate
/// (zero-padded outside the pilot region).
///
/// Scatter form of the alias sum: each sampled offset contributes to exactly
/// one matrix entry per input cell, so the cost is `|support| * MN`.
pub fn reconstruct_heff_from_estimate(
    grid: &GridConfig,
    est: &PilotEstimate,
) -> EffectiveChannel {
    let (m, n, mn) = (grid.m as i64, grid.n as i64, grid.mn());
    let mnf = mn as f64;
    let mut h = EffectiveChannel::zeros(mn, ChannelSource::ReconstructedFromSamples);
    for (a, b) in est.offsets() {
        let v = est.get(a, b);
        if v.norm_sqr() == 0.0 {
            continue;
        }
        for k in 0..n {
            for l in 0..m {
                let lp = (l + a).rem_euclid(m);
                let kp = (k + b).rem_euclid(n);
                // delay replica index implied by the wrap: a = lp - l - nn*M
                let nn = ((lp - l - a) / m).rem_euclid(n);
                let phase = Complex64::new(
                    0.0,
                    2.0 * PI * (nn * k) as f64 / n as f64
                        + 2.0 * PI * b as f64 * (l + nn * m) as f64 / mnf,
                )
                .exp();
                let row = (kp * m + lp) as usize;
                let col = (k * m + l) as usize;
                h.mat[row * mn + col] += v * phase;
            }
        }
    }
    h
}

/// LMMSE detector `(H^H H + sigma2 I)^{-1} H^H y` via a complex Cholesky
/// factorization of the regularized normal equations.
///
/// `sigma2` is floored at `1e-12` so noiseless runs stay well posed; an
/// indefinite factorization reports an error so the caller can retry with a
/// larger regularizer.
pub fn lmmse_detect(
    h_eff: &EffectiveChannel,
    y_dd: &[Complex64],
    sigma2: f64,
) -> Result<Vec<Complex64>> {
    let mn = h_eff.mn;
    if y_dd.len() != mn {
        return Err(Error::SizeMismatch { expected: mn, got: y_dd.len() });
    }
    let reg = sigma2.max(1e-12);
    // A = H^H H + reg I  (hermitian), rhs = H^H y
    let mut a = vec![Complex64::new(0.0, 0.0); mn * mn];
    for i in 0..mn {
        for j in i..mn {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..mn {
                acc += h_eff.mat[r * mn + i].conj() * h_eff.mat[r * mn + j];
            }
            if i == j {
                acc += Complex64::new(reg, 0.0);
            }
            a[i * mn + j] = acc;
            a[j * mn + i] = acc.conj();
        }
    }
    let mut rhs = vec![Complex64::new(0.0, 0.0); mn];
    for (i, dst) in rhs.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..mn {
            acc += h_eff.mat[r * mn + i].conj() * y_dd[r];
        }
        *dst = acc;
    }
    cholesky_solve_in_place(&mut a, &mut rhs, mn)?;
    Ok(rhs)
}

/// In-place Cholesky `A = L L^H` and solve for hermitian positive definite A.
fn cholesky_solve_in_place(a: &mut [Complex64], b: &mut [Complex64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= a[j * n + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Factorization(format!(
                "non-positive pivot {d} at column {j}"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut acc = a[i * n + j];
            for k in 0..j {
                acc -= a[i * n + k] * a[j * n + k].conj();
            }
            a[i * n + j] = acc / d;
        }
    }
    // forward solve L z = b
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= a[i * n + k] * b[k];
        }
        b[i] = acc / a[i * n + i].re;
    }
    // back solve L^H x = z
    for i in (0..n).rev() {
        let mut acc = b[i];
        for k in (i + 1)..n {
            acc -= a[k * n + i].conj() * b[k];
        }
        b[i] = acc / a[i * n + i].re;
    }
    Ok(())
}

/// Starting point of the iterative receiver.
#[derive(Debug, Clone)]
pub struct InitState {
    /// Initial channel vector, length `(MN)^2`, block `n` holding column `n`
    /// of the delay-Doppler spreading matrix.
    pub h0: Vec<Complex64>,
    /// Initial frequency-domain transmit estimate.
    pub s0: Vec<Complex64>,
    /// Hull-projected LMMSE soft data symbols.
    pub x0_data: Vec<Complex64>,
    /// Model-free channel matrix estimate the LMMSE ran against.
    pub h_eff_hat: EffectiveChannel,
}

/// Builds the initial `(h0, s0, x0)` from the model-free estimate and LMMSE
/// soft symbols.
///
/// The initial channel vector maps the estimated DD-domain matrix into the
/// time-frequency spreading representation:
/// `H_mat[q, n] = sqrt(MN) e^{-j2pi qn/MN} (F^H MOD H_hat MOD^H)[q, n]`,
/// which is exact when the estimate equals the true effective channel. Soft
/// symbols are hull-projected rather than hard-decided so the penalty
/// objective starts inside the feasible set.
pub fn init_state(
    grid: &GridConfig,
    layout: &FrameLayout,
    constellation: &Constellation,
    y_dd: &[Complex64],
    sigma2: f64,
) -> Result<InitState> {
    let est = model_free_estimate(grid, layout, y_dd);
    let h_eff_hat = reconstruct_heff_from_estimate(grid, &est);
    init_state_from_heff(grid, layout, constellation, y_dd, sigma2, h_eff_hat)
}

/// Same as [`init_state`] but with a caller-provided channel matrix estimate
/// (used by the perfect-CSI baseline and the tests).
pub fn init_state_from_heff(
    grid: &GridConfig,
    layout: &FrameLayout,
    constellation: &Constellation,
    y_dd: &[Complex64],
    sigma2: f64,
    h_eff_hat: EffectiveChannel,
) -> Result<InitState> {
    // LMMSE with fallback to a larger regularizer on failure
    let mut reg = sigma2;
    let mut x_soft = None;
    for _ in 0..4 {
        match lmmse_detect(&h_eff_hat, y_dd, reg) {
            Ok(x) => {
                x_soft = Some(x);
                break;
            }
            Err(_) => reg = (reg.max(1e-12)) * 10.0,
        }
    }
    let x_soft = x_soft.ok_or_else(|| {
        Error::Factorization("LMMSE failed even with enlarged regularizer".into())
    })?;

    let x0_data: Vec<Complex64> = layout
        .data_indices
        .iter()
        .map(|&(l, k)| constellation.project_hull(x_soft[grid.idx(l, k)]))
        .collect();
    let x0_frame = crate::frame::assemble_frame(layout, &x0_data, layout.pilot_amplitude)?;
    let s0 = modem::modulate(grid, &x0_frame)?;
    let h0 = channel_vector_from_heff(grid, &h_eff_hat);
    Ok(InitState { h0, s0, x0_data, h_eff_hat })
}

/// Maps an effective channel matrix into the `(MN)^2` channel vector of the
/// time-domain spreading model.
pub fn channel_vector_from_heff(grid: &GridConfig, h_eff: &EffectiveChannel) -> Vec<Complex64> {
    let mn = grid.mn();
    // T = MOD * H * MOD^H, column by column through the modulator
    let mut t = vec![Complex64::new(0.0, 0.0); mn * mn];
    // C1 = MOD * H^H: column j of C1 = modulate(conj of row j of H)
    let mut col = vec![Complex64::new(0.0, 0.0); mn];
    let mut c1 = vec![Complex64::new(0.0, 0.0); mn * mn];
    for j in 0..mn {
        for (i, dst) in col.iter_mut().enumerate() {
            *dst = h_eff.mat[j * mn + i].conj();
        }
        let mc = modem::modulate(grid, &col).expect("size checked");
        for i in 0..mn {
            c1[i * mn + j] = mc[i];
        }
    }
    // B = C1^H = H * MOD^H ; T = MOD * B, so column j of T = modulate(B[:, j])
    for j in 0..mn {
        for (i, dst) in col.iter_mut().enumerate() {
            *dst = c1[j * mn + i].conj();
        }
        let mc = modem::modulate(grid, &col).expect("size checked");
        for i in 0..mn {
            t[i * mn + j] = mc[i];
        }
    }
    // time-domain channel: TD = F^H T (inverse unitary DFT of every column)
    let ifft = modem::fft_inverse(mn);
    let scale = 1.0 / (mn as f64).sqrt();
    let mut td = vec![Complex64::new(0.0, 0.0); mn * mn];
    for j in 0..mn {
        for (i, dst) in col.iter_mut().enumerate() {
            *dst = t[i * mn + j];
        }
        ifft.process(&mut col);
        for i in 0..mn {
            td[i * mn + j] = col[i] * scale;
        }
    }
    // H_mat[q, n] = sqrt(MN) e^{-j2pi qn/MN} TD[q, n]; h0[n*MN + q] = H_mat[q, n]
    let mnf = mn as f64;
    let root = mnf.sqrt();
    let mut h0 = vec![Complex64::new(0.0, 0.0); mn * mn];
    for n in 0..mn {
        for q in 0..mn {
            let tw = Complex64::new(0.0, -2.0 * PI * ((q * n) % mn) as f64 / mnf).exp();
            h0[n * mn + q] = root * tw * td[q * mn + n];
        }
    }
    h0
}
