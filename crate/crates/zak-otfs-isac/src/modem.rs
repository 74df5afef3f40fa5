//! Discrete Zak-OTFS modulation/demodulation, the time-domain channel, the
//! delay-Doppler effective channel, and the discrete twisted convolution.
//!
//! Conventions (fixed once, validated by the oracle tests below):
//!
//! * DD vectors use `idx(l, k) = k*M + l`.
//! * Twiddle matrix `W[l, k] = exp(-j 2 pi l k / (MN))`. With this choice the
//!   modulator is exactly the inverse discrete Zak transform of the frame and
//!   the demodulator is the forward discrete Zak transform, so the identity
//!   channel maps every frame to itself.
//! * [`modulate`] produces the frequency-domain transmit vector `s` (the
//!   vector the per-path delay phase ramp acts on); [`apply_time_channel`]
//!   produces the received time-domain samples; [`demodulate`] maps those back
//!   to the DD grid.
//! * A path with delay `tau` and Doppler `nu` acts as
//!   `r = gain * D_nu * F^H * B_tau * s` with `B_tau[n] = exp(-j 2 pi n
//!   tau/(NT))` and `D_nu[q] = exp(+j 2 pi q nu/(M delta_f))`, all DFTs
//!   unitary.
//!
//! The sampled effective channel response of a path set is, in grid units
//! `l_tau = tau*M*delta_f`, `k_nu = nu*N*T`,
//!
//! ```text
//! h_eff[a, b] = sum_i gain_i * exp(j 2 pi a b / MN)
//!               * conj(D_MN(a - l_tau_i)) * D_MN(b - k_nu_i)
//! ```
//!
//! where `D_P` is the normalized Dirichlet kernel [`dirichlet_kernel`]. This
//! is the exact finite-resolution counterpart of the continuous rectangular
//! window ambiguity kernels: `MN * D_MN` equals the zero-delay cut of the
//! time-window ambiguity function, and `conj(D_MN)` converges to the
//! (normalized) frequency-window ambiguity [`freq_window_ambiguity`] as the
//! grid grows. The effective channel matrix is the alias sum of this kernel
//! over `N` delay and `M` Doppler replicas with quasi-periodic phases
//! ([`reconstruct_heff_from_response`]), and applying the kernel through the
//! discrete twisted convolution ([`twisted_convolution`]) reproduces the
//! matrix input-output relation exactly.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::channel::Path;
use crate::frame::GridConfig;
use crate::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn fft_forward(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub(crate) fn fft_inverse(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

#[inline]
fn cis(theta: f64) -> Complex64 {
    Complex64::new(theta.cos(), theta.sin())
}

/// Normalized Dirichlet kernel `D_P(z) = (1/P) sum_{q=0}^{P-1} e^{-j2pi qz/P}`.
///
/// `D_P(0) = 1`, `D_P(z) = 0` at nonzero integers that are not multiples of
/// `P`, and the kernel is exactly `P`-periodic in `z`.
pub fn dirichlet_kernel(p: usize, z: f64) -> Complex64 {
    let pf = p as f64;
    let zr = z.rem_euclid(pf);
    if zr.abs() < 1e-13 || (pf - zr).abs() < 1e-13 {
        return Complex64::new(1.0, 0.0);
    }
    let num = Complex64::new(1.0, 0.0) - cis(-2.0 * PI * z);
    let den = Complex64::new(1.0, 0.0) - cis(-2.0 * PI * z / pf);
    num / (pf * den)
}

/// Closed-form ambiguity function of the rectangular frequency window,
/// `Y_A(tau, nu) = integral A(f) A*(f - nu) e^{j2pi f tau} df` with `A = 1` on
/// `[0, M delta_f]`.
pub fn freq_window_ambiguity(grid: &GridConfig, tau: f64, nu: f64) -> Complex64 {
    let w = grid.sample_rate();
    if nu.abs() >= w {
        return Complex64::new(0.0, 0.0);
    }
    let a = nu.max(0.0);
    let b = w + nu.min(0.0);
    let len = b - a;
    if tau == 0.0 {
        return Complex64::new(len, 0.0);
    }
    // integral_a^b e^{j2pi f tau} df = e^{j pi (a+b) tau} sin(pi len tau)/(pi tau)
    cis(PI * (a + b) * tau) * ((PI * len * tau).sin() / (PI * tau))
}

/// Zero-delay cut of the discrete periodic ambiguity function of the
/// rectangular time window: `X_B(0, z) = sum_{q=0}^{MN-1} e^{-j2pi q z/(MN)}`.
pub fn time_window_ambiguity(grid: &GridConfig, z: f64) -> Complex64 {
    let mn = grid.mn();
    mn as f64 * dirichlet_kernel(mn, z)
}

/// The twiddle factor matrix `W[l, k] = e^{-j2pi lk/(MN)}`, returned in the
/// frame linearization (`idx = k*M + l`; the diagonalized form is this vector
/// on the diagonal).
///
/// It never appears explicitly in the transform implementations: multiplying
/// the frame by `W` and applying the per-column M-point DFT is algebraically
/// the inverse discrete Zak transform followed by the full DFT, which is how
/// [`modulate`] computes it. The matrix is exposed for the matrix-form oracle
/// tests.
pub fn twiddle(grid: &GridConfig) -> Vec<Complex64> {
    let (m, n, mn) = (grid.m, grid.n, grid.mn());
    let mut w = vec![Complex64::new(0.0, 0.0); mn];
    for k in 0..n {
        for l in 0..m {
            w[k * m + l] = cis(-2.0 * PI * (l * k) as f64 / mn as f64);
        }
    }
    w
}

/// Zak-OTFS modulation: DD frame vector -> frequency-domain transmit vector.
///
/// Computed as the inverse discrete Zak transform of the frame followed by a
/// unitary MN-point DFT; both steps are isometries.
pub fn modulate(grid: &GridConfig, x_dd: &[Complex64]) -> Result<Vec<Complex64>> {
    let (m, n, mn) = (grid.m, grid.n, grid.mn());
    if x_dd.len() != mn {
        return Err(Error::SizeMismatch { expected: mn, got: x_dd.len() });
    }
    // inverse DZT: x_td[c + d*M] = (1/sqrt(N)) sum_k X[c,k] e^{+j2pi dk/N}
    let ifft_n = fft_inverse(n);
    let mut x_td = vec![Complex64::new(0.0, 0.0); mn];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let scale_n = 1.0 / (n as f64).sqrt();
    for c in 0..m {
        for k in 0..n {
            buf[k] = x_dd[k * m + c];
        }
        ifft_n.process(&mut buf);
        for d in 0..n {
            x_td[c + d * m] = buf[d] * scale_n;
        }
    }
    // s = F_MN x_td (unitary forward DFT)
    let fft_mn = fft_forward(mn);
    fft_mn.process(&mut x_td);
    let scale_mn = 1.0 / (mn as f64).sqrt();
    for v in x_td.iter_mut() {
        *v *= scale_mn;
    }
    Ok(x_td)
}

/// Zak-OTFS demodulation: received time-domain vector -> DD frame vector.
///
/// The forward discrete Zak transform:
/// `Y[l, k] = (1/sqrt(N)) sum_d r[l + d*M] e^{-j2pi dk/N}`.
pub fn demodulate(grid: &GridConfig, r: &[Complex64]) -> Result<Vec<Complex64>> {
    let (m, n, mn) = (grid.m, grid.n, grid.mn());
    if r.len() != mn {
        return Err(Error::SizeMismatch { expected: mn, got: r.len() });
    }
    let fft_n = fft_forward(n);
    let mut y = vec![Complex64::new(0.0, 0.0); mn];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let scale = 1.0 / (n as f64).sqrt();
    for l in 0..m {
        for d in 0..n {
            buf[d] = r[l + d * m];
        }
        fft_n.process(&mut buf);
        for k in 0..n {
            y[k * m + l] = buf[k] * scale;
        }
    }
    Ok(y)
}

/// Applies the sparse doubly-dispersive channel in the time domain:
/// `r = sum_i gain_i D_{nu_i} F^H B_{tau_i} s` (noise-free).
///
/// Each path costs one diagonal delay ramp, one inverse MN-point DFT and one
/// diagonal Doppler ramp. An empty path set yields the zero vector.
pub fn apply_time_channel(grid: &GridConfig, s: &[Complex64], paths: &[Path]) -> Vec<Complex64> {
    let mn = grid.mn();
    assert_eq!(s.len(), mn, "transmit vector length must be M*N");
    let mut r = vec![Complex64::new(0.0, 0.0); mn];
    if paths.is_empty() {
        return r;
    }
    let ifft = fft_inverse(mn);
    let scale = 1.0 / (mn as f64).sqrt();
    let mut buf = vec![Complex64::new(0.0, 0.0); mn];
    for p in paths {
        let l_tau = grid.delay_to_grid(p.delay_s);
        let k_nu = grid.doppler_to_grid(p.doppler_hz);
        for (nidx, (dst, &src)) in buf.iter_mut().zip(s).enumerate() {
            *dst = src * cis(-2.0 * PI * nidx as f64 * l_tau / mn as f64);
        }
        ifft.process(&mut buf);
        for (q, (acc, &v)) in r.iter_mut().zip(buf.iter()).enumerate() {
            *acc += p.gain * v * scale * cis(2.0 * PI * q as f64 * k_nu / mn as f64);
        }
    }
    r
}

/// How an [`EffectiveChannel`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelSource {
    ExactFromPaths,
    ReconstructedFromSamples,
    ReconstructedFromAtoms,
}

/// Dense MN x MN DD-domain effective channel matrix, stored row-major;
/// `y_dd = H_eff x_dd`.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    pub mn: usize,
    pub mat: Vec<Complex64>,
    pub source: ChannelSource,
}

impl EffectiveChannel {
    pub fn zeros(mn: usize, source: ChannelSource) -> Self {
        Self { mn, mat: vec![Complex64::new(0.0, 0.0); mn * mn], source }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.mat[row * self.mn + col]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut Complex64 {
        &mut self.mat[row * self.mn + col]
    }

    /// Matrix-vector product `H x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.mn);
        let mut y = vec![Complex64::new(0.0, 0.0); self.mn];
        for (row, yv) in y.iter_mut().enumerate() {
            let base = row * self.mn;
            let mut acc = Complex64::new(0.0, 0.0);
            for (col, &xv) in x.iter().enumerate() {
                acc += self.mat[base + col] * xv;
            }
            *yv = acc;
        }
        y
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Exact effective channel matrix of a path set, per-element closed form.
///
/// Row `k'M + l'`, column `kM + l`:
///
/// ```text
/// H[(l',k'),(l,k)] = sum_i gain_i * D_N(k'-k-k_nu) * D_M(l+l_tau-l')
///                    * e^{j2pi l' k_nu/MN} * e^{j2pi k (l'-l-l_tau)/MN}
/// ```
///
/// This equals the composition `demodulate . apply_time_channel . modulate`
/// applied to basis vectors (see [`effective_channel_by_composition`], which
/// is kept as the independent oracle route).
pub fn effective_channel_from_paths(grid: &GridConfig, paths: &[Path]) -> EffectiveChannel {
    let (m, n, mn) = (grid.m, grid.n, grid.mn());
    let mut h = EffectiveChannel::zeros(mn, ChannelSource::ExactFromPaths);
    let mnf = mn as f64;
    for p in paths {
        let l_tau = grid.delay_to_grid(p.delay_s);
        let k_nu = grid.doppler_to_grid(p.doppler_hz);
        // per-path lookup tables
        let dn: Vec<Complex64> = (0..2 * n - 1)
            .map(|i| dirichlet_kernel(n, (i as i64 - (n as i64 - 1)) as f64 - k_nu))
            .collect();
        let dm: Vec<Complex64> = (0..m)
            .map(|dl| dirichlet_kernel(m, dl as f64 + l_tau))
            .collect();
        let pl: Vec<Complex64> = (0..m)
            .map(|lp| cis(2.0 * PI * lp as f64 * k_nu / mnf))
            .collect();
        let pk_tau: Vec<Complex64> = (0..n)
            .map(|k| cis(-2.0 * PI * k as f64 * l_tau / mnf))
            .collect();
        let pk_dl: Vec<Complex64> = (0..(2 * m - 1) * n)
            .map(|i| {
                let k = i / (2 * m - 1);
                let dl = (i % (2 * m - 1)) as i64 - (m as i64 - 1);
                cis(2.0 * PI * k as f64 * dl as f64 / mnf)
            })
            .collect();
        for kp in 0..n {
            for lp in 0..m {
                let row = kp * m + lp;
                for k in 0..n {
                    let dnv = dn[(kp as i64 - k as i64 + n as i64 - 1) as usize];
                    let row_base = row * mn + k * m;
                    for l in 0..m {
                        let dl = lp as i64 - l as i64;
                        let dmv = dm[(l as i64 - lp as i64).rem_euclid(m as i64) as usize];
                        let ph = pl[lp]
                            * pk_tau[k]
                            * pk_dl[k * (2 * m - 1) + (dl + m as i64 - 1) as usize];
                        h.mat[row_base + l] += p.gain * dnv * dmv * ph;
                    }
                }
            }
        }
    }
    h
}

/// Effective channel built by pushing every basis vector through
/// `demodulate(apply_time_channel(modulate(e_j)))`. Reference route used by
/// the oracle tests; [`effective_channel_from_paths`] is the fast closed form.
pub fn effective_channel_by_composition(grid: &GridConfig, paths: &[Path]) -> EffectiveChannel {
    let mn = grid.mn();
    let mut h = EffectiveChannel::zeros(mn, ChannelSource::ExactFromPaths);
    let mut e = vec![Complex64::new(0.0, 0.0); mn];
    for j in 0..mn {
        e[j] = Complex64::new(1.0, 0.0);
        let s = modulate(grid, &e).unwrap();
        let r = apply_time_channel(grid, &s, paths);
        let y = demodulate(grid, &r).unwrap();
        for (row, &v) in y.iter().enumerate() {
            *h.at_mut(row, j) = v;
        }
        e[j] = Complex64::new(0.0, 0.0);
    }
    h
}

/// Sampled DD-domain effective channel response `h_eff[l, k]` of a path set at
/// integer offsets `(l, k)` (any integers; the kernel is MN-biperiodic).
///
/// Normalized so a single path with zero delay/Doppler and unit gain gives
/// `h_eff[0, 0] = 1`; the raw kernel-peak product of the window ambiguity
/// functions (`M delta_f * MN`) is divided out, as pinned by the basis oracle.
pub fn h_eff_response(grid: &GridConfig, paths: &[Path], l: i64, k: i64) -> Complex64 {
    let mn = grid.mn();
    let mnf = mn as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in paths {
        let l_tau = grid.delay_to_grid(p.delay_s);
        let k_nu = grid.doppler_to_grid(p.doppler_hz);
        acc += p.gain
            * cis(2.0 * PI * (l as f64) * (k as f64) / mnf)
            * dirichlet_kernel(mn, l as f64 - l_tau).conj()
            * dirichlet_kernel(mn, k as f64 - k_nu);
    }
    acc
}

/// Rebuilds the full effective channel matrix from samples of the channel
/// response: the alias sum over `N` delay replicas and `M` Doppler replicas
/// with the quasi-periodic phase factors,
///
/// ```text
/// H[(l',k'),(l,k)] = sum_{n=0}^{N-1} sum_{w=0}^{M-1}
///     h_eff[l'-l-nM, k'-k-wN] * e^{j2pi nk/N} * e^{j2pi (k'-k-wN)(l+nM)/MN}
/// ```
///
/// Fed with exact [`h_eff_response`] samples this reproduces
/// [`effective_channel_from_paths`] to machine precision; fed with a
/// zero-padded pilot estimate it is the model-free reconstruction.
pub fn reconstruct_heff_from_response<F>(grid: &GridConfig, sample: F) -> EffectiveChannel
where
    F: Fn(i64, i64) -> Complex64,
{
    let (m, n, mn) = (grid.m, grid.n, grid.mn());
    let mnf = mn as f64;
    let mut h = EffectiveChannel::zeros(mn, ChannelSource::ReconstructedFromSamples);
    for kp in 0..n as i64 {
        for lp in 0..m as i64 {
            let row = (kp * m as i64 + lp) as usize;
            for k in 0..n as i64 {
                for l in 0..m as i64 {
                    let col = (k * m as i64 + l) as usize;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for nn in 0..n as i64 {
                        let a = lp - l - nn * m as i64;
                        let ph_n = cis(2.0 * PI * (nn * k) as f64 / n as f64);
                        for w in 0..m as i64 {
                            let b = kp - k - w * n as i64;
                            let ph = cis(2.0 * PI * b as f64 * (l + nn * m as i64) as f64 / mnf);
                            acc += sample(a, b) * ph_n * ph;
                        }
                    }
                    *h.at_mut(row, col) = acc;
                }
            }
        }
    }
    h
}

/// Discrete twisted convolution of a DD kernel with a quasi-periodically
/// extended frame:
///
/// ```text
/// Y[l',k'] = sum_{l,k} sum_{n,w} h[l'-l-nM, k'-k-wN] X[l,k]
///            * e^{j2pi nk/N} * e^{j2pi (k'-k-wN)(l+nM)/MN}
/// ```
///
/// The phase `e^{j2pi nk/N}` is the quasi-periodic extension of the frame
/// across delay replicas (`X[l+nM, k] = e^{j2pi nk/N} X[l, k]`); the second
/// factor is the twisted-convolution phase. With the exact channel response as
/// the kernel this equals the matrix input-output relation.
pub fn twisted_convolution<F>(grid: &GridConfig, h_fn: F, x_dd: &[Complex64]) -> Vec<Complex64>
where
    F: Fn(i64, i64) -> Complex64,
{
    let (m, n, mn) = (grid.m, grid.n, grid.mn());
    assert_eq!(x_dd.len(), mn, "frame length must be M*N");
    let mnf = mn as f64;
    let mut y = vec![Complex64::new(0.0, 0.0); mn];
    for kp in 0..n as i64 {
        for lp in 0..m as i64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n as i64 {
                for l in 0..m as i64 {
                    let xv = x_dd[(k * m as i64 + l) as usize];
                    if xv.norm_sqr() == 0.0 {
                        continue;
                    }
                    for nn in 0..n as i64 {
                        let a = lp - l - nn * m as i64;
                        let ph_n = cis(2.0 * PI * (nn * k) as f64 / n as f64);
                        for w in 0..m as i64 {
                            let b = kp - k - w * n as i64;
                            let ph = cis(2.0 * PI * b as f64 * (l + nn * m as i64) as f64 / mnf);
                            acc += h_fn(a, b) * ph_n * ph * xv;
                        }
                    }
                }
            }
            y[(kp * m as i64 + lp) as usize] = acc;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Path;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grid(m: usize, n: usize) -> GridConfig {
        GridConfig::new(m, n, 30e3, 24e9).unwrap()
    }

    fn random_frame(rng: &mut ChaCha8Rng, mn: usize) -> Vec<Complex64> {
        (0..mn)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect()
    }

    fn random_paths(rng: &mut ChaCha8Rng, g: &GridConfig, count: usize) -> Vec<Path> {
        (0..count)
            .map(|_| Path {
                gain: Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * 2.0,
                delay_s: g.grid_to_delay(rng.gen::<f64>() * 1.9),
                doppler_hz: g.grid_to_doppler(rng.gen::<f64>() * 1.9),
            })
            .collect()
    }

    #[test]
    fn modulate_is_isometric_and_zero_maps_to_zero() {
        let g = grid(8, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_frame(&mut rng, g.mn());
        let s = modulate(&g, &x).unwrap();
        let nx: f64 = x.iter().map(|c| c.norm_sqr()).sum();
        let ns: f64 = s.iter().map(|c| c.norm_sqr()).sum();
        assert!((nx - ns).abs() < 1e-10 * nx);
        let zero = vec![Complex64::new(0.0, 0.0); g.mn()];
        assert!(modulate(&g, &zero).unwrap().iter().all(|c| c.norm() == 0.0));
        assert!(modulate(&g, &x[..10]).is_err());
    }

    #[test]
    fn identity_channel_roundtrip() {
        let g = grid(8, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_frame(&mut rng, g.mn());
        let s = modulate(&g, &x).unwrap();
        let unit = vec![Path { gain: Complex64::new(1.0, 0.0), delay_s: 0.0, doppler_hz: 0.0 }];
        let r = apply_time_channel(&g, &s, &unit);
        let y = demodulate(&g, &r).unwrap();
        let err: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "identity roundtrip error {err}");
    }

    #[test]
    fn pure_doppler_path_is_elementwise_ramp() {
        let g = grid(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_frame(&mut rng, g.mn());
        let nu = g.grid_to_doppler(0.7);
        let gain = Complex64::new(0.4, -1.1);
        let paths = vec![Path { gain, delay_s: 0.0, doppler_hz: nu }];
        let r = apply_time_channel(&g, &s, &paths);
        // B_0 = I and F^H F = I, so r = gain * D_nu * F^H s
        let ifft = fft_inverse(g.mn());
        let mut td = s.clone();
        ifft.process(&mut td);
        let k_nu = g.doppler_to_grid(nu);
        for (q, (got, &x)) in r.iter().zip(td.iter()).enumerate() {
            let want = gain * x / (g.mn() as f64).sqrt()
                * cis(2.0 * PI * q as f64 * k_nu / g.mn() as f64);
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn time_channel_matches_double_sum_oracle() {
        // brute-force evaluation of the sampled per-path double sum over n:
        // r[q] = sum_i g_i e^{j2pi q k_nu/MN} (1/sqrt(MN)) sum_n s_n
        //        e^{j2pi n (q - l_tau)/MN}
        let g = grid(4, 8);
        let mn = g.mn();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_frame(&mut rng, mn);
        let paths = random_paths(&mut rng, &g, 2);
        let r = apply_time_channel(&g, &s, &paths);
        let scale = 1.0 / (mn as f64).sqrt();
        for q in 0..mn {
            let mut want = Complex64::new(0.0, 0.0);
            for p in &paths {
                let l_tau = g.delay_to_grid(p.delay_s);
                let k_nu = g.doppler_to_grid(p.doppler_hz);
                let mut inner = Complex64::new(0.0, 0.0);
                for (nidx, &sv) in s.iter().enumerate() {
                    inner += sv * cis(2.0 * PI * nidx as f64 * (q as f64 - l_tau) / mn as f64);
                }
                want += p.gain * cis(2.0 * PI * q as f64 * k_nu / mn as f64) * inner * scale;
            }
            assert!((r[q] - want).norm() < 1e-9, "sample {q}");
        }
        // empty path set -> zero output
        let r0 = apply_time_channel(&g, &s, &[]);
        assert!(r0.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn effective_channel_matches_basis_composition_oracle() {
        let g = grid(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let paths = random_paths(&mut rng, &g, 2);
        let fast = effective_channel_from_paths(&g, &paths);
        let oracle = effective_channel_by_composition(&g, &paths);
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in fast.mat.iter().zip(&oracle.mat) {
            num += (a - b).norm_sqr();
            den += b.norm_sqr();
        }
        assert!((num / den).sqrt() < 1e-12);
    }

    #[test]
    fn single_zero_path_gives_identity_matrix() {
        let g = grid(4, 8);
        let h = effective_channel_from_paths(
            &g,
            &[Path { gain: Complex64::new(1.0, 0.0), delay_s: 0.0, doppler_hz: 0.0 }],
        );
        for r in 0..g.mn() {
            for c in 0..g.mn() {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((h.at(r, c) - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn effective_channel_linear_in_gains() {
        let g = grid(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let paths = random_paths(&mut rng, &g, 2);
        let h_both = effective_channel_from_paths(&g, &paths);
        let h_a = effective_channel_from_paths(&g, &paths[..1]);
        let h_b = effective_channel_from_paths(&g, &paths[1..]);
        for i in 0..h_both.mat.len() {
            assert!((h_both.mat[i] - h_a.mat[i] - h_b.mat[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn response_kernel_peak_and_scaling() {
        let g = grid(8, 16);
        let unit = vec![Path { gain: Complex64::new(1.0, 0.0), delay_s: 0.0, doppler_hz: 0.0 }];
        // raw kernel-peak product of the two window ambiguity functions
        let raw = freq_window_ambiguity(&g, 0.0, 0.0).re * time_window_ambiguity(&g, 0.0).re;
        assert!((raw - g.sample_rate() * g.mn() as f64).abs() < 1e-6);
        // normalized response at the origin is raw / (M delta_f * MN) = 1
        let h00 = h_eff_response(&g, &unit, 0, 0);
        assert!((h00 - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        // X_B~(0, m*MN) = MN at integer multiples of MN
        assert!((time_window_ambiguity(&g, 128.0) - Complex64::new(128.0, 0.0)).norm() < 1e-9);
        assert!((time_window_ambiguity(&g, -256.0) - Complex64::new(128.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn freq_ambiguity_matches_quadrature() {
        // adaptive Simpson quadrature of integral A(f)A*(f-nu) e^{j2pi f tau} df
        fn simpson<Ff: Fn(f64) -> Complex64>(f: &Ff, a: f64, b: f64, n: usize) -> Complex64 {
            let h = (b - a) / n as f64;
            let mut acc = f(a) + f(b);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += f(a + i as f64 * h) * w;
            }
            acc * (h / 3.0)
        }
        let g = grid(8, 16);
        let w = g.sample_rate();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let tau = (rng.gen::<f64>() - 0.2) * 3.0 * g.delay_resolution();
            let nu = (rng.gen::<f64>() - 0.5) * 1.6 * w;
            let lo = nu.max(0.0);
            let hi = w + nu.min(0.0);
            let closed = freq_window_ambiguity(&g, tau, nu);
            if hi <= lo {
                assert_eq!(closed, Complex64::new(0.0, 0.0));
                continue;
            }
            let f = |x: f64| cis(2.0 * PI * x * tau);
            let mut n = 64;
            let mut prev = simpson(&f, lo, hi, n);
            loop {
                n *= 2;
                let cur = simpson(&f, lo, hi, n);
                if (cur - prev).norm() < 1e-9 * (1.0 + cur.norm()) || n > 1 << 16 {
                    prev = cur;
                    break;
                }
                prev = cur;
            }
            assert!(
                (closed - prev).norm() <= 1e-6 * (1.0 + prev.norm()),
                "tau={tau} nu={nu}: closed={closed} quad={prev}"
            );
        }
    }

    #[test]
    fn time_ambiguity_matches_direct_sum() {
        let g = grid(8, 16);
        let mn = g.mn();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let z = (rng.gen::<f64>() - 0.5) * 3.0 * mn as f64;
            let mut direct = Complex64::new(0.0, 0.0);
            for q in 0..mn {
                direct += cis(-2.0 * PI * q as f64 * z / mn as f64);
            }
            let closed = time_window_ambiguity(&g, z);
            assert!((closed - direct).norm() < 1e-10 * (1.0 + direct.norm()));
        }
    }

    #[test]
    fn reconstruction_from_exact_samples_matches_matrix() {
        let g = grid(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let paths = random_paths(&mut rng, &g, 2);
        let truth = effective_channel_from_paths(&g, &paths);
        let rec = reconstruct_heff_from_response(&g, |a, b| h_eff_response(&g, &paths, a, b));
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in rec.mat.iter().zip(&truth.mat) {
            num += (a - b).norm_sqr();
            den += b.norm_sqr();
        }
        assert!((num / den).sqrt() < 1e-10);
        // zero samples -> zero matrix; identity samples -> identity matrix
        let zero = reconstruct_heff_from_response(&g, |_, _| Complex64::new(0.0, 0.0));
        assert!(zero.mat.iter().all(|c| c.norm() == 0.0));
        let id = reconstruct_heff_from_response(&g, |a, b| {
            if a.rem_euclid(g.mn() as i64) == 0 && b.rem_euclid(g.mn() as i64) == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        for r in 0..g.mn() {
            for c in 0..g.mn() {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((id.at(r, c) - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn twisted_convolution_matches_matrix_path() {
        let g = grid(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let paths = random_paths(&mut rng, &g, 2);
        let x = random_frame(&mut rng, g.mn());
        let y_mat = effective_channel_from_paths(&g, &paths).apply(&x);
        let y_tw = twisted_convolution(&g, |a, b| h_eff_response(&g, &paths, a, b), &x);
        let num: f64 = y_tw.iter().zip(&y_mat).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = y_mat.iter().map(|c| c.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-10);
    }

    #[test]
    fn twisted_convolution_delta_kernel_is_identity() {
        let g = grid(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_frame(&mut rng, g.mn());
        let y = twisted_convolution(
            &g,
            |a, b| {
                if a == 0 && b == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            },
            &x,
        );
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn twisted_convolution_integer_tap_shifts_and_phases() {
        // a single integer tap (l0, k0) cyclically shifts the frame with
        // phase ramps only; the kernel is periodic across replicas and the
        // pure-delta kernel corresponds to a path of gain e^{-j2pi l0 k0/MN}
        let g = grid(4, 8);
        let (m, n, mn) = (g.m as i64, g.n as i64, g.mn() as i64);
        let (l0, k0) = (1i64, 3i64);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_frame(&mut rng, g.mn());
        let y = twisted_convolution(
            &g,
            |a, b| {
                if (a - l0).rem_euclid(mn) == 0 && (b - k0).rem_euclid(mn) == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            },
            &x,
        );
        let gain = cis(-2.0 * PI * (l0 * k0) as f64 / mn as f64);
        let tap = vec![Path {
            gain,
            delay_s: g.grid_to_delay(l0 as f64),
            doppler_hz: g.grid_to_doppler(k0 as f64),
        }];
        let y_mat = effective_channel_from_paths(&g, &tap).apply(&x);
        for (got, want) in y.iter().zip(&y_mat) {
            assert!((got - want).norm() < 1e-10, "got {got}, want {want}");
        }
        // magnitudes are a pure cyclic shift of the input
        for kp in 0..n {
            for lp in 0..m {
                let l_src = (lp - l0).rem_euclid(m);
                let k_src = (kp - k0).rem_euclid(n);
                let got = y[(kp * m + lp) as usize].norm();
                let want = x[(k_src * m + l_src) as usize].norm();
                assert!((got - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn modulate_equals_twiddled_matrix_form() {
        // s[m*N + k] = sum_l F_M[m, l] * W[l, k] * X[l, k]
        let g = grid(4, 8);
        let (m, n) = (g.m, g.n);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_frame(&mut rng, g.mn());
        let w = twiddle(&g);
        let s = modulate(&g, &x).unwrap();
        let scale = 1.0 / (m as f64).sqrt();
        for mm in 0..m {
            for k in 0..n {
                let mut want = Complex64::new(0.0, 0.0);
                for l in 0..m {
                    let f_ml = cis(-2.0 * PI * (mm * l) as f64 / m as f64) * scale;
                    want += f_ml * w[k * m + l] * x[k * m + l];
                }
                let got = s[mm * n + k];
                assert!((got - want).norm() < 1e-12, "bin ({mm},{k})");
            }
        }
        // unit modulus twiddle entries
        assert!(w.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    proptest::proptest! {
        #[test]
        fn modulation_isometry_and_identity_roundtrip(seed in 0u64..200) {
            let g = grid(4, 8);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_frame(&mut rng, g.mn());
            let s = modulate(&g, &x).unwrap();
            let nx: f64 = x.iter().map(|c| c.norm_sqr()).sum();
            let ns: f64 = s.iter().map(|c| c.norm_sqr()).sum();
            proptest::prop_assert!((nx - ns).abs() <= 1e-10 * (1.0 + nx));
            let unit = [Path { gain: Complex64::new(1.0, 0.0), delay_s: 0.0, doppler_hz: 0.0 }];
            let y = demodulate(&g, &apply_time_channel(&g, &s, &unit)).unwrap();
            let err = y.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            proptest::prop_assert!(err < 1e-10);
        }
    }

    #[test]
    fn dirichlet_kernel_values() {
        assert!((dirichlet_kernel(8, 0.0) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(dirichlet_kernel(8, 3.0).norm() < 1e-12);
        assert!((dirichlet_kernel(8, 8.0) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((dirichlet_kernel(8, -16.0) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        // periodicity at fractional arguments
        let a = dirichlet_kernel(12, 3.37);
        let b = dirichlet_kernel(12, 3.37 - 24.0);
        assert!((a - b).norm() < 1e-12);
    }
}
