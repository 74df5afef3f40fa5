//! Joint channel-parameter estimation and symbol detection: the outer loop
//! alternating an inexact accelerated proximal-gradient channel update
//! (atomic-norm denoising as the proximal step) with a majorize-minimize
//! accelerated projected-gradient symbol update, under a growing negative
//! square penalty that drives relaxed symbols toward constellation vertices.
//!
//! The time-domain observation model is `r = S(s) h + n` where `h` is the
//! `(MN)^2` delay-Doppler spreading vector and `S(s) = (s^T (x) I) D` acts
//! block-wise ([`forward_s`]); a sparse channel makes `h` a short conic
//! combination of atoms, recovered by [`crate::anm::coordinate_descent`].
//! Momentum scalars follow the standard FISTA recursion on both blocks and
//! are clamped to the bounds that guarantee convergence to an
//! eps-stationary point.

use num_complex::Complex64;

use crate::anm::{self, AtomicRepresentation, SolverBudget, SolverStats};
use crate::channel::Path;
use crate::frame::{Constellation, FrameLayout, GridConfig};
use crate::init;
use crate::modem::{self, ChannelSource, EffectiveChannel};
use crate::Result;

/// Applies `S(s) h` without materializing the `MN x (MN)^2` matrix:
/// `out[q] = (1/sqrt(MN)) sum_n s[n] e^{j2pi qn/MN} h[n*MN + q]`.
pub fn forward_s(grid: &GridConfig, s: &[Complex64], h: &[Complex64]) -> Vec<Complex64> {
    let mn = grid.mn();
    assert_eq!(s.len(), mn);
    assert_eq!(h.len(), mn * mn);
    let tab = twiddle_table(mn);
    let scale = 1.0 / (mn as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); mn];
    for (n, &sv) in s.iter().enumerate() {
        if sv.norm_sqr() == 0.0 {
            continue;
        }
        let block = &h[n * mn..(n + 1) * mn];
        let mut idx = 0usize;
        for (q, acc) in out.iter_mut().enumerate() {
            *acc += sv * tab[idx] * block[q];
            idx += n;
            if idx >= mn {
                idx -= mn;
            }
        }
    }
    for v in out.iter_mut() {
        *v *= scale;
    }
    out
}

/// Exact conjugate transpose of [`forward_s`]:
/// `out[n*MN + q] = (1/sqrt(MN)) conj(s[n]) e^{-j2pi qn/MN} u[q]`.
pub fn adjoint_s(grid: &GridConfig, s: &[Complex64], u: &[Complex64]) -> Vec<Complex64> {
    let mn = grid.mn();
    assert_eq!(s.len(), mn);
    assert_eq!(u.len(), mn);
    let tab = twiddle_table(mn);
    let scale = 1.0 / (mn as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); mn * mn];
    for (n, &sv) in s.iter().enumerate() {
        let svc = sv.conj() * scale;
        let block = &mut out[n * mn..(n + 1) * mn];
        let mut idx = 0usize;
        for (q, dst) in block.iter_mut().enumerate() {
            *dst = svc * tab[idx].conj() * u[q];
            idx += n;
            if idx >= mn {
                idx -= mn;
            }
        }
    }
    out
}

fn twiddle_table(mn: usize) -> Vec<Complex64> {
    (0..mn)
        .map(|j| {
            let th = 2.0 * std::f64::consts::PI * j as f64 / mn as f64;
            Complex64::new(th.cos(), th.sin())
        })
        .collect()
}

/// Running momentum clamps from Theorem-style bounds: the observed range of
/// the channel step sizes bounds the channel momentum, the observed range of
/// the symbol step sizes bounds the symbol momentum.
#[derive(Debug, Clone, Copy)]
pub struct MomentumBounds {
    pub theta: f64,
    c_lo_s: f64,
    c_hi_s: f64,
    c_lo_h: f64,
    c_hi_h: f64,
}

impl MomentumBounds {
    pub fn new(theta: f64) -> Self {
        assert!(theta > 0.0 && theta <= 1.0);
        Self { theta, c_lo_s: f64::NAN, c_hi_s: f64::NAN, c_lo_h: f64::NAN, c_hi_h: f64::NAN }
    }

    pub fn observe_alpha(&mut self, alpha: f64) {
        let a = alpha.max(1e-12);
        if self.c_lo_s.is_nan() {
            self.c_lo_s = a;
            self.c_hi_s = a;
        } else {
            self.c_lo_s = self.c_lo_s.min(a);
            self.c_hi_s = self.c_hi_s.max(a);
        }
    }

    pub fn observe_beta(&mut self, beta: f64) {
        let b = beta.max(1e-12);
        if self.c_lo_h.is_nan() {
            self.c_lo_h = b;
            self.c_hi_h = b;
        } else {
            self.c_lo_h = self.c_lo_h.min(b);
            self.c_hi_h = self.c_hi_h.max(b);
        }
    }

    /// Clamp for the channel extrapolation weight.
    pub fn mu_bar(&self) -> f64 {
        if self.c_lo_s.is_nan() {
            0.0
        } else {
            (self.c_lo_s / self.c_hi_s * (1.0 - self.theta)).sqrt()
        }
    }

    /// Clamp for the symbol extrapolation weight.
    pub fn iota_bar(&self) -> f64 {
        if self.c_lo_h.is_nan() {
            0.0
        } else {
            (self.c_lo_h / self.c_hi_h * (1.0 - self.theta)).sqrt()
        }
    }
}

/// Outer-loop options; defaults follow the simulation setup.
#[derive(Debug, Clone)]
pub struct IsacOptions {
    pub t_max: usize,
    /// Extrapolation on (accelerated) or off (ordinary descent).
    pub accelerated: bool,
    pub theta: f64,
    /// `eps0 = eps0_eta_factor * eta` starts the halving tolerance schedule.
    pub eps0_eta_factor: f64,
    /// Scale on the atomic-norm regularizer formula.
    pub eta_scale: f64,
    /// Use `||s||^2` as the channel step size instead of the tight Lipschitz
    /// constant `||s||^2 / MN`.
    pub paper_alpha: bool,
    pub rho0_beta_factor: f64,
    pub rho_growth: f64,
    pub rho_period: usize,
    pub rho_upb_beta_factor: f64,
    /// Penalty-growth trigger on `||x_{t+1} - x_t||^2`; `None` = `1e-6 * MN`.
    pub delta_x_trigger: Option<f64>,
    /// Stop when `||h_{t+1} - h_t||_2` drops below this; `None` = `1e-6 * MN`.
    pub delta_h_stop: Option<f64>,
    /// Detection floor `|c_i| >= kappa * eta / (MN)^2`.
    pub amplitude_floor_kappa: f64,
    pub budget: SolverBudget,
}

impl Default for IsacOptions {
    fn default() -> Self {
        Self {
            t_max: 200,
            accelerated: true,
            theta: 0.1,
            eps0_eta_factor: 1e-2,
            eta_scale: 0.04,
            paper_alpha: false,
            rho0_beta_factor: 0.01,
            rho_growth: 2.0,
            rho_period: 10,
            rho_upb_beta_factor: 10.0,
            delta_x_trigger: None,
            delta_h_stop: None,
            amplitude_floor_kappa: 1.0,
            budget: SolverBudget::default(),
        }
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: usize,
    /// Data fit plus `eta * sum |c_i|`.
    pub objective: f64,
    /// Objective minus `rho ||x||^2` (the penalty model value).
    pub penalty_objective: f64,
    pub dh_norm: f64,
    pub rho: f64,
    pub tuples: usize,
    pub eps: f64,
}

/// Final state of a receiver run.
#[derive(Debug, Clone)]
pub struct IsacOutcome {
    /// Tuples above the amplitude floor, as a path set.
    pub estimate: Vec<Path>,
    pub representation: AtomicRepresentation,
    /// Effective channel reconstructed from the final tuples.
    pub h_eff: EffectiveChannel,
    /// Hard-decided data symbols.
    pub x_data: Vec<Complex64>,
    /// Final hull-constrained soft symbols.
    pub x_soft: Vec<Complex64>,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub converged: bool,
    pub eta: f64,
    pub eps0: f64,
    /// Total objective-monotonicity violations reported by the inner solver.
    pub solver_violations: usize,
    /// Largest inner-solver objective rise seen across the run.
    pub max_solver_rise: f64,
    pub momentum: MomentumBounds,
}

/// One inexact accelerated proximal-gradient channel step: extrapolate,
/// gradient step on the data fit, then atomic-norm denoising as the proximal
/// operator. Returns the new channel vector with its atomic decomposition.
#[allow(clippy::too_many_arguments)]
pub fn channel_update(
    grid: &GridConfig,
    r: &[Complex64],
    s: &[Complex64],
    h: &[Complex64],
    h_prev: &[Complex64],
    mu: f64,
    alpha: f64,
    eta: f64,
    budget: &SolverBudget,
) -> (Vec<Complex64>, AtomicRepresentation, SolverStats) {
    channel_update_warm(grid, r, s, h, h_prev, mu, alpha, eta, budget, None)
}

/// [`channel_update`] with the previous atomic decomposition seeding the
/// proximal solve.
#[allow(clippy::too_many_arguments)]
pub fn channel_update_warm(
    grid: &GridConfig,
    r: &[Complex64],
    s: &[Complex64],
    h: &[Complex64],
    h_prev: &[Complex64],
    mu: f64,
    alpha: f64,
    eta: f64,
    budget: &SolverBudget,
    warm: Option<&AtomicRepresentation>,
) -> (Vec<Complex64>, AtomicRepresentation, SolverStats) {
    let mn = grid.mn();
    let mut h_tilde = vec![Complex64::new(0.0, 0.0); mn * mn];
    for ((dst, &hv), &hp) in h_tilde.iter_mut().zip(h).zip(h_prev) {
        *dst = hv + mu * (hv - hp);
    }
    let resid = {
        let mut f = forward_s(grid, s, &h_tilde);
        for (fv, &rv) in f.iter_mut().zip(r) {
            *fv -= rv;
        }
        f
    };
    let grad = adjoint_s(grid, s, &resid);
    for (dst, gv) in h_tilde.iter_mut().zip(grad) {
        *dst -= gv / alpha;
    }
    let (rep, stats) = anm::coordinate_descent_warm(grid, &h_tilde, alpha, eta, budget, warm);
    (rep.dense.clone(), rep, stats)
}

/// Effective channel matrix synthesized from an atomic decomposition: the
/// tuples act as a path set with gains `c_i`.
pub fn reconstruct_heff_from_atoms(
    grid: &GridConfig,
    rep: &AtomicRepresentation,
) -> EffectiveChannel {
    let paths: Vec<Path> = rep
        .tuples
        .iter()
        .map(|t| Path { gain: t.coeff, delay_s: t.delay_s, doppler_hz: t.doppler_hz })
        .collect();
    let mut h = modem::effective_channel_from_paths(grid, &paths);
    h.source = ChannelSource::ReconstructedFromAtoms;
    h
}

/// Data-column submatrix of an effective channel.
pub struct DataSubchannel {
    pub mn: usize,
    pub d: usize,
    /// Row-major `mn x d`.
    pub mat: Vec<Complex64>,
}

impl DataSubchannel {
    pub fn from_heff(h: &EffectiveChannel, layout: &FrameLayout) -> Self {
        let mn = h.mn;
        let d = layout.data_indices.len();
        let mut mat = vec![Complex64::new(0.0, 0.0); mn * d];
        for (jj, &(l, k)) in layout.data_indices.iter().enumerate() {
            let col = layout.idx(l, k);
            for row in 0..mn {
                mat[row * d + jj] = h.mat[row * mn + col];
            }
        }
        Self { mn, d, mat }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.d);
        let mut y = vec![Complex64::new(0.0, 0.0); self.mn];
        for (row, yv) in y.iter_mut().enumerate() {
            let base = row * self.d;
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &xv) in x.iter().enumerate() {
                acc += self.mat[base + j] * xv;
            }
            *yv = acc;
        }
        y
    }

    pub fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(y.len(), self.mn);
        let mut x = vec![Complex64::new(0.0, 0.0); self.d];
        for (row, &yv) in y.iter().enumerate() {
            let base = row * self.d;
            for (j, xv) in x.iter_mut().enumerate() {
                *xv += self.mat[base + j].conj() * yv;
            }
        }
        x
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.mat.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest eigenvalue of `H^H H` by warm-started power iteration.
    pub fn lambda_max(&self, warm: &mut Option<Vec<Complex64>>, tol: f64) -> f64 {
        if self.frobenius_sq() == 0.0 {
            return 0.0;
        }
        let mut v = match warm.take() {
            Some(v) if v.len() == self.d => v,
            _ => vec![Complex64::new(1.0, 0.0); self.d],
        };
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            v = vec![Complex64::new(1.0, 0.0); self.d];
        } else {
            for c in v.iter_mut() {
                *c /= norm;
            }
        }
        let mut lambda = 0.0f64;
        for _ in 0..500 {
            let w = self.apply(&v);
            let lambda_new: f64 = w.iter().map(|c| c.norm_sqr()).sum();
            let mut u = self.adjoint(&w);
            let un = u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if un == 0.0 {
                lambda = 0.0;
                break;
            }
            for c in u.iter_mut() {
                *c /= un;
            }
            v = u;
            if (lambda_new - lambda).abs() <= tol * lambda_new.max(1e-300) {
                lambda = lambda_new;
                break;
            }
            lambda = lambda_new;
        }
        *warm = Some(v);
        lambda
    }
}

/// One accelerated projected-gradient step on the majorant of the penalized
/// symbol objective: extrapolate, take a `1/beta` step along
/// `H^H(H x_tilde - y_d) - 2 rho x`, project each coordinate onto the
/// constellation hull.
#[allow(clippy::too_many_arguments)]
pub fn symbol_update(
    constellation: &Constellation,
    sub: &DataSubchannel,
    y_d: &[Complex64],
    x: &[Complex64],
    x_prev: &[Complex64],
    iota: f64,
    rho: f64,
    beta: f64,
) -> Vec<Complex64> {
    let d = sub.d;
    assert_eq!(x.len(), d);
    let mut x_tilde = vec![Complex64::new(0.0, 0.0); d];
    for ((dst, &xv), &xp) in x_tilde.iter_mut().zip(x).zip(x_prev) {
        *dst = xv + iota * (xv - xp);
    }
    let mut resid = sub.apply(&x_tilde);
    for (rv, &yv) in resid.iter_mut().zip(y_d) {
        *rv -= yv;
    }
    let grad_fit = sub.adjoint(&resid);
    let mut out = vec![Complex64::new(0.0, 0.0); d];
    for i in 0..d {
        let g = grad_fit[i] - 2.0 * rho * x[i];
        out[i] = constellation.project_hull(x_tilde[i] - g / beta);
    }
    out
}

/// Multiplicative penalty growth, capped: fires when the symbol iterate has
/// stalled or on the periodic schedule.
pub fn rho_schedule(
    rho: f64,
    dx_norm_sq: f64,
    t: usize,
    trigger: f64,
    period: usize,
    growth: f64,
    upper: f64,
) -> f64 {
    if dx_norm_sq <= trigger || (period > 0 && t % period == 0) {
        (rho * growth).min(upper)
    } else {
        rho
    }
}

/// Full receiver run from a time-domain observation.
///
/// Initializes from the model-free pilot estimate and LMMSE soft symbols,
/// then alternates channel and symbol updates until the channel iterate
/// stalls or `t_max` is reached. In noiseless runs the regularizer is kept
/// positive by a small noise floor so the inner solver terminates cleanly.
pub fn run(
    grid: &GridConfig,
    layout: &FrameLayout,
    constellation: &Constellation,
    r: &[Complex64],
    y_dd: &[Complex64],
    sigma2: f64,
    opts: &IsacOptions,
) -> Result<IsacOutcome> {
    let st = init::init_state(grid, layout, constellation, y_dd, sigma2)?;
    run_from_init(grid, layout, constellation, r, y_dd, sigma2, opts, st)
}

/// [`run`] with a caller-provided starting point.
#[allow(clippy::too_many_arguments)]
pub fn run_from_init(
    grid: &GridConfig,
    layout: &FrameLayout,
    constellation: &Constellation,
    r: &[Complex64],
    y_dd: &[Complex64],
    sigma2: f64,
    opts: &IsacOptions,
    st: init::InitState,
) -> Result<IsacOutcome> {
    let mn = grid.mn();
    let mn_sq = (mn * mn) as f64;
    let sigma_eff = sigma2.sqrt().max(1e-7);
    // the regularizer uses the nominal unit-power frame energy ||s||^2 = MN;
    // the initial soft symbols underestimate it and would underestimate the
    // noise level of the dual statistic with it
    let s_nominal = vec![Complex64::new(1.0, 0.0); mn];
    let eta = anm::regularizer_eta(sigma_eff, &s_nominal, opts.eta_scale);
    let eps0 = opts.eps0_eta_factor * eta;
    let delta_x = opts.delta_x_trigger.unwrap_or(1e-6 * mn as f64);
    let delta_h = opts.delta_h_stop.unwrap_or(1e-6 * mn as f64);

    let mut x = st.x0_data.clone();
    let mut x_prev = x.clone();
    let mut h = st.h0.clone();
    let mut h_prev = h.clone();
    let mut s = st.s0.clone();
    let mut rep = AtomicRepresentation::empty(grid);
    let mut h_eff = EffectiveChannel::zeros(mn, ChannelSource::ReconstructedFromAtoms);

    let mut bounds = MomentumBounds::new(opts.theta);
    let mut xi = 0.0f64; // channel-side FISTA scalar, xi^{(-1)} = 0
    let mut zeta = 0.0f64; // symbol-side FISTA scalar
    let mut rho = 0.0f64;
    let mut rho_upb = f64::INFINITY;
    let mut warm_eig: Option<Vec<Complex64>> = None;
    let mut trace = Vec::with_capacity(opts.t_max);
    let mut converged = false;
    let mut violations = 0usize;
    let mut max_rise = 0.0f64;
    let mut iterations = 0usize;
    let pilot_col = layout.pilot_idx();

    for t in 0..opts.t_max {
        iterations = t + 1;
        let eps_t = eps0 * 0.5f64.powi(t.min(40) as i32);
        let s_norm_sq: f64 = s.iter().map(|c| c.norm_sqr()).sum();
        // the tight Lipschitz constant is ||s||^2/MN; the dual-feasibility
        // checks of the inner solver compare against eta directly, which
        // presumes a step scale of at least one, so floor it there
        let alpha = if opts.paper_alpha {
            s_norm_sq
        } else {
            (s_norm_sq / mn as f64).max(1.0)
        };
        bounds.observe_alpha(alpha);

        let xi_new = 0.5 * (1.0 + (1.0 + 4.0 * xi * xi).sqrt());
        let mu = if opts.accelerated {
            ((xi - 1.0) / xi_new).clamp(0.0, bounds.mu_bar())
        } else {
            0.0
        };
        xi = xi_new;

        let budget = SolverBudget { epsilon: eps_t, ..opts.budget };
        let warm = (t > 0).then_some(&rep);
        let (h_new, rep_new, stats) =
            channel_update_warm(grid, r, &s, &h, &h_prev, mu, alpha, eta, &budget, warm);
        violations += stats.objective_violations;
        max_rise = max_rise.max(stats.max_objective_rise);

        h_eff = reconstruct_heff_from_atoms(grid, &rep_new);
        let sub = DataSubchannel::from_heff(&h_eff, layout);
        let beta = sub.lambda_max(&mut warm_eig, 1e-6);
        if t == 0 {
            let beta_ref = beta.max(1e-9);
            rho = opts.rho0_beta_factor * beta_ref;
            rho_upb = opts.rho_upb_beta_factor * beta_ref;
        }
        bounds.observe_beta(beta);

        let zeta_new = 0.5 * (1.0 + (1.0 + 4.0 * zeta * zeta).sqrt());
        let iota = if opts.accelerated {
            ((zeta - 1.0) / zeta_new).clamp(0.0, bounds.iota_bar())
        } else {
            0.0
        };
        zeta = zeta_new;

        let rho_used = rho;
        let x_new = if beta > 0.0 {
            // received data vector after removing the reconstructed pilot
            let mut y_d = y_dd.to_vec();
            for (row, yv) in y_d.iter_mut().enumerate() {
                *yv -= layout.pilot_amplitude * h_eff.mat[row * mn + pilot_col];
            }
            symbol_update(constellation, &sub, &y_d, &x, &x_prev, iota, rho_used, beta)
        } else {
            x.clone()
        };

        let frame = crate::frame::assemble_frame(layout, &x_new, layout.pilot_amplitude)?;
        let s_new = modem::modulate(grid, &frame)?;

        let dh_norm = h_new
            .iter()
            .zip(&h)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let dx_sq: f64 = x_new.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum();

        let fit = {
            let f = forward_s(grid, &s_new, &h_new);
            0.5 * f
                .iter()
                .zip(r)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
        };
        let objective = fit + eta * rep_new.atomic_norm_upper;
        let x_norm_sq: f64 = x_new.iter().map(|c| c.norm_sqr()).sum();
        trace.push(TraceRow {
            t,
            objective,
            penalty_objective: objective - rho_used * x_norm_sq,
            dh_norm,
            rho: rho_used,
            tuples: rep_new.tuples.len(),
            eps: eps_t,
        });

        rho = rho_schedule(rho, dx_sq, t, delta_x, opts.rho_period, opts.rho_growth, rho_upb);

        h_prev = std::mem::replace(&mut h, h_new);
        x_prev = std::mem::replace(&mut x, x_new);
        s = s_new;
        rep = rep_new;

        if dh_norm <= delta_h {
            converged = true;
            break;
        }
    }

    let floor = opts.amplitude_floor_kappa * eta / mn_sq;
    let estimate: Vec<Path> = rep
        .tuples
        .iter()
        .filter(|t| t.coeff.norm() >= floor)
        .map(|t| Path { gain: t.coeff, delay_s: t.delay_s, doppler_hz: t.doppler_hz })
        .collect();
    let x_data: Vec<Complex64> = x
        .iter()
        .map(|&z| constellation.points[constellation.hard_decision(z)])
        .collect();

    Ok(IsacOutcome {
        estimate,
        representation: rep,
        h_eff,
        x_data,
        x_soft: x,
        trace,
        iterations,
        converged,
        eta,
        eps0,
        solver_violations: violations,
        max_solver_rise: max_rise,
        momentum: bounds,
    })
}
