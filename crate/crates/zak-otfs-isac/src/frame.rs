//! Delay-Doppler grid geometry, embedded-pilot frame layout, and PSK
//! constellations.
//!
//! The grid has `M` delay bins and `N` Doppler bins. A frame embeds one
//! high-power pilot at the grid centre, surrounded by a guard region that
//! keeps data symbols away from the spread pilot response; everything outside
//! the guard region carries data. All delay-Doppler matrices are stored as
//! vectors under a single linearization `idx(l, k) = k*M + l`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lattice and RF parameters of the delay-Doppler grid.
///
/// The symbol period is always derived as `T = 1/delta_f`, so `T * delta_f = 1`
/// holds exactly, and the sample rate is `M * delta_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Number of delay bins.
    pub m: usize,
    /// Number of Doppler bins.
    pub n: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Carrier frequency in Hz.
    pub f_c: f64,
}

impl GridConfig {
    pub fn new(m: usize, n: usize, delta_f: f64, f_c: f64) -> Result<Self> {
        if m < 2 || n < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid must have M >= 2 and N >= 2, got {}x{}",
                m, n
            )));
        }
        if !(delta_f > 0.0) || !(f_c > 0.0) {
            return Err(Error::InvalidConfig(
                "delta_f and f_c must be positive".into(),
            ));
        }
        Ok(Self { m, n, delta_f, f_c })
    }

    #[inline]
    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    /// Symbol (delay) period `T = 1/delta_f` in seconds.
    #[inline]
    pub fn symbol_period(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Sample rate `F_s = M * delta_f` in Hz.
    #[inline]
    pub fn sample_rate(&self) -> f64 {
        self.m as f64 * self.delta_f
    }

    /// Delay resolution `1/(M * delta_f)` in seconds.
    #[inline]
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.m as f64 * self.delta_f)
    }

    /// Doppler resolution `1/(N * T) = delta_f / N` in Hz.
    #[inline]
    pub fn doppler_resolution(&self) -> f64 {
        self.delta_f / self.n as f64
    }

    /// The single linearization used for all DD-domain vectors.
    #[inline]
    pub fn idx(&self, l: usize, k: usize) -> usize {
        k * self.m + l
    }

    /// Delay in seconds -> delay in grid units (`l_tau = tau * M * delta_f`).
    #[inline]
    pub fn delay_to_grid(&self, tau: f64) -> f64 {
        tau / self.delay_resolution()
    }

    /// Doppler in Hz -> Doppler in grid units (`k_nu = nu * N * T`).
    #[inline]
    pub fn doppler_to_grid(&self, nu: f64) -> f64 {
        nu / self.doppler_resolution()
    }

    #[inline]
    pub fn grid_to_delay(&self, l_tau: f64) -> f64 {
        l_tau * self.delay_resolution()
    }

    #[inline]
    pub fn grid_to_doppler(&self, k_nu: f64) -> f64 {
        k_nu * self.doppler_resolution()
    }
}

/// Inclusive rectangle of grid cells `[l_lo, l_hi] x [k_lo, k_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRect {
    pub l_lo: usize,
    pub l_hi: usize,
    pub k_lo: usize,
    pub k_hi: usize,
}

impl GridRect {
    pub fn new(l_lo: usize, l_hi: usize, k_lo: usize, k_hi: usize) -> Self {
        Self { l_lo, l_hi, k_lo, k_hi }
    }

    #[inline]
    pub fn contains(&self, l: usize, k: usize) -> bool {
        l >= self.l_lo && l <= self.l_hi && k >= self.k_lo && k <= self.k_hi
    }

    pub fn contains_rect(&self, inner: &GridRect) -> bool {
        self.l_lo <= inner.l_lo
            && self.l_hi >= inner.l_hi
            && self.k_lo <= inner.k_lo
            && self.k_hi >= inner.k_hi
    }

    pub fn is_valid(&self) -> bool {
        self.l_lo <= self.l_hi && self.k_lo <= self.k_hi
    }

    pub fn cell_count(&self) -> usize {
        (self.l_hi - self.l_lo + 1) * (self.k_hi - self.k_lo + 1)
    }
}

/// Pilot position, pilot/guard regions and the ordered data cell set of a
/// Zak-OTFS frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLayout {
    pub m: usize,
    pub n: usize,
    /// Pilot cell `(l_p, k_p)`.
    pub pilot: (usize, usize),
    pub pilot_region: GridRect,
    pub guard_region: GridRect,
    /// Data cells outside the guard region, sorted by `idx(l, k) = k*M + l`.
    pub data_indices: Vec<(usize, usize)>,
    /// `sqrt(M*N - |data|)`, normalizing total frame power to `M*N` for
    /// unit-power data.
    pub pilot_amplitude: f64,
}

/// Builds the frame layout.
///
/// The pilot sits at `(floor(M/2), floor(N/2))` and must lie inside the pilot
/// region, which must be nested in the guard region, which must fit the grid.
/// Data cells are every cell outside the guard region; a layout with no data
/// cells is rejected.
pub fn build_layout(
    grid: &GridConfig,
    pilot_region: GridRect,
    guard_region: GridRect,
) -> Result<FrameLayout> {
    if !pilot_region.is_valid() || !guard_region.is_valid() {
        return Err(Error::Layout("degenerate rectangle".into()));
    }
    if guard_region.l_hi >= grid.m || guard_region.k_hi >= grid.n {
        return Err(Error::Layout(format!(
            "guard region exceeds the {}x{} grid",
            grid.m, grid.n
        )));
    }
    if !guard_region.contains_rect(&pilot_region) {
        return Err(Error::Layout("pilot region not inside guard region".into()));
    }
    let pilot = (grid.m / 2, grid.n / 2);
    if !pilot_region.contains(pilot.0, pilot.1) {
        return Err(Error::Layout(format!(
            "pilot {:?} outside pilot region",
            pilot
        )));
    }

    let mut data_indices = Vec::new();
    for k in 0..grid.n {
        for l in 0..grid.m {
            if !guard_region.contains(l, k) {
                data_indices.push((l, k));
            }
        }
    }
    if data_indices.is_empty() {
        return Err(Error::Layout("data region is empty".into()));
    }
    let guard_cells = grid.mn() - data_indices.len();
    Ok(FrameLayout {
        m: grid.m,
        n: grid.n,
        pilot,
        pilot_region,
        guard_region,
        data_indices,
        pilot_amplitude: (guard_cells as f64).sqrt(),
    })
}

impl FrameLayout {
    #[inline]
    pub fn idx(&self, l: usize, k: usize) -> usize {
        k * self.m + l
    }

    pub fn pilot_idx(&self) -> usize {
        self.idx(self.pilot.0, self.pilot.1)
    }

    /// Frame containing only the pilot at `amplitude` (used when subtracting
    /// the reconstructed pilot response).
    pub fn pilot_frame(&self, amplitude: f64) -> Vec<Complex64> {
        let mut x = vec![Complex64::new(0.0, 0.0); self.m * self.n];
        x[self.pilot_idx()] = Complex64::new(amplitude, 0.0);
        x
    }
}

/// Places `pilot_amplitude` at the pilot cell and the data symbols at the data
/// cells (in linearization order); guard cells stay zero.
pub fn assemble_frame(
    layout: &FrameLayout,
    data_symbols: &[Complex64],
    pilot_amplitude: f64,
) -> Result<Vec<Complex64>> {
    if data_symbols.len() != layout.data_indices.len() {
        return Err(Error::SizeMismatch {
            expected: layout.data_indices.len(),
            got: data_symbols.len(),
        });
    }
    let mut x = vec![Complex64::new(0.0, 0.0); layout.m * layout.n];
    x[layout.pilot_idx()] = Complex64::new(pilot_amplitude, 0.0);
    for (&(l, k), &s) in layout.data_indices.iter().zip(data_symbols) {
        x[layout.idx(l, k)] = s;
    }
    Ok(x)
}

/// Inverse of [`assemble_frame`] on the data cells.
pub fn extract_data(layout: &FrameLayout, x_dd: &[Complex64]) -> Vec<Complex64> {
    layout
        .data_indices
        .iter()
        .map(|&(l, k)| x_dd[layout.idx(l, k)])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstellationKind {
    Bpsk,
    Qpsk,
}

/// Unit-modulus constellation with a fixed Gray bit map.
///
/// The point index equals the integer value of its bit label, so mapping and
/// demapping are index lookups.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub kind: ConstellationKind,
    pub points: Vec<Complex64>,
    pub bits_per_symbol: usize,
}

impl Constellation {
    /// BPSK: bit 0 -> +1, bit 1 -> -1.
    pub fn bpsk() -> Self {
        Self {
            kind: ConstellationKind::Bpsk,
            points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            bits_per_symbol: 1,
        }
    }

    /// Gray-mapped QPSK: 00 -> (1+j)/sqrt(2), 01 -> (-1+j)/sqrt(2),
    /// 11 -> (-1-j)/sqrt(2), 10 -> (1-j)/sqrt(2).
    pub fn qpsk() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            kind: ConstellationKind::Qpsk,
            points: vec![
                Complex64::new(s, s),   // 00
                Complex64::new(-s, s),  // 01
                Complex64::new(s, -s),  // 10
                Complex64::new(-s, -s), // 11
            ],
            bits_per_symbol: 2,
        }
    }

    pub fn of(kind: ConstellationKind) -> Self {
        match kind {
            ConstellationKind::Bpsk => Self::bpsk(),
            ConstellationKind::Qpsk => Self::qpsk(),
        }
    }

    /// Gray maps `bits` (values 0/1) to symbols. The bit count must be a
    /// multiple of the bits per symbol.
    pub fn bits_to_symbols(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        if bits.len() % self.bits_per_symbol != 0 {
            return Err(Error::BitCount(bits.len(), self.bits_per_symbol));
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|c| {
                let mut v = 0usize;
                for &b in c {
                    v = (v << 1) | (b as usize & 1);
                }
                self.points[v]
            })
            .collect())
    }

    /// Nearest constellation point; ties break toward the smallest index.
    pub fn hard_decision(&self, z: Complex64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Hard decision on each symbol, then the inverse Gray map.
    pub fn symbols_to_bits(&self, symbols: &[Complex64]) -> Vec<u8> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for &z in symbols {
            let v = self.hard_decision(z);
            for i in (0..self.bits_per_symbol).rev() {
                bits.push(((v >> i) & 1) as u8);
            }
        }
        bits
    }

    /// Euclidean projection onto the convex hull of the constellation.
    ///
    /// BPSK: real part clamped to [-1, 1], imaginary part dropped. QPSK: real
    /// and imaginary parts independently clamped to [-1/sqrt(2), 1/sqrt(2)].
    pub fn project_hull(&self, z: Complex64) -> Complex64 {
        match self.kind {
            ConstellationKind::Bpsk => Complex64::new(z.re.clamp(-1.0, 1.0), 0.0),
            ConstellationKind::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                Complex64::new(z.re.clamp(-s, s), z.im.clamp(-s, s))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid_8x16() -> GridConfig {
        GridConfig::new(8, 16, 30e3, 24e9).unwrap()
    }

    fn layout_8x16() -> FrameLayout {
        build_layout(
            &grid_8x16(),
            GridRect::new(2, 6, 5, 11),
            GridRect::new(1, 7, 4, 12),
        )
        .unwrap()
    }

    #[test]
    fn grid_invariants() {
        let g = grid_8x16();
        assert_eq!(g.symbol_period() * g.delta_f, 1.0);
        assert_eq!(g.sample_rate(), 240e3);
        assert_abs_diff_eq!(g.delay_resolution(), 1.0 / 240e3);
        assert_abs_diff_eq!(g.doppler_resolution(), 30e3 / 16.0);
        assert!(GridConfig::new(1, 16, 30e3, 24e9).is_err());
    }

    #[test]
    fn layout_counts_8x16() {
        let l = layout_8x16();
        assert_eq!(l.pilot, (4, 8));
        assert_eq!(l.data_indices.len(), 65);
        assert_eq!(128 - l.data_indices.len(), 63);
        assert_abs_diff_eq!(l.pilot_amplitude, 63f64.sqrt());
        // sorted by k*M + l
        for w in l.data_indices.windows(2) {
            assert!(l.idx(w[0].0, w[0].1) < l.idx(w[1].0, w[1].1));
        }
        // total power normalization
        assert_abs_diff_eq!(
            l.pilot_amplitude.powi(2) + l.data_indices.len() as f64,
            128.0
        );
    }

    #[test]
    fn layout_counts_4x8() {
        let g = GridConfig::new(4, 8, 30e3, 24e9).unwrap();
        let l = build_layout(&g, GridRect::new(2, 2, 4, 4), GridRect::new(1, 3, 2, 6)).unwrap();
        assert_eq!(l.guard_region.cell_count(), 15);
        assert_eq!(l.data_indices.len(), 17);
        assert_abs_diff_eq!(l.pilot_amplitude, 15f64.sqrt());
    }

    #[test]
    fn layout_rejects_bad_geometry() {
        let g = grid_8x16();
        // guard covering the whole grid leaves no data cells
        assert!(build_layout(&g, GridRect::new(2, 6, 5, 11), GridRect::new(0, 7, 0, 15)).is_err());
        // guard out of bounds
        assert!(build_layout(&g, GridRect::new(2, 6, 5, 11), GridRect::new(1, 8, 4, 12)).is_err());
        // pilot outside pilot region
        assert!(build_layout(&g, GridRect::new(5, 6, 5, 11), GridRect::new(1, 7, 4, 12)).is_err());
        // pilot region not nested
        assert!(build_layout(&g, GridRect::new(0, 6, 5, 11), GridRect::new(1, 7, 4, 12)).is_err());
    }

    #[test]
    fn assemble_extract_roundtrip() {
        let l = layout_8x16();
        let data: Vec<Complex64> = (0..65)
            .map(|i| Complex64::new(i as f64, -(i as f64)))
            .collect();
        let x = assemble_frame(&l, &data, l.pilot_amplitude).unwrap();
        assert_eq!(extract_data(&l, &x), data);
        assert_eq!(x[l.pilot_idx()], Complex64::new(63f64.sqrt(), 0.0));
        // guard cells other than the pilot are zero
        for k in 0..l.n {
            for ll in 0..l.m {
                if l.guard_region.contains(ll, k) && (ll, k) != l.pilot {
                    assert_eq!(x[l.idx(ll, k)], Complex64::new(0.0, 0.0));
                }
            }
        }
        assert!(assemble_frame(&l, &data[..10], l.pilot_amplitude).is_err());
    }

    #[test]
    fn zero_data_frame_has_single_nonzero_cell() {
        let l = layout_8x16();
        let x = assemble_frame(&l, &vec![Complex64::new(0.0, 0.0); 65], l.pilot_amplitude).unwrap();
        let nonzero = x.iter().filter(|c| c.norm() > 0.0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn unit_bpsk_frame_power_is_mn() {
        let l = layout_8x16();
        let data: Vec<Complex64> = (0..65)
            .map(|i| Complex64::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0))
            .collect();
        let x = assemble_frame(&l, &data, l.pilot_amplitude).unwrap();
        let power: f64 = x.iter().map(|c| c.norm_sqr()).sum();
        assert_abs_diff_eq!(power, 128.0, epsilon = 1e-12);
    }

    #[test]
    fn bpsk_mapping_and_decision() {
        let c = Constellation::bpsk();
        let s = c.bits_to_symbols(&[0, 1]).unwrap();
        assert_eq!(s[0], Complex64::new(1.0, 0.0));
        assert_eq!(s[1], Complex64::new(-1.0, 0.0));
        assert_eq!(c.symbols_to_bits(&[Complex64::new(0.3, 0.1)]), vec![0]);
        // exact tie resolves to the smallest index, i.e. +1 / bit 0
        assert_eq!(c.symbols_to_bits(&[Complex64::new(0.0, 0.0)]), vec![0]);
    }

    #[test]
    fn qpsk_gray_map_is_self_inverse() {
        let c = Constellation::qpsk();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sym = c.bits_to_symbols(&[0, 0, 0, 1, 1, 1, 1, 0]).unwrap();
        assert_abs_diff_eq!(sym[0].re, s);
        assert_abs_diff_eq!(sym[0].im, s);
        assert_abs_diff_eq!(sym[1].re, -s);
        assert_abs_diff_eq!(sym[1].im, s);
        assert_abs_diff_eq!(sym[2].re, -s);
        assert_abs_diff_eq!(sym[2].im, -s);
        assert_abs_diff_eq!(sym[3].re, s);
        assert_abs_diff_eq!(sym[3].im, -s);
        assert_eq!(c.symbols_to_bits(&sym), vec![0, 0, 0, 1, 1, 1, 1, 0]);
        assert!(c.bits_to_symbols(&[0, 1, 1]).is_err());
        // adjacent points differ in one bit
        for (i, a) in c.points.iter().enumerate() {
            for (j, b) in c.points.iter().enumerate() {
                let d = (a - b).norm();
                if (d - 2.0_f64.sqrt()).abs() < 1e-9 {
                    assert_eq!(((i ^ j) as u32).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn hull_projection_examples() {
        let b = Constellation::bpsk();
        assert_eq!(
            b.project_hull(Complex64::new(2.0, 3.0)),
            Complex64::new(1.0, 0.0)
        );
        let q = Constellation::qpsk();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = q.project_hull(Complex64::new(1.0, 0.0));
        assert_abs_diff_eq!(p.re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(p.im, 0.0);
        // brute-force projection onto the square hull via dense sampling
        let z = Complex64::new(0.9, -0.3);
        let mut best = Complex64::new(0.0, 0.0);
        let mut best_d = f64::INFINITY;
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let cand = Complex64::new(
                    -s + 2.0 * s * i as f64 / steps as f64,
                    -s + 2.0 * s * j as f64 / steps as f64,
                );
                let d = (cand - z).norm_sqr();
                if d < best_d {
                    best_d = d;
                    best = cand;
                }
            }
        }
        let p = q.project_hull(z);
        assert!((p - best).norm() < 1e-2);
        // constellation points are fixed points
        for &pt in &q.points {
            assert_eq!(q.project_hull(pt), pt);
        }
        for &pt in &b.points {
            assert_eq!(b.project_hull(pt), pt);
        }
    }

    proptest! {
        #[test]
        fn hull_projection_idempotent_nonexpansive(
            re1 in -3.0f64..3.0, im1 in -3.0f64..3.0,
            re2 in -3.0f64..3.0, im2 in -3.0f64..3.0,
            qpsk in proptest::bool::ANY,
        ) {
            let c = if qpsk { Constellation::qpsk() } else { Constellation::bpsk() };
            let z1 = Complex64::new(re1, im1);
            let z2 = Complex64::new(re2, im2);
            let p1 = c.project_hull(z1);
            let p2 = c.project_hull(z2);
            prop_assert!((c.project_hull(p1) - p1).norm() < 1e-14);
            prop_assert!((p1 - p2).norm() <= (z1 - z2).norm() + 1e-12);
        }

        #[test]
        fn bits_roundtrip(bits in proptest::collection::vec(0u8..2, 0..64), qpsk in proptest::bool::ANY) {
            let c = if qpsk { Constellation::qpsk() } else { Constellation::bpsk() };
            let n = bits.len() - bits.len() % c.bits_per_symbol;
            let bits = &bits[..n];
            let sym = c.bits_to_symbols(bits).unwrap();
            prop_assert_eq!(c.symbols_to_bits(&sym), bits.to_vec());
        }
    }
}
