//! OFDM parameters, node clocks and the timing/sampling/carrier offset model.
//!
//! Subcarrier indices are signed, `nu in -N/2 ..= N/2 - 1`, and `[nu/N]`
//! below always refers to that signed fraction.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cis_cycles, complex_gaussian};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OfdmError {
    #[error("invalid OFDM parameters: {0}")]
    InvalidParams(String),
    #[error("relative timing offset of {offset_chips} chips exceeds the cyclic prefix budget of {cp_len} chips")]
    TimingOutsideCp { offset_chips: f64, cp_len: usize },
    #[error("symbol block has {got} subcarriers, expected {want}")]
    SymbolLength { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfdmParams {
    pub n_subcarriers: usize,
    pub cp_len: usize,
    pub oversampling: usize,
    /// Nominal sampling rate, Hz.
    pub fs_hz: f64,
    /// Nominal carrier, Hz.
    pub f0_hz: f64,
}

impl Default for OfdmParams {
    fn default() -> Self {
        OfdmParams { n_subcarriers: 64, cp_len: 16, oversampling: 1, fs_hz: 40e6, f0_hz: 2.45e9 }
    }
}

impl OfdmParams {
    pub fn validate(&self) -> Result<(), OfdmError> {
        let bad = |m: &str| Err(OfdmError::InvalidParams(m.to_string()));
        if self.n_subcarriers < 2 || self.n_subcarriers % 2 != 0 {
            return bad("n_subcarriers must be even and >= 2");
        }
        if self.cp_len == 0 || self.cp_len >= self.n_subcarriers {
            return bad("cp_len must satisfy 1 <= cp_len < n_subcarriers");
        }
        if self.oversampling == 0 {
            return bad("oversampling must be >= 1");
        }
        if !(self.fs_hz > 0.0) || !(self.f0_hz > self.fs_hz) {
            return bad("need 0 < fs_hz < f0_hz");
        }
        Ok(())
    }

    /// `f0 / fs`.
    pub fn kappa(&self) -> f64 {
        self.f0_hz / self.fs_hz
    }

    pub fn ts(&self) -> f64 {
        1.0 / self.fs_hz
    }

    pub fn symbol_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.fs_hz / self.n_subcarriers as f64
    }

    /// Signed subcarrier indices in ascending order.
    pub fn subcarriers(&self) -> impl Iterator<Item = i32> {
        let half = (self.n_subcarriers / 2) as i32;
        -half..half
    }

    pub fn nu_frac(&self, nu: i32) -> f64 {
        nu as f64 / self.n_subcarriers as f64
    }

    /// SFO bound `20 ppm * fs` used for clock draws.
    pub fn max_sfo_hz(&self) -> f64 {
        20e-6 * self.fs_hz
    }
}

/// Timing offset `tau` (s) and sampling frequency offset `eps` (Hz) of a
/// node's oscillator. The carrier offset is `kappa * eps`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeClock {
    pub tau: f64,
    pub eps: f64,
}

impl NodeClock {
    pub fn new(tau: f64, eps: f64) -> Self {
        NodeClock { tau, eps }
    }

    pub fn cfo_hz(&self, params: &OfdmParams) -> f64 {
        params.kappa() * self.eps
    }
}

/// Normalized offsets `(mu, delta, Delta)`: TO in chips, SFO and CFO in
/// cycles per OFDM symbol.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormalizedOffsets {
    pub mu: f64,
    pub delta: f64,
    pub big_delta: f64,
}

pub fn normalized_offsets(clock: &NodeClock, params: &OfdmParams) -> NormalizedOffsets {
    let mu = params.fs_hz * clock.tau;
    let delta = params.symbol_len() as f64 * params.ts() * clock.eps;
    NormalizedOffsets { mu, delta, big_delta: params.kappa() * delta }
}

/// Rotation `E_{i,j}[m, nu]` for a link from `tx` (node i) to `rx` (node j).
pub fn effective_rotation(tx: &NodeClock, rx: &NodeClock, params: &OfdmParams, m: usize, nu: i32) -> Complex64 {
    let a = normalized_offsets(tx, params);
    let b = normalized_offsets(rx, params);
    let f = params.nu_frac(nu);
    let m = m as f64;
    cis_cycles(-f * (a.mu - b.mu) + f * (a.delta - b.delta) * m + (a.big_delta - b.big_delta) * m)
}

/// Diagonal entry `phi_{i,i}[m, nu]` of an AP transmitter.
pub fn phi(clock: &NodeClock, params: &OfdmParams, m: usize, nu: i32) -> Complex64 {
    let o = normalized_offsets(clock, params);
    let f = params.nu_frac(nu);
    let m = m as f64;
    cis_cycles(-f * o.mu + f * o.delta * m + o.big_delta * m)
}

/// Diagonal entry `theta_{k,k}[m, nu]` of a UT receiver.
pub fn theta(clock: &NodeClock, params: &OfdmParams, m: usize, nu: i32) -> Complex64 {
    let o = normalized_offsets(clock, params);
    let f = params.nu_frac(nu);
    let m = m as f64;
    cis_cycles(f * o.mu - f * o.delta * m - o.big_delta * m)
}

/// Diagonals of `Phi[m, nu]` (APs) and `Theta[m, nu]` (UTs).
pub fn phi_theta_matrices(
    ap_clocks: &[NodeClock],
    ut_clocks: &[NodeClock],
    params: &OfdmParams,
    m: usize,
    nu: i32,
) -> (Vec<Complex64>, Vec<Complex64>) {
    (
        ap_clocks.iter().map(|c| phi(c, params, m, nu)).collect(),
        ut_clocks.iter().map(|c| theta(c, params, m, nu)).collect(),
    )
}

/// Transmit-side compensation for one AP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxCorrection {
    /// `P_i[m, nu]`, multiplies DL frequency-domain symbols.
    pub factor: Complex64,
    /// Shift of the transmit time origin, chips.
    pub timing_shift: f64,
}

impl TxCorrection {
    /// Rotation for UL-received symbols, `P_i^*[m, nu]`.
    pub fn uplink_factor(&self) -> Complex64 {
        self.factor.conj()
    }
}

pub fn tx_correction(delta_corr: f64, mu_corr: f64, params: &OfdmParams, m: usize, nu: i32) -> TxCorrection {
    let scale = 1.0 + params.nu_frac(nu) / params.kappa();
    TxCorrection { factor: cis_cycles(-scale * delta_corr * m as f64), timing_shift: mu_corr }
}

/// Multipath impulse response with known delays (in chips, `rho_p / T_s`).
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathChannel {
    coeffs: Vec<Complex64>,
    delays: Vec<f64>,
}

impl MultipathChannel {
    pub fn new(coeffs: Vec<Complex64>, delays: Vec<f64>) -> Result<Self, OfdmError> {
        if coeffs.is_empty() || coeffs.len() != delays.len() {
            return Err(OfdmError::InvalidParams("need P >= 1 coefficients with matching delays".into()));
        }
        if delays.iter().any(|d| !(*d >= 0.0)) || delays.windows(2).any(|w| w[0] > w[1]) {
            return Err(OfdmError::InvalidParams("path delays must be non-negative and sorted".into()));
        }
        Ok(MultipathChannel { coeffs, delays })
    }

    pub fn single_path(coeff: Complex64) -> Self {
        MultipathChannel { coeffs: vec![coeff], delays: vec![0.0] }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn n_paths(&self) -> usize {
        self.coeffs.len()
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.last().copied().unwrap_or(0.0)
    }

    pub fn with_coeffs(&self, coeffs: Vec<Complex64>) -> Result<Self, OfdmError> {
        MultipathChannel::new(coeffs, self.delays.clone())
    }

    /// Continuous frequency response at `cycles_per_chip`, i.e.
    /// `sum_p h_p exp(-j 2 pi f rho_p)`.
    pub fn frequency_response(&self, cycles_per_chip: f64) -> Complex64 {
        self.coeffs.iter().zip(&self.delays).map(|(h, d)| h * cis_cycles(-cycles_per_chip * d)).sum()
    }
}

/// Interpolation between chips used when a waveform is sampled off-grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChipPulse {
    /// Rectangular DAC pulse sampled directly.
    Rectangular,
    /// Rectangular DAC pulse after a chip-matched filter (triangle).
    Triangular,
    /// Ideal band-limited OFDM waveform (periodic within each symbol).
    #[default]
    BandLimited,
}

/// Triangular pulse `(Pi * Pi)(t) = max(0, 1 - |t|)`.
#[inline]
pub fn triangle(t: f64) -> f64 {
    (1.0 - t.abs()).max(0.0)
}

/// Rectangular pulse, closed on `[-1/2, 1/2]`.
#[inline]
pub fn rectangle(t: f64) -> f64 {
    if t.abs() <= 0.5 {
        1.0
    } else {
        0.0
    }
}

fn idft(freq: &[Complex64], n: usize, nu_of: impl Fn(usize) -> i32, u: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (idx, x) in freq.iter().enumerate() {
        acc += x * cis_cycles(nu_of(idx) as f64 * u / n as f64);
    }
    acc / n as f64
}

/// Time-domain received blocks for OFDM symbols sent from `tx` to `rx`.
///
/// `tx_symbols[m]` holds `N` frequency-domain values in ascending signed
/// subcarrier order. Each returned block has `p (N + L)` samples, `q` from
/// `-L p` to `N p - 1`. The carrier phase advances within each symbol, so
/// residual ICI is present; inter-block interference is not modelled.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_rx<R: Rng + ?Sized>(
    tx_symbols: &[Vec<Complex64>],
    channel: &MultipathChannel,
    tx: &NodeClock,
    rx: &NodeClock,
    params: &OfdmParams,
    pulse: ChipPulse,
    noise_psd: f64,
    rng: &mut R,
) -> Result<Vec<Vec<Complex64>>, OfdmError> {
    params.validate()?;
    let n = params.n_subcarriers;
    let l = params.cp_len;
    let p = params.oversampling;
    let half = (n / 2) as i32;
    let rel_to_chips = (tx.tau - rx.tau) * params.fs_hz;
    if rel_to_chips.abs() + channel.max_delay() >= l as f64 {
        return Err(OfdmError::TimingOutsideCp { offset_chips: rel_to_chips, cp_len: l });
    }
    let ts_tx = 1.0 / (params.fs_hz + tx.eps);
    let ts_rx = 1.0 / (params.fs_hz + rx.eps);
    // Per-symbol drift of the transmit chip grid seen by the receiver, chips.
    let drift_per_symbol = -((n + l) as f64) * (ts_tx - ts_rx) * params.fs_hz;
    let cfo_cycles_per_chip = params.kappa() * (tx.eps - rx.eps) * params.ts();

    let mut out = Vec::with_capacity(tx_symbols.len());
    for (m, symbol) in tx_symbols.iter().enumerate() {
        if symbol.len() != n {
            return Err(OfdmError::SymbolLength { got: symbol.len(), want: n });
        }
        // Time-domain chips with cyclic prefix, k = -L .. N-1 at index k + L.
        let chips: Vec<Complex64> = (-(l as i64)..n as i64)
            .map(|k| idft(symbol, n, |i| i as i32 - half, k.rem_euclid(n as i64) as f64))
            .collect();
        let chip_at = |k: i64| -> Complex64 {
            if k < -(l as i64) || k >= n as i64 {
                Complex64::new(0.0, 0.0)
            } else {
                chips[(k + l as i64) as usize]
            }
        };
        let mut block = Vec::with_capacity(p * (n + l));
        for q in -((l * p) as i64)..(n * p) as i64 {
            let base = q as f64 / p as f64 - rel_to_chips + m as f64 * drift_per_symbol;
            let mut sample = Complex64::new(0.0, 0.0);
            for (h, d) in channel.coeffs().iter().zip(channel.delays()) {
                let u = base - d;
                let x = match pulse {
                    ChipPulse::BandLimited => idft(symbol, n, |i| i as i32 - half, u),
                    ChipPulse::Rectangular => chip_at(u.round() as i64),
                    ChipPulse::Triangular => {
                        let k0 = u.floor();
                        let frac = u - k0;
                        chip_at(k0 as i64) * triangle(frac) + chip_at(k0 as i64 + 1) * triangle(1.0 - frac)
                    }
                };
                sample += h * x;
            }
            let carrier = cis_cycles(cfo_cycles_per_chip * ((m * (n + l)) as f64 + q as f64 / p as f64));
            let noise = if noise_psd > 0.0 { complex_gaussian(rng, noise_psd) } else { Complex64::new(0.0, 0.0) };
            block.push(sample * carrier + noise);
        }
        out.push(block);
    }
    Ok(out)
}

/// Ideal OFDM receiver: CP removal, decimation by `p`, `N`-point DFT.
/// Output per symbol in ascending signed subcarrier order.
pub fn demodulate(blocks: &[Vec<Complex64>], params: &OfdmParams) -> Vec<Vec<Complex64>> {
    let n = params.n_subcarriers;
    let l = params.cp_len;
    let p = params.oversampling;
    blocks
        .iter()
        .map(|block| {
            let body: Vec<Complex64> = (0..n).map(|q| block[(l + q) * p]).collect();
            params
                .subcarriers()
                .map(|nu| {
                    body.iter()
                        .enumerate()
                        .map(|(q, y)| y * cis_cycles(-(nu as f64) * q as f64 / n as f64))
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Frequency-domain shortcut `H[nu] X[m, nu] E[m, nu]`.
pub fn frequency_domain_rx(
    tx_symbols: &[Vec<Complex64>],
    channel: &MultipathChannel,
    tx: &NodeClock,
    rx: &NodeClock,
    params: &OfdmParams,
) -> Vec<Vec<Complex64>> {
    tx_symbols
        .iter()
        .enumerate()
        .map(|(m, symbol)| {
            params
                .subcarriers()
                .zip(symbol)
                .map(|(nu, x)| {
                    let h = channel.frequency_response(params.nu_frac(nu));
                    h * x * effective_rotation(tx, rx, params, m, nu)
                })
                .collect()
        })
        .collect()
}

pub fn qpsk_chip<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let k = rng.random_range(0..4u8);
    cis_cycles(0.125 + 0.25 * k as f64)
}

/// Time-domain synchronization pilot burst.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBurst {
    chips: Vec<Complex64>,
    pub repetitions: usize,
    pub block_len: usize,
    pub gap_len: usize,
}

impl PilotBurst {
    /// Two copies of `n_c / 4` random QPSK chips separated by `n_c / 2` zeros.
    pub fn two_block<R: Rng + ?Sized>(n_c: usize, rng: &mut R) -> Result<Self, OfdmError> {
        if n_c < 4 || n_c % 4 != 0 {
            return Err(OfdmError::InvalidParams(format!("pilot length {n_c} must be a positive multiple of 4")));
        }
        let block: Vec<Complex64> = (0..n_c / 4).map(|_| qpsk_chip(rng)).collect();
        Ok(Self::from_block(&block, n_c / 2))
    }

    pub fn from_block(block: &[Complex64], gap_len: usize) -> Self {
        let mut chips = block.to_vec();
        chips.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), gap_len));
        chips.extend_from_slice(block);
        PilotBurst { chips, repetitions: 2, block_len: block.len(), gap_len }
    }

    pub fn from_chips(chips: Vec<Complex64>) -> Self {
        let len = chips.len();
        PilotBurst { chips, repetitions: 1, block_len: len, gap_len: 0 }
    }

    pub fn chips(&self) -> &[Complex64] {
        &self.chips
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }
}

/// Length in chips of a synchronization slot with one burst per pilot color
/// and `guard_symbols` OFDM symbols of guard after each burst.
pub fn sync_slot_len(num_colors: usize, n_c: usize, guard_symbols: usize, params: &OfdmParams) -> usize {
    num_colors * (n_c + guard_symbols * params.symbol_len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p() -> OfdmParams {
        OfdmParams::default()
    }

    #[test]
    fn zero_clock_has_zero_offsets() {
        let o = normalized_offsets(&NodeClock::default(), &p());
        assert_eq!((o.mu, o.delta, o.big_delta), (0.0, 0.0, 0.0));
    }

    #[test]
    fn offsets_by_hand() {
        let o = normalized_offsets(&NodeClock::new(25e-9, 800.0), &p());
        assert!((o.mu - 1.0).abs() < 1e-12);
        assert!((o.delta - 1.6e-3).abs() < 1e-15);
        assert!((o.big_delta - p().kappa() * 1.6e-3).abs() < 1e-12);
    }

    #[test]
    fn rotation_identities() {
        let params = p();
        let a = NodeClock::new(3e-9, 411.0);
        let b = NodeClock::new(-7e-9, -250.0);
        for m in [0usize, 1, 7, 60] {
            for nu in params.subcarriers() {
                let e = effective_rotation(&a, &a, &params, m, nu);
                assert!((e - 1.0).norm() < 1e-12);
                let prod = effective_rotation(&a, &b, &params, m, nu) * effective_rotation(&b, &a, &params, m, nu);
                assert!((prod - 1.0).norm() < 1e-12);
                assert!((effective_rotation(&a, &b, &params, m, nu).norm() - 1.0).abs() < 1e-12);
            }
        }
        let c = NodeClock::new(3e-9, -100.0);
        assert!((effective_rotation(&a, &c, &params, 0, 0) - 1.0).norm() < 1e-15);
    }

    #[test]
    fn phi_theta_special_cases() {
        let params = p();
        let zero = [NodeClock::default(); 3];
        let (ph, th) = phi_theta_matrices(&zero, &zero[..2], &params, 5, 11);
        assert!(ph.iter().chain(&th).all(|z| (z - 1.0).norm() < 1e-15));
        let clocks = [NodeClock::new(0.0, 300.0), NodeClock::new(0.0, -700.0)];
        let (ph, _) = phi_theta_matrices(&clocks, &[], &params, 0, 0);
        assert!(ph.iter().all(|z| (z - 1.0).norm() < 1e-15));
        // Delta_i = 0.01 at m = 1, nu = 0.
        let eps = 0.01 / (params.kappa() * params.symbol_len() as f64 * params.ts());
        let v = phi(&NodeClock::new(0.0, eps), &params, 1, 0);
        assert!((v - cis_cycles(0.01)).norm() < 1e-12);
    }

    #[test]
    fn correction_cancels_carrier_and_sampling_rotation() {
        let params = p();
        let c = NodeClock::new(0.0, 640.0);
        let o = normalized_offsets(&c, &params);
        for m in [0usize, 3, 500] {
            for nu in [-32, -1, 0, 17, 31] {
                let t = tx_correction(o.big_delta, 0.0, &params, m, nu);
                let residual = phi(&c, &params, m, nu) * t.factor;
                assert!((residual - 1.0).norm() < 1e-9, "m={m} nu={nu}");
                assert!((t.uplink_factor() * t.factor - 1.0).norm() < 1e-12);
            }
        }
        assert_eq!(tx_correction(0.0, 0.0, &params, 9, 4).factor, Complex64::new(1.0, 0.0));
        assert_eq!(tx_correction(0.3, 0.0, &params, 0, 4).factor, Complex64::new(1.0, 0.0));
    }

    fn random_symbols(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<Complex64>> {
        (0..count).map(|_| (0..64).map(|_| qpsk_chip(rng)).collect()).collect()
    }

    #[test]
    fn identity_channel_round_trip() {
        let params = p();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_symbols(&mut rng, 3);
        let ch = MultipathChannel::single_path(Complex64::new(1.0, 0.0));
        let clk = NodeClock::default();
        for pulse in [ChipPulse::BandLimited, ChipPulse::Rectangular, ChipPulse::Triangular] {
            let y = synthesize_rx(&x, &ch, &clk, &clk, &params, pulse, 0.0, &mut rng).unwrap();
            let yf = demodulate(&y, &params);
            for (a, b) in yf.iter().flatten().zip(x.iter().flatten()) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn timing_outside_cp_rejected() {
        let params = p();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_symbols(&mut rng, 1);
        let ch = MultipathChannel::single_path(Complex64::new(1.0, 0.0));
        let late = NodeClock::new(20.0 / params.fs_hz, 0.0);
        let err = synthesize_rx(&x, &ch, &late, &NodeClock::default(), &params, ChipPulse::BandLimited, 0.0, &mut rng);
        assert!(matches!(err, Err(OfdmError::TimingOutsideCp { .. })));
    }

    #[test]
    fn oversampled_identity_round_trip() {
        let params = OfdmParams { oversampling: 2, ..p() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_symbols(&mut rng, 2);
        let ch = MultipathChannel::single_path(Complex64::new(0.5, -0.5));
        let clk = NodeClock::default();
        let y = synthesize_rx(&x, &ch, &clk, &clk, &params, ChipPulse::BandLimited, 0.0, &mut rng).unwrap();
        assert_eq!(y[0].len(), 2 * 80);
        let yf = demodulate(&y, &params);
        for (a, b) in yf.iter().flatten().zip(x.iter().flatten()) {
            assert!((a - b * Complex64::new(0.5, -0.5)).norm() < 1e-10);
        }
    }

    #[test]
    fn integer_timing_offset_is_linear_phase() {
        let params = p();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_symbols(&mut rng, 1);
        let ch = MultipathChannel::single_path(Complex64::new(1.0, 0.0));
        let tx = NodeClock::new(3.0 / params.fs_hz, 0.0);
        let rx = NodeClock::default();
        for pulse in [ChipPulse::BandLimited, ChipPulse::Triangular, ChipPulse::Rectangular] {
            let y = demodulate(&synthesize_rx(&x, &ch, &tx, &rx, &params, pulse, 0.0, &mut rng).unwrap(), &params);
            let want = frequency_domain_rx(&x, &ch, &tx, &rx, &params);
            for (a, b) in y[0].iter().zip(&want[0]) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn pilot_burst_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = PilotBurst::two_block(256, &mut rng).unwrap();
        assert_eq!(b.len(), 256);
        let c = b.chips();
        assert!(c[..64].iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!(c[64..192].iter().all(|z| z.norm() == 0.0));
        assert_eq!(&c[..64], &c[192..]);
        assert!(PilotBurst::two_block(10, &mut rng).is_err());
        assert_eq!(sync_slot_len(4, 256, 2, &OfdmParams::default()), 4 * (256 + 160));
    }
}
