//! Downlink MU-MIMO precoding and achievable-rate evaluation under residual
//! clock offsets and calibration error.
//!
//! Channels are `N_a x N_u` (AP rows, UT columns); precoders are
//! `N_u x N_a`, so `M = G Phi H` is `N_u x N_u` with `M[(j, k)]` the gain of
//! stream `j` at user `k`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelRealization, HardwareCoeffs};
use crate::linalg::{cis_cycles, pinv_checked, CMatrix};
use crate::ofdm::{phi, tx_correction, NodeClock, OfdmParams};
use crate::sync::NetworkCorrections;

/// Largest singular-value ratio accepted by [`zfbf`].
pub const MAX_CHANNEL_CONDITION: f64 = 1e8;

#[derive(Debug, Error)]
pub enum MumimoError {
    #[error("ZFBF needs N_u <= N_a (got {n_u} users, {n_a} antennas)")]
    TooManyUsers { n_u: usize, n_a: usize },
    #[error("channel matrix is singular or ill-conditioned")]
    SingularChannel,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("per-antenna power limit must be positive")]
    InvalidLimit,
    #[error("rate CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecoderKind {
    Zfbf,
    Conjugate,
}

impl std::fmt::Display for PrecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrecoderKind::Zfbf => "zfbf",
            PrecoderKind::Conjugate => "conjugate",
        })
    }
}

/// `N_u x N_a` precoder with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingMatrix {
    g: CMatrix,
    kind: PrecoderKind,
}

impl PrecodingMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.g
    }

    pub fn kind(&self) -> PrecoderKind {
        self.kind
    }
}

fn normalize_rows(mut g: CMatrix) -> CMatrix {
    for mut row in g.row_iter_mut() {
        let n = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|z| *z /= n);
        }
    }
    g
}

/// Row-normalized pseudo-inverse of `h`.
pub fn zfbf(h: &CMatrix) -> Result<PrecodingMatrix, MumimoError> {
    let (n_a, n_u) = h.shape();
    if n_u > n_a {
        return Err(MumimoError::TooManyUsers { n_u, n_a });
    }
    let p = pinv_checked(h, MAX_CHANNEL_CONDITION).ok_or(MumimoError::SingularChannel)?;
    Ok(PrecodingMatrix { g: normalize_rows(p), kind: PrecoderKind::Zfbf })
}

/// Row-normalized conjugate transpose of `h`.
pub fn conjugate_bf(h: &CMatrix) -> PrecodingMatrix {
    PrecodingMatrix { g: normalize_rows(h.adjoint()), kind: PrecoderKind::Conjugate }
}

pub fn precoder(kind: PrecoderKind, h: &CMatrix) -> Result<PrecodingMatrix, MumimoError> {
    match kind {
        PrecoderKind::Zfbf => zfbf(h),
        PrecoderKind::Conjugate => Ok(conjugate_bf(h)),
    }
}

/// Amplitude factor `<= 1` that brings the largest per-antenna power down
/// to `limit`.
pub fn common_power_scale(per_antenna_power: &[f64], limit: f64) -> Result<f64, MumimoError> {
    if !(limit > 0.0) {
        return Err(MumimoError::InvalidLimit);
    }
    let peak = per_antenna_power.iter().cloned().fold(0.0_f64, f64::max);
    Ok(if peak > limit { (limit / peak).sqrt() } else { 1.0 })
}

/// Scales transmit samples (rows: time, columns: antennas) by one common
/// factor so no antenna's average power exceeds `limit`.
pub fn power_scale(x: &CMatrix, limit: f64) -> Result<(CMatrix, f64), MumimoError> {
    let rows = x.nrows().max(1) as f64;
    let power: Vec<f64> = x.column_iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>() / rows).collect();
    let s = common_power_scale(&power, limit)?;
    Ok((x * Complex64::new(s, 0.0), s))
}

/// Per-user `sum_{j != k} |M_jk|^2 / |M_kk|^2`.
pub fn leakage_ratios(m: &CMatrix) -> Vec<f64> {
    (0..m.ncols())
        .map(|k| {
            let off: f64 = (0..m.nrows()).filter(|&j| j != k).map(|j| m[(j, k)].norm_sqr()).sum();
            off / m[(k, k)].norm_sqr()
        })
        .collect()
}

/// `SINR_k = rho |M_kk|^2 / (1 + rho sum_{j != k} |M_jk|^2)`.
pub fn sinr(m: &CMatrix, rho: f64) -> Vec<f64> {
    (0..m.ncols())
        .map(|k| {
            let off: f64 = (0..m.nrows()).filter(|&j| j != k).map(|j| m[(j, k)].norm_sqr()).sum();
            rho * m[(k, k)].norm_sqr() / (1.0 + rho * off)
        })
        .collect()
}

/// True DL matrix `T_i B_{i,k} R~_k` on subcarrier index `nu`.
pub fn downlink_matrix(channel: &ChannelRealization, hw: &HardwareCoeffs, nu: usize) -> CMatrix {
    CMatrix::from_fn(channel.n_ap(), channel.n_ut(), |i, k| hw.ap_tx[i] * channel.ap_ut(i, k, nu) * hw.ut_rx[k])
}

/// UL matrix `R_i B_{i,k} T~_k` as seen by the APs.
pub fn uplink_matrix(channel: &ChannelRealization, hw: &HardwareCoeffs, nu: usize) -> CMatrix {
    CMatrix::from_fn(channel.n_ap(), channel.n_ut(), |i, k| hw.ap_rx[i] * channel.ap_ut(i, k, nu) * hw.ut_tx[k])
}

/// AP clocks and the corrections they apply before transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct ApSyncState {
    pub clocks: Vec<NodeClock>,
    pub delta_corr: Vec<f64>,
    pub mu_corr: Vec<f64>,
}

impl ApSyncState {
    pub fn free_running(clocks: Vec<NodeClock>) -> Self {
        let n = clocks.len();
        ApSyncState { clocks, delta_corr: vec![0.0; n], mu_corr: vec![0.0; n] }
    }

    pub fn corrected(clocks: Vec<NodeClock>, corr: &NetworkCorrections) -> Self {
        ApSyncState { clocks, delta_corr: corr.delta_corr.clone(), mu_corr: corr.mu_corr.clone() }
    }

    /// Residual transmit rotation of AP `i` after its correction.
    pub fn residual_phi(&self, i: usize, params: &OfdmParams, m: usize, nu: i32) -> Complex64 {
        let corr = tx_correction(self.delta_corr[i], self.mu_corr[i], params, m, nu);
        phi(&self.clocks[i], params, m, nu) * corr.factor * cis_cycles(params.nu_frac(nu) * corr.timing_shift)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PowerModel {
    /// Per-user transmit power over unit noise.
    PerUserSnr { snr_db: f64 },
    /// Nominal per-user power at the limit, then one common scale so that no
    /// antenna exceeds it (unit noise).
    PerAntennaLimit { limit_db: f64 },
}

/// Inputs of one rate evaluation. `h_dl` and `h_csi` hold one matrix per
/// entry of `subcarriers`.
#[derive(Debug, Clone, Copy)]
pub struct RateScenario<'a> {
    pub subcarriers: &'a [i32],
    pub h_dl: &'a [CMatrix],
    /// Channel the precoder is computed from.
    pub h_csi: &'a [CMatrix],
    pub calibration: Option<&'a [Complex64]>,
    pub sync: Option<&'a ApSyncState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub symbols: Vec<usize>,
    /// `rates[s][k]`: rate of user `k` at symbol `symbols[s]`, averaged over
    /// subcarriers.
    pub rates: Vec<Vec<f64>>,
    /// Effective per-user SNR after power scaling.
    pub rho: f64,
}

impl RateReport {
    pub fn n_users(&self) -> usize {
        self.rates.first().map_or(0, |r| r.len())
    }

    pub fn sum_rate(&self, s: usize) -> f64 {
        self.rates[s].iter().sum()
    }

    pub fn average_sum_rate(&self) -> f64 {
        self.rates.iter().map(|r| r.iter().sum::<f64>()).sum::<f64>() / self.rates.len() as f64
    }

    /// Per-user rate averaged over symbols.
    pub fn user_average(&self) -> Vec<f64> {
        let n = self.rates.len() as f64;
        (0..self.n_users()).map(|k| self.rates.iter().map(|r| r[k]).sum::<f64>() / n).collect()
    }
}

#[derive(Serialize)]
struct RateRow {
    trial: usize,
    user: usize,
    m: usize,
    rate: f64,
}

/// Long-format `(trial, user, m, rate)` rows.
pub fn write_rates_csv<W: Write>(w: W, reports: &[(usize, RateReport)]) -> Result<(), MumimoError> {
    let mut wr = csv::Writer::from_writer(w);
    for (trial, rep) in reports {
        for (s, &m) in rep.symbols.iter().enumerate() {
            for (user, &rate) in rep.rates[s].iter().enumerate() {
                wr.serialize(RateRow { trial: *trial, user, m, rate })?;
            }
        }
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow {
    m: usize,
    mean_sum_rate: f64,
    mean_user_rate: f64,
    trials: usize,
}

/// Per-symbol means across trials.
pub fn write_rates_summary<W: Write>(w: W, reports: &[(usize, RateReport)]) -> Result<(), MumimoError> {
    let mut wr = csv::Writer::from_writer(w);
    if let Some((_, first)) = reports.first() {
        let n = reports.len() as f64;
        for (s, &m) in first.symbols.iter().enumerate() {
            let sum: f64 = reports.iter().map(|(_, r)| r.sum_rate(s)).sum::<f64>() / n;
            wr.serialize(SummaryRow { m, mean_sum_rate: sum, mean_user_rate: sum / first.n_users() as f64, trials: reports.len() })?;
        }
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn scale_rows(h: &CMatrix, d: &[Complex64]) -> CMatrix {
    let mut out = h.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row.iter_mut().for_each(|z| *z *= d[i]);
    }
    out
}

/// Rates at OFDM symbols `symbols`. The precoder on each subcarrier is
/// computed once from `Phi_res[0] H_csi`; the effective matrix at symbol `m`
/// is `G diag(c) Phi_res[m] H_dl`. UT-side rotations are assumed
/// compensated. A calibration vector is first rescaled to `max |c_i| = 1`,
/// which makes the result invariant to its global gauge.
pub fn evaluate_rates(
    scn: &RateScenario<'_>,
    kind: PrecoderKind,
    params: &OfdmParams,
    power: PowerModel,
    symbols: &[usize],
) -> Result<RateReport, MumimoError> {
    Ok(evaluate_rates_sweep(scn, kind, params, &[power], symbols)?.remove(0))
}

/// [`evaluate_rates`] for several power models sharing one set of
/// effective matrices.
pub fn evaluate_rates_sweep(
    scn: &RateScenario<'_>,
    kind: PrecoderKind,
    params: &OfdmParams,
    powers: &[PowerModel],
    symbols: &[usize],
) -> Result<Vec<RateReport>, MumimoError> {
    let n_sc = scn.subcarriers.len();
    if scn.h_dl.len() != n_sc || scn.h_csi.len() != n_sc || n_sc == 0 {
        return Err(MumimoError::DimensionMismatch("one DL and one CSI matrix per subcarrier".into()));
    }
    let (n_a, n_u) = scn.h_dl[0].shape();
    if scn.h_dl.iter().chain(scn.h_csi).any(|h| h.shape() != (n_a, n_u)) {
        return Err(MumimoError::DimensionMismatch("channel shapes differ".into()));
    }
    if let Some(s) = scn.sync {
        if s.clocks.len() != n_a || s.delta_corr.len() != n_a || s.mu_corr.len() != n_a {
            return Err(MumimoError::DimensionMismatch("sync state size".into()));
        }
    }
    let c: Vec<Complex64> = match scn.calibration {
        Some(c) if c.len() != n_a => return Err(MumimoError::DimensionMismatch("calibration size".into())),
        Some(c) => {
            let peak = c.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
            if !(peak > 0.0) {
                return Err(MumimoError::DimensionMismatch("all-zero calibration vector".into()));
            }
            c.iter().map(|z| z / peak).collect()
        }
        None => vec![Complex64::new(1.0, 0.0); n_a],
    };
    let rotation = |m: usize, nu: i32| -> Vec<Complex64> {
        match scn.sync {
            Some(s) => (0..n_a).map(|i| s.residual_phi(i, params, m, nu)).collect(),
            None => vec![Complex64::new(1.0, 0.0); n_a],
        }
    };

    let mut precoders = Vec::with_capacity(n_sc);
    for (h, &nu) in scn.h_csi.iter().zip(scn.subcarriers) {
        let g = precoder(kind, &scale_rows(h, &rotation(0, nu)))?;
        // Calibration is a per-AP transmit multiplier: fold it into G.
        let mut gc = g.g;
        for (i, mut col) in gc.column_iter_mut().enumerate() {
            col.iter_mut().for_each(|z| *z *= c[i]);
        }
        precoders.push(gc);
    }

    let mut rhos = Vec::with_capacity(powers.len());
    for p in powers {
        rhos.push(match *p {
            PowerModel::PerUserSnr { snr_db } => 10f64.powf(snr_db / 10.0),
            PowerModel::PerAntennaLimit { limit_db } => {
                let limit = 10f64.powf(limit_db / 10.0);
                let per_antenna: Vec<f64> = (0..n_a)
                    .map(|i| {
                        let p: f64 = precoders.iter().map(|g| g.column(i).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
                        limit * p / n_sc as f64
                    })
                    .collect();
                let s = common_power_scale(&per_antenna, limit)?;
                limit * s * s
            }
        });
    }

    let mut rates = vec![Vec::with_capacity(symbols.len()); rhos.len()];
    for &m in symbols {
        let mut acc = vec![vec![0.0; n_u]; rhos.len()];
        for ((g, h), &nu) in precoders.iter().zip(scn.h_dl).zip(scn.subcarriers) {
            let eff = g * scale_rows(h, &rotation(m, nu));
            for (a, &rho) in acc.iter_mut().zip(&rhos) {
                for (x, s) in a.iter_mut().zip(sinr(&eff, rho)) {
                    *x += (1.0 + s).log2();
                }
            }
        }
        for (r, a) in rates.iter_mut().zip(acc) {
            r.push(a.into_iter().map(|x| x / n_sc as f64).collect());
        }
    }
    Ok(rates.into_iter().zip(rhos).map(|(rates, rho)| RateReport { symbols: symbols.to_vec(), rates, rho }).collect())
}
