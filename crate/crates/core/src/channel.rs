//! Indoor large-scale pathloss, LOS draws, reciprocal Rayleigh fading and
//! transceiver non-reciprocity coefficients.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::complex_gaussian;
use crate::topology::distance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("shadowing variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("no magnitude spread reaches squared-magnitude std {0}")]
    UnreachableSpread(f64),
}

/// Coefficients of `PL(d) = A log10(d) + B + C log10(f0/5) + shadowing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Shadowing variance in dB^2.
    pub sigma2_db: f64,
}

impl PathlossParams {
    /// Indoor office, line of sight.
    pub const A1_LOS: PathlossParams = PathlossParams { a: 18.7, b: 46.8, c: 20.0, sigma2_db: 9.0 };
    /// Indoor office, non line of sight.
    pub const A1_NLOS: PathlossParams = PathlossParams { a: 36.8, b: 43.8, c: 20.0, sigma2_db: 16.0 };

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.sigma2_db < 0.0 || !self.sigma2_db.is_finite() {
            return Err(ChannelError::NegativeVariance(self.sigma2_db));
        }
        Ok(())
    }
}

/// Model is fitted for 3 m and above; shorter links use the 3 m value.
pub const MIN_MODEL_DISTANCE_M: f64 = 3.0;

pub fn pathloss_db(d_m: f64, f0_ghz: f64, params: &PathlossParams, shadowing_db: f64) -> Result<f64, ChannelError> {
    if !(d_m > 0.0) {
        return Err(ChannelError::NonPositiveDistance(d_m));
    }
    let d = d_m.max(MIN_MODEL_DISTANCE_M);
    Ok(params.a * d.log10() + params.b + params.c * (f0_ghz / 5.0).log10() + shadowing_db)
}

/// Linear amplitude gain `10^(-PL/20)`.
pub fn amplitude_gain(pl_db: f64) -> f64 {
    10f64.powf(-pl_db / 20.0)
}

pub fn p_los(d_m: f64) -> Result<f64, ChannelError> {
    if !(d_m > 0.0) {
        return Err(ChannelError::NonPositiveDistance(d_m));
    }
    if d_m <= 2.5 {
        return Ok(1.0);
    }
    let inner = 1.0 - (1.24 - 0.6 * d_m.log10()).powi(3);
    Ok((1.0 - 0.9 * inner.cbrt()).clamp(0.0, 1.0))
}

/// Scenario knobs for the large-scale model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub los: PathlossParams,
    pub nlos: PathlossParams,
    /// Carrier used inside the pathloss frequency term, GHz.
    pub pathloss_f0_ghz: f64,
    /// Target standard deviation of squared hardware-coefficient magnitudes.
    pub hardware_sq_mag_std: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            los: PathlossParams::A1_LOS,
            nlos: PathlossParams::A1_NLOS,
            pathloss_f0_ghz: 5.0,
            hardware_sq_mag_std: 0.1,
        }
    }
}

impl Scenario {
    /// LOS-probability-weighted mean pathloss without shadowing. Used for
    /// the deterministic average-SNR network graph.
    pub fn mean_pathloss_db(&self, d_m: f64) -> Result<f64, ChannelError> {
        let p = p_los(d_m)?;
        let los = pathloss_db(d_m, self.pathloss_f0_ghz, &self.los, 0.0)?;
        let nlos = pathloss_db(d_m, self.pathloss_f0_ghz, &self.nlos, 0.0)?;
        Ok(p * los + (1.0 - p) * nlos)
    }

    /// One random link draw: LOS state and shadowed pathloss (dB).
    pub fn draw_link<R: Rng + ?Sized>(&self, rng: &mut R, d_m: f64) -> Result<(bool, f64), ChannelError> {
        let los = rng.random::<f64>() < p_los(d_m)?;
        let params = if los { &self.los } else { &self.nlos };
        params.validate()?;
        let shadow = if params.sigma2_db > 0.0 {
            Normal::new(0.0, params.sigma2_db.sqrt()).expect("finite std").sample(rng)
        } else {
            0.0
        };
        Ok((los, pathloss_db(d_m, self.pathloss_f0_ghz, params, shadow)?))
    }
}

/// Standard deviation of `X^2` for `X ~ U[1 - r, 1 + r]`.
fn sq_magnitude_std(r: f64) -> f64 {
    // E[X^2] = 1 + r^2/3, E[X^4] = 1 + 2 r^2 + r^4/5
    let m2 = 1.0 + r * r / 3.0;
    let m4 = 1.0 + 2.0 * r * r + r.powi(4) / 5.0;
    (m4 - m2 * m2).max(0.0).sqrt()
}

/// Magnitude half-width `r` such that `std(X^2) = target`, by bisection on
/// `r in [0, 1]`.
pub fn magnitude_spread_for_std(target: f64) -> Result<f64, ChannelError> {
    if target == 0.0 {
        return Ok(0.0);
    }
    if !(target > 0.0) || sq_magnitude_std(1.0) < target {
        return Err(ChannelError::UnreachableSpread(target));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sq_magnitude_std(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Transmit/receive chain coefficients `T_i, R_i` (APs) and `T~_k, R~_k` (UTs).
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareCoeffs {
    pub ap_tx: Vec<Complex64>,
    pub ap_rx: Vec<Complex64>,
    pub ut_tx: Vec<Complex64>,
    pub ut_rx: Vec<Complex64>,
}

impl HardwareCoeffs {
    pub fn ideal(n_ap: usize, n_ut: usize) -> Self {
        let one = Complex64::new(1.0, 0.0);
        HardwareCoeffs { ap_tx: vec![one; n_ap], ap_rx: vec![one; n_ap], ut_tx: vec![one; n_ut], ut_rx: vec![one; n_ut] }
    }

    /// True relative calibration coefficients `R_i / T_i`.
    pub fn true_calibration(&self) -> Vec<Complex64> {
        self.ap_rx.iter().zip(&self.ap_tx).map(|(r, t)| r / t).collect()
    }
}

/// i.i.d. draws: magnitude `U[1 - spread, 1 + spread]`, phase `U[-pi, pi]`.
pub fn sample_hardware_coeffs<R: Rng + ?Sized>(rng: &mut R, n_ap: usize, n_ut: usize, spread: f64) -> HardwareCoeffs {
    let mut draw = |n: usize| -> Vec<Complex64> {
        (0..n)
            .map(|_| {
                let mag = 1.0 - spread + 2.0 * spread * rng.random::<f64>();
                let phase = std::f64::consts::PI * (2.0 * rng.random::<f64>() - 1.0);
                Complex64::from_polar(mag, phase)
            })
            .collect()
    };
    let ap_tx = draw(n_ap);
    let ap_rx = draw(n_ap);
    let ut_tx = draw(n_ut);
    let ut_rx = draw(n_ut);
    HardwareCoeffs { ap_tx, ap_rx, ut_tx, ut_rx }
}

/// Large-scale state of a deployment: per-link amplitude gains and LOS.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    pub n_ap: usize,
    pub n_ut: usize,
    /// `pi_{i,k}`, row-major `[i * n_ut + k]`.
    pub ap_ut_gain: Vec<f64>,
    pub ap_ut_los: Vec<bool>,
    /// `pi_{i->j}`, symmetric `n_ap x n_ap`, zero diagonal.
    pub ap_ap_gain: Vec<f64>,
    pub ap_ap_los: Vec<bool>,
}

impl LargeScale {
    pub fn ap_ut(&self, i: usize, k: usize) -> f64 {
        self.ap_ut_gain[i * self.n_ut + k]
    }

    pub fn ap_ap(&self, i: usize, j: usize) -> f64 {
        self.ap_ap_gain[i * self.n_ap + j]
    }
}

pub fn sample_large_scale<R: Rng + ?Sized>(
    rng: &mut R,
    ap_positions: &[[f64; 2]],
    ut_positions: &[[f64; 2]],
    scenario: &Scenario,
) -> Result<LargeScale, ChannelError> {
    let n_ap = ap_positions.len();
    let n_ut = ut_positions.len();
    let mut ap_ut_gain = Vec::with_capacity(n_ap * n_ut);
    let mut ap_ut_los = Vec::with_capacity(n_ap * n_ut);
    for a in ap_positions {
        for u in ut_positions {
            // Co-located nodes fall under the short-distance clamp.
            let d = distance(*a, *u).max(f64::MIN_POSITIVE);
            let (los, pl) = scenario.draw_link(rng, d)?;
            ap_ut_gain.push(amplitude_gain(pl));
            ap_ut_los.push(los);
        }
    }
    let mut ap_ap_gain = vec![0.0; n_ap * n_ap];
    let mut ap_ap_los = vec![false; n_ap * n_ap];
    for i in 0..n_ap {
        for j in (i + 1)..n_ap {
            let d = distance(ap_positions[i], ap_positions[j]).max(f64::MIN_POSITIVE);
            let (los, pl) = scenario.draw_link(rng, d)?;
            let g = amplitude_gain(pl);
            ap_ap_gain[i * n_ap + j] = g;
            ap_ap_gain[j * n_ap + i] = g;
            ap_ap_los[i * n_ap + j] = los;
            ap_ap_los[j * n_ap + i] = los;
        }
    }
    Ok(LargeScale { n_ap, n_ut, ap_ut_gain, ap_ut_los, ap_ap_gain, ap_ap_los })
}

/// Large-scale gains plus per-subcarrier CN(0,1) small-scale fading, flat
/// over OFDM symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub large_scale: LargeScale,
    pub n_subcarriers: usize,
    /// `B_{i,k}[nu]`, `[(nu * n_ap + i) * n_ut + k]`.
    ap_ut_fading: Vec<Complex64>,
    /// `B_{i->j}[nu]`, `[(nu * n_ap + i) * n_ap + j]`, symmetric in `(i, j)`.
    ap_ap_fading: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn n_ap(&self) -> usize {
        self.large_scale.n_ap
    }

    pub fn n_ut(&self) -> usize {
        self.large_scale.n_ut
    }

    pub fn ap_ut_fading(&self, i: usize, k: usize, nu: usize) -> Complex64 {
        self.ap_ut_fading[(nu * self.n_ap() + i) * self.n_ut() + k]
    }

    pub fn ap_ap_fading(&self, i: usize, j: usize, nu: usize) -> Complex64 {
        self.ap_ap_fading[(nu * self.n_ap() + i) * self.n_ap() + j]
    }

    /// Propagation-only AP -> UT coefficient `pi_{i,k} B_{i,k}[nu]`.
    pub fn ap_ut(&self, i: usize, k: usize, nu: usize) -> Complex64 {
        self.ap_ut_fading(i, k, nu) * self.large_scale.ap_ut(i, k)
    }

    /// Propagation-only AP -> AP coefficient `pi_{i->j} B_{i->j}[nu]`.
    pub fn ap_ap(&self, i: usize, j: usize, nu: usize) -> Complex64 {
        self.ap_ap_fading(i, j, nu) * self.large_scale.ap_ap(i, j)
    }
}

pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R, large_scale: &LargeScale, n_subcarriers: usize) -> ChannelRealization {
    let (n_ap, n_ut) = (large_scale.n_ap, large_scale.n_ut);
    let ap_ut_fading: Vec<Complex64> =
        (0..n_subcarriers * n_ap * n_ut).map(|_| complex_gaussian(rng, 1.0)).collect();
    let mut ap_ap_fading = vec![Complex64::new(0.0, 0.0); n_subcarriers * n_ap * n_ap];
    for nu in 0..n_subcarriers {
        for i in 0..n_ap {
            for j in (i + 1)..n_ap {
                let b = complex_gaussian(rng, 1.0);
                ap_ap_fading[(nu * n_ap + i) * n_ap + j] = b;
                ap_ap_fading[(nu * n_ap + j) * n_ap + i] = b;
            }
        }
    }
    ChannelRealization { large_scale: large_scale.clone(), n_subcarriers, ap_ut_fading, ap_ap_fading }
}

pub fn sample_channel<R: Rng + ?Sized>(
    rng: &mut R,
    ap_positions: &[[f64; 2]],
    ut_positions: &[[f64; 2]],
    scenario: &Scenario,
    n_subcarriers: usize,
) -> Result<ChannelRealization, ChannelError> {
    let ls = sample_large_scale(rng, ap_positions, ut_positions, scenario)?;
    Ok(sample_fading(rng, &ls, n_subcarriers))
}
