//! Joint maximum-likelihood estimation of the relative frequency offset
//! `delta_xi` (cycles per chip) and timing offset `delta_mu` (chips) of a
//! pilot burst received through a multipath channel with known delays, and
//! the corresponding Cramer-Rao bound.
//!
//! Model: `y = Xi(delta_xi) S Tri(delta_mu) h + z`, with `S` the Toeplitz
//! matrix of pilot chips, `Tri` the triangular chip-matched pulse sampled at
//! the path delays and `z ~ CN(0, N0 I)`. Column `t` of `S` is the pilot
//! starting at sample `t`; it corresponds to delay `t - lead` chips.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cis_cycles, complex_gaussian, hermitian_eigen, CMatrix, CVector, J};
pub use crate::ofdm::MultipathChannel;
use crate::ofdm::{normalized_offsets, triangle, NodeClock, OfdmParams, PilotBurst};

/// Condition number above which a Gram or Fisher matrix counts as singular.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("Gram matrix is singular for every candidate timing offset")]
    SingularGram,
    #[error("Fisher information matrix is singular")]
    SingularFisher,
    #[error("observation window of {window} samples cannot hold a {pilot}-chip pilot with {extra} chips of delay budget")]
    WindowTooShort { window: usize, pilot: usize, extra: usize },
    #[error("invalid estimator input: {0}")]
    InvalidInput(String),
}

/// Received samples and the number of chips recorded before the nominal
/// pilot start.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    pub samples: Vec<Complex64>,
    pub lead: usize,
}

impl ObservationWindow {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Search grid. The coarse grid is followed by `refine_passes` local passes,
/// each shrinking both steps by `refine_factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub xi_step: f64,
    pub xi_max: f64,
    pub mu_step: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub refine_passes: usize,
    pub refine_factor: usize,
    /// Number of coarse local maxima refined independently.
    pub refine_starts: usize,
}

impl GridSpec {
    /// Default grid for a window of `m` samples: `delta_xi` step `1/(4M)`
    /// over the relative CFO bound, `delta_mu` step 1/16 chip (the pulse
    /// kinks put likelihood peaks closer together than a quarter chip).
    pub fn for_window(m: usize, max_rel_cfo_hz: f64, fs_hz: f64, mu_min: f64, mu_max: f64) -> Self {
        GridSpec {
            xi_step: 1.0 / (4.0 * m as f64),
            xi_max: max_rel_cfo_hz / fs_hz,
            mu_step: 0.0625,
            mu_min,
            mu_max,
            refine_passes: 4,
            refine_factor: 8,
            refine_starts: 3,
        }
    }

    /// Feasible `delta_mu` range so that all pulse taps stay inside the
    /// window's Toeplitz columns.
    pub fn mu_bounds(window_len: usize, pilot_len: usize, lead: usize, max_delay: f64) -> (f64, f64) {
        let t_max = (window_len - pilot_len) as f64;
        (-(lead as f64) + 1.0, t_max - lead as f64 - max_delay - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub delta_xi: f64,
    pub delta_mu: f64,
    pub h: Vec<Complex64>,
    pub objective: f64,
}

impl EstimationResult {
    /// Relative CFO in cycles per OFDM symbol, `(N + L) delta_xi`.
    pub fn delta_big_delta(&self, params: &OfdmParams) -> f64 {
        self.delta_xi * params.symbol_len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbResult {
    pub var_dxi: f64,
    pub var_dmu: f64,
    /// Fisher information for `(delta_xi, delta_mu, Re h, Im h)`.
    pub fisher: DMatrix<f64>,
}

fn check_dims(pilot: &[Complex64], m: usize, lead: usize, channel: &MultipathChannel) -> Result<(), EstimatorError> {
    let extra = lead + channel.max_delay().ceil() as usize + 2;
    if pilot.is_empty() || m < pilot.len() + extra {
        return Err(EstimatorError::WindowTooShort { window: m, pilot: pilot.len(), extra });
    }
    Ok(())
}

/// `S`: `M x (M - Nc + 1)` Toeplitz matrix with `S[n, t] = s[n - t]`.
pub fn toeplitz_pilot(pilot: &[Complex64], m: usize) -> CMatrix {
    let nc = pilot.len();
    let cols = m - nc + 1;
    CMatrix::from_fn(m, cols, |n, t| if n >= t && n - t < nc { pilot[n - t] } else { Complex64::new(0.0, 0.0) })
}

/// Real `(M - Nc + 1) x P` pulse matrix `Tri[t, p] = tri(t - lead - delta_mu - rho_p)`.
pub fn pulse_matrix(cols: usize, lead: usize, delta_mu: f64, delays: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(cols, delays.len(), |t, p| triangle(t as f64 - lead as f64 - delta_mu - delays[p]))
}

/// `d Tri / d delta_mu`: per path, `-1` at `floor(lead + delta_mu + rho_p)`
/// and `+1` at the next index (right derivative at integer offsets).
fn pulse_matrix_derivative(cols: usize, lead: usize, delta_mu: f64, delays: &[f64]) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(cols, delays.len());
    for (p, rho) in delays.iter().enumerate() {
        let t0 = (lead as f64 + delta_mu + rho).floor() as isize;
        for (t, v) in [(t0, -1.0), (t0 + 1, 1.0)] {
            if t >= 0 && (t as usize) < cols {
                d[(t as usize, p)] = v;
            }
        }
    }
    d
}

fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

/// `Gamma = Xi(delta_xi) S Tri(delta_mu)`, dense.
pub fn build_signal_matrix(
    pilot: &[Complex64],
    m: usize,
    lead: usize,
    delays: &[f64],
    delta_xi: f64,
    delta_mu: f64,
) -> CMatrix {
    let s = toeplitz_pilot(pilot, m);
    let mut g = &s * to_complex(&pulse_matrix(s.ncols(), lead, delta_mu, delays));
    for n in 0..m {
        let r = cis_cycles(delta_xi * n as f64);
        g.row_mut(n).iter_mut().for_each(|x| *x *= r);
    }
    g
}

/// Noiseless or noisy burst following the estimator model.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_burst<R: Rng + ?Sized>(
    pilot: &PilotBurst,
    channel: &MultipathChannel,
    m: usize,
    lead: usize,
    delta_xi: f64,
    delta_mu: f64,
    n0: f64,
    rng: &mut R,
) -> Result<ObservationWindow, EstimatorError> {
    check_dims(pilot.chips(), m, lead, channel)?;
    let gamma = build_signal_matrix(pilot.chips(), m, lead, channel.delays(), delta_xi, delta_mu);
    let h = CVector::from_column_slice(channel.coeffs());
    let clean = gamma * h;
    let samples = clean
        .iter()
        .map(|x| if n0 > 0.0 { x + complex_gaussian(rng, n0) } else { *x })
        .collect();
    Ok(ObservationWindow { samples, lead })
}

/// Precomputed pieces of the concentrated likelihood for one window.
struct Likelihood<'a> {
    y: &'a [Complex64],
    lead: usize,
    delays: &'a [f64],
    /// `(index, conj(chip))` for non-zero pilot chips.
    taps: Vec<(usize, Complex64)>,
    /// `S^H S`, `T x T`.
    gram_s: CMatrix,
    cols: usize,
}

struct Candidate {
    xi: f64,
    mu: f64,
    objective: f64,
    h: Vec<Complex64>,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.objective > other.objective
            || (self.objective == other.objective && (self.xi, self.mu) < (other.xi, other.mu))
    }
}

impl<'a> Likelihood<'a> {
    fn new(pilot: &[Complex64], window: &'a ObservationWindow, delays: &'a [f64]) -> Self {
        let m = window.len();
        let s = toeplitz_pilot(pilot, m);
        let taps = pilot.iter().enumerate().filter(|(_, c)| c.norm_sqr() > 0.0).map(|(k, c)| (k, c.conj())).collect();
        Likelihood { y: &window.samples, lead: window.lead, delays, taps, gram_s: s.adjoint() * &s, cols: s.ncols() }
    }

    /// `S^H Xi^H y`.
    fn correlate(&self, xi: f64) -> Vec<Complex64> {
        let w: Vec<Complex64> = self.y.iter().enumerate().map(|(n, y)| y * cis_cycles(-xi * n as f64)).collect();
        (0..self.cols).map(|t| self.taps.iter().map(|(k, c)| c * w[t + k]).sum()).collect()
    }

    /// `(Tri^H S^H S Tri)^{-1}`, or `None` when ill-conditioned.
    fn gram_inverse(&self, mu: f64) -> Option<CMatrix> {
        // Each pulse column has at most two non-zero taps.
        let taps: Vec<[(usize, f64); 2]> = self
            .delays
            .iter()
            .map(|d| {
                let x = self.lead as f64 + mu + d;
                let t0 = x.floor();
                let frac = x - t0;
                let t0 = t0 as usize;
                [(t0, 1.0 - frac), ((t0 + 1).min(self.cols - 1), if t0 + 1 < self.cols { frac } else { 0.0 })]
            })
            .collect();
        let p = self.delays.len();
        let g = CMatrix::from_fn(p, p, |a, b| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(ta, wa) in &taps[a] {
                for &(tb, wb) in &taps[b] {
                    acc += self.gram_s[(ta, tb)] * (wa * wb);
                }
            }
            acc
        });
        let (vals, vecs) = hermitian_eigen(&g);
        let (lo, hi) = (vals[0], vals[vals.len() - 1]);
        if !(lo > 0.0) || hi / lo > MAX_CONDITION {
            return None;
        }
        let mut scaled = vecs.adjoint();
        for (r, v) in vals.iter().enumerate() {
            scaled.row_mut(r).iter_mut().for_each(|x| *x /= *v);
        }
        Some(vecs * scaled)
    }

    fn project(&self, corr: &[Complex64], mu: f64) -> CVector {
        CVector::from_iterator(
            self.delays.len(),
            self.delays.iter().map(|d| {
                let x = self.lead as f64 + mu + d;
                let t0 = x.floor();
                let frac = x - t0;
                let t0 = t0 as isize;
                let at = |t: isize| if t >= 0 && (t as usize) < self.cols { corr[t as usize] } else { Complex64::new(0.0, 0.0) };
                at(t0) * (1.0 - frac) + at(t0 + 1) * frac
            }),
        )
    }

    fn search(&self, xis: &[f64], mus: &[f64], best: &mut Option<Candidate>) {
        let inverses: Vec<Option<CMatrix>> = mus.iter().map(|&mu| self.gram_inverse(mu)).collect();
        for &xi in xis {
            let corr = self.correlate(xi);
            for (&mu, inv) in mus.iter().zip(&inverses) {
                let Some(inv) = inv else { continue };
                let g = self.project(&corr, mu);
                let h = inv * &g;
                let objective = g.dotc(&h).re;
                let cand = Candidate { xi, mu, objective, h: h.iter().copied().collect() };
                if best.as_ref().is_none_or(|b| cand.beats(b)) {
                    *best = Some(cand);
                }
            }
        }
    }
}

impl Likelihood<'_> {
    /// Objective on the full coarse grid, `[xi][mu]`.
    fn coarse_map(&self, xis: &[f64], mus: &[f64]) -> Vec<Vec<Option<f64>>> {
        let inverses: Vec<Option<CMatrix>> = mus.iter().map(|&mu| self.gram_inverse(mu)).collect();
        xis.iter()
            .map(|&xi| {
                let corr = self.correlate(xi);
                mus.iter()
                    .zip(&inverses)
                    .map(|(&mu, inv)| {
                        let inv = inv.as_ref()?;
                        let g = self.project(&corr, mu);
                        Some(g.dotc(&(inv * &g)).re)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Grid local maxima (8-neighbourhood), best first.
fn local_maxima(map: &[Vec<Option<f64>>], xis: &[f64], mus: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut peaks = Vec::new();
    for (a, row) in map.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            let Some(v) = *v else { continue };
            let mut is_peak = true;
            for da in -1i64..=1 {
                for db in -1i64..=1 {
                    let (na, nb) = (a as i64 + da, b as i64 + db);
                    if (da, db) == (0, 0) || na < 0 || nb < 0 || na as usize >= map.len() || nb as usize >= row.len() {
                        continue;
                    }
                    if map[na as usize][nb as usize].is_some_and(|w| w > v) {
                        is_peak = false;
                    }
                }
            }
            if is_peak {
                peaks.push((v, xis[a], mus[b]));
            }
        }
    }
    peaks.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.total_cmp(&y.1)).then(x.2.total_cmp(&y.2)));
    peaks
}

fn linspace_step(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).floor() as i64;
    let mut v: Vec<f64> = (0..=n.max(0)).map(|k| lo + k as f64 * step).collect();
    if v.last().is_some_and(|&x| hi - x > 1e-12 * step) {
        v.push(hi);
    }
    v
}

fn symmetric_grid(max: f64, step: f64) -> Vec<f64> {
    let n = (max / step).floor() as i64;
    (-n..=n).map(|k| k as f64 * step).collect()
}

fn local_grid(center: f64, step: f64, half: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (-(half as i64)..=half as i64)
        .map(|k| (center + k as f64 * step).clamp(lo, hi))
        .collect();
    v.dedup();
    v
}

/// Joint ML estimate of `(delta_xi, delta_mu, h)` by grid search and local
/// refinement of the concentrated likelihood. Ties go to the
/// lexicographically smaller `(delta_xi, delta_mu)`.
pub fn ml_estimate(
    pilot: &PilotBurst,
    window: &ObservationWindow,
    delays: &[f64],
    grid: &GridSpec,
) -> Result<EstimationResult, EstimatorError> {
    if delays.is_empty() {
        return Err(EstimatorError::InvalidInput("at least one path delay is required".into()));
    }
    if !(grid.xi_step > 0.0 && grid.mu_step > 0.0 && grid.mu_max >= grid.mu_min && grid.refine_factor >= 2) {
        return Err(EstimatorError::InvalidInput("grid steps must be positive and mu_max >= mu_min".into()));
    }
    let probe = MultipathChannel::new(vec![Complex64::new(1.0, 0.0); delays.len()], delays.to_vec())
        .map_err(|e| EstimatorError::InvalidInput(e.to_string()))?;
    check_dims(pilot.chips(), window.len(), window.lead, &probe)?;
    let lik = Likelihood::new(pilot.chips(), window, delays);
    let xis = symmetric_grid(grid.xi_max, grid.xi_step);
    let mus = linspace_step(grid.mu_min, grid.mu_max, grid.mu_step);
    let peaks = local_maxima(&lik.coarse_map(&xis, &mus), &xis, &mus);
    let mut best: Option<Candidate> = None;
    let f = grid.refine_factor as f64;
    for &(_, xi0, mu0) in peaks.iter().take(grid.refine_starts.max(1)) {
        let mut local = None;
        lik.search(&[xi0], &[mu0], &mut local);
        // Frequency first at the coarse timing, then a dense timing scan,
        // then joint local passes.
        let mut xs = grid.xi_step;
        for _ in 0..grid.refine_passes {
            let Some(b) = &local else { break };
            xs /= f;
            let xis = local_grid(b.xi, xs, grid.refine_factor, -grid.xi_max, grid.xi_max);
            let mu = b.mu;
            lik.search(&xis, &[mu], &mut local);
        }
        let Some(b) = &local else { continue };
        let fine = grid.mu_step / (f * f);
        let span = (2.0 * grid.mu_step / fine).round() as usize;
        let (xi1, mu1) = (b.xi, b.mu);
        lik.search(&[xi1], &local_grid(mu1, fine, span, grid.mu_min, grid.mu_max), &mut local);
        let mut ms = fine;
        for _ in 0..grid.refine_passes {
            let Some(b) = &local else { break };
            ms /= f;
            let xis = local_grid(b.xi, xs, grid.refine_factor, -grid.xi_max, grid.xi_max);
            let mus = local_grid(b.mu, ms, grid.refine_factor, grid.mu_min, grid.mu_max);
            lik.search(&xis, &mus, &mut local);
            xs /= f;
        }
        if let Some(c) = local {
            if best.as_ref().is_none_or(|b| c.beats(b)) {
                best = Some(c);
            }
        }
    }
    let b = best.ok_or(EstimatorError::SingularGram)?;
    Ok(EstimationResult { delta_xi: b.xi, delta_mu: b.mu, h: b.h, objective: b.objective })
}

/// Concentrated log-likelihood `y^H Gamma (Gamma^H Gamma)^{-1} Gamma^H y`
/// evaluated with dense matrices.
pub fn objective_dense(
    pilot: &[Complex64],
    window: &ObservationWindow,
    delays: &[f64],
    delta_xi: f64,
    delta_mu: f64,
) -> Option<f64> {
    let g = build_signal_matrix(pilot, window.len(), window.lead, delays, delta_xi, delta_mu);
    let y = CVector::from_column_slice(&window.samples);
    let gy = g.adjoint() * &y;
    let gram = g.adjoint() * &g;
    let inv = gram.try_inverse()?;
    Some(gy.dotc(&(inv * &gy)).re)
}

/// Fisher information for `(delta_xi, delta_mu, Re h, Im h)`.
pub fn fisher_information(
    pilot: &[Complex64],
    channel: &MultipathChannel,
    m: usize,
    lead: usize,
    delta_xi: f64,
    delta_mu: f64,
    n0: f64,
) -> DMatrix<f64> {
    let delays = channel.delays();
    let p = delays.len();
    let s = toeplitz_pilot(pilot, m);
    let h = CVector::from_column_slice(channel.coeffs());
    let xi_diag: Vec<Complex64> = (0..m).map(|n| cis_cycles(delta_xi * n as f64)).collect();
    let rotate = |mut a: CMatrix| {
        for n in 0..m {
            a.row_mut(n).iter_mut().for_each(|x| *x *= xi_diag[n]);
        }
        a
    };
    let gamma = rotate(&s * to_complex(&pulse_matrix(s.ncols(), lead, delta_mu, delays)));
    let d_mu = rotate(&s * to_complex(&pulse_matrix_derivative(s.ncols(), lead, delta_mu, delays))) * &h;
    let mut d_xi = &gamma * &h;
    for n in 0..m {
        d_xi[n] *= J * std::f64::consts::TAU * n as f64;
    }
    let mut k = CMatrix::zeros(m, 2 + 2 * p);
    k.set_column(0, &d_xi);
    k.set_column(1, &d_mu);
    for c in 0..p {
        k.set_column(2 + c, &gamma.column(c));
        k.set_column(2 + p + c, &(gamma.column(c) * J));
    }
    (k.adjoint() * k).map(|z| 2.0 * z.re / n0)
}

/// Cramer-Rao bound on `delta_xi` and `delta_mu`.
pub fn crb(
    pilot: &[Complex64],
    channel: &MultipathChannel,
    m: usize,
    lead: usize,
    delta_xi: f64,
    delta_mu: f64,
    n0: f64,
) -> Result<CrbResult, EstimatorError> {
    if !(n0 > 0.0) {
        return Err(EstimatorError::InvalidInput("noise PSD must be positive".into()));
    }
    check_dims(pilot, m, lead, channel)?;
    let fim = fisher_information(pilot, channel, m, lead, delta_xi, delta_mu, n0);
    let svals = fim.clone().singular_values();
    let smax = svals.max();
    let smin = svals.min();
    if !(smin > 0.0) || smax / smin > MAX_CONDITION * 1e4 {
        return Err(EstimatorError::SingularFisher);
    }
    let inv = fim.clone().try_inverse().ok_or(EstimatorError::SingularFisher)?;
    Ok(CrbResult { var_dxi: inv[(0, 0)], var_dmu: inv[(1, 1)], fisher: fim })
}

/// Burst geometry shared by all pairwise measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurstSpec {
    pub pilot_len: usize,
    /// Extra samples beyond the pilot length.
    pub window_extra: usize,
    pub lead: usize,
    pub max_rel_cfo_hz: f64,
}

impl Default for BurstSpec {
    fn default() -> Self {
        BurstSpec { pilot_len: 256, window_extra: 32, lead: 8, max_rel_cfo_hz: 98e3 }
    }
}

impl BurstSpec {
    pub fn window_len(&self) -> usize {
        self.pilot_len + self.window_extra
    }

    pub fn grid(&self, params: &OfdmParams, max_delay: f64) -> GridSpec {
        let (lo, hi) = GridSpec::mu_bounds(self.window_len(), self.pilot_len, self.lead, max_delay);
        GridSpec::for_window(self.window_len(), self.max_rel_cfo_hz, params.fs_hz, lo, hi)
    }
}

/// How pairwise measurements are weighted in the LS fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `beta = gamma = 1/2`.
    #[default]
    Uniform,
    /// Inverse CRB at the operating point.
    InverseCrb,
}

/// One directed over-the-air measurement `tx -> rx`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMeasurement {
    /// Estimate of `Delta_tx - Delta_rx`, cycles per OFDM symbol.
    pub delta_big_delta: f64,
    /// Estimate of `mu_tx - mu_rx`, chips.
    pub delta_mu: f64,
    /// Weight of the CFO measurement.
    pub beta: f64,
    /// Weight of the TO measurement.
    pub gamma: f64,
    pub estimate: EstimationResult,
}

/// True `(delta_xi, delta_mu)` of a link from the node clocks.
pub fn true_link_offsets(tx: &NodeClock, rx: &NodeClock, params: &OfdmParams) -> (f64, f64) {
    let a = normalized_offsets(tx, params);
    let b = normalized_offsets(rx, params);
    ((a.big_delta - b.big_delta) / params.symbol_len() as f64, a.mu - b.mu)
}

/// Noise PSD giving per-sample receiver SNR `||Gamma h||^2 / (M N0)` equal
/// to `snr_db`, evaluated at zero offsets.
pub fn noise_for_snr(pilot: &PilotBurst, channel: &MultipathChannel, spec: &BurstSpec, snr_db: f64) -> f64 {
    let m = spec.window_len();
    let gamma = build_signal_matrix(pilot.chips(), m, spec.lead, channel.delays(), 0.0, 0.0);
    let energy = (gamma * CVector::from_column_slice(channel.coeffs())).norm_squared();
    energy / (m as f64 * 10f64.powf(snr_db / 10.0))
}

#[allow(clippy::too_many_arguments)]
pub fn pairwise_measure<R: Rng + ?Sized>(
    pilot: &PilotBurst,
    channel: &MultipathChannel,
    tx: &NodeClock,
    rx: &NodeClock,
    params: &OfdmParams,
    spec: &BurstSpec,
    n0: f64,
    weights: WeightMode,
    rng: &mut R,
) -> Result<PairwiseMeasurement, EstimatorError> {
    let (xi, mu) = true_link_offsets(tx, rx, params);
    let grid = spec.grid(params, channel.max_delay());
    if mu < grid.mu_min || mu > grid.mu_max {
        return Err(EstimatorError::InvalidInput(format!("timing offset {mu} chips outside the search window")));
    }
    let window = synthesize_burst(pilot, channel, spec.window_len(), spec.lead, xi, mu, n0, rng)?;
    let estimate = ml_estimate(pilot, &window, channel.delays(), &grid)?;
    let (beta, gamma) = match weights {
        WeightMode::Uniform => (0.5, 0.5),
        WeightMode::InverseCrb => {
            let b = crb(pilot.chips(), channel, spec.window_len(), spec.lead, xi, mu, n0)?;
            let n = params.symbol_len() as f64;
            (1.0 / (n * n * b.var_dxi), 1.0 / b.var_dmu)
        }
    };
    Ok(PairwiseMeasurement {
        delta_big_delta: estimate.delta_big_delta(params),
        delta_mu: estimate.delta_mu,
        beta,
        gamma,
        estimate,
    })
}

/// Fixed multipath profile for the estimator benchmark: taps
/// `(1, 0.5, -0.2, 0.1, -0.05, -0.005)` at `(0, 1.75, 3.56, 7.90, 10.72, 15.30)` chips.
pub fn benchmark_channel() -> MultipathChannel {
    let h = [1.0, 0.5, -0.2, 0.1, -0.05, -0.005].map(|x| Complex64::new(x, 0.0)).to_vec();
    MultipathChannel::new(h, vec![0.0, 1.75, 3.56, 7.90, 10.72, 15.30]).expect("valid profile")
}

/// Deterministic two-block pilot with chips `exp(j pi (k^2 mod 4) / 2)`-style
/// phases, used for reproducible bound computations.
pub fn deterministic_pilot(n_c: usize) -> PilotBurst {
    let block: Vec<Complex64> = (0..n_c / 4).map(|k| cis_cycles(0.125 + 0.25 * ((k * k + k / 3) % 4) as f64)).collect();
    PilotBurst::from_block(&block, n_c / 2)
}
