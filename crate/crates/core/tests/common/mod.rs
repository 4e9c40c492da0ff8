//! Checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use dmimo_core::calib::{alignment, build_a, gather_observations_with, genie_calibration, solve_ls_calibration};
use dmimo_core::channel::sample_hardware_coeffs;
use dmimo_core::linalg::{complex_gaussian, hermitian_eigen, CMatrix};
use dmimo_core::ofdm::{
    demodulate, frequency_domain_rx, normalized_offsets, qpsk_chip, synthesize_rx, ChipPulse, MultipathChannel, NodeClock,
    OfdmParams,
};
use dmimo_core::sync::{noiseless_measurements, synchronize};
use dmimo_core::topology::{build_calibration_subgraph, validate_anchor_cover, NetworkGraph, SubgraphStrategy};
use num_complex::Complex64;
use rand::Rng;

/// Random connected graph: a shuffled spanning path plus extra edges with
/// probability `p`.
pub fn random_connected<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> NetworkGraph {
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    NetworkGraph::from_edge_list(n, &edges).expect("connected by construction")
}

pub fn random_clocks<R: Rng + ?Sized>(n: usize, params: &OfdmParams, rng: &mut R) -> Vec<NodeClock> {
    (0..n)
        .map(|_| NodeClock::new(rng.random::<f64>() * 4.0 / params.fs_hz, rng.random_range(-1.0..=1.0) * params.max_sfo_hz()))
        .collect()
}

/// Worst relative error of recovered CFO and timing differences against
/// the truth, all APs anchors, noiseless measurements.
pub fn noiseless_sync_error<R: Rng + ?Sized>(n: usize, rng: &mut R) -> f64 {
    let params = OfdmParams::default();
    let g = random_connected(n, 3.0 / n as f64, rng);
    let all: Vec<usize> = (0..n).collect();
    let anchors = validate_anchor_cover(&g, &all).expect("all-anchor cover");
    let clocks = random_clocks(n, &params, rng);
    let meas = noiseless_measurements(&clocks, g.directed_edges(), &params);
    let reference = rng.random_range(0..n);
    let sol = synchronize(&meas, &anchors, reference).expect("connected anchors");
    let off: Vec<_> = clocks.iter().map(|c| normalized_offsets(c, &params)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let want_d = off[i].big_delta - off[j].big_delta;
            let got_d = sol.delta_of(i).unwrap() - sol.delta_of(j).unwrap();
            let want_m = off[i].mu - off[j].mu;
            let got_m = sol.mu_of(i).unwrap() - sol.mu_of(j).unwrap();
            let scale_d = off.iter().map(|o| o.big_delta.abs()).fold(0.0, f64::max);
            let scale_m = off.iter().map(|o| o.mu.abs()).fold(0.0, f64::max);
            worst = worst.max((got_d - want_d).abs() / scale_d).max((got_m - want_m).abs() / scale_m);
        }
    }
    worst
}

/// Noiseless LS calibration on a random connected graph: returns
/// `(alignment with the genie direction, lambda_min / trace(A))`.
pub fn noiseless_calibration<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (f64, f64) {
    let g = random_connected(n, 2.0 / n as f64, rng);
    let f = build_calibration_subgraph(&g, SubgraphStrategy::Full).expect("connected");
    let hw = sample_hardware_coeffs(rng, n, 1, 0.4);
    let b: Vec<Complex64> = (0..n * n).map(|_| complex_gaussian(rng, 1.0)).collect();
    let obs = gather_observations_with(|i, j| b[i.min(j) * n + i.max(j)], &hw, &f, 0.0, rng);
    let a = build_a(&obs);
    let sol = solve_ls_calibration(&a, 0.0).expect("nondegenerate");
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let (eig, _) = hermitian_eigen(&a);
    (alignment(&sol.c, &genie_calibration(&hw).c), eig[0] / trace)
}

/// Time-domain synthesis against the frequency-domain rotation model for a
/// CFO of `cfo_frac` subcarrier spacings.
pub struct ModelCheck {
    /// Worst phase error of `Y[m] / Y[0]`, rad.
    pub phase_err: f64,
    /// Worst relative amplitude error of `Y[m] / Y[0]`.
    pub amp_err: f64,
    /// Interference power after a per-symbol common gain fit, relative to signal.
    pub ici: f64,
}

pub fn model_check<R: Rng + ?Sized>(cfo_frac: f64, rng: &mut R) -> ModelCheck {
    let params = OfdmParams::default();
    let ch = MultipathChannel::new(
        vec![Complex64::new(1.0, 0.0), Complex64::new(0.4, 0.2), Complex64::new(-0.2, 0.1)],
        vec![0.0, 1.5, 3.2],
    )
    .unwrap();
    let eps = cfo_frac * params.subcarrier_spacing_hz() / params.kappa();
    let tx = NodeClock::new(2.3 / params.fs_hz, eps);
    let rx = NodeClock::default();
    let n_sym = 6;

    // Repeated symbol: phase and amplitude evolution across symbols.
    let x: Vec<Complex64> = (0..params.n_subcarriers).map(|_| qpsk_chip(rng)).collect();
    let xs = vec![x; n_sym];
    let y = demodulate(&synthesize_rx(&xs, &ch, &tx, &rx, &params, ChipPulse::BandLimited, 0.0, rng).unwrap(), &params);
    let z = frequency_domain_rx(&xs, &ch, &tx, &rx, &params);
    let (mut phase_err, mut amp_err) = (0.0_f64, 0.0_f64);
    for m in 1..n_sym {
        for k in 0..params.n_subcarriers {
            let r = (y[m][k] / y[0][k]) / (z[m][k] / z[0][k]);
            phase_err = phase_err.max(r.arg().abs());
            amp_err = amp_err.max((r.norm() - 1.0).abs());
        }
    }

    // Random symbols: residual after the best common gain per symbol.
    let xs: Vec<Vec<Complex64>> = (0..n_sym).map(|_| (0..params.n_subcarriers).map(|_| qpsk_chip(rng)).collect()).collect();
    let y = demodulate(&synthesize_rx(&xs, &ch, &tx, &rx, &params, ChipPulse::BandLimited, 0.0, rng).unwrap(), &params);
    let z = frequency_domain_rx(&xs, &ch, &tx, &rx, &params);
    let (mut err, mut sig) = (0.0, 0.0);
    for m in 0..n_sym {
        let num: Complex64 = z[m].iter().zip(&y[m]).map(|(a, b)| a.conj() * b).sum();
        let den: f64 = z[m].iter().map(|a| a.norm_sqr()).sum();
        let gain = num / den;
        err += z[m].iter().zip(&y[m]).map(|(a, b)| (b - gain * a).norm_sqr()).sum::<f64>();
        sig += den * gain.norm_sqr();
    }
    ModelCheck { phase_err, amp_err, ici: err / sig }
}

/// Random `rows x cols` CN(0, 1) matrix.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, 1.0))
}

/// Reduced configuration of each experiment for reruns and determinism
/// checks.
pub fn small_config(kind: dmimo_core::harness::ExperimentKind) -> dmimo_core::harness::ExperimentConfig {
    use dmimo_core::harness::{ExperimentConfig, ExperimentKind, CUSTOM_STAGES};
    let mut c = ExperimentConfig::for_experiment(kind);
    c.seed = 20240917;
    match kind {
        ExperimentKind::Fig2 => {
            c.trials = Some(6);
            c.fig2.snr_db = vec![0.0, 30.0];
        }
        ExperimentKind::Fig5 => {
            c.trials = Some(3);
            c.fig5.ap_ap_snr_db = vec![20.0];
            c.fig5.pilot_len_sweep = vec![128];
            c.fig5.max_symbol = 200;
            c.fig5.symbol_step = 100;
        }
        ExperimentKind::Fig9 => {
            c.trials = Some(6);
            c.fig9.snr_db = vec![10.0, 20.0];
        }
        ExperimentKind::GridCdf => {
            c.trials = Some(2);
            c.grid_cdf.side = 4;
            c.grid_cdf.n_ut = 4;
            c.grid_cdf.draws = 3;
        }
        ExperimentKind::Custom => {
            c.trials = Some(4);
            c.custom.stages = CUSTOM_STAGES.iter().map(|s| s.to_string()).collect();
        }
    }
    c
}
