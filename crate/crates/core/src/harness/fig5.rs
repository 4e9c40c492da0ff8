//! Rate decay over OFDM symbols after over-the-air synchronization of a
//! fully connected anchor set.

use rand::Rng;

use super::{mean, new_table, par_trials, trial_rng, ExperimentConfig, HarnessError, LinkProfile, ResultTable};
use crate::estimator::{benchmark_channel, noise_for_snr, pairwise_measure, BurstSpec, WeightMode};
use crate::linalg::{cis_cycles, complex_gaussian, CMatrix};
use crate::mumimo::{evaluate_rates, ApSyncState, PowerModel, PrecoderKind, RateScenario};
use crate::ofdm::{normalized_offsets, MultipathChannel, NodeClock, OfdmParams, PilotBurst};
use crate::sync::{synchronize, MeasurementRecord, MeasurementSet, NetworkCorrections};
use crate::topology::{validate_anchor_cover, NetworkGraph};

/// Reciprocal AP-AP propagation channels, indexed by unordered pair.
pub(crate) struct LinkChannels {
    n: usize,
    links: Vec<MultipathChannel>,
}

impl LinkChannels {
    pub(crate) fn draw<R: Rng + ?Sized>(n: usize, profile: LinkProfile, rng: &mut R) -> Self {
        let base = benchmark_channel();
        let mut links = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for _ in 0..n * n.saturating_sub(1) / 2 {
            let ch = match profile {
                LinkProfile::Multipath => {
                    let coeffs = base.coeffs().iter().map(|h| h * cis_cycles(rng.random::<f64>())).collect();
                    base.with_coeffs(coeffs).expect("same profile")
                }
                LinkProfile::SinglePath => MultipathChannel::single_path(cis_cycles(rng.random::<f64>())),
            };
            links.push(ch);
        }
        LinkChannels { n, links }
    }

    pub(crate) fn get(&self, i: usize, j: usize) -> &MultipathChannel {
        let (a, b) = (i.min(j), i.max(j));
        // Row-major upper triangle.
        let k = a * self.n - a * (a + 1) / 2 + (b - a - 1);
        &self.links[k]
    }
}

/// Measures every directed link of a clique with fresh pilots and noise at
/// `snr_db`, then solves the LS corrections relative to AP 0.
#[allow(clippy::too_many_arguments)]
pub(crate) fn synchronize_clique<R: Rng + ?Sized>(
    clocks: &[NodeClock],
    links: &LinkChannels,
    params: &OfdmParams,
    pilot_len: usize,
    snr_db: f64,
    weights: WeightMode,
    rng: &mut R,
) -> Result<NetworkCorrections, HarnessError> {
    let n = clocks.len();
    let spec = BurstSpec { pilot_len, ..BurstSpec::default() };
    let mut records = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let pilot = PilotBurst::two_block(pilot_len, rng)?;
            let ch = links.get(i, j);
            let n0 = noise_for_snr(&pilot, ch, &spec, snr_db);
            let m = pairwise_measure(&pilot, ch, &clocks[j], &clocks[i], params, &spec, n0, weights, rng)?;
            records.push(MeasurementRecord { i, j, d_delta: m.delta_big_delta, d_mu: m.delta_mu, beta: m.beta, gamma: m.gamma });
        }
    }
    let meas = MeasurementSet::new(records)?;
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let graph = NetworkGraph::from_edge_list(n, &edges)?;
    let all: Vec<usize> = (0..n).collect();
    let anchors = validate_anchor_cover(&graph, &all)?;
    let sol = synchronize(&meas, &anchors, 0)?;
    let mut corr = NetworkCorrections { delta_corr: vec![0.0; n], mu_corr: vec![0.0; n] };
    for (k, &a) in sol.anchors.iter().enumerate() {
        corr.delta_corr[a] = sol.delta_corr[k];
        corr.mu_corr[a] = sol.mu_corr[k];
    }
    Ok(corr)
}

/// RMS over APs of the residual CFO `Delta_i - Delta_corr_i - Delta_0`,
/// cycles per OFDM symbol.
pub(crate) fn residual_cfo_rms(clocks: &[NodeClock], corr: &NetworkCorrections, params: &OfdmParams) -> f64 {
    let off: Vec<f64> = clocks.iter().map(|c| normalized_offsets(c, params).big_delta).collect();
    mean(off.iter().zip(&corr.delta_corr).map(|(d, c)| (d - c - off[0]).powi(2))).sqrt()
}

pub(crate) fn draw_clocks<R: Rng + ?Sized>(
    n: usize,
    eps_max_hz: f64,
    max_timing_chips: f64,
    params: &OfdmParams,
    rng: &mut R,
) -> Vec<NodeClock> {
    (0..n)
        .map(|_| {
            let tau = rng.random::<f64>() * max_timing_chips / params.fs_hz;
            NodeClock::new(tau, rng.random_range(-1.0..=1.0) * eps_max_hz)
        })
        .collect()
}

struct SweepPoint {
    sweep: &'static str,
    value: f64,
    pilot_len: usize,
    snr_db: f64,
}

/// Per sweep point and trial: ZFBF sum rate at symbols
/// `0, step, ..., max_symbol` with LS-corrected clocks, the ideal rate and
/// the residual CFO.
pub fn run_fig5(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let c = &config.fig5;
    let params = config.ofdm;
    let subcarriers: Vec<i32> = params.subcarriers().collect();
    let symbols: Vec<usize> = (0..=c.max_symbol).step_by(c.symbol_step).collect();
    let mut points: Vec<SweepPoint> = c
        .ap_ap_snr_db
        .iter()
        .map(|&s| SweepPoint { sweep: "ap_ap_snr_db", value: s, pilot_len: c.pilot_len, snr_db: s })
        .collect();
    points.extend(c.pilot_len_sweep.iter().map(|&n| SweepPoint {
        sweep: "pilot_len",
        value: n as f64,
        pilot_len: n,
        snr_db: c.pilot_sweep_snr_db,
    }));
    let power = PowerModel::PerUserSnr { snr_db: c.ap_ut_snr_db };

    let per_trial = par_trials(config.trials(), |t| {
        let mut rng = trial_rng(config.seed, "fig5", t);
        let clocks = draw_clocks(c.n_ap, c.eps_max_hz, c.max_timing_chips, &params, &mut rng);
        let links = LinkChannels::draw(c.n_ap, c.link_profile, &mut rng);
        let h: Vec<CMatrix> = subcarriers
            .iter()
            .map(|_| CMatrix::from_fn(c.n_ap, c.n_ut, |_, _| complex_gaussian(&mut rng, 1.0)))
            .collect();
        let ideal = RateScenario { subcarriers: &subcarriers, h_dl: &h, h_csi: &h, calibration: None, sync: None };
        let ideal_rate = evaluate_rates(&ideal, PrecoderKind::Zfbf, &params, power, &[0])?.sum_rate(0);

        let mut out = Vec::with_capacity(points.len());
        for (p, point) in points.iter().enumerate() {
            let mut prng = trial_rng(config.seed, &format!("fig5/{p}"), t);
            let corr = synchronize_clique(&clocks, &links, &params, point.pilot_len, point.snr_db, c.weights, &mut prng)?;
            let state = ApSyncState::corrected(clocks.clone(), &corr);
            let scn = RateScenario { sync: Some(&state), ..ideal };
            let rep = evaluate_rates(&scn, PrecoderKind::Zfbf, &params, power, &symbols)?;
            let rates: Vec<f64> = (0..symbols.len()).map(|s| rep.sum_rate(s)).collect();
            out.push((rates, residual_cfo_rms(&clocks, &corr, &params)));
        }
        Ok((ideal_rate, out))
    })?;

    let mut table = new_table(config);
    for (p, point) in points.iter().enumerate() {
        let (sw, v) = (point.sweep, point.value);
        for (t, (ideal, out)) in per_trial.iter().enumerate() {
            table.push(Some(t), sw, v, "ideal_sum_rate", *ideal);
            table.push(Some(t), sw, v, "residual_cfo_rms", out[p].1);
            for (s, m) in symbols.iter().enumerate() {
                table.push(Some(t), sw, v, &format!("sum_rate_m{m:05}"), out[p].0[s]);
            }
        }
        table.push_agg(sw, v, "ideal_sum_rate", mean(per_trial.iter().map(|x| x.0)));
        table.push_agg(sw, v, "residual_cfo_rms", mean(per_trial.iter().map(|x| x.1[p].1.powi(2))).sqrt());
        let m0 = mean(per_trial.iter().map(|x| x.1[p].0[0]));
        for (s, m) in symbols.iter().enumerate() {
            let r = mean(per_trial.iter().map(|x| x.1[p].0[s]));
            table.push_agg(sw, v, &format!("sum_rate_m{m:05}"), r);
            table.push_agg(sw, v, &format!("rel_rate_m{m:05}"), r / m0);
        }
    }
    Ok(table)
}
