//! User-composed pipeline of module stages.
//!
//! Stages run in the configured order and may feed later ones: `sync`
//! corrections and `calibration` coefficients are picked up by `rates`.

use num_complex::Complex64;
use rand::Rng;

use super::fig5::{draw_clocks, residual_cfo_rms, synchronize_clique, LinkChannels};
use super::{new_table, par_trials, trial_rng, ExperimentConfig, HarnessError, LinkProfile, ResultTable};
use crate::calib::{alignment, build_a, gather_observations_with, genie_calibration, solve_ls_calibration, DEFAULT_EIGEN_GAP};
use crate::channel::{sample_hardware_coeffs, HardwareCoeffs};
use crate::estimator::WeightMode;
use crate::linalg::{complex_gaussian, CMatrix};
use crate::mumimo::{evaluate_rates, ApSyncState, PowerModel, RateScenario};
use crate::topology::{
    build_calibration_subgraph, check_pilot_assignment, l11_coloring, validate_anchor_cover, NetworkGraph, SubgraphStrategy,
};

struct Metric {
    stage: String,
    value: f64,
    metric: String,
    x: f64,
}

fn random_connected_graph<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<NetworkGraph, HarnessError> {
    // A random spanning path keeps the graph connected.
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
    Ok(NetworkGraph::from_edge_list(n, &edges)?)
}

pub fn run_custom(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let c = &config.custom;
    let params = config.ofdm;
    let mut table = new_table(config);
    if c.stages.is_empty() {
        return Ok(table);
    }
    let subcarriers: Vec<i32> = params.subcarriers().collect();

    let per_trial = par_trials(config.trials(), |t| {
        let mut out: Vec<Metric> = Vec::new();
        let mut sync: Option<ApSyncState> = None;
        let mut calibrated: Option<(HardwareCoeffs, Vec<Complex64>)> = None;
        for (s, stage) in c.stages.iter().enumerate() {
            let mut rng = trial_rng(config.seed, &format!("custom/{s}/{stage}"), t);
            let mut push = |metric: &str, x: f64, value: f64| {
                out.push(Metric { stage: format!("{s}:{stage}"), value, metric: metric.to_string(), x })
            };
            match stage.as_str() {
                "coloring" => {
                    let g = random_connected_graph(c.n_ap, c.edge_probability, &mut rng)?;
                    let all: Vec<usize> = (0..c.n_ap).collect();
                    let anchors = validate_anchor_cover(&g, &all)?;
                    let colors = l11_coloring(&anchors);
                    push("num_colors", 0.0, colors.num_colors as f64);
                    push("valid", 0.0, f64::from(u8::from(check_pilot_assignment(&anchors, &colors).is_ok())));
                }
                "sync" => {
                    let clocks = draw_clocks(c.n_ap, c.eps_max_hz, 3.0, &params, &mut rng);
                    let links = LinkChannels::draw(c.n_ap, LinkProfile::Multipath, &mut rng);
                    let corr =
                        synchronize_clique(&clocks, &links, &params, c.pilot_len, c.ap_ap_snr_db, WeightMode::Uniform, &mut rng)?;
                    push("residual_cfo_rms", 0.0, residual_cfo_rms(&clocks, &corr, &params));
                    sync = Some(ApSyncState::corrected(clocks, &corr));
                }
                "calibration" => {
                    let hw = sample_hardware_coeffs(&mut rng, c.n_ap, c.n_ut, c.hardware_spread);
                    let edges: Vec<(usize, usize)> =
                        (0..c.n_ap).flat_map(|i| ((i + 1)..c.n_ap).map(move |j| (i, j))).collect();
                    let g = NetworkGraph::from_edge_list(c.n_ap, &edges)?;
                    let f = build_calibration_subgraph(&g, SubgraphStrategy::Full)?;
                    let b: Vec<Complex64> = (0..c.n_ap * c.n_ap).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
                    let n = c.n_ap;
                    let obs = gather_observations_with(|i, j| b[i.min(j) * n + i.max(j)], &hw, &f, c.cal_n0, &mut rng);
                    let sol = solve_ls_calibration(&build_a(&obs), DEFAULT_EIGEN_GAP)?;
                    push("alignment", 0.0, alignment(&sol.c, &genie_calibration(&hw).c));
                    push("residual", 0.0, sol.residual);
                    calibrated = Some((hw, sol.c));
                }
                "rates" => {
                    let (hw, coeffs) = match &calibrated {
                        Some((hw, cc)) => (hw.clone(), Some(cc.as_slice())),
                        None => (HardwareCoeffs::ideal(c.n_ap, c.n_ut), None),
                    };
                    let b: Vec<CMatrix> = subcarriers
                        .iter()
                        .map(|_| CMatrix::from_fn(c.n_ap, c.n_ut, |_, _| complex_gaussian(&mut rng, 1.0)))
                        .collect();
                    let h_dl: Vec<CMatrix> =
                        b.iter().map(|m| CMatrix::from_fn(c.n_ap, c.n_ut, |i, k| hw.ap_tx[i] * m[(i, k)] * hw.ut_rx[k])).collect();
                    let h_up: Vec<CMatrix> =
                        b.iter().map(|m| CMatrix::from_fn(c.n_ap, c.n_ut, |i, k| hw.ap_rx[i] * m[(i, k)] * hw.ut_tx[k])).collect();
                    let scn = RateScenario {
                        subcarriers: &subcarriers,
                        h_dl: &h_dl,
                        h_csi: &h_up,
                        calibration: coeffs,
                        sync: sync.as_ref(),
                    };
                    let rep = evaluate_rates(&scn, c.precoder, &params, PowerModel::PerUserSnr { snr_db: c.ap_ut_snr_db }, &c.symbols)?;
                    for (k, &m) in c.symbols.iter().enumerate() {
                        push("sum_rate", m as f64, rep.sum_rate(k));
                    }
                }
                other => return Err(HarnessError::Config(format!("unknown stage `{other}`"))),
            }
        }
        Ok(out)
    })?;

    for (t, metrics) in per_trial.iter().enumerate() {
        for m in metrics {
            table.push(Some(t), &m.stage, m.x, &m.metric, m.value);
        }
    }
    let mut keys: Vec<(String, u64, String)> = per_trial[0].iter().map(|m| (m.stage.clone(), m.x.to_bits(), m.metric.clone())).collect();
    keys.dedup();
    for (stage, xb, metric) in keys {
        let x = f64::from_bits(xb);
        let v: Vec<f64> = per_trial
            .iter()
            .flat_map(|ms| ms.iter().filter(|m| m.stage == stage && m.x == x && m.metric == metric).map(|m| m.value))
            .collect();
        table.push_agg(&stage, x, &format!("mean_{metric}"), super::mean(v));
    }
    Ok(table)
}
