//! Per-user downlink rates on a grid of APs for several reciprocity
//! calibration methods (perfect synchronization).

use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{mean, new_table, par_trials, trial_rng, ExperimentConfig, HarnessError, ResultTable};
use crate::calib::{
    argos_calibration, build_a, gather_observations, genie_calibration, solve_ls_calibration, CalibMethod,
    CalibrationObservations, DEFAULT_EIGEN_GAP,
};
use crate::channel::{magnitude_spread_for_std, sample_channel, sample_hardware_coeffs};
use crate::linalg::{complex_gaussian, CMatrix};
use crate::mumimo::{downlink_matrix, evaluate_rates, uplink_matrix, PowerModel, RateScenario};
use crate::topology::{
    build_calibration_subgraph, distance, square_grid_positions, CalibrationSubgraph, NetworkGraph, SubgraphStrategy,
};

fn restrict(obs: &CalibrationObservations, sub: &CalibrationSubgraph) -> CalibrationObservations {
    let edges = obs.edges().iter().filter(|e| sub.contains(e.i, e.j)).copied().collect();
    CalibrationObservations::new(obs.n_ap(), edges)
}

/// One-sided p-value of the paired t-test for `mean(a - b) > 0`.
pub fn paired_one_sided_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    if d.len() < 2 {
        return f64::NAN;
    }
    let m = mean(d.iter().copied());
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return if m > 0.0 { 0.0 } else { 1.0 };
    }
    let t = m / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("n >= 2");
    1.0 - dist.cdf(t)
}

/// Rows per placement (`trial`) and user (`sweep_value`):
/// `<method>_<precoder>_rate`, averaged over the calibration noise draws.
/// Aggregates: overall means, `ls_vs_genie_rel_gap_<precoder>` and the
/// paired p-value `p_argos_below_ls_<precoder>` over placement means.
pub fn run_grid_cdf(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let c = &config.grid_cdf;
    let n_ap = c.n_ap();
    let extent = c.diagonal_m / std::f64::consts::SQRT_2;
    let ap_pos = square_grid_positions(c.side, extent);
    let mut edges = Vec::new();
    for i in 0..n_ap {
        for j in (i + 1)..n_ap {
            let snr = c.cal_power_db - c.scenario.mean_pathloss_db(distance(ap_pos[i], ap_pos[j]))?;
            edges.push((i, j, snr));
        }
    }
    let graph = NetworkGraph::from_undirected(n_ap, Some(ap_pos.clone()), &edges)?;
    let full = build_calibration_subgraph(&graph, SubgraphStrategy::Full)?;
    let ls_sub = build_calibration_subgraph(&graph, c.subgraph)?;
    let star = build_calibration_subgraph(&graph, SubgraphStrategy::Star { center: c.center() })?;
    let spread = magnitude_spread_for_std(c.scenario.hardware_sq_mag_std)?;
    let cal_n0 = 10f64.powf(-c.cal_power_db / 10.0);
    let ul_n0 = c.ul_pilot_power_db.map(|p| 10f64.powf(-p / 10.0));
    let power = PowerModel::PerAntennaLimit { limit_db: c.limit_db };
    let combos: Vec<(CalibMethod, crate::mumimo::PrecoderKind)> =
        c.methods.iter().flat_map(|&m| c.precoders.iter().map(move |&p| (m, p))).collect();

    // per_trial[t][combo][user]
    let per_trial = par_trials(config.trials(), |t| {
        let mut rng = trial_rng(config.seed, "grid-cdf", t);
        let ut_pos: Vec<[f64; 2]> =
            (0..c.n_ut).map(|_| [rng.random::<f64>() * extent, rng.random::<f64>() * extent]).collect();
        let channel = sample_channel(&mut rng, &ap_pos, &ut_pos, &c.scenario, 1)?;
        let hw = sample_hardware_coeffs(&mut rng, n_ap, c.n_ut, spread);
        let h_dl = [downlink_matrix(&channel, &hw, 0)];
        let h_up = uplink_matrix(&channel, &hw, 0);
        let genie = genie_calibration(&hw);

        let mut acc = vec![vec![0.0; c.n_ut]; combos.len()];
        for _ in 0..c.draws {
            let obs = gather_observations(&channel, 0, &hw, &full, cal_n0, &mut rng);
            let h_csi = [match ul_n0 {
                Some(n0) => CMatrix::from_fn(n_ap, c.n_ut, |i, k| h_up[(i, k)] + complex_gaussian(&mut rng, n0)),
                None => h_up.clone(),
            }];
            let mut solved = Vec::with_capacity(c.methods.len());
            for &method in &c.methods {
                let coeffs = match method {
                    CalibMethod::Ls => solve_ls_calibration(&build_a(&restrict(&obs, &ls_sub)), DEFAULT_EIGEN_GAP)?.c,
                    CalibMethod::Argos => argos_calibration(&restrict(&obs, &star), c.center(), 0.0)?.c,
                    CalibMethod::Genie => genie.c.clone(),
                };
                solved.push((method, coeffs));
            }
            for (k, (method, precoder)) in combos.iter().enumerate() {
                let coeffs = &solved.iter().find(|s| s.0 == *method).expect("solved").1;
                let scn = RateScenario {
                    subcarriers: &[0],
                    h_dl: &h_dl,
                    h_csi: &h_csi,
                    calibration: Some(coeffs),
                    sync: None,
                };
                let rep = evaluate_rates(&scn, *precoder, &config.ofdm, power, &[0])?;
                for (a, r) in acc[k].iter_mut().zip(&rep.rates[0]) {
                    *a += r;
                }
            }
        }
        for a in acc.iter_mut().flatten() {
            *a /= c.draws as f64;
        }
        Ok(acc)
    })?;

    let mut table = new_table(config);
    let mut placement_means = Vec::with_capacity(combos.len());
    for (k, (method, precoder)) in combos.iter().enumerate() {
        let metric = format!("{method}_{precoder}_rate");
        for (t, per_user) in per_trial.iter().enumerate() {
            for (u, &r) in per_user[k].iter().enumerate() {
                table.push(Some(t), "user", u as f64, &metric, r);
            }
        }
        let pm: Vec<f64> = per_trial.iter().map(|x| mean(x[k].iter().copied())).collect();
        table.push_agg("all", 0.0, &format!("{method}_{precoder}_mean_rate"), mean(pm.iter().copied()));
        placement_means.push(((*method, *precoder), pm));
    }
    let find = |m: CalibMethod, p| placement_means.iter().find(|x| x.0 == (m, p)).map(|x| &x.1);
    for &p in &c.precoders {
        if let (Some(ls), Some(genie)) = (find(CalibMethod::Ls, p), find(CalibMethod::Genie, p)) {
            let (a, b) = (mean(ls.iter().copied()), mean(genie.iter().copied()));
            table.push_agg("all", 0.0, &format!("ls_vs_genie_rel_gap_{p}"), (a - b).abs() / b);
        }
        if let (Some(ls), Some(argos)) = (find(CalibMethod::Ls, p), find(CalibMethod::Argos, p)) {
            table.push_agg("all", 0.0, &format!("p_argos_below_ls_{p}"), paired_one_sided_p(ls, argos));
        }
    }
    Ok(table)
}
