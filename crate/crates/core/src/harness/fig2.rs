//! Downlink rate with free-running AP clocks against perfect synchronization.

use rand::Rng;

use super::{mean, new_table, par_trials, trial_rng, ExperimentConfig, HarnessError, ResultTable};
use crate::linalg::{complex_gaussian, CMatrix};
use crate::mumimo::{evaluate_rates_sweep, ApSyncState, PowerModel, PrecoderKind, RateScenario};
use crate::ofdm::NodeClock;

pub(crate) const CURVES: [&str; 4] = ["ideal_zfbf", "mismatched_zfbf", "ideal_conjugate", "mismatched_conjugate"];

/// Sum rate averaged over the `M`-symbol block for every curve and SNR
/// point; rows are `(trial, snr_db, curve)`.
pub fn run_fig2(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let c = &config.fig2;
    let params = config.ofdm;
    let subcarriers: Vec<i32> = params.subcarriers().collect();
    let powers: Vec<PowerModel> = c.snr_db.iter().map(|&snr_db| PowerModel::PerUserSnr { snr_db }).collect();
    let block: Vec<usize> = (0..c.symbols).collect();

    let per_trial = par_trials(config.trials(), |t| {
        let mut rng = trial_rng(config.seed, "fig2", t);
        let clocks: Vec<NodeClock> = (0..c.n_ap)
            .map(|_| {
                let tau = rng.random::<f64>() * 0.5 * params.cp_len as f64 / params.fs_hz;
                NodeClock::new(tau, rng.random_range(-1.0..=1.0) * c.eps_max_hz)
            })
            .collect();
        let n_users = c.n_ut.max(c.conjugate_users);
        let h: Vec<CMatrix> = subcarriers
            .iter()
            .map(|_| CMatrix::from_fn(c.n_ap, n_users, |_, _| complex_gaussian(&mut rng, 1.0)))
            .collect();
        let free = ApSyncState::free_running(clocks);

        let mut out = Vec::with_capacity(4);
        for (kind, users) in [(PrecoderKind::Zfbf, c.n_ut), (PrecoderKind::Conjugate, c.conjugate_users)] {
            let hk: Vec<CMatrix> = h.iter().map(|m| m.columns(0, users).into_owned()).collect();
            let ideal = RateScenario { subcarriers: &subcarriers, h_dl: &hk, h_csi: &hk, calibration: None, sync: None };
            let mismatched = RateScenario { sync: Some(&free), ..ideal };
            let a = evaluate_rates_sweep(&ideal, kind, &params, &powers, &[0])?;
            let b = evaluate_rates_sweep(&mismatched, kind, &params, &powers, &block)?;
            out.push(a.iter().map(|r| r.average_sum_rate()).collect::<Vec<_>>());
            out.push(b.iter().map(|r| r.average_sum_rate()).collect::<Vec<_>>());
        }
        Ok(out)
    })?;

    let mut table = new_table(config);
    for (s, &snr) in c.snr_db.iter().enumerate() {
        let mut means = [0.0; 4];
        for (k, name) in CURVES.iter().enumerate() {
            for (t, curves) in per_trial.iter().enumerate() {
                table.push(Some(t), "snr_db", snr, name, curves[k][s]);
            }
            means[k] = mean(per_trial.iter().map(|curves| curves[k][s]));
            table.push_agg("snr_db", snr, name, means[k]);
        }
        table.push_agg("snr_db", snr, "ratio_zfbf", means[1] / means[0]);
        table.push_agg("snr_db", snr, "ratio_conjugate", means[3] / means[2]);
    }
    Ok(table)
}
