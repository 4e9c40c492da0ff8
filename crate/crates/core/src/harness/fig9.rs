//! ML timing/frequency estimator MSE against its CRB.

use num_complex::Complex64;
use rand::Rng;

use super::{mean, new_table, par_trials, trial_rng, ExperimentConfig, HarnessError, ResultTable};
use crate::estimator::{benchmark_channel, crb, ml_estimate, noise_for_snr, synthesize_burst, BurstSpec};
use crate::ofdm::{MultipathChannel, PilotBurst};

/// Per-trial squared errors and CRBs for one SNR point.
#[derive(Debug, Clone, Copy)]
struct TrialErrors {
    sq_dxi: f64,
    sq_dmu: f64,
    crb_dxi: f64,
    crb_dmu: f64,
}

fn variants(config: &ExperimentConfig) -> Vec<(&'static str, MultipathChannel)> {
    let mut v = vec![("multipath", benchmark_channel())];
    if config.fig9.include_single_path {
        v.push(("single_path", MultipathChannel::single_path(Complex64::new(1.0, 0.0))));
    }
    v
}

/// Offsets and pilot are shared across the SNR sweep of a trial; only the
/// noise changes. True offsets are drawn uniformly: `delta_mu` within
/// `max_offset_chips`, `delta_xi` within `cfo_fraction` of the search range.
pub fn run_fig9(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let c = &config.fig9;
    let params = config.ofdm;
    let spec = BurstSpec { pilot_len: c.pilot_len, ..BurstSpec::default() };
    let mut table = new_table(config);

    for (name, channel) in variants(config) {
        let grid = spec.grid(&params, channel.max_delay());
        let per_trial = par_trials(config.trials(), |t| {
            let mut rng = trial_rng(config.seed, &format!("fig9/{name}"), t);
            let pilot = PilotBurst::two_block(c.pilot_len, &mut rng)?;
            let xi_half = c.cfo_fraction * grid.xi_max;
            let xi = if xi_half > 0.0 { rng.random_range(-xi_half..=xi_half) } else { 0.0 };
            let mu = if c.max_offset_chips > 0.0 { rng.random_range(-c.max_offset_chips..=c.max_offset_chips) } else { 0.0 };
            let m = spec.window_len();
            c.snr_db
                .iter()
                .enumerate()
                .map(|(s, &snr)| {
                    let mut nrng = trial_rng(config.seed, &format!("fig9/{name}/{s}"), t);
                    let n0 = noise_for_snr(&pilot, &channel, &spec, snr);
                    let w = synthesize_burst(&pilot, &channel, m, spec.lead, xi, mu, n0, &mut nrng)?;
                    let est = ml_estimate(&pilot, &w, channel.delays(), &grid)?;
                    let bound = crb(pilot.chips(), &channel, m, spec.lead, xi, mu, n0)?;
                    Ok(TrialErrors {
                        sq_dxi: (est.delta_xi - xi).powi(2),
                        sq_dmu: (est.delta_mu - mu).powi(2),
                        crb_dxi: bound.var_dxi,
                        crb_dmu: bound.var_dmu,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })?;

        let mut log_crb = Vec::new();
        for (s, &snr) in c.snr_db.iter().enumerate() {
            for (t, e) in per_trial.iter().enumerate() {
                table.push(Some(t), "snr_db", snr, &format!("{name}.sq_err_dxi"), e[s].sq_dxi);
                table.push(Some(t), "snr_db", snr, &format!("{name}.sq_err_dmu"), e[s].sq_dmu);
            }
            let mse_dxi = mean(per_trial.iter().map(|e| e[s].sq_dxi));
            let mse_dmu = mean(per_trial.iter().map(|e| e[s].sq_dmu));
            let crb_dxi = mean(per_trial.iter().map(|e| e[s].crb_dxi));
            let crb_dmu = mean(per_trial.iter().map(|e| e[s].crb_dmu));
            for (metric, v) in [
                ("mse_dxi", mse_dxi),
                ("crb_dxi", crb_dxi),
                ("ratio_dxi", mse_dxi / crb_dxi),
                ("mse_dmu", mse_dmu),
                ("crb_dmu", crb_dmu),
                ("ratio_dmu", mse_dmu / crb_dmu),
            ] {
                table.push_agg("snr_db", snr, &format!("{name}.{metric}"), v);
            }
            log_crb.push((snr / 10.0, crb_dxi.log10(), crb_dmu.log10()));
        }
        if log_crb.len() >= 2 {
            let xs: Vec<f64> = log_crb.iter().map(|p| p.0).collect();
            table.push_agg("all", 0.0, &format!("{name}.crb_slope_dxi"), slope(&xs, &log_crb.iter().map(|p| p.1).collect::<Vec<_>>()));
            table.push_agg("all", 0.0, &format!("{name}.crb_slope_dmu"), slope(&xs, &log_crb.iter().map(|p| p.2).collect::<Vec<_>>()));
        }
    }
    Ok(table)
}

/// Least-squares slope of `y` on `x`.
pub(crate) fn slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x.iter().copied()), mean(y.iter().copied()));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
