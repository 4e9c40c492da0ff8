use dmimo_core::estimator::{
    benchmark_channel, crb, deterministic_pilot, fisher_information, ml_estimate, synthesize_burst, BurstSpec,
};
use dmimo_core::ofdm::{MultipathChannel, OfdmParams};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noiseless_estimate_recovers_offsets(seed in any::<u64>(), dmu in -2.0f64..2.0, frac in -0.5f64..0.5) {
        let params = OfdmParams::default();
        let (pilot, ch, spec) = (deterministic_pilot(256), benchmark_channel(), BurstSpec::default());
        let grid = spec.grid(&params, ch.max_delay());
        let dxi = frac * grid.xi_max;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = synthesize_burst(&pilot, &ch, spec.window_len(), spec.lead, dxi, dmu, 0.0, &mut rng).unwrap();
        let est = ml_estimate(&pilot, &w, ch.delays(), &grid).unwrap();
        prop_assert!((est.delta_xi - dxi).abs() < 1e-7, "{} vs {}", est.delta_xi, dxi);
        prop_assert!((est.delta_mu - dmu).abs() < 1e-4, "{} vs {}", est.delta_mu, dmu);
    }
}

#[test]
fn crb_is_linear_in_noise() {
    let (pilot, ch, spec) = (deterministic_pilot(256), benchmark_channel(), BurstSpec::default());
    let a = crb(pilot.chips(), &ch, spec.window_len(), spec.lead, 1e-4, 0.3, 1e-2).unwrap();
    let b = crb(pilot.chips(), &ch, spec.window_len(), spec.lead, 1e-4, 0.3, 1e-3).unwrap();
    assert!((a.var_dxi / b.var_dxi - 10.0).abs() < 1e-9);
    assert!((a.var_dmu / b.var_dmu - 10.0).abs() < 1e-9);
}

#[test]
fn fisher_is_symmetric_psd() {
    let (pilot, ch, spec) = (deterministic_pilot(256), benchmark_channel(), BurstSpec::default());
    let f = fisher_information(pilot.chips(), &ch, spec.window_len(), spec.lead, 5e-5, -0.7, 0.1);
    assert!((&f - f.transpose()).amax() < 1e-9 * f.amax());
    assert!(f.clone().symmetric_eigenvalues().min() > 0.0);
}

#[test]
fn longer_pilot_tightens_bound() {
    let ch = MultipathChannel::single_path(Complex64::new(1.0, 0.0));
    let spec = BurstSpec::default();
    let mut prev = f64::INFINITY;
    for nc in [128, 256, 512] {
        let pilot = deterministic_pilot(nc);
        let s = BurstSpec { pilot_len: nc, ..spec };
        let b = crb(pilot.chips(), &ch, s.window_len(), s.lead, 0.0, 0.2, 0.1).unwrap();
        assert!(b.var_dxi < prev);
        prev = b.var_dxi;
    }
}
