//! Experiment configuration (TOML) and its content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::calib::CalibMethod;
use crate::channel::Scenario;
use crate::estimator::WeightMode;
use crate::mumimo::PrecoderKind;
use crate::ofdm::OfdmParams;
use crate::topology::SubgraphStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Fig2,
    Fig5,
    Fig9,
    GridCdf,
    Custom,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] =
        [ExperimentKind::Fig2, ExperimentKind::Fig5, ExperimentKind::Fig9, ExperimentKind::GridCdf, ExperimentKind::Custom];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Fig2 => "fig2",
            ExperimentKind::Fig5 => "fig5",
            ExperimentKind::Fig9 => "fig9",
            ExperimentKind::GridCdf => "grid-cdf",
            ExperimentKind::Custom => "custom",
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            ExperimentKind::Fig2 => 2000,
            ExperimentKind::Fig5 => 500,
            ExperimentKind::Fig9 => 2000,
            ExperimentKind::GridCdf => 200,
            ExperimentKind::Custom => 10,
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment `{s}`")))
    }
}

/// Free-running vs synchronized 4x4 downlink, rate vs per-user SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2Config {
    pub n_ap: usize,
    pub n_ut: usize,
    /// Users served by the conjugate-BF curves.
    pub conjugate_users: usize,
    /// SFO drawn uniformly in `[-eps_max_hz, eps_max_hz]` per AP.
    pub eps_max_hz: f64,
    /// Downlink block length `M`.
    pub symbols: usize,
    pub snr_db: Vec<f64>,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Fig2Config {
            n_ap: 4,
            n_ut: 4,
            conjugate_users: 1,
            eps_max_hz: 800.0,
            symbols: 60,
            snr_db: (0..=8).map(|k| 5.0 * k as f64).collect(),
        }
    }
}

/// Shape of the AP-AP channels used for the sync bursts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkProfile {
    /// Benchmark delay profile with a random phase per tap.
    #[default]
    Multipath,
    SinglePath,
}

/// Rate vs OFDM symbol index after over-the-air synchronization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig5Config {
    pub n_ap: usize,
    pub n_ut: usize,
    pub eps_max_hz: f64,
    /// AP timing offsets drawn uniformly in `[0, max_timing_chips]`.
    pub max_timing_chips: f64,
    pub ap_ut_snr_db: f64,
    /// Left panel: AP-AP SNR sweep at `pilot_len`.
    pub ap_ap_snr_db: Vec<f64>,
    pub pilot_len: usize,
    /// Right panel: pilot-length sweep at `pilot_sweep_snr_db`.
    pub pilot_len_sweep: Vec<usize>,
    pub pilot_sweep_snr_db: f64,
    pub max_symbol: usize,
    pub symbol_step: usize,
    pub weights: WeightMode,
    pub link_profile: LinkProfile,
}

impl Default for Fig5Config {
    fn default() -> Self {
        Fig5Config {
            n_ap: 4,
            n_ut: 4,
            eps_max_hz: 800.0,
            max_timing_chips: 3.0,
            ap_ut_snr_db: 30.0,
            ap_ap_snr_db: vec![0.0, 10.0, 20.0, 30.0],
            pilot_len: 256,
            pilot_len_sweep: vec![128, 256, 512, 1024],
            pilot_sweep_snr_db: 30.0,
            max_symbol: 1000,
            symbol_step: 50,
            weights: WeightMode::Uniform,
            link_profile: LinkProfile::Multipath,
        }
    }
}

/// ML estimator MSE against the CRB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig9Config {
    pub snr_db: Vec<f64>,
    pub pilot_len: usize,
    /// True `delta_mu` drawn uniformly in `[-max_offset_chips, max_offset_chips]`.
    pub max_offset_chips: f64,
    /// Fraction of the CFO search range used for the true `delta_xi`.
    pub cfo_fraction: f64,
    pub include_single_path: bool,
}

impl Default for Fig9Config {
    fn default() -> Self {
        Fig9Config {
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            pilot_len: 256,
            max_offset_chips: 2.0,
            cfo_fraction: 0.5,
            include_single_path: true,
        }
    }
}

/// Per-user rate distribution of reciprocity calibration methods on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridCdfConfig {
    pub side: usize,
    pub diagonal_m: f64,
    pub n_ut: usize,
    pub limit_db: f64,
    /// Calibration pilot power per AP (unit noise).
    pub cal_power_db: f64,
    /// Uplink pilot power per UT for CSI estimation; `None` disables
    /// estimation noise.
    pub ul_pilot_power_db: Option<f64>,
    /// Calibration noise draws per placement.
    pub draws: usize,
    pub methods: Vec<CalibMethod>,
    pub precoders: Vec<PrecoderKind>,
    /// Star center for Argos; defaults to the AP nearest the grid center.
    pub argos_center: Option<usize>,
    pub subgraph: SubgraphStrategy,
    pub scenario: Scenario,
}

impl Default for GridCdfConfig {
    fn default() -> Self {
        GridCdfConfig {
            side: 8,
            diagonal_m: 100.0,
            n_ut: 16,
            limit_db: 90.0,
            cal_power_db: 90.0,
            ul_pilot_power_db: Some(90.0),
            draws: 50,
            methods: vec![CalibMethod::Ls, CalibMethod::Argos, CalibMethod::Genie],
            precoders: vec![PrecoderKind::Zfbf, PrecoderKind::Conjugate],
            argos_center: None,
            subgraph: SubgraphStrategy::Full,
            scenario: Scenario::default(),
        }
    }
}

impl GridCdfConfig {
    pub fn n_ap(&self) -> usize {
        self.side * self.side
    }

    pub fn center(&self) -> usize {
        self.argos_center.unwrap_or_else(|| {
            let h = self.side.saturating_sub(1) / 2;
            h * self.side + h
        })
    }
}

/// Stage names accepted by the custom pipeline.
pub const CUSTOM_STAGES: [&str; 4] = ["coloring", "sync", "calibration", "rates"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomConfig {
    pub stages: Vec<String>,
    pub n_ap: usize,
    pub n_ut: usize,
    /// Edge probability of the random AP graph used by `coloring`.
    pub edge_probability: f64,
    pub eps_max_hz: f64,
    pub ap_ap_snr_db: f64,
    pub pilot_len: usize,
    pub cal_n0: f64,
    pub hardware_spread: f64,
    pub ap_ut_snr_db: f64,
    pub precoder: PrecoderKind,
    pub symbols: Vec<usize>,
}

impl Default for CustomConfig {
    fn default() -> Self {
        CustomConfig {
            stages: Vec::new(),
            n_ap: 4,
            n_ut: 4,
            edge_probability: 0.5,
            eps_max_hz: 800.0,
            ap_ap_snr_db: 30.0,
            pilot_len: 256,
            cal_n0: 1e-4,
            hardware_spread: 0.3,
            ap_ut_snr_db: 30.0,
            precoder: PrecoderKind::Zfbf,
            symbols: vec![0, 100, 500],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Monte Carlo trials; the experiment default when absent.
    pub trials: Option<usize>,
    pub output_dir: Option<String>,
    pub ofdm: OfdmParams,
    pub fig2: Fig2Config,
    pub fig5: Fig5Config,
    pub fig9: Fig9Config,
    pub grid_cdf: GridCdfConfig,
    pub custom: CustomConfig,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: ExperimentKind) -> Self {
        ExperimentConfig { experiment, ..Default::default() }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let s = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// SHA-256 of the canonical TOML serialization, hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or_else(|| self.experiment.default_trials())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.ofdm.validate().map_err(|e| invalid(e.to_string()))?;
        if self.trials == Some(0) {
            return Err(invalid("trials must be positive"));
        }
        let pilot = |n: usize| {
            if n < 4 || n % 4 != 0 {
                Err(invalid(format!("pilot length {n} must be a positive multiple of 4")))
            } else {
                Ok(())
            }
        };
        match self.experiment {
            ExperimentKind::Fig2 => {
                let c = &self.fig2;
                if c.n_ut == 0 || c.n_ut > c.n_ap || c.conjugate_users == 0 || c.conjugate_users > c.n_ap {
                    return Err(invalid("fig2 needs 1 <= users <= n_ap"));
                }
                if c.symbols == 0 || c.snr_db.is_empty() || !(c.eps_max_hz >= 0.0) {
                    return Err(invalid("fig2 needs symbols > 0, a non-empty SNR sweep and eps_max_hz >= 0"));
                }
            }
            ExperimentKind::Fig5 => {
                let c = &self.fig5;
                if c.n_ap < 2 || c.n_ut == 0 || c.n_ut > c.n_ap {
                    return Err(invalid("fig5 needs n_ap >= 2 and 1 <= n_ut <= n_ap"));
                }
                if c.ap_ap_snr_db.is_empty() && c.pilot_len_sweep.is_empty() {
                    return Err(invalid("fig5 needs at least one sweep value"));
                }
                if c.symbol_step == 0 || !(c.max_timing_chips >= 0.0) || !(c.eps_max_hz >= 0.0) {
                    return Err(invalid("fig5 needs symbol_step > 0 and non-negative offset ranges"));
                }
                pilot(c.pilot_len)?;
                c.pilot_len_sweep.iter().try_for_each(|&n| pilot(n))?;
            }
            ExperimentKind::Fig9 => {
                let c = &self.fig9;
                pilot(c.pilot_len)?;
                if c.snr_db.is_empty() || !(c.max_offset_chips >= 0.0) || !(0.0..=1.0).contains(&c.cfo_fraction) {
                    return Err(invalid("fig9 needs an SNR sweep, max_offset_chips >= 0 and cfo_fraction in [0, 1]"));
                }
            }
            ExperimentKind::GridCdf => {
                let c = &self.grid_cdf;
                if c.side < 2 || c.n_ut == 0 || c.draws == 0 || !(c.diagonal_m > 0.0) {
                    return Err(invalid("grid-cdf needs side >= 2, n_ut >= 1, draws >= 1, diagonal_m > 0"));
                }
                if c.precoders.contains(&PrecoderKind::Zfbf) && c.n_ut > c.n_ap() {
                    return Err(invalid("ZFBF needs n_ut <= number of APs"));
                }
                if c.methods.is_empty() || c.precoders.is_empty() {
                    return Err(invalid("grid-cdf needs at least one method and precoder"));
                }
                if c.center() >= c.n_ap() {
                    return Err(invalid("argos_center out of range"));
                }
            }
            ExperimentKind::Custom => {
                let c = &self.custom;
                if let Some(s) = c.stages.iter().find(|s| !CUSTOM_STAGES.contains(&s.as_str())) {
                    return Err(invalid(format!("unknown stage `{s}` (known: {})", CUSTOM_STAGES.join(", "))));
                }
                if c.n_ap < 2 || c.n_ut == 0 || (c.precoder == PrecoderKind::Zfbf && c.n_ut > c.n_ap) {
                    return Err(invalid("custom needs n_ap >= 2 and 1 <= n_ut <= n_ap"));
                }
                if !(0.0..=1.0).contains(&c.edge_probability) || !(c.cal_n0 >= 0.0) {
                    return Err(invalid("custom needs edge_probability in [0, 1] and cal_n0 >= 0"));
                }
                pilot(c.pilot_len)?;
            }
        }
        Ok(())
    }
}
