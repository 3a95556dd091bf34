//! Run configuration (TOML).
//!
//! Every field has a default; the resolved configuration, with all defaults
//! filled in, is written next to each run's output.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crosspmf::analysis::{AmplitudeDef, AnalysisOptions, ExtremaMethod, SigmaSource};
use crosspmf::coincidence::SourceParams;
use crosspmf::entanglement::{CompensationMode, SweepSymmetry};
use crosspmf::fiber::{self, Birefringence, CrossAlignedPair, PmfSegment};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberKind {
    #[default]
    PmfCross,
    Smf,
}

impl FiberKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FiberKind::PmfCross => "pmf_cross",
            FiberKind::Smf => "smf",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftConfig {
    /// Std-dev of each SMF random-walk step.
    pub smf_step_rad: f64,
    /// Number of angle points a drift step is held for.
    pub smf_correlation_steps: u32,
    /// Std-dev of the retardance jitter of each PMF segment.
    pub pmf_phase_jitter_rad: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            smf_step_rad: 0.0,
            smf_correlation_steps: 1,
            pmf_phase_jitter_rad: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub fiber: FiberKind,
    pub length_m: f64,
    pub delta_length_nm: f64,
    pub misalignment_deg: f64,
    pub frame_offset_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pmd_coeff_ps_per_sqrt_km: Option<f64>,
    pub wavelength_nm: f64,
    pub group_index: f64,
    pub drift: DriftConfig,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            fiber: FiberKind::PmfCross,
            length_m: fiber::DEFAULT_LENGTH_M,
            delta_length_nm: 0.0,
            misalignment_deg: 0.0,
            frame_offset_deg: 0.0,
            delta_n: None,
            pmd_coeff_ps_per_sqrt_km: None,
            wavelength_nm: fiber::DEFAULT_WAVELENGTH_NM,
            group_index: fiber::DEFAULT_GROUP_INDEX,
            drift: DriftConfig::default(),
        }
    }
}

impl ChannelConfig {
    pub fn birefringence(&self) -> Birefringence {
        match (self.delta_n, self.pmd_coeff_ps_per_sqrt_km) {
            (_, Some(a)) => Birefringence::PmdCoeff(a),
            (Some(dn), None) => Birefringence::DeltaN(dn),
            (None, None) => Birefringence::DeltaN(fiber::DEFAULT_DELTA_N),
        }
    }

    pub fn segment(&self) -> Result<PmfSegment, ConfigError> {
        PmfSegment::with_group_index(
            self.length_m,
            self.wavelength_nm,
            self.birefringence(),
            0.0,
            self.group_index,
        )
        .map_err(|e| {
            let key = match e {
                fiber::FiberError::Length(_) => "channel.length_m",
                fiber::FiberError::Wavelength(_) => "channel.wavelength_nm",
                fiber::FiberError::GroupIndex(_) => "channel.group_index",
                _ if self.pmd_coeff_ps_per_sqrt_km.is_some() => "channel.pmd_coeff_ps_per_sqrt_km",
                _ => "channel.delta_n",
            };
            invalid(key, e.to_string())
        })
    }

    /// Alice's pair; Bob's is the same pair rotated by the frame offset.
    pub fn pairs(&self) -> Result<(CrossAlignedPair, CrossAlignedPair), ConfigError> {
        let base = self.segment()?;
        let alice = CrossAlignedPair::new(
            base,
            self.delta_length_nm * 1e-9,
            self.misalignment_deg.to_radians(),
            0.0,
        )
        .map_err(|e| invalid("channel.delta_length_nm", e.to_string()))?;
        let bob = alice.with_frame_offset(self.frame_offset_deg.to_radians());
        Ok((alice, bob))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompensationConfig {
    pub mode: CompensationMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub pump_mw: f64,
    pub pair_rate_per_mw: f64,
    pub heralding_eta: f64,
    pub coincidence_window_ns: f64,
    pub integration_time_s: f64,
    pub dark_count_rate_hz: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        let p = SourceParams::default();
        Self {
            pump_mw: p.pump_mw,
            pair_rate_per_mw: p.pair_rate_per_mw,
            heralding_eta: p.heralding_eta,
            coincidence_window_ns: p.coincidence_window_s * 1e9,
            integration_time_s: p.integration_time_s,
            dark_count_rate_hz: p.dark_count_rate_hz,
        }
    }
}

impl SourceConfig {
    pub fn params(&self, seed: u64) -> Result<SourceParams, ConfigError> {
        let p = SourceParams {
            pump_mw: self.pump_mw,
            pair_rate_per_mw: self.pair_rate_per_mw,
            heralding_eta: self.heralding_eta,
            coincidence_window_s: self.coincidence_window_ns * 1e-9,
            integration_time_s: self.integration_time_s,
            dark_count_rate_hz: self.dark_count_rate_hz,
            seed,
        };
        p.validate().map_err(|e| {
            let key = match e {
                crosspmf::coincidence::CoincidenceError::InvalidSource { field, .. } => match field
                {
                    "coincidence_window_s" => "source.coincidence_window_ns".to_string(),
                    f => format!("source.{f}"),
                },
                _ => "source".to_string(),
            };
            invalid(&key, e.to_string())
        })?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub theta_step_deg: f64,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
    pub phi_step_deg: f64,
    pub delta_lengths_nm: Vec<f64>,
    pub symmetry: SweepSymmetry,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            theta_min_deg: -10.0,
            theta_max_deg: 10.0,
            theta_step_deg: 1.0,
            phi_min_deg: -10.0,
            phi_max_deg: 10.0,
            phi_step_deg: 1.0,
            delta_lengths_nm: (-4..=4).map(|k| 2.0 * f64::from(k)).collect(),
            symmetry: SweepSymmetry::Shared,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FringeConfig {
    pub two_theta_a_deg: Vec<f64>,
    pub two_theta_b_start_deg: f64,
    pub two_theta_b_stop_deg: f64,
    pub two_theta_b_step_deg: f64,
}

impl Default for FringeConfig {
    fn default() -> Self {
        Self {
            two_theta_a_deg: vec![0.0, 45.0],
            two_theta_b_start_deg: 0.0,
            two_theta_b_stop_deg: 180.0,
            two_theta_b_step_deg: 5.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub method: ExtremaMethod,
    pub amplitude: AmplitudeDef,
    pub sigma_source: SigmaSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".to_string(),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Report expected counts instead of Poisson samples.
    pub expectation: bool,
    pub channel: ChannelConfig,
    pub compensation: CompensationConfig,
    pub source: SourceConfig,
    pub sweep: SweepConfig,
    pub fringe: FringeConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

/// Evenly spaced axis `min, min + step, …, max`.
pub fn axis(min: f64, max: f64, step: f64, key: &str) -> Result<Vec<f64>, ConfigError> {
    if !(min.is_finite() && max.is_finite()) || min > max {
        return Err(invalid(
            key,
            format!("range [{min}, {max}] is empty or not finite"),
        ));
    }
    if min == max {
        return Ok(vec![min]);
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(invalid(key, format!("step must be positive, got {step}")));
    }
    let span = (max - min) / step;
    let n = span.round();
    if (span - n).abs() > 1e-9 * span.max(1.0) {
        return Err(invalid(
            key,
            format!("step {step} does not divide [{min}, {max}]"),
        ));
    }
    if n > 1e6 {
        return Err(invalid(key, format!("{n} points is too many")));
    }
    let n = n as usize;
    Ok((0..=n)
        .map(|i| if i == n { max } else { min + i as f64 * step })
        .collect())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg.resolved())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Fill implicit choices so the echoed file states them.
    pub fn resolved(mut self) -> Self {
        if self.channel.delta_n.is_none() && self.channel.pmd_coeff_ps_per_sqrt_km.is_none() {
            self.channel.delta_n = Some(fiber::DEFAULT_DELTA_N);
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex prefix of the SHA-256 of the resolved TOML plus any extra inputs.
    /// The output directory itself does not enter the hash.
    pub fn digest(&self, extra: &[&[u8]]) -> String {
        let mut keyed = self.clone();
        keyed.output.directory.clear();
        let mut h = Sha256::new();
        h.update(keyed.to_toml().as_bytes());
        for e in extra {
            h.update((e.len() as u64).to_le_bytes());
            h.update(e);
        }
        hex::encode(h.finalize())[..16].to_string()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.channel;
        if c.delta_n.is_some() && c.pmd_coeff_ps_per_sqrt_km.is_some() {
            return Err(invalid(
                "channel.pmd_coeff_ps_per_sqrt_km",
                "set either channel.delta_n or channel.pmd_coeff_ps_per_sqrt_km, not both",
            ));
        }
        for (key, v) in [
            ("channel.misalignment_deg", c.misalignment_deg),
            ("channel.frame_offset_deg", c.frame_offset_deg),
            ("channel.delta_length_nm", c.delta_length_nm),
        ] {
            if !v.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        c.pairs()?;
        let d = &c.drift;
        if !(d.smf_step_rad.is_finite() && d.smf_step_rad >= 0.0) {
            return Err(invalid(
                "channel.drift.smf_step_rad",
                "must be finite and non-negative",
            ));
        }
        if d.smf_correlation_steps == 0 {
            return Err(invalid(
                "channel.drift.smf_correlation_steps",
                "must be at least 1",
            ));
        }
        if !(d.pmf_phase_jitter_rad.is_finite() && d.pmf_phase_jitter_rad >= 0.0) {
            return Err(invalid(
                "channel.drift.pmf_phase_jitter_rad",
                "must be finite and non-negative",
            ));
        }
        self.source.params(self.seed)?;
        let s = &self.sweep;
        axis(
            s.theta_min_deg,
            s.theta_max_deg,
            s.theta_step_deg,
            "sweep.theta_step_deg",
        )?;
        axis(
            s.phi_min_deg,
            s.phi_max_deg,
            s.phi_step_deg,
            "sweep.phi_step_deg",
        )?;
        if s.delta_lengths_nm.is_empty() {
            return Err(invalid("sweep.delta_lengths_nm", "must not be empty"));
        }
        for dl in &s.delta_lengths_nm {
            if !(dl.is_finite() && (dl * 1e-9).abs() < c.length_m) {
                return Err(invalid(
                    "sweep.delta_lengths_nm",
                    format!("{dl} nm must be finite and shorter than the fiber"),
                ));
            }
        }
        let f = &self.fringe;
        if f.two_theta_a_deg.is_empty() || f.two_theta_a_deg.iter().any(|a| !a.is_finite()) {
            return Err(invalid(
                "fringe.two_theta_a_deg",
                "needs at least one finite angle",
            ));
        }
        let mut sorted = f.two_theta_a_deg.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("fringe.two_theta_a_deg", "angles must be distinct"));
        }
        self.two_theta_b_axis()?;
        if self.output.formats.is_empty() {
            return Err(invalid("output.formats", "must list csv and/or json"));
        }
        if self.output.directory.is_empty() {
            return Err(invalid("output.directory", "must not be empty"));
        }
        Ok(())
    }

    pub fn two_theta_b_axis(&self) -> Result<Vec<f64>, ConfigError> {
        let f = &self.fringe;
        axis(
            f.two_theta_b_start_deg,
            f.two_theta_b_stop_deg,
            f.two_theta_b_step_deg,
            "fringe.two_theta_b_step_deg",
        )
    }

    pub fn theta_axis_deg(&self) -> Result<Vec<f64>, ConfigError> {
        let s = &self.sweep;
        axis(
            s.theta_min_deg,
            s.theta_max_deg,
            s.theta_step_deg,
            "sweep.theta_step_deg",
        )
    }

    pub fn phi_axis_deg(&self) -> Result<Vec<f64>, ConfigError> {
        let s = &self.sweep;
        axis(
            s.phi_min_deg,
            s.phi_max_deg,
            s.phi_step_deg,
            "sweep.phi_step_deg",
        )
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            method: self.analysis.method,
            amplitude: self.analysis.amplitude,
            sigma_source: self.analysis.sigma_source,
            required_two_theta_a_deg: self.fringe.two_theta_a_deg.clone(),
        }
    }

    /// Drift switched off, for the stable condition.
    pub fn stabilized(&self) -> Self {
        let mut c = self.clone();
        c.channel.drift.smf_step_rad = 0.0;
        c.channel.drift.pmf_phase_jitter_rad = 0.0;
        c
    }

    pub fn is_unstable(&self) -> bool {
        match self.channel.fiber {
            FiberKind::Smf => self.channel.drift.smf_step_rad > 0.0,
            FiberKind::PmfCross => self.channel.drift.pmf_phase_jitter_rad > 0.0,
        }
    }

    pub fn condition_label(&self) -> String {
        let state = if self.is_unstable() {
            "unstable"
        } else {
            "stable"
        };
        format!("{}_{state}", self.channel.fiber.as_str())
    }
}
