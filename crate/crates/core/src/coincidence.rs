//! Measurement station and photon-counting simulation.
//!
//! Each arm has a half-wave plate followed by a polarizing beam splitter; the
//! transmitted port feeds detector 1 and the reflected port detector 2. Ideal
//! projective detectors are assumed and every real-world loss is folded into
//! the heralding efficiency and the singles rates.
//!
//! Angles in datasets are stored as the analyzer angles `2θ_A`, `2θ_B` in
//! degrees, which is what the CSV format carries.

use nalgebra::Vector4;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entanglement::{self, BellStateId, CompensationSetting, EntanglementError};
use crate::fiber::{CrossAlignedPair, PhaseJitter, SmfDriftModel};
use crate::polarization::{hwp, BipartiteState, JonesMatrix, JonesVector, PolarizationError, C64};
use crate::rng;

/// Photon pair rate per milliwatt of pump, pairs/s/mW.
pub const DEFAULT_PAIR_RATE_PER_MW: f64 = 7650.0;
pub const DEFAULT_HERALDING_ETA: f64 = 0.17;
/// Coincidence window, seconds.
pub const DEFAULT_COINCIDENCE_WINDOW_S: f64 = 8e-9;
pub const DEFAULT_PUMP_MW: f64 = 2.0;
pub const DEFAULT_INTEGRATION_S: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoincidenceError {
    #[error("source parameter `{field}` is invalid: {value}")]
    InvalidSource { field: &'static str, value: f64 },
    #[error("measurement angle must be finite, got {0}")]
    NonFiniteAngle(f64),
    #[error("the angle axis is empty")]
    EmptyAxis,
    #[error("singles are zero at point {index}; heralding efficiency is undefined")]
    ZeroSingles { index: usize },
    #[error("dataset is inconsistent at point {index}: {reason}")]
    Inconsistent { index: usize, reason: String },
    #[error(transparent)]
    Entanglement(#[from] EntanglementError),
    #[error(transparent)]
    Polarization(#[from] PolarizationError),
}

pub type Result<T, E = CoincidenceError> = std::result::Result<T, E>;

/// Detector pairings in CSV column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pairing {
    /// `D_A1 & D_B1`
    A1B1,
    /// `D_A2 & D_B1`
    A2B1,
    /// `D_A1 & D_B2`
    A1B2,
    /// `D_A2 & D_B2`
    A2B2,
}

impl Pairing {
    pub const ALL: [Pairing; 4] = [Pairing::A1B1, Pairing::A2B1, Pairing::A1B2, Pairing::A2B2];
    /// The two pairings reported per Alice setting.
    pub const REPORTED: [Pairing; 2] = [Pairing::A1B1, Pairing::A2B1];

    /// Zero-based detector outcomes `(alice, bob)`; 0 is the transmitted port.
    pub fn outcomes(self) -> (usize, usize) {
        match self {
            Pairing::A1B1 => (0, 0),
            Pairing::A2B1 => (1, 0),
            Pairing::A1B2 => (0, 1),
            Pairing::A2B2 => (1, 1),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column(self) -> &'static str {
        match self {
            Pairing::A1B1 => "cAB_11",
            Pairing::A2B1 => "cAB_21",
            Pairing::A1B2 => "cAB_12",
            Pairing::A2B2 => "cAB_22",
        }
    }

    pub fn from_column(s: &str) -> Option<Pairing> {
        Pairing::ALL.into_iter().find(|p| p.column() == s)
    }
}

/// Half-wave plate angles of both arms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub hwp_a_rad: f64,
    pub hwp_b_rad: f64,
}

impl MeasurementSetting {
    pub fn new(hwp_a_rad: f64, hwp_b_rad: f64) -> Self {
        Self {
            hwp_a_rad,
            hwp_b_rad,
        }
    }

    /// From analyzer angles `2θ_A`, `2θ_B` in degrees.
    pub fn from_analyzer_deg(two_theta_a_deg: f64, two_theta_b_deg: f64) -> Self {
        Self::new(
            (two_theta_a_deg / 2.0).to_radians(),
            (two_theta_b_deg / 2.0).to_radians(),
        )
    }
}

/// Polarization that reaches detector `outcome` (0 or 1) behind an HWP at `hwp_rad`.
pub fn analyzer(hwp_rad: f64, outcome: usize) -> Result<JonesVector> {
    if !hwp_rad.is_finite() {
        return Err(CoincidenceError::NonFiniteAngle(hwp_rad));
    }
    // A half-wave plate is Hermitian and its own inverse, so HWP†|H⟩ = HWP|H⟩.
    let plate = hwp(hwp_rad)?;
    let port = if outcome == 0 {
        JonesVector::horizontal()
    } else {
        JonesVector::vertical()
    };
    Ok(plate.apply(&port))
}

fn projector_vector(s: &MeasurementSetting, pairing: Pairing) -> Result<Vector4<C64>> {
    let (oa, ob) = pairing.outcomes();
    Ok(analyzer(s.hwp_a_rad, oa)?.tensor(&analyzer(s.hwp_b_rad, ob)?))
}

/// Probability that a pair clicks the given detector pairing.
pub fn coincidence_prob(
    rho: &BipartiteState,
    s: &MeasurementSetting,
    pairing: Pairing,
) -> Result<f64> {
    Ok(rho.expectation(&projector_vector(s, pairing)?).max(0.0))
}

/// Probabilities of all four pairings, in [`Pairing::ALL`] order.
pub fn coincidence_probs(rho: &BipartiteState, s: &MeasurementSetting) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for p in Pairing::ALL {
        out[p.index()] = coincidence_prob(rho, s, p)?;
    }
    Ok(out)
}

/// Noiseless fringe of the two reported pairings over Bob's HWP angles.
#[derive(Clone, Debug, PartialEq)]
pub struct IdealFringe {
    pub a1b1: Vec<f64>,
    pub a2b1: Vec<f64>,
}

pub fn ideal_fringe(
    rho: &BipartiteState,
    theta_a: f64,
    theta_b_axis: &[f64],
) -> Result<IdealFringe> {
    if theta_b_axis.is_empty() {
        return Err(CoincidenceError::EmptyAxis);
    }
    let mut a1b1 = Vec::with_capacity(theta_b_axis.len());
    let mut a2b1 = Vec::with_capacity(theta_b_axis.len());
    for &tb in theta_b_axis {
        let s = MeasurementSetting::new(theta_a, tb);
        a1b1.push(coincidence_prob(rho, &s, Pairing::A1B1)?);
        a2b1.push(coincidence_prob(rho, &s, Pairing::A2B1)?);
    }
    Ok(IdealFringe { a1b1, a2b1 })
}

/// Accidental coincidence rate `N_A·N_B·T_c`.
pub fn accidental_rate(singles_a: f64, singles_b: f64, window_s: f64) -> f64 {
    singles_a * singles_b * window_s
}

/// Photon-pair source and counting parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub pump_mw: f64,
    pub pair_rate_per_mw: f64,
    pub heralding_eta: f64,
    pub coincidence_window_s: f64,
    /// Integration time per angle point.
    pub integration_time_s: f64,
    /// Dark count rate per detector, Hz.
    pub dark_count_rate_hz: f64,
    pub seed: u64,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            pump_mw: DEFAULT_PUMP_MW,
            pair_rate_per_mw: DEFAULT_PAIR_RATE_PER_MW,
            heralding_eta: DEFAULT_HERALDING_ETA,
            coincidence_window_s: DEFAULT_COINCIDENCE_WINDOW_S,
            integration_time_s: DEFAULT_INTEGRATION_S,
            dark_count_rate_hz: 0.0,
            seed: 0,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pump_mw", self.pump_mw),
            ("pair_rate_per_mw", self.pair_rate_per_mw),
            ("heralding_eta", self.heralding_eta),
            ("coincidence_window_s", self.coincidence_window_s),
            ("integration_time_s", self.integration_time_s),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(CoincidenceError::InvalidSource { field, value });
            }
        }
        if self.heralding_eta > 1.0 {
            return Err(CoincidenceError::InvalidSource {
                field: "heralding_eta",
                value: self.heralding_eta,
            });
        }
        if !(self.dark_count_rate_hz.is_finite() && self.dark_count_rate_hz >= 0.0) {
            return Err(CoincidenceError::InvalidSource {
                field: "dark_count_rate_hz",
                value: self.dark_count_rate_hz,
            });
        }
        Ok(())
    }

    /// Detected pair (true coincidence) rate, Hz.
    pub fn pair_rate(&self) -> f64 {
        self.pump_mw * self.pair_rate_per_mw
    }

    /// Singles rate of one arm, `pairs / η` plus dark counts of both detectors.
    pub fn singles_rate(&self) -> f64 {
        self.pair_rate() / self.heralding_eta + 2.0 * self.dark_count_rate_hz
    }

    pub fn accidental_rate(&self) -> f64 {
        accidental_rate(
            self.singles_rate(),
            self.singles_rate(),
            self.coincidence_window_s,
        )
    }

    /// Accidental rate over true coincidence rate.
    pub fn accidental_ratio(&self) -> f64 {
        self.accidental_rate() / self.pair_rate()
    }
}

/// Channel seen by one arm at each angle point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArmChannel {
    Fixed(JonesMatrix),
    /// Random walk starting from `start`; point `k` sees the operator after `k` steps.
    SmfDrift {
        start: JonesMatrix,
        model: SmfDriftModel,
    },
    /// Crossed PMF pair with independent retardance jitter per point.
    PmfJitter {
        pair: CrossAlignedPair,
        jitter: PhaseJitter,
    },
}

impl ArmChannel {
    /// Operators for points `first..first + n`.
    pub fn operators(&self, first: u64, n: usize) -> Vec<JonesMatrix> {
        match self {
            ArmChannel::Fixed(m) => vec![*m; n],
            ArmChannel::SmfDrift { start, model } => {
                let mut current = *start;
                for k in 0..first {
                    current = model.step(&current, k);
                }
                let mut out = Vec::with_capacity(n);
                for k in first..first + n as u64 {
                    out.push(current);
                    current = model.step(&current, k);
                }
                out
            }
            ArmChannel::PmfJitter { pair, jitter } => (first..first + n as u64)
                .map(|k| jitter.sample(pair, k))
                .collect(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ArmChannel::Fixed(_) => "fixed".to_string(),
            ArmChannel::SmfDrift { model, .. } => format!(
                "smf_drift(step_scale_rad={}, correlation_steps={})",
                model.step_scale_rad, model.correlation_steps
            ),
            ArmChannel::PmfJitter { pair, jitter } => format!(
                "pmf_cross(length_m={}, delta_length_m={}, misalignment_rad={}, frame_offset_rad={}, jitter_rad={})",
                pair.base.length_m, pair.delta_length_m, pair.misalignment_rad, pair.frame_offset_rad, jitter.sigma_rad
            ),
        }
    }
}

/// Launched state plus per-arm channels and fixed compensation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelModel {
    pub launched: BellStateId,
    pub alice: ArmChannel,
    pub bob: ArmChannel,
    pub compensation: CompensationSetting,
}

/// What feeds the measurement station.
#[derive(Clone, Debug, PartialEq)]
pub enum FringeSource {
    State(BipartiteState),
    Channel(ChannelModel),
}

impl FringeSource {
    /// States at points `first..first + n`.
    pub fn states(&self, first: u64, n: usize) -> Result<Vec<BipartiteState>> {
        match self {
            FringeSource::State(rho) => Ok(vec![*rho; n]),
            FringeSource::Channel(ch) => {
                let rho0 = entanglement::bell_state(ch.launched);
                let a = ch.alice.operators(first, n);
                let b = ch.bob.operators(first, n);
                a.iter()
                    .zip(&b)
                    .map(|(ma, mb)| Ok(entanglement::evolve(&rho0, ma, mb, &ch.compensation)?))
                    .collect()
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            FringeSource::State(_) => "state".to_string(),
            FringeSource::Channel(ch) => {
                format!("alice={}; bob={}", ch.alice.describe(), ch.bob.describe())
            }
        }
    }
}

/// Counts at one of Bob's analyzer angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub two_theta_b_deg: f64,
    /// Coincidences in [`Pairing::ALL`] order.
    pub coincidences: [f64; 4],
    /// Singles of `D_A1, D_A2, D_B1, D_B2`.
    pub singles: [f64; 4],
    pub integration_s: f64,
}

/// Sidecar metadata of a fringe dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeMetadata {
    /// Alice's analyzer angle `2θ_A`, degrees.
    pub two_theta_a_deg: f64,
    pub source: SourceParams,
    pub channel: String,
    pub condition: String,
    /// Counts are expectation values rather than Poisson samples.
    pub expectation: bool,
    /// Estimated accidental coincidence rate (all pairings), Hz.
    pub accidental_rate_hz: f64,
    /// Index of the first point in the acquisition sequence.
    pub first_index: u64,
}

/// Singles and coincidence counts over a sweep of Bob's HWP at fixed Alice setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeDataset {
    pub metadata: FringeMetadata,
    pub points: Vec<FringePoint>,
}

impl FringeDataset {
    pub fn settings(&self) -> Vec<MeasurementSetting> {
        self.points
            .iter()
            .map(|p| {
                MeasurementSetting::from_analyzer_deg(
                    self.metadata.two_theta_a_deg,
                    p.two_theta_b_deg,
                )
            })
            .collect()
    }

    pub fn two_theta_b_deg(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.two_theta_b_deg).collect()
    }

    pub fn fringe(&self, pairing: Pairing) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.coincidences[pairing.index()])
            .collect()
    }

    /// Counts are non-negative and each detector's singles cover its coincidences.
    pub fn validate(&self) -> Result<()> {
        for (index, p) in self.points.iter().enumerate() {
            let bad = |reason: &str| CoincidenceError::Inconsistent {
                index,
                reason: reason.to_string(),
            };
            if !p.two_theta_b_deg.is_finite() {
                return Err(bad("non-finite angle"));
            }
            if p.coincidences
                .iter()
                .chain(&p.singles)
                .any(|c| !(c.is_finite() && *c >= 0.0))
            {
                return Err(bad("negative or non-finite count"));
            }
            let c = &p.coincidences;
            let need = [c[0] + c[2], c[1] + c[3], c[0] + c[1], c[2] + c[3]];
            for (s, n) in p.singles.iter().zip(need) {
                if *s + 1e-9 * n < n {
                    return Err(bad("singles below coincidences"));
                }
            }
        }
        Ok(())
    }
}

/// Options of [`simulate_fringe`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SimulationOptions {
    /// Report expectation values instead of Poisson samples.
    pub expectation: bool,
    /// Index of the first point; continues drift and count streams across datasets.
    pub first_index: u64,
}

fn poisson(mean: f64, rng: &mut impl rand::Rng) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng)
}

/// Simulated singles and coincidences over Bob's analyzer axis.
pub fn simulate_fringe(
    source: &FringeSource,
    params: &SourceParams,
    two_theta_a_deg: f64,
    two_theta_b_deg: &[f64],
    condition: &str,
    opts: SimulationOptions,
) -> Result<FringeDataset> {
    params.validate()?;
    if two_theta_b_deg.is_empty() {
        return Err(CoincidenceError::EmptyAxis);
    }
    if let Some(bad) = std::iter::once(&two_theta_a_deg)
        .chain(two_theta_b_deg)
        .find(|x| !x.is_finite())
    {
        return Err(CoincidenceError::NonFiniteAngle(*bad));
    }
    let states = source.states(opts.first_index, two_theta_b_deg.len())?;
    let t = params.integration_time_s;
    let pair_rate = params.pair_rate();
    let singles_rate = params.singles_rate();
    let acc_per_pairing = params.accidental_rate() / 4.0;

    let mut points = Vec::with_capacity(two_theta_b_deg.len());
    for (k, (&tb, rho)) in two_theta_b_deg.iter().zip(&states).enumerate() {
        let setting = MeasurementSetting::from_analyzer_deg(two_theta_a_deg, tb);
        let probs = coincidence_probs(rho, &setting)?;
        let lambda: [f64; 4] =
            std::array::from_fn(|i| (pair_rate * probs[i] + acc_per_pairing) * t);
        // Marginals of each detector.
        let pa = [probs[0] + probs[2], probs[1] + probs[3]];
        let pb = [probs[0] + probs[1], probs[2] + probs[3]];
        let dark = params.dark_count_rate_hz * t;
        let singles_mean = [
            singles_rate * t * pa[0] / (pa[0] + pa[1]).max(f64::MIN_POSITIVE) + dark,
            singles_rate * t * pa[1] / (pa[0] + pa[1]).max(f64::MIN_POSITIVE) + dark,
            singles_rate * t * pb[0] / (pb[0] + pb[1]).max(f64::MIN_POSITIVE) + dark,
            singles_rate * t * pb[1] / (pb[0] + pb[1]).max(f64::MIN_POSITIVE) + dark,
        ];
        let involved = |c: &[f64; 4]| [c[0] + c[2], c[1] + c[3], c[0] + c[1], c[2] + c[3]];

        let (coincidences, singles) = if opts.expectation {
            let inv = involved(&lambda);
            let singles: [f64; 4] = std::array::from_fn(|i| singles_mean[i].max(inv[i]));
            (lambda, singles)
        } else {
            let mut rng = rng::stream(params.seed, rng::DOMAIN_COUNTS, opts.first_index + k as u64);
            let counts: [f64; 4] = std::array::from_fn(|i| poisson(lambda[i], &mut rng));
            let inv_mean = involved(&lambda);
            let inv = involved(&counts);
            let singles: [f64; 4] =
                std::array::from_fn(|i| inv[i] + poisson(singles_mean[i] - inv_mean[i], &mut rng));
            (counts, singles)
        };
        points.push(FringePoint {
            two_theta_b_deg: tb,
            coincidences,
            singles,
            integration_s: t,
        });
    }
    Ok(FringeDataset {
        metadata: FringeMetadata {
            two_theta_a_deg,
            source: *params,
            channel: source.describe(),
            condition: condition.to_string(),
            expectation: opts.expectation,
            accidental_rate_hz: params.accidental_rate(),
            first_index: opts.first_index,
        },
        points,
    })
}

/// Mean heralding efficiency over the points of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeraldingEstimate {
    pub eta: f64,
    pub std_error: f64,
    pub points: usize,
}

/// `η = N_c / √(N_A N_B)` per point, averaged.
pub fn heralding_efficiency(dataset: &FringeDataset) -> Result<HeraldingEstimate> {
    heralding(dataset, false)
}

/// As [`heralding_efficiency`], with the accidental estimate `N_A·N_B·T_c / t`
/// subtracted from the coincidences of every point. The window is taken from
/// the dataset's source metadata.
pub fn heralding_efficiency_corrected(dataset: &FringeDataset) -> Result<HeraldingEstimate> {
    heralding(dataset, true)
}

fn heralding(dataset: &FringeDataset, subtract_accidentals: bool) -> Result<HeraldingEstimate> {
    if dataset.points.is_empty() {
        return Err(CoincidenceError::EmptyAxis);
    }
    let window = dataset.metadata.source.coincidence_window_s;
    let mut etas = Vec::with_capacity(dataset.points.len());
    let mut last_rel_var = 0.0;
    for (index, p) in dataset.points.iter().enumerate() {
        let na = p.singles[0] + p.singles[1];
        let nb = p.singles[2] + p.singles[3];
        if na <= 0.0 || nb <= 0.0 {
            return Err(CoincidenceError::ZeroSingles { index });
        }
        let mut nc: f64 = p.coincidences.iter().sum();
        if subtract_accidentals {
            nc -= na * nb * window / p.integration_s;
        }
        etas.push(nc / (na * nb).sqrt());
        last_rel_var = if nc > 0.0 {
            1.0 / nc + 0.25 / na + 0.25 / nb
        } else {
            0.0
        };
    }
    let n = etas.len() as f64;
    let eta = etas.iter().sum::<f64>() / n;
    let std_error = if etas.len() > 1 {
        let var = etas.iter().map(|e| (e - eta).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        eta * last_rel_var.sqrt()
    };
    Ok(HeraldingEstimate {
        eta,
        std_error,
        points: etas.len(),
    })
}
