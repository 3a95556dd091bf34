//! Birefringent fiber channels.
//!
//! A polarization-maintaining fiber (PMF) segment is a linear retarder whose
//! retardance grows with length. Two segments spliced with their fast axes
//! crossed at 90° undo each other's retardance up to a global phase; the
//! residual error comes from the axis misalignment `θ` and the length
//! mismatch `ΔL`. A single-mode fiber (SMF) is modeled as a slow random walk
//! over unitaries.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polarization::{linear_retarder_unchecked, rotation_unchecked, JonesMatrix, C64};
use crate::rng;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Default fiber group index; the in-fiber light speed is `c₀ / n_g`.
pub const DEFAULT_GROUP_INDEX: f64 = 1.467;
/// Default PMF birefringence (typical PANDA fiber near 810 nm).
pub const DEFAULT_DELTA_N: f64 = 5e-4;
pub const DEFAULT_WAVELENGTH_NM: f64 = 810.0;
pub const DEFAULT_LENGTH_M: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiberError {
    #[error("fiber length must be positive and finite, got {0} m")]
    Length(f64),
    #[error("wavelength must be positive and finite, got {0} nm")]
    Wavelength(f64),
    #[error("birefringence must be non-negative and finite, got {0}")]
    Birefringence(f64),
    #[error("group index must be positive and finite, got {0}")]
    GroupIndex(f64),
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("length mismatch |ΔL| = {delta} m must be smaller than the base length {length} m")]
    DeltaLength { delta: f64, length: f64 },
    #[error("drift parameter {name} is invalid: {value}")]
    Drift { name: &'static str, value: f64 },
}

pub type Result<T, E = FiberError> = std::result::Result<T, E>;

fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(FiberError::NonFinite { name, value })
    }
}

/// How a segment's birefringence is specified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Birefringence {
    /// Refractive-index difference Δn between the slow and fast axes.
    DeltaN(f64),
    /// PMD coefficient α in ps/√km, giving `Δt_p = α√L`.
    PmdCoeff(f64),
}

/// One length of birefringent fiber.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfSegment {
    pub length_m: f64,
    pub wavelength_nm: f64,
    pub birefringence: Birefringence,
    /// Fast-axis angle relative to the reference frame.
    pub axis_angle_rad: f64,
    pub group_index: f64,
}

impl PmfSegment {
    pub fn new(
        length_m: f64,
        wavelength_nm: f64,
        birefringence: Birefringence,
        axis_angle_rad: f64,
    ) -> Result<Self> {
        Self::with_group_index(
            length_m,
            wavelength_nm,
            birefringence,
            axis_angle_rad,
            DEFAULT_GROUP_INDEX,
        )
    }

    pub fn with_group_index(
        length_m: f64,
        wavelength_nm: f64,
        birefringence: Birefringence,
        axis_angle_rad: f64,
        group_index: f64,
    ) -> Result<Self> {
        let seg = Self {
            length_m,
            wavelength_nm,
            birefringence,
            axis_angle_rad,
            group_index,
        };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_m.is_finite() && self.length_m > 0.0) {
            return Err(FiberError::Length(self.length_m));
        }
        if !(self.wavelength_nm.is_finite() && self.wavelength_nm > 0.0) {
            return Err(FiberError::Wavelength(self.wavelength_nm));
        }
        let b = match self.birefringence {
            Birefringence::DeltaN(x) | Birefringence::PmdCoeff(x) => x,
        };
        if !(b.is_finite() && b >= 0.0) {
            return Err(FiberError::Birefringence(b));
        }
        if !(self.group_index.is_finite() && self.group_index > 0.0) {
            return Err(FiberError::GroupIndex(self.group_index));
        }
        finite("axis_angle_rad", self.axis_angle_rad)?;
        Ok(())
    }

    /// The same fiber at a different length.
    pub fn with_length(&self, length_m: f64) -> Result<Self> {
        let seg = Self { length_m, ..*self };
        seg.validate()?;
        Ok(seg)
    }

    pub fn with_axis(&self, axis_angle_rad: f64) -> Self {
        Self {
            axis_angle_rad,
            ..*self
        }
    }

    /// In-fiber light speed `c₀ / n_g`, m/s.
    pub fn light_speed(&self) -> f64 {
        SPEED_OF_LIGHT / self.group_index
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_nm * 1e-9
    }

    /// Effective index difference `Δn = c·Δt_p / L`.
    pub fn delta_n(&self) -> f64 {
        match self.birefringence {
            Birefringence::DeltaN(dn) => dn,
            Birefringence::PmdCoeff(_) => self.light_speed() * group_delay(self) / self.length_m,
        }
    }
}

/// Differential group delay between the two polarization modes, seconds.
pub fn group_delay(seg: &PmfSegment) -> f64 {
    match seg.birefringence {
        Birefringence::DeltaN(dn) => dn * seg.length_m / seg.light_speed(),
        Birefringence::PmdCoeff(alpha) => alpha * 1e-12 * (seg.length_m / 1000.0).sqrt(),
    }
}

/// Retardance `Δφ = (2πc/λ)·Δt_p`, radians.
pub fn phase_difference(seg: &PmfSegment) -> f64 {
    match seg.birefringence {
        // Algebraically identical to the group-delay form; written as r·L to
        // avoid the c/c round trip.
        Birefringence::DeltaN(dn) => 2.0 * PI * dn * seg.length_m / seg.wavelength_m(),
        Birefringence::PmdCoeff(_) => {
            2.0 * PI * seg.light_speed() / seg.wavelength_m() * group_delay(seg)
        }
    }
}

/// `J_L(θ) = R(θ)·diag(1, e^{iΔφ})·R(−θ)` with `θ` the segment's axis angle.
pub fn pmf_jones(seg: &PmfSegment) -> JonesMatrix {
    linear_retarder_unchecked(phase_difference(seg), seg.axis_angle_rad)
}

/// Two spliced PMF segments with nominally crossed fast axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossAlignedPair {
    /// First fiber (length `L`).
    pub base: PmfSegment,
    /// Length mismatch `ΔL` of the second fiber, meters.
    pub delta_length_m: f64,
    /// Deviation `θ` of the second fiber's axis from an exact 90° cross.
    pub misalignment_rad: f64,
    /// Rotation `φ` of the whole pair relative to the shared reference frame.
    pub frame_offset_rad: f64,
}

impl CrossAlignedPair {
    pub fn new(
        base: PmfSegment,
        delta_length_m: f64,
        misalignment_rad: f64,
        frame_offset_rad: f64,
    ) -> Result<Self> {
        let pair = Self {
            base,
            delta_length_m,
            misalignment_rad,
            frame_offset_rad,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        finite("delta_length_m", self.delta_length_m)?;
        finite("misalignment_rad", self.misalignment_rad)?;
        finite("frame_offset_rad", self.frame_offset_rad)?;
        if self.delta_length_m.abs() >= self.base.length_m {
            return Err(FiberError::DeltaLength {
                delta: self.delta_length_m,
                length: self.base.length_m,
            });
        }
        Ok(())
    }

    pub fn first_segment(&self) -> PmfSegment {
        self.base
    }

    pub fn second_segment(&self) -> PmfSegment {
        PmfSegment {
            length_m: self.base.length_m + self.delta_length_m,
            axis_angle_rad: self.base.axis_angle_rad + FRAC_PI_2 + self.misalignment_rad,
            ..self.base
        }
    }

    /// Retardances `(rL, r(L+ΔL))` of the first and second fiber.
    pub fn phases(&self) -> (f64, f64) {
        (
            phase_difference(&self.first_segment()),
            phase_difference(&self.second_segment()),
        )
    }

    pub fn with_misalignment(&self, misalignment_rad: f64) -> Self {
        Self {
            misalignment_rad,
            ..*self
        }
    }

    pub fn with_frame_offset(&self, frame_offset_rad: f64) -> Self {
        Self {
            frame_offset_rad,
            ..*self
        }
    }

    pub fn with_delta_length(&self, delta_length_m: f64) -> Result<Self> {
        let pair = Self {
            delta_length_m,
            ..*self
        };
        pair.validate()?;
        Ok(pair)
    }
}

/// Pair operator by direct product `R(φ)·J_{L+ΔL}(π/2+θ)·J_L(0)·R(−φ)`.
pub fn cross_pair_exact(pair: &CrossAlignedPair) -> JonesMatrix {
    cross_pair_perturbed(pair, 0.0, 0.0)
}

/// [`cross_pair_exact`] with extra retardance added to each fiber, as caused
/// by stress or bending.
pub fn cross_pair_perturbed(
    pair: &CrossAlignedPair,
    extra_first: f64,
    extra_second: f64,
) -> JonesMatrix {
    let first = pair.first_segment();
    let second = pair.second_segment();
    let j1 =
        linear_retarder_unchecked(phase_difference(&first) + extra_first, first.axis_angle_rad);
    let j2 = linear_retarder_unchecked(
        phase_difference(&second) + extra_second,
        second.axis_angle_rad,
    );
    let m = j2 * j1;
    if pair.frame_offset_rad == 0.0 {
        m
    } else {
        m.conjugated_by_rotation(pair.frame_offset_rad)
    }
}

/// The pair operator written out entry by entry, in the pair's own frame.
///
/// Ignores the frame offset and the base axis angle. Kept as an independent
/// cross-check of [`cross_pair_exact`].
pub fn cross_pair_closed_form(pair: &CrossAlignedPair) -> JonesMatrix {
    let (phi_first, phi_second) = pair.phases();
    let (s, c) = pair.misalignment_rad.sin_cos();
    let e1 = C64::from_polar(1.0, phi_first);
    let e2 = C64::from_polar(1.0, phi_second);
    let one = C64::new(1.0, 0.0);
    let sc = s * c;
    JonesMatrix::from_entries(
        e2 * (c * c) + s * s,
        e1 * (one - e2) * sc,
        (one - e2) * sc,
        e1 * (e2 * (s * s) + c * c),
    )
}

/// First-order expansion in small `θ` and `rΔL`. Not unitary; diagnostic use only.
pub fn cross_pair_approx(pair: &CrossAlignedPair) -> JonesMatrix {
    let (phi_first, phi_second) = pair.phases();
    let r_dl = phi_second - phi_first;
    let t = pair.misalignment_rad;
    let i = C64::i();
    JonesMatrix::from_entries(
        C64::new(1.0, 0.0) + i * (r_dl * (1.0 - t * t)),
        -i * (r_dl * t),
        -i * (r_dl * t),
        C64::new(1.0, 0.0) + i * (r_dl * t * t),
    )
}

/// Random walk of an SMF channel over unitaries.
///
/// Each step multiplies the current operator by `R(ρ)·retarder(δ, χ)` with
/// `ρ, δ ~ N(0, step_scale)` and `χ ~ U[0, π)`. The perturbation is held fixed
/// for `correlation_steps` consecutive steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmfDriftModel {
    pub step_scale_rad: f64,
    pub correlation_steps: u32,
    pub seed: u64,
}

impl SmfDriftModel {
    pub fn new(step_scale_rad: f64, correlation_steps: u32, seed: u64) -> Result<Self> {
        if !(step_scale_rad.is_finite() && step_scale_rad >= 0.0) {
            return Err(FiberError::Drift {
                name: "step_scale_rad",
                value: step_scale_rad,
            });
        }
        if correlation_steps == 0 {
            return Err(FiberError::Drift {
                name: "correlation_steps",
                value: 0.0,
            });
        }
        Ok(Self {
            step_scale_rad,
            correlation_steps,
            seed,
        })
    }

    /// Perturbation parameters `(ρ, δ, χ)` for step `index`.
    pub fn step_parameters(&self, index: u64) -> (f64, f64, f64) {
        let block = index / u64::from(self.correlation_steps);
        let mut rng = rng::stream(self.seed, rng::DOMAIN_SMF_DRIFT, block);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let rho = normal.sample(&mut rng) * self.step_scale_rad;
        let delta = normal.sample(&mut rng) * self.step_scale_rad;
        let chi = rng.random::<f64>() * PI;
        (rho, delta, chi)
    }

    pub fn increment(&self, index: u64) -> JonesMatrix {
        if self.step_scale_rad == 0.0 {
            return JonesMatrix::identity();
        }
        let (rho, delta, chi) = self.step_parameters(index);
        rotation_unchecked(rho) * linear_retarder_unchecked(delta, chi)
    }

    /// Operator after step `index`, given the operator before it.
    pub fn step(&self, previous: &JonesMatrix, index: u64) -> JonesMatrix {
        if self.step_scale_rad == 0.0 {
            return *previous;
        }
        self.increment(index) * *previous
    }

    /// Operators after steps `0..n`, starting from `start`.
    pub fn trajectory(&self, start: &JonesMatrix, n: usize) -> Vec<JonesMatrix> {
        let mut out = Vec::with_capacity(n);
        let mut current = *start;
        for k in 0..n as u64 {
            current = self.step(&current, k);
            out.push(current);
        }
        out
    }
}

/// Gaussian jitter on each PMF segment's retardance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseJitter {
    pub sigma_rad: f64,
    pub seed: u64,
}

impl PhaseJitter {
    pub fn new(sigma_rad: f64, seed: u64) -> Result<Self> {
        if !(sigma_rad.is_finite() && sigma_rad >= 0.0) {
            return Err(FiberError::Drift {
                name: "sigma_rad",
                value: sigma_rad,
            });
        }
        Ok(Self { sigma_rad, seed })
    }

    /// Extra retardance for the first and second fiber at sample `index`.
    pub fn offsets(&self, index: u64) -> (f64, f64) {
        if self.sigma_rad == 0.0 {
            return (0.0, 0.0);
        }
        let mut rng = rng::stream(self.seed, rng::DOMAIN_PMF_JITTER, index);
        let normal = Normal::new(0.0, self.sigma_rad).expect("valid sigma");
        (normal.sample(&mut rng), normal.sample(&mut rng))
    }

    pub fn sample(&self, pair: &CrossAlignedPair, index: u64) -> JonesMatrix {
        let (a, b) = self.offsets(index);
        cross_pair_perturbed(pair, a, b)
    }
}
