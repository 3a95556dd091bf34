//! Bell states, channel evolution with phase compensation, and fidelity sweeps.
//!
//! The output state of the two-arm channel is
//! `ρ₁ = (C·M_A⊗M_B) ρ₀ (C·M_A⊗M_B)†` with `C` a pair of phase retarders, one
//! per arm. Fidelity against the launched pure state is `Tr[ρ₁ρ₀]`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fiber::{cross_pair_exact, CrossAlignedPair, FiberError};
use crate::polarization::{
    self, apply, linear_retarder_unchecked, rotation_unchecked, tensor, BipartiteState,
    JonesMatrix, PolarizationError, TwoQubitOperator, C64, UNITARY_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntanglementError {
    #[error("{arm} channel is not unitary (max |M†M − I| entry = {defect:e})")]
    NonUnitaryChannel { arm: &'static str, defect: f64 },
    #[error("sweep axis `{0}` is empty")]
    EmptyAxis(&'static str),
    #[error(transparent)]
    Polarization(#[from] PolarizationError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
}

pub type Result<T, E = EntanglementError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellStateId {
    PsiMinus,
    PsiPlus,
    PhiMinus,
    PhiPlus,
}

impl BellStateId {
    pub const ALL: [BellStateId; 4] = [
        BellStateId::PsiMinus,
        BellStateId::PsiPlus,
        BellStateId::PhiMinus,
        BellStateId::PhiPlus,
    ];

    /// State vector in the `HH, HV, VH, VV` basis.
    pub fn vector(self) -> Vector4<C64> {
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        let z = C64::ZERO;
        match self {
            BellStateId::PsiMinus => Vector4::new(z, s, -s, z),
            BellStateId::PsiPlus => Vector4::new(z, s, s, z),
            BellStateId::PhiMinus => Vector4::new(s, z, z, -s),
            BellStateId::PhiPlus => Vector4::new(s, z, z, s),
        }
    }
}

pub fn bell_state(id: BellStateId) -> BipartiteState {
    BipartiteState::from_pure(&id.vector()).expect("Bell vectors are normalized")
}

/// Retardance applied by each arm's phase compensator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensationSetting {
    pub delta_a: f64,
    pub delta_b: f64,
}

impl CompensationSetting {
    pub const ZERO: CompensationSetting = CompensationSetting {
        delta_a: 0.0,
        delta_b: 0.0,
    };

    pub fn new(delta_a: f64, delta_b: f64) -> Self {
        Self { delta_a, delta_b }
    }

    /// `diag(1, e^{iδ_a}) ⊗ diag(1, e^{iδ_b})` in the lab frame.
    pub fn operator(&self) -> TwoQubitOperator {
        self.operator_in_frame(&CompensatorFrame::default())
    }

    /// Compensators whose fast axes sit at the given frame angles.
    pub fn operator_in_frame(&self, frame: &CompensatorFrame) -> TwoQubitOperator {
        tensor(
            &linear_retarder_unchecked(self.delta_a, frame.alice_axis_rad),
            &linear_retarder_unchecked(self.delta_b, frame.bob_axis_rad),
        )
    }

    /// Both phases wrapped into `(−π, π]`.
    pub fn wrapped(&self) -> Self {
        Self::new(wrap_phase(self.delta_a), wrap_phase(self.delta_b))
    }
}

/// Orientation of the compensating retarders; lab `H/V` axes by default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatorFrame {
    pub alice_axis_rad: f64,
    pub bob_axis_rad: f64,
}

/// Which compensators the optimizer may tune.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensationMode {
    #[default]
    BothArms,
    /// `δ_b` pinned to zero.
    AliceOnly,
    /// No compensation at all.
    None,
}

pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

fn check_unitary(arm: &'static str, m: &JonesMatrix) -> Result<()> {
    let defect = m.unitarity_defect();
    if defect > UNITARY_TOL {
        return Err(EntanglementError::NonUnitaryChannel { arm, defect });
    }
    Ok(())
}

/// Channel operator `C·(M_A ⊗ M_B)`.
pub fn channel_operator(
    m_a: &JonesMatrix,
    m_b: &JonesMatrix,
    c: &CompensationSetting,
) -> TwoQubitOperator {
    c.operator() * tensor(m_a, m_b)
}

/// `ρ₁ = (C·M_A⊗M_B) ρ₀ (C·M_A⊗M_B)†`.
pub fn evolve(
    rho0: &BipartiteState,
    m_a: &JonesMatrix,
    m_b: &JonesMatrix,
    c: &CompensationSetting,
) -> Result<BipartiteState> {
    evolve_in_frame(rho0, m_a, m_b, c, &CompensatorFrame::default())
}

pub fn evolve_in_frame(
    rho0: &BipartiteState,
    m_a: &JonesMatrix,
    m_b: &JonesMatrix,
    c: &CompensationSetting,
    frame: &CompensatorFrame,
) -> Result<BipartiteState> {
    check_unitary("alice", m_a)?;
    check_unitary("bob", m_b)?;
    let u = c.operator_in_frame(frame) * tensor(m_a, m_b);
    Ok(apply(&u, rho0)?)
}

/// Outcome of a compensation search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationResult {
    pub setting: CompensationSetting,
    pub fidelity: f64,
    /// Fidelity with both compensators at zero.
    pub uncompensated: f64,
}

/// Grid-then-golden-section search for the compensator phases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationOptimizer {
    pub mode: CompensationMode,
    pub frame: CompensatorFrame,
    /// Coarse grid points per phase over `[0, 2π)`.
    pub coarse_points: usize,
    /// Final bracket width of the golden-section refinement, radians.
    pub tolerance: f64,
}

impl Default for CompensationOptimizer {
    fn default() -> Self {
        Self {
            mode: CompensationMode::BothArms,
            frame: CompensatorFrame::default(),
            coarse_points: 64,
            tolerance: 1e-10,
        }
    }
}

/// `Tr[C σ C† ρ₀]` for diagonal `C`, with `σ` and `ρ₀` already expressed in
/// the compensator frame. `C` has diagonal `(1, e^{ib}, e^{ia}, e^{i(a+b)})`.
struct Objective {
    weights: Matrix4<C64>,
}

impl Objective {
    fn new(sigma: &Matrix4<C64>, rho0: &Matrix4<C64>) -> Self {
        let mut weights = Matrix4::zeros();
        for j in 0..4 {
            for k in 0..4 {
                weights[(j, k)] = sigma[(j, k)] * rho0[(k, j)];
            }
        }
        Self { weights }
    }

    fn eval(&self, a: f64, b: f64) -> f64 {
        let ea = C64::from_polar(1.0, a);
        let eb = C64::from_polar(1.0, b);
        let diag = [C64::new(1.0, 0.0), eb, ea, ea * eb];
        let mut acc = 0.0;
        for j in 0..4 {
            for k in 0..4 {
                acc += (self.weights[(j, k)] * diag[j] * diag[k].conj()).re;
            }
        }
        acc
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximize a unimodal function on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

impl CompensationOptimizer {
    pub fn with_mode(mode: CompensationMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    fn step(&self) -> f64 {
        TAU / self.coarse_points as f64
    }

    fn refine_alice(&self, obj: &Objective, b: f64) -> (f64, f64) {
        let h = self.step();
        let (mut best_a, mut best_f) = (0.0, obj.eval(0.0, b));
        for i in 1..self.coarse_points {
            let a = i as f64 * h;
            let v = obj.eval(a, b);
            if v > best_f {
                best_a = a;
                best_f = v;
            }
        }
        let (a, v) = golden_max(|a| obj.eval(a, b), best_a - h, best_a + h, self.tolerance);
        if v > best_f {
            (a, v)
        } else {
            (best_a, best_f)
        }
    }

    fn refine_both(&self, obj: &Objective, start: (f64, f64, f64)) -> (f64, f64, f64) {
        let h = self.step();
        let (mut a, mut b, mut best) = start;
        for _ in 0..60 {
            let before = best;
            let (na, fa) = golden_max(|x| obj.eval(x, b), a - h, a + h, self.tolerance);
            if fa > best {
                a = na;
                best = fa;
            }
            let (nb, fb) = golden_max(|y| obj.eval(a, y), b - h, b + h, self.tolerance);
            if fb > best {
                b = nb;
                best = fb;
            }
            if best - before <= 1e-15 {
                break;
            }
        }
        (a, b, best)
    }

    /// Compensation maximizing `Tr[ρ₁ρ₀]`.
    ///
    /// Alice's compensator alone is tried first; the joint search only wins
    /// if it improves the fidelity by more than `1e−12`, so a one-arm solution
    /// is reported with `δ_b = 0` whenever one exists.
    pub fn optimize(
        &self,
        rho0: &BipartiteState,
        m_a: &JonesMatrix,
        m_b: &JonesMatrix,
    ) -> Result<CompensationResult> {
        check_unitary("alice", m_a)?;
        check_unitary("bob", m_b)?;
        let full = |s: &CompensationSetting| -> Result<f64> {
            let rho1 = evolve_in_frame(rho0, m_a, m_b, s, &self.frame)?;
            Ok(polarization::fidelity(&rho1, rho0)?)
        };
        let uncompensated = full(&CompensationSetting::ZERO)?;
        if self.mode == CompensationMode::None {
            return Ok(CompensationResult {
                setting: CompensationSetting::ZERO,
                fidelity: uncompensated,
                uncompensated,
            });
        }

        // Move into the compensator frame so the compensators are diagonal.
        let frame_rot = tensor(
            &rotation_unchecked(self.frame.alice_axis_rad),
            &rotation_unchecked(self.frame.bob_axis_rad),
        );
        let to_frame = |m: &Matrix4<C64>| frame_rot.matrix().adjoint() * m * frame_rot.matrix();
        let u = tensor(m_a, m_b);
        let sigma = u.matrix() * rho0.matrix() * u.matrix().adjoint();
        let obj = Objective::new(&to_frame(&sigma), &to_frame(rho0.matrix()));

        let (mut a, v) = self.refine_alice(&obj, 0.0);
        let mut b = 0.0;
        if self.mode == CompensationMode::BothArms {
            let h = self.step();
            let mut best = (0.0, 0.0, f64::NEG_INFINITY);
            for i in 0..self.coarse_points {
                for j in 0..self.coarse_points {
                    let (x, y) = (i as f64 * h, j as f64 * h);
                    let f = obj.eval(x, y);
                    if f > best.2 {
                        best = (x, y, f);
                    }
                }
            }
            if best.2 > v + 1e-12 {
                let (ja, jb, jv) = self.refine_both(&obj, best);
                if jv > v + 1e-12 {
                    a = ja;
                    b = jb;
                }
            }
        }
        let setting = CompensationSetting::new(a, b).wrapped();
        let fidelity = full(&setting)?;
        if fidelity >= uncompensated {
            Ok(CompensationResult {
                setting,
                fidelity,
                uncompensated,
            })
        } else {
            Ok(CompensationResult {
                setting: CompensationSetting::ZERO,
                fidelity: uncompensated,
                uncompensated,
            })
        }
    }
}

/// [`CompensationOptimizer::optimize`] with the default settings.
pub fn optimize_compensation(
    rho0: &BipartiteState,
    m_a: &JonesMatrix,
    m_b: &JonesMatrix,
) -> Result<(CompensationSetting, f64)> {
    let r = CompensationOptimizer::default().optimize(rho0, m_a, m_b)?;
    Ok((r.setting, r.fidelity))
}

/// How sweep parameters are shared between the two arms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSymmetry {
    /// `θ` and `ΔL` applied to both arms.
    #[default]
    Shared,
    /// `θ` and `ΔL` applied to Alice only; Bob keeps the template values.
    AliceOnly,
}

/// Axes and options of a fidelity sweep. `φ` is always applied to Bob's arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub theta_axis_rad: Vec<f64>,
    pub phi_axis_rad: Vec<f64>,
    pub delta_lengths_m: Vec<f64>,
    pub symmetry: SweepSymmetry,
    pub target: BellStateId,
    pub optimizer: CompensationOptimizer,
}

impl SweepSpec {
    pub fn new(
        theta_axis_rad: Vec<f64>,
        phi_axis_rad: Vec<f64>,
        delta_lengths_m: Vec<f64>,
    ) -> Self {
        Self {
            theta_axis_rad,
            phi_axis_rad,
            delta_lengths_m,
            symmetry: SweepSymmetry::Shared,
            target: BellStateId::PsiMinus,
            optimizer: CompensationOptimizer::default(),
        }
    }
}

/// Post-compensation fidelity over a `(θ, φ)` grid at one length mismatch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityGrid {
    pub theta_axis: Vec<f64>,
    pub phi_axis: Vec<f64>,
    pub delta_length: f64,
    /// `values[i][j]` at `theta_axis[i]`, `phi_axis[j]`.
    pub values: Vec<Vec<f64>>,
    pub compensation: Vec<Vec<CompensationSetting>>,
}

impl FidelityGrid {
    pub fn min(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn get(&self, theta_index: usize, phi_index: usize) -> f64 {
        self.values[theta_index][phi_index]
    }
}

/// The two arm channels of one sweep cell.
pub fn cell_pairs(
    alice: &CrossAlignedPair,
    bob: &CrossAlignedPair,
    symmetry: SweepSymmetry,
    theta: f64,
    phi: f64,
    delta_length: f64,
) -> Result<(CrossAlignedPair, CrossAlignedPair)> {
    let a = alice
        .with_misalignment(theta)
        .with_delta_length(delta_length)?;
    let b = match symmetry {
        SweepSymmetry::Shared => bob
            .with_misalignment(theta)
            .with_delta_length(delta_length)?,
        SweepSymmetry::AliceOnly => *bob,
    };
    let b = b.with_frame_offset(bob.frame_offset_rad + phi);
    Ok((a, b))
}

/// One grid per length mismatch; every cell holds the optimized fidelity.
pub fn sweep_fidelity(
    alice: &CrossAlignedPair,
    bob: &CrossAlignedPair,
    spec: &SweepSpec,
) -> Result<Vec<FidelityGrid>> {
    if spec.theta_axis_rad.is_empty() {
        return Err(EntanglementError::EmptyAxis("theta"));
    }
    if spec.phi_axis_rad.is_empty() {
        return Err(EntanglementError::EmptyAxis("phi"));
    }
    if spec.delta_lengths_m.is_empty() {
        return Err(EntanglementError::EmptyAxis("delta_length"));
    }
    let rho0 = bell_state(spec.target);
    let nt = spec.theta_axis_rad.len();
    let np = spec.phi_axis_rad.len();
    let cells: Vec<(usize, usize, usize)> = (0..spec.delta_lengths_m.len())
        .flat_map(|d| (0..nt).flat_map(move |t| (0..np).map(move |p| (d, t, p))))
        .collect();
    let results: Vec<CompensationResult> = cells
        .par_iter()
        .map(|&(d, t, p)| {
            let (a, b) = cell_pairs(
                alice,
                bob,
                spec.symmetry,
                spec.theta_axis_rad[t],
                spec.phi_axis_rad[p],
                spec.delta_lengths_m[d],
            )?;
            spec.optimizer
                .optimize(&rho0, &cross_pair_exact(&a), &cross_pair_exact(&b))
        })
        .collect::<Result<_>>()?;

    let per_grid = nt * np;
    Ok(spec
        .delta_lengths_m
        .iter()
        .enumerate()
        .map(|(d, &dl)| {
            let chunk = &results[d * per_grid..(d + 1) * per_grid];
            FidelityGrid {
                theta_axis: spec.theta_axis_rad.clone(),
                phi_axis: spec.phi_axis_rad.clone(),
                delta_length: dl,
                values: chunk
                    .chunks(np)
                    .map(|row| row.iter().map(|r| r.fidelity).collect())
                    .collect(),
                compensation: chunk
                    .chunks(np)
                    .map(|row| row.iter().map(|r| r.setting).collect())
                    .collect(),
            }
        })
        .collect())
}
