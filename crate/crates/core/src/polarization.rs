//! Small-dimension complex linear algebra for polarization qubits.
//!
//! Single-mode operators are 2×2 Jones matrices in the `|H⟩, |V⟩` basis.
//! Two-mode (Alice ⊗ Bob) objects are 4×4 matrices in the fixed product basis
//! `|HH⟩, |HV⟩, |VH⟩, |VV⟩` with Alice in the first slot, so `a ⊗ b` is the
//! literal Kronecker product.
//!
//! Rotations use the convention `R(θ) = [[cos θ, sin θ], [−sin θ, cos θ]]`.
//! A retarder built with [`linear_retarder`] at axis `θ` has its fast
//! eigenvector at [`JonesVector::linear`]`(θ) = (cos θ, −sin θ)`, so all
//! "linear polarization at angle θ" states in this crate follow the same
//! handedness.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Tolerance for algebraic identities (unitarity, trace, Hermiticity).
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Tolerance used when checking whether an operator handed to [`apply`] is unitary.
pub const UNITARY_TOL: f64 = 1e-10;
/// Floor for eigenvalues of a valid density matrix.
pub const EIGEN_FLOOR: f64 = -1e-10;
/// Purity threshold for treating a state as pure (rank one).
pub const PURITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizationError {
    #[error("non-finite angle or phase: {0}")]
    NonFinite(f64),
    #[error("operator is not unitary (max |U†U − I| entry = {0:e})")]
    NotUnitary(f64),
    #[error("density matrix is not Hermitian (max |ρ − ρ†| entry = {0:e})")]
    NotHermitian(f64),
    #[error("density matrix trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("density matrix has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("Jones vector has zero norm")]
    ZeroVector,
    /// Both arguments of [`fidelity`] are mixed. The overlap is still reported
    /// but is not the Uhlmann fidelity.
    #[error("both states are mixed; Tr[ρσ] = {overlap} is an overlap, not a fidelity")]
    BothMixed { overlap: f64 },
}

pub type Result<T, E = PolarizationError> = std::result::Result<T, E>;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(PolarizationError::NonFinite(x))
    }
}

/// A two-component polarization amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JonesVector {
    pub h: C64,
    pub v: C64,
}

impl JonesVector {
    pub const fn new(h: C64, v: C64) -> Self {
        Self { h, v }
    }

    pub fn horizontal() -> Self {
        Self::new(c(1.0), c(0.0))
    }

    pub fn vertical() -> Self {
        Self::new(c(0.0), c(1.0))
    }

    /// Linear polarization at `angle`, `(cos angle, −sin angle)`.
    pub fn linear(angle: f64) -> Self {
        Self::new(c(angle.cos()), c(-angle.sin()))
    }

    /// Diagonal polarization, `linear(π/4)`.
    pub fn diagonal() -> Self {
        Self::linear(std::f64::consts::FRAC_PI_4)
    }

    /// Anti-diagonal polarization, `linear(−π/4)`.
    pub fn antidiagonal() -> Self {
        Self::linear(-std::f64::consts::FRAC_PI_4)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= ALGEBRA_TOL
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(PolarizationError::ZeroVector);
        }
        Ok(Self::new(self.h / n, self.v / n))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &JonesVector) -> C64 {
        self.h.conj() * other.h + self.v.conj() * other.v
    }

    /// Kronecker product `self ⊗ other` in the `HH, HV, VH, VV` basis.
    pub fn tensor(&self, other: &JonesVector) -> Vector4<C64> {
        Vector4::new(
            self.h * other.h,
            self.h * other.v,
            self.v * other.h,
            self.v * other.v,
        )
    }
}

/// A 2×2 complex operator on one polarization mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JonesMatrix(Matrix2<C64>);

impl JonesMatrix {
    pub fn from_matrix(m: Matrix2<C64>) -> Self {
        Self(m)
    }

    /// Row-major entries.
    pub fn from_entries(m00: C64, m01: C64, m10: C64, m11: C64) -> Self {
        Self(Matrix2::new(m00, m01, m10, m11))
    }

    pub fn identity() -> Self {
        Self(Matrix2::identity())
    }

    pub fn diagonal(a: C64, b: C64) -> Self {
        Self::from_entries(a, C64::ZERO, C64::ZERO, b)
    }

    /// Multiply every entry by `e^{iα}`.
    pub fn scaled_by_phase(&self, alpha: f64) -> Self {
        Self(self.0 * C64::from_polar(1.0, alpha))
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.0
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn determinant(&self) -> C64 {
        self.0[(0, 0)] * self.0[(1, 1)] - self.0[(0, 1)] * self.0[(1, 0)]
    }

    pub fn apply(&self, v: &JonesVector) -> JonesVector {
        JonesVector::new(
            self.0[(0, 0)] * v.h + self.0[(0, 1)] * v.v,
            self.0[(1, 0)] * v.h + self.0[(1, 1)] * v.v,
        )
    }

    /// Largest entry modulus of `M†M − I`.
    pub fn unitarity_defect(&self) -> f64 {
        max_abs_entry2(&(self.0.adjoint() * self.0 - Matrix2::identity()))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    /// Largest entry modulus of `self − other`.
    pub fn max_entry_distance(&self, other: &JonesMatrix) -> f64 {
        max_abs_entry2(&(self.0 - other.0))
    }

    /// Eigenvalues of the 2×2 matrix from its characteristic polynomial.
    pub fn eigenvalues(&self) -> [C64; 2] {
        let tr = self.0[(0, 0)] + self.0[(1, 1)];
        let det = self.determinant();
        let disc = (tr * tr - det * 4.0).sqrt();
        [(tr + disc) * 0.5, (tr - disc) * 0.5]
    }

    /// `R(θ)·self·R(−θ)`.
    pub fn conjugated_by_rotation(&self, theta: f64) -> Self {
        let r = rotation_unchecked(theta);
        let r_inv = rotation_unchecked(-theta);
        r * *self * r_inv
    }
}

impl Mul for JonesMatrix {
    type Output = JonesMatrix;

    fn mul(self, rhs: JonesMatrix) -> JonesMatrix {
        JonesMatrix(self.0 * rhs.0)
    }
}

impl fmt::Display for JonesMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.0[(0, 0)],
            self.0[(0, 1)],
            self.0[(1, 0)],
            self.0[(1, 1)]
        )
    }
}

fn max_abs_entry2(m: &Matrix2<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn max_abs_entry4(m: &Matrix4<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn rotation_unchecked(theta: f64) -> JonesMatrix {
    let (s, co) = theta.sin_cos();
    JonesMatrix::from_entries(c(co), c(s), c(-s), c(co))
}

pub(crate) fn linear_retarder_unchecked(delta: f64, axis: f64) -> JonesMatrix {
    let core = JonesMatrix::diagonal(c(1.0), C64::from_polar(1.0, delta));
    rotation_unchecked(axis) * core * rotation_unchecked(-axis)
}

/// `[[cos θ, sin θ], [−sin θ, cos θ]]`.
pub fn rotation(theta: f64) -> Result<JonesMatrix> {
    Ok(rotation_unchecked(finite(theta)?))
}

/// A linear retarder of retardance `delta` whose fast axis sits at `axis`:
/// `R(axis)·diag(1, e^{iδ})·R(−axis)`.
pub fn linear_retarder(delta: f64, axis: f64) -> Result<JonesMatrix> {
    Ok(linear_retarder_unchecked(finite(delta)?, finite(axis)?))
}

/// Half-wave plate with fast axis at `theta`.
pub fn hwp(theta: f64) -> Result<JonesMatrix> {
    linear_retarder(std::f64::consts::PI, theta)
}

/// Quarter-wave plate with fast axis at `theta`.
pub fn qwp(theta: f64) -> Result<JonesMatrix> {
    linear_retarder(std::f64::consts::FRAC_PI_2, theta)
}

/// A 4×4 operator on the Alice ⊗ Bob polarization pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitOperator(Matrix4<C64>);

impl TwoQubitOperator {
    pub fn from_matrix(m: Matrix4<C64>) -> Self {
        Self(m)
    }

    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn unitarity_defect(&self) -> f64 {
        max_abs_entry4(&(self.0.adjoint() * self.0 - Matrix4::identity()))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn max_entry_distance(&self, other: &TwoQubitOperator) -> f64 {
        max_abs_entry4(&(self.0 - other.0))
    }

    pub fn apply_vector(&self, v: &Vector4<C64>) -> Vector4<C64> {
        self.0 * v
    }
}

impl Mul for TwoQubitOperator {
    type Output = TwoQubitOperator;

    fn mul(self, rhs: TwoQubitOperator) -> TwoQubitOperator {
        TwoQubitOperator(self.0 * rhs.0)
    }
}

/// Kronecker product `a ⊗ b`; row/column index `2i + j` pairs Alice's `i` with Bob's `j`.
pub fn tensor(a: &JonesMatrix, b: &JonesMatrix) -> TwoQubitOperator {
    let mut m = Matrix4::zeros();
    for ar in 0..2 {
        for ac in 0..2 {
            let x = a.0[(ar, ac)];
            for br in 0..2 {
                for bc in 0..2 {
                    m[(2 * ar + br, 2 * ac + bc)] = x * b.0[(br, bc)];
                }
            }
        }
    }
    TwoQubitOperator(m)
}

/// A two-photon polarization density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BipartiteState(Matrix4<C64>);

impl BipartiteState {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(rho: Matrix4<C64>) -> Result<Self> {
        let state = Self(rho);
        state.validate()?;
        Ok(state)
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) state vector.
    pub fn from_pure(psi: &Vector4<C64>) -> Result<Self> {
        let n = psi.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(PolarizationError::ZeroVector);
        }
        let psi = psi / C64::new(n, 0.0);
        Ok(Self(psi * psi.adjoint()))
    }

    /// `I/4`.
    pub fn maximally_mixed() -> Self {
        Self(Matrix4::identity() * c(0.25))
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `Tr[ρ²]`.
    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    pub fn is_pure(&self) -> bool {
        (self.purity() - 1.0).abs() <= PURITY_TOL
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_entry4(&(self.0 - self.0.adjoint()))
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let herm = (self.0 + self.0.adjoint()) * c(0.5);
        let eig = SymmetricEigen::new(herm);
        let mut vals = [0.0; 4];
        for (dst, src) in vals.iter_mut().zip(eig.eigenvalues.iter()) {
            *dst = *src;
        }
        vals.sort_by(f64::total_cmp);
        vals
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_defect();
        if herm > ALGEBRA_TOL {
            return Err(PolarizationError::NotHermitian(herm));
        }
        let tr = self.trace();
        if (tr - c(1.0)).norm() > ALGEBRA_TOL {
            return Err(PolarizationError::BadTrace(tr.re));
        }
        let min = self.eigenvalues()[0];
        if min < EIGEN_FLOOR {
            return Err(PolarizationError::NotPositive(min));
        }
        Ok(())
    }

    /// Reduced state of Alice (traces out Bob).
    pub fn reduced_alice(&self) -> Matrix2<C64> {
        let mut out = Matrix2::zeros();
        for i in 0..2 {
            for k in 0..2 {
                out[(i, k)] = (0..2).map(|j| self.0[(2 * i + j, 2 * k + j)]).sum();
            }
        }
        out
    }

    /// Reduced state of Bob (traces out Alice).
    pub fn reduced_bob(&self) -> Matrix2<C64> {
        let mut out = Matrix2::zeros();
        for j in 0..2 {
            for l in 0..2 {
                out[(j, l)] = (0..2).map(|i| self.0[(2 * i + j, 2 * i + l)]).sum();
            }
        }
        out
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized product or entangled vector.
    pub fn expectation(&self, psi: &Vector4<C64>) -> f64 {
        (psi.adjoint() * self.0 * psi)[(0, 0)].re
    }

    pub fn max_entry_distance(&self, other: &BipartiteState) -> f64 {
        max_abs_entry4(&(self.0 - other.0))
    }
}

/// `U·ρ·U†`. Rejects operators that are not unitary within [`UNITARY_TOL`].
pub fn apply(op: &TwoQubitOperator, state: &BipartiteState) -> Result<BipartiteState> {
    let defect = op.unitarity_defect();
    if defect > UNITARY_TOL {
        return Err(PolarizationError::NotUnitary(defect));
    }
    Ok(BipartiteState(op.0 * state.0 * op.0.adjoint()))
}

/// Overlap `Tr[ρσ]` clamped to `[0, 1]`.
///
/// This is the fidelity when at least one argument is pure. If neither is
/// pure the overlap is returned inside [`PolarizationError::BothMixed`] so the
/// caller can decide whether to accept it.
pub fn fidelity(rho: &BipartiteState, sigma: &BipartiteState) -> Result<f64> {
    let overlap = overlap(rho, sigma);
    if !sigma.is_pure() && !rho.is_pure() {
        return Err(PolarizationError::BothMixed { overlap });
    }
    Ok(overlap)
}

/// `Re Tr[ρσ]` clamped to `[0, 1]`, with no purity check.
pub fn overlap(rho: &BipartiteState, sigma: &BipartiteState) -> f64 {
    let mut acc = C64::ZERO;
    for i in 0..4 {
        for k in 0..4 {
            acc += rho.0[(i, k)] * sigma.0[(k, i)];
        }
    }
    acc.re.clamp(0.0, 1.0)
}
