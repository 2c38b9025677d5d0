//! Gate targets and process fidelity.
//!
//! The qudit Z gate puts `e^{+i 2 pi l / N}` on mode `l`, while the module
//! produces `e^{-i 4 l alpha}` on V. With `alpha = pi/(2N)` the two agree up
//! to complex conjugation, so comparisons default to the conjugated target
//! (`PhaseSign::Conjugated`); the choice is reported alongside the result.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::TransferOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseSign {
    /// `e^{+i 2 pi l / N}` as the gate is usually written.
    AsWritten,
    /// `e^{-i 2 pi l / N}`, the sign the module realizes.
    Conjugated,
}

impl PhaseSign {
    fn sign(self) -> f64 {
        match self {
            PhaseSign::AsWritten => 1.0,
            PhaseSign::Conjugated => -1.0,
        }
    }
}

/// Modes `0..d`, the default embedding of a `d`-level qudit.
pub fn default_modes(d: usize) -> Vec<i32> {
    (0..d as i32).collect()
}

/// Prism angle at which the module realizes the `N`-th root controlled phase.
pub fn cphase_alpha(n: u32) -> f64 {
    PI / (2.0 * n as f64)
}

fn check_modes(l_max: u32, modes: &[i32], n: u32) -> Result<()> {
    if modes.is_empty() {
        return Err(Error::InvalidParameter("empty mode list".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("modulus N must be positive".into()));
    }
    for &l in modes {
        if l.unsigned_abs() > l_max {
            return Err(Error::ModeOutOfRange { l, l_max });
        }
    }
    Ok(())
}

/// Diagonal Z gate over `modes` (OAM block only).
pub fn zgate_on(l_max: u32, modes: &[i32], n: u32, sign: PhaseSign) -> Result<DMatrix<Complex64>> {
    check_modes(l_max, modes, n)?;
    let d = modes.len();
    let mut z = DMatrix::zeros(d, d);
    for (i, &l) in modes.iter().enumerate() {
        z[(i, i)] = Complex64::from_polar(1.0, sign.sign() * 2.0 * PI * l as f64 / n as f64);
    }
    Ok(z)
}

/// `Z = sum_{l<D} e^{i 2 pi l/N} |l><l|`.
pub fn zgate_target(l_max: u32, d: usize, n: u32) -> Result<DMatrix<Complex64>> {
    if d < 1 || n < 2 {
        return Err(Error::InvalidParameter(format!("need D >= 1 and N >= 2, got D = {d}, N = {n}")));
    }
    zgate_on(l_max, &default_modes(d), n, PhaseSign::AsWritten)
}

/// Controlled-phase target on `{H, V} x modes`, ordered polarization-major
/// like `TransferOperator::restrict`: identity on H, Z on V.
#[derive(Clone, Debug, PartialEq)]
pub struct GateTarget {
    pub modes: Vec<i32>,
    pub n: u32,
    pub sign: PhaseSign,
    pub matrix: DMatrix<Complex64>,
}

pub fn cphase_target_on(l_max: u32, modes: &[i32], n: u32, sign: PhaseSign) -> Result<GateTarget> {
    let z = zgate_on(l_max, modes, n, sign)?;
    let d = modes.len();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        m[(i, i)] = Complex64::new(1.0, 0.0);
        m[(d + i, d + i)] = z[(i, i)];
    }
    Ok(GateTarget {
        modes: modes.to_vec(),
        n,
        sign,
        matrix: m,
    })
}

pub fn cphase_target(l_max: u32, d: usize, n: u32, sign: PhaseSign) -> Result<GateTarget> {
    if d < 1 || n < 2 {
        return Err(Error::InvalidParameter(format!("need D >= 1 and N >= 2, got D = {d}, N = {n}")));
    }
    cphase_target_on(l_max, &default_modes(d), n, sign)
}

/// `|Tr(T^dagger U)| / dim`: 1 iff `U` equals the unitary `T` up to a global phase.
pub fn process_fidelity(actual: &DMatrix<Complex64>, target: &DMatrix<Complex64>) -> Result<f64> {
    if actual.shape() != target.shape() || actual.nrows() != actual.ncols() {
        return Err(Error::DimensionMismatch {
            expected: target.nrows(),
            found: actual.nrows(),
        });
    }
    let d = actual.nrows();
    if d == 0 {
        return Err(Error::InvalidParameter("empty operator".into()));
    }
    // Tr(T^dagger U) = sum_ij conj(T_ij) U_ij
    let tr: Complex64 = target.iter().zip(actual.iter()).map(|(t, u)| t.conj() * u).sum();
    Ok(tr.norm() / d as f64)
}

pub fn operator_process_fidelity(actual: &TransferOperator, target: &TransferOperator) -> Result<f64> {
    if actual.l_max() != target.l_max() {
        return Err(Error::TruncationMismatch {
            left: actual.l_max(),
            right: target.l_max(),
        });
    }
    process_fidelity(actual.matrix(), target.matrix())
}

/// Process fidelity of `op` against a gate target on the target's subspace.
pub fn gate_fidelity(op: &TransferOperator, target: &GateTarget) -> Result<f64> {
    process_fidelity(&op.restrict(&target.modes)?, &target.matrix)
}
