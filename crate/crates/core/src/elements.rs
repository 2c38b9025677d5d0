//! Transfer operators of the individual optical elements.
//!
//! Conventions used throughout the crate:
//!
//! * `rotator(a) = [[cos a, sin a], [-sin a, cos a]]`
//! * Dove prism: `J(a) = R(-a) diag(sqrt(t_par), sqrt(t_perp) e^{i dphi}) R(a)`,
//!   times the OAM phase `e^{i 2 l a}` on mode `l`. The prism's image
//!   inversion is folded into that phase; the OAM order is preserved.
//! * Half-wave plate with fast axis at `t`: `[[cos 2t, sin 2t], [sin 2t, -cos 2t]]`.
//! * Quarter-wave plate at zero: `diag(1, i)`.
//! * Inside a Sagnac loop the counter-propagating direction `b` sees every
//!   rotation angle mirrored, `t -> -t`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::{HybridState, Jones, Polarization, TransferOperator, ALGEBRA_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    A,
    B,
}

impl Direction {
    /// Angle as seen by a beam travelling in this direction.
    pub fn effective(self, angle: f64) -> f64 {
        match self {
            Direction::A => angle,
            Direction::B => -angle,
        }
    }
}

/// Wraps a phase into `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Physical parameters of a Dove prism.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpParams {
    /// Intensity transmission for polarization parallel to the base normal.
    pub t_par: f64,
    /// Intensity transmission for the perpendicular polarization.
    pub t_perp: f64,
    /// Relative phase from total internal reflection, in `(-pi, pi]`.
    pub delta_phi: f64,
    /// Rotation about the longitudinal axis, radians.
    pub alpha: f64,
}

impl DpParams {
    pub fn new(t_par: f64, t_perp: f64, delta_phi: f64, alpha: f64) -> Result<Self> {
        for (name, t) in [("t_par", t_par), ("t_perp", t_perp)] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidTransmission { name, value: t });
            }
        }
        for (name, v) in [("delta_phi", delta_phi), ("alpha", alpha)] {
            if !v.is_finite() {
                return Err(Error::NonFinite { name, value: v });
            }
        }
        Ok(DpParams {
            t_par,
            t_perp,
            delta_phi: wrap_phase(delta_phi),
            alpha,
        })
    }

    /// Lossless prism without retardance.
    pub fn ideal(alpha: f64) -> Self {
        DpParams {
            t_par: 1.0,
            t_perp: 1.0,
            delta_phi: 0.0,
            alpha,
        }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        DpParams { alpha, ..self }
    }

    pub fn is_lossless(&self) -> bool {
        self.t_par == 1.0 && self.t_perp == 1.0
    }

    pub(crate) fn validate(&self) -> Result<()> {
        DpParams::new(self.t_par, self.t_perp, self.delta_phi, self.alpha).map(|_| ())
    }
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite { name, value });
    }
    Ok(())
}

pub fn rotator(angle: f64) -> Jones {
    let (s, c) = angle.sin_cos();
    Jones::new(real(c), real(s), real(-s), real(c))
}

/// Polarization part of a Dove prism rotated by `alpha`.
pub fn dove_prism_jones(t_par: f64, t_perp: f64, delta_phi: f64, alpha: f64) -> Jones {
    let d = Jones::new(
        real(t_par.sqrt()),
        real(0.0),
        real(0.0),
        Complex64::from_polar(t_perp.sqrt(), delta_phi),
    );
    rotator(-alpha) * d * rotator(alpha)
}

pub fn half_wave_plate_jones(theta: f64) -> Jones {
    let (s, c) = (2.0 * theta).sin_cos();
    Jones::new(real(c), real(s), real(s), real(-c))
}

pub fn quarter_wave_plate_jones(theta: f64) -> Jones {
    let d = Jones::new(real(1.0), real(0.0), real(0.0), Complex64::i());
    rotator(-theta) * d * rotator(theta)
}

/// Dove prism traversed in `direction`: mode `l` picks up `e^{i 2 l a}` and
/// the polarization matrix `J(a)`, with `a` the direction's effective angle.
pub fn dove_prism(l_max: u32, params: &DpParams, direction: Direction) -> Result<TransferOperator> {
    params.validate()?;
    Ok(TransferOperator::from_mode_blocks(l_max, |l| dove_prism_block(params, direction, l)))
}

/// Mode-`l` block of `dove_prism`. Parameters are not validated.
pub fn dove_prism_block(params: &DpParams, direction: Direction, l: i32) -> Jones {
    let a = direction.effective(params.alpha);
    dove_prism_jones(params.t_par, params.t_perp, params.delta_phi, a) * Complex64::from_polar(1.0, 2.0 * l as f64 * a)
}

/// Dove prism placed after one image inversion has already happened (the
/// prism downstream of a loop that contains one). A physical prism maps
/// `|l> -> e^{i 2 l a} |-l>`; acting on the already flipped mode it restores
/// `l` with the phase `e^{-i 2 l a}`. Its polarization action is unchanged.
pub fn dove_prism_after_inversion(l_max: u32, params: &DpParams) -> Result<TransferOperator> {
    params.validate()?;
    Ok(TransferOperator::from_mode_blocks(l_max, |l| dove_prism_after_inversion_block(params, l)))
}

/// Mode-`l` block of `dove_prism_after_inversion`. Parameters are not validated.
pub fn dove_prism_after_inversion_block(params: &DpParams, l: i32) -> Jones {
    let a = params.alpha;
    dove_prism_jones(params.t_par, params.t_perp, params.delta_phi, a) * Complex64::from_polar(1.0, -2.0 * l as f64 * a)
}

pub fn half_wave_plate(l_max: u32, theta: f64, direction: Direction) -> Result<TransferOperator> {
    check_finite("theta", theta)?;
    Ok(TransferOperator::from_polarization(
        l_max,
        half_wave_plate_jones(direction.effective(theta)),
    ))
}

pub fn quarter_wave_plate(l_max: u32, theta: f64) -> Result<TransferOperator> {
    check_finite("theta", theta)?;
    Ok(TransferOperator::from_polarization(l_max, quarter_wave_plate_jones(theta)))
}

/// Projector onto one polarization channel, `|p><p| (x) I_oam`.
pub fn polarizer(l_max: u32, pol: Polarization) -> TransferOperator {
    let mut j = Jones::zeros();
    j[(pol.index(), pol.index())] = real(1.0);
    TransferOperator::from_polarization(l_max, j)
}

fn keep_channel(state: &HybridState, pol: Polarization) -> HybridState {
    let mut v = state.amplitudes().clone();
    for l in crate::state::modes(state.l_max()) {
        v[crate::state::basis_index(state.l_max(), pol.orthogonal(), l)] = Complex64::new(0.0, 0.0);
    }
    HybridState::from_vector(state.l_max(), v).expect("same dimension")
}

/// Polarizing beam splitter: `(transmitted H part, reflected V part)`.
pub fn pbs_split(state: &HybridState) -> (HybridState, HybridState) {
    (keep_channel(state, Polarization::H), keep_channel(state, Polarization::V))
}

/// Recombines the two PBS ports. Each input must be purely polarized in its
/// own channel.
pub fn pbs_merge(h_input: &HybridState, v_input: &HybridState) -> Result<HybridState> {
    let leak_h = h_input.channel_intensity(Polarization::V).sqrt();
    if leak_h > ALGEBRA_TOL {
        return Err(Error::CrossPolarizedLeakage { input: "H", leak: leak_h });
    }
    let leak_v = v_input.channel_intensity(Polarization::H).sqrt();
    if leak_v > ALGEBRA_TOL {
        return Err(Error::CrossPolarizedLeakage { input: "V", leak: leak_v });
    }
    h_input.add(v_input)
}
