//! Search for a polarization-only compensator that turns a bare-DP Sagnac
//! into the PMM.
//!
//! The compensator `C` is an l-independent SU(2) element appended after the
//! baseline. Each mode `l` of the diagonal input leaves the baseline in some
//! polarization `p_l`; the ideal module would give `q_l`. The residual is
//! `1 - mean_l |<q_l| C p_l>|^2` with `p_l`, `q_l` normalized, so mode
//! dependent loss and per-mode global phases are ignored and a single mode
//! is always compensable. Several modes generally are not: `C` would have to
//! undo an l-dependent polarization rotation.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::analysis::fidelity::diagonal_input;
use crate::analysis::nelder_mead::{minimize, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::state::TransferOperator;

pub const DEFAULT_RESTARTS: usize = 50;

/// `[[e^{ib} cos a, e^{ic} sin a], [-e^{-ic} sin a, e^{-ib} cos a]]`, all of SU(2).
pub fn compensator(angles: [f64; 3]) -> Matrix2<Complex64> {
    let [a, b, c] = angles;
    let e = |phi: f64| Complex64::from_polar(1.0, phi);
    Matrix2::new(
        e(b) * a.cos(),
        e(c) * a.sin(),
        -e(-c) * a.sin(),
        e(-b) * a.cos(),
    )
}

/// Normalized output polarizations of the baseline and the target, one pair per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct CompensationProblem {
    pub modes: Vec<i32>,
    pairs: Vec<(Vector2<Complex64>, Vector2<Complex64>)>,
}

fn output_polarization(op: &TransferOperator, l: i32) -> Result<Vector2<Complex64>> {
    let out = op.apply(&diagonal_input(op.l_max(), l)?)?;
    let [h, v] = out.polarization_at(l);
    let p = Vector2::new(h, v);
    let n = p.norm();
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(p / Complex64::new(n, 0.0))
}

impl CompensationProblem {
    pub fn new(baseline: &TransferOperator, target: &TransferOperator, modes: &[i32]) -> Result<Self> {
        if baseline.l_max() != target.l_max() {
            return Err(Error::TruncationMismatch {
                left: baseline.l_max(),
                right: target.l_max(),
            });
        }
        if modes.is_empty() {
            return Err(Error::InvalidParameter("empty mode list".into()));
        }
        let pairs = modes
            .iter()
            .map(|&l| Ok((output_polarization(baseline, l)?, output_polarization(target, l)?)))
            .collect::<Result<_>>()?;
        Ok(CompensationProblem {
            modes: modes.to_vec(),
            pairs,
        })
    }

    pub fn residual(&self, angles: [f64; 3]) -> f64 {
        let c = compensator(angles);
        let sum: f64 = self.pairs.iter().map(|(p, q)| q.dotc(&(c * p)).norm_sqr()).sum();
        1.0 - sum / self.pairs.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompensationResult {
    pub residual: f64,
    pub angles: [f64; 3],
    /// Best residual after each restart, in restart order.
    pub history: Vec<f64>,
}

/// Multistart Nelder-Mead over the compensator angles. Restart `i` starts
/// from a point drawn on its own ChaCha stream; restarts run in parallel and
/// are reduced by index, so the result depends only on the seed.
pub fn search(problem: &CompensationProblem, restarts: usize, seed: u64) -> Result<CompensationResult> {
    if restarts == 0 {
        return Err(Error::InvalidParameter("need at least one restart".into()));
    }
    let opts = NelderMeadOptions::default();
    let runs: Vec<(f64, [f64; 3])> = (0..restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x0: Vec<f64> = (0..3).map(|_| rng.gen_range(-PI..PI)).collect();
            let m = minimize(|x| problem.residual([x[0], x[1], x[2]]), &x0, &opts);
            (m.value, [m.x[0], m.x[1], m.x[2]])
        })
        .collect();

    let mut best = (f64::INFINITY, [0.0; 3]);
    let mut history = Vec::with_capacity(restarts);
    for run in runs {
        if run.0 < best.0 {
            best = run;
        }
        history.push(best.0);
    }
    Ok(CompensationResult {
        residual: best.0,
        angles: best.1,
        history,
    })
}

/// Best residual of compensating `baseline` towards `target` on modes `0..d`.
pub fn compensation_search(
    baseline: &TransferOperator,
    target: &TransferOperator,
    d: usize,
    restarts: usize,
    seed: u64,
) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParameter("D must be at least 1".into()));
    }
    let modes: Vec<i32> = (0..d as i32).collect();
    let problem = CompensationProblem::new(baseline, target, &modes)?;
    Ok(search(&problem, restarts, seed)?.residual)
}
