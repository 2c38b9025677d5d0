//! Named optical structures built from the elements: the HWP-DP-HWP
//! sandwich, PBS Sagnac loops, the phase manipulation module (PMM), its
//! pi/8 cascade stage and the HWP+PBS detection module.
//!
//! In the PBS Sagnac the H component circulates in direction `a` and the
//! V component in direction `b`. Port 1 of the detection module is the
//! analysis PBS's V output; with `alpha = pi/4` and the default analyzer
//! angle it collects the odd OAM orders. Port 2 (the H output) collects the
//! even ones.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

use nalgebra::Vector2;
use num_complex::Complex64;

use crate::elements::{
    dove_prism, dove_prism_after_inversion, dove_prism_after_inversion_block, dove_prism_block, half_wave_plate,
    half_wave_plate_jones, polarizer, quarter_wave_plate, DpParams, Direction,
};
use crate::error::{Error, Result};
use crate::state::{compose, HybridState, Jones, Polarization, TransferOperator};

/// Default analyzer half-wave plate angle: projects onto the diagonal basis.
pub const DETECTION_THETA: f64 = FRAC_PI_8;

/// DP rotation of the second (mod-4) cascade stage.
pub const PMM2_ALPHA: f64 = FRAC_PI_8;

const TIE_TOL: f64 = 1e-12;

fn check_tied(what: &'static str, expected: f64, found: f64) -> Result<()> {
    if (expected - found).abs() > TIE_TOL {
        return Err(Error::AngleMismatch { what, expected, found });
    }
    Ok(())
}

/// HWP(t_in) -> DP -> HWP(t_out), all seen from `direction`.
pub fn sandwich_with(
    l_max: u32,
    theta_in: f64,
    dp: &DpParams,
    theta_out: f64,
    direction: Direction,
) -> Result<TransferOperator> {
    compose(
        l_max,
        &[
            half_wave_plate(l_max, theta_in, direction)?,
            dove_prism(l_max, dp, direction)?,
            half_wave_plate(l_max, theta_out, direction)?,
        ],
    )
}

/// The sandwich with both wave plates tied to half the prism angle. Diagonal
/// in H/V: `(H, l) -> e^{i2la} sqrt(t_par)`, `(V, l) -> e^{i2la} sqrt(t_perp) e^{i dphi}`
/// with `a` the direction's effective angle.
pub fn sandwich(l_max: u32, alpha: f64, dp: &DpParams, direction: Direction) -> Result<TransferOperator> {
    check_tied("sandwich prism angle", alpha, dp.alpha)?;
    sandwich_with(l_max, alpha / 2.0, dp, alpha / 2.0, direction)
}

/// PBS single-path Sagnac: the H part of the input runs through `inner_a`,
/// the V part through `inner_b`. On return the PBS passes only the H part of
/// the first beam and the V part of the second to the output port; anything
/// the loop rotated into the other polarization leaves through the input
/// port and is lost. The result is `P_H a P_H + P_V b P_V`.
pub fn pbs_sagnac(inner_a: &TransferOperator, inner_b: &TransferOperator) -> Result<TransferOperator> {
    if inner_a.l_max() != inner_b.l_max() {
        return Err(Error::TruncationMismatch {
            left: inner_a.l_max(),
            right: inner_b.l_max(),
        });
    }
    let l_max = inner_a.l_max();
    let ph = polarizer(l_max, Polarization::H);
    let pv = polarizer(l_max, Polarization::V);
    let h_path = ph.then(inner_a)?.then(&ph)?;
    let v_path = pv.then(inner_b)?.then(&pv)?;
    h_path.add(&v_path)
}

/// Sandwich inside the PBS Sagnac, without the compensation stage.
pub fn sandwich_sagnac(l_max: u32, alpha: f64, dp: &DpParams) -> Result<TransferOperator> {
    pbs_sagnac(
        &sandwich(l_max, alpha, dp, Direction::A)?,
        &sandwich(l_max, alpha, dp, Direction::B)?,
    )
}

/// Baseline: a lone Dove prism in the PBS Sagnac, no wave plates.
pub fn bare_dp_sagnac(l_max: u32, alpha: f64, dp: &DpParams) -> Result<TransferOperator> {
    check_tied("bare Sagnac prism angle", alpha, dp.alpha)?;
    pbs_sagnac(
        &dove_prism(l_max, dp, Direction::A)?,
        &dove_prism(l_max, dp, Direction::B)?,
    )
}

/// Wave plate angle of the compensation stage that exchanges the second
/// prism's parallel and perpendicular axes with H and V for every `alpha`.
/// Equals `-alpha/2` at `alpha = pi/4`.
pub fn compensation_hwp_angle(alpha: f64) -> f64 {
    alpha / 2.0 - FRAC_PI_4
}

/// Full parameter set of a phase manipulation module.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmmSettings {
    pub alpha: f64,
    pub dp1: DpParams,
    pub dp2: DpParams,
    /// Fast-axis angles of HWP1..HWP4.
    pub hwp: [f64; 4],
}

impl PmmSettings {
    /// Tied defaults: HWP1 = HWP2 = alpha/2 around DP1, HWP3 = HWP4 =
    /// `compensation_hwp_angle(alpha)` around DP2.
    pub fn new(alpha: f64, dp1: DpParams, dp2: DpParams) -> Result<Self> {
        check_tied("DP1 angle", alpha, dp1.alpha)?;
        check_tied("DP2 angle", alpha, dp2.alpha)?;
        let t = compensation_hwp_angle(alpha);
        Ok(PmmSettings {
            alpha,
            dp1,
            dp2,
            hwp: [alpha / 2.0, alpha / 2.0, t, t],
        })
    }

    pub fn ideal(alpha: f64) -> Self {
        Self::new(alpha, DpParams::ideal(alpha), DpParams::ideal(alpha)).expect("tied by construction")
    }

    /// Overrides the wave plate angles; meant for error studies.
    pub fn with_hwp(self, hwp: [f64; 4]) -> Self {
        PmmSettings { hwp, ..self }
    }

    /// Moves both prisms (not the wave plates) to new angles.
    pub fn with_dp_angles(self, dp1_alpha: f64, dp2_alpha: f64) -> Self {
        PmmSettings {
            dp1: self.dp1.with_alpha(dp1_alpha),
            dp2: self.dp2.with_alpha(dp2_alpha),
            ..self
        }
    }

    /// Polarization block of mode `l`: the same element chain as `build`,
    /// evaluated on a single mode. Every element preserves `l`, so this
    /// equals `build(L)?.mode_block(l)` for any `L >= |l|` at a fraction of
    /// the cost.
    pub fn mode_block(&self, l: i32) -> Result<Jones> {
        self.dp1.validate()?;
        self.dp2.validate()?;
        for t in self.hwp {
            if !t.is_finite() {
                return Err(Error::NonFinite { name: "theta", value: t });
            }
        }
        let [t1, t2, t3, t4] = self.hwp;
        let hwp = |t: f64, d: Direction| half_wave_plate_jones(d.effective(t));
        // products read right to left in propagation order
        let inner = |d: Direction| hwp(t2, d) * dove_prism_block(&self.dp1, d, l) * hwp(t1, d);
        let (a, b) = (inner(Direction::A), inner(Direction::B));
        let zero = Complex64::new(0.0, 0.0);
        let loop_block = Jones::new(a[(0, 0)], zero, zero, b[(1, 1)]);
        Ok(hwp(t4, Direction::A) * dove_prism_after_inversion_block(&self.dp2, l) * hwp(t3, Direction::A) * loop_block)
    }

    pub fn build(&self, l_max: u32) -> Result<TransferOperator> {
        let [t1, t2, t3, t4] = self.hwp;
        let loop_op = pbs_sagnac(
            &sandwich_with(l_max, t1, &self.dp1, t2, Direction::A)?,
            &sandwich_with(l_max, t1, &self.dp1, t2, Direction::B)?,
        )?;
        compose(
            l_max,
            &[
                loop_op,
                half_wave_plate(l_max, t3, Direction::A)?,
                dove_prism_after_inversion(l_max, &self.dp2)?,
                half_wave_plate(l_max, t4, Direction::A)?,
            ],
        )
    }
}

/// The phase manipulation module. On `sum_l (H + V)|l>` it produces
/// `sqrt(t_par t_perp) e^{i dphi} sum_l (H + e^{-i4la} V)|l>`.
pub fn pmm(l_max: u32, alpha: f64, dp1: &DpParams, dp2: &DpParams) -> Result<TransferOperator> {
    PmmSettings::new(alpha, *dp1, *dp2)?.build(l_max)
}

/// Second cascade stage: a QWP at zero (pi/2 on V) followed by a PMM at the
/// prisms' common angle (pi/8 by default). The relative V phase on mode `l`
/// becomes `i e^{-i4la}`.
pub fn pmm2_stage(l_max: u32, dp3: &DpParams, dp4: &DpParams) -> Result<TransferOperator> {
    check_tied("DP3/DP4 angle", dp3.alpha, dp4.alpha)?;
    compose(l_max, &[quarter_wave_plate(l_max, 0.0)?, pmm(l_max, dp3.alpha, dp3, dp4)?])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Port {
    Port1,
    Port2,
}

impl Port {
    /// Polarization leaving the analysis PBS through this port.
    pub fn polarization(self) -> Polarization {
        match self {
            Port::Port1 => Polarization::V,
            Port::Port2 => Polarization::H,
        }
    }

    pub fn other(self) -> Port {
        match self {
            Port::Port1 => Port::Port2,
            Port::Port2 => Port::Port1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PortIntensities {
    pub port1: f64,
    pub port2: f64,
}

impl PortIntensities {
    pub fn get(&self, port: Port) -> f64 {
        match port {
            Port::Port1 => self.port1,
            Port::Port2 => self.port2,
        }
    }

    pub fn total(&self) -> f64 {
        self.port1 + self.port2
    }

    /// Port holding the larger intensity (port 1 on ties).
    pub fn brighter(&self) -> Port {
        if self.port2 > self.port1 {
            Port::Port2
        } else {
            Port::Port1
        }
    }
}

/// Detection module: an analyzer HWP followed by a PBS with a power meter
/// on each output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PortMap {
    pub theta: f64,
}

impl Default for PortMap {
    fn default() -> Self {
        PortMap { theta: DETECTION_THETA }
    }
}

pub fn detection(theta: f64) -> PortMap {
    PortMap { theta }
}

impl PortMap {
    /// Operator taking the input field to the field leaving `port`.
    pub fn projector(&self, l_max: u32, port: Port) -> Result<TransferOperator> {
        half_wave_plate(l_max, self.theta, Direction::A)?.then(&polarizer(l_max, port.polarization()))
    }

    pub fn project(&self, state: &HybridState, port: Port) -> Result<HybridState> {
        self.projector(state.l_max(), port)?.apply(state)
    }

    /// Port readings for a single mode whose polarization amplitudes are `(h, v)`.
    pub fn block_intensities(&self, h: Complex64, v: Complex64) -> PortIntensities {
        let out = half_wave_plate_jones(self.theta) * Vector2::new(h, v);
        let pick = |p: Port| out[p.polarization().index()].norm_sqr();
        PortIntensities {
            port1: pick(Port::Port1),
            port2: pick(Port::Port2),
        }
    }

    pub fn intensities(&self, state: &HybridState) -> Result<PortIntensities> {
        Ok(PortIntensities {
            port1: self.project(state, Port::Port1)?.norm_sqr(),
            port2: self.project(state, Port::Port2)?.norm_sqr(),
        })
    }

    /// Inter-stage selection: keep only `port`, then re-prepare its light in
    /// the diagonal polarization `(H + V)/sqrt 2` for the next stage. Lossy.
    pub fn selection(&self, l_max: u32, port: Port) -> Result<TransferOperator> {
        // HWP(pi/8) maps H to diagonal, HWP(3pi/8) maps V to diagonal
        let reprep = match port {
            Port::Port1 => 3.0 * FRAC_PI_8,
            Port::Port2 => FRAC_PI_8,
        };
        self.projector(l_max, port)?
            .then(&half_wave_plate(l_max, reprep, Direction::A)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stage {
    Operator(TransferOperator),
    Select { ports: PortMap, port: Port },
}

/// Chains stages in propagation order. A port selection may sit between
/// operators but two selections may not follow each other.
pub fn cascade(l_max: u32, stages: &[Stage]) -> Result<TransferOperator> {
    let mut acc = TransferOperator::identity(l_max);
    let mut last_was_select = false;
    for stage in stages {
        let op = match stage {
            Stage::Operator(op) => {
                last_was_select = false;
                op.clone()
            }
            Stage::Select { ports, port } => {
                if last_was_select {
                    return Err(Error::InvalidParameter(
                        "consecutive port selections in cascade".into(),
                    ));
                }
                last_was_select = true;
                ports.selection(l_max, *port)?
            }
        };
        acc = acc.then(&op)?;
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CircuitKind {
    Sandwich,
    BareDpSagnac,
    SandwichSagnac,
    Pmm,
    Pmm2Stage,
    Detection,
    CustomSequence,
}

impl CircuitKind {
    pub fn name(self) -> &'static str {
        match self {
            CircuitKind::Sandwich => "sandwich",
            CircuitKind::BareDpSagnac => "bare_dp_sagnac",
            CircuitKind::SandwichSagnac => "sandwich_sagnac",
            CircuitKind::Pmm => "pmm",
            CircuitKind::Pmm2Stage => "pmm2_stage",
            CircuitKind::Detection => "detection",
            CircuitKind::CustomSequence => "custom_sequence",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            CircuitKind::Sandwich,
            CircuitKind::BareDpSagnac,
            CircuitKind::SandwichSagnac,
            CircuitKind::Pmm,
            CircuitKind::Pmm2Stage,
            CircuitKind::Detection,
            CircuitKind::CustomSequence,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// One step of a custom sequence. Prism-bearing items take their optical
/// constants from the circuit's DP1 parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum SequenceItem {
    Hwp { theta: f64, direction: Direction },
    Qwp { theta: f64 },
    Dp { alpha: f64, direction: Direction },
    Sandwich { alpha: f64, direction: Direction },
    BareSagnac { alpha: f64 },
    SandwichSagnac { alpha: f64 },
    Pmm { alpha: f64 },
    Pmm2,
    Select { port: Port, theta: f64 },
}

/// Declarative circuit description, resolved to an operator by `build`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitSpec {
    pub kind: CircuitKind,
    pub l_max: u32,
    pub alpha: f64,
    pub dp1: DpParams,
    pub dp2: DpParams,
    /// Explicit HWP1..HWP4 angles; `None` keeps the tied default.
    pub hwp_overrides: [Option<f64>; 4],
    /// Traversal direction for a standalone sandwich.
    pub direction: Direction,
    pub detection_theta: f64,
    pub sequence: Vec<SequenceItem>,
}

impl CircuitSpec {
    pub fn new(kind: CircuitKind, l_max: u32, alpha: f64) -> Self {
        CircuitSpec {
            kind,
            l_max,
            alpha,
            dp1: DpParams::ideal(alpha),
            dp2: DpParams::ideal(alpha),
            hwp_overrides: [None; 4],
            direction: Direction::A,
            detection_theta: DETECTION_THETA,
            sequence: Vec::new(),
        }
    }

    pub fn pmm_settings(&self) -> Result<PmmSettings> {
        let base = PmmSettings::new(self.alpha, self.dp1.with_alpha(self.alpha), self.dp2.with_alpha(self.alpha))?;
        let mut hwp = base.hwp;
        for (slot, o) in hwp.iter_mut().zip(self.hwp_overrides) {
            if let Some(t) = o {
                *slot = t;
            }
        }
        Ok(base.with_hwp(hwp))
    }

    /// Resolved HWP1..HWP4 angles (tied defaults unless overridden).
    pub fn hwp_angles(&self) -> [f64; 4] {
        let t = compensation_hwp_angle(self.alpha);
        let defaults = [self.alpha / 2.0, self.alpha / 2.0, t, t];
        let mut out = defaults;
        for (slot, o) in out.iter_mut().zip(self.hwp_overrides) {
            if let Some(v) = o {
                *slot = v;
            }
        }
        out
    }

    pub fn detection(&self) -> PortMap {
        detection(self.detection_theta)
    }

    pub fn build(&self) -> Result<TransferOperator> {
        let l_max = self.l_max;
        let dp1 = self.dp1.with_alpha(self.alpha);
        match self.kind {
            CircuitKind::Sandwich => {
                let [t1, t2, _, _] = self.hwp_angles();
                sandwich_with(l_max, t1, &dp1, t2, self.direction)
            }
            CircuitKind::BareDpSagnac => bare_dp_sagnac(l_max, self.alpha, &dp1),
            CircuitKind::SandwichSagnac => {
                let [t1, t2, _, _] = self.hwp_angles();
                pbs_sagnac(
                    &sandwich_with(l_max, t1, &dp1, t2, Direction::A)?,
                    &sandwich_with(l_max, t1, &dp1, t2, Direction::B)?,
                )
            }
            CircuitKind::Pmm => self.pmm_settings()?.build(l_max),
            CircuitKind::Pmm2Stage => {
                let qwp = quarter_wave_plate(l_max, 0.0)?;
                compose(l_max, &[qwp, self.pmm_settings()?.build(l_max)?])
            }
            CircuitKind::Detection => Ok(TransferOperator::identity(l_max)),
            CircuitKind::CustomSequence => self.build_sequence(),
        }
    }

    fn build_sequence(&self) -> Result<TransferOperator> {
        let l_max = self.l_max;
        let mut stages = Vec::with_capacity(self.sequence.len());
        for item in &self.sequence {
            let op = match *item {
                SequenceItem::Hwp { theta, direction } => half_wave_plate(l_max, theta, direction)?,
                SequenceItem::Qwp { theta } => quarter_wave_plate(l_max, theta)?,
                SequenceItem::Dp { alpha, direction } => dove_prism(l_max, &self.dp1.with_alpha(alpha), direction)?,
                SequenceItem::Sandwich { alpha, direction } => {
                    sandwich(l_max, alpha, &self.dp1.with_alpha(alpha), direction)?
                }
                SequenceItem::BareSagnac { alpha } => bare_dp_sagnac(l_max, alpha, &self.dp1.with_alpha(alpha))?,
                SequenceItem::SandwichSagnac { alpha } => sandwich_sagnac(l_max, alpha, &self.dp1.with_alpha(alpha))?,
                SequenceItem::Pmm { alpha } => pmm(
                    l_max,
                    alpha,
                    &self.dp1.with_alpha(alpha),
                    &self.dp2.with_alpha(alpha),
                )?,
                SequenceItem::Pmm2 => pmm2_stage(
                    l_max,
                    &self.dp1.with_alpha(PMM2_ALPHA),
                    &self.dp2.with_alpha(PMM2_ALPHA),
                )?,
                SequenceItem::Select { port, theta } => {
                    stages.push(Stage::Select {
                        ports: detection(theta),
                        port,
                    });
                    continue;
                }
            };
            stages.push(Stage::Operator(op));
        }
        cascade(l_max, &stages)
    }
}

/// Closed-form PMM output amplitude on `(pol, l)` for the input `|pol>|l>`.
pub fn pmm_closed_form(dp: &DpParams, alpha: f64, pol: Polarization, l: i32) -> Complex64 {
    let common = Complex64::from_polar((dp.t_par * dp.t_perp).sqrt(), dp.delta_phi);
    match pol {
        Polarization::H => common,
        Polarization::V => common * Complex64::from_polar(1.0, -4.0 * l as f64 * alpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{modes, Jones};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag_h_plus_v(l_max: u32, oam: &[i32]) -> HybridState {
        let one = c(1.0, 0.0);
        let amps: Vec<_> = oam.iter().map(|&l| (l, one)).collect();
        HybridState::product(l_max, [one, one], &amps).unwrap().normalize().unwrap()
    }

    fn random_dp(rng: &mut ChaCha8Rng, alpha: f64) -> DpParams {
        DpParams::new(
            rng.gen_range(0.05..=1.0),
            rng.gen_range(0.05..=1.0),
            rng.gen_range(-PI..PI),
            alpha,
        )
        .unwrap()
    }

    /// min over global phase of ||a - e^{ip} b|| for normalized a, b
    fn aligned_distance(a: &HybridState, b: &HybridState) -> f64 {
        let a = a.normalize().unwrap();
        let b = b.normalize().unwrap();
        let ov = b.inner(&a).unwrap();
        let phase = ov / ov.norm();
        (a.amplitudes() - b.amplitudes() * phase).norm()
    }

    #[test]
    fn sandwich_on_v_at_quarter_pi() {
        let op = sandwich(1, FRAC_PI_4, &DpParams::ideal(FRAC_PI_4), Direction::A).unwrap();
        let out = op.apply(&HybridState::basis(1, Polarization::V, 1).unwrap()).unwrap();
        assert!((out.amplitude(Polarization::V, 1) - c(0.0, 1.0)).norm() < 1e-15);
        assert!(out.amplitude(Polarization::H, 1).norm() < 1e-15);
    }

    #[test]
    fn unrotated_sandwich_is_the_bare_transmission() {
        let dp = DpParams::new(0.7, 0.5, 0.9, 0.0).unwrap();
        let op = sandwich(2, 0.0, &dp, Direction::A).unwrap();
        let want = Jones::new(c(0.7f64.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(0.5f64.sqrt(), 0.9));
        for l in modes(2) {
            let b = op.mode_block(l).unwrap();
            assert!((b - want).iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn sandwich_moduli_match_transmissions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let alpha = rng.gen_range(-PI..PI);
            let dp = random_dp(&mut rng, alpha);
            for dir in [Direction::A, Direction::B] {
                let op = sandwich(3, alpha, &dp, dir).unwrap();
                for l in modes(3) {
                    let b = op.mode_block(l).unwrap();
                    let a = dir.effective(alpha);
                    let phase = Complex64::from_polar(1.0, 2.0 * l as f64 * a);
                    assert!((b[(0, 0)] - phase * dp.t_par.sqrt()).norm() < 1e-12);
                    assert!((b[(1, 1)] - phase * Complex64::from_polar(dp.t_perp.sqrt(), dp.delta_phi)).norm() < 1e-12);
                    assert!(b[(0, 1)].norm() < 1e-12 && b[(1, 0)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sandwich_rejects_untied_angles() {
        let err = sandwich(1, 0.3, &DpParams::ideal(0.2), Direction::A).unwrap_err();
        assert!(matches!(err, Error::AngleMismatch { .. }));
        assert!(pmm(1, 0.3, &DpParams::ideal(0.3), &DpParams::ideal(0.31)).is_err());
    }

    #[test]
    fn sagnac_of_identities_is_identity() {
        let i = TransferOperator::identity(2);
        assert_eq!(pbs_sagnac(&i, &i).unwrap(), i);
        assert!(pbs_sagnac(&i, &TransferOperator::identity(1)).is_err());
    }

    #[test]
    fn sandwich_sagnac_reproduces_loop_output() {
        // sum_l e^{i2la} (sqrt(t_par) H + e^{-i4la} e^{i dphi} sqrt(t_perp) V)|l>
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let alpha = rng.gen_range(-PI..PI);
            let dp = random_dp(&mut rng, alpha);
            let op = sandwich_sagnac(4, alpha, &dp).unwrap();
            for l in modes(4) {
                let b = op.mode_block(l).unwrap();
                let g = Complex64::from_polar(1.0, 2.0 * l as f64 * alpha);
                let v = Complex64::from_polar(dp.t_perp.sqrt(), dp.delta_phi - 4.0 * l as f64 * alpha);
                assert!((b[(0, 0)] - g * dp.t_par.sqrt()).norm() < 1e-12);
                assert!((b[(1, 1)] - g * v).norm() < 1e-12);
                if l == 0 {
                    // no OAM phase: H and V differ only by the prism's own constants
                    assert!((b[(0, 0)] - c(dp.t_par.sqrt(), 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pmm_flips_v_sign_for_l1_at_quarter_pi() {
        let op = pmm(1, FRAC_PI_4, &DpParams::ideal(FRAC_PI_4), &DpParams::ideal(FRAC_PI_4)).unwrap();
        let out = op.apply(&diag_h_plus_v(1, &[1])).unwrap();
        let h = out.amplitude(Polarization::H, 1);
        let v = out.amplitude(Polarization::V, 1);
        assert!((v + h).norm() < 1e-15);
        assert!((h.norm() - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn pmm_leaves_l0_polarization_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let alpha = rng.gen_range(-PI..PI);
            let dp = random_dp(&mut rng, alpha);
            let op = pmm(0, alpha, &dp, &dp).unwrap();
            let input = diag_h_plus_v(0, &[0]);
            assert!(aligned_distance(&op.apply(&input).unwrap(), &input) < 1e-12);
        }
    }

    #[test]
    fn pmm_output_direction_is_independent_of_prism_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alpha = 0.37;
        let input = diag_h_plus_v(5, &[-5, -2, 0, 1, 3, 4]);
        let reference = pmm(5, alpha, &DpParams::ideal(alpha), &DpParams::ideal(alpha))
            .unwrap()
            .apply(&input)
            .unwrap();
        for _ in 0..100 {
            let dp = random_dp(&mut rng, alpha);
            let out = pmm(5, alpha, &dp, &dp).unwrap().apply(&input).unwrap();
            assert!(aligned_distance(&out, &reference) < 1e-10);
        }
    }

    #[test]
    fn pmm_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let alpha = rng.gen_range(-PI..PI);
            let dp = random_dp(&mut rng, alpha);
            let l = rng.gen_range(-10..=10);
            let op = pmm(10, alpha, &dp, &dp).unwrap();
            let b = op.mode_block(l).unwrap();
            assert!((b[(0, 0)] - pmm_closed_form(&dp, alpha, Polarization::H, l)).norm() < 1e-12);
            assert!((b[(1, 1)] - pmm_closed_form(&dp, alpha, Polarization::V, l)).norm() < 1e-12);
            assert!(b[(0, 1)].norm() < 1e-12 && b[(1, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn bare_sagnac_reproduces_baseline_outputs() {
        let a = FRAC_PI_4;
        let op = bare_dp_sagnac(2, a, &DpParams::ideal(a)).unwrap();
        // (H+V)(|1>+|-1>) -> i (H-V)(|1>-|-1>)
        let out = op.apply(&diag_h_plus_v(2, &[1, -1])).unwrap();
        let half = c(0.5, 0.0);
        let want = HybridState::from_entries(
            2,
            &[
                (Polarization::H, 1, half),
                (Polarization::H, -1, -half),
                (Polarization::V, 1, -half),
                (Polarization::V, -1, half),
            ],
        )
        .unwrap();
        assert!(aligned_distance(&out, &want) < 1e-12);
        assert!(out.inner(&want).unwrap().norm() > 1.0 - 1e-12);
        // (H+V)(|2>+|-2>) is preserved
        let input = diag_h_plus_v(2, &[2, -2]);
        assert!(aligned_distance(&op.apply(&input).unwrap(), &input) < 1e-12);
    }

    #[test]
    fn bare_sagnac_depends_on_retardance() {
        let alpha = FRAC_PI_8;
        let input = diag_h_plus_v(3, &[0, 1, 2, 3]);
        let base = bare_dp_sagnac(3, alpha, &DpParams::ideal(alpha)).unwrap().apply(&input).unwrap();
        let shifted = bare_dp_sagnac(3, alpha, &DpParams::new(1.0, 1.0, FRAC_PI_4, alpha).unwrap())
            .unwrap()
            .apply(&input)
            .unwrap();
        assert!(aligned_distance(&base, &shifted) > 0.01);

        let p0 = pmm(3, alpha, &DpParams::ideal(alpha), &DpParams::ideal(alpha)).unwrap().apply(&input).unwrap();
        let dp = DpParams::new(1.0, 1.0, FRAC_PI_4, alpha).unwrap();
        let p1 = pmm(3, alpha, &dp, &dp).unwrap().apply(&input).unwrap();
        assert!(aligned_distance(&p0, &p1) < 1e-10);
    }

    #[test]
    fn detection_ports() {
        let ports = detection(DETECTION_THETA);
        let plus = diag_h_plus_v(2, &[-2, 0, 1]);
        let i = ports.intensities(&plus).unwrap();
        assert!((i.port2 - 1.0).abs() < 1e-15 && i.port1 < 1e-30);

        let s = c(FRAC_1_SQRT_2, 0.0);
        let minus = HybridState::from_entries(2, &[(Polarization::H, 1, s), (Polarization::V, 1, -s)]).unwrap();
        let i = ports.intensities(&minus).unwrap();
        assert!((i.port1 - 1.0).abs() < 1e-15 && i.port2 < 1e-30);

        let direct = detection(0.0);
        let st = HybridState::from_entries(1, &[(Polarization::H, 0, c(0.6, 0.0)), (Polarization::V, 1, c(0.0, 0.8))]).unwrap();
        let i = direct.intensities(&st).unwrap();
        assert!((i.port2 - 0.36).abs() < 1e-15 && (i.port1 - 0.64).abs() < 1e-15);
    }

    #[test]
    fn parity_law_at_quarter_pi() {
        let op = pmm(5, FRAC_PI_4, &DpParams::ideal(FRAC_PI_4), &DpParams::ideal(FRAC_PI_4)).unwrap();
        let ports = PortMap::default();
        for l in -5..=5 {
            let i = ports.intensities(&op.apply(&diag_h_plus_v(5, &[l])).unwrap()).unwrap();
            let (bright, dark) = if l % 2 == 0 { (i.port2, i.port1) } else { (i.port1, i.port2) };
            assert!((bright - 1.0).abs() < 1e-12, "l = {l}");
            assert!(dark < 1e-12, "l = {l}");
        }
    }

    fn pmm2_relative_phase(l: i32) -> Complex64 {
        let op = pmm2_stage(7, &DpParams::ideal(PMM2_ALPHA), &DpParams::ideal(PMM2_ALPHA)).unwrap();
        let out = op.apply(&diag_h_plus_v(7, &[l])).unwrap();
        out.amplitude(Polarization::V, l) / out.amplitude(Polarization::H, l)
    }

    #[test]
    fn pmm2_stage_separates_mod_four_classes() {
        // i e^{-i l pi/2}: +1 for l = 1 mod 4, -1 for l = 3 mod 4
        for l in [1, 5, -3, -7] {
            assert!((pmm2_relative_phase(l) - c(1.0, 0.0)).norm() < 1e-12, "l = {l}");
        }
        for l in [3, 7, -1, -5] {
            assert!((pmm2_relative_phase(l) + c(1.0, 0.0)).norm() < 1e-12, "l = {l}");
        }
    }

    #[test]
    fn cascade_single_stage_and_selection() {
        let p = pmm(2, FRAC_PI_4, &DpParams::ideal(FRAC_PI_4), &DpParams::ideal(FRAC_PI_4)).unwrap();
        assert_eq!(cascade(2, &[Stage::Operator(p.clone())]).unwrap(), p);

        let i = TransferOperator::identity(2);
        let chain = cascade(
            2,
            &[
                Stage::Operator(i.clone()),
                Stage::Select { ports: detection(0.0), port: Port::Port2 },
                Stage::Operator(i.clone()),
            ],
        )
        .unwrap();
        let v = HybridState::basis(2, Polarization::V, 1).unwrap();
        assert!(chain.apply(&v).unwrap().norm_sqr() < 1e-30);

        let sel = Stage::Select { ports: PortMap::default(), port: Port::Port1 };
        assert!(cascade(2, &[sel.clone(), sel]).is_err());
    }

    #[test]
    fn two_stage_cascade_sorts_by_mod_four() {
        let l_max = 5;
        let dp1 = DpParams::ideal(FRAC_PI_4);
        let dp3 = DpParams::ideal(PMM2_ALPHA);
        let chain = cascade(
            l_max,
            &[
                Stage::Operator(pmm(l_max, FRAC_PI_4, &dp1, &dp1).unwrap()),
                Stage::Select { ports: PortMap::default(), port: Port::Port1 },
                Stage::Operator(pmm2_stage(l_max, &dp3, &dp3).unwrap()),
            ],
        )
        .unwrap();
        let ports = PortMap::default();
        for l in -5..=5 {
            let out = chain.apply(&diag_h_plus_v(l_max, &[l])).unwrap();
            let i = ports.intensities(&out).unwrap();
            match l.rem_euclid(4) {
                0 | 2 => assert!(i.total() < 1e-24, "even l = {l} leaked"),
                1 => assert!((i.port2 - 1.0).abs() < 1e-12 && i.port1 < 1e-24, "l = {l}"),
                _ => assert!((i.port1 - 1.0).abs() < 1e-12 && i.port2 < 1e-24, "l = {l}"),
            }
        }
    }

    #[test]
    fn lossless_cascade_conserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let alpha = rng.gen_range(-PI..PI);
            let dp = DpParams::new(1.0, 1.0, rng.gen_range(-PI..PI), alpha).unwrap();
            let ops = [
                pmm(3, alpha, &dp, &dp).unwrap(),
                sandwich_sagnac(3, alpha, &dp).unwrap(),
                bare_dp_sagnac(3, alpha, &dp).unwrap(),
                pmm2_stage(3, &dp.with_alpha(PMM2_ALPHA), &dp.with_alpha(PMM2_ALPHA)).unwrap(),
            ];
            let stages: Vec<_> = ops.iter().take(2).cloned().map(Stage::Operator).collect();
            let chain = cascade(3, &stages).unwrap();
            assert!(chain.is_unitary(1e-10));
            assert!(ops[0].is_unitary(1e-10) && ops[1].is_unitary(1e-10) && ops[3].is_unitary(1e-10));
            let input = diag_h_plus_v(3, &[-3, -1, 2]);
            assert!((chain.apply(&input).unwrap().norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_block_matches_full_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let alpha = rng.gen_range(-PI..PI);
            let s = PmmSettings::new(alpha, random_dp(&mut rng, alpha), random_dp(&mut rng, alpha))
                .unwrap()
                .with_hwp([0; 4].map(|_| rng.gen_range(-PI..PI)))
                .with_dp_angles(alpha + rng.gen_range(-0.1..0.1), alpha + rng.gen_range(-0.1..0.1));
            let op = s.build(4).unwrap();
            for l in -4..=4 {
                let diff = (s.mode_block(l).unwrap() - op.mode_block(l).unwrap()).norm();
                assert!(diff < 1e-14, "l = {l}: {diff}");
            }
            let out = op.apply(&diag_h_plus_v(4, &[3])).unwrap();
            let full = PortMap::default().intensities(&out).unwrap();
            let [h, v] = out.polarization_at(3);
            let block = PortMap::default().block_intensities(h, v);
            assert!((full.port1 - block.port1).abs() < 1e-15 && (full.port2 - block.port2).abs() < 1e-15);
        }
    }

    #[test]
    fn spec_defaults_and_overrides() {
        let mut spec = CircuitSpec::new(CircuitKind::Pmm, 3, FRAC_PI_4);
        let [t1, t2, t3, t4] = spec.hwp_angles();
        assert_eq!((t1, t2), (FRAC_PI_8, FRAC_PI_8));
        assert!((t3 + FRAC_PI_8).abs() < 1e-15 && (t4 + FRAC_PI_8).abs() < 1e-15);
        let direct = pmm(3, FRAC_PI_4, &DpParams::ideal(FRAC_PI_4), &DpParams::ideal(FRAC_PI_4)).unwrap();
        assert_eq!(spec.build().unwrap(), direct);
        spec.hwp_overrides[2] = Some(0.0);
        assert_eq!(spec.hwp_angles()[2], 0.0);
        assert_ne!(spec.build().unwrap(), direct);
        assert_eq!(CircuitKind::from_name("pmm2_stage"), Some(CircuitKind::Pmm2Stage));
        assert_eq!(CircuitKind::from_name("mzi"), None);
    }

    #[test]
    fn custom_sequence_matches_direct_cascade() {
        let mut spec = CircuitSpec::new(CircuitKind::CustomSequence, 5, FRAC_PI_4);
        spec.sequence = vec![
            SequenceItem::Pmm { alpha: FRAC_PI_4 },
            SequenceItem::Select { port: Port::Port1, theta: DETECTION_THETA },
            SequenceItem::Pmm2,
        ];
        let dp1 = DpParams::ideal(FRAC_PI_4);
        let dp3 = DpParams::ideal(PMM2_ALPHA);
        let direct = cascade(
            5,
            &[
                Stage::Operator(pmm(5, FRAC_PI_4, &dp1, &dp1).unwrap()),
                Stage::Select { ports: PortMap::default(), port: Port::Port1 },
                Stage::Operator(pmm2_stage(5, &dp3, &dp3).unwrap()),
            ],
        )
        .unwrap();
        assert!(spec.build().unwrap().max_distance(&direct).unwrap() < 1e-15);
    }
}
