//! Rotation-error law and Monte-Carlo error sweeps.
//!
//! A DP rotation error `delta` turns the module's output polarization into
//! `H + e^{-i4l(alpha+delta)} V`, so the parity-filter sorting fidelity at
//! `alpha = pi/4` drops to `(1 + cos 4 l delta) / 2`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use nalgebra::Vector2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::fidelity::{diagonal_input, port_sorting_fidelity, FidelityReport, SampleSummary};
use crate::circuits::{Port, PortMap, PmmSettings};
use crate::error::{Error, Result};

/// Closed form `(1 + cos 4 l delta) / 2`.
pub fn rotation_error_fidelity(l: i32, delta: f64) -> f64 {
    (1.0 + (4.0 * l as f64 * delta).cos()) / 2.0
}

/// Sorting fidelity of mode `l` through a PMM whose prisms sit at
/// `settings.alpha + offsets`, read by the default detection module. The
/// circuit is built at the smallest truncation holding `l`.
pub fn simulated_sorting_fidelity(settings: &PmmSettings, l: i32) -> Result<f64> {
    let l_max = l.unsigned_abs();
    let op = settings.build(l_max)?;
    let out = op.apply(&diagonal_input(l_max, l)?)?;
    port_sorting_fidelity(&PortMap::default().intensities(&out)?)
}

/// Full-circuit counterpart of `rotation_error_fidelity`: ideal prisms at
/// `pi/4 + delta`, wave plates at their nominal angles.
pub fn simulated_rotation_error_fidelity(l: i32, delta: f64) -> Result<f64> {
    let nominal = PmmSettings::ideal(FRAC_PI_4);
    simulated_sorting_fidelity(&nominal.with_dp_angles(FRAC_PI_4 + delta, FRAC_PI_4 + delta), l)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    Dp1,
    Dp2,
    Hwp1,
    Hwp2,
    Hwp3,
    Hwp4,
}

impl Element {
    pub const ALL: [Element; 6] = [
        Element::Dp1,
        Element::Dp2,
        Element::Hwp1,
        Element::Hwp2,
        Element::Hwp3,
        Element::Hwp4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Element::Dp1 => "dp1",
            Element::Dp2 => "dp2",
            Element::Hwp1 => "hwp1",
            Element::Hwp2 => "hwp2",
            Element::Hwp3 => "hwp3",
            Element::Hwp4 => "hwp4",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorDistribution {
    /// The bound itself is the error.
    Fixed,
    /// Uniform on `[-bound, bound]`.
    Uniform,
}

/// Angular error model of the module's rotators.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorModel {
    /// Lumped error applied to both prisms, radians.
    pub delta: f64,
    /// Per-element bounds; when present the lumped `delta` is ignored.
    pub per_element: Option<BTreeMap<Element, f64>>,
    pub distribution: ErrorDistribution,
}

impl ErrorModel {
    pub fn lumped_fixed(delta: f64) -> Self {
        ErrorModel {
            delta,
            per_element: None,
            distribution: ErrorDistribution::Fixed,
        }
    }

    pub fn lumped_uniform(bound: f64) -> Self {
        ErrorModel {
            delta: bound,
            per_element: None,
            distribution: ErrorDistribution::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bounds = vec![("delta", self.delta)];
        if let Some(map) = &self.per_element {
            bounds.extend(map.iter().map(|(e, &b)| (e.name(), b)));
        }
        for (name, b) in bounds {
            if !b.is_finite() {
                return Err(Error::NonFinite { name: "error bound", value: b });
            }
            if self.distribution == ErrorDistribution::Uniform && b < 0.0 {
                return Err(Error::InvalidParameter(format!("uniform bound for {name} is negative: {b}")));
            }
        }
        Ok(())
    }

    fn draw(&self, bound: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self.distribution {
            ErrorDistribution::Fixed => bound,
            ErrorDistribution::Uniform if bound == 0.0 => 0.0,
            ErrorDistribution::Uniform => rng.gen_range(-bound..=bound),
        }
    }

    /// One draw of per-element angular offsets, in `Element::ALL` order.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 6] {
        let mut out = [0.0; 6];
        match &self.per_element {
            None => {
                let d = self.draw(self.delta, rng);
                out[0] = d;
                out[1] = d;
            }
            Some(map) => {
                for (slot, e) in out.iter_mut().zip(Element::ALL) {
                    *slot = self.draw(map.get(&e).copied().unwrap_or(0.0), rng);
                }
            }
        }
        out
    }

    /// Nominal settings with one draw of offsets applied.
    pub fn perturb(&self, nominal: &PmmSettings, offsets: &[f64; 6]) -> PmmSettings {
        let mut hwp = nominal.hwp;
        for (h, o) in hwp.iter_mut().zip(&offsets[2..]) {
            *h += o;
        }
        nominal
            .with_dp_angles(nominal.dp1.alpha + offsets[0], nominal.dp2.alpha + offsets[1])
            .with_hwp(hwp)
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Monte-Carlo sorting fidelity of mode `l` around `nominal`. Sample `i`
/// draws from its own ChaCha stream and results are reduced in index order,
/// so the report is bit-identical for a given seed whatever the thread count.
pub fn monte_carlo_fidelity_with(
    nominal: &PmmSettings,
    l: i32,
    model: &ErrorModel,
    samples: usize,
    seed: u64,
) -> Result<FidelityReport> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    model.validate()?;
    let ports = PortMap::default();
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);

    // only mode l matters, so each draw evaluates its 2x2 block
    let draws: Vec<(f64, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let block = model.perturb(nominal, &model.sample(&mut rng)).mode_block(l)?;
            let out = block * Vector2::new(s, s);
            let p = ports.block_intensities(out[0], out[1]);
            Ok((p.port1, p.port2, port_sorting_fidelity(&p)?))
        })
        .collect::<Result<_>>()?;

    let fidelities: Vec<f64> = draws.iter().map(|d| d.2).collect();
    let summary = SampleSummary::from_values(&fidelities);
    let n = samples as f64;
    let p1 = draws.iter().map(|d| d.0).sum::<f64>() / n;
    let p2 = draws.iter().map(|d| d.1).sum::<f64>() / n;
    Ok(FidelityReport {
        port_intensities: BTreeMap::from([(Port::Port1, p1), (Port::Port2, p2)]),
        sorting_fidelity: summary.mean,
        process_fidelity: None,
        samples: Some(summary),
    })
}

/// Monte-Carlo sweep around the ideal parity filter (`alpha = pi/4`).
pub fn monte_carlo_fidelity(l: i32, model: &ErrorModel, samples: usize, seed: u64) -> Result<FidelityReport> {
    monte_carlo_fidelity_with(&PmmSettings::ideal(FRAC_PI_4), l, model, samples, seed)
}
