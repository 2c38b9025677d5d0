use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::circuits::{Port, PortIntensities, PortMap};
use crate::error::{Error, Result};
use crate::state::{HybridState, Polarization, TransferOperator};

/// `I_max / (I_max + I_min)`. The caller orders the intensities.
pub fn sorting_fidelity(i_max: f64, i_min: f64) -> Result<f64> {
    if !(i_max.is_finite() && i_min.is_finite()) || i_min < 0.0 {
        return Err(Error::InvalidIntensities(format!("({i_max}, {i_min})")));
    }
    if i_max < i_min {
        return Err(Error::InvalidIntensities(format!("i_max {i_max} < i_min {i_min}")));
    }
    if i_max == 0.0 {
        return Err(Error::InvalidIntensities("both intensities are zero".into()));
    }
    Ok(i_max / (i_max + i_min))
}

/// Sorting fidelity of a pair of port readings, whichever is brighter.
pub fn port_sorting_fidelity(ports: &PortIntensities) -> Result<f64> {
    let bright = ports.get(ports.brighter());
    let dark = ports.get(ports.brighter().other());
    sorting_fidelity(bright, dark)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub count: usize,
}

impl SampleSummary {
    /// Mean and sample standard deviation, summed in slice order.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return SampleSummary { mean: f64::NAN, std_dev: f64::NAN, count: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_dev = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        SampleSummary { mean, std_dev, count: n }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FidelityReport {
    pub port_intensities: BTreeMap<Port, f64>,
    pub sorting_fidelity: f64,
    pub process_fidelity: Option<f64>,
    pub samples: Option<SampleSummary>,
}

impl FidelityReport {
    pub fn from_ports(ports: &PortIntensities) -> Result<Self> {
        Ok(FidelityReport {
            port_intensities: BTreeMap::from([(Port::Port1, ports.port1), (Port::Port2, ports.port2)]),
            sorting_fidelity: port_sorting_fidelity(ports)?,
            process_fidelity: None,
            samples: None,
        })
    }

    /// Recomputes the sorting fidelity from the stored intensities.
    pub fn recomputed_sorting_fidelity(&self) -> Result<f64> {
        let p1 = self.port_intensities.get(&Port::Port1).copied().unwrap_or(0.0);
        let p2 = self.port_intensities.get(&Port::Port2).copied().unwrap_or(0.0);
        port_sorting_fidelity(&PortIntensities { port1: p1, port2: p2 })
    }
}

/// Diagonal hybrid input `(H + V)/sqrt 2 |l>`.
pub fn diagonal_input(l_max: u32, l: i32) -> Result<HybridState> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    HybridState::from_entries(
        l_max,
        &[
            (Polarization::H, l, Complex64::new(s, 0.0)),
            (Polarization::V, l, Complex64::new(s, 0.0)),
        ],
    )
}

/// Port readings and sorting fidelity of one mode sent through `op` and then
/// the detection module.
pub fn mode_report(op: &TransferOperator, ports: &PortMap, l: i32) -> Result<FidelityReport> {
    let out = op.apply(&diagonal_input(op.l_max(), l)?)?;
    FidelityReport::from_ports(&ports.intensities(&out)?)
}

/// `min_phi || a - e^{i phi} b ||` after normalizing both states.
pub fn phase_aligned_distance(a: &HybridState, b: &HybridState) -> Result<f64> {
    let a = a.normalize()?;
    let b = b.normalize()?;
    // rotate b onto a, then measure directly; sqrt(2 - 2|<a|b>|) loses half the digits
    let ov = b.inner(&a)?;
    let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { Complex64::new(1.0, 0.0) };
    let diff = a.amplitudes() - b.amplitudes() * phase;
    Ok(diff.norm())
}

/// Weight of the OAM superposition `reference` in the state, with the
/// polarization traced out: `<phi| Tr_pol |psi><psi| |phi> / <psi|psi>`.
pub fn oam_overlap(state: &HybridState, reference: &[(i32, Complex64)]) -> Result<f64> {
    let norm_ref: f64 = reference.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt();
    if norm_ref == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let total = state.norm_sqr();
    if total == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut w = 0.0;
    for pol in Polarization::ALL {
        let proj: Complex64 = reference
            .iter()
            .map(|&(l, c)| c.conj() * state.amplitude(pol, l))
            .sum();
        w += proj.norm_sqr();
    }
    Ok(w / (norm_ref * norm_ref * total))
}
