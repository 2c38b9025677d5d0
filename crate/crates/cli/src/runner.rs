//! Executes a parsed scenario and produces its artifacts in memory.
//!
//! Artifacts (all numbers `{:.14e}`, i.e. 15 significant digits):
//!
//! | file | columns |
//! |------|---------|
//! | `{name}_ports.csv` | `l,port1,port2,sorting_fidelity`, one row per input mode plus `all` |
//! | `{name}_fidelity.csv` | `quantity,value` |
//! | `{name}_gate.csv` | `n,d,alpha,process_fidelity,phase_sign,pass` |
//! | `{name}_sweep.csv` | `l,delta_deg,analytic,simulated,abs_diff` |
//! | `{name}_montecarlo.csv` | `l,mean,std_dev,count,port1,port2` |
//! | `{name}_{input,baseline,output,port1,port2}.pgm` | 16-bit graymaps |

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use pmm_core::analysis::{
    cphase_alpha, cphase_target, gate_fidelity, monte_carlo_fidelity_with, oam_overlap, port_sorting_fidelity,
    rotation_error_fidelity, simulated_sorting_fidelity, PhaseSign,
};
use pmm_core::circuits::{CircuitKind, Port};
use pmm_core::render::{intensity_image_channels, pgm_bytes, IntensityImage};
use pmm_core::{HybridState, Polarization, TransferOperator};

use crate::scenario::{Output, Scenario};

/// A port image is rendered dark, and its sorting fidelity reported as NaN,
/// when it carries less than this fraction of the input intensity; below it
/// the numbers are rounding noise.
pub const DARK_PORT_THRESHOLD: f64 = 1e-20;

/// Gate rows pass when the process fidelity is within this of 1.
pub const GATE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("scenario `{scenario}`: {source}")]
    Numerical {
        scenario: String,
        #[source]
        source: pmm_core::Error,
    },
    #[error("scenario `{scenario}`: {message}")]
    Unsupported { scenario: String, message: String },
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub file_name: String,
    pub bytes: Vec<u8>,
}

/// Everything a run produced; `gates_passed` is false if any gate row failed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunReport {
    pub artifacts: Vec<Artifact>,
    pub gates_passed: bool,
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.14e}")
    }
}

struct Ctx<'a> {
    scenario: &'a Scenario,
}

impl Ctx<'_> {
    fn num_err(&self, source: pmm_core::Error) -> RunError {
        RunError::Numerical {
            scenario: self.scenario.name.clone(),
            source,
        }
    }

    fn unsupported(&self, message: impl Into<String>) -> RunError {
        RunError::Unsupported {
            scenario: self.scenario.name.clone(),
            message: message.into(),
        }
    }

    fn artifact(&self, suffix: &str, bytes: Vec<u8>) -> Artifact {
        Artifact {
            file_name: format!("{}_{suffix}", self.scenario.name),
            bytes,
        }
    }

    fn input(&self) -> Result<&HybridState, RunError> {
        self.scenario
            .input
            .as_ref()
            .ok_or_else(|| self.unsupported("this output needs an [input] section"))
    }
}

/// Runs every output the scenario requests.
pub fn run(scenario: &Scenario) -> Result<RunReport, RunError> {
    run_outputs(scenario, &scenario.outputs)
}

/// Runs only `outputs`, in their canonical order.
pub fn run_outputs(scenario: &Scenario, outputs: &[Output]) -> Result<RunReport, RunError> {
    let ctx = Ctx { scenario };
    let mut wanted = outputs.to_vec();
    wanted.sort();
    wanted.dedup();
    let needs_op = wanted
        .iter()
        .any(|o| matches!(o, Output::PortsCsv | Output::Image | Output::Fidelity));
    let op = if needs_op {
        Some(scenario.circuit.build().map_err(|e| ctx.num_err(e))?)
    } else {
        None
    };
    let mut report = RunReport {
        artifacts: Vec::new(),
        gates_passed: true,
    };
    for o in wanted {
        match o {
            Output::PortsCsv => report.artifacts.push(ports_csv(&ctx, op.as_ref().expect("built"))?),
            Output::Image => report.artifacts.extend(images(&ctx, op.as_ref().expect("built"))?),
            Output::Fidelity => report.artifacts.push(fidelity_csv(&ctx, op.as_ref().expect("built"))?),
            Output::GateCheck => {
                let (a, ok) = gate_csv(&ctx)?;
                report.artifacts.push(a);
                report.gates_passed &= ok;
            }
            Output::Sweep => report.artifacts.push(sweep_csv(&ctx)?),
            Output::MonteCarlo => report.artifacts.push(monte_carlo_csv(&ctx)?),
        }
    }
    Ok(report)
}

/// Writes artifacts into `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for a in artifacts {
        let path = dir.join(&a.file_name);
        std::fs::write(&path, &a.bytes).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

/// Modes carrying any input amplitude, ascending.
fn occupied_modes(state: &HybridState) -> Vec<i32> {
    let l_max = state.l_max() as i32;
    (-l_max..=l_max)
        .filter(|&l| Polarization::ALL.iter().any(|&p| state.amplitude(p, l).norm_sqr() > 0.0))
        .collect()
}

fn mode_component(state: &HybridState, l: i32) -> Result<HybridState, pmm_core::Error> {
    let [h, v] = state.polarization_at(l);
    HybridState::from_entries(state.l_max(), &[(Polarization::H, l, h), (Polarization::V, l, v)])?.normalize()
}

/// Sorting fidelity, or NaN when the ports receive (numerically) no light.
fn fidelity_or_nan(ports: &pmm_core::circuits::PortIntensities, reference: f64) -> f64 {
    if ports.total() < DARK_PORT_THRESHOLD * reference {
        return f64::NAN;
    }
    port_sorting_fidelity(ports).unwrap_or(f64::NAN)
}

fn ports_csv(ctx: &Ctx, op: &TransferOperator) -> Result<Artifact, RunError> {
    let input = ctx.input()?;
    let ports = ctx.scenario.circuit.detection();
    let mut out = String::from("l,port1,port2,sorting_fidelity\n");
    let mut row = |label: String, state: &HybridState| -> Result<(), RunError> {
        let i = ports
            .intensities(&op.apply(state).map_err(|e| ctx.num_err(e))?)
            .map_err(|e| ctx.num_err(e))?;
        writeln!(out, "{label},{},{},{}", num(i.port1), num(i.port2), num(fidelity_or_nan(&i, state.norm_sqr()))).expect("string write");
        Ok(())
    };
    for l in occupied_modes(input) {
        let component = mode_component(input, l).map_err(|e| ctx.num_err(e))?;
        row(l.to_string(), &component)?;
    }
    row("all".into(), input)?;
    Ok(ctx.artifact("ports.csv", out.into_bytes()))
}

fn channels(state: &HybridState) -> [Vec<(i32, Complex64)>; 2] {
    [state.oam_amplitudes(Polarization::H), state.oam_amplitudes(Polarization::V)]
}

/// Camera image of `state` with polarization traced out.
fn camera(ctx: &Ctx, state: &HybridState, reference: f64) -> Result<IntensityImage, RunError> {
    let side = ctx.scenario.render.grid.side;
    if state.norm_sqr() < DARK_PORT_THRESHOLD * reference {
        return Ok(IntensityImage::dark(side));
    }
    let [h, v] = channels(state);
    intensity_image_channels(&[&h, &v], &ctx.scenario.render.grid).map_err(|e| ctx.num_err(e))
}

fn images(ctx: &Ctx, op: &TransferOperator) -> Result<Vec<Artifact>, RunError> {
    let input = ctx.input()?;
    let reference = input.norm_sqr();
    let format = ctx.scenario.render.format;
    let mut frames: Vec<(&str, IntensityImage)> = vec![("input", camera(ctx, input, reference)?)];
    if let Some(baseline) = &ctx.scenario.baseline {
        let b = baseline.build().map_err(|e| ctx.num_err(e))?;
        let out = b.apply(input).map_err(|e| ctx.num_err(e))?;
        frames.push(("baseline", camera(ctx, &out, reference)?));
    }
    let out = op.apply(input).map_err(|e| ctx.num_err(e))?;
    frames.push(("output", camera(ctx, &out, reference)?));
    let ports = ctx.scenario.circuit.detection();
    for (name, port) in [("port1", Port::Port1), ("port2", Port::Port2)] {
        let p = ports.project(&out, port).map_err(|e| ctx.num_err(e))?;
        frames.push((name, camera(ctx, &p, reference)?));
    }
    Ok(frames
        .into_iter()
        .map(|(name, img)| ctx.artifact(&format!("{name}.pgm"), pgm_bytes(&img, format)))
        .collect())
}

/// OAM content of the input's stronger polarization channel.
fn oam_profile(state: &HybridState) -> Vec<(i32, Complex64)> {
    let [h, v] = channels(state);
    let w = |c: &[(i32, Complex64)]| c.iter().map(|(_, a)| a.norm_sqr()).sum::<f64>();
    if w(&h) >= w(&v) {
        h
    } else {
        v
    }
}

fn fidelity_csv(ctx: &Ctx, op: &TransferOperator) -> Result<Artifact, RunError> {
    let input = ctx.input()?;
    let ports = ctx.scenario.circuit.detection();
    let out = op.apply(input).map_err(|e| ctx.num_err(e))?;
    let i = ports.intensities(&out).map_err(|e| ctx.num_err(e))?;
    let profile = oam_profile(input);
    let mut rows: Vec<(&str, f64)> = vec![
        ("transmission", out.norm_sqr() / input.norm_sqr()),
        ("port1", i.port1),
        ("port2", i.port2),
        ("sorting_fidelity", fidelity_or_nan(&i, input.norm_sqr())),
        (
            "oam_overlap",
            if out.norm_sqr() > 0.0 {
                oam_overlap(&out, &profile).map_err(|e| ctx.num_err(e))?
            } else {
                f64::NAN
            },
        ),
    ];
    if let Some(baseline) = &ctx.scenario.baseline {
        let b = baseline
            .build()
            .and_then(|b| b.apply(input))
            .map_err(|e| ctx.num_err(e))?;
        let overlap = if b.norm_sqr() > 0.0 {
            oam_overlap(&b, &profile).map_err(|e| ctx.num_err(e))?
        } else {
            f64::NAN
        };
        rows.push(("baseline_transmission", b.norm_sqr() / input.norm_sqr()));
        rows.push(("baseline_oam_overlap", overlap));
    }
    let mut text = String::from("quantity,value\n");
    for (k, v) in rows {
        writeln!(text, "{k},{}", num(v)).expect("string write");
    }
    Ok(ctx.artifact("fidelity.csv", text.into_bytes()))
}

fn gate_csv(ctx: &Ctx) -> Result<(Artifact, bool), RunError> {
    let gate = ctx
        .scenario
        .gate
        .as_ref()
        .ok_or_else(|| ctx.unsupported("gate-check needs a [gate] section"))?;
    let base = &ctx.scenario.circuit;
    if base.kind != CircuitKind::Pmm {
        return Err(ctx.unsupported("gate-check needs `kind = pmm`"));
    }
    let sign = match gate.sign {
        PhaseSign::Conjugated => "conjugated",
        PhaseSign::AsWritten => "as-written",
    };
    let mut all_ok = true;
    let mut text = String::from("n,d,alpha,process_fidelity,phase_sign,pass\n");
    for &n in &gate.ns {
        let mut spec = base.clone();
        spec.alpha = cphase_alpha(n);
        let op = spec.build().map_err(|e| ctx.num_err(e))?;
        for &d in &gate.ds {
            let target = cphase_target(spec.l_max, d, n, gate.sign).map_err(|e| ctx.num_err(e))?;
            let f = gate_fidelity(&op, &target).map_err(|e| ctx.num_err(e))?;
            let ok = (f - 1.0).abs() <= GATE_TOLERANCE;
            all_ok &= ok;
            writeln!(text, "{n},{d},{},{},{sign},{ok}", num(spec.alpha), num(f)).expect("string write");
        }
    }
    Ok((ctx.artifact("gate.csv", text.into_bytes()), all_ok))
}

fn sweep_csv(ctx: &Ctx) -> Result<Artifact, RunError> {
    let sweep = ctx
        .scenario
        .sweep
        .as_ref()
        .ok_or_else(|| ctx.unsupported("sweep needs a [sweep] section"))?;
    let nominal = ctx.scenario.circuit.pmm_settings().map_err(|e| ctx.num_err(e))?;
    let mut text = String::from("l,delta_deg,analytic,simulated,abs_diff\n");
    for &l in &sweep.modes {
        for &delta in &sweep.deltas {
            let settings = nominal.with_dp_angles(nominal.alpha + delta, nominal.alpha + delta);
            let sim = simulated_sorting_fidelity(&settings, l).map_err(|e| ctx.num_err(e))?;
            let law = rotation_error_fidelity(l, delta);
            writeln!(
                text,
                "{l},{},{},{},{}",
                num(delta.to_degrees()),
                num(law),
                num(sim),
                num((sim - law).abs())
            )
            .expect("string write");
        }
    }
    Ok(ctx.artifact("sweep.csv", text.into_bytes()))
}

fn monte_carlo_csv(ctx: &Ctx) -> Result<Artifact, RunError> {
    let s = ctx.scenario;
    let (model, sweep) = match (&s.error_model, &s.sweep) {
        (Some(m), Some(w)) => (m, w),
        _ => return Err(ctx.unsupported("monte-carlo needs [errors] and [sweep] sections")),
    };
    let nominal = s.circuit.pmm_settings().map_err(|e| ctx.num_err(e))?;
    let mut text = String::from("l,mean,std_dev,count,port1,port2\n");
    for &l in &sweep.modes {
        let r = monte_carlo_fidelity_with(&nominal, l, model, s.samples, s.seed).map_err(|e| ctx.num_err(e))?;
        let summary = r.samples.expect("Monte-Carlo reports carry a summary");
        let p = |port| r.port_intensities.get(&port).copied().unwrap_or(0.0);
        writeln!(
            text,
            "{l},{},{},{},{},{}",
            num(summary.mean),
            num(summary.std_dev),
            summary.count,
            num(p(Port::Port1)),
            num(p(Port::Port2))
        )
        .expect("string write");
    }
    Ok(ctx.artifact("montecarlo.csv", text.into_bytes()))
}
