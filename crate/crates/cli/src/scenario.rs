//! Scenario files: flat `key = value` lines grouped in `[section]` blocks.
//!
//! ```text
//! file     := (blank | comment | header | pair)*
//! comment  := '#' text
//! header   := '[' section ']'
//! pair     := key '=' value
//! section  := circuit | baseline | input | errors | sweep | gate | render
//! ```
//!
//! Keys before the first header are top-level: `name` (required), `seed`
//! (default 0), `lmax` (default 10) and `outputs` (comma list of
//! `ports-csv`, `image`, `fidelity`, `gate-check`, `sweep`, `monte-carlo`).
//!
//! * `[circuit]` / `[baseline]`: `kind`, `alpha`, `theta1`..`theta4`,
//!   `direction` (`a`|`b`), `detection`, `sequence`, and prism constants
//!   `dp.t_par`, `dp.t_perp`, `dp.delta_phi` (both prisms) or `dp1.*`, `dp2.*`.
//!   `sequence` is a `;` list of `hwp(t[, b])`, `qwp(t)`, `dp(a[, b])`,
//!   `sandwich(a[, b])`, `bare_sagnac(a)`, `sandwich_sagnac(a)`, `pmm(a)`,
//!   `pmm2`, `select(port1|port2[, t])`.
//! * `[input]`: `polarization` (`H`, `V`, `H+V`, `H-V`, `D`, `A`, `R`, `L` or
//!   `(a, b)`) with `modes` (`1, -1`, `-5..5`, `2:1, -2:i`), or repeated
//!   `entry = pol, l, amplitude`. The state is normalized.
//! * `[errors]`: `distribution` (`fixed`|`uniform`), `delta` (lumped prism
//!   error) or per-element bounds `dp1`, `dp2`, `hwp1`..`hwp4`; `samples`.
//! * `[sweep]`: `l` (integer list/range), `delta` (`0deg..2deg:0.2deg`).
//! * `[gate]`: `n` and `d` (integer lists/ranges), `sign` (`conjugated`|`as-written`).
//! * `[render]`: `side`, `extent`, `waist`, `format` (`p2`|`p5`).

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_complex::Complex64;
use pmm_core::analysis::{Element, ErrorDistribution, ErrorModel, PhaseSign};
use pmm_core::circuits::{CircuitKind, CircuitSpec, Port, SequenceItem};
use pmm_core::elements::{DpParams, Direction};
use pmm_core::render::{BeamGrid, PgmFormat};
use pmm_core::{HybridState, Polarization, DEFAULT_L_MAX};

use crate::literal::{
    parse_angle, parse_angle_range, parse_complex, parse_int, parse_int_list, parse_mode_list, parse_real,
    split_with_offsets, LiteralError,
};

/// Largest accepted angle magnitude.
const ANGLE_LIMIT: f64 = 2.0 * PI;
pub const DEFAULT_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Output {
    PortsCsv,
    Image,
    Fidelity,
    GateCheck,
    Sweep,
    MonteCarlo,
}

impl Output {
    pub const ALL: [Output; 6] = [
        Output::PortsCsv,
        Output::Image,
        Output::Fidelity,
        Output::GateCheck,
        Output::Sweep,
        Output::MonteCarlo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Output::PortsCsv => "ports-csv",
            Output::Image => "image",
            Output::Fidelity => "fidelity",
            Output::GateCheck => "gate-check",
            Output::Sweep => "sweep",
            Output::MonteCarlo => "monte-carlo",
        }
    }

    fn needs_input(self) -> bool {
        matches!(self, Output::PortsCsv | Output::Image | Output::Fidelity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub modes: Vec<i32>,
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateSpec {
    pub ns: Vec<u32>,
    pub ds: Vec<usize>,
    pub sign: PhaseSign,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSpec {
    pub grid: BeamGrid,
    pub format: PgmFormat,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            grid: BeamGrid::default(),
            format: PgmFormat::Raw,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub l_max: u32,
    pub circuit: CircuitSpec,
    pub baseline: Option<CircuitSpec>,
    pub input: Option<HybridState>,
    pub error_model: Option<ErrorModel>,
    pub samples: usize,
    pub sweep: Option<SweepSpec>,
    pub gate: Option<GateSpec>,
    pub render: RenderSpec,
    pub outputs: Vec<Output>,
}

/// Command-line overrides applied before validation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub l_max: Option<u32>,
}

/// A value with the position of its first character.
#[derive(Clone, Debug)]
struct Located<T> {
    line: usize,
    column: usize,
    value: T,
}

impl<T> Located<T> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    fn lit_err(&self, e: LiteralError) -> ParseError {
        ParseError {
            line: self.line,
            column: self.column + e.offset,
            message: e.message,
        }
    }
}

type Raw = Located<String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Top,
    Circuit,
    Baseline,
    Input,
    Errors,
    Sweep,
    Gate,
    Render,
}

impl Section {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "circuit" => Section::Circuit,
            "baseline" => Section::Baseline,
            "input" => Section::Input,
            "errors" => Section::Errors,
            "sweep" => Section::Sweep,
            "gate" => Section::Gate,
            "render" => Section::Render,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Section::Top => "top level",
            Section::Circuit => "circuit",
            Section::Baseline => "baseline",
            Section::Input => "input",
            Section::Errors => "errors",
            Section::Sweep => "sweep",
            Section::Gate => "gate",
            Section::Render => "render",
        }
    }

    fn allows(self, key: &str) -> bool {
        match self {
            Section::Top => matches!(key, "name" | "seed" | "lmax" | "outputs"),
            Section::Circuit | Section::Baseline => {
                matches!(
                    key,
                    "kind" | "alpha" | "theta1" | "theta2" | "theta3" | "theta4" | "direction" | "detection" | "sequence"
                ) || key
                    .split_once('.')
                    .is_some_and(|(p, f)| matches!(p, "dp" | "dp1" | "dp2") && matches!(f, "t_par" | "t_perp" | "delta_phi"))
            }
            Section::Input => matches!(key, "polarization" | "modes" | "entry"),
            Section::Errors => {
                matches!(key, "distribution" | "delta" | "samples") || Element::from_name(key).is_some()
            }
            Section::Sweep => matches!(key, "l" | "delta"),
            Section::Gate => matches!(key, "n" | "d" | "sign"),
            Section::Render => matches!(key, "side" | "extent" | "waist" | "format"),
        }
    }

    fn repeatable(key: &str) -> bool {
        key == "entry"
    }
}

/// Keys of one section, in file order.
#[derive(Default)]
struct Block {
    header: Option<(usize, usize)>,
    pairs: BTreeMap<String, Vec<(Raw, Raw)>>,
}

impl Block {
    fn get(&self, key: &str) -> Option<&Raw> {
        self.pairs.get(key).and_then(|v| v.first()).map(|(_, v)| v)
    }

    fn all(&self, key: &str) -> &[(Raw, Raw)] {
        self.pairs.get(key).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

fn tokenize(text: &str) -> Result<BTreeMap<Section, Block>, ParseError> {
    let mut blocks: BTreeMap<Section, Block> = BTreeMap::new();
    blocks.insert(Section::Top, Block::default());
    let mut current = Section::Top;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let col = content.len() - content.trim_start().len() + 1;
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or(ParseError {
                line,
                column: col + trimmed.len(),
                message: "section header must end with `]`".into(),
            })?;
            let section = Section::from_name(name.trim()).ok_or_else(|| ParseError {
                line,
                column: col + 1,
                message: format!("unknown section `{}`", name.trim()),
            })?;
            if blocks.get(&section).is_some_and(|b| b.header.is_some()) {
                return Err(ParseError {
                    line,
                    column: col,
                    message: format!("duplicate section `[{}]`", section.name()),
                });
            }
            blocks.entry(section).or_default().header = Some((line, col));
            current = section;
            continue;
        }
        let (k, v) = content.split_once('=').ok_or(ParseError {
            line,
            column: col,
            message: "expected `key = value`".into(),
        })?;
        let key = k.trim().to_string();
        let vcol = k.len() + 1 + (v.len() - v.trim_start().len()) + 1;
        let value = v.trim().to_string();
        if key.is_empty() {
            return Err(ParseError { line, column: col, message: "missing key".into() });
        }
        if !current.allows(&key) {
            return Err(ParseError {
                line,
                column: col,
                message: format!("unknown key `{key}` in {}", current.name()),
            });
        }
        if value.is_empty() {
            return Err(ParseError {
                line,
                column: vcol,
                message: format!("missing value for `{key}`"),
            });
        }
        let block = blocks.get_mut(&current).expect("section inserted above");
        if !Section::repeatable(&key) && block.pairs.contains_key(&key) {
            return Err(ParseError {
                line,
                column: col,
                message: format!("duplicate key `{key}`"),
            });
        }
        let key_raw = Located { line, column: col, value: key.clone() };
        let val_raw = Located { line, column: vcol, value };
        block.pairs.entry(key).or_default().push((key_raw, val_raw));
    }
    Ok(blocks)
}

fn angle(raw: &Raw) -> Result<f64, ParseError> {
    let a = parse_angle(&raw.value).map_err(|e| raw.lit_err(e))?;
    if a.abs() > ANGLE_LIMIT {
        return Err(raw.err(format!("angle {a} rad outside [-2pi, 2pi]")));
    }
    Ok(a)
}

fn transmission(raw: &Raw) -> Result<f64, ParseError> {
    let t = parse_real(&raw.value).map_err(|e| raw.lit_err(e))?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(raw.err(format!("transmission {t} outside (0, 1]")));
    }
    Ok(t)
}

fn unsigned(raw: &Raw, what: &str) -> Result<u64, ParseError> {
    let v = parse_int(&raw.value).map_err(|e| raw.lit_err(e))?;
    u64::try_from(v).map_err(|_| raw.err(format!("{what} must be non-negative")))
}

fn direction(raw: &Raw) -> Result<Direction, ParseError> {
    match raw.value.trim() {
        "a" | "A" => Ok(Direction::A),
        "b" | "B" => Ok(Direction::B),
        other => Err(raw.err(format!("direction must be `a` or `b`, found `{other}`"))),
    }
}

fn port(raw: &Raw, s: &str, at: usize) -> Result<Port, ParseError> {
    match s.trim() {
        "port1" => Ok(Port::Port1),
        "port2" => Ok(Port::Port2),
        other => Err(ParseError {
            line: raw.line,
            column: raw.column + at,
            message: format!("expected `port1` or `port2`, found `{other}`"),
        }),
    }
}

fn parse_sequence(raw: &Raw) -> Result<Vec<SequenceItem>, ParseError> {
    let mut items = Vec::new();
    for (at, piece) in split_with_offsets(&raw.value, ';') {
        let at = at + (piece.len() - piece.trim_start().len());
        let p = piece.trim();
        if p.is_empty() {
            continue;
        }
        let here = |message: String| ParseError {
            line: raw.line,
            column: raw.column + at,
            message,
        };
        let (name, args) = match p.split_once('(') {
            Some((n, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| here(format!("missing `)` in `{p}`")))?;
                (n.trim(), Some((at + n.len() + 1, inner)))
            }
            None => (p, None),
        };
        let args: Vec<(usize, &str)> = match args {
            Some((start, inner)) => split_with_offsets(inner, ',')
                .into_iter()
                .map(|(o, s)| (start + o, s))
                .collect(),
            None => Vec::new(),
        };
        let arity = |lo: usize, hi: usize| -> Result<(), ParseError> {
            if args.len() < lo || args.len() > hi {
                return Err(here(format!("`{name}` takes {lo}..={hi} arguments, found {}", args.len())));
            }
            Ok(())
        };
        let ang = |k: usize| -> Result<f64, ParseError> {
            let (o, s) = args[k];
            let a = parse_angle(s).map_err(|e| ParseError {
                line: raw.line,
                column: raw.column + o + e.offset,
                message: e.message,
            })?;
            if a.abs() > ANGLE_LIMIT {
                return Err(here(format!("angle {a} rad outside [-2pi, 2pi]")));
            }
            Ok(a)
        };
        let dir = |k: usize| -> Result<Direction, ParseError> {
            match args.get(k) {
                None => Ok(Direction::A),
                Some(&(o, s)) => direction(&Located {
                    line: raw.line,
                    column: raw.column + o,
                    value: s.trim().to_string(),
                }),
            }
        };
        let item = match name {
            "hwp" => {
                arity(1, 2)?;
                SequenceItem::Hwp { theta: ang(0)?, direction: dir(1)? }
            }
            "qwp" => {
                arity(1, 1)?;
                SequenceItem::Qwp { theta: ang(0)? }
            }
            "dp" => {
                arity(1, 2)?;
                SequenceItem::Dp { alpha: ang(0)?, direction: dir(1)? }
            }
            "sandwich" => {
                arity(1, 2)?;
                SequenceItem::Sandwich { alpha: ang(0)?, direction: dir(1)? }
            }
            "bare_sagnac" => {
                arity(1, 1)?;
                SequenceItem::BareSagnac { alpha: ang(0)? }
            }
            "sandwich_sagnac" => {
                arity(1, 1)?;
                SequenceItem::SandwichSagnac { alpha: ang(0)? }
            }
            "pmm" => {
                arity(1, 1)?;
                SequenceItem::Pmm { alpha: ang(0)? }
            }
            "pmm2" => {
                arity(0, 0)?;
                SequenceItem::Pmm2
            }
            "select" => {
                arity(1, 2)?;
                let theta = if args.len() == 2 { ang(1)? } else { pmm_core::circuits::DETECTION_THETA };
                SequenceItem::Select { port: port(raw, args[0].1, args[0].0)?, theta }
            }
            other => return Err(here(format!("unknown sequence element `{other}`"))),
        };
        items.push(item);
    }
    if items.is_empty() {
        return Err(raw.err("empty sequence"));
    }
    Ok(items)
}

fn parse_circuit(block: &Block, l_max: u32, default_kind: Option<CircuitKind>, section: &str) -> Result<CircuitSpec, ParseError> {
    let kind = match block.get("kind") {
        Some(raw) => CircuitKind::from_name(raw.value.trim())
            .ok_or_else(|| raw.err(format!("unknown circuit kind `{}`", raw.value)))?,
        None => default_kind.ok_or_else(|| {
            let (line, column) = block.header.unwrap_or((1, 1));
            ParseError {
                line,
                column,
                message: format!("[{section}] needs `kind`"),
            }
        })?,
    };
    let alpha = block.get("alpha").map(angle).transpose()?;
    let needs_alpha = !matches!(kind, CircuitKind::Detection | CircuitKind::CustomSequence);
    let alpha = match (alpha, needs_alpha) {
        (Some(a), _) => a,
        (None, false) => 0.0,
        (None, true) => {
            let (line, column) = block.header.unwrap_or((1, 1));
            return Err(ParseError {
                line,
                column,
                message: format!("circuit kind `{}` needs `alpha`", kind.name()),
            });
        }
    };
    let mut spec = CircuitSpec::new(kind, l_max, alpha);

    let mut dps = [DpParams::ideal(alpha); 2];
    for field in ["t_par", "t_perp", "delta_phi"] {
        for (k, prefix) in ["dp1", "dp2"].iter().enumerate() {
            let raw = block
                .get(&format!("{prefix}.{field}"))
                .or_else(|| block.get(&format!("dp.{field}")));
            if let Some(raw) = raw {
                match field {
                    "t_par" => dps[k].t_par = transmission(raw)?,
                    "t_perp" => dps[k].t_perp = transmission(raw)?,
                    _ => dps[k].delta_phi = angle(raw)?,
                }
            }
        }
    }
    for (k, dp) in dps.iter().enumerate() {
        let checked = DpParams::new(dp.t_par, dp.t_perp, dp.delta_phi, alpha).map_err(|e| {
            let (line, column) = block.header.unwrap_or((1, 1));
            ParseError {
                line,
                column,
                message: format!("DP{}: {e}", k + 1),
            }
        })?;
        if k == 0 {
            spec.dp1 = checked;
        } else {
            spec.dp2 = checked;
        }
    }
    for k in 0..4 {
        if let Some(raw) = block.get(&format!("theta{}", k + 1)) {
            spec.hwp_overrides[k] = Some(angle(raw)?);
        }
    }
    if let Some(raw) = block.get("direction") {
        spec.direction = direction(raw)?;
    }
    if let Some(raw) = block.get("detection") {
        spec.detection_theta = angle(raw)?;
    }
    match (kind, block.get("sequence")) {
        (CircuitKind::CustomSequence, Some(raw)) => spec.sequence = parse_sequence(raw)?,
        (CircuitKind::CustomSequence, None) => {
            let (line, column) = block.header.unwrap_or((1, 1));
            return Err(ParseError {
                line,
                column,
                message: "custom_sequence needs `sequence`".into(),
            });
        }
        (_, Some(raw)) => return Err(raw.err("`sequence` is only valid for kind = custom_sequence")),
        (_, None) => {}
    }
    Ok(spec)
}

fn parse_polarization(raw: &Raw) -> Result<[Complex64; 2], ParseError> {
    let s = FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let v = raw.value.trim();
    Ok(match v {
        "H" => [c(1.0, 0.0), c(0.0, 0.0)],
        "V" => [c(0.0, 0.0), c(1.0, 0.0)],
        "H+V" | "D" => [c(s, 0.0), c(s, 0.0)],
        "H-V" | "A" => [c(s, 0.0), c(-s, 0.0)],
        "R" => [c(s, 0.0), c(0.0, -s)],
        "L" => [c(s, 0.0), c(0.0, s)],
        _ => {
            let inner = v
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| raw.err(format!("unknown polarization `{v}`")))?;
            let (a, b) = inner
                .split_once(',')
                .ok_or_else(|| raw.err("polarization pair needs two amplitudes `(a, b)`"))?;
            let pa = parse_complex(a).map_err(|e| raw.lit_err(e).shifted(1))?;
            let pb = parse_complex(b).map_err(|e| raw.lit_err(e).shifted(a.len() + 2))?;
            if pa.norm_sqr() + pb.norm_sqr() == 0.0 {
                return Err(raw.err("polarization pair is zero"));
            }
            [pa, pb]
        }
    })
}

impl ParseError {
    fn shifted(self, by: usize) -> Self {
        ParseError {
            column: self.column + by,
            ..self
        }
    }
}

fn check_mode(l: i64, l_max: u32, raw: &Raw, offset: usize) -> Result<i32, ParseError> {
    if l.unsigned_abs() > l_max as u64 {
        return Err(ParseError {
            line: raw.line,
            column: raw.column + offset,
            message: format!("OAM order {l} exceeds lmax = {l_max}"),
        });
    }
    Ok(l as i32)
}

fn parse_input(block: &Block, l_max: u32) -> Result<Option<HybridState>, ParseError> {
    let entries = block.all("entry");
    let modes = block.get("modes");
    let pol = block.get("polarization");
    if entries.is_empty() && modes.is_none() && pol.is_none() {
        return Ok(None);
    }
    let mut list: Vec<(Polarization, i32, Complex64)> = Vec::new();
    if !entries.is_empty() {
        if let Some(raw) = modes.or(pol) {
            return Err(raw.err("use either `entry` lines or `polarization` + `modes`, not both"));
        }
        for (_, raw) in entries {
            let parts = split_with_offsets(&raw.value, ',');
            if parts.len() != 3 {
                return Err(raw.err("entry needs `pol, l, amplitude`"));
            }
            let p = match parts[0].1.trim() {
                "H" => Polarization::H,
                "V" => Polarization::V,
                other => return Err(raw.err(format!("entry polarization must be H or V, found `{other}`"))),
            };
            let l = parse_int(parts[1].1).map_err(|e| raw.lit_err(e).shifted(parts[1].0))?;
            let l = check_mode(l, l_max, raw, parts[1].0)?;
            let amp = parse_complex(parts[2].1).map_err(|e| raw.lit_err(e).shifted(parts[2].0))?;
            list.push((p, l, amp));
        }
    } else {
        let modes = modes.ok_or_else(|| pol.expect("one of the two is present").err("`polarization` needs `modes`"))?;
        let pol_raw = pol.ok_or_else(|| modes.err("`modes` needs `polarization`"))?;
        let pol = parse_polarization(pol_raw)?;
        let parsed = parse_mode_list(&modes.value).map_err(|e| modes.lit_err(e))?;
        for (at, l, amp) in parsed {
            let l = check_mode(l, l_max, modes, at)?;
            for (k, p) in Polarization::ALL.into_iter().enumerate() {
                list.push((p, l, pol[k] * amp));
            }
        }
    }
    let anchor = entries.first().map(|(_, r)| r).or(modes).expect("non-empty input");
    let state = HybridState::from_entries(l_max, &list).map_err(|e| anchor.err(e.to_string()))?;
    let state = state.normalize().map_err(|_| anchor.err("input state has zero norm"))?;
    Ok(Some(state))
}

fn parse_errors(block: &Block) -> Result<(Option<ErrorModel>, usize), ParseError> {
    let samples = match block.get("samples") {
        Some(raw) => {
            let n = unsigned(raw, "samples")? as usize;
            if n == 0 {
                return Err(raw.err("samples must be at least 1"));
            }
            n
        }
        None => DEFAULT_SAMPLES,
    };
    if block.header.is_none() {
        return Ok((None, samples));
    }
    let distribution = match block.get("distribution") {
        None => ErrorDistribution::Fixed,
        Some(raw) => match raw.value.trim() {
            "fixed" => ErrorDistribution::Fixed,
            "uniform" => ErrorDistribution::Uniform,
            other => return Err(raw.err(format!("distribution must be `fixed` or `uniform`, found `{other}`"))),
        },
    };
    let bound = |raw: &Raw| -> Result<f64, ParseError> {
        let b = angle(raw)?;
        if distribution == ErrorDistribution::Uniform && b < 0.0 {
            return Err(raw.err("uniform error bound must be non-negative"));
        }
        Ok(b)
    };
    let mut per_element = BTreeMap::new();
    for e in Element::ALL {
        if let Some(raw) = block.get(e.name()) {
            per_element.insert(e, bound(raw)?);
        }
    }
    let delta = match block.get("delta") {
        Some(raw) => {
            if !per_element.is_empty() {
                return Err(raw.err("use either the lumped `delta` or per-element bounds, not both"));
            }
            bound(raw)?
        }
        None => 0.0,
    };
    Ok((
        Some(ErrorModel {
            delta,
            per_element: if per_element.is_empty() { None } else { Some(per_element) },
            distribution,
        }),
        samples,
    ))
}

fn parse_sweep(block: &Block, l_max: u32) -> Result<Option<SweepSpec>, ParseError> {
    if block.header.is_none() {
        return Ok(None);
    }
    let (line, column) = block.header.expect("checked");
    let l_raw = block.get("l").ok_or(ParseError {
        line,
        column,
        message: "[sweep] needs `l`".into(),
    })?;
    let modes = parse_int_list(&l_raw.value)
        .map_err(|e| l_raw.lit_err(e))?
        .into_iter()
        .map(|l| check_mode(l, l_max, l_raw, 0))
        .collect::<Result<Vec<_>, _>>()?;
    let deltas = match block.get("delta") {
        Some(raw) => parse_angle_range(&raw.value).map_err(|e| raw.lit_err(e))?,
        None => vec![0.0],
    };
    Ok(Some(SweepSpec { modes, deltas }))
}

fn parse_gate(block: &Block, l_max: u32) -> Result<Option<GateSpec>, ParseError> {
    if block.header.is_none() {
        return Ok(None);
    }
    let (line, column) = block.header.expect("checked");
    let need = |key: &str| {
        block.get(key).ok_or(ParseError {
            line,
            column,
            message: format!("[gate] needs `{key}`"),
        })
    };
    let n_raw = need("n")?;
    let ns = parse_int_list(&n_raw.value).map_err(|e| n_raw.lit_err(e))?;
    if let Some(bad) = ns.iter().find(|&&n| !(2..=1_000_000).contains(&n)) {
        return Err(n_raw.err(format!("N = {bad} must lie in 2..=1000000")));
    }
    let d_raw = need("d")?;
    let ds = parse_int_list(&d_raw.value).map_err(|e| d_raw.lit_err(e))?;
    if let Some(bad) = ds.iter().find(|&&d| d < 2 || d - 1 > l_max as i64) {
        return Err(d_raw.err(format!("D = {bad} must lie in 2..={} (modes 0..D-1 within lmax)", l_max + 1)));
    }
    let sign = match block.get("sign") {
        None => PhaseSign::Conjugated,
        Some(raw) => match raw.value.trim() {
            "conjugated" => PhaseSign::Conjugated,
            "as-written" => PhaseSign::AsWritten,
            other => return Err(raw.err(format!("sign must be `conjugated` or `as-written`, found `{other}`"))),
        },
    };
    Ok(Some(GateSpec {
        ns: ns.into_iter().map(|n| n as u32).collect(),
        ds: ds.into_iter().map(|d| d as usize).collect(),
        sign,
    }))
}

fn parse_render(block: &Block) -> Result<RenderSpec, ParseError> {
    let mut spec = RenderSpec::default();
    if let Some(raw) = block.get("side") {
        let side = unsigned(raw, "side")? as usize;
        if !(16..=4096).contains(&side) {
            return Err(raw.err("side must lie in 16..=4096"));
        }
        spec.grid.side = side;
    }
    for (key, slot) in [("extent", &mut spec.grid.extent), ("waist", &mut spec.grid.waist)] {
        if let Some(raw) = block.get(key) {
            let v = parse_real(&raw.value).map_err(|e| raw.lit_err(e))?;
            if v <= 0.0 {
                return Err(raw.err(format!("{key} must be positive")));
            }
            *slot = v;
        }
    }
    if let Some(raw) = block.get("format") {
        spec.format = match raw.value.trim() {
            "p2" | "P2" => PgmFormat::Plain,
            "p5" | "P5" => PgmFormat::Raw,
            other => return Err(raw.err(format!("format must be `p2` or `p5`, found `{other}`"))),
        };
    }
    Ok(spec)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    parse_scenario_with(text, Overrides::default())
}

pub fn parse_scenario_with(text: &str, overrides: Overrides) -> Result<Scenario, ParseError> {
    let blocks = tokenize(text)?;
    let empty = Block::default();
    let block = |s: Section| blocks.get(&s).unwrap_or(&empty);
    let top = block(Section::Top);

    let name = top.get("name").ok_or(ParseError {
        line: 1,
        column: 1,
        message: "missing required key `name`".into(),
    })?;
    if !name.value.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(name.err("name may only contain letters, digits, `_` and `-`"));
    }
    let seed = match top.get("seed") {
        Some(raw) => unsigned(raw, "seed")?,
        None => 0,
    };
    let l_max = match top.get("lmax") {
        Some(raw) => {
            let l = unsigned(raw, "lmax")?;
            if l > 200 {
                return Err(raw.err("lmax must be at most 200"));
            }
            l as u32
        }
        None => DEFAULT_L_MAX,
    };
    let seed = overrides.seed.unwrap_or(seed);
    let l_max = overrides.l_max.unwrap_or(l_max);

    let outputs_raw = top.get("outputs").ok_or(ParseError {
        line: 1,
        column: 1,
        message: "missing required key `outputs`".into(),
    })?;
    let mut outputs = Vec::new();
    for (at, piece) in split_with_offsets(&outputs_raw.value, ',') {
        let n = piece.trim();
        let o = Output::ALL.into_iter().find(|o| o.name() == n).ok_or_else(|| ParseError {
            line: outputs_raw.line,
            column: outputs_raw.column + at + (piece.len() - piece.trim_start().len()),
            message: format!("unknown output `{n}`"),
        })?;
        if !outputs.contains(&o) {
            outputs.push(o);
        }
    }
    outputs.sort();

    let circuit_block = block(Section::Circuit);
    let circuit = if circuit_block.header.is_some() {
        parse_circuit(circuit_block, l_max, None, "circuit")?
    } else {
        CircuitSpec::new(CircuitKind::Pmm, l_max, std::f64::consts::FRAC_PI_4)
    };
    let baseline = match block(Section::Baseline) {
        b if b.header.is_some() => Some(parse_circuit(b, l_max, Some(CircuitKind::BareDpSagnac), "baseline")?),
        _ => None,
    };
    let input = parse_input(block(Section::Input), l_max)?;
    let (error_model, samples) = parse_errors(block(Section::Errors))?;
    let sweep = parse_sweep(block(Section::Sweep), l_max)?;
    let gate = parse_gate(block(Section::Gate), l_max)?;
    let render = parse_render(block(Section::Render))?;

    let at_outputs = |msg: String| outputs_raw.err(msg);
    for &o in &outputs {
        if o.needs_input() && input.is_none() {
            return Err(at_outputs(format!("output `{}` needs an [input] section", o.name())));
        }
    }
    if outputs.contains(&Output::GateCheck) && gate.is_none() {
        return Err(at_outputs("output `gate-check` needs a [gate] section".into()));
    }
    if outputs.contains(&Output::Sweep) && sweep.is_none() {
        return Err(at_outputs("output `sweep` needs a [sweep] section".into()));
    }
    if outputs.contains(&Output::MonteCarlo) && (error_model.is_none() || sweep.is_none()) {
        return Err(at_outputs("output `monte-carlo` needs [errors] and [sweep] sections".into()));
    }
    if outputs.iter().any(|o| matches!(o, Output::Sweep | Output::MonteCarlo)) && circuit.kind != CircuitKind::Pmm {
        return Err(at_outputs("sweeps need `kind = pmm`".into()));
    }

    Ok(Scenario {
        name: name.value.clone(),
        seed,
        l_max,
        circuit,
        baseline,
        input,
        error_model,
        samples,
        sweep,
        gate,
        render,
        outputs,
    })
}
