//! Value literals of the scenario format: angles, complex amplitudes, mode
//! lists and ranges.
//!
//! ```text
//! angle    := number | [coef]['*']pi['/' number] | angle ('deg' | '°')
//! complex  := real | [real] ('+'|'-') [real] 'i' | [mag '*'] 'exp(i' ['*'] angle ')'
//! modes    := item (',' item)*      item := l [':' complex] | l '..' l
//! range    := angle '..' angle ':' angle
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;

/// Error inside a literal; `offset` is a byte offset into the literal.
#[derive(Clone, Debug, PartialEq)]
pub struct LiteralError {
    pub offset: usize,
    pub message: String,
}

impl LiteralError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        LiteralError {
            offset,
            message: message.into(),
        }
    }

    fn shifted(self, by: usize) -> Self {
        LiteralError {
            offset: self.offset + by,
            ..self
        }
    }
}

pub type LitResult<T> = std::result::Result<T, LiteralError>;

/// Leading whitespace length, so offsets point at the first real character.
fn lead(s: &str) -> usize {
    s.len() - s.trim_start().len()
}

pub fn parse_real(s: &str) -> LitResult<f64> {
    let t = s.trim();
    let v: f64 = t
        .parse()
        .map_err(|_| LiteralError::new(lead(s), format!("expected a number, found `{t}`")))?;
    if !v.is_finite() {
        return Err(LiteralError::new(lead(s), format!("non-finite number `{t}`")));
    }
    Ok(v)
}

pub fn parse_int(s: &str) -> LitResult<i64> {
    let t = s.trim();
    t.parse()
        .map_err(|_| LiteralError::new(lead(s), format!("expected an integer, found `{t}`")))
}

/// Angle in radians. `pi/4`, `3pi/16`, `-3*pi/16`, `0.5`, `2deg`, `0.6 deg`.
pub fn parse_angle(s: &str) -> LitResult<f64> {
    let off = lead(s);
    let t = s.trim();
    if t.is_empty() {
        return Err(LiteralError::new(off, "expected an angle"));
    }
    let (body, degrees) = if let Some(b) = t.strip_suffix("deg") {
        (b.trim_end(), true)
    } else if let Some(b) = t.strip_suffix('°') {
        (b.trim_end(), true)
    } else {
        (t, false)
    };
    let value = if let Some(pos) = body.find("pi") {
        if degrees {
            return Err(LiteralError::new(off, "an angle cannot mix `pi` and `deg`"));
        }
        let coef = body[..pos].trim().trim_end_matches('*').trim();
        let coef = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => parse_real(c).map_err(|e| e.shifted(off))?,
        };
        let rest = body[pos + 2..].trim();
        let denom = if rest.is_empty() {
            1.0
        } else if let Some(d) = rest.strip_prefix('/') {
            let d = parse_real(d).map_err(|e| e.shifted(off + pos + 3))?;
            if d == 0.0 {
                return Err(LiteralError::new(off + pos + 3, "division by zero"));
            }
            d
        } else {
            return Err(LiteralError::new(off + pos + 2, format!("unexpected `{rest}` after `pi`")));
        };
        coef * PI / denom
    } else if let Some((a, b)) = body.split_once('/') {
        let a = parse_real(a).map_err(|e| e.shifted(off))?;
        let d = parse_real(b).map_err(|e| e.shifted(off + a.to_string().len() + 1))?;
        if d == 0.0 {
            return Err(LiteralError::new(off, "division by zero"));
        }
        a / d
    } else {
        parse_real(body).map_err(|e| e.shifted(off))?
    };
    Ok(if degrees { value.to_radians() } else { value })
}

/// Index of the `+`/`-` that separates real and imaginary parts, skipping a
/// leading sign and exponent signs.
fn split_point(t: &str) -> Option<usize> {
    let b = t.as_bytes();
    (1..b.len())
        .rev()
        .find(|&k| (b[k] == b'+' || b[k] == b'-') && !matches!(b[k - 1], b'e' | b'E'))
}

/// Complex amplitude: `1`, `-0.5`, `i`, `-2i`, `0.3-0.4i`, `exp(i pi/2)`, `0.5*exp(i*3pi/4)`.
pub fn parse_complex(s: &str) -> LitResult<Complex64> {
    let off = lead(s);
    let t = s.trim();
    if t.is_empty() {
        return Err(LiteralError::new(off, "expected a complex amplitude"));
    }
    if let Some(pos) = t.find("exp(") {
        let mag = t[..pos].trim().trim_end_matches('*').trim();
        let mag = match mag {
            "" | "+" => 1.0,
            "-" => -1.0,
            m => parse_real(m).map_err(|e| e.shifted(off))?,
        };
        let inner = t[pos + 4..]
            .strip_suffix(')')
            .ok_or_else(|| LiteralError::new(off + t.len(), "missing `)`"))?;
        let arg = inner
            .trim_start()
            .strip_prefix('i')
            .ok_or_else(|| LiteralError::new(off + pos + 4, "expected `exp(i ...)`"))?;
        let arg = arg.trim_start().strip_prefix('*').unwrap_or(arg);
        let phi = parse_angle(arg).map_err(|e| e.shifted(off + pos + 5))?;
        return Ok(Complex64::from_polar(mag, phi));
    }
    let imag_part = |p: &str, at: usize| -> LitResult<f64> {
        let p = p.trim().trim_end_matches('i').trim().trim_end_matches('*').trim();
        match p {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            q => parse_real(q).map_err(|e| e.shifted(at)),
        }
    };
    if !t.ends_with('i') {
        return Ok(Complex64::new(parse_real(t).map_err(|e| e.shifted(off))?, 0.0));
    }
    match split_point(t) {
        Some(k) => {
            let re = parse_real(&t[..k]).map_err(|e| e.shifted(off))?;
            let im = imag_part(&t[k..], off + k)?;
            Ok(Complex64::new(re, im))
        }
        None => Ok(Complex64::new(0.0, imag_part(t, off)?)),
    }
}

/// Splits on `sep`, keeping the byte offset of each piece.
pub fn split_with_offsets(s: &str, sep: char) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (k, ch) in s.char_indices() {
        if ch == sep {
            out.push((start, &s[start..k]));
            start = k + ch.len_utf8();
        }
    }
    out.push((start, &s[start..]));
    out
}

/// Integer range `a..b` (inclusive) or a single integer.
pub fn parse_int_range(s: &str) -> LitResult<Vec<i64>> {
    if let Some((a, b)) = s.split_once("..") {
        let lo = parse_int(a)?;
        let hi = parse_int(b).map_err(|e| e.shifted(a.len() + 2))?;
        if hi < lo {
            return Err(LiteralError::new(lead(s), format!("empty range {lo}..{hi}")));
        }
        Ok((lo..=hi).collect())
    } else {
        Ok(vec![parse_int(s)?])
    }
}

/// Comma list of integers and inclusive ranges: `2, 3, 4` or `1..10` or `-5..-1, 1..5`.
pub fn parse_int_list(s: &str) -> LitResult<Vec<i64>> {
    let mut out = Vec::new();
    for (at, piece) in split_with_offsets(s, ',') {
        out.extend(parse_int_range(piece).map_err(|e| e.shifted(at))?);
    }
    if out.is_empty() {
        return Err(LiteralError::new(0, "empty list"));
    }
    Ok(out)
}

/// Mode list with optional amplitudes: `1, -1`, `1:1, -1:-1`, `-5..5`, `2:1, -2:i`.
/// Each entry carries its offset in the literal.
pub fn parse_mode_list(s: &str) -> LitResult<Vec<(usize, i64, Complex64)>> {
    let one = Complex64::new(1.0, 0.0);
    let mut out = Vec::new();
    for (at, piece) in split_with_offsets(s, ',') {
        let at = at + lead(piece);
        if piece.contains("..") {
            for l in parse_int_range(piece).map_err(|e| e.shifted(at - lead(piece)))? {
                out.push((at, l, one));
            }
        } else if let Some((l, amp)) = piece.split_once(':') {
            let l_val = parse_int(l).map_err(|e| e.shifted(at - lead(piece)))?;
            let c = parse_complex(amp).map_err(|e| e.shifted(at - lead(piece) + l.len() + 1))?;
            out.push((at, l_val, c));
        } else {
            out.push((at, parse_int(piece).map_err(|e| e.shifted(at - lead(piece)))?, one));
        }
    }
    Ok(out)
}

/// Angle sweep `start..stop:step`, inclusive of `stop` up to rounding, or a
/// comma list of angles.
pub fn parse_angle_range(s: &str) -> LitResult<Vec<f64>> {
    if let Some((a, rest)) = s.split_once("..") {
        let (b, step) = rest
            .split_once(':')
            .ok_or_else(|| LiteralError::new(s.len(), "expected `start..stop:step`"))?;
        let start = parse_angle(a)?;
        let stop = parse_angle(b).map_err(|e| e.shifted(a.len() + 2))?;
        let step_v = parse_angle(step).map_err(|e| e.shifted(a.len() + 2 + b.len() + 1))?;
        if step_v <= 0.0 || stop < start {
            return Err(LiteralError::new(lead(s), "range needs start <= stop and a positive step"));
        }
        let n = ((stop - start) / step_v + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(LiteralError::new(lead(s), "range has too many points"));
        }
        // multiply rather than accumulate so every point is reproducible
        Ok((0..=n).map(|k| start + k as f64 * step_v).collect())
    } else {
        split_with_offsets(s, ',')
            .into_iter()
            .map(|(at, p)| parse_angle(p).map_err(|e| e.shifted(at)))
            .collect()
    }
}
