//! Laguerre-Gaussian (p = 0) transverse fields, intensity images of OAM
//! superpositions, petal analysis and PGM output.
//!
//! Pixel `(row i, column j)` of a `side x side` grid sits at
//!
//! ```text
//! u = 2j + 1 - side,  v = side - 1 - 2i,  (x, y) = (u, v) * extent * w / side
//! ```
//!
//! so `y` points up and the angle `phi = atan2(y, x)` runs counterclockwise
//! from `+x`. The squared radius is computed from the integer `u^2 + v^2`,
//! which makes pixels on the same lattice ring exactly equidistant.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamGrid {
    pub side: usize,
    /// Half-width of the window in units of the waist.
    pub extent: f64,
    pub waist: f64,
}

impl Default for BeamGrid {
    fn default() -> Self {
        BeamGrid {
            side: 256,
            extent: 3.0,
            waist: 1.0,
        }
    }
}

impl BeamGrid {
    pub fn new(side: usize, extent: f64, waist: f64) -> Result<Self> {
        let g = BeamGrid { side, extent, waist };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.side < 16 {
            return Err(Error::InvalidParameter(format!("grid side {} < 16", self.side)));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid extent {} must be positive", self.extent)));
        }
        if !(self.waist > 0.0 && self.waist.is_finite()) {
            return Err(Error::InvalidParameter(format!("beam waist {} must be positive", self.waist)));
        }
        Ok(())
    }

    /// Physical length per half lattice unit: `x = u * scale`.
    fn scale(&self) -> f64 {
        self.extent * self.waist / self.side as f64
    }

    /// Pixel pitch in physical units.
    pub fn pitch(&self) -> f64 {
        2.0 * self.scale()
    }

    fn lattice(&self, i: usize, j: usize) -> (i64, i64) {
        let side = self.side as i64;
        (2 * j as i64 + 1 - side, side - 1 - 2 * i as i64)
    }

    /// Physical coordinates of a pixel center.
    pub fn position(&self, i: usize, j: usize) -> (f64, f64) {
        let (u, v) = self.lattice(i, j);
        (u as f64 * self.scale(), v as f64 * self.scale())
    }
}

/// Per-mode peak of `rho^|l| e^{-rho^2/2}`, reached at `rho^2 = |l|`.
fn lg_peak(l: i32) -> f64 {
    let a = l.unsigned_abs() as f64;
    a.powf(a / 2.0) * (-a / 2.0).exp()
}

fn lg_at(l: i32, r2: f64, phi: f64, waist: f64) -> Complex64 {
    let rho2 = 2.0 * r2 / (waist * waist);
    let amp = rho2.powf(l.unsigned_abs() as f64 / 2.0) * (-rho2 / 2.0).exp() / lg_peak(l);
    Complex64::from_polar(amp, l as f64 * phi)
}

fn pixel_polar(grid: &BeamGrid, i: usize, j: usize) -> (f64, f64) {
    let (u, v) = grid.lattice(i, j);
    let s = grid.scale();
    let r2 = (u * u + v * v) as f64 * s * s;
    (r2, (v as f64).atan2(u as f64))
}

/// `(r sqrt2 / w)^|l| e^{-r^2/w^2} e^{i l phi}` at every pixel center, row-major,
/// scaled so each mode's amplitude peaks at 1.
pub fn lg_field(l: i32, grid: &BeamGrid) -> Result<Vec<Complex64>> {
    grid.validate()?;
    let n = grid.side;
    Ok((0..n * n)
        .map(|k| {
            let (r2, phi) = pixel_polar(grid, k / n, k % n);
            lg_at(l, r2, phi, grid.waist)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntensityImage {
    pub side: usize,
    /// Row-major, top row first, normalized so the brightest pixel is `max_value`.
    pub pixels: Vec<f64>,
    /// 1 for a normalized image, 0 for a dark one.
    pub max_value: f64,
}

impl IntensityImage {
    /// An all-zero frame, e.g. for a port that receives no light.
    pub fn dark(side: usize) -> Self {
        IntensityImage {
            side,
            pixels: vec![0.0; side * side],
            max_value: 0.0,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pixels[i * self.side + j]
    }

    /// 16-bit quantization, `round(65535 * p / max_value)`.
    pub fn to_u16(&self) -> Vec<u16> {
        if self.max_value <= 0.0 {
            return vec![0; self.pixels.len()];
        }
        self.pixels
            .iter()
            .map(|p| (p / self.max_value * 65535.0).round().clamp(0.0, 65535.0) as u16)
            .collect()
    }

    /// Bilinear interpolation at fractional pixel coordinates (row, column).
    fn sample(&self, row: f64, col: f64) -> f64 {
        let n = self.side;
        let r0 = (row.floor().max(0.0) as usize).min(n - 2);
        let c0 = (col.floor().max(0.0) as usize).min(n - 2);
        let fr = (row - r0 as f64).clamp(0.0, 1.0);
        let fc = (col - c0 as f64).clamp(0.0, 1.0);
        let g = |r: usize, c: usize| self.pixels[r * n + c];
        (1.0 - fr) * ((1.0 - fc) * g(r0, c0) + fc * g(r0, c0 + 1)) + fr * ((1.0 - fc) * g(r0 + 1, c0) + fc * g(r0 + 1, c0 + 1))
    }
}

/// `|sum_l c_l LG_l|^2` on the grid, normalized to a peak of 1. Rows are
/// computed in parallel; each pixel's value does not depend on the split.
pub fn intensity_image(oam_amplitudes: &[(i32, Complex64)], grid: &BeamGrid) -> Result<IntensityImage> {
    intensity_image_channels(&[oam_amplitudes], grid)
}

/// Incoherent sum over channels (e.g. the two polarizations, which a camera
/// does not distinguish) of each channel's coherent OAM superposition.
pub fn intensity_image_channels(channels: &[&[(i32, Complex64)]], grid: &BeamGrid) -> Result<IntensityImage> {
    grid.validate()?;
    let zero = Complex64::new(0.0, 0.0);
    if channels.iter().all(|ch| ch.iter().all(|(_, c)| *c == zero)) {
        return Err(Error::ZeroNorm);
    }
    let n = grid.side;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let (r2, phi) = pixel_polar(grid, i, j);
                    channels
                        .iter()
                        .map(|ch| {
                            ch.iter()
                                .map(|&(l, c)| c * lg_at(l, r2, phi, grid.waist))
                                .sum::<Complex64>()
                                .norm_sqr()
                        })
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    let mut pixels: Vec<f64> = rows.into_iter().flatten().collect();
    let peak = pixels.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        // the modes cancel exactly at every pixel center
        return Ok(IntensityImage::dark(n));
    }
    for p in &mut pixels {
        *p /= peak;
    }
    Ok(IntensityImage {
        side: n,
        pixels,
        max_value: 1.0,
    })
}

/// Relative variance (variance / mean^2) of the pixels lying on the lattice
/// ring of the brightest pixel. Zero for a perfectly round pattern.
pub fn ring_relative_variance(image: &IntensityImage) -> Result<f64> {
    let n = image.side as i64;
    let idx = image
        .pixels
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .ok_or(Error::ZeroNorm)?;
    let radius2 = |k: usize| {
        let (i, j) = ((k as i64) / n, (k as i64) % n);
        let (u, v) = (2 * j + 1 - n, n - 1 - 2 * i);
        u * u + v * v
    };
    let target = radius2(idx);
    let ring: Vec<f64> = (0..image.pixels.len())
        .filter(|&k| radius2(k) == target)
        .map(|k| image.pixels[k])
        .collect();
    let mean = ring.iter().sum::<f64>() / ring.len() as f64;
    if mean == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let var = ring.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / ring.len() as f64;
    Ok(var / (mean * mean))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PetalAnalysis {
    pub petal_count: usize,
    /// Angle of one petal maximum, in `[0, 2 pi / petal_count)`.
    pub orientation: f64,
    /// Radius of the analyzed ring, in pixels.
    pub ring_radius: f64,
    /// `|C_k| / C_0` of the dominant angular harmonic.
    pub contrast: f64,
}

impl PetalAnalysis {
    /// Angle subtended by one pixel on the analyzed ring.
    pub fn angular_resolution(&self) -> f64 {
        1.0 / self.ring_radius
    }
}

const MAX_HARMONIC: usize = 64;
const MIN_CONTRAST: f64 = 0.05;

/// Smallest angular distance between two orientations of a `k`-fold pattern.
pub fn orientation_distance(a: f64, b: f64, petal_count: usize) -> f64 {
    let period = TAU / petal_count as f64;
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Angular harmonic analysis on the ring of maximal mean intensity. The
/// petal count is the dominant harmonic `k`; the orientation is the angle
/// of a maximum, `-arg(C_k)/k` mod `2 pi / k`. With `l_hint` the harmonic
/// `2|l|` is used for the orientation.
pub fn petal_analysis(image: &IntensityImage, l_hint: Option<u32>) -> Result<PetalAnalysis> {
    let n = image.side;
    if n < 4 || image.max_value <= 0.0 {
        return Err(Error::NoDominantHarmonic);
    }
    let center = (n as f64 - 1.0) / 2.0;

    // radial profile in one-pixel bins
    let bins = n / 2;
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for i in 0..n {
        for j in 0..n {
            let r = ((i as f64 - center).powi(2) + (j as f64 - center).powi(2)).sqrt();
            let b = r.round() as usize;
            if b < bins {
                sum[b] += image.get(i, j);
                count[b] += 1;
            }
        }
    }
    let ring = (1..bins.saturating_sub(1))
        .filter(|&b| count[b] > 0)
        .max_by(|&a, &b| (sum[a] / count[a] as f64).total_cmp(&(sum[b] / count[b] as f64)))
        .ok_or(Error::NoDominantHarmonic)?;
    let radius = ring as f64;

    let samples = (16.0 * TAU * radius).ceil().max(1024.0) as usize;
    let profile: Vec<f64> = (0..samples)
        .map(|s| {
            let phi = TAU * s as f64 / samples as f64;
            // y up: row decreases with y
            image.sample(center - radius * phi.sin(), center + radius * phi.cos())
        })
        .collect();
    let harmonic = |k: usize| -> Complex64 {
        profile
            .iter()
            .enumerate()
            .map(|(s, &p)| Complex64::from_polar(p, -(k as f64) * TAU * s as f64 / samples as f64))
            .sum::<Complex64>()
            / samples as f64
    };
    let c0 = harmonic(0).re;
    if c0 <= 0.0 {
        return Err(Error::NoDominantHarmonic);
    }
    let (k, ck) = (1..=MAX_HARMONIC)
        .map(|k| (k, harmonic(k)))
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .expect("non-empty harmonic range");
    let contrast = ck.norm() / c0;
    if contrast < MIN_CONTRAST {
        return Err(Error::NoDominantHarmonic);
    }
    let k_orient = l_hint.map(|l| 2 * l as usize).filter(|&h| h > 0).unwrap_or(k);
    let c_orient = if k_orient == k { ck } else { harmonic(k_orient) };
    let period = TAU / k_orient as f64;
    let orientation = (-c_orient.arg() / k_orient as f64).rem_euclid(period);
    Ok(PetalAnalysis {
        petal_count: k,
        orientation: if (period - orientation).abs() < 1e-12 { 0.0 } else { orientation },
        ring_radius: radius,
        contrast,
    })
}

/// Expected petal orientation of `|l> + e^{i theta}|-l>`: `theta/(2l)` mod `pi/l`.
pub fn expected_orientation(l: u32, theta: f64) -> f64 {
    (theta / (2.0 * l as f64)).rem_euclid(PI / l as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmFormat {
    /// Plain text (P2).
    Plain,
    /// Binary, big-endian 16-bit (P5).
    Raw,
}

impl PgmFormat {
    pub fn extension(self) -> &'static str {
        "pgm"
    }
}

pub fn write_pgm<W: Write>(image: &IntensityImage, format: PgmFormat, mut out: W) -> io::Result<()> {
    let values = image.to_u16();
    let n = image.side;
    match format {
        PgmFormat::Plain => {
            writeln!(out, "P2\n{n} {n}\n65535")?;
            for row in values.chunks(n) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
        }
        PgmFormat::Raw => {
            write!(out, "P5\n{n} {n}\n65535\n")?;
            let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
            out.write_all(&bytes)?;
        }
    }
    Ok(())
}

pub fn pgm_bytes(image: &IntensityImage, format: PgmFormat) -> Vec<u8> {
    let mut buf = Vec::new();
    write_pgm(image, format, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Reads back a P2 or P5 file with maxval 65535.
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, Vec<u16>)> {
    let bad = |m: &str| Error::InvalidParameter(format!("malformed PGM: {m}"));
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let w: usize = token()?.parse().map_err(|_| bad("width"))?;
    let h: usize = token()?.parse().map_err(|_| bad("height"))?;
    let maxval: u32 = token()?.parse().map_err(|_| bad("maxval"))?;
    if w != h || maxval != 65535 {
        return Err(bad("expected a square 16-bit image"));
    }
    let values = match magic.as_str() {
        "P2" => (0..w * h)
            .map(|_| token()?.parse::<u16>().map_err(|_| bad("pixel")))
            .collect::<Result<Vec<_>>>()?,
        "P5" => {
            let body = &bytes[pos + 1..];
            if body.len() != 2 * w * h {
                return Err(bad("pixel data length"));
            }
            body.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        }
        _ => return Err(bad("magic number")),
    };
    Ok((w, values))
}
