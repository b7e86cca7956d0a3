//! Incoherent defocus point spread functions from a scalar pupil model.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::fft::Fft2;

/// Fraction of PSF energy the truncated kernel must keep.
pub const ENERGY_FRACTION: f64 = 0.999;
const MAX_FINE_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalParams {
    /// Effective wavelength of the R, G and B channels.
    pub wavelengths_nm: [f64; 3],
    pub numerical_aperture: f64,
    pub refractive_index: f64,
    pub defocus_um: f64,
}

impl OpticalParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidOptics(m));
        if let Some(l) = self.wavelengths_nm.iter().find(|l| !(380.0..=780.0).contains(*l)) {
            return bad(format!("wavelength must lie in [380, 780] nm, got {l}"));
        }
        if !(self.refractive_index.is_finite() && self.refractive_index > 0.0) {
            return bad(format!("refractive index must be positive, got {}", self.refractive_index));
        }
        let na = self.numerical_aperture;
        if !(na.is_finite() && na > 0.0 && na < self.refractive_index) {
            return bad(format!(
                "numerical aperture must lie in (0, {}), got {na}",
                self.refractive_index
            ));
        }
        if !(self.defocus_um.is_finite() && self.defocus_um >= 0.0) {
            return bad(format!("defocus must be finite and nonnegative, got {}", self.defocus_um));
        }
        Ok(())
    }

    /// Defocus aberration coefficient in micrometres.
    pub fn w20_um(&self) -> f64 {
        self.defocus_um * self.numerical_aperture.powi(2) / (2.0 * self.refractive_index)
    }
}

/// Square, odd-sized, unit-sum, point-symmetric convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfKernel {
    size: usize,
    weights: Vec<f64>,
}

impl PsfKernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 || weights.len() != size * size {
            return Err(Error::InvalidOptics(format!(
                "kernel must be odd and square, got size {size} with {} weights",
                weights.len()
            )));
        }
        Ok(PsfKernel { size, weights })
    }

    pub fn delta() -> Self {
        PsfKernel {
            size: 1,
            weights: vec![1.0],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.size + x]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_delta(&self) -> bool {
        self.size == 1
    }

    /// Mean squared distance from the centre, in pixels squared.
    pub fn second_moment(&self) -> f64 {
        let c = self.radius() as f64;
        let mut m = 0.0;
        for y in 0..self.size {
            for x in 0..self.size {
                let (dx, dy) = (x as f64 - c, y as f64 - c);
                m += self.get(x, y) * (dx * dx + dy * dy);
            }
        }
        m / self.sum()
    }
}

fn odd_at_least(v: f64) -> usize {
    let n = v.ceil().max(1.0) as usize;
    n | 1
}

/// PSF of channel `channel` sampled on pixels of pitch `pixel_pitch_um`.
///
/// The pupil is evaluated on a grid `ov` times finer than the pixel grid,
/// transformed, squared, and integrated over each pixel's area.
pub fn make_defocus_psf(params: &OpticalParams, channel: usize, pixel_pitch_um: f64) -> Result<PsfKernel> {
    params.validate()?;
    if channel > 2 {
        return Err(Error::InvalidOptics(format!("channel {channel} out of range")));
    }
    if !(pixel_pitch_um.is_finite() && pixel_pitch_um > 0.0) {
        return Err(Error::InvalidOptics(format!("pixel pitch must be positive, got {pixel_pitch_um}")));
    }
    let lambda = params.wavelengths_nm[channel] / 1000.0;
    let na = params.numerical_aperture;
    let fc = na / lambda;
    let p = pixel_pitch_um;
    let ov = odd_at_least((4.0 * fc * p).max(3.0));

    let geometric = params.defocus_um * na / (params.refractive_index.powi(2) - na * na).sqrt();
    let tail = 55.0 * lambda / na;
    let mut m = odd_at_least(2.0 * (geometric + tail) / p / 0.7 + 1.0).max(3);
    if ov * m > MAX_FINE_GRID {
        m = (MAX_FINE_GRID / ov).max(3) | 1;
        if ov * m > MAX_FINE_GRID {
            m = m.saturating_sub(2).max(1);
        }
    }
    loop {
        let binned = binned_psf(params, lambda, fc, p, ov, m);
        let (size, kernel) = truncate(&binned, m);
        let can_grow = ov * (2 * m + 1) <= MAX_FINE_GRID;
        if size as f64 > 0.7 * m as f64 && can_grow {
            m = 2 * m + 1;
            continue;
        }
        return PsfKernel::new(size, kernel);
    }
}

fn binned_psf(params: &OpticalParams, lambda: f64, fc: f64, p: f64, ov: usize, m: usize) -> Vec<f64> {
    let n = ov * m;
    let df = 1.0 / (m as f64 * p);
    let k = 2.0 * PI / lambda;
    let w20 = params.w20_um();
    let half = (n as isize - 1) / 2;
    let mut pupil = vec![Complex::new(0.0, 0.0); n * n];
    for j in -half..=half {
        let fy = j as f64 * df;
        let row = j.rem_euclid(n as isize) as usize * n;
        for i in -half..=half {
            let fx = i as f64 * df;
            let rho2 = (fx * fx + fy * fy) / (fc * fc);
            if rho2 <= 1.0 {
                pupil[row + i.rem_euclid(n as isize) as usize] = Complex::from_polar(1.0, k * w20 * rho2);
            }
        }
    }
    let mut planner = FftPlanner::new();
    Fft2::new(&mut planner, n, n).inverse(&mut pupil);
    // bin the centred intensity into m x m pixels
    let mut binned = vec![0.0; m * m];
    for (j, row) in pupil.chunks_exact(n).enumerate() {
        let sy = (j as isize + half).rem_euclid(n as isize) as usize / ov;
        for (i, v) in row.iter().enumerate() {
            let sx = (i as isize + half).rem_euclid(n as isize) as usize / ov;
            binned[sy * m + sx] += v.norm_sqr();
        }
    }
    let sym: Vec<f64> = (0..m * m).map(|i| 0.5 * (binned[i] + binned[m * m - 1 - i])).collect();
    let total: f64 = sym.iter().sum();
    sym.into_iter().map(|v| v / total).collect()
}

/// Smallest centred odd square holding `ENERGY_FRACTION` of the energy,
/// renormalized to unit sum.
fn truncate(w: &[f64], m: usize) -> (usize, Vec<f64>) {
    let c = m / 2;
    let mut rings = vec![0.0; c + 1];
    for y in 0..m {
        for x in 0..m {
            rings[x.abs_diff(c).max(y.abs_diff(c))] += w[y * m + x];
        }
    }
    let mut acc = 0.0;
    let mut r = c;
    for (k, e) in rings.iter().enumerate() {
        acc += e;
        if acc >= ENERGY_FRACTION {
            r = k;
            break;
        }
    }
    let size = 2 * r + 1;
    let mut out = Vec::with_capacity(size * size);
    for y in c - r..=c + r {
        out.extend_from_slice(&w[y * m + c - r..=y * m + c + r]);
    }
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    (size, out)
}
