//! Spatial weighting for local stain corruptions: residue blobs from
//! smoothed noise, and alternating thick/thin bands.

use serde::{Deserialize, Serialize};

use crate::rng::lattice_uniform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    /// Target fraction of the frame with nonzero weight.
    pub coverage: f64,
    pub feather_px: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub angle_rad: f64,
    pub width_px: f64,
    pub alpha_low: f64,
    pub alpha_high: f64,
}

/// Lattice of blurred white noise, interpolated with Catmull-Rom splines.
#[derive(Debug, Clone)]
struct NoiseOctave {
    spacing: f64,
    amplitude: f64,
    nx: usize,
    values: Vec<f64>,
}

/// lattice index `i` maps to array column `i + PAD`
const PAD: usize = 2;

impl NoiseOctave {
    fn new(seed: u64, spacing: f64, amplitude: f64, width: usize, height: usize) -> Self {
        let nx = (width as f64 / spacing).ceil() as usize + 2 * PAD + 2;
        let ny = (height as f64 / spacing).ceil() as usize + 2 * PAD + 2;
        let raw = |i: isize, j: isize| 2.0 * lattice_uniform(seed, i as i64, j as i64) - 1.0;
        // 3x3 binomial blur of the white noise lattice
        const K: [f64; 3] = [0.25, 0.5, 0.25];
        let mut values = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let (li, lj) = (i as isize - PAD as isize, j as isize - PAD as isize);
                let mut acc = 0.0;
                for (dj, kj) in K.iter().enumerate() {
                    for (di, ki) in K.iter().enumerate() {
                        acc += ki * kj * raw(li + di as isize - 1, lj + dj as isize - 1);
                    }
                }
                values[j * nx + i] = acc;
            }
        }
        NoiseOctave {
            spacing,
            amplitude,
            nx,
            values,
        }
    }

    #[inline]
    fn eval(&self, x: f64, y: f64) -> f64 {
        let (u, v) = (x / self.spacing, y / self.spacing);
        let (iu, iv) = (u.floor(), v.floor());
        let (fu, fv) = (u - iu, v - iv);
        let (iu, iv) = (iu as isize + PAD as isize, iv as isize + PAD as isize);
        let wu = catmull_rom(fu);
        let wv = catmull_rom(fv);
        let mut acc = 0.0;
        for (b, wy) in wv.iter().enumerate() {
            let row = (iv + b as isize - 1) as usize * self.nx;
            let mut r = 0.0;
            for (a, wx) in wu.iter().enumerate() {
                r += wx * self.values[row + (iu + a as isize - 1) as usize];
            }
            acc += wy * r;
        }
        self.amplitude * acc
    }
}

#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Residue blob weights for one frame. Weights are a pure function of the
/// global pixel coordinate, so any tiling of the frame reproduces them.
#[derive(Debug, Clone)]
pub struct BlobField {
    octaves: Vec<NoiseOctave>,
    threshold: f64,
    feather_px: f64,
}

impl BlobField {
    pub fn new(spec: &BlobSpec, width: usize, height: usize) -> Self {
        let base = (width.max(height) as f64 / 5.0).max(8.0);
        let octaves = vec![
            NoiseOctave::new(spec.seed, base, 1.0, width, height),
            NoiseOctave::new(spec.seed ^ 0x9e37_79b9_7f4a_7c15, base / 2.5, 0.5, width, height),
        ];
        let mut field = BlobField {
            octaves,
            threshold: f64::INFINITY,
            feather_px: spec.feather_px.max(1e-6),
        };
        field.threshold = if spec.coverage <= 0.0 {
            f64::INFINITY
        } else if spec.coverage >= 1.0 {
            f64::NEG_INFINITY
        } else {
            let step = ((width * height) as f64 / 250_000.0).sqrt().max(1.0);
            let mut samples = Vec::new();
            let mut y = step / 2.0;
            while y < height as f64 {
                let mut x = step / 2.0;
                while x < width as f64 {
                    samples.push(field.value(x, y));
                    x += step;
                }
                y += step;
            }
            let k = (((1.0 - spec.coverage) * samples.len() as f64) as usize).min(samples.len() - 1);
            let (_, t, _) = samples.select_nth_unstable_by(k, f64::total_cmp);
            *t
        };
        field
    }

    #[inline]
    fn value(&self, x: f64, y: f64) -> f64 {
        self.octaves.iter().map(|o| o.eval(x, y)).sum()
    }

    /// Weight in `[0, 1]` at pixel `(x, y)`.
    pub fn weight(&self, x: usize, y: usize) -> f64 {
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        let v = self.value(cx, cy);
        if v <= self.threshold {
            return 0.0;
        }
        if self.threshold == f64::NEG_INFINITY {
            return 1.0;
        }
        let gx = (self.value(cx + 1.0, cy) - self.value(cx - 1.0, cy)) / 2.0;
        let gy = (self.value(cx, cy + 1.0) - self.value(cx, cy - 1.0)) / 2.0;
        let grad = (gx * gx + gy * gy).sqrt().max(1e-9);
        ((v - self.threshold) / grad / self.feather_px).min(1.0)
    }

    pub fn rasterize(&self, width: usize, height: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                out.push(self.weight(x, y));
            }
        }
        out
    }
}

/// Band multiplier at a pixel; a band boundary passes through the frame centre.
#[inline]
pub fn band_alpha(spec: &BandSpec, x: usize, y: usize, width: usize, height: usize) -> f64 {
    let t = (x as f64 + 0.5 - width as f64 / 2.0) * spec.angle_rad.cos()
        + (y as f64 + 0.5 - height as f64 / 2.0) * spec.angle_rad.sin();
    let band = (t / spec.width_px.max(1e-9)).floor() as i64;
    if band.rem_euclid(2) == 0 {
        spec.alpha_low
    } else {
        spec.alpha_high
    }
}
