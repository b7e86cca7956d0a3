//! Procedural H&E-like fixtures for tests, benchmarks and demos.

use rand::Rng;
use rayon::prelude::*;

use crate::chemical::StainMatrix;
use crate::imaging::od::{od_to_intensity, quantize, DEFAULT_I0};
use crate::imaging::{LabelImage, RasterImage};
use crate::rng;

fn smooth_noise(seed: u64, x: f64, y: f64, spacing: f64) -> f64 {
    let (u, v) = (x / spacing, y / spacing);
    let (i, j) = (u.floor() as i64, v.floor() as i64);
    let (fu, fv) = (u - u.floor(), v - v.floor());
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (a, b) = (s(fu), s(fv));
    let n = |di: i64, dj: i64| rng::lattice_uniform(seed, i + di, j + dj);
    let top = n(0, 0) * (1.0 - a) + n(1, 0) * a;
    let bot = n(0, 1) * (1.0 - a) + n(1, 1) * a;
    top * (1.0 - b) + bot * b
}

struct Nucleus {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    angle: f64,
    density: f64,
}

fn nuclei(width: usize, height: usize, seed: u64) -> Vec<Nucleus> {
    let mut r = rng::stream(seed, "synthetic-nuclei");
    let count = ((width * height) as f64 / 260.0).ceil() as usize;
    (0..count)
        .map(|_| {
            let rx = r.random_range(2.5..6.0);
            Nucleus {
                cx: r.random_range(0.0..width as f64),
                cy: r.random_range(0.0..height as f64),
                rx,
                ry: rx * r.random_range(0.55..1.0),
                angle: r.random_range(0.0..std::f64::consts::PI),
                density: r.random_range(0.7..1.3),
            }
        })
        .collect()
}

/// Hematoxylin concentration field from nuclei, plus a nucleus label mask.
fn nuclear_layers(width: usize, height: usize, seed: u64) -> (Vec<f32>, LabelImage) {
    let mut h = vec![0f32; width * height];
    let mut mask = LabelImage::zeros(width, height);
    for n in nuclei(width, height, seed) {
        let r = n.rx.max(n.ry) + 1.0;
        let x0 = (n.cx - r).floor().max(0.0) as usize;
        let y0 = (n.cy - r).floor().max(0.0) as usize;
        let x1 = ((n.cx + r).ceil() as usize).min(width);
        let y1 = ((n.cy + r).ceil() as usize).min(height);
        let (c, s) = (n.angle.cos(), n.angle.sin());
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - n.cx;
                let dy = y as f64 + 0.5 - n.cy;
                let u = (dx * c + dy * s) / n.rx;
                let v = (-dx * s + dy * c) / n.ry;
                let d2 = u * u + v * v;
                if d2 < 1.0 {
                    let i = y * width + x;
                    let val = (n.density * (1.0 - 0.35 * d2)) as f32;
                    h[i] = h[i].max(val);
                    mask.set(x, y, 1);
                }
            }
        }
    }
    (h, mask)
}

/// H&E-like patch: eosin stroma with lumens, hematoxylin nuclei, mild noise.
pub fn tissue_patch(width: usize, height: usize, seed: u64) -> RasterImage {
    tissue_with_mask(width, height, seed).0
}

/// Tissue image and the matching binary nucleus mask.
pub fn tissue_with_mask(width: usize, height: usize, seed: u64) -> (RasterImage, LabelImage) {
    let stains = StainMatrix::reference();
    let (hc, mask) = nuclear_layers(width, height, seed);
    let stroma_seed = rng::sub_seed(seed, "stroma");
    let lumen_seed = rng::sub_seed(seed, "lumen");
    let grain_seed = rng::sub_seed(seed, "grain");
    let mut data = vec![0u8; width * height * 3];
    data.par_chunks_mut(width * 3).enumerate().for_each(|(y, row)| {
        for x in 0..width {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let lumen = smooth_noise(lumen_seed, fx, fy, 40.0);
            let open = ((lumen - 0.72) / 0.06).clamp(0.0, 1.0);
            let stroma = 0.25 + 0.45 * smooth_noise(stroma_seed, fx, fy, 14.0)
                + 0.15 * smooth_noise(stroma_seed ^ 1, fx, fy, 4.0);
            let grain = 0.04 * (rng::lattice_uniform(grain_seed, x as i64, y as i64) - 0.5);
            let ce = (stroma * (1.0 - open) + grain).max(0.0);
            let ch = f64::from(hc[y * width + x]) * (1.0 - 0.8 * open);
            let od = stains.mix([ch, ce]);
            for c in 0..3 {
                row[x * 3 + c] = quantize(od_to_intensity(od[c] + 0.02, DEFAULT_I0));
            }
        }
    });
    (
        RasterImage::new(width, height, data).expect("sized from dimensions"),
        mask,
    )
}
