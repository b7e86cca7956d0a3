//! Coverage artifacts: stain deposits, air bubbles and knife lines as
//! procedural absorbing stamps added in optical density.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chemical::StainMatrix;
use crate::imaging::od::shift_od;
use crate::imaging::{RasterImage, Rect};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageKind {
    StainDeposit,
    Bubble,
    KnifeLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageParams {
    pub kind: CoverageKind,
    pub count: usize,
    /// Placements are drawn for `max_count` and the first `count` used, so
    /// lower severities are subsets of higher ones.
    pub max_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub x: f64,
    pub y: f64,
    pub rotation: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Granule {
    dx: f64,
    dy: f64,
    radius: f64,
    density: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Deposit { granules: Vec<Granule>, tint: [f64; 3] },
    Bubble { a: f64, b: f64, rim: f64 },
    Knife { half_len: f64, half_width: f64, seed: u64 },
}

const BUBBLE_INTERIOR_OD: f64 = 0.03;
const BUBBLE_RIM_OD: f64 = 0.5;
const KNIFE_OD: f64 = 0.1;
const KNIFE_TINT: [f64; 3] = [1.0, 1.1, 0.95];

#[derive(Debug, Clone, PartialEq)]
struct Stamp {
    placement: Placement,
    shape: Shape,
    /// Inclusive pixel bounds of the support.
    x0: isize,
    y0: isize,
    x1: isize,
    y1: isize,
}

impl Stamp {
    fn new(placement: Placement, shape: Shape) -> Self {
        let reach = match &shape {
            Shape::Deposit { granules, .. } => granules
                .iter()
                .map(|g| g.dx.hypot(g.dy) + g.radius + 1.0)
                .fold(0.0, f64::max),
            Shape::Bubble { a, .. } => a + 1.0,
            Shape::Knife { half_len, half_width, .. } => half_len.hypot(*half_width) + 1.0,
        } * placement.scale;
        Stamp {
            x0: (placement.x - reach).floor() as isize,
            y0: (placement.y - reach).floor() as isize,
            x1: (placement.x + reach).ceil() as isize,
            y1: (placement.y + reach).ceil() as isize,
            placement,
            shape,
        }
    }

    /// `alpha * od` at a pixel centre; exactly zero off the support.
    fn od(&self, x: usize, y: usize) -> [f64; 3] {
        let p = &self.placement;
        let (gx, gy) = (x as f64 + 0.5 - p.x, y as f64 + 0.5 - p.y);
        let (c, s) = (p.rotation.cos(), p.rotation.sin());
        let u = (c * gx + s * gy) / p.scale;
        let v = (-s * gx + c * gy) / p.scale;
        match &self.shape {
            Shape::Deposit { granules, tint } => {
                let mut d = 0.0;
                for g in granules {
                    let dist = (u - g.dx).hypot(v - g.dy);
                    let alpha = (g.radius + 0.5 - dist).clamp(0.0, 1.0);
                    d += alpha * g.density;
                }
                tint.map(|t| t * d)
            }
            Shape::Bubble { a, b, rim } => {
                let rho = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
                let alpha = ((1.0 - rho) * a + 0.5).clamp(0.0, 1.0);
                if alpha == 0.0 {
                    return [0.0; 3];
                }
                let t = rim / a;
                let mid = 1.0 - t / 2.0;
                let ring = (1.0 - ((rho - mid) / (t / 2.0)).powi(2)).max(0.0);
                let od = alpha * (BUBBLE_INTERIOR_OD + BUBBLE_RIM_OD * ring);
                [od; 3]
            }
            Shape::Knife { half_len, half_width, seed } => {
                let across = (half_width + 0.5 - v.abs()).clamp(0.0, 1.0);
                let along = ((half_len - u.abs()) / 4.0).clamp(0.0, 1.0);
                let a = across * along;
                if a == 0.0 {
                    return [0.0; 3];
                }
                let t = u / 8.0;
                let (i, f) = (t.floor(), t - t.floor());
                let n0 = rng::lattice_uniform(*seed, i as i64, 0);
                let n1 = rng::lattice_uniform(*seed, i as i64 + 1, 0);
                let wobble = 0.7 + 0.6 * (n0 + (n1 - n0) * f);
                KNIFE_TINT.map(|k| a * KNIFE_OD * wobble * k)
            }
        }
    }
}

/// Placed stamps for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTemplate {
    pub kind: CoverageKind,
    stamps: Vec<Stamp>,
}

impl CoverageTemplate {
    pub fn generate(params: &CoverageParams, width: usize, height: usize) -> Self {
        let mut r = rng::stream(params.seed, "coverage-placements");
        let frame = width.min(height) as f64;
        let total = params.max_count.max(params.count);
        let mut stamps = Vec::with_capacity(params.count);
        for k in 0..total {
            let placement = Placement {
                x: r.random_range(0.0..width as f64),
                y: r.random_range(0.0..height as f64),
                rotation: r.random_range(0.0..2.0 * PI),
                scale: r.random_range(0.8..1.25),
            };
            let shape = match params.kind {
                CoverageKind::StainDeposit => {
                    let reach = frame * r.random_range(0.03..0.07);
                    let n = r.random_range(10..=30);
                    let granules = (0..n)
                        .map(|_| {
                            let rad = reach * r.random::<f64>().sqrt();
                            let th = r.random_range(0.0..2.0 * PI);
                            Granule {
                                dx: rad * th.cos(),
                                dy: rad * th.sin(),
                                radius: (frame * r.random_range(0.004..0.01)).max(1.0),
                                density: r.random_range(0.8..1.6),
                            }
                        })
                        .collect();
                    Shape::Deposit {
                        granules,
                        tint: StainMatrix::reference().hematoxylin(),
                    }
                }
                CoverageKind::Bubble => {
                    let a = frame * r.random_range(0.06..0.14);
                    Shape::Bubble {
                        a,
                        b: a * r.random_range(0.7..1.0),
                        rim: (0.08 * a).max(1.5),
                    }
                }
                CoverageKind::KnifeLine => Shape::Knife {
                    half_len: frame * r.random_range(0.25..0.55),
                    half_width: (frame * r.random_range(0.002..0.006)).max(1.0),
                    seed: r.random(),
                },
            };
            if k < params.count {
                stamps.push(Stamp::new(placement, shape));
            }
        }
        CoverageTemplate {
            kind: params.kind,
            stamps,
        }
    }

    pub fn placements(&self) -> Vec<Placement> {
        self.stamps.iter().map(|s| s.placement).collect()
    }

    /// Summed `alpha * od` at pixel `(x, y)`.
    pub fn od_at(&self, x: usize, y: usize) -> [f64; 3] {
        let (xi, yi) = (x as isize, y as isize);
        let mut acc = [0.0; 3];
        for s in &self.stamps {
            if xi < s.x0 || xi > s.x1 || yi < s.y0 || yi > s.y1 {
                continue;
            }
            let d = s.od(x, y);
            for c in 0..3 {
                acc[c] += d[c];
            }
        }
        acc
    }

    /// Pixels where any stamp adds density.
    pub fn support(&self, width: usize, height: usize) -> Vec<bool> {
        (0..width * height)
            .into_par_iter()
            .map(|i| self.od_at(i % width, i / width).iter().any(|&v| v > 0.0))
            .collect()
    }

    pub fn render_region(&self, image: &RasterImage, rect: Rect) -> RasterImage {
        let w = image.width();
        let mut out = vec![0u8; rect.area() * 3];
        out.par_chunks_mut(rect.width * 3).enumerate().for_each(|(ry, row)| {
            let y = rect.y + ry;
            for rx in 0..rect.width {
                let x = rect.x + rx;
                let i = (y * w + x) * 3;
                let d = self.od_at(x, y);
                for c in 0..3 {
                    let v = image.data()[i + c];
                    row[rx * 3 + c] = if d[c] > 0.0 { shift_od(v, d[c]) } else { v };
                }
            }
        });
        RasterImage::new(rect.width, rect.height, out).expect("region buffer sized from rect")
    }
}

pub fn apply_coverage(image: &RasterImage, params: &CoverageParams) -> RasterImage {
    CoverageTemplate::generate(params, image.width(), image.height()).render_region(image, image.frame())
}
