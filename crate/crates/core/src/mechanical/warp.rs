//! Piecewise-affine image warping.
//!
//! Each destination triangle is scan-converted with fixed-point edge
//! functions and a top-left fill rule, then sampled from the source through
//! the inverse affine map. Where folded pieces overlap, their optical
//! densities add; pixels no piece reaches are gaps and stay white.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::od::{intensity_to_od, od_to_intensity, quantize, DEFAULT_I0};
use crate::imaging::raster::ensure_same_dims;
use crate::imaging::{LabelImage, RasterImage, Rect};

use super::template::DeformationTemplate;

const FP: f64 = 256.0;
const BUCKET_ROWS: usize = 16;
const DEGENERATE_AREA: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarpDiagnostics {
    pub degenerate_cells: usize,
    pub identity: bool,
}

#[derive(Debug, Clone)]
pub struct WarpResult {
    pub image: RasterImage,
    /// Number of pieces landing on each pixel.
    pub overlap: Vec<u16>,
    pub gap: Vec<bool>,
    pub diagnostics: WarpDiagnostics,
}

#[derive(Debug, Clone)]
struct Cell {
    v: [[i64; 2]; 3],
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    /// dst pixel -> src pixel: `[a, b, c, d, e, f]` with `sx = a x + b y + c`.
    inv: [f64; 6],
}

impl Cell {
    #[inline]
    fn covers(&self, px: i64, py: i64) -> bool {
        (0..3).all(|k| {
            let a = self.v[k];
            let b = self.v[(k + 1) % 3];
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let e = dx * (py - a[1]) - dy * (px - a[0]);
            e > 0 || (e == 0 && (dy > 0 || (dy == 0 && dx < 0)))
        })
    }

    #[inline]
    fn source(&self, x: usize, y: usize) -> (f64, f64) {
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        let m = &self.inv;
        (m[0] * cx + m[1] * cy + m[2], m[3] * cx + m[4] * cy + m[5])
    }
}

/// A deformation bound to a frame size. Rendering any sub-rectangle
/// reproduces the corresponding pixels of the full-frame render.
#[derive(Debug, Clone)]
pub struct PreparedWarp {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    buckets: Vec<Vec<u32>>,
    diagnostics: WarpDiagnostics,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    first: [f64; 3],
    od: [f64; 3],
    count: u16,
}

impl PreparedWarp {
    pub fn new(template: &DeformationTemplate, width: usize, height: usize) -> Result<Self> {
        template.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::InvalidBuffer("zero-sized frame".into()));
        }
        let mut diagnostics = WarpDiagnostics {
            identity: template.is_identity(),
            ..Default::default()
        };
        let (w, h) = (width as f64, height as f64);
        let mut cells = Vec::with_capacity(template.cells.len());
        for c in &template.cells {
            let s = c.map(|i| template.src[i as usize]);
            let d = c.map(|i| template.dst[i as usize]);
            let area = ((d[1][0] - d[0][0]) * (d[2][1] - d[0][1]) - (d[1][1] - d[0][1]) * (d[2][0] - d[0][0])) / 2.0;
            if area.abs() < DEGENERATE_AREA {
                diagnostics.degenerate_cells += 1;
                continue;
            }
            let dp = d.map(|p| [p[0] * w, p[1] * h]);
            let sp = s.map(|p| [p[0] * w, p[1] * h]);
            let Some(inv) = affine(dp, sp) else {
                diagnostics.degenerate_cells += 1;
                continue;
            };
            let mut v = dp.map(|p| [(p[0] * FP).round() as i64, (p[1] * FP).round() as i64]);
            if area < 0.0 {
                v.swap(1, 2);
            }
            let range = |k: usize, n: usize| -> Option<(usize, usize)> {
                let lo = v.iter().map(|p| p[k]).min().expect("three vertices") as f64 / FP;
                let hi = v.iter().map(|p| p[k]).max().expect("three vertices") as f64 / FP;
                let a = (lo - 0.5).ceil().max(0.0);
                let b = (hi - 0.5).floor().min(n as f64 - 1.0);
                (b >= a).then_some((a as usize, b as usize))
            };
            let (Some((x0, x1)), Some((y0, y1))) = (range(0, width), range(1, height)) else {
                continue;
            };
            cells.push(Cell { v, x0, x1, y0, y1, inv });
        }
        let mut buckets = vec![Vec::new(); height.div_ceil(BUCKET_ROWS)];
        for (i, c) in cells.iter().enumerate() {
            for b in &mut buckets[c.y0 / BUCKET_ROWS..=c.y1 / BUCKET_ROWS] {
                b.push(i as u32);
            }
        }
        Ok(PreparedWarp {
            width,
            height,
            cells,
            buckets,
            diagnostics,
        })
    }

    pub fn diagnostics(&self) -> &WarpDiagnostics {
        &self.diagnostics
    }

    fn for_each_hit(&self, y: usize, x0: usize, x1: usize, mut f: impl FnMut(usize, &Cell)) {
        let py = (2 * y as i64 + 1) * (FP as i64 / 2);
        for &ci in &self.buckets[y / BUCKET_ROWS] {
            let c = &self.cells[ci as usize];
            if y < c.y0 || y > c.y1 {
                continue;
            }
            for x in c.x0.max(x0)..=c.x1.min(x1.saturating_sub(1)) {
                if x >= x1 {
                    break;
                }
                let px = (2 * x as i64 + 1) * (FP as i64 / 2);
                if c.covers(px, py) {
                    f(x - x0, c);
                }
            }
        }
    }

    fn accumulate_row(&self, image: &RasterImage, y: usize, rect: Rect, lut: &[f64; 256]) -> Vec<Acc> {
        let mut acc = vec![Acc::default(); rect.width];
        self.for_each_hit(y, rect.x, rect.right(), |i, c| {
            let (sx, sy) = c.source(rect.x + i, y);
            let rgb = bilinear(image, sx, sy);
            let a = &mut acc[i];
            if a.count == 0 {
                a.first = rgb;
            }
            for ch in 0..3 {
                a.od[ch] += od_of(rgb[ch], lut);
            }
            a.count = a.count.saturating_add(1);
        });
        acc
    }

    fn check_frame(&self, w: usize, h: usize, rect: Rect) -> Result<()> {
        ensure_same_dims((self.width, self.height), (w, h))?;
        if rect.right() > w || rect.bottom() > h {
            return Err(Error::InvalidBuffer(format!("region {rect:?} exceeds {w}x{h} frame")));
        }
        Ok(())
    }

    pub fn render_region(&self, image: &RasterImage, rect: Rect) -> Result<RasterImage> {
        self.render_region_full(image, rect).map(|r| r.image)
    }

    /// Warped region together with overlap counts and gap flags.
    pub fn render_region_full(&self, image: &RasterImage, rect: Rect) -> Result<WarpResult> {
        self.check_frame(image.width(), image.height(), rect)?;
        if self.diagnostics.identity {
            return Ok(WarpResult {
                image: image.crop(rect)?,
                overlap: vec![1; rect.area()],
                gap: vec![false; rect.area()],
                diagnostics: self.diagnostics.clone(),
            });
        }
        let lut = od_table();
        let rows: Vec<(Vec<u8>, Vec<u16>, Vec<bool>)> = (rect.y..rect.bottom())
            .into_par_iter()
            .map(|y| {
                let acc = self.accumulate_row(image, y, rect, &lut);
                let mut px = Vec::with_capacity(rect.width * 3);
                for a in &acc {
                    match a.count {
                        0 => px.extend([255, 255, 255]),
                        1 => px.extend(a.first.map(quantize)),
                        _ => px.extend(a.od.map(|od| quantize(od_to_intensity(od, DEFAULT_I0)))),
                    }
                }
                let overlap = acc.iter().map(|a| a.count).collect();
                let gap = acc.iter().map(|a| a.count == 0).collect();
                (px, overlap, gap)
            })
            .collect();
        let mut data = Vec::with_capacity(rect.area() * 3);
        let mut overlap = Vec::with_capacity(rect.area());
        let mut gap = Vec::with_capacity(rect.area());
        for (p, o, g) in rows {
            data.extend(p);
            overlap.extend(o);
            gap.extend(g);
        }
        Ok(WarpResult {
            image: RasterImage::new(rect.width, rect.height, data)?,
            overlap,
            gap,
            diagnostics: self.diagnostics.clone(),
        })
    }

    /// Unquantized output optical density per pixel and channel. Overlaps
    /// are exact sums of the contributing pieces; gaps are zero.
    pub fn render_od_region(&self, image: &RasterImage, rect: Rect) -> Result<Vec<[f64; 3]>> {
        self.check_frame(image.width(), image.height(), rect)?;
        let lut = od_table();
        if self.diagnostics.identity {
            let crop = image.crop(rect)?;
            return Ok(crop.data().chunks_exact(3).map(|p| [0, 1, 2].map(|c| lut[p[c] as usize])).collect());
        }
        let rows: Vec<Vec<[f64; 3]>> = (rect.y..rect.bottom())
            .into_par_iter()
            .map(|y| self.accumulate_row(image, y, rect, &lut).iter().map(|a| a.od).collect())
            .collect();
        Ok(rows.concat())
    }

    /// Moves a label mask with the same geometry: nearest-neighbour
    /// sampling, the larger label wins on overlaps, gaps are 0.
    pub fn render_mask_region(&self, mask: &LabelImage, rect: Rect) -> Result<LabelImage> {
        let (w, h) = mask.dims();
        self.check_frame(w, h, rect)?;
        if self.diagnostics.identity {
            return mask.crop(rect);
        }
        let rows: Vec<Vec<u8>> = (rect.y..rect.bottom())
            .into_par_iter()
            .map(|y| {
                let mut row = vec![0u8; rect.width];
                self.for_each_hit(y, rect.x, rect.right(), |i, c| {
                    let (sx, sy) = c.source(rect.x + i, y);
                    let xi = (sx.floor().max(0.0) as usize).min(w - 1);
                    let yi = (sy.floor().max(0.0) as usize).min(h - 1);
                    row[i] = row[i].max(mask.get(xi, yi));
                });
                row
            })
            .collect();
        LabelImage::new(rect.width, rect.height, rows.concat())
    }
}

fn od_table() -> [f64; 256] {
    std::array::from_fn(|i| intensity_to_od(i as f64, DEFAULT_I0))
}

#[inline]
fn od_of(v: f64, lut: &[f64; 256]) -> f64 {
    if v.fract() == 0.0 {
        lut[v as usize]
    } else {
        intensity_to_od(v, DEFAULT_I0)
    }
}

/// Affine map sending triangle `from` onto `to`, as `[a, b, c, d, e, f]`.
fn affine(from: [[f64; 2]; 3], to: [[f64; 2]; 3]) -> Option<[f64; 6]> {
    let (e1, e2) = (
        [from[1][0] - from[0][0], from[1][1] - from[0][1]],
        [from[2][0] - from[0][0], from[2][1] - from[0][1]],
    );
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    if det.abs() < 1e-12 {
        return None;
    }
    // inverse of [e1 e2] (columns)
    let inv = [[e2[1] / det, -e2[0] / det], [-e1[1] / det, e1[0] / det]];
    let (t1, t2) = (
        [to[1][0] - to[0][0], to[1][1] - to[0][1]],
        [to[2][0] - to[0][0], to[2][1] - to[0][1]],
    );
    // M = [t1 t2] * inv
    let a = t1[0] * inv[0][0] + t2[0] * inv[1][0];
    let b = t1[0] * inv[0][1] + t2[0] * inv[1][1];
    let d = t1[1] * inv[0][0] + t2[1] * inv[1][0];
    let e = t1[1] * inv[0][1] + t2[1] * inv[1][1];
    let c = to[0][0] - a * from[0][0] - b * from[0][1];
    let f = to[0][1] - d * from[0][0] - e * from[0][1];
    Some([a, b, c, d, e, f])
}

#[inline]
fn bilinear(image: &RasterImage, sx: f64, sy: f64) -> [f64; 3] {
    let (w, h) = (image.width(), image.height());
    let fx = (sx - 0.5).clamp(0.0, (w - 1) as f64);
    let fy = (sy - 0.5).clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    let d = image.data();
    let at = |x: usize, y: usize, c: usize| f64::from(d[(y * w + x) * 3 + c]);
    std::array::from_fn(|c| {
        let top = at(x0, y0, c) * (1.0 - tx) + at(x1, y0, c) * tx;
        let bot = at(x0, y1, c) * (1.0 - tx) + at(x1, y1, c) * tx;
        top * (1.0 - ty) + bot * ty
    })
}

pub fn apply_piecewise_affine(image: &RasterImage, template: &DeformationTemplate) -> Result<WarpResult> {
    PreparedWarp::new(template, image.width(), image.height())?.render_region_full(image, image.frame())
}

pub fn co_deform_mask(mask: &LabelImage, template: &DeformationTemplate) -> Result<LabelImage> {
    let (w, h) = mask.dims();
    PreparedWarp::new(template, w, h)?.render_mask_region(mask, Rect::full(w, h))
}
