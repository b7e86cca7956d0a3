//! Block-wise FFT convolution of an image with per-channel PSFs.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::od::quantize;
use crate::imaging::{RasterImage, Rect};

use super::fft::{fast_len, Fft2};
use super::psf::{make_defocus_psf, OpticalParams, PsfKernel};

const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefocusParams {
    pub optics: OpticalParams,
    pub pixel_pitch_um: f64,
}

impl DefocusParams {
    pub fn kernels(&self) -> Result<[PsfKernel; 3]> {
        Ok([
            make_defocus_psf(&self.optics, 0, self.pixel_pitch_um)?,
            make_defocus_psf(&self.optics, 1, self.pixel_pitch_um)?,
            make_defocus_psf(&self.optics, 2, self.pixel_pitch_um)?,
        ])
    }
}

/// Reflect-101 index; repeats periodically when `i` lies far outside.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

struct ChannelPlan {
    kernel: PsfKernel,
    spectrum: Vec<Complex<f64>>,
}

/// Defocus bound to a set of kernels. Output pixels depend only on the
/// input image, so regions can be rendered independently.
pub struct PreparedDefocus {
    channels: Vec<ChannelPlan>,
    len: usize,
    fft: Fft2,
}

impl std::fmt::Debug for PreparedDefocus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PreparedDefocus")
            .field("kernel_sizes", &self.channels.iter().map(|c| c.kernel.size()).collect::<Vec<_>>())
            .field("fft_len", &self.len)
            .finish()
    }
}

impl PreparedDefocus {
    pub fn new(kernels: [PsfKernel; 3]) -> Self {
        let r = kernels.iter().map(PsfKernel::radius).max().unwrap_or(0);
        let len = fast_len(BLOCK + 2 * r);
        let mut planner = FftPlanner::new();
        let fft = Fft2::new(&mut planner, len, len);
        let channels = kernels
            .into_iter()
            .map(|kernel| {
                let mut spectrum = vec![Complex::new(0.0, 0.0); len * len];
                let kr = kernel.radius() as isize;
                for y in 0..kernel.size() {
                    for x in 0..kernel.size() {
                        let dx = (x as isize - kr).rem_euclid(len as isize) as usize;
                        let dy = (y as isize - kr).rem_euclid(len as isize) as usize;
                        spectrum[dy * len + dx] = Complex::new(kernel.get(x, y), 0.0);
                    }
                }
                fft.forward(&mut spectrum);
                ChannelPlan { kernel, spectrum }
            })
            .collect();
        PreparedDefocus { channels, len, fft }
    }

    pub fn from_params(params: &DefocusParams) -> Result<Self> {
        Ok(Self::new(params.kernels()?))
    }

    pub fn kernels(&self) -> Vec<&PsfKernel> {
        self.channels.iter().map(|c| &c.kernel).collect()
    }

    pub fn render_region(&self, image: &RasterImage, rect: Rect) -> Result<RasterImage> {
        if rect.right() > image.width() || rect.bottom() > image.height() {
            return Err(Error::InvalidBuffer(format!("region {rect:?} exceeds the frame")));
        }
        let mut out = image.crop(rect)?;
        let blocks: Vec<Rect> = (0..rect.height)
            .step_by(BLOCK)
            .flat_map(|by| {
                (0..rect.width).step_by(BLOCK).map(move |bx| {
                    Rect::new(
                        rect.x + bx,
                        rect.y + by,
                        BLOCK.min(rect.width - bx),
                        BLOCK.min(rect.height - by),
                    )
                })
            })
            .collect();
        let rendered: Vec<(Rect, Vec<[u8; 3]>)> = blocks
            .into_par_iter()
            .map(|b| (b, self.render_block(image, b)))
            .collect();
        for (b, px) in rendered {
            for (i, p) in px.into_iter().enumerate() {
                out.set_pixel(b.x - rect.x + i % b.width, b.y - rect.y + i / b.width, p);
            }
        }
        Ok(out)
    }

    fn render_block(&self, image: &RasterImage, b: Rect) -> Vec<[u8; 3]> {
        let mut out = vec![[0u8; 3]; b.area()];
        let (w, h) = image.dims();
        let data = image.data();
        for (ch, plan) in self.channels.iter().enumerate() {
            if plan.kernel.is_delta() {
                for (i, p) in out.iter_mut().enumerate() {
                    p[ch] = data[((b.y + i / b.width) * w + b.x + i % b.width) * 3 + ch];
                }
                continue;
            }
            let r = plan.kernel.radius() as isize;
            let n = self.len;
            // window origin sits r pixels above-left of the block
            let mut buf = vec![Complex::new(0.0, 0.0); n * n];
            let wh = (b.height + 2 * r as usize).min(n);
            let ww = (b.width + 2 * r as usize).min(n);
            for wy in 0..wh {
                let sy = reflect(b.y as isize + wy as isize - r, h);
                let row = &data[sy * w * 3..(sy + 1) * w * 3];
                for wx in 0..ww {
                    let sx = reflect(b.x as isize + wx as isize - r, w);
                    buf[wy * n + wx] = Complex::new(f64::from(row[sx * 3 + ch]), 0.0);
                }
            }
            self.fft.forward(&mut buf);
            for (v, k) in buf.iter_mut().zip(&plan.spectrum) {
                *v *= k;
            }
            self.fft.inverse(&mut buf);
            let scale = 1.0 / (n * n) as f64;
            for (i, p) in out.iter_mut().enumerate() {
                let (x, y) = (i % b.width + r as usize, i / b.width + r as usize);
                p[ch] = quantize(buf[y * n + x].re * scale);
            }
        }
        out
    }
}

pub fn apply_defocus(image: &RasterImage, params: &DefocusParams) -> Result<RasterImage> {
    PreparedDefocus::from_params(params)?.render_region(image, image.frame())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn direct(image: &RasterImage, k: &PsfKernel, x: usize, y: usize, ch: usize) -> f64 {
        let r = k.radius() as isize;
        let mut acc = 0.0;
        for ky in 0..k.size() {
            for kx in 0..k.size() {
                let sx = reflect(x as isize + kx as isize - r, image.width());
                let sy = reflect(y as isize + ky as isize - r, image.height());
                acc += k.get(kx, ky) * f64::from(image.pixel(sx, sy)[ch]);
            }
        }
        acc
    }

    #[test]
    fn reflect_indices() {
        let v: Vec<usize> = (-3..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(v, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect(-100, 1), 0);
    }

    #[test]
    fn fft_matches_direct_convolution() {
        let img = synthetic::tissue_patch(40, 33, 2);
        let k = PsfKernel::new(5, (0..25).map(|i| [1.0, 2.0, 3.0, 2.0, 1.0][i % 5] * [1.0, 2.0, 3.0, 2.0, 1.0][i / 5] / 81.0).collect()).unwrap();
        let p = PreparedDefocus::new([k.clone(), PsfKernel::delta(), k.clone()]);
        let out = p.render_region(&img, img.frame()).unwrap();
        for (x, y) in [(0, 0), (39, 32), (17, 5), (3, 30)] {
            for ch in [0, 2] {
                let d = direct(&img, &k, x, y, ch);
                assert!((f64::from(out.pixel(x, y)[ch]) - d).abs() <= 0.5 + 1e-6, "{x},{y}");
            }
            assert_eq!(out.pixel(x, y)[1], img.pixel(x, y)[1]);
        }
    }

    #[test]
    fn region_matches_full_frame() {
        let img = synthetic::tissue_patch(300, 280, 3);
        let k = PsfKernel::new(9, vec![1.0 / 81.0; 81]).unwrap();
        let p = PreparedDefocus::new([k.clone(), k.clone(), k]);
        let full = p.render_region(&img, img.frame()).unwrap();
        let rect = Rect::new(250, 100, 50, 180);
        let part = p.render_region(&img, rect).unwrap();
        assert!(part.max_abs_diff(&full.crop(rect).unwrap()).unwrap() <= 1);
    }

    #[test]
    fn flat_image_is_fixed_point() {
        let img = RasterImage::filled(20, 20, [200, 120, 90]);
        let k = PsfKernel::new(7, vec![1.0 / 49.0; 49]).unwrap();
        let out = PreparedDefocus::new([k.clone(), k.clone(), k]).render_region(&img, img.frame()).unwrap();
        assert_eq!(out, img);
    }
}
