//! Colour casts and exposure errors as per-channel gains on stored values.

use rayon::prelude::*;

use crate::imaging::od::quantize;
use crate::imaging::{RasterImage, Rect};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGains(pub [f64; 3]);

impl ChannelGains {
    pub fn uniform(gain: f64) -> Self {
        ChannelGains([gain; 3])
    }

    /// Cold cast for `shift > 0`: less red, more blue.
    pub fn cold(shift: f64) -> Self {
        ChannelGains([1.0 - shift, 1.0, 1.0 + shift])
    }

    pub fn warm(shift: f64) -> Self {
        ChannelGains([1.0 + shift, 1.0, 1.0 - shift])
    }

    pub fn render_region(&self, image: &RasterImage, rect: Rect) -> RasterImage {
        let w = image.width();
        let g = self.0;
        let mut out = vec![0u8; rect.area() * 3];
        out.par_chunks_mut(rect.width * 3).enumerate().for_each(|(ry, row)| {
            let src = &image.data()[((rect.y + ry) * w + rect.x) * 3..][..rect.width * 3];
            for (i, (o, s)) in row.iter_mut().zip(src).enumerate() {
                *o = quantize(f64::from(*s) * g[i % 3]);
            }
        });
        RasterImage::new(rect.width, rect.height, out).expect("region buffer sized from rect")
    }
}

pub fn apply_color_cast(image: &RasterImage, gains: [f64; 3]) -> RasterImage {
    ChannelGains(gains).render_region(image, image.frame())
}

pub fn apply_exposure(image: &RasterImage, gain: f64) -> RasterImage {
    ChannelGains::uniform(gain).render_region(image, image.frame())
}
