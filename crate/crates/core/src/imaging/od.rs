//! Optical density (Beer-Lambert) domain. Stain layers and overlays add
//! linearly here, which is why every compositing step in the engines goes
//! through OD rather than intensity.

use crate::error::Result;
use crate::imaging::raster::{ensure_same_dims, RasterImage};

/// White reference for 8-bit imagery.
pub const DEFAULT_I0: f64 = 255.0;

#[inline]
pub fn intensity_to_od(intensity: f64, i0: f64) -> f64 {
    // zero intensity is clamped to one so OD stays finite
    (-(intensity.max(1.0) / i0).log10()).max(0.0)
}

#[inline]
pub fn od_to_intensity(od: f64, i0: f64) -> f64 {
    i0 * 10f64.powf(-od)
}

/// Rounds half away from zero and clamps to the 8-bit range.
#[inline]
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

/// Adds `delta_od` to the optical density of an 8-bit intensity and returns
/// the quantized result. Works on the exact stored value, so a zero delta
/// is a bit-exact identity.
#[inline]
pub fn shift_od(intensity: u8, delta_od: f64) -> u8 {
    if delta_od == 0.0 {
        return intensity;
    }
    quantize(f64::from(intensity) * 10f64.powf(-delta_od))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalDensityMap {
    width: usize,
    height: usize,
    i0: f64,
    data: Vec<f64>,
}

impl OpticalDensityMap {
    pub fn new(width: usize, height: usize, i0: f64, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(crate::Error::InvalidBuffer(format!(
                "OD buffer of {} values does not match {width}x{height}x3",
                data.len()
            )));
        }
        if data.iter().any(|v| !(*v >= 0.0)) {
            return Err(crate::Error::InvalidBuffer(
                "optical density must be finite and nonnegative".into(),
            ));
        }
        Ok(OpticalDensityMap {
            width,
            height,
            i0,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, i0: f64) -> Self {
        OpticalDensityMap {
            width,
            height,
            i0,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn i0(&self) -> f64 {
        self.i0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_od(&self) -> f64 {
        -(1.0 / self.i0).log10()
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, od: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&od);
    }
}

/// Per-channel `OD = -log10(max(I, 1) / I0)`.
pub fn rgb_to_od(image: &RasterImage, i0: f64) -> OpticalDensityMap {
    assert!(i0 > 0.0, "white reference must be positive");
    let lut: Vec<f64> = (0..=255u8).map(|v| intensity_to_od(f64::from(v), i0)).collect();
    OpticalDensityMap {
        width: image.width(),
        height: image.height(),
        i0,
        data: image.data().iter().map(|&v| lut[v as usize]).collect(),
    }
}

/// `I = round(I0 * 10^-OD)`, clamped to `[0, 255]`.
pub fn od_to_rgb(od: &OpticalDensityMap) -> RasterImage {
    let data = od.data.iter().map(|&v| quantize(od_to_intensity(v, od.i0))).collect();
    RasterImage::new(od.width, od.height, data).expect("dimensions carried over from a valid map")
}

/// `OD_out = OD_base + alpha * OD_overlay`, with one alpha per pixel.
pub fn od_blend_sum(
    base: &OpticalDensityMap,
    overlay: &OpticalDensityMap,
    alpha_mask: &[f64],
) -> Result<OpticalDensityMap> {
    ensure_same_dims(base.dims(), overlay.dims())?;
    let n = base.width * base.height;
    if alpha_mask.len() != n {
        return Err(crate::Error::InvalidBuffer(format!(
            "alpha mask has {} entries, expected {n}",
            alpha_mask.len()
        )));
    }
    let data = base
        .data
        .chunks_exact(3)
        .zip(overlay.data.chunks_exact(3))
        .zip(alpha_mask)
        .flat_map(|((b, o), &a)| {
            let a = a.clamp(0.0, 1.0);
            [b[0] + a * o[0], b[1] + a * o[1], b[2] + a * o[2]]
        })
        .collect();
    Ok(OpticalDensityMap {
        width: base.width,
        height: base.height,
        i0: base.i0,
        data,
    })
}
