use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Rect {
            x,
            y,
            width,
            height,
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Rect::new(0, 0, width, height)
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn right(&self) -> usize {
        self.x + self.width
    }

    pub fn bottom(&self) -> usize {
        self.y + self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }
}

/// 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidBuffer(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidBuffer(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        RasterImage {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RasterImage {
            width,
            height,
            data,
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

    pub fn frame(&self) -> Rect {
        Rect::full(self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, u8> {
        self.data.chunks_exact(self.width * 3)
    }

    pub fn crop(&self, rect: Rect) -> Result<RasterImage> {
        self.check_rect(rect)?;
        let mut data = Vec::with_capacity(rect.area() * 3);
        for y in rect.y..rect.bottom() {
            let start = (y * self.width + rect.x) * 3;
            data.extend_from_slice(&self.data[start..start + rect.width * 3]);
        }
        RasterImage::new(rect.width, rect.height, data)
    }

    /// Copies `tile` into this image with its top-left corner at `(x, y)`.
    pub fn paste(&mut self, x: usize, y: usize, tile: &RasterImage) -> Result<()> {
        self.check_rect(Rect::new(x, y, tile.width, tile.height))?;
        for (ty, row) in tile.rows().enumerate() {
            let start = ((y + ty) * self.width + x) * 3;
            self.data[start..start + row.len()].copy_from_slice(row);
        }
        Ok(())
    }

    fn check_rect(&self, rect: Rect) -> Result<()> {
        if rect.width == 0 || rect.height == 0 || rect.right() > self.width || rect.bottom() > self.height {
            return Err(Error::InvalidBuffer(format!(
                "rect {rect:?} does not fit a {}x{} image",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn mean_intensity(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len() as f64
    }

    /// Mean absolute per-channel difference.
    pub fn mean_abs_diff(&self, other: &RasterImage) -> Result<f64> {
        ensure_same_dims(self.dims(), other.dims())?;
        let total: u64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| u64::from(a.abs_diff(b)))
            .sum();
        Ok(total as f64 / self.data.len() as f64)
    }

    pub fn max_abs_diff(&self, other: &RasterImage) -> Result<u8> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.abs_diff(b))
            .max()
            .unwrap_or(0))
    }
}

/// Single-channel label image (segmentation mask); 0 is background.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidBuffer(format!(
                "label buffer of {} bytes does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(LabelImage {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        LabelImage {
            width,
            height,
            data: vec![0; width * height],
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

    pub fn frame(&self) -> Rect {
        Rect::full(self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.data[y * self.width + x] = label;
    }

    pub fn crop(&self, rect: Rect) -> Result<LabelImage> {
        if rect.right() > self.width || rect.bottom() > self.height {
            return Err(Error::InvalidBuffer(format!("rect {rect:?} outside mask")));
        }
        let mut data = Vec::with_capacity(rect.area());
        for y in rect.y..rect.bottom() {
            let start = y * self.width + rect.x;
            data.extend_from_slice(&self.data[start..start + rect.width]);
        }
        LabelImage::new(rect.width, rect.height, data)
    }

    pub fn paste(&mut self, x: usize, y: usize, tile: &LabelImage) -> Result<()> {
        if x + tile.width > self.width || y + tile.height > self.height {
            return Err(Error::InvalidBuffer("tile outside mask".into()));
        }
        for ty in 0..tile.height {
            let src = &tile.data[ty * tile.width..(ty + 1) * tile.width];
            let start = (y + ty) * self.width + x;
            self.data[start..start + tile.width].copy_from_slice(src);
        }
        Ok(())
    }
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            expected_w: expected.0,
            expected_h: expected.1,
            got_w: got.0,
            got_h: got.1,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(RasterImage::new(0, 4, vec![]).is_err());
        assert!(RasterImage::new(2, 2, vec![0; 11]).is_err());
        assert!(RasterImage::new(2, 2, vec![0; 12]).is_ok());
        assert!(LabelImage::new(3, 3, vec![0; 8]).is_err());
    }

    #[test]
    fn crop_paste() {
        let img = RasterImage::from_fn(5, 4, |x, y| [x as u8, y as u8, 7]);
        let c = img.crop(Rect::new(1, 2, 3, 2)).unwrap();
        assert_eq!(c.pixel(0, 0), [1, 2, 7]);
        assert_eq!(c.pixel(2, 1), [3, 3, 7]);
        let mut blank = RasterImage::filled(5, 4, [0, 0, 0]);
        blank.paste(1, 2, &c).unwrap();
        assert_eq!(blank.pixel(3, 3), [3, 3, 7]);
        assert!(blank.paste(4, 3, &c).is_err());
    }
}
