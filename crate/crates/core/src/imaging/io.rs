use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::imaging::raster::{LabelImage, RasterImage};

/// Output container; TIFF inputs stay TIFF, everything else becomes PNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Png,
    Tiff,
}

impl FileFormat {
    pub fn for_input(path: &Path) -> FileFormat {
        match extension(path).as_deref() {
            Some("tif" | "tiff") => FileFormat::Tiff,
            _ => FileFormat::Png,
        }
    }

    fn image_format(self) -> ImageFormat {
        match self {
            FileFormat::Png => ImageFormat::Png,
            FileFormat::Tiff => ImageFormat::Tiff,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            FileFormat::Png => "png",
            FileFormat::Tiff => "tif",
        }
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

pub fn is_supported_image(path: &Path) -> bool {
    matches!(extension(path).as_deref(), Some("png" | "tif" | "tiff"))
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_rgb(path: &Path) -> Result<RasterImage> {
    let img = image::open(path).map_err(image_err(path))?.into_rgb8();
    let (w, h) = img.dimensions();
    RasterImage::new(w as usize, h as usize, img.into_raw())
}

pub fn save_rgb(path: &Path, image: &RasterImage, format: FileFormat) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let buf = RgbImage::from_raw(image.width() as u32, image.height() as u32, image.data().to_vec())
        .expect("buffer length checked at construction");
    buf.save_with_format(path, format.image_format())
        .map_err(image_err(path))
}

pub fn load_label(path: &Path) -> Result<LabelImage> {
    let img = image::open(path).map_err(image_err(path))?.into_luma8();
    let (w, h) = img.dimensions();
    LabelImage::new(w as usize, h as usize, img.into_raw())
}

pub fn save_label(path: &Path, mask: &LabelImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let buf = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, mask.data().to_vec())
        .expect("buffer length checked at construction");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(image_err(path))
}
