//! Pixel buffers, optical density math, tiling and file I/O.

pub mod io;
pub mod od;
pub mod raster;
pub mod tile;

pub use od::{od_blend_sum, od_to_rgb, rgb_to_od, OpticalDensityMap, DEFAULT_I0};
pub use raster::{LabelImage, RasterImage, Rect};
pub use tile::{split_tiles, stitch_tiles, TileGrid};
