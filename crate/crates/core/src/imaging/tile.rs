use crate::error::{Error, Result};
use crate::imaging::raster::{ensure_same_dims, RasterImage, Rect};

/// Exact partition of a `width x height` frame into tiles of at most
/// `tile_size` pixels per side, row-major order. Edge tiles are ragged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub width: usize,
    pub height: usize,
    pub tile_size: usize,
    pub tiles: Vec<Rect>,
}

impl TileGrid {
    pub fn new(width: usize, height: usize, tile_size: usize) -> Self {
        assert!(tile_size >= 1, "tile size must be at least 1");
        let mut tiles = Vec::new();
        for y in (0..height).step_by(tile_size) {
            for x in (0..width).step_by(tile_size) {
                tiles.push(Rect::new(
                    x,
                    y,
                    tile_size.min(width - x),
                    tile_size.min(height - y),
                ));
            }
        }
        TileGrid {
            width,
            height,
            tile_size,
            tiles,
        }
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

pub fn split_tiles(image: &RasterImage, tile_size: usize) -> (TileGrid, Vec<RasterImage>) {
    let grid = TileGrid::new(image.width(), image.height(), tile_size);
    let tiles = grid
        .tiles
        .iter()
        .map(|&r| image.crop(r).expect("grid tiles lie inside the frame"))
        .collect();
    (grid, tiles)
}

pub fn stitch_tiles(grid: &TileGrid, tiles: &[RasterImage]) -> Result<RasterImage> {
    if tiles.len() != grid.tiles.len() {
        return Err(Error::InvalidBuffer(format!(
            "grid has {} tiles, got {}",
            grid.tiles.len(),
            tiles.len()
        )));
    }
    let mut out = RasterImage::filled(grid.width, grid.height, [0, 0, 0]);
    for (rect, tile) in grid.tiles.iter().zip(tiles) {
        ensure_same_dims((rect.width, rect.height), tile.dims())?;
        out.paste(rect.x, rect.y, tile)?;
    }
    Ok(out)
}
