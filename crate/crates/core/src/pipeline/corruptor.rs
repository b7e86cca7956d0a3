//! Dispatch from a corruption spec to the owning engine.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::chemical::PreparedStain;
use crate::error::{Error, Result};
use crate::imaging::raster::ensure_same_dims;
use crate::imaging::{stitch_tiles, LabelImage, RasterImage, Rect, TileGrid};
use crate::kind::CorruptionSpec;
use crate::mechanical::PreparedWarp;
use crate::optical::{ChannelGains, CoverageTemplate, DefocusParams, PreparedDefocus};
use crate::severity::{CorruptionParams, SeverityTable};

/// One corruption bound to one frame, ready to render any region of it.
#[derive(Debug)]
pub enum PreparedCorruption {
    Stain(PreparedStain),
    Warp(PreparedWarp),
    Gains(ChannelGains),
    Defocus(Arc<PreparedDefocus>),
    Coverage(CoverageTemplate),
}

impl PreparedCorruption {
    pub fn render_region(&self, image: &RasterImage, rect: Rect) -> Result<RasterImage> {
        match self {
            PreparedCorruption::Stain(p) => Ok(p.render_region(image, rect)),
            PreparedCorruption::Warp(p) => p.render_region(image, rect),
            PreparedCorruption::Gains(g) => Ok(g.render_region(image, rect)),
            PreparedCorruption::Defocus(d) => d.render_region(image, rect),
            PreparedCorruption::Coverage(c) => Ok(c.render_region(image, rect)),
        }
    }

    /// Geometry-following mask region; non-deformations pass masks through.
    pub fn render_mask_region(&self, mask: &LabelImage, rect: Rect) -> Result<LabelImage> {
        match self {
            PreparedCorruption::Warp(p) => p.render_mask_region(mask, rect),
            _ => mask.crop(rect),
        }
    }
}

/// Corruption context: the severity table plus a cache of defocus kernels,
/// which are expensive to build and shared by every image at a level.
#[derive(Debug)]
pub struct Corruptor {
    table: SeverityTable,
    defocus_cache: Mutex<HashMap<String, Arc<PreparedDefocus>>>,
}

impl Default for Corruptor {
    fn default() -> Self {
        Self::new(SeverityTable::builtin())
    }
}

impl Corruptor {
    pub fn new(table: SeverityTable) -> Self {
        Corruptor {
            table,
            defocus_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn table(&self) -> &SeverityTable {
        &self.table
    }

    pub fn params(&self, spec: &CorruptionSpec) -> Result<CorruptionParams> {
        self.table.params_for(spec)
    }

    fn defocus(&self, params: &DefocusParams) -> Result<Arc<PreparedDefocus>> {
        let key = CorruptionParams::Defocus(*params).digest();
        if let Some(d) = self.defocus_cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(d));
        }
        let built = Arc::new(PreparedDefocus::from_params(params)?);
        let mut cache = self.defocus_cache.lock().expect("cache lock");
        Ok(Arc::clone(cache.entry(key).or_insert(built)))
    }

    pub fn prepare(&self, image: &RasterImage, spec: &CorruptionSpec) -> Result<PreparedCorruption> {
        let (w, h) = image.dims();
        let prepared = match self.params(spec)? {
            CorruptionParams::Stain(p) => PreparedCorruption::Stain(PreparedStain::new(image, &p)?),
            CorruptionParams::Deformation(p) => PreparedCorruption::Warp(PreparedWarp::new(&p.template(), w, h)?),
            CorruptionParams::ColorGains { red, green, blue } => PreparedCorruption::Gains(ChannelGains([red, green, blue])),
            CorruptionParams::Exposure { gain } => PreparedCorruption::Gains(ChannelGains::uniform(gain)),
            CorruptionParams::Defocus(p) => PreparedCorruption::Defocus(self.defocus(&p)?),
            CorruptionParams::Coverage(p) => PreparedCorruption::Coverage(CoverageTemplate::generate(&p, w, h)),
        };
        Ok(prepared)
    }

    fn wrap<T>(spec: &CorruptionSpec, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            e @ Error::Corruption { .. } => e,
            e => Error::Corruption {
                spec: *spec,
                source: Box::new(e),
            },
        })
    }

    /// Corrupts a whole image. Output dimensions always equal the input's.
    pub fn corrupt_one(&self, image: &RasterImage, spec: &CorruptionSpec) -> Result<RasterImage> {
        Self::wrap(
            spec,
            self.prepare(image, spec).and_then(|p| p.render_region(image, image.frame())),
        )
    }

    /// Corrupts a large image tile by tile against frame-global parameters,
    /// carrying an optional label mask through the same geometry.
    pub fn corrupt_slide(
        &self,
        image: &RasterImage,
        spec: &CorruptionSpec,
        tile_size: usize,
        mask: Option<&LabelImage>,
    ) -> Result<(RasterImage, Option<LabelImage>)> {
        Self::wrap(spec, self.corrupt_slide_inner(image, spec, tile_size, mask))
    }

    fn corrupt_slide_inner(
        &self,
        image: &RasterImage,
        spec: &CorruptionSpec,
        tile_size: usize,
        mask: Option<&LabelImage>,
    ) -> Result<(RasterImage, Option<LabelImage>)> {
        if tile_size == 0 {
            return Err(Error::InvalidBuffer("tile size must be positive".into()));
        }
        if let Some(m) = mask {
            ensure_same_dims(image.dims(), m.dims())?;
        }
        let prepared = self.prepare(image, spec)?;
        let grid = TileGrid::new(image.width(), image.height(), tile_size);
        let tiles: Vec<RasterImage> = grid
            .tiles
            .par_iter()
            .map(|&r| prepared.render_region(image, r))
            .collect::<Result<_>>()?;
        let out = stitch_tiles(&grid, &tiles)?;
        let mask = match mask {
            None => None,
            Some(m) => {
                let mut warped = LabelImage::zeros(m.width(), m.height());
                for &r in &grid.tiles {
                    warped.paste(r.x, r.y, &prepared.render_mask_region(m, r)?)?;
                }
                Some(warped)
            }
        };
        Ok((out, mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kind::CorruptionKind;
    use crate::synthetic;

    #[test]
    fn every_kind_keeps_dimensions() {
        let c = Corruptor::default();
        let img = synthetic::tissue_patch(64, 48, 1);
        for kind in CorruptionKind::ALL {
            let spec = CorruptionSpec::new(kind, 3, 9).unwrap();
            let out = c.corrupt_one(&img, &spec).unwrap();
            assert_eq!(out.dims(), img.dims(), "{kind}");
            assert_eq!(out, c.corrupt_one(&img, &spec).unwrap(), "{kind}");
        }
    }

    #[test]
    fn errors_carry_the_spec() {
        let c = Corruptor::default();
        let white = RasterImage::filled(32, 32, [255, 255, 255]);
        let spec = CorruptionSpec::new(CorruptionKind::OverStainedH, 2, 5).unwrap();
        match c.corrupt_one(&white, &spec) {
            Err(Error::Corruption { spec: s, source }) => {
                assert_eq!(s, spec);
                assert!(matches!(*source, Error::InsufficientTissue { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn slide_tiles_match_whole_image() {
        let c = Corruptor::default();
        let (img, mask) = synthetic::tissue_with_mask(150, 130, 3);
        for kind in [CorruptionKind::ResidualWax, CorruptionKind::Bubble, CorruptionKind::Fold, CorruptionKind::WarmColor] {
            let spec = CorruptionSpec::new(kind, 4, 2).unwrap();
            let whole = c.corrupt_one(&img, &spec).unwrap();
            let (tiled, m) = c.corrupt_slide(&img, &spec, 64, Some(&mask)).unwrap();
            assert_eq!(tiled, whole, "{kind}");
            assert_eq!(m.unwrap().dims(), mask.dims());
        }
        assert!(c
            .corrupt_slide(&img, &CorruptionSpec::new(CorruptionKind::Crack, 1, 0).unwrap(), 64, Some(&LabelImage::zeros(3, 3)))
            .is_err());
    }
}
