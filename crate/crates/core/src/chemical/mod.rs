//! Chemical engine: stain separation and the ten stain-family corruptions.
//!
//! A corruption rescales the per-pixel H/E concentrations and writes the
//! concentration change back as an optical density shift of the original
//! pixel, so the part of each pixel the two-stain model does not explain
//! passes through untouched.

mod macenko;
mod masks;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imaging::od::shift_od;
use crate::imaging::{RasterImage, Rect};
use crate::kind::{CorruptionKind, Engine};

pub use macenko::{
    angle_degrees, concentrations, estimate_stain_matrix, estimate_stains, estimate_stains_with, reconstruct,
    ConcentrationMap, MacenkoConfig, StainEstimate, StainMatrix, MIN_TISSUE_PIXELS,
};
pub use masks::{band_alpha, BandSpec, BlobField, BlobSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ScaleMode {
    /// `alpha_h`, `alpha_e` everywhere.
    Global,
    /// `c <- (1 + w (alpha - 1)) c` with blob weight `w`.
    Region(BlobSpec),
    /// Alternating bands scale both stains by `alpha_low` / `alpha_high`.
    Band(BandSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StainCorruptionParams {
    pub alpha_h: f64,
    pub alpha_e: f64,
    pub mode: ScaleMode,
}

impl StainCorruptionParams {
    pub fn global(alpha_h: f64, alpha_e: f64) -> Self {
        StainCorruptionParams {
            alpha_h,
            alpha_e,
            mode: ScaleMode::Global,
        }
    }
}

/// Per-frame scale factors, evaluated at global pixel coordinates.
#[derive(Debug, Clone)]
enum FrameScale {
    Global([f64; 2]),
    Region { alpha: [f64; 2], field: BlobField },
    Band { spec: BandSpec, width: usize, height: usize },
}

impl FrameScale {
    fn new(params: &StainCorruptionParams, width: usize, height: usize) -> Self {
        let alpha = [params.alpha_h, params.alpha_e];
        match &params.mode {
            ScaleMode::Global => FrameScale::Global(alpha),
            ScaleMode::Region(spec) => FrameScale::Region {
                alpha,
                field: BlobField::new(spec, width, height),
            },
            ScaleMode::Band(spec) => FrameScale::Band {
                spec: *spec,
                width,
                height,
            },
        }
    }

    #[inline]
    fn factors(&self, x: usize, y: usize) -> [f64; 2] {
        match self {
            FrameScale::Global(a) => *a,
            FrameScale::Region { alpha, field } => {
                let w = field.weight(x, y);
                if w == 0.0 {
                    [1.0, 1.0]
                } else {
                    alpha.map(|a| 1.0 + w * (a - 1.0))
                }
            }
            FrameScale::Band {
                spec,
                width,
                height,
            } => {
                let a = band_alpha(spec, x, y, *width, *height);
                [a, a]
            }
        }
    }
}

pub fn scale_concentrations(conc: &ConcentrationMap, params: &StainCorruptionParams) -> ConcentrationMap {
    let (w, h) = (conc.width(), conc.height());
    let scale = FrameScale::new(params, w, h);
    let mut out = conc.clone();
    for (i, c) in out.data_mut().iter_mut().enumerate() {
        let f = scale.factors(i % w, i / w);
        c[0] *= f[0];
        c[1] *= f[1];
    }
    out
}

/// Stain corruption bound to one frame: stains estimated on the whole
/// frame, masks built for its dimensions. Rendering any sub-rectangle gives
/// the same pixels as rendering the full frame.
#[derive(Debug, Clone)]
pub struct PreparedStain {
    stains: StainMatrix,
    pinv: [[f64; 3]; 2],
    lut: [f64; 256],
    scale: FrameScale,
}

impl PreparedStain {
    pub fn new(image: &RasterImage, params: &StainCorruptionParams) -> Result<Self> {
        let cfg = MacenkoConfig::default();
        let (stains, _) = estimate_stain_matrix(image, &cfg)?;
        Ok(Self::with_stains(stains, image.width(), image.height(), params, cfg.i0))
    }

    pub fn with_stains(stains: StainMatrix, width: usize, height: usize, params: &StainCorruptionParams, i0: f64) -> Self {
        PreparedStain {
            pinv: stains.pseudo_inverse(),
            stains,
            lut: macenko::od_lut(i0),
            scale: FrameScale::new(params, width, height),
        }
    }

    pub fn stains(&self) -> &StainMatrix {
        &self.stains
    }

    pub fn render_region(&self, image: &RasterImage, rect: Rect) -> RasterImage {
        let w = image.width();
        let mut out = vec![0u8; rect.area() * 3];
        out.par_chunks_mut(rect.width * 3).enumerate().for_each(|(ry, row)| {
            let y = rect.y + ry;
            for rx in 0..rect.width {
                let x = rect.x + rx;
                let i = (y * w + x) * 3;
                let px = &image.data()[i..i + 3];
                row[rx * 3..rx * 3 + 3].copy_from_slice(&self.pixel(px, x, y));
            }
        });
        RasterImage::new(rect.width, rect.height, out).expect("region buffer sized from rect")
    }

    #[inline]
    fn pixel(&self, px: &[u8], x: usize, y: usize) -> [u8; 3] {
        let f = self.scale.factors(x, y);
        if f == [1.0, 1.0] {
            return [px[0], px[1], px[2]];
        }
        let od = [self.lut[px[0] as usize], self.lut[px[1] as usize], self.lut[px[2] as usize]];
        let ch = macenko::dot(self.pinv[0], od).max(0.0);
        let ce = macenko::dot(self.pinv[1], od).max(0.0);
        let delta = self.stains.mix([ch * (f[0] - 1.0), ce * (f[1] - 1.0)]);
        [
            shift_od(px[0], delta[0]),
            shift_od(px[1], delta[1]),
            shift_od(px[2], delta[2]),
        ]
    }
}

pub fn apply_stain_params(image: &RasterImage, params: &StainCorruptionParams) -> Result<RasterImage> {
    let prepared = PreparedStain::new(image, params)?;
    Ok(prepared.render_region(image, image.frame()))
}

/// Applies one of the ten stain kinds with parameters from `table`.
pub fn apply_stain_corruption(
    image: &RasterImage,
    kind: CorruptionKind,
    severity: u8,
    seed: u64,
    table: &crate::severity::SeverityTable,
) -> Result<RasterImage> {
    if kind.engine() != Engine::Chemical {
        return Err(crate::Error::Config(format!("`{kind}` is not a stain corruption")));
    }
    let spec = crate::kind::CorruptionSpec::new(kind, severity, seed)?;
    match table.params_for(&spec)? {
        crate::severity::CorruptionParams::Stain(p) => apply_stain_params(image, &p),
        _ => unreachable!("stain kinds resolve to stain params"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn conc_fixture() -> ConcentrationMap {
        let data = (0..64).map(|i| [i as f64 / 64.0, 1.0 - i as f64 / 64.0]).collect();
        ConcentrationMap::new(8, 8, data).unwrap()
    }

    #[test]
    fn unit_alpha_is_identity() {
        let c = conc_fixture();
        assert_eq!(scale_concentrations(&c, &StainCorruptionParams::global(1.0, 1.0)), c);
    }

    #[test]
    fn zero_alpha_reconstructs_white() {
        let c = scale_concentrations(&conc_fixture(), &StainCorruptionParams::global(0.0, 0.0));
        assert!(c.data().iter().all(|v| *v == [0.0, 0.0]));
        let img = reconstruct(&StainMatrix::reference(), &c, 255.0);
        assert!(img.data().iter().all(|&v| v == 255));
    }

    #[test]
    fn doubling_hematoxylin() {
        let s = StainMatrix::reference();
        let c = ConcentrationMap::new(1, 1, vec![[0.5, 0.0]]).unwrap();
        let scaled = scale_concentrations(&c, &StainCorruptionParams::global(2.0, 1.0));
        assert_eq!(scaled.get(0, 0), [1.0, 0.0]);
        let img = reconstruct(&s, &scaled, 255.0);
        for ch in 0..3 {
            let expect = 255.0 * 10f64.powf(-s.hematoxylin()[ch]);
            assert!((f64::from(img.pixel(0, 0)[ch]) - expect).abs() <= 0.5);
        }
    }

    #[test]
    fn h_only_leaves_eosin_untouched() {
        let c = conc_fixture();
        for mode in [
            ScaleMode::Global,
            ScaleMode::Region(BlobSpec { coverage: 0.4, feather_px: 8.0, seed: 3 }),
        ] {
            let p = StainCorruptionParams { alpha_h: 0.4, alpha_e: 1.0, mode };
            let out = scale_concentrations(&c, &p);
            for (a, b) in out.data().iter().zip(c.data()) {
                assert_eq!(a[1], b[1]);
            }
            let p = StainCorruptionParams { alpha_h: 1.0, alpha_e: 1.7, mode: p.mode };
            for (a, b) in scale_concentrations(&c, &p).data().iter().zip(c.data()) {
                assert_eq!(a[0], b[0]);
            }
        }
    }

    #[test]
    fn stain_corruption_is_deterministic_and_region_local() {
        let img = synthetic::tissue_patch(96, 96, 4);
        let table = crate::severity::SeverityTable::builtin();
        let a = apply_stain_corruption(&img, CorruptionKind::ResidualAlkali, 3, 11, &table).unwrap();
        let b = apply_stain_corruption(&img, CorruptionKind::ResidualAlkali, 3, 11, &table).unwrap();
        assert_eq!(a, b);
        let p = match table.params_for_id("residual-alkali", 3, 11).unwrap() {
            crate::severity::CorruptionParams::Stain(p) => p,
            _ => unreachable!(),
        };
        let ScaleMode::Region(spec) = p.mode else { unreachable!() };
        let mask = BlobField::new(&spec, 96, 96).rasterize(96, 96);
        for (i, w) in mask.iter().enumerate() {
            if *w == 0.0 {
                let (x, y) = (i % 96, i / 96);
                let (pa, pi) = (a.pixel(x, y), img.pixel(x, y));
                for ch in 0..3 {
                    assert!(pa[ch].abs_diff(pi[ch]) <= 1);
                }
            }
        }
        assert!(a.mean_abs_diff(&img).unwrap() > 0.5);
    }

    #[test]
    fn errors_propagate() {
        let white = RasterImage::filled(40, 40, [255, 255, 255]);
        let table = crate::severity::SeverityTable::builtin();
        assert!(apply_stain_corruption(&white, CorruptionKind::OverStainedH, 2, 0, &table).is_err());
        assert!(apply_stain_corruption(&white, CorruptionKind::Defocus, 2, 0, &table).is_err());
    }
}
