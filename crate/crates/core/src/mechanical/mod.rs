//! Mechanical engine: cracks, venetian cracking and folds as piecewise
//! affine deformations of a triangulated frame.

mod template;
mod warp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{LabelImage, RasterImage};
use crate::kind::{CorruptionKind, Engine};
use crate::severity::{CorruptionParams, SeverityTable};

pub use template::{
    crack_template, fold_line, fold_template, venetian_strips, venetian_template, DeformationTemplate, Point, Strip,
    StripSet, MESH_NODES,
};
pub use warp::{apply_piecewise_affine, co_deform_mask, PreparedWarp, WarpDiagnostics, WarpResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeformationKind {
    Crack,
    Venetian,
    Fold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationParams {
    pub kind: DeformationKind,
    /// Crack gap width, venetian area fraction or fold band width, all in
    /// frame units.
    pub magnitude: f64,
    pub seed: u64,
}

impl DeformationParams {
    pub fn template(&self) -> DeformationTemplate {
        match self.kind {
            DeformationKind::Crack => crack_template(self.magnitude, self.seed),
            DeformationKind::Venetian => venetian_template(self.magnitude, self.seed),
            DeformationKind::Fold => fold_template(self.magnitude, self.seed),
        }
    }
}

fn deformation_params(kind: CorruptionKind, severity: u8, seed: u64, table: &SeverityTable) -> Result<DeformationParams> {
    if kind.engine() != Engine::Mechanical {
        return Err(Error::Config(format!("`{kind}` is not a deformation")));
    }
    let spec = crate::kind::CorruptionSpec::new(kind, severity, seed)?;
    match table.params_for(&spec)? {
        CorruptionParams::Deformation(p) => Ok(p),
        _ => unreachable!("deformation kinds resolve to deformation params"),
    }
}

pub fn generate_crack_template(severity: u8, seed: u64, table: &SeverityTable) -> Result<DeformationTemplate> {
    Ok(deformation_params(CorruptionKind::Crack, severity, seed, table)?.template())
}

pub fn generate_venetian_template(severity: u8, seed: u64, table: &SeverityTable) -> Result<DeformationTemplate> {
    Ok(deformation_params(CorruptionKind::Venetian, severity, seed, table)?.template())
}

pub fn generate_fold_template(severity: u8, seed: u64, table: &SeverityTable) -> Result<DeformationTemplate> {
    Ok(deformation_params(CorruptionKind::Fold, severity, seed, table)?.template())
}

/// Applies a deformation kind to an image and, when given, its label mask.
pub fn apply_deformation(
    image: &RasterImage,
    mask: Option<&LabelImage>,
    params: &DeformationParams,
) -> Result<(WarpResult, Option<LabelImage>)> {
    let t = params.template();
    let prepared = PreparedWarp::new(&t, image.width(), image.height())?;
    let out = prepared.render_region_full(image, image.frame())?;
    let mask = mask.map(|m| prepared.render_mask_region(m, m.frame())).transpose()?;
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn severity_grows_displacement() {
        let table = SeverityTable::builtin();
        let d: Vec<f64> = (1..=5)
            .map(|s| generate_crack_template(s, 4, &table).unwrap().max_displacement())
            .collect();
        assert!(d.windows(2).all(|w| w[0] < w[1]), "{d:?}");
        let c: Vec<f64> = (1..=5)
            .map(|s| {
                let p = deformation_params(CorruptionKind::Venetian, s, 4, &table).unwrap();
                venetian_strips(p.magnitude, 4).coverage()
            })
            .collect();
        assert!(c.windows(2).all(|w| w[0] < w[1]), "{c:?}");
    }

    #[test]
    fn non_deformation_kind_errors() {
        let table = SeverityTable::builtin();
        assert!(deformation_params(CorruptionKind::Bubble, 1, 0, &table).is_err());
        assert!(generate_fold_template(6, 0, &table).is_err());
    }
}
