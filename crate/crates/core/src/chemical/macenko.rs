//! Macenko stain separation: the two stain directions are the angular
//! extremes of the tissue OD cloud projected on its principal plane.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::od::{intensity_to_od, od_to_intensity, quantize, DEFAULT_I0};
use crate::imaging::RasterImage;

pub const MIN_TISSUE_PIXELS: usize = 100;

/// Upper bound on pixels fed to the eigen/percentile step; larger frames are
/// subsampled with a fixed stride.
const MAX_SAMPLE_PIXELS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacenkoConfig {
    /// Pixels with any channel OD below this are treated as background.
    pub transparency_od: f64,
    /// Lower angular percentile, in percent; the upper one is `100 - p`.
    pub angle_percentile: f64,
    pub i0: f64,
}

impl Default for MacenkoConfig {
    fn default() -> Self {
        MacenkoConfig {
            transparency_od: 0.15,
            angle_percentile: 1.0,
            i0: DEFAULT_I0,
        }
    }
}

/// Unit-norm OD colour vectors of hematoxylin and eosin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StainMatrix {
    h: [f64; 3],
    e: [f64; 3],
}

impl StainMatrix {
    /// Normalizes both columns and checks the invariants.
    pub fn new(h: [f64; 3], e: [f64; 3]) -> Result<Self> {
        let h = normalize(h).ok_or(Error::MonochromeInput)?;
        let e = normalize(e).ok_or(Error::MonochromeInput)?;
        if h.iter().chain(&e).any(|&v| v < 0.0) {
            return Err(Error::InvalidBuffer("stain vectors must be nonnegative".into()));
        }
        let m = StainMatrix { h, e };
        if m.separation_degrees() <= 1.0 {
            return Err(Error::MonochromeInput);
        }
        Ok(m)
    }

    /// Reference H&E vectors commonly used as Macenko targets.
    pub fn reference() -> Self {
        StainMatrix::new([0.5626, 0.7201, 0.4062], [0.2159, 0.8012, 0.5581]).expect("reference vectors are valid")
    }

    pub fn hematoxylin(&self) -> [f64; 3] {
        self.h
    }

    pub fn eosin(&self) -> [f64; 3] {
        self.e
    }

    pub fn separation_degrees(&self) -> f64 {
        angle_degrees(self.h, self.e)
    }

    /// Least-squares solve `OD ~ S c` for `c`, without clamping.
    #[inline]
    pub fn unmix(&self, od: [f64; 3]) -> [f64; 2] {
        let p = self.pseudo_inverse();
        [dot(p[0], od), dot(p[1], od)]
    }

    /// Rows of `(S^T S)^-1 S^T`.
    pub fn pseudo_inverse(&self) -> [[f64; 3]; 2] {
        let hh = dot(self.h, self.h);
        let ee = dot(self.e, self.e);
        let he = dot(self.h, self.e);
        let det = hh * ee - he * he;
        let mut rows = [[0.0; 3]; 2];
        for c in 0..3 {
            rows[0][c] = (ee * self.h[c] - he * self.e[c]) / det;
            rows[1][c] = (hh * self.e[c] - he * self.h[c]) / det;
        }
        rows
    }

    #[inline]
    pub fn mix(&self, c: [f64; 2]) -> [f64; 3] {
        [
            self.h[0] * c[0] + self.e[0] * c[1],
            self.h[1] * c[0] + self.e[1] * c[1],
            self.h[2] * c[0] + self.e[2] * c[1],
        ]
    }
}

/// Per-pixel `(c_H, c_E)`, nonnegative, in OD units.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationMap {
    width: usize,
    height: usize,
    data: Vec<[f64; 2]>,
}

impl ConcentrationMap {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 2]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidBuffer("concentration buffer size".into()));
        }
        if data.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidBuffer("concentrations must be nonnegative".into()));
        }
        Ok(ConcentrationMap { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone)]
pub struct StainEstimate {
    pub stains: StainMatrix,
    pub concentrations: ConcentrationMap,
    /// Root-mean-square of `|OD - S C|` over all pixels.
    pub reconstruction_rmse: f64,
    pub tissue_pixels: usize,
}

pub fn estimate_stains(image: &RasterImage) -> Result<StainEstimate> {
    estimate_stains_with(image, &MacenkoConfig::default())
}

pub fn estimate_stains_with(image: &RasterImage, cfg: &MacenkoConfig) -> Result<StainEstimate> {
    let (stains, tissue_pixels) = estimate_stain_matrix(image, cfg)?;
    let concentrations = concentrations(image, &stains, cfg.i0);
    let lut = od_lut(cfg.i0);
    let mut sq = 0.0;
    for (px, c) in image.data().chunks_exact(3).zip(&concentrations.data) {
        let fit = stains.mix(*c);
        for ch in 0..3 {
            let r = lut[px[ch] as usize] - fit[ch];
            sq += r * r;
        }
    }
    let reconstruction_rmse = (sq / concentrations.data.len() as f64).sqrt();
    Ok(StainEstimate {
        stains,
        concentrations,
        reconstruction_rmse,
        tissue_pixels,
    })
}

/// Returns the stain matrix and the number of tissue pixels found.
pub fn estimate_stain_matrix(image: &RasterImage, cfg: &MacenkoConfig) -> Result<(StainMatrix, usize)> {
    let lut = od_lut(cfg.i0);
    let is_tissue = |px: &[u8]| px.iter().all(|&v| lut[v as usize] >= cfg.transparency_od);
    let tissue = image.data().chunks_exact(3).filter(|px| is_tissue(px)).count();
    if tissue < MIN_TISSUE_PIXELS {
        return Err(Error::InsufficientTissue {
            found: tissue,
            required: MIN_TISSUE_PIXELS,
        });
    }
    let stride = tissue.div_ceil(MAX_SAMPLE_PIXELS);
    let samples: Vec<[f64; 3]> = image
        .data()
        .chunks_exact(3)
        .filter(|px| is_tissue(px))
        .step_by(stride)
        .map(|px| [lut[px[0] as usize], lut[px[1] as usize], lut[px[2] as usize]])
        .collect();

    let n = samples.len() as f64;
    let mut mean = [0.0; 3];
    for s in &samples {
        for c in 0..3 {
            mean[c] += s[c] / n;
        }
    }
    let mut cov = Matrix3::<f64>::zeros();
    for s in &samples {
        let d = Vector3::new(s[0] - mean[0], s[1] - mean[1], s[2] - mean[2]);
        cov += d * d.transpose();
    }
    cov /= (n - 1.0).max(1.0);

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l1 > 1e-12) || l2 < 1e-3 * l1 {
        return Err(Error::MonochromeInput);
    }
    let col = |i: usize| {
        let v = eig.eigenvectors.column(order[i]);
        [v[0], v[1], v[2]]
    };
    let mut e1 = col(0);
    let e2 = col(1);
    if e1.iter().sum::<f64>() < 0.0 {
        e1 = e1.map(|v| -v);
    }

    let mut angles: Vec<f64> = samples
        .iter()
        .map(|s| dot(*s, e2).atan2(dot(*s, e1)))
        .collect();
    let lo = percentile(&mut angles, cfg.angle_percentile);
    let hi = percentile(&mut angles, 100.0 - cfg.angle_percentile);
    let dir = |phi: f64| {
        let v = [0, 1, 2].map(|c| e1[c] * phi.cos() + e2[c] * phi.sin());
        let v = if v.iter().sum::<f64>() < 0.0 { v.map(|x| -x) } else { v };
        v.map(|x| x.max(0.0))
    };
    let (a, b) = (dir(lo), dir(hi));
    let (h, e) = if a[0] >= b[0] { (a, b) } else { (b, a) };
    let stains = StainMatrix::new(h, e)?;
    Ok((stains, tissue))
}

/// Least-squares concentrations with negatives clamped to zero.
pub fn concentrations(image: &RasterImage, stains: &StainMatrix, i0: f64) -> ConcentrationMap {
    let lut = od_lut(i0);
    let p = stains.pseudo_inverse();
    let data = image
        .data()
        .chunks_exact(3)
        .map(|px| {
            let od = [lut[px[0] as usize], lut[px[1] as usize], lut[px[2] as usize]];
            [dot(p[0], od).max(0.0), dot(p[1], od).max(0.0)]
        })
        .collect();
    ConcentrationMap {
        width: image.width(),
        height: image.height(),
        data,
    }
}

/// Plain `od_to_rgb(S C)`.
pub fn reconstruct(stains: &StainMatrix, conc: &ConcentrationMap, i0: f64) -> RasterImage {
    let data = conc
        .data
        .iter()
        .flat_map(|c| stains.mix(*c).map(|od| quantize(od_to_intensity(od, i0))))
        .collect();
    RasterImage::new(conc.width, conc.height, data).expect("frame carried from concentration map")
}

pub(crate) fn od_lut(i0: f64) -> [f64; 256] {
    std::array::from_fn(|v| intensity_to_od(v as f64, i0))
}

/// Linear-interpolated percentile (`p` in percent). Reorders `values`.
fn percentile(values: &mut [f64], p: f64) -> f64 {
    let n = values.len();
    let rank = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let (_, &mut a, rest) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || rest.is_empty() {
        return a;
    }
    let b = rest.iter().copied().fold(f64::INFINITY, f64::min);
    a + frac * (b - a)
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(v, v).sqrt();
    (n > 1e-12 && n.is_finite()).then(|| v.map(|x| x / n))
}

pub fn angle_degrees(a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_matches_linear_interpolation() {
        let mut v: Vec<f64> = (0..101).map(f64::from).rev().collect();
        assert_eq!(percentile(&mut v, 1.0), 1.0);
        let mut v = vec![0.0, 10.0];
        assert_eq!(percentile(&mut v, 25.0), 2.5);
    }

    #[test]
    fn white_image_has_no_tissue() {
        let img = RasterImage::filled(32, 32, [255, 255, 255]);
        assert!(matches!(
            estimate_stains(&img),
            Err(Error::InsufficientTissue { found: 0, .. })
        ));
    }

    #[test]
    fn flat_gray_is_monochrome() {
        let img = RasterImage::filled(32, 32, [90, 90, 90]);
        assert!(matches!(estimate_stains(&img), Err(Error::MonochromeInput)));
    }

    #[test]
    fn single_stain_is_monochrome() {
        let h = StainMatrix::reference().hematoxylin();
        let img = RasterImage::from_fn(64, 64, |x, y| {
            let c = 0.3 + (x + 64 * y) as f64 / 4096.0;
            h.map(|v| quantize(od_to_intensity(v * c, 255.0)))
        });
        assert!(matches!(estimate_stains(&img), Err(Error::MonochromeInput)));
    }

    #[test]
    fn pseudo_inverse_unmixes() {
        let s = StainMatrix::reference();
        let c = s.unmix(s.mix([0.7, 0.2]));
        assert!((c[0] - 0.7).abs() < 1e-12 && (c[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn stain_matrix_rejects_parallel_columns() {
        assert!(StainMatrix::new([1.0, 1.0, 0.0], [2.0, 2.0, 0.0]).is_err());
        assert!(StainMatrix::new([1.0, -0.1, 0.0], [0.0, 1.0, 0.0]).is_err());
    }
}
