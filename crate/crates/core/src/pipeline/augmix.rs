//! Augmix-style mixing of corruption chains over the OmniCE op pool.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::od::quantize;
use crate::imaging::RasterImage;
use crate::kind::{CorruptionKind, CorruptionSpec, Severity};
use crate::rng;

use super::Corruptor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmixSpec {
    pub width: usize,
    /// Ops per chain; sampled from `1..=3` when `None`.
    pub depth: Option<usize>,
    /// Concentration of the Dirichlet chain weights and the Beta mix.
    pub alpha: f64,
    pub pool: Vec<CorruptionKind>,
    pub min_severity: u8,
    pub max_severity: u8,
}

impl Default for AugmixSpec {
    fn default() -> Self {
        AugmixSpec {
            width: 3,
            depth: None,
            alpha: 1.0,
            pool: CorruptionKind::ALL.to_vec(),
            min_severity: Severity::MIN,
            max_severity: Severity::MAX,
        }
    }
}

/// Fully sampled mixing recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmixPlan {
    pub chains: Vec<Vec<CorruptionSpec>>,
    /// Convex chain weights.
    pub weights: Vec<f64>,
    /// Weight of the mixed chains against the original.
    pub mix: f64,
}

impl AugmixSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("augmix width must be at least 1".into()));
        }
        if self.pool.is_empty() {
            return Err(Error::Config("augmix op pool is empty".into()));
        }
        if matches!(self.depth, Some(d) if d == 0) {
            return Err(Error::Config("augmix depth must be at least 1".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("augmix alpha must be positive, got {}", self.alpha)));
        }
        Severity::new(self.min_severity)?;
        Severity::new(self.max_severity)?;
        if self.min_severity > self.max_severity {
            return Err(Error::Config("augmix severity range is empty".into()));
        }
        Ok(())
    }

    pub fn sample_plan(&self, seed: u64) -> Result<AugmixPlan> {
        self.validate()?;
        let mut r = rng::stream(seed, "augmix");
        let chains = (0..self.width)
            .map(|_| {
                let depth = self.depth.unwrap_or_else(|| r.random_range(1..=3));
                (0..depth)
                    .map(|_| {
                        let kind = self.pool[r.random_range(0..self.pool.len())];
                        let severity = r.random_range(self.min_severity..=self.max_severity);
                        CorruptionSpec::new(kind, severity, r.random())
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let gamma = Gamma::new(self.alpha, 1.0).map_err(|e| Error::Config(e.to_string()))?;
        let mut weights: Vec<f64> = (0..self.width).map(|_| gamma.sample(&mut r)).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        } else {
            weights.fill(1.0 / self.width as f64);
        }
        let mix = Beta::new(self.alpha, self.alpha)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(&mut r);
        Ok(AugmixPlan { chains, weights, mix })
    }
}

/// Runs one chain. Stain ops that find no usable stain signal in an
/// intermediate image are skipped; any other error aborts.
pub fn run_chain(corruptor: &Corruptor, image: &RasterImage, chain: &[CorruptionSpec]) -> Result<RasterImage> {
    let mut cur = image.clone();
    for spec in chain {
        match corruptor.corrupt_one(&cur, spec) {
            Ok(next) => cur = next,
            Err(Error::Corruption { source, .. })
                if matches!(*source, Error::InsufficientTissue { .. } | Error::MonochromeInput) =>
            {
                log::debug!("augmix: skipping {spec}: {source}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(cur)
}

/// Applies a plan: each chain runs its ops in order, chain outputs are
/// blended with the chain weights, and the blend is mixed with the original.
pub fn augmix_apply(corruptor: &Corruptor, image: &RasterImage, plan: &AugmixPlan) -> Result<RasterImage> {
    if plan.weights.len() != plan.chains.len() {
        return Err(Error::Config("one weight per chain required".into()));
    }
    let mut mixed = vec![0.0f64; image.data().len()];
    for (chain, &w) in plan.chains.iter().zip(&plan.weights) {
        if w == 0.0 {
            continue;
        }
        let cur = run_chain(corruptor, image, chain)?;
        for (m, &v) in mixed.iter_mut().zip(cur.data()) {
            *m += w * f64::from(v);
        }
    }
    let m = plan.mix;
    let data = image
        .data()
        .iter()
        .zip(&mixed)
        .map(|(&o, &c)| quantize((1.0 - m) * f64::from(o) + m * c))
        .collect();
    RasterImage::new(image.width(), image.height(), data)
}

pub fn augmix_compose(corruptor: &Corruptor, image: &RasterImage, spec: &AugmixSpec, seed: u64) -> Result<RasterImage> {
    augmix_apply(corruptor, image, &spec.sample_plan(seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn plans_are_seeded() {
        let spec = AugmixSpec::default();
        let a = spec.sample_plan(4).unwrap();
        assert_eq!(a, spec.sample_plan(4).unwrap());
        assert_ne!(a, spec.sample_plan(5).unwrap());
        assert_eq!(a.chains.len(), 3);
        assert!(a.chains.iter().all(|c| (1..=3).contains(&c.len())));
        assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&a.mix));
    }

    #[test]
    fn zero_mix_is_identity() {
        let img = synthetic::tissue_patch(40, 40, 1);
        let plan = AugmixPlan {
            chains: vec![vec![CorruptionSpec::new(CorruptionKind::Fold, 5, 1).unwrap()]],
            weights: vec![1.0],
            mix: 0.0,
        };
        assert_eq!(augmix_apply(&Corruptor::default(), &img, &plan).unwrap(), img);
    }

    #[test]
    fn invalid_specs() {
        let mut s = AugmixSpec::default();
        s.pool.clear();
        assert!(s.sample_plan(0).is_err());
        let s = AugmixSpec { width: 0, ..Default::default() };
        assert!(s.validate().is_err());
        let s = AugmixSpec { min_severity: 4, max_severity: 2, ..Default::default() };
        assert!(s.validate().is_err());
    }
}
