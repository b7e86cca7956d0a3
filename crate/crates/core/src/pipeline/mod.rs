//! Dataset pipeline: per-spec dispatch, slide tiling, benchmark trees with
//! manifests, and Augmix chain composition.

mod augmix;
mod corruptor;
mod dataset;

pub use augmix::{augmix_apply, augmix_compose, run_chain, AugmixPlan, AugmixSpec};
pub use corruptor::{Corruptor, PreparedCorruption};
pub use dataset::{
    corrupt_dataset, derive_seed, list_images, read_manifest, write_manifest, DatasetJob, DatasetReport,
    ManifestRecord, SkippedItem, CLEAN_KIND, ENGINE_VERSION, MANIFEST_FILE,
};
