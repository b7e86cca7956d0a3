//! Batch corruption of an image directory into a benchmark tree.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::imaging::io::{is_supported_image, load_label, load_rgb, save_label, save_rgb, FileFormat};
use crate::imaging::{LabelImage, RasterImage};
use crate::kind::{CorruptionKind, CorruptionSpec};
use crate::rng::StableHasher;

use super::Corruptor;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CLEAN_KIND: &str = "clean";

/// Per-image seed: a stable digest of the master seed, the input path
/// relative to the dataset root, the kind and the severity.
pub fn derive_seed(master_seed: u64, relative_path: &str, kind: &str, severity: u8) -> u64 {
    StableHasher::new()
        .u64(master_seed)
        .str(relative_path)
        .str(kind)
        .u8(severity)
        .finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub input: String,
    pub output: String,
    pub kind: String,
    pub severity: u8,
    pub seed: u64,
    pub params_digest: String,
    pub engine_version: String,
}

impl ManifestRecord {
    fn sort_key(&self) -> (String, usize, u8) {
        let k = self.kind.parse::<CorruptionKind>().map(|k| k.index() + 1).unwrap_or(0);
        (self.input.clone(), k, self.severity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedItem {
    pub input: String,
    pub kind: Option<String>,
    pub severity: Option<u8>,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct DatasetReport {
    pub manifest: Vec<ManifestRecord>,
    pub skipped: Vec<SkippedItem>,
}

impl DatasetReport {
    pub fn is_complete(&self) -> bool {
        self.skipped.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct DatasetJob {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub kinds: Vec<CorruptionKind>,
    pub severities: Vec<u8>,
    pub master_seed: u64,
    pub workers: usize,
    /// Process each image tile by tile at this size.
    pub tile_size: Option<usize>,
    pub include_clean: bool,
    /// Label masks mirroring the input tree, carried through deformations.
    pub masks_dir: Option<PathBuf>,
}

impl DatasetJob {
    pub fn new(input_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        DatasetJob {
            input_dir: input_dir.into(),
            output_dir: output_dir.into(),
            kinds: CorruptionKind::ALL.to_vec(),
            severities: vec![1, 2, 3, 4, 5],
            master_seed: 0,
            workers: 1,
            tile_size: None,
            include_clean: false,
            masks_dir: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("no corruption kinds selected".into()));
        }
        if self.severities.is_empty() {
            return Err(Error::Config("no severities selected".into()));
        }
        for &s in &self.severities {
            crate::kind::Severity::new(s)?;
        }
        if self.tile_size == Some(0) {
            return Err(Error::Config("tile size must be positive".into()));
        }
        if !self.input_dir.is_dir() {
            return Err(Error::Config(format!("input {} is not a directory", self.input_dir.display())));
        }
        Ok(())
    }
}

/// Supported images under `root`, as sorted `/`-separated relative paths.
pub fn list_images(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        if entry.file_type().is_file() && is_supported_image(entry.path()) {
            let rel = entry.path().strip_prefix(root).expect("walk stays under root");
            let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(parts.join("/"));
        }
    }
    out.sort();
    Ok(out)
}

fn output_relpath(rel: &str) -> String {
    let p = Path::new(rel);
    let ext = FileFormat::for_input(p).extension();
    let stem = p.with_extension("");
    format!("{}.{ext}", stem.to_string_lossy())
}

fn find_mask(masks_dir: &Path, rel: &str) -> Option<PathBuf> {
    let direct = masks_dir.join(rel);
    if direct.is_file() {
        return Some(direct);
    }
    let png = masks_dir.join(Path::new(rel).with_extension("png"));
    png.is_file().then_some(png)
}

struct ImageOutcome {
    records: Vec<ManifestRecord>,
    skipped: Vec<SkippedItem>,
}

fn process_image(corruptor: &Corruptor, job: &DatasetJob, rel: &str) -> ImageOutcome {
    let mut outcome = ImageOutcome {
        records: Vec::new(),
        skipped: Vec::new(),
    };
    let skip = |kind: Option<&str>, severity: Option<u8>, reason: String| SkippedItem {
        input: rel.to_string(),
        kind: kind.map(str::to_string),
        severity,
        reason,
    };
    let image = match load_rgb(&job.input_dir.join(rel)) {
        Ok(img) => img,
        Err(e) => {
            warn!("skipping {rel}: {e}");
            outcome.skipped.push(skip(None, None, e.to_string()));
            return outcome;
        }
    };
    let mask = match job.masks_dir.as_deref().and_then(|d| find_mask(d, rel)) {
        None => None,
        Some(path) => match load_label(&path) {
            Ok(m) if m.dims() == image.dims() => Some(m),
            Ok(m) => {
                warn!("ignoring mask {} for {rel}: size {:?} differs from image", path.display(), m.dims());
                None
            }
            Err(e) => {
                warn!("ignoring mask for {rel}: {e}");
                None
            }
        },
    };
    let format = FileFormat::for_input(Path::new(rel));
    let out_rel = output_relpath(rel);

    if job.include_clean {
        let out = format!("{CLEAN_KIND}/0/{out_rel}");
        match write_outputs(job, &out, &image, format, mask.as_ref(), CLEAN_KIND, 0, &out_rel) {
            Ok(()) => outcome.records.push(ManifestRecord {
                input: rel.to_string(),
                output: out,
                kind: CLEAN_KIND.to_string(),
                severity: 0,
                seed: 0,
                params_digest: format!("{:016x}", StableHasher::new().str(CLEAN_KIND).finish()),
                engine_version: ENGINE_VERSION.to_string(),
            }),
            Err(e) => outcome.skipped.push(skip(Some(CLEAN_KIND), Some(0), e.to_string())),
        }
    }

    for &kind in &job.kinds {
        for &severity in &job.severities {
            let seed = derive_seed(job.master_seed, rel, kind.id(), severity);
            let result = (|| -> Result<ManifestRecord> {
                let spec = CorruptionSpec::new(kind, severity, seed)?;
                let digest = corruptor.params(&spec)?.digest();
                let (img, m) = match job.tile_size {
                    Some(ts) => corruptor.corrupt_slide(&image, &spec, ts, mask.as_ref())?,
                    None if mask.is_some() => {
                        corruptor.corrupt_slide(&image, &spec, image.width().max(image.height()), mask.as_ref())?
                    }
                    None => (corruptor.corrupt_one(&image, &spec)?, None),
                };
                let out = format!("{}/{}/{out_rel}", kind.id(), severity);
                write_outputs(job, &out, &img, format, m.as_ref(), kind.id(), severity, &out_rel)?;
                Ok(ManifestRecord {
                    input: rel.to_string(),
                    output: out,
                    kind: kind.id().to_string(),
                    severity,
                    seed,
                    params_digest: digest,
                    engine_version: ENGINE_VERSION.to_string(),
                })
            })();
            match result {
                Ok(r) => outcome.records.push(r),
                Err(e) => {
                    warn!("skipping {rel} {kind} {severity}: {e}");
                    outcome.skipped.push(skip(Some(kind.id()), Some(severity), e.to_string()));
                }
            }
        }
    }
    outcome
}

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    job: &DatasetJob,
    out: &str,
    image: &RasterImage,
    format: FileFormat,
    mask: Option<&LabelImage>,
    kind: &str,
    severity: u8,
    out_rel: &str,
) -> Result<()> {
    save_rgb(&job.output_dir.join(out), image, format)?;
    if let Some(m) = mask {
        let path = job
            .output_dir
            .join("masks")
            .join(kind)
            .join(severity.to_string())
            .join(Path::new(out_rel).with_extension("png"));
        save_label(&path, m)?;
    }
    Ok(())
}

/// Runs a dataset job and writes `manifest.jsonl` under the output root.
/// Outputs and manifest are independent of the worker count.
pub fn corrupt_dataset(corruptor: &Corruptor, job: &DatasetJob) -> Result<DatasetReport> {
    job.validate()?;
    let images = list_images(&job.input_dir)?;
    info!(
        "{} images x {} kinds x {} severities",
        images.len(),
        job.kinds.len(),
        job.severities.len()
    );
    fs::create_dir_all(&job.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<ImageOutcome> =
        pool.install(|| images.par_iter().map(|rel| process_image(corruptor, job, rel)).collect());

    let mut report = DatasetReport::default();
    for o in outcomes {
        report.manifest.extend(o.records);
        report.skipped.extend(o.skipped);
    }
    report.manifest.sort_by_key(ManifestRecord::sort_key);
    write_manifest(&job.output_dir.join(MANIFEST_FILE), &report.manifest)?;
    Ok(report)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn seeds_depend_on_every_field() {
        let base = derive_seed(1, "a/b.png", "fold", 2);
        assert_eq!(base, derive_seed(1, "a/b.png", "fold", 2));
        for other in [
            derive_seed(2, "a/b.png", "fold", 2),
            derive_seed(1, "a/c.png", "fold", 2),
            derive_seed(1, "a/b.png", "crack", 2),
            derive_seed(1, "a/b.png", "fold", 3),
        ] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn small_run_writes_tree_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in");
        for i in 0..2 {
            let img = synthetic::tissue_patch(48, 48, i);
            save_rgb(&input.join(format!("sub/img{i}.png")), &img, FileFormat::Png).unwrap();
        }
        fs::write(input.join("broken.png"), b"nope").unwrap();
        let mut job = DatasetJob::new(&input, dir.path().join("out"));
        job.kinds = vec![CorruptionKind::Overexposure, CorruptionKind::Crack];
        job.severities = vec![1, 5];
        job.include_clean = true;
        let report = corrupt_dataset(&Corruptor::default(), &job).unwrap();
        assert_eq!(report.manifest.len(), 2 * (1 + 2 * 2));
        assert_eq!(report.skipped.len(), 1);
        let back = read_manifest(&job.output_dir.join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, report.manifest);
        for r in &back {
            assert!(job.output_dir.join(&r.output).is_file(), "{}", r.output);
        }
        assert_eq!(back[0].kind, CLEAN_KIND);
    }

    #[test]
    fn rejects_bad_jobs() {
        let dir = tempfile::tempdir().unwrap();
        let mut job = DatasetJob::new(dir.path(), dir.path().join("o"));
        job.severities = vec![0];
        assert!(corrupt_dataset(&Corruptor::default(), &job).is_err());
        let job = DatasetJob::new(dir.path().join("missing"), dir.path().join("o"));
        assert!(corrupt_dataset(&Corruptor::default(), &job).is_err());
    }
}
