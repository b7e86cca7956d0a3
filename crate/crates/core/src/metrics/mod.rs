//! Robustness metrics from prediction files: clean error, corruption error
//! per (kind, severity), baseline-normalized mCE, relative rCE and dice.
//!
//! Errors are fractions internally and percentages only when rendered.

mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::raster::ensure_same_dims;
use crate::imaging::LabelImage;
use crate::kind::CorruptionKind;

pub use report::{emit_report, parse_report_csv, render_csv, render_text, ReportRow};

pub const CLEAN: &str = "clean";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub kind: String,
    pub severity: u8,
    pub true_label: i64,
    pub predicted_label: i64,
}

impl PredictionRecord {
    pub fn is_correct(&self) -> bool {
        self.true_label == self.predicted_label
    }

    fn validate(&self) -> Result<Option<CorruptionKind>> {
        if self.kind == CLEAN {
            if self.severity != 0 {
                return Err(Error::Parse(format!(
                    "sample {}: clean records need severity 0, got {}",
                    self.sample_id, self.severity
                )));
            }
            return Ok(None);
        }
        let kind: CorruptionKind = self.kind.parse()?;
        crate::kind::Severity::new(self.severity)?;
        Ok(Some(kind))
    }
}

pub fn parse_predictions(reader: impl Read) -> Result<Vec<PredictionRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in ["sample_id", "kind", "severity", "true_label", "predicted_label"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Parse(format!("prediction file lacks a `{col}` column")));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let rec: PredictionRecord = rec?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    parse_predictions(std::fs::File::open(path)?)
}

/// Misclassified fraction.
pub fn compute_ce<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>) -> Result<f64> {
    let (mut n, mut wrong) = (0usize, 0usize);
    for r in records {
        n += 1;
        wrong += usize::from(!r.is_correct());
    }
    if n == 0 {
        return Err(Error::Parse("no records".into()));
    }
    Ok(wrong as f64 / n as f64)
}

/// `100 * sum(model) / sum(baseline)` over severities; `None` when the
/// baseline never errs.
pub fn compute_mce(model: &[f64], baseline: &[f64]) -> Result<Option<f64>> {
    if model.is_empty() || model.len() != baseline.len() {
        return Err(Error::Parse(format!(
            "need matching severity lists, got {} model and {} baseline values",
            model.len(),
            baseline.len()
        )));
    }
    let b: f64 = baseline.iter().sum();
    if b <= 0.0 {
        return Ok(None);
    }
    Ok(Some(100.0 * (model.iter().sum::<f64>() / b)))
}

/// Mean corruption error over severities divided by the clean error;
/// `None` when the clean error is zero.
pub fn compute_rce(model: &[f64], clean_error: f64) -> Result<Option<f64>> {
    if model.is_empty() {
        return Err(Error::Parse("no corruption errors".into()));
    }
    if clean_error <= 0.0 {
        return Ok(None);
    }
    let mean = model.iter().sum::<f64>() / model.len() as f64;
    Ok(Some(mean / clean_error))
}

/// Dice overlap of the nonzero pixels; two empty masks score 1.
pub fn compute_dice(pred: &LabelImage, truth: &LabelImage) -> Result<f64> {
    ensure_same_dims(truth.dims(), pred.dims())?;
    let (mut p, mut g, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(truth.data()) {
        let (a, b) = (a != 0, b != 0);
        p += usize::from(a);
        g += usize::from(b);
        both += usize::from(a && b);
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + g) as f64)
}

/// Error rates of one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelErrors {
    pub clean_error: Option<f64>,
    pub ce: BTreeMap<(CorruptionKind, u8), f64>,
}

impl ModelErrors {
    pub fn from_records(records: &[PredictionRecord]) -> Result<Self> {
        let mut groups: BTreeMap<Option<(CorruptionKind, u8)>, Vec<&PredictionRecord>> = BTreeMap::new();
        for r in records {
            let key = r.validate()?.map(|k| (k, r.severity));
            groups.entry(key).or_default().push(r);
        }
        let mut out = ModelErrors::default();
        for (key, recs) in groups {
            let ce = compute_ce(recs)?;
            match key {
                None => out.clean_error = Some(ce),
                Some(k) => {
                    out.ce.insert(k, ce);
                }
            }
        }
        Ok(out)
    }

    pub fn kinds(&self) -> BTreeSet<CorruptionKind> {
        self.ce.keys().map(|k| k.0).collect()
    }

    pub fn severities(&self, kind: CorruptionKind) -> Vec<(u8, f64)> {
        self.ce.range((kind, 0)..=(kind, u8::MAX)).map(|(k, v)| (k.1, *v)).collect()
    }
}

/// One model's column of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelColumn {
    pub name: String,
    pub errors: ModelErrors,
    pub mce: BTreeMap<CorruptionKind, Option<f64>>,
    pub rce: BTreeMap<CorruptionKind, Option<f64>>,
}

impl ModelColumn {
    pub fn mean_mce(&self) -> Option<f64> {
        mean_defined(self.mce.values())
    }

    pub fn mean_rce(&self) -> Option<f64> {
        mean_defined(self.rce.values())
    }
}

fn mean_defined<'a>(v: impl Iterator<Item = &'a Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = v.flatten().copied().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub baseline: String,
    /// Model columns, baseline first.
    pub models: Vec<ModelColumn>,
    /// Mean dice per (kind, severity), when segmentation scores are given.
    pub dice: Option<BTreeMap<(String, u8), f64>>,
}

impl MetricReport {
    pub fn kinds(&self) -> Vec<CorruptionKind> {
        let mut all = BTreeSet::new();
        for m in &self.models {
            all.extend(m.mce.keys().copied());
        }
        all.into_iter().collect()
    }
}

fn column(name: &str, errors: ModelErrors, baseline: &ModelErrors) -> Result<ModelColumn> {
    let mut mce = BTreeMap::new();
    let mut rce = BTreeMap::new();
    for kind in errors.kinds() {
        let m = errors.severities(kind);
        let b = baseline.severities(kind);
        let m_levels: Vec<u8> = m.iter().map(|v| v.0).collect();
        let b_levels: Vec<u8> = b.iter().map(|v| v.0).collect();
        let mv: Vec<f64> = m.iter().map(|v| v.1).collect();
        mce.insert(
            kind,
            if m_levels == b_levels {
                compute_mce(&mv, &b.iter().map(|v| v.1).collect::<Vec<_>>())?
            } else {
                None
            },
        );
        rce.insert(
            kind,
            match errors.clean_error {
                Some(c) => compute_rce(&mv, c)?,
                None => None,
            },
        );
    }
    Ok(ModelColumn {
        name: name.to_string(),
        errors,
        mce,
        rce,
    })
}

/// Builds the report for `models` against `baseline`; the baseline appears
/// as the first column and scores 100 wherever its own errors are nonzero.
pub fn build_report(
    baseline: (&str, &[PredictionRecord]),
    models: &[(&str, &[PredictionRecord])],
) -> Result<MetricReport> {
    let base = ModelErrors::from_records(baseline.1)?;
    let mut cols = vec![column(baseline.0, base.clone(), &base)?];
    for (name, recs) in models {
        cols.push(column(name, ModelErrors::from_records(recs)?, &base)?);
    }
    Ok(MetricReport {
        baseline: baseline.0.to_string(),
        models: cols,
        dice: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceRecord {
    pub sample_id: String,
    pub kind: String,
    pub severity: u8,
    pub dice: f64,
}

/// Mean dice per (kind, severity) from a `sample_id,kind,severity,dice` CSV.
pub fn parse_dice(reader: impl Read) -> Result<BTreeMap<(String, u8), f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut acc: BTreeMap<(String, u8), (f64, usize)> = BTreeMap::new();
    for rec in rdr.deserialize() {
        let r: DiceRecord = rec?;
        if !(0.0..=1.0).contains(&r.dice) {
            return Err(Error::Parse(format!("dice {} for {} outside [0, 1]", r.dice, r.sample_id)));
        }
        let e = acc.entry((r.kind, r.severity)).or_insert((0.0, 0));
        e.0 += r.dice;
        e.1 += 1;
    }
    Ok(acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
}
