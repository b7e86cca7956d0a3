//! Report rendering: machine-readable CSVs and an aligned text table.

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kind::{CorruptionKind, KindGroup};

use super::{MetricReport, CLEAN};

pub const AVERAGE_ROW: &str = "Average";
const NA: &str = "n/a";

/// One `report.csv` line.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub kind: String,
    pub mce: Option<f64>,
    pub rce: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s == NA {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Parse(format!("bad metric value `{s}`")))
}

impl MetricReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        for m in &self.models {
            for (kind, mce) in &m.mce {
                rows.push(ReportRow {
                    model: m.name.clone(),
                    kind: kind.id().to_string(),
                    mce: *mce,
                    rce: m.rce.get(kind).copied().flatten(),
                });
            }
            rows.push(ReportRow {
                model: m.name.clone(),
                kind: AVERAGE_ROW.to_string(),
                mce: m.mean_mce(),
                rce: m.mean_rce(),
            });
        }
        rows
    }
}

/// `model,kind,mce,rce` with one row per model and kind plus an average row.
pub fn render_csv(report: &MetricReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "kind", "mce", "rce"])?;
    for r in report.rows() {
        w.write_record([r.model, r.kind, cell(r.mce), cell(r.rce)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_report_csv(reader: impl Read) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["model", "kind", "mce", "rce"] {
        return Err(Error::Parse("report header must be model,kind,mce,rce".into()));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ReportRow {
                model: rec[0].to_string(),
                kind: rec[1].to_string(),
                mce: parse_cell(&rec[2])?,
                rce: parse_cell(&rec[3])?,
            })
        })
        .collect()
}

fn render_ce_csv(report: &MetricReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "kind", "severity", "ce"])?;
    for m in &report.models {
        if let Some(c) = m.errors.clean_error {
            w.write_record([m.name.as_str(), CLEAN, "0", &c.to_string()])?;
        }
        for ((kind, sev), ce) in &m.errors.ce {
            w.write_record([m.name.as_str(), kind.id(), &sev.to_string(), &ce.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| format!("{x:.1}"))
}

fn fmt_ratio(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| format!("{x:.3}"))
}

/// Aligned table: kinds grouped by family, one mCE and rCE column pair per
/// model, then averages and the clean error of each model.
pub fn render_text(report: &MetricReport) -> String {
    let mut header = vec!["group".to_string(), "kind".to_string()];
    for m in &report.models {
        header.push(format!("{} mCE", m.name));
        header.push(format!("{} rCE", m.name));
    }
    let mut body: Vec<Vec<String>> = Vec::new();
    let kinds = report.kinds();
    for group in [KindGroup::Stain, KindGroup::DeformationCoverage, KindGroup::Optical] {
        let members: Vec<CorruptionKind> = kinds.iter().copied().filter(|k| k.group() == group).collect();
        for (i, kind) in members.iter().enumerate() {
            let mut row = vec![
                if i == 0 { group.label().to_string() } else { String::new() },
                kind.id().to_string(),
            ];
            for m in &report.models {
                row.push(fmt_pct(m.mce.get(kind).copied().flatten()));
                row.push(fmt_ratio(m.rce.get(kind).copied().flatten()));
            }
            body.push(row);
        }
    }
    let mut avg = vec![String::new(), AVERAGE_ROW.to_string()];
    let mut orig = vec![String::new(), "Original Error".to_string()];
    for m in &report.models {
        avg.push(fmt_pct(m.mean_mce()));
        avg.push(fmt_ratio(m.mean_rce()));
        orig.push(fmt_pct(m.errors.clean_error.map(|c| 100.0 * c)));
        orig.push(String::new());
    }
    body.push(avg);
    body.push(orig);

    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().chain([&header]).map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let line = |row: &[String]| {
        let mut s = String::new();
        for (c, v) in row.iter().enumerate() {
            if c < 2 {
                let _ = write!(s, "{v:<w$}  ", w = widths[c]);
            } else {
                let _ = write!(s, "{v:>w$}  ", w = widths[c]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = format!("baseline: {}\n", report.baseline);
    out += &line(&header);
    out += &"-".repeat(widths.iter().map(|w| w + 2).sum::<usize>().saturating_sub(2));
    out.push('\n');
    for r in &body {
        out += &line(r);
    }
    if let Some(d) = &report.dice {
        out += "\nkind  severity  dice\n";
        for ((kind, sev), v) in d {
            let _ = writeln!(out, "{kind}  {sev}  {v:.4}");
        }
    }
    out
}

/// Writes `report.csv`, `ce.csv`, `report.txt` and, with dice scores,
/// `dice.csv` into `out_dir`.
pub fn emit_report(report: &MetricReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut files = vec![
        (out_dir.join("report.csv"), render_csv(report)?),
        (out_dir.join("ce.csv"), render_ce_csv(report)?),
        (out_dir.join("report.txt"), render_text(report)),
    ];
    if let Some(d) = &report.dice {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kind", "severity", "dice"])?;
        for ((kind, sev), v) in d {
            w.write_record([kind.as_str(), &sev.to_string(), &v.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        files.push((out_dir.join("dice.csv"), String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?));
    }
    for (path, text) in &files {
        std::fs::write(path, text)?;
    }
    Ok(files.into_iter().map(|f| f.0).collect())
}

#[cfg(test)]
mod tests {
    use super::super::{build_report, PredictionRecord};
    use super::*;

    fn records(wrong_per_level: [usize; 5], clean_wrong: usize) -> Vec<PredictionRecord> {
        let mut out = Vec::new();
        for kind in ["fold", "defocus"] {
            for (i, &wrong) in wrong_per_level.iter().enumerate() {
                for j in 0..10 {
                    out.push(PredictionRecord {
                        sample_id: format!("{kind}-{i}-{j}"),
                        kind: kind.into(),
                        severity: i as u8 + 1,
                        true_label: 0,
                        predicted_label: i64::from(j < wrong),
                    });
                }
            }
        }
        for j in 0..10 {
            out.push(PredictionRecord {
                sample_id: format!("c{j}"),
                kind: CLEAN.into(),
                severity: 0,
                true_label: 0,
                predicted_label: i64::from(j < clean_wrong),
            });
        }
        out
    }

    #[test]
    fn csv_round_trips_exactly() {
        let base = records([1, 2, 3, 4, 5], 1);
        let model = records([0, 1, 1, 2, 3], 0);
        let r = build_report(("resnet", &base), &[("vit", &model)]).unwrap();
        let text = render_csv(&r).unwrap();
        assert!(text.starts_with("model,kind,mce,rce\n"));
        let back = parse_report_csv(text.as_bytes()).unwrap();
        assert_eq!(back, r.rows());
        let vit_fold = back.iter().find(|r| r.model == "vit" && r.kind == "fold").unwrap();
        assert_eq!(vit_fold.mce, Some(100.0 * 0.7 / 1.5));
        assert_eq!(vit_fold.rce, None);
    }

    #[test]
    fn text_table_lists_groups_and_averages() {
        let base = records([1, 2, 3, 4, 5], 2);
        let r = build_report(("base", &base), &[]).unwrap();
        let t = render_text(&r);
        for needle in ["deformation+coverage", "optical", "Average", "Original Error", "20.0", "100.0"] {
            assert!(t.contains(needle), "{needle} missing from\n{t}");
        }
    }

    #[test]
    fn emit_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let base = records([2, 2, 2, 2, 2], 1);
        let mut r = build_report(("base", &base), &[]).unwrap();
        r.dice = Some([(("fold".to_string(), 1u8), 0.75)].into());
        let files = emit_report(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let ce = std::fs::read_to_string(dir.path().join("ce.csv")).unwrap();
        assert!(ce.contains("base,clean,0,0.1"));
        assert!(ce.contains("base,fold,3,0.2"));
    }

    #[test]
    fn rejects_bad_report_header() {
        assert!(parse_report_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(parse_report_csv("model,kind,mce,rce\nm,fold,x,1\n".as_bytes()).is_err());
    }
}
