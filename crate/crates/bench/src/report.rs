//! Report rows and the files written for each run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{BenchError, Result};
use crate::svg::tradeoff_svg;

pub const METRICS_HEADER: &str =
    "task_id,editor,seed,lambda,opt_steps,src_cfg,tar_cfg,consistency,alignment,l_rec,l_align,runtime_ms";
pub const SUMMARY_HEADER: &str = "editor,rows,failed,median_consistency,median_alignment,config_hash";
pub const PROBE_HEADER: &str =
    "task_id,seed,optimized_relevant,optimized_irrelevant,random_relevant,random_irrelevant";

/// One (task, editor) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub task_id: usize,
    pub editor: String,
    pub seed: u64,
    pub lambda: f64,
    pub opt_steps: usize,
    pub src_cfg: f64,
    pub tar_cfg: f64,
    pub consistency: Option<f64>,
    pub alignment: Option<f64>,
    pub l_rec: Option<f64>,
    pub l_align: Option<f64>,
    pub runtime_ms: Option<f64>,
    /// Set when the editor failed; the metrics are then empty.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub editor: String,
    pub rows: usize,
    pub failed: usize,
    pub median_consistency: Option<f64>,
    pub median_alignment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub config_hash: String,
    /// Canonical config text, written next to the results.
    pub config_text: String,
}

/// Median with the even case averaged; `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2]),
        _ => Some(0.5 * (v[n / 2 - 1] + v[n / 2])),
    }
}

impl RunReport {
    /// Editor labels in first-seen order.
    pub fn editors(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.editor) {
                out.push(r.editor.clone());
            }
        }
        out
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        self.editors()
            .into_iter()
            .map(|editor| {
                let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.editor == editor).collect();
                let cons: Vec<f64> = rows.iter().filter_map(|r| r.consistency).collect();
                let align: Vec<f64> = rows.iter().filter_map(|r| r.alignment).collect();
                SummaryRow {
                    rows: rows.len(),
                    failed: rows.iter().filter(|r| r.error.is_some()).count(),
                    median_consistency: median(&cons),
                    median_alignment: median(&align),
                    editor,
                }
            })
            .collect()
    }

    pub fn median_consistency(&self, editor: &str) -> Option<f64> {
        self.summary().into_iter().find(|s| s.editor == editor)?.median_consistency
    }

    pub fn median_alignment(&self, editor: &str) -> Option<f64> {
        self.summary().into_iter().find(|s| s.editor == editor)?.median_alignment
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.task_id,
                r.editor,
                r.seed,
                num(r.lambda),
                r.opt_steps,
                num(r.src_cfg),
                num(r.tar_cfg),
                opt(r.consistency),
                opt(r.alignment),
                opt(r.l_rec),
                opt(r.l_align),
                opt(r.runtime_ms),
            )
            .expect("write to string");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for s in self.summary() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.editor,
                s.rows,
                s.failed,
                opt(s.median_consistency),
                opt(s.median_alignment),
                self.config_hash
            )
            .expect("write to string");
        }
        out
    }

    fn failures_csv(&self) -> Option<String> {
        let failed: Vec<&ReportRow> = self.rows.iter().filter(|r| r.error.is_some()).collect();
        if failed.is_empty() {
            return None;
        }
        let mut out = String::from("task_id,editor,seed,error\n");
        for r in failed {
            let msg = r.error.as_deref().unwrap_or("").replace(['\n', ','], " ");
            writeln!(out, "{},{},{},{}", r.task_id, r.editor, r.seed, msg).expect("write to string");
        }
        Some(out)
    }
}

/// Fixed 17-significant-digit scientific notation, which parses back exactly.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn config_file(hash: &str, canonical: &str) -> String {
    format!("# config hash {hash}\n{canonical}")
}

/// Writes `bytes` to a temporary sibling, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| BenchError::config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp: PathBuf = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes).map_err(|e| BenchError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| BenchError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))
}

/// `metrics.csv`, `summary.csv`, `tradeoff.svg` and `config.txt`, plus
/// `failures.csv` when some editor failed.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<()> {
    if report.rows.is_empty() {
        return Err(BenchError::config("refusing to write an empty report"));
    }
    ensure_dir(dir)?;
    write_atomic(&dir.join("metrics.csv"), report.metrics_csv().as_bytes())?;
    write_atomic(&dir.join("summary.csv"), report.summary_csv().as_bytes())?;
    write_atomic(&dir.join("tradeoff.svg"), tradeoff_svg(report).as_bytes())?;
    write_atomic(
        &dir.join("config.txt"),
        config_file(&report.config_hash, &report.config_text).as_bytes(),
    )?;
    if let Some(f) = report.failures_csv() {
        write_atomic(&dir.join("failures.csv"), f.as_bytes())?;
    }
    Ok(())
}

/// Block deviations of null-condition restorations for one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub task_id: usize,
    pub seed: u64,
    pub optimized_relevant: f64,
    pub optimized_irrelevant: f64,
    pub random_relevant: f64,
    pub random_irrelevant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    pub config_hash: String,
    pub config_text: String,
}

impl ProbeReport {
    /// Medians of the four columns, in header order.
    pub fn medians(&self) -> [f64; 4] {
        let col = |f: fn(&ProbeRow) -> f64| median(&self.rows.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN);
        [
            col(|r| r.optimized_relevant),
            col(|r| r.optimized_irrelevant),
            col(|r| r.random_relevant),
            col(|r| r.random_irrelevant),
        ]
    }

    pub fn probe_csv(&self) -> String {
        let mut out = String::from(PROBE_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.task_id,
                r.seed,
                num(r.optimized_relevant),
                num(r.optimized_irrelevant),
                num(r.random_relevant),
                num(r.random_irrelevant)
            )
            .expect("write to string");
        }
        out
    }
}

/// `probe.csv`, `probe_summary.csv` and `config.txt`.
pub fn emit_probe(report: &ProbeReport, dir: &Path) -> Result<()> {
    if report.rows.is_empty() {
        return Err(BenchError::config("refusing to write an empty report"));
    }
    ensure_dir(dir)?;
    write_atomic(&dir.join("probe.csv"), report.probe_csv().as_bytes())?;
    let m = report.medians();
    let summary = format!(
        "noise,median_relevant,median_irrelevant,config_hash\noptimized,{},{},{h}\nrandom,{},{},{h}\n",
        num(m[0]),
        num(m[1]),
        num(m[2]),
        num(m[3]),
        h = report.config_hash
    );
    write_atomic(&dir.join("probe_summary.csv"), summary.as_bytes())?;
    write_atomic(
        &dir.join("config.txt"),
        config_file(&report.config_hash, &report.config_text).as_bytes(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(task_id: usize, editor: &str, c: f64, a: f64) -> ReportRow {
        ReportRow {
            task_id,
            editor: editor.into(),
            seed: 0,
            lambda: 0.2,
            opt_steps: 100,
            src_cfg: 3.5,
            tar_cfg: 5.5,
            consistency: Some(c),
            alignment: Some(a),
            l_rec: None,
            l_align: None,
            runtime_ms: None,
            error: None,
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn summary_skips_failed_rows() {
        let mut failed = row(1, "a", 0.0, 0.0);
        failed.consistency = None;
        failed.alignment = None;
        failed.error = Some("numeric failure: x".into());
        let report = RunReport {
            rows: vec![row(0, "a", 1.0, 2.0), failed, row(0, "b", 3.0, 4.0)],
            config_hash: "h".into(),
            config_text: String::new(),
        };
        let s = report.summary();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].rows, s[0].failed, s[0].median_consistency), (2, 1, Some(1.0)));
        assert_eq!(report.median_alignment("b"), Some(4.0));
        assert!(report.failures_csv().unwrap().contains("1,a,0,numeric failure: x"));
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 12345.678901234567, -2.5e10] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), f64::to_bits(x));
        }
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, b"a").unwrap();
        write_atomic(&p, b"b").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"b");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
