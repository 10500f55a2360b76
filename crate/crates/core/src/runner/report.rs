//! Row files, slope aggregation and plot data.
//!
//! Floats are written in their shortest round-trip decimal form so that
//! reruns produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{SkippedSetting, SlopePoints, SweepRow};
use crate::error::{Error, Result};
use crate::metrics::{fit_slope_with_base, LogBase};
use crate::sampler::CellCounts;

pub const ROWS_HEADER: [&str; 9] = [
    "setting_id",
    "cy",
    "alpha_train",
    "alpha_test",
    "repeat",
    "model",
    "auprc",
    "n_train_cells",
    "n_test_cells",
];

pub const SLOPES_HEADER: [&str; 6] = ["model", "cy", "slope", "intercept", "n_points", "log_base"];

pub fn write_rows(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(ROWS_HEADER)?;
    for r in rows {
        w.write_record([
            r.setting_id.to_string(),
            r.cy.to_string(),
            r.alpha_train.to_string(),
            r.alpha_test.to_string(),
            r.repeat.to_string(),
            r.model.clone(),
            r.auprc.to_string(),
            r.n_train_cells.to_string(),
            r.n_test_cells.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

fn parse_cells(s: &str, line: usize) -> Result<CellCounts> {
    let parts: Vec<usize> = s
        .split(';')
        .map(|p| p.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            line,
            message: format!("cell counts {s:?}: {e}"),
        })?;
    match parts.as_slice() {
        [n00, p0, n1, p1] => Ok(CellCounts::from_zy([[*n00, *p0], [*n1, *p1]])),
        _ => Err(Error::Parse {
            line,
            message: format!("cell counts {s:?} need four fields"),
        }),
    }
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != ROWS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            field(k).parse().map_err(|e| Error::Parse {
                line,
                message: format!("{}: {e}", ROWS_HEADER[k]),
            })
        };
        let int = |k: usize| -> Result<usize> {
            field(k).parse().map_err(|e| Error::Parse {
                line,
                message: format!("{}: {e}", ROWS_HEADER[k]),
            })
        };
        rows.push(SweepRow {
            setting_id: int(0)?,
            cy: num(1)?,
            alpha_train: num(2)?,
            alpha_test: num(3)?,
            repeat: int(4)?,
            model: field(5).to_string(),
            auprc: num(6)?,
            n_train_cells: parse_cells(field(7), line)?,
            n_test_cells: parse_cells(field(8), line)?,
        });
    }
    Ok(rows)
}

pub fn write_skip_log(path: impl AsRef<Path>, skipped: &[SkippedSetting]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "setting_id",
        "p_train_y1_z0",
        "p_train_y1_z1",
        "cz",
        "alpha_test",
        "reason",
    ])?;
    for s in skipped {
        w.write_record([
            s.id.to_string(),
            s.setting.p_train_y1_z0.to_string(),
            s.setting.p_train_y1_z1.to_string(),
            s.setting.cz.to_string(),
            s.setting.alpha_test.to_string(),
            s.reason.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub model: String,
    /// Group's `C_y`, rounded to two decimals.
    pub cy: f64,
    pub slope: f64,
    pub intercept: f64,
    pub n_points: usize,
    pub log_base: LogBase,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSummary {
    #[serde(skip)]
    pub model: String,
    #[serde(skip)]
    pub cy: f64,
    pub alpha_test: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub slopes: Vec<SlopeReport>,
    pub means: Vec<AlphaSummary>,
    pub warnings: Vec<String>,
}

fn cy_key(cy: f64) -> i64 {
    (cy * 100.0).round() as i64
}

/// Groups rows by `(model, C_y rounded to two decimals)`, fits one slope per
/// group and summarises AUPRC per `alpha_test`. Groups with a single alpha
/// value are skipped with a warning. Output order is sorted by model tag,
/// then `C_y`, then `alpha_test`.
pub fn aggregate_report(rows: &[SweepRow], points: SlopePoints, base: LogBase) -> Report {
    let mut groups: BTreeMap<(String, i64), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.model.clone(), cy_key(r.cy)))
            .or_default()
            .push((r.alpha_test, r.auprc));
    }

    let mut report = Report::default();
    for ((model, key), mut pts) in groups {
        let cy = key as f64 / 100.0;
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

        let mut summaries = Vec::new();
        for chunk in pts.chunk_by(|a, b| a.0 == b.0) {
            let n = chunk.len();
            let mean = chunk.iter().map(|p| p.1).sum::<f64>() / n as f64;
            summaries.push(AlphaSummary {
                model: model.clone(),
                cy,
                alpha_test: chunk[0].0,
                mean,
                min: chunk.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
                max: chunk.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
                n,
            });
        }

        let fit_points: Vec<(f64, f64)> = match points {
            SlopePoints::Rows => pts.clone(),
            SlopePoints::Means => summaries.iter().map(|s| (s.alpha_test, s.mean)).collect(),
        };
        match fit_slope_with_base(&fit_points, base) {
            Ok(fit) => report.slopes.push(SlopeReport {
                model: model.clone(),
                cy,
                slope: fit.slope,
                intercept: fit.intercept,
                n_points: fit.n_points,
                log_base: base,
            }),
            Err(e) => {
                let msg = format!("model {model}, cy {cy:.2}: slope skipped ({e})");
                log::warn!("{msg}");
                report.warnings.push(msg);
            }
        }
        report.means.extend(summaries);
    }
    report
}

pub fn write_slopes(path: impl AsRef<Path>, slopes: &[SlopeReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(SLOPES_HEADER)?;
    for s in slopes {
        w.write_record([
            s.model.clone(),
            format!("{:.2}", s.cy),
            s.slope.to_string(),
            s.intercept.to_string(),
            s.n_points.to_string(),
            s.log_base.marker().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

#[derive(Serialize)]
struct PlotSeries<'a> {
    model: &'a str,
    cy: f64,
    log_base: &'static str,
    slope: Option<f64>,
    intercept: Option<f64>,
    points: Vec<&'a AlphaSummary>,
}

/// One JSON object per `(model, C_y)` group with per-alpha mean/min/max.
pub fn write_plot_data(path: impl AsRef<Path>, report: &Report) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut series: BTreeMap<(&str, i64), Vec<&AlphaSummary>> = BTreeMap::new();
    for m in &report.means {
        series
            .entry((m.model.as_str(), cy_key(m.cy)))
            .or_default()
            .push(m);
    }
    let base = report.slopes.first().map_or(LogBase::E, |s| s.log_base);
    for ((model, key), points) in series {
        let fit = report
            .slopes
            .iter()
            .find(|s| s.model == model && cy_key(s.cy) == key);
        let line = serde_json::to_string(&PlotSeries {
            model,
            cy: key as f64 / 100.0,
            log_base: base.marker(),
            slope: fit.map(|f| f.slope),
            intercept: fit.map(|f| f.intercept),
            points,
        })?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
