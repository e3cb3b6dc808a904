//! Report artifacts: accuracy CSV and text table, learning-curve CSV and
//! SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{CurvePoint, MetricsReport};
use crate::HarnessError;

pub const OVERALL: &str = "overall";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub encoder: String,
    pub budget: usize,
    pub fraction: f64,
    pub family: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// One row per family plus an `overall` row, for every report.
pub fn accuracy_rows(reports: &[MetricsReport]) -> Vec<AccuracyRow> {
    let mut rows = Vec::new();
    for r in reports {
        let row = |family: &str, correct, total, accuracy| AccuracyRow {
            encoder: r.encoder.clone(),
            budget: r.budget,
            fraction: r.fraction,
            family: family.to_string(),
            correct,
            total,
            accuracy,
        };
        for f in &r.val.families {
            rows.push(row(&f.family, f.correct, f.total, f.accuracy));
        }
        let correct = r.val.families.iter().map(|f| f.correct).sum();
        rows.push(row(OVERALL, correct, r.val.questions, r.val.overall));
    }
    rows
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Data(format!("csv: {e}"))
}

pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, HarnessError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err)
}

pub fn accuracy_csv(reports: &[MetricsReport]) -> Result<String, HarnessError> {
    rows_to_csv(&accuracy_rows(reports))
}

pub fn curve_csv(curve: &[CurvePoint]) -> Result<String, HarnessError> {
    rows_to_csv(curve)
}

/// Percent accuracy per family and overall, one line per report.
pub fn accuracy_table(reports: &[MetricsReport]) -> String {
    let families: Vec<String> = reports
        .first()
        .map(|r| r.val.families.iter().map(|f| f.family.clone()).collect())
        .unwrap_or_default();
    let mut out = format!("{:<12} {:>6} {:>8}", "encoder", "budget", "fraction");
    for f in &families {
        let _ = write!(out, " {f:>16}");
    }
    let _ = writeln!(out, " {OVERALL:>8}");
    for r in reports {
        let _ = write!(out, "{:<12} {:>6} {:>8}", r.encoder, r.budget, r.fraction);
        for f in &families {
            let acc = r.val.families.iter().find(|x| &x.family == f).map_or(f64::NAN, |x| x.accuracy);
            let _ = write!(out, " {:>16.1}", 100.0 * acc);
        }
        let _ = writeln!(out, " {:>8.1}", 100.0 * r.val.overall);
    }
    out
}

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot with one polyline per series and one vertex per point.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String, HarnessError> {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let finite: Vec<&(f64, f64)> = pts.filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    if finite.is_empty() {
        return Err(HarnessError::Data(format!("plot `{title}` has no points")));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in &finite {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}" stroke="black"/>"#,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (v, anchor, y) in [(y0, "end", sy(y0)), (y1, "end", sy(y1))] {
        let _ = writeln!(out, r#"<text x="{}" y="{y:.1}" text-anchor="{anchor}" font-size="10">{v:.3}</text>"#, MARGIN - 4.0);
    }
    for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{}" text-anchor="middle" font-size="10">{v}</text>"#, HEIGHT - MARGIN + 14.0);
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let vertices: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(s.label),
            vertices.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            MARGIN + 14.0 * i as f64,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Train loss per logging window and validation loss per epoch.
pub fn curve_svg(curve: &[CurvePoint]) -> Result<String, HarnessError> {
    let pick = |f: fn(&CurvePoint) -> Option<f64>| -> Vec<(f64, f64)> {
        curve.iter().filter_map(|p| f(p).map(|v| (p.iteration as f64, v))).collect()
    };
    svg_plot(
        "learning curve",
        "iteration",
        "loss",
        &[
            Series { label: "train loss", points: pick(|p| p.train_loss) },
            Series { label: "val loss", points: pick(|p| p.val_loss) },
        ],
    )
}

/// Overall validation accuracy against training fraction, one series per
/// encoder.
pub fn fewshot_svg(reports: &[MetricsReport]) -> Result<String, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::Data("few-shot plot needs at least one fraction".into()));
    }
    let mut encoders: Vec<&str> = reports.iter().map(|r| r.encoder.as_str()).collect();
    encoders.dedup();
    let series: Vec<Series> = encoders
        .iter()
        .map(|e| {
            let mut points: Vec<(f64, f64)> = reports
                .iter()
                .filter(|r| r.encoder == *e)
                .map(|r| (r.fraction, r.val.overall))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label: e, points }
        })
        .collect();
    svg_plot("few-shot accuracy", "training fraction", "accuracy", &series)
}

/// Writes `metrics.json`, `accuracy.csv`, `accuracy.txt`, `curve.csv` and
/// `curve.svg` for one run.
pub fn write_run(dir: &Path, report: &MetricsReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report).map_err(|e| HarnessError::Data(e.to_string()))?;
    std::fs::write(dir.join("metrics.json"), json)?;
    let reports = std::slice::from_ref(report);
    std::fs::write(dir.join("accuracy.csv"), accuracy_csv(reports)?)?;
    std::fs::write(dir.join("accuracy.txt"), accuracy_table(reports))?;
    std::fs::write(dir.join("curve.csv"), curve_csv(&report.curve)?)?;
    if report.curve.iter().any(|p| p.train_loss.is_some() || p.val_loss.is_some()) {
        std::fs::write(dir.join("curve.svg"), curve_svg(&report.curve)?)?;
    }
    Ok(())
}

/// Sweep artifacts: combined accuracy CSV and table plus the few-shot plot.
pub fn write_sweep(dir: &Path, reports: &[MetricsReport]) -> Result<(), HarnessError> {
    let svg = fewshot_svg(reports)?;
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(reports).map_err(|e| HarnessError::Data(e.to_string()))?;
    std::fs::write(dir.join("sweep.json"), json)?;
    std::fs::write(dir.join("accuracy.csv"), accuracy_csv(reports)?)?;
    std::fs::write(dir.join("accuracy.txt"), accuracy_table(reports))?;
    std::fs::write(dir.join("fewshot.svg"), svg)?;
    Ok(())
}

pub fn load_reports(path: &Path) -> Result<Vec<MetricsReport>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str::<Vec<MetricsReport>>(&text)
        .or_else(|_| serde_json::from_str::<MetricsReport>(&text).map(|r| vec![r]))
        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}
