//! SVG plots of suite reports.
//!
//! One file per series, `<suite>_<series>.svg`, drawing every column against
//! the first; one file per monotone trace, `<suite>_trace_<n>.svg`. The Σ
//! histogram is drawn as bars.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::suites::{RunReport, Series};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotStyle {
    pub width: u32,
    pub height: u32,
    /// Log scale on both axes for the norm-convergence series.
    pub loglog_convergence: bool,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self { width: 720, height: 440, loglog_convergence: true }
    }
}

const COLORS: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    Some((lo - pad, hi + pad))
}

fn draw_lines(
    path: &Path,
    title: &str,
    x_label: &str,
    curves: &[(String, Vec<(f64, f64)>)],
    style: &PlotStyle,
) -> Result<bool> {
    let pts = || curves.iter().flat_map(|c| c.1.iter());
    let (Some(xr), Some(yr)) = (finite_range(pts().map(|p| p.0)), finite_range(pts().map(|p| p.1))) else {
        return Ok(false);
    };
    let root = SVGBackend::new(path, (style.width, style.height)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc(x_label).draw().map_err(plot_err)?;
    for (i, (name, data)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let data: Vec<(f64, f64)> = data.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        chart
            .draw_series(LineSeries::new(data.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart.draw_series(data.into_iter().map(|p| Circle::new(p, 3, color.filled()))).map_err(plot_err)?;
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(true)
}

fn draw_histogram(path: &Path, title: &str, s: &Series, style: &PlotStyle) -> Result<bool> {
    let (Some(x), Some(c)) = (s.column("center"), s.column("count")) else { return Ok(false) };
    if x.len() < 2 {
        return Ok(false);
    }
    let w = x[1] - x[0];
    let top = c.iter().copied().fold(0.0, f64::max).max(1.0);
    let root = SVGBackend::new(path, (style.width, style.height)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d((x[0] - 0.5 * w)..(x[x.len() - 1] + 0.5 * w), 0.0..1.05 * top)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("eigenvalue difference").y_desc("pairs").draw().map_err(plot_err)?;
    chart
        .draw_series(
            x.iter().zip(&c).map(|(&m, &n)| Rectangle::new([(m - 0.5 * w, 0.0), (m + 0.5 * w, n)], COLORS[0].filled())),
        )
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(true)
}

/// Writes the plots of a report; returns the files written and warnings for
/// skipped series.
pub fn emit_plots(report: &RunReport, dir: &Path, style: &PlotStyle) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    let traces: Vec<_> = report.functionals.iter().filter(|f| f.trace.len() >= 2).collect();
    if report.series.is_empty() && traces.is_empty() {
        warnings.push(format!("{}: nothing to plot", report.suite));
        return Ok((files, warnings));
    }
    std::fs::create_dir_all(dir)?;
    for s in &report.series {
        let path = dir.join(format!("{}_{}.svg", report.suite, s.name));
        let title = format!("{} {}", report.suite, s.name);
        let drawn = if s.name == "sigma_histogram" {
            draw_histogram(&path, &title, s, style)?
        } else if s.columns.len() < 2 || s.rows.is_empty() {
            false
        } else {
            let log = style.loglog_convergence && s.name == "convergence";
            let tx = |v: f64| if log { v.log10() } else { v };
            let curves: Vec<(String, Vec<(f64, f64)>)> = (1..s.columns.len())
                .map(|j| {
                    let name = if log { format!("log10 {}", s.columns[j]) } else { s.columns[j].clone() };
                    (name, s.rows.iter().map(|r| (tx(r[0]), tx(r[j]))).collect())
                })
                .collect();
            let xl = if log { format!("log10 {}", s.columns[0]) } else { s.columns[0].clone() };
            draw_lines(&path, &title, &xl, &curves, style)?
        };
        if drawn {
            files.push(path);
        } else {
            warnings.push(format!("{}: series `{}` has no finite data, skipped", report.suite, s.name));
        }
    }
    for (n, f) in traces.iter().enumerate() {
        let path = dir.join(format!("{}_trace_{n}.svg", report.suite));
        let title = format!("{} {}", f.functional, f.observable);
        if draw_lines(&path, &title, "horizon", &[(f.functional.clone(), f.trace.clone())], style)? {
            files.push(path);
        } else {
            warnings.push(format!("{}: trace of {title} has no finite data, skipped", report.suite));
        }
    }
    Ok((files, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::suites::run_suite;

    #[test]
    fn empty_report_writes_nothing() {
        let cfg = ExperimentConfig::parse("[detector]\ncutoff = 20\n").unwrap();
        let mut r = run_suite("detector", &cfg, None).unwrap();
        r.series.clear();
        let dir = tempfile::tempdir().unwrap();
        let (files, warnings) = emit_plots(&r, &dir.path().join("plots"), &PlotStyle::default()).unwrap();
        assert!(files.is_empty());
        assert_eq!(warnings.len(), 1);
        assert!(!dir.path().join("plots").exists());
    }

    #[test]
    fn histogram_svg() {
        let cfg = ExperimentConfig::parse("[detector]\ncutoff = 30\n").unwrap();
        let r = run_suite("detector", &cfg, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (files, warnings) = emit_plots(&r, dir.path(), &PlotStyle::default()).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(files.len(), 1);
        let svg = std::fs::read_to_string(&files[0]).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<rect"));
    }

    #[test]
    fn nan_series_skipped() {
        let cfg = ExperimentConfig::parse("[detector]\ncutoff = 20\n").unwrap();
        let mut r = run_suite("detector", &cfg, None).unwrap();
        r.series =
            vec![Series { name: "bad".into(), columns: vec!["x".into(), "y".into()], rows: vec![vec![f64::NAN, 1.0]] }];
        let dir = tempfile::tempdir().unwrap();
        let (files, warnings) = emit_plots(&r, dir.path(), &PlotStyle::default()).unwrap();
        assert!(files.is_empty() && warnings.len() == 1);
    }
}
