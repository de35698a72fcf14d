//! PNG figures. Every plotted value is read from the report as is.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::coord::Shift;
use plotters::prelude::*;

use super::{MetricReport, Theme};
use crate::harness::BASELINE;
use crate::{Error, Result};

type Area<'a> = DrawingArea<BitMapBackend<'a>, Shift>;

fn render_err(e: impl std::fmt::Display) -> Error {
    Error::Render(e.to_string())
}

/// Padded `[lo, hi]` around `values`.
fn span(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.08).max(1e-3);
    (lo - pad, hi + pad)
}

fn canvas<'a>(path: &'a Path, theme: &Theme) -> Result<Area<'a>> {
    let root = BitMapBackend::new(path, (theme.width, theme.height)).into_drawing_area();
    root.fill(&WHITE).map_err(render_err)?;
    Ok(root)
}

fn category_label(names: &[String], x: f64) -> String {
    let i = x.round();
    if (x - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < names.len() {
        names[i as usize].clone()
    } else {
        String::new()
    }
}

/// Every figure that has data; returns `(file name, title)` pairs.
pub(super) fn render_all(report: &MetricReport, theme: &Theme, dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut emit = |file: &str, title: &str, ok: bool| {
        if ok {
            out.push((file.to_string(), title.to_string()));
        }
    };
    emit("tau_max.png", "Maximum classifier accuracy against tau (best seed per tau)", tau_curves(report, theme, &dir.join("tau_max.png"), false)?);
    emit("tau_std.png", "Mean classifier accuracy against tau with one standard deviation", tau_curves(report, theme, &dir.join("tau_std.png"), true)?);
    emit("psi_boxplot.png", "Fitting capacity across seeds (all outliers)", boxplot(report, theme, &dir.join("psi_boxplot.png"), false)?);
    emit("psi_boxplot_zoomed.png", "Fitting capacity across seeds (zoomed to whiskers)", boxplot(report, theme, &dir.join("psi_boxplot_zoomed.png"), true)?);
    emit("per_class_relative.png", "Per-class accuracy at tau = 1 relative to the baseline", per_class(report, theme, &dir.join("per_class_relative.png"))?);
    emit("normalized.png", "Normalized comparison of fitting capacity, IS, diff-IS and FID", normalized(report, theme, &dir.join("normalized.png"))?);
    emit("knn_accuracy.png", "1-NN accuracy against tau (mean and standard deviation)", knn(report, theme, &dir.join("knn_accuracy.png"))?);
    Ok(out)
}

fn tau_curves(report: &MetricReport, theme: &Theme, path: &Path, band: bool) -> Result<bool> {
    if report.tau_rows.is_empty() {
        return Ok(false);
    }
    let mut series: BTreeMap<&str, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for r in &report.tau_rows {
        let (y, spread) = if band { (r.mean, r.std.unwrap_or(0.0)) } else { (r.max, 0.0) };
        series.entry(r.model.as_str()).or_default().push((r.tau, y, spread));
    }
    if series.len() > 1 {
        series.remove(BASELINE);
    }
    let (lo, hi) = span(series.values().flatten().flat_map(|&(_, y, s)| [y - s, y + s]));
    let root = canvas(path, theme)?;
    let title = if band { "Mean accuracy against tau" } else { "Maximum accuracy against tau" };
    let mut chart = ChartBuilder::on(&root)
        .caption(title, (theme.font.as_str(), theme.caption_size))
        .margin(theme.margin)
        .x_label_area_size(50)
        .y_label_area_size(70)
        .build_cartesian_2d(-0.02f64..1.02f64, lo..hi.min(1.0 + 1e-3).max(lo + 1e-3))
        .map_err(render_err)?;
    chart
        .configure_mesh()
        .x_desc("tau")
        .y_desc("test accuracy")
        .label_style((theme.font.as_str(), theme.label_size))
        .draw()
        .map_err(render_err)?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = theme.color(i);
        if band {
            let mut poly: Vec<(f64, f64)> = pts.iter().map(|&(t, y, s)| (t, y + s)).collect();
            poly.extend(pts.iter().rev().map(|&(t, y, s)| (t, y - s)));
            chart.draw_series(std::iter::once(Polygon::new(poly, color.mix(theme.band_opacity).filled()))).map_err(render_err)?;
        }
        chart
            .draw_series(LineSeries::new(pts.iter().map(|&(t, y, _)| (t, y)), color.stroke_width(2)))
            .map_err(render_err)?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart.draw_series(pts.iter().map(|&(t, y, _)| Circle::new((t, y), 4, color.filled()))).map_err(render_err)?;
    }
    chart
        .configure_series_labels()
        .label_font((theme.font.as_str(), theme.label_size))
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerLeft)
        .draw()
        .map_err(render_err)?;
    root.present().map_err(render_err)?;
    Ok(true)
}

fn boxplot(report: &MetricReport, theme: &Theme, path: &Path, zoomed: bool) -> Result<bool> {
    let mut names = Vec::new();
    let mut boxes = Vec::new();
    if let Some(b) = &report.baseline {
        names.push(BASELINE.to_string());
        boxes.push(Some(b));
    }
    for m in &report.models {
        let label = match m.status() {
            "ok" => m.model.clone(),
            "all_failed" => format!("{} (FAILED)", m.model),
            _ => format!("{} ({} failed)", m.model, m.failed_runs),
        };
        names.push(label);
        boxes.push(m.psi.as_ref());
    }
    if boxes.iter().all(Option::is_none) {
        return Ok(false);
    }
    let present = boxes.iter().flatten();
    let (lo, hi) = if zoomed {
        span(present.flat_map(|s| [s.lower_whisker, s.upper_whisker]))
    } else {
        span(present.flat_map(|s| s.values.iter().copied()))
    };
    let root = canvas(path, theme)?;
    let title = if zoomed { "Fitting capacity (zoomed)" } else { "Fitting capacity" };
    let n = names.len() as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, (theme.font.as_str(), theme.caption_size))
        .margin(theme.margin)
        .x_label_area_size(60)
        .y_label_area_size(70)
        .build_cartesian_2d(-0.5f64..n - 0.5, lo..hi)
        .map_err(render_err)?;
    let label = |x: &f64| category_label(&names, *x);
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(names.len() + 1)
        .x_label_formatter(&label)
        .y_desc("test accuracy at tau = 1")
        .label_style((theme.font.as_str(), theme.label_size))
        .draw()
        .map_err(render_err)?;
    for (i, b) in boxes.iter().enumerate() {
        let x = i as f64;
        let color = theme.color(i);
        let Some(s) = b else {
            let mid = (lo + hi) / 2.0;
            chart
                .draw_series(std::iter::once(Text::new("FAILED", (x - 0.2, mid), (theme.font.as_str(), theme.label_size).into_font().color(&theme.failure()))))
                .map_err(render_err)?;
            continue;
        };
        let w = 0.3;
        let elems: Vec<PathElement<(f64, f64)>> = vec![
            PathElement::new(vec![(x - w, s.q1), (x + w, s.q1), (x + w, s.q3), (x - w, s.q3), (x - w, s.q1)], color.stroke_width(2)),
            PathElement::new(vec![(x - w, s.median), (x + w, s.median)], BLACK.stroke_width(3)),
            PathElement::new(vec![(x, s.q3), (x, s.upper_whisker)], color.stroke_width(2)),
            PathElement::new(vec![(x, s.q1), (x, s.lower_whisker)], color.stroke_width(2)),
            PathElement::new(vec![(x - w / 2.0, s.upper_whisker), (x + w / 2.0, s.upper_whisker)], color.stroke_width(2)),
            PathElement::new(vec![(x - w / 2.0, s.lower_whisker), (x + w / 2.0, s.lower_whisker)], color.stroke_width(2)),
        ];
        chart.draw_series(elems).map_err(render_err)?;
        let shown = s.outliers.iter().filter(|&&v| v >= lo && v <= hi);
        chart.draw_series(shown.map(|&v| Cross::new((x, v), 6, theme.failure().stroke_width(2)))).map_err(render_err)?;
    }
    root.present().map_err(render_err)?;
    Ok(true)
}

/// Grouped bars with `(mean, std)` whiskers; `groups` name the x slots.
fn grouped_bars(
    path: &Path,
    theme: &Theme,
    title: &str,
    y_desc: &str,
    groups: &[String],
    series: &[(String, Vec<Option<(f64, f64)>>)],
) -> Result<bool> {
    if series.is_empty() || groups.is_empty() {
        return Ok(false);
    }
    let vals = series.iter().flat_map(|(_, v)| v.iter().flatten().flat_map(|&(m, s)| [m - s, m + s, 0.0]));
    let (lo, hi) = span(vals);
    let root = canvas(path, theme)?;
    let n = groups.len() as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, (theme.font.as_str(), theme.caption_size))
        .margin(theme.margin)
        .x_label_area_size(50)
        .y_label_area_size(70)
        .build_cartesian_2d(-0.5f64..n - 0.5, lo..hi)
        .map_err(render_err)?;
    let label = |x: &f64| category_label(groups, *x);
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(groups.len() + 1)
        .x_label_formatter(&label)
        .y_desc(y_desc)
        .label_style((theme.font.as_str(), theme.label_size))
        .draw()
        .map_err(render_err)?;
    let width = 0.8 / series.len() as f64;
    for (j, (name, vals)) in series.iter().enumerate() {
        let color = theme.color(j);
        let left = |g: usize| g as f64 - 0.4 + j as f64 * width;
        let bars = vals.iter().enumerate().filter_map(|(g, v)| v.map(|(m, _)| Rectangle::new([(left(g), 0.0), (left(g) + width * 0.9, m)], color.filled())));
        chart
            .draw_series(bars)
            .map_err(render_err)?
            .label(name.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 14, y + 5)], color.filled()));
        let whiskers = vals.iter().enumerate().filter_map(|(g, v)| {
            let (m, s) = (*v)?;
            let c = left(g) + width * 0.45;
            (s > 0.0).then(|| PathElement::new(vec![(c, m - s), (c, m + s)], BLACK.stroke_width(2)))
        });
        chart.draw_series(whiskers).map_err(render_err)?;
    }
    chart.draw_series(std::iter::once(PathElement::new(vec![(-0.5, 0.0), (n - 0.5, 0.0)], BLACK))).map_err(render_err)?;
    chart
        .configure_series_labels()
        .label_font((theme.font.as_str(), theme.label_size))
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(render_err)?;
    root.present().map_err(render_err)?;
    Ok(true)
}

fn per_class(report: &MetricReport, theme: &Theme, path: &Path) -> Result<bool> {
    let classes = report.per_class.iter().map(|r| r.class + 1).max().unwrap_or(0);
    let groups: Vec<String> = (0..classes).map(|k| k.to_string()).collect();
    let mut series: BTreeMap<&str, Vec<Option<(f64, f64)>>> = BTreeMap::new();
    for r in &report.per_class {
        let row = series.entry(r.model.as_str()).or_insert_with(|| vec![None; classes]);
        row[r.class] = r.mean.map(|m| (m, r.std.unwrap_or(0.0)));
    }
    let series: Vec<(String, Vec<_>)> = series.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    grouped_bars(path, theme, "Per-class accuracy relative to baseline", "accuracy difference", &groups, &series)
}

fn normalized(report: &MetricReport, theme: &Theme, path: &Path) -> Result<bool> {
    let models: Vec<String> = {
        let mut m: Vec<String> = report.normalized.iter().map(|r| r.model.clone()).collect();
        m.sort();
        m.dedup();
        m
    };
    let mut series: BTreeMap<&str, Vec<Option<(f64, f64)>>> = BTreeMap::new();
    for r in &report.normalized {
        let row = series.entry(r.metric.name()).or_insert_with(|| vec![None; models.len()]);
        let g = models.iter().position(|m| *m == r.model).expect("collected above");
        row[g] = Some((r.z, 0.0));
    }
    let series: Vec<(String, Vec<_>)> = series.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    grouped_bars(path, theme, "Normalized scores (FID negated)", "z-score", &models, &series)
}

fn knn(report: &MetricReport, theme: &Theme, path: &Path) -> Result<bool> {
    if report.knn.is_empty() {
        return Ok(false);
    }
    let (lo, hi) = span(report.knn.iter().flat_map(|r| [r.mean - r.std.unwrap_or(0.0), r.mean + r.std.unwrap_or(0.0)]));
    let root = canvas(path, theme)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("1-NN accuracy against tau", (theme.font.as_str(), theme.caption_size))
        .margin(theme.margin)
        .x_label_area_size(50)
        .y_label_area_size(70)
        .build_cartesian_2d(-0.02f64..1.02f64, lo..hi)
        .map_err(render_err)?;
    chart
        .configure_mesh()
        .x_desc("tau")
        .y_desc("1-NN test accuracy")
        .label_style((theme.font.as_str(), theme.label_size))
        .draw()
        .map_err(render_err)?;
    let mut by_model: BTreeMap<&str, Vec<&super::KnnRow>> = BTreeMap::new();
    for r in &report.knn {
        by_model.entry(r.model.as_str()).or_default().push(r);
    }
    for (i, (name, rows)) in by_model.iter().enumerate() {
        let color = theme.color(i);
        chart
            .draw_series(LineSeries::new(rows.iter().map(|r| (r.tau, r.mean)), color.stroke_width(2)))
            .map_err(render_err)?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        let bars = rows.iter().map(|r| {
            let s = r.std.unwrap_or(0.0);
            ErrorBar::new_vertical(r.tau, r.mean - s, r.mean, r.mean + s, color.filled(), 8)
        });
        chart.draw_series(bars).map_err(render_err)?;
    }
    chart
        .configure_series_labels()
        .label_font((theme.font.as_str(), theme.label_size))
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(render_err)?;
    root.present().map_err(render_err)?;
    Ok(true)
}
