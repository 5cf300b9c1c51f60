//! Plots and a summary from previously written tables.

use std::path::{Path, PathBuf};

use landau_core::chaos::{convergence_slope, RateFit};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::svg::{Plot, Series, Style};
use crate::table::{self, Table};

fn fit_json(label: &str, fit: &landau_core::Result<RateFit>) -> Value {
    match fit {
        Ok(f) => json!({ "series": label, "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared }),
        Err(e) => json!({ "series": label, "error": e.to_string() }),
    }
}

/// Markers for the data and a dashed line for the fit over the data range.
fn rate_series(label: &str, pts: Vec<(f64, f64)>, fits: &mut Vec<Value>, series: &mut Vec<Series>) {
    let fit = convergence_slope(&pts);
    fits.push(fit_json(label, &fit));
    if let Ok(f) = &fit {
        let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let line = [lo, hi].iter().map(|&n| (n, (f.intercept + f.slope * n.ln()).exp())).collect();
        series.push(Series { name: label.to_string(), points: pts, style: Style::Markers });
        series.push(Series {
            name: format!("fit {label}: slope {:.3}", f.slope),
            points: line,
            style: Style::Dashed,
        });
    } else {
        series.push(Series { name: label.to_string(), points: pts, style: Style::Markers });
    }
}

fn time_plot(title: &str, t: &Table, columns: &[String]) -> CliResult<Plot> {
    let time = t.floats("time")?;
    let mut series = Vec::new();
    for c in columns {
        let y = t.floats(c)?;
        series.push(Series { name: c.clone(), points: time.iter().copied().zip(y).collect(), style: Style::Line });
    }
    Ok(Plot {
        title: title.into(),
        x_label: "t".into(),
        y_label: "value".into(),
        log_x: false,
        log_y: false,
        series,
    })
}

fn last(t: &Table, name: &str) -> CliResult<f64> {
    Ok(*t.floats(name)?.last().expect("table checked nonempty"))
}

fn summarize(t: &Table, stem: &str) -> CliResult<(Plot, Value)> {
    match t.schema.as_str() {
        table::STATS => {
            let psi: Vec<String> = t.header.iter().filter(|h| h.starts_with("Psi_")).cloned().collect();
            if psi.is_empty() {
                return Err(CliError::Config("statistics table has no Psi_ columns".into()));
            }
            let plot = time_plot(&format!("{stem}: directional temperatures"), t, &psi)?;
            let values = json!({ "M2": last(t, "M2")?, "M4": last(t, "M4")?, "lln_value": last(t, "lln_value")? });
            Ok((plot, json!({ "final": values })))
        }
        table::DIAGNOSTICS => {
            let cols: Vec<String> =
                ["E11_grid", "E22_grid", "E11_closed", "E22_closed"].iter().map(|s| s.to_string()).collect();
            let plot = time_plot(&format!("{stem}: second moments"), t, &cols)?;
            let dev = t.floats("max_diag_deviation")?.into_iter().fold(0.0, f64::max);
            let mass = t.floats("mass")?;
            let drift = mass.iter().map(|m| (m - mass[0]).abs()).fold(0.0, f64::max);
            Ok((plot, json!({ "max_diag_deviation": dev, "mass_drift": drift })))
        }
        table::MOMENTS => {
            let time = t.floats("time")?;
            let margin = t.floats("margin")?;
            let mut times: Vec<f64> = time.clone();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let worst: Vec<(f64, f64)> = times
                .iter()
                .map(|&s| {
                    let m = time.iter().zip(&margin).filter(|(a, _)| **a == s).map(|(_, m)| *m).fold(f64::INFINITY, f64::min);
                    (s, m)
                })
                .collect();
            let min = worst.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let plot = Plot {
                title: format!("{stem}: smallest moment-bound margin"),
                x_label: "t".into(),
                y_label: "bound - Mp".into(),
                log_x: false,
                log_y: false,
                series: vec![Series { name: "min over replicas".into(), points: worst, style: Style::Line }],
            };
            Ok((plot, json!({ "min_margin": min })))
        }
        table::LLN => {
            let n = t.floats("N")?;
            let time = t.floats("time")?;
            let mean = t.floats("mean")?;
            let mut times = time.clone();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let (mut fits, mut series) = (Vec::new(), Vec::new());
            for s in times {
                let pts = n.iter().zip(&time).zip(&mean).filter(|((_, a), _)| **a == s).map(|((n, _), m)| (*n, *m)).collect();
                rate_series(&format!("t = {s}"), pts, &mut fits, &mut series);
            }
            let plot = Plot {
                title: format!("{stem}: law of large numbers functional"),
                x_label: "N".into(),
                y_label: "replica mean".into(),
                log_x: true,
                log_y: true,
                series,
            };
            Ok((plot, json!({ "fits": fits })))
        }
        table::CHAOS => {
            let label = t.column("label")?;
            let keep: Vec<usize> = (0..t.rows.len()).filter(|&i| t.rows[i][label] == "particles").collect();
            if keep.is_empty() {
                return Err(CliError::Config("chaos table has no particle rows".into()));
            }
            let n = t.floats("N")?;
            let (mut fits, mut series) = (Vec::new(), Vec::new());
            for metric in ["sliced_w2", "knn_kl"] {
                let v = t.floats(metric)?;
                rate_series(metric, keep.iter().map(|&i| (n[i], v[i])).collect(), &mut fits, &mut series);
            }
            let margins: Vec<f64> = {
                let m = t.floats("ckp_margin")?;
                keep.iter().map(|&i| m[i]).collect()
            };
            let plot = Plot {
                title: format!("{stem}: marginal distances to the limit"),
                x_label: "N".into(),
                y_label: "distance".into(),
                log_x: true,
                log_y: true,
                series,
            };
            Ok((plot, json!({ "fits": fits, "ckp_margins": margins })))
        }
        other => Err(CliError::Config(format!("no report for schema {other}"))),
    }
}

/// Writes `<stem>.svg` per input and `summary.json`; returns the written
/// paths.
pub fn cmd_report(inputs: &[PathBuf], out: &Path) -> CliResult<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(CliError::Config("report needs at least one --input table".into()));
    }
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for path in inputs {
        let t = Table::read(path)?;
        if t.rows.is_empty() {
            return Err(CliError::Config(format!("{}: table has no rows", path.display())));
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table").to_string();
        let (plot, summary) = summarize(&t, &stem)?;
        let svg = out.join(format!("{stem}.svg"));
        std::fs::write(&svg, plot.render())?;
        written.push(svg);
        entries.push(json!({
            "file": path.file_name().and_then(|s| s.to_str()).unwrap_or_default(),
            "schema": t.schema,
            "rows": t.rows.len(),
            "summary": summary,
        }));
    }
    let summary = out.join("summary.json");
    std::fs::write(&summary, serde_json::to_string_pretty(&json!({ "inputs": entries }))? + "\n")?;
    written.push(summary);
    Ok(written)
}
