//! CSV tables, static SVG plots and the JSON run summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ngd_core::signal::SampledSignal;
use ngd_core::SpectrumAnalysis;

use crate::config::{OutputDef, ScenarioConfig};
use crate::error::{CliError, Result};
use crate::runner::RunSummary;

fn out_err(path: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Output { path: path.to_string(), message: e.to_string() }
}

/// `time_s` followed by one column per signal. Signals must share a time base.
pub fn time_series_csv(columns: &[(&str, &SampledSignal)]) -> std::result::Result<String, String> {
    let Some((_, first)) = columns.first() else {
        return Err("no signals to write".into());
    };
    for (name, s) in columns {
        if s.len() != first.len() || s.dt != first.dt || s.t0 != first.t0 {
            return Err(format!("signal `{name}` does not share the time base of `{}`", columns[0].0));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("time_s").chain(columns.iter().map(|(n, _)| *n)).collect();
    w.write_record(&header).map_err(|e| e.to_string())?;
    for k in 0..first.len() {
        let mut row = vec![first.time(k).to_string()];
        row.extend(columns.iter().map(|(_, s)| s.samples[k].to_string()));
        w.write_record(&row).map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| e.to_string())
}

/// `omega_rad_s, magnitude, phase_rad, group_delay_s`.
pub fn spectrum_csv(s: &SpectrumAnalysis) -> std::result::Result<String, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["omega_rad_s", "magnitude", "phase_rad", "group_delay_s"]).map_err(|e| e.to_string())?;
    for (k, omega) in s.grid.omegas().into_iter().enumerate() {
        w.write_record([
            omega.to_string(),
            s.magnitude[k].to_string(),
            s.phase_unwrapped[k].to_string(),
            s.group_delay[k].to_string(),
        ])
        .map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| e.to_string())
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 800.0;
const MARGIN: f64 = 60.0;

struct Panel {
    top: f64,
    height: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Panel {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x_range.0) / (self.x_range.1 - self.x_range.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        self.top + self.height - (v - self.y_range.0) / (self.y_range.1 - self.y_range.0) * self.height
    }

    fn frame(&self, out: &mut String, x_label: &str, y_label: &str) {
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            self.top,
            WIDTH - 2.0 * MARGIN,
            self.height
        );
        for (v, anchor, x) in [(self.x_range.0, "start", MARGIN), (self.x_range.1, "end", WIDTH - MARGIN)] {
            let _ = writeln!(
                out,
                r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="{anchor}">{}</text>"#,
                self.top + self.height + 14.0,
                tick(v)
            );
        }
        for v in [self.y_range.0, self.y_range.1] {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
                MARGIN - 4.0,
                self.y(v) + 4.0,
                tick(v)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{x_label}</text>"#,
            WIDTH / 2.0,
            self.top + self.height + 30.0
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">{y_label}</text>"#,
            self.top + self.height / 2.0,
            self.top + self.height / 2.0
        );
    }

    fn polyline(&self, out: &mut String, xs: &[f64], ys: &[f64], color: &str) {
        let mut pts = String::new();
        let stride = (xs.len() / 2000).max(1);
        for k in (0..xs.len()).step_by(stride) {
            if ys[k].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", self.x(xs[k]), self.y(ys[k]));
            }
        }
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, pts.trim_end());
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || lo == hi {
        return range([lo, hi].into_iter());
    }
    (lo, hi)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Overlaid time traces.
pub fn trace_svg(title: &str, traces: &[(&str, &SampledSignal)]) -> String {
    let height = 400.0;
    let xs: Vec<Vec<f64>> = traces.iter().map(|(_, s)| s.times().collect()).collect();
    let panel = Panel {
        top: 40.0,
        height: height - 100.0,
        x_range: span(xs.iter().flatten().copied()),
        y_range: range(traces.iter().flat_map(|(_, s)| s.samples.iter().copied())),
    };
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="22" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    panel.frame(&mut out, "time (s)", "signal");
    for (i, ((name, s), x)) in traces.iter().zip(&xs).enumerate() {
        let color = COLORS[i % COLORS.len()];
        panel.polyline(&mut out, x, &s.samples, color);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            panel.top + 16.0 + 14.0 * i as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Magnitude (dB) and unwrapped phase against angular frequency.
pub fn bode_svg(title: &str, s: &SpectrumAnalysis) -> String {
    let height = 560.0;
    let omegas = s.grid.omegas();
    let log_axis = omegas.first().is_some_and(|w| *w > 0.0);
    let xs: Vec<f64> = if log_axis { omegas.iter().map(|w| w.log10()).collect() } else { omegas };
    let x_label = if log_axis { "log10 omega (rad/s)" } else { "omega (rad/s)" };
    let db: Vec<f64> = s.magnitude.iter().map(|m| 20.0 * m.log10()).collect();
    let x_range = span(xs.iter().copied());
    let top = Panel { top: 40.0, height: 200.0, x_range, y_range: range(db.iter().copied()) };
    let bottom = Panel { top: 300.0, height: 200.0, x_range, y_range: range(s.phase_unwrapped.iter().copied()) };
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="22" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    top.frame(&mut out, "", "magnitude (dB)");
    top.polyline(&mut out, &xs, &db, COLORS[0]);
    bottom.frame(&mut out, x_label, "phase (rad)");
    bottom.polyline(&mut out, &xs, &s.phase_unwrapped, COLORS[1]);
    out.push_str("</svg>\n");
    out
}

fn write_file(dir: &Path, rel: &str, contents: &str) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
            context: format!("creating {}", parent.display()),
            source,
        })?;
    }
    std::fs::write(&path, contents).map_err(|source| CliError::Io { context: format!("writing {}", path.display()), source })
}

pub fn write_outputs(
    cfg: &ScenarioConfig,
    dir: &Path,
    summary: &RunSummary,
    signals: &BTreeMap<String, SampledSignal>,
    spectra: &BTreeMap<String, SpectrumAnalysis>,
) -> Result<()> {
    let pick = |names: &[String], path: &str| -> Result<Vec<(String, &SampledSignal)>> {
        names
            .iter()
            .map(|n| signals.get(n).map(|s| (n.clone(), s)).ok_or_else(|| out_err(path, format!("unknown signal `{n}`"))))
            .collect()
    };
    for out in &cfg.outputs {
        match out {
            OutputDef::Csv { path, signals: names } => {
                let cols = pick(names, path)?;
                let refs: Vec<(&str, &SampledSignal)> = cols.iter().map(|(n, s)| (n.as_str(), *s)).collect();
                write_file(dir, path, &time_series_csv(&refs).map_err(|e| out_err(path, e))?)?;
            }
            OutputDef::SpectrumCsv { path, spectrum } => {
                let s = spectra.get(spectrum).ok_or_else(|| out_err(path, format!("unknown spectrum `{spectrum}`")))?;
                write_file(dir, path, &spectrum_csv(s).map_err(|e| out_err(path, e))?)?;
            }
            OutputDef::TraceSvg { path, signals: names, title } => {
                let cols = pick(names, path)?;
                let refs: Vec<(&str, &SampledSignal)> = cols.iter().map(|(n, s)| (n.as_str(), *s)).collect();
                write_file(dir, path, &trace_svg(title.as_deref().unwrap_or(&cfg.name), &refs))?;
            }
            OutputDef::BodeSvg { path, spectrum } => {
                let s = spectra.get(spectrum).ok_or_else(|| out_err(path, format!("unknown spectrum `{spectrum}`")))?;
                write_file(dir, path, &bode_svg(spectrum, s))?;
            }
            OutputDef::SummaryJson { path } => {
                let json = serde_json::to_string_pretty(summary).map_err(|e| out_err(path, e))?;
                write_file(dir, path, &(json + "\n"))?;
            }
        }
    }
    Ok(())
}
