use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{SmoothnessSeries, TransitionWindow};
use crate::error::{Error, Result};

pub const REPORT_KEYS: [&str; 6] = ["fid", "cov", "gdiv", "ldiv", "inter_div", "intra_div"];

/// Metric values; `None` is written as `unavailable`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricReport {
    pub fid: Option<f64>,
    pub cov: Option<f64>,
    pub gdiv: Option<f64>,
    pub ldiv: Option<f64>,
    pub inter_div: Option<f64>,
    pub intra_div: Option<f64>,
}

impl MetricReport {
    pub fn entries(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("fid", self.fid),
            ("cov", self.cov),
            ("gdiv", self.gdiv),
            ("ldiv", self.ldiv),
            ("inter_div", self.inter_div),
            ("intra_div", self.intra_div),
        ]
    }

    pub fn is_empty(&self) -> bool {
        self.entries().iter().all(|(_, v)| v.is_none())
    }

    /// `key=value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| match v {
                Some(v) => format!("{k}={v}\n"),
                None => format!("{k}=unavailable\n"),
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut report = MetricReport::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Metric(format!("report line `{line}` is not key=value")))?;
            let value = match value.trim() {
                "unavailable" => None,
                v => Some(v.parse::<f64>().map_err(|_| Error::Metric(format!("bad value in `{line}`")))?),
            };
            let slot = match key.trim() {
                "fid" => &mut report.fid,
                "cov" => &mut report.cov,
                "gdiv" => &mut report.gdiv,
                "ldiv" => &mut report.ldiv,
                "inter_div" => &mut report.inter_div,
                "intra_div" => &mut report.intra_div,
                other => return Err(Error::Metric(format!("unknown report key `{other}`"))),
            };
            *slot = value;
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub plots: Vec<PathBuf>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Line plot of one series per joint, with dotted vertical lines at the
/// edges of the transition window. `frame_of(t)` maps a series index to
/// the clip frame it describes.
pub fn render_svg(
    title: &str,
    joints: &[String],
    series: &[Vec<f64>],
    transition: Option<&TransitionWindow>,
    frame_of: impl Fn(usize) -> usize,
) -> String {
    let (width, height) = (900.0, 320.0);
    let (left, right, top, bottom) = (60.0, 150.0, 30.0, 40.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    let y_max = series
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0_f64, f64::max)
        .max(1e-9);
    let x_of = |t: f64| left + plot_w * t / (len.max(2) - 1) as f64;
    let y_of = |v: f64| top + plot_h * (1.0 - v / y_max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{left}" y="18">{title}</text>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y_max:.3}</text>"#, left - 4.0, top + 4.0);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">0</text>"#, left - 4.0, top + plot_h);
    let _ = writeln!(svg, r#"<text x="{left}" y="{:.2}">0</text>"#, height - 20.0);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
        left + plot_w,
        height - 20.0,
        len.saturating_sub(1)
    );

    if let Some(window) = transition {
        // series index whose frame is the window edge
        let index_of = |frame: usize| (0..len).find(|&t| frame_of(t) >= frame).unwrap_or(len.saturating_sub(1));
        for &b in &window.boundaries {
            for edge in [b.saturating_sub(window.half_width), b + window.half_width] {
                let x = x_of(index_of(edge) as f64);
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-dasharray="2,4"/>"#,
                    top + plot_h
                );
            }
        }
    }

    for (k, (name, values)) in joints.iter().zip(series).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.2},{:.2}", x_of(t as f64), y_of(if v.is_finite() { v } else { y_max })))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 14.0 * (k as f64 + 1.0);
        let lx = left + plot_w + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 16.0,
            ly - 4.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}">{name}</text>"#, lx + 20.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Write `report.txt` and, with a smoothness series, `velocity.svg` and
/// `acceleration.svg` into `dir`. Nothing is written for an empty report.
pub fn emit_report(dir: &Path, report: &MetricReport, smoothness: Option<&SmoothnessSeries>) -> Result<ReportFiles> {
    if report.is_empty() && smoothness.is_none() {
        return Err(Error::Metric("no metrics to report".into()));
    }
    let mut outputs = vec![(dir.join("report.txt"), report.to_text())];
    if let Some(s) = smoothness {
        outputs.push((
            dir.join("velocity.svg"),
            render_svg(
                "L2 velocity change per joint",
                &s.joints,
                &s.velocity_change,
                s.transition.as_ref(),
                SmoothnessSeries::velocity_frame,
            ),
        ));
        outputs.push((
            dir.join("acceleration.svg"),
            render_svg(
                "L2 acceleration change per joint",
                &s.joints,
                &s.acceleration_change,
                s.transition.as_ref(),
                SmoothnessSeries::acceleration_frame,
            ),
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (path, text) in &outputs {
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    let mut paths = outputs.into_iter().map(|(p, _)| p);
    Ok(ReportFiles {
        report: paths.next().expect("report path"),
        plots: paths.collect(),
    })
}
