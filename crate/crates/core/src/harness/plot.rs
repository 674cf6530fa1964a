//! Static SVG boxplots of TPR against noise level.

use std::fmt::Write as _;
use std::path::Path;

use super::report::{quantile, write_atomic};
use super::{Configuration, ExperimentReport};
use crate::error::Result;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn y_of(v: f64) -> f64 {
    TOP + (1.0 - v) * (H - TOP - BOTTOM)
}

/// One box per noise level: quartile box, median bar, min/max whiskers.
pub fn boxplot_svg(report: &ExperimentReport, config: Configuration) -> String {
    let levels = &report.config.noise.levels;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{} {}: TPR over {} trials</text>"#,
        W / 2.0,
        report.system,
        config,
        report.config.trials
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">NSR</text><text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">TPR</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0,
        H / 2.0,
        H / 2.0
    );
    let slot = (W - LEFT - RIGHT) / levels.len().max(1) as f64;
    for (i, &nsr) in levels.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}%</text>"#,
            H - BOTTOM + 18.0,
            nsr * 100.0
        );
        let mut v: Vec<f64> = report
            .records
            .iter()
            .filter(|r| r.config == config && r.nsr == nsr)
            .filter_map(|r| r.tpr)
            .collect();
        v.sort_by(f64::total_cmp);
        let (Some(q1), Some(med), Some(q3)) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75)) else {
            continue;
        };
        let (lo, hi) = (v[0], v[v.len() - 1]);
        let half = (slot * 0.3).min(30.0);
        let _ = writeln!(
            s,
            r##"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="#333"/>"##,
            y_of(hi),
            y_of(lo)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9ecae1" stroke="#333"/>"##,
            cx - half,
            y_of(q3),
            2.0 * half,
            (y_of(q1) - y_of(q3)).max(1.0)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#c00" stroke-width="2"/>"##,
            cx - half,
            y_of(med),
            cx + half,
            y_of(med)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `tpr_<config>.svg` for every configuration in the report.
pub fn write_plots(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut configs = report.config.configs.clone();
    configs.sort();
    configs.dedup();
    for c in configs {
        write_atomic(dir.join(format!("tpr_{c}.svg")), boxplot_svg(report, c).as_bytes())?;
    }
    Ok(())
}
