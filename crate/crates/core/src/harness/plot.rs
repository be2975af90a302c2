//! Static SVG line plots of result tables.
//!
//! Each point is a `<circle class="point">` carrying the original CSV
//! strings in `data-x` / `data-y`; each curve is one
//! `<polyline class="curve">` with a matching legend entry.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::table::Table;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PlotKind {
    RiskVsN,
    MVsN,
    LandscapeScan,
    Trace,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::RiskVsN, PlotKind::MVsN, PlotKind::LandscapeScan, PlotKind::Trace];

    pub fn file_stem(self) -> &'static str {
        match self {
            PlotKind::RiskVsN => "risk_vs_n",
            PlotKind::MVsN => "m_vs_n",
            PlotKind::LandscapeScan => "landscape_scan",
            PlotKind::Trace => "trace",
        }
    }

    fn spec(self) -> Spec {
        match self {
            PlotKind::RiskVsN => Spec {
                title: "fine-tuned excess risk",
                x: "n",
                ys: &["risk_post"],
                band: Some("risk_post_std"),
                groups: &["d", "s"],
                x_log: true,
                y_log: true,
            },
            PlotKind::MVsN => Spec {
                title: "final |m|",
                x: "n",
                ys: &["m_abs"],
                band: Some("m_abs_std"),
                groups: &["d", "s"],
                x_log: true,
                y_log: false,
            },
            PlotKind::LandscapeScan => Spec {
                title: "projected population loss and critical residual",
                x: "m",
                ys: &["loss", "residual"],
                band: None,
                groups: &[],
                x_log: false,
                y_log: false,
            },
            PlotKind::Trace => Spec {
                title: "training loss",
                x: "step",
                ys: &["loss"],
                band: None,
                groups: &[],
                x_log: false,
                y_log: true,
            },
        }
    }
}

struct Spec {
    title: &'static str,
    x: &'static str,
    ys: &'static [&'static str],
    band: Option<&'static str>,
    groups: &'static [&'static str],
    x_log: bool,
    y_log: bool,
}

/// Columns `kind` needs.
pub fn required_columns(kind: PlotKind) -> Vec<&'static str> {
    let s = kind.spec();
    let mut v = vec![s.x];
    v.extend(s.ys);
    v.extend(s.groups);
    v
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 9] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2", "#7f7f7f"];

struct Point {
    x: f64,
    y: f64,
    raw_x: String,
    raw_y: String,
    band: Option<f64>,
}

struct Curve {
    label: String,
    points: Vec<Point>,
}

/// Linear or log map from data to pixels.
#[derive(Debug, Clone, Copy)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub log: bool,
    pub px_lo: f64,
    pub px_hi: f64,
}

impl Axis {
    fn t(&self, v: f64) -> f64 {
        if self.log {
            v.log10()
        } else {
            v
        }
    }

    pub fn to_px(&self, v: f64) -> f64 {
        let (a, b) = (self.t(self.lo), self.t(self.hi));
        let frac = if b > a { (self.t(v) - a) / (b - a) } else { 0.5 };
        self.px_lo + frac * (self.px_hi - self.px_lo)
    }

    pub fn from_px(&self, p: f64) -> f64 {
        let (a, b) = (self.t(self.lo), self.t(self.hi));
        let u = a + (p - self.px_lo) / (self.px_hi - self.px_lo) * (b - a);
        if self.log {
            10f64.powf(u)
        } else {
            u
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.log10().floor() as i32, self.hi.log10().ceil() as i32);
            let mut t: Vec<f64> = (a..=b).map(|k| 10f64.powi(k)).filter(|v| *v >= self.lo && *v <= self.hi).collect();
            if t.len() < 2 {
                t = vec![self.lo, self.hi];
            }
            t
        } else {
            (0..=4).map(|k| self.lo + (self.hi - self.lo) * k as f64 / 4.0).collect()
        }
    }
}

fn axis_range(vals: impl Iterator<Item = f64>, log: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        if log {
            return (lo / 2.0, lo * 2.0);
        }
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    if log {
        let r = (hi / lo).powf(0.05);
        (lo / r, hi * r)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Rows used for a result-table plot: aggregates if present, else all rows.
fn plot_rows(table: &Table) -> Vec<usize> {
    let Some(k) = table.column("kind") else {
        return (0..table.len()).collect();
    };
    let agg: Vec<usize> =
        (0..table.len()).filter(|&i| matches!(table.rows[i][k].as_str(), "mean_std" | "best_of")).collect();
    if agg.is_empty() {
        (0..table.len()).collect()
    } else {
        agg
    }
}

fn collect_curves(table: &Table, spec: &Spec) -> Vec<Curve> {
    let xi = table.column(spec.x).unwrap();
    let gi: Vec<usize> = spec.groups.iter().map(|g| table.column(g).unwrap()).collect();
    let band_i = spec.band.and_then(|b| table.column(b));
    let kind_i = table.column("kind");
    let mut curves: BTreeMap<(Vec<i64>, usize), Curve> = BTreeMap::new();
    for i in plot_rows(table) {
        let row = &table.rows[i];
        let Ok(x) = row[xi].parse::<f64>() else { continue };
        if !x.is_finite() || (spec.x_log && x <= 0.0) {
            continue;
        }
        let key: Vec<i64> = gi.iter().map(|&g| row[g].parse::<f64>().map(|v| v as i64).unwrap_or(i64::MIN)).collect();
        for (yk, yname) in spec.ys.iter().enumerate() {
            let yi = table.column(yname).unwrap();
            let Ok(y) = row[yi].parse::<f64>() else { continue };
            if !y.is_finite() || (spec.y_log && y <= 0.0) {
                continue;
            }
            let mean_std = kind_i.is_none_or(|k| row[k] == "mean_std");
            let band = band_i.filter(|_| mean_std).and_then(|b| row[b].parse::<f64>().ok()).filter(|v| v.is_finite());
            let label = if gi.is_empty() {
                yname.to_string()
            } else {
                spec.groups.iter().zip(&gi).map(|(g, &c)| format!("{g}={}", row[c])).collect::<Vec<_>>().join(", ")
            };
            curves
                .entry((key.clone(), yk))
                .or_insert_with(|| Curve { label, points: Vec::new() })
                .points
                .push(Point { x, y, raw_x: row[xi].clone(), raw_y: row[yi].clone(), band });
        }
    }
    let mut out: Vec<Curve> = curves.into_values().collect();
    for c in &mut out {
        c.points.sort_by(|a, b| a.x.total_cmp(&b.x));
    }
    out
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// The SVG document for `kind`, or `None` when there is nothing to plot.
pub fn render_svg(table: &Table, kind: PlotKind) -> Result<Option<String>> {
    table.require(&required_columns(kind))?;
    if table.is_empty() {
        return Ok(None);
    }
    let spec = kind.spec();
    let curves = collect_curves(table, &spec);
    if curves.iter().all(|c| c.points.is_empty()) {
        return Ok(None);
    }
    let pts = || curves.iter().flat_map(|c| c.points.iter());
    let (xlo, xhi) = axis_range(pts().map(|p| p.x), spec.x_log);
    let (ylo, yhi) = axis_range(
        pts().flat_map(|p| {
            let b = p.band.unwrap_or(0.0);
            let lower = if spec.y_log && p.y - b <= 0.0 { p.y } else { p.y - b };
            [lower, p.y + b]
        }),
        spec.y_log,
    );
    let xa = Axis { lo: xlo, hi: xhi, log: spec.x_log, px_lo: LEFT, px_hi: WIDTH - RIGHT };
    let ya = Axis { lo: ylo, hi: yhi, log: spec.y_log, px_lo: HEIGHT - BOTTOM, px_hi: TOP };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<g class="meta" data-kind="{}" data-x-log="{}" data-y-log="{}" data-x-lo="{xlo:e}" data-x-hi="{xhi:e}" data-y-lo="{ylo:e}" data-y-hi="{yhi:e}"/>"#,
        kind.file_stem(),
        spec.x_log,
        spec.y_log
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, esc(spec.title));
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none"><rect x="{x0}" y="{y1}" width="{}" height="{}"/></g>"#, x1 - x0, y0 - y1);
    let _ = writeln!(s, r#"<g class="ticks">"#);
    for t in xa.ticks() {
        let p = xa.to_px(t);
        let _ = writeln!(s, r#"<line x1="{p:.2}" y1="{y0}" x2="{p:.2}" y2="{}" stroke="black"/><text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#, y0 + 5.0, y0 + 18.0, fmt_tick(t));
    }
    for t in ya.ticks() {
        let p = ya.to_px(t);
        let _ = writeln!(s, r#"<line x1="{}" y1="{p:.2}" x2="{x0}" y2="{p:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 5.0, x0 - 8.0, p + 4.0, fmt_tick(t));
    }
    let _ = writeln!(s, "</g>");
    let ylabel = spec.ys.join(", ");
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0, spec.x, if spec.x_log { " (log)" } else { "" });
    let _ = writeln!(s, r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}{}</text>"#, (y0 + y1) / 2.0, esc(&ylabel), if spec.y_log { " (log)" } else { "" });

    for (ci, c) in curves.iter().enumerate() {
        if c.points.is_empty() {
            continue;
        }
        let color = COLORS[ci % COLORS.len()];
        if c.points.iter().any(|p| p.band.is_some()) {
            let mut poly: Vec<String> = Vec::new();
            for p in &c.points {
                let hi = p.y + p.band.unwrap_or(0.0);
                poly.push(format!("{:.4},{:.4}", xa.to_px(p.x), ya.to_px(hi)));
            }
            for p in c.points.iter().rev() {
                let b = p.band.unwrap_or(0.0);
                let lo = if spec.y_log && p.y - b <= 0.0 { ya.lo } else { p.y - b };
                poly.push(format!("{:.4},{:.4}", xa.to_px(p.x), ya.to_px(lo)));
            }
            let _ = writeln!(s, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, poly.join(" "));
        }
        let coords: Vec<String> =
            c.points.iter().map(|p| format!("{:.4},{:.4}", xa.to_px(p.x), ya.to_px(p.y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            esc(&c.label),
            coords.join(" ")
        );
        for p in &c.points {
            let _ = writeln!(
                s,
                r#"<circle class="point" cx="{:.4}" cy="{:.4}" r="2.5" fill="{color}" data-x="{}" data-y="{}"/>"#,
                xa.to_px(p.x),
                ya.to_px(p.y),
                esc(&p.raw_x),
                esc(&p.raw_y)
            );
        }
    }
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (ci, c) in curves.iter().filter(|c| !c.points.is_empty()).enumerate() {
        let y = TOP + 10.0 + 18.0 * ci as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let color = COLORS[ci % COLORS.len()];
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#, lx + 20.0, lx + 26.0, y + 4.0, esc(&c.label));
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(Some(s))
}

/// Write `<dir>/<kind>.svg`. Returns `None` and writes nothing for an
/// empty table.
pub fn emit_plot(table: &Table, kind: PlotKind, dir: &Path) -> Result<Option<PathBuf>> {
    match render_svg(table, kind)? {
        None => Ok(None),
        Some(svg) => {
            std::fs::create_dir_all(dir)?;
            let p = dir.join(format!("{}.svg", kind.file_stem()));
            std::fs::write(&p, svg)?;
            Ok(Some(p))
        }
    }
}

/// Points of every curve as pixel pairs, parsed back out of an SVG.
pub fn extract_polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.contains(r#"class="curve""#))
        .filter_map(|l| attr(l, "points"))
        .map(|pts| {
            pts.split_whitespace()
                .filter_map(|p| {
                    let (a, b) = p.split_once(',')?;
                    Some((a.parse().ok()?, b.parse().ok()?))
                })
                .collect()
        })
        .collect()
}

/// `(cx, cy, data-x, data-y)` of every point marker.
pub fn extract_points(svg: &str) -> Vec<(f64, f64, String, String)> {
    svg.lines()
        .filter(|l| l.contains(r#"class="point""#))
        .filter_map(|l| {
            Some((attr(l, "cx")?.parse().ok()?, attr(l, "cy")?.parse().ok()?, attr(l, "data-x")?, attr(l, "data-y")?))
        })
        .collect()
}

/// Axes recorded in the SVG's `meta` element.
pub fn extract_axes(svg: &str) -> Option<(Axis, Axis)> {
    let l = svg.lines().find(|l| l.contains(r#"class="meta""#))?;
    let g = |n: &str| attr(l, n).and_then(|v| v.parse::<f64>().ok());
    let b = |n: &str| attr(l, n).map(|v| v == "true");
    Some((
        Axis { lo: g("data-x-lo")?, hi: g("data-x-hi")?, log: b("data-x-log")?, px_lo: LEFT, px_hi: WIDTH - RIGHT },
        Axis { lo: g("data-y-lo")?, hi: g("data-y-hi")?, log: b("data-y-log")?, px_lo: HEIGHT - BOTTOM, px_hi: TOP },
    ))
}

fn attr(line: &str, name: &str) -> Option<String> {
    let pat = format!(" {name}=\"");
    let start = line.find(&pat)? + pat.len();
    let end = line[start..].find('"')? + start;
    Some(line[start..end].to_string())
}

/// Fail with the list of absent columns, if any.
pub fn check_columns(table: &Table, kind: PlotKind) -> Result<()> {
    table.require(&required_columns(kind)).map(|_| ())
}

impl std::fmt::Display for PlotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.file_stem())
    }
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.file_stem() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown plot kind {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn results(ds: &[usize], mean_std: bool) -> Table {
        let mut t = Table::new(&["kind", "d", "s", "n", "risk_post", "risk_post_std", "m_abs", "m_abs_std"]);
        for &d in ds {
            for k in 9..=12 {
                let n = 1usize << k;
                let risk = 0.5f64.powi(k - 8) * d as f64 / 10.0;
                t.push(vec![
                    if mean_std { "mean_std" } else { "best_of" }.into(),
                    d.to_string(),
                    "1".into(),
                    n.to_string(),
                    risk.to_string(),
                    if mean_std { (risk / 4.0).to_string() } else { String::new() },
                    "0.9".into(),
                    if mean_std { "0.01".into() } else { String::new() },
                ]);
            }
        }
        t
    }

    #[test]
    fn empty_table_plots_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plot(&Table::new(&required_columns(PlotKind::RiskVsN)), PlotKind::RiskVsN, dir.path()).unwrap().is_none());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn missing_columns_error() {
        let mut t = Table::new(&["n", "d"]);
        t.push(vec!["1".into(), "2".into()]);
        assert!(matches!(render_svg(&t, PlotKind::RiskVsN), Err(Error::MissingColumns(m)) if m.contains("risk_post")));
    }

    #[test]
    fn one_curve_per_group_with_bands() {
        let svg = render_svg(&results(&[10, 20, 50], true), PlotKind::RiskVsN).unwrap().unwrap();
        assert_eq!(svg.matches(r#"class="curve""#).count(), 3);
        assert_eq!(svg.matches(r#"class="band""#).count(), 3);
        assert_eq!(svg.matches(r#"class="point""#).count(), 12);
        assert!(svg.contains("d=20, s=1"));
        let svg = render_svg(&results(&[10], false), PlotKind::MVsN).unwrap().unwrap();
        assert_eq!(svg.matches(r#"class="band""#).count(), 0);
    }

    #[test]
    fn points_recover_table_values() {
        let t = results(&[10, 20], true);
        let svg = render_svg(&t, PlotKind::RiskVsN).unwrap().unwrap();
        let (xa, ya) = extract_axes(&svg).unwrap();
        for (cx, cy, dx, dy) in extract_points(&svg) {
            let (x, y): (f64, f64) = (dx.parse().unwrap(), dy.parse().unwrap());
            assert!((xa.from_px(cx) / x - 1.0).abs() < 1e-5);
            assert!((ya.from_px(cy) / y - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in PlotKind::ALL {
            assert_eq!(k.to_string().parse::<PlotKind>().unwrap(), k);
        }
    }
}
