//! SVG line charts for report tables.

use std::fmt::Write as _;

use isomwalk::report::{Table, VerificationReport};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Plot {
    pub file_name: String,
    pub svg: String,
}

/// One chart per table that asks for one; tables with fewer than two rows
/// are skipped and reported in the returned notes.
pub fn emit_plots(report: &VerificationReport) -> (Vec<Plot>, Vec<String>) {
    let mut plots = Vec::new();
    let mut notes = Vec::new();
    for t in &report.tables {
        if t.plot.is_none() {
            continue;
        }
        if t.rows.len() < 2 {
            notes.push(format!("plot for table `{}` skipped: fewer than 2 rows", t.name));
            continue;
        }
        match render(t, &format!("{}: {}", report.experiment, t.name)) {
            Some(svg) => plots.push(Plot { file_name: format!("{}.svg", t.name), svg }),
            None => notes.push(format!("plot for table `{}` skipped: no plottable points", t.name)),
        }
    }
    (plots, notes)
}

/// In log mode `lo` and `hi` are already base-10 exponents.
fn nice_ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let (a, b) = (lo.floor() as i32, hi.ceil() as i32);
        let step = ((b - a) as f64 / 6.0).ceil().max(1.0) as usize;
        return (a..=b).step_by(step).map(f64::from).filter(|&k| k >= lo - 1e-9 && k <= hi + 1e-9).collect();
    }
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

fn label(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i64)
    } else if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn render(t: &Table, title: &str) -> Option<String> {
    let spec = t.plot.as_ref()?;
    let log = spec.log_log;
    let xs = t.column(&spec.x)?;
    let tr = |v: f64| if log { v.log10() } else { v };
    let ok = |v: f64| v.is_finite() && (!log || v > 0.0);
    let series: Vec<(&str, Vec<(f64, f64)>)> = spec
        .series
        .iter()
        .filter_map(|name| {
            let ys = t.column(name)?;
            let pts: Vec<(f64, f64)> = xs.iter().zip(&ys).filter(|(x, y)| ok(**x) && ok(**y)).map(|(x, y)| (tr(*x), tr(*y))).collect();
            (!pts.is_empty()).then_some((name.as_str(), pts))
        })
        .collect();
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().copied()).collect();
    if all.is_empty() {
        return None;
    }
    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (mut y0, mut y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        let pad = if y0 == 0.0 { 1.0 } else { 0.1 * y0.abs() };
        y0 -= pad;
        y1 += pad;
    }
    let pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for t in nice_ticks(x0, x1, log) {
        let x = px(t);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{TOP}" stroke="#ddd"/>"##, H - BOTTOM);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, H - BOTTOM + 16.0, label(t, log));
    }
    for t in nice_ticks(y0, y1, log) {
        let y = py(t);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, W - RIGHT);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, label(t, log));
    }
    let scale = if log { " (log scale)" } else { "" };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}{scale}</text>"#, W / 2.0, H - 14.0, escape(&spec.x));
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, W - RIGHT - 150.0, W - RIGHT - 130.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, W - RIGHT - 124.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
