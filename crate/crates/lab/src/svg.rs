//! Minimal SVG line and scatter plots. CSV files are the results of record;
//! these are for a quick look.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    log_x: bool,
}

impl Frame {
    fn new(points: impl Iterator<Item = (f64, f64)> + Clone, log_x: bool) -> Self {
        let fx = |v: f64| if log_x { v.max(f64::MIN_POSITIVE).log10() } else { v };
        let finite = points.filter(|(x, y)| x.is_finite() && y.is_finite());
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        Frame {
            x: span(&mut finite.clone().map(|(x, _)| fx(x))),
            y: span(&mut finite.map(|(_, y)| y)),
            log_x,
        }
    }

    fn px(&self, x: f64) -> f64 {
        let x = if self.log_x { x.max(f64::MIN_POSITIVE).log10() } else { x };
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, frame: &Frame, title: &str, x_label: &str, y_label: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN, MARGIN);
    let _ = write!(out, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 15.0,
        escape(x_label)
    );
    let _ = write!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    let fmt = |v: f64| format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string();
    let xs = if frame.log_x {
        (10f64.powf(frame.x.0), 10f64.powf(frame.x.1))
    } else {
        frame.x
    };
    let _ = write!(out, r#"<text x="{x0}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, fmt(xs.0));
    let _ = write!(out, r#"<text x="{x1}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, fmt(xs.1));
    let _ = write!(out, r#"<text x="{}" y="{y0}" text-anchor="end">{}</text>"#, x0 - 4.0, fmt(frame.y.0));
    let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 4.0, y1 + 4.0, fmt(frame.y.1));
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        let c = COLORS[i % COLORS.len()];
        let _ = write!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/><text x="{}" y="{}">{}</text>"#,
            W - MARGIN - 110.0,
            y - 9.0,
            W - MARGIN - 95.0,
            y,
            escape(name)
        );
    }
}

/// One polyline per series; `log_x` spaces the x axis logarithmically.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let frame = Frame::new(series.iter().flat_map(|s| s.points.iter().copied()), log_x);
    let mut out = String::new();
    header(&mut out, &frame, title, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = write!(out, r#"<polyline points="{}" stroke="{c}" fill="none" stroke-width="2"/>"#, pts.join(" "));
        for p in &pts {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = write!(out, r#"<circle cx="{x}" cy="{y}" r="3" fill="{c}"/>"#);
        }
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Labelled points.
pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(String, f64, f64)]) -> String {
    let frame = Frame::new(points.iter().map(|p| (p.1, p.2)), false);
    let mut out = String::new();
    header(&mut out, &frame, title, x_label, y_label);
    for (label, x, y) in points.iter().filter(|p| p.1.is_finite() && p.2.is_finite()) {
        let (cx, cy) = (frame.px(*x), frame.py(*y));
        let _ = write!(
            out,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            COLORS[0],
            cx + 6.0,
            cy - 6.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
