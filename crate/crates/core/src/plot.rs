//! Bare-bones SVG line and scatter plots.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-9 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-9 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        Self { x0, x1, y0: y0 - pad, y1: y1 + pad }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(svg: &mut String, ax: &Axes, title: &str, x_label: &str, y_label: &str) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>
<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"#,
        W / 2.0,
        escape(title),
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN,
        W / 2.0,
        H - 16.0,
        escape(x_label),
        H / 2.0,
        H / 2.0,
        escape(y_label),
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = ax.x0 + f * (ax.x1 - ax.x0);
        let yv = ax.y0 + f * (ax.y1 - ax.y0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ax.px(xv),
            H - MARGIN + 16.0,
            tick(xv),
            MARGIN - 4.0,
            ax.py(yv) + 4.0,
            tick(yv)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(svg: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - MARGIN - 130.0,
            W - MARGIN - 110.0,
            COLORS[i % COLORS.len()],
            W - MARGIN - 104.0,
            y + 4.0,
            escape(name)
        );
    }
}

/// One polyline per named series.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let ax = Axes::fit(series.iter().flat_map(|(_, s)| s.iter().copied()));
    let mut svg = String::new();
    frame(&mut svg, &ax, title, x_label, y_label);
    if ax.y0 < 0.0 && ax.y1 > 0.0 {
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
            ax.py(0.0),
            W - MARGIN
        );
    }
    for (i, (_, pts)) in series.iter().enumerate() {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", ax.px(x), ax.py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLORS[i % COLORS.len()],
            path.join(" ")
        );
    }
    legend(&mut svg, &series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    svg
}

/// Scatter with an optional fitted line `y = slope * x + intercept`.
pub fn scatter_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64)],
    fit: Option<(f64, f64)>,
    note: &str,
) -> String {
    let ax = Axes::fit(points.iter().copied());
    let mut svg = String::new();
    frame(&mut svg, &ax, title, x_label, y_label);
    for &(x, y) in points {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{}" fill-opacity="0.6"/>"#,
            ax.px(x),
            ax.py(y),
            COLORS[0]
        );
    }
    if let Some((m, b)) = fit {
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/>"#,
            ax.px(ax.x0),
            ax.py(m * ax.x0 + b),
            ax.px(ax.x1),
            ax.py(m * ax.x1 + b),
            COLORS[1]
        );
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, MARGIN + 8.0, MARGIN + 18.0, escape(note));
    svg.push_str("</svg>\n");
    svg
}
