//! Minimal SVG charts for loss curves and sweep tables.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn frame(title: &str, desc: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, "<desc>{}</desc>", escape(desc));
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN / 2.0, MARGIN / 2.0);
    let _ = writeln!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    s
}

fn scale(v: f64, (lo, hi): (f64, f64), a: f64, b: f64) -> f64 {
    a + (v - lo) / (hi - lo) * (b - a)
}

fn axis_ticks(s: &mut String, xr: (f64, f64), yr: (f64, f64)) {
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN / 2.0, MARGIN / 2.0);
    for (v, anchor) in [(xr.0, x0), (xr.1, x1)] {
        let _ = writeln!(s, r#"<text x="{anchor}" y="{}" text-anchor="middle">{v:.4}</text>"#, y0 + 16.0);
    }
    for (v, anchor) in [(yr.0, y0), (yr.1, y1)] {
        let _ = writeln!(s, r#"<text x="{}" y="{anchor}" text-anchor="end">{v:.4}</text>"#, x0 - 4.0);
    }
}

/// One polyline per series on shared axes.
pub fn line_chart(title: &str, desc: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut s = frame(title, desc, x_label, y_label);
    let xr = extent(series.iter().flat_map(|c| c.points.iter().map(|p| p.0)));
    let yr = extent(series.iter().flat_map(|c| c.points.iter().map(|p| p.1)));
    axis_ticks(&mut s, xr, yr);
    for (i, c) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    scale(x, xr, MARGIN, WIDTH - MARGIN / 2.0),
                    scale(y, yr, HEIGHT - MARGIN, MARGIN / 2.0)
                )
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN / 2.0 + 14.0 * (i + 1) as f64,
            escape(&c.label)
        );
    }
    s + "</svg>\n"
}

/// One bar per value; `highlight` is drawn in a second colour.
pub fn bar_chart(title: &str, desc: &str, x_label: &str, y_label: &str, bars: &[f64], highlight: Option<usize>) -> String {
    let mut s = frame(title, desc, x_label, y_label);
    let yr = (0.0, extent(bars.iter().copied()).1.max(1e-12));
    axis_ticks(&mut s, (0.0, bars.len().saturating_sub(1) as f64), yr);
    let span = WIDTH - 1.5 * MARGIN;
    let w = span / bars.len().max(1) as f64;
    for (i, &v) in bars.iter().enumerate() {
        let top = scale(v, yr, HEIGHT - MARGIN, MARGIN / 2.0);
        let color = if highlight == Some(i) { COLORS[1] } else { COLORS[0] };
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            MARGIN + i as f64 * w + 0.1 * w,
            0.8 * w,
            HEIGHT - MARGIN - top
        );
    }
    s + "</svg>\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let c = line_chart(
            "t",
            "a < b",
            "epoch",
            "loss",
            &[Series {
                label: "run".into(),
                points: vec![(1.0, 2.0), (2.0, 1.0)],
            }],
        );
        assert!(c.starts_with("<svg") && c.ends_with("</svg>\n"));
        assert!(c.contains("a &lt; b") && c.contains("<polyline"));
        let b = bar_chart("t", "", "i", "v", &[1.0, 3.0, 2.0], Some(1));
        assert_eq!(b.matches("<rect").count(), 4);
    }
}
