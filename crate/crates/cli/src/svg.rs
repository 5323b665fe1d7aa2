//! Minimal static SVG plotting: a 2x2 panel grid with polyline series and
//! event stem marks. Output is a pure function of the data handed in.

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

pub struct Panel {
    pub title: String,
    /// Line series drawn in order.
    pub series: Vec<Series>,
    /// Stem marks (vertical lines over the x axis), e.g. event instants.
    pub stems: Vec<(f64, Vec<f64>)>, // unused y; kept simple: one stem set
}

impl Panel {
    pub fn lines(title: &str, series: Vec<Series>) -> Self {
        Self { title: title.to_string(), series, stems: Vec::new() }
    }

    pub fn stems(title: &str, stems: Vec<(String, &'static str, Vec<f64>)>) -> Self {
        // encode stem sets as zero-length series for bounds plus raw marks
        let mut panel = Self { title: title.to_string(), series: Vec::new(), stems: Vec::new() };
        for (label, color, xs) in stems {
            panel.series.push(Series {
                label,
                color,
                points: xs.iter().map(|&x| (x, 1.0)).collect(),
            });
            panel.stems.push((0.0, xs));
        }
        panel
    }
}

const PANEL_W: f64 = 460.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 48.0;

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut x0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    (x0, x1, y0, y1)
}

fn render_panel(out: &mut String, p: &Panel, ox: f64, oy: f64) {
    use std::fmt::Write;
    let (x0, x1, y0, y1) = bounds(&p.series);
    let plot_w = PANEL_W - 2.0 * MARGIN;
    let plot_h = PANEL_H - 2.0 * MARGIN;
    let sx = |x: f64| ox + MARGIN + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| oy + PANEL_H - MARGIN - (y - y0) / (y1 - y0) * plot_h;

    let _ = write!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#888"/>"##,
        ox + MARGIN,
        oy + MARGIN
    );
    let _ = write!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#,
        ox + PANEL_W / 2.0,
        oy + MARGIN - 12.0,
        p.title
    );
    // axis extent labels
    let _ = write!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="10">{:.4}</text>"#,
        ox + MARGIN,
        oy + PANEL_H - MARGIN + 14.0,
        x0
    );
    let _ = write!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{:.4}</text>"#,
        ox + PANEL_W - MARGIN,
        oy + PANEL_H - MARGIN + 14.0,
        x1
    );
    let _ = write!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{:.4}</text>"#,
        ox + MARGIN - 4.0,
        oy + PANEL_H - MARGIN,
        y0
    );
    let _ = write!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{:.4}</text>"#,
        ox + MARGIN - 4.0,
        oy + MARGIN + 8.0,
        y1
    );

    if p.stems.is_empty() {
        for s in &p.series {
            if s.points.is_empty() {
                continue;
            }
            let mut d = String::new();
            for &(x, y) in &s.points {
                if !x.is_finite() || !y.is_finite() {
                    continue;
                }
                let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(y));
            }
            let _ = write!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1"/>"#,
                d.trim_end(),
                s.color
            );
        }
    } else {
        for s in &p.series {
            for &(x, _) in &s.points {
                let _ = write!(
                    out,
                    r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{3}" stroke-width="1"/>"#,
                    sx(x),
                    sy(y0),
                    sy(y1),
                    s.color
                );
            }
        }
    }

    // legend
    let mut ly = oy + MARGIN + 14.0;
    for s in &p.series {
        if s.label.is_empty() {
            continue;
        }
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="11" fill="{}">{}</text>"#,
            ox + MARGIN + 8.0,
            s.color,
            s.label
        );
        ly += 14.0;
    }
}

/// Renders a 2x2 grid of panels (row-major).
pub fn render_grid(panels: &[Panel]) -> String {
    let cols = 2usize;
    let rows = panels.len().div_ceil(cols);
    let width = PANEL_W * cols as f64;
    let height = PANEL_H * rows as f64;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}"><rect width="100%" height="100%" fill="white"/>"#
    );
    for (i, p) in panels.iter().enumerate() {
        let ox = (i % cols) as f64 * PANEL_W;
        let oy = (i / cols) as f64 * PANEL_H;
        render_panel(&mut out, p, ox, oy);
    }
    out.push_str("</svg>");
    out
}
