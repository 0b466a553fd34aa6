//! Direct SVG chart emission: line charts (with optional confidence
//! bands), bar charts, and heatmap grids. No plotting dependency; output
//! is deterministic with coordinates formatted to nine significant digits.

use std::fmt::Write as _;

const WIDTH: f64 = 860.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 64.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

/// Format with nine significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (8 - mag).clamp(0, 17) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Title, axis labels, and the reproducibility footer every chart carries.
pub struct ChartMeta {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Config hash + seed, rendered small at the bottom.
    pub footer: String,
}

/// One plotted line; the optional band is `(x, low, high)` per point.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub band: Option<Vec<(f64, f64, f64)>>,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    plot_w: f64,
    plot_h: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        if self.x_max == self.x_min {
            MARGIN_LEFT + self.plot_w / 2.0
        } else {
            MARGIN_LEFT + (v - self.x_min) / (self.x_max - self.x_min) * self.plot_w
        }
    }

    fn y(&self, v: f64) -> f64 {
        if self.y_max == self.y_min {
            MARGIN_TOP + self.plot_h / 2.0
        } else {
            MARGIN_TOP + self.plot_h - (v - self.y_min) / (self.y_max - self.y_min) * self.plot_h
        }
    }
}

fn open_svg(out: &mut String, height: f64) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\">",
        fmt_sig(WIDTH),
        fmt_sig(height),
        fmt_sig(WIDTH),
        fmt_sig(height)
    );
    let _ = writeln!(
        out,
        "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>",
        fmt_sig(WIDTH),
        fmt_sig(height)
    );
}

fn chrome(out: &mut String, meta: &ChartMeta, frame: &Frame, height: f64) {
    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + frame.plot_h;
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt_sig(x0),
        fmt_sig(y0),
        fmt_sig(x0 + frame.plot_w),
        fmt_sig(y0)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt_sig(x0),
        fmt_sig(MARGIN_TOP),
        fmt_sig(x0),
        fmt_sig(y0)
    );
    // Ticks: five per axis.
    for i in 0..=4 {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / 4.0;
        let px = frame.x(fx);
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            fmt_sig(px),
            fmt_sig(y0),
            fmt_sig(px),
            fmt_sig(y0 + 5.0)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            fmt_sig(px),
            fmt_sig(y0 + 18.0),
            fmt_sig((fx * 1e6).round() / 1e6)
        );
        let fy = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        let py = frame.y(fy);
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            fmt_sig(x0 - 5.0),
            fmt_sig(py),
            fmt_sig(x0),
            fmt_sig(py)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            fmt_sig(x0 - 8.0),
            fmt_sig(py + 4.0),
            fmt_sig((fy * 1e6).round() / 1e6)
        );
    }
    // Labels, title, footer.
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        fmt_sig(WIDTH / 2.0),
        esc(&meta.title)
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        fmt_sig(MARGIN_LEFT + frame.plot_w / 2.0),
        fmt_sig(y0 + 38.0),
        esc(&meta.x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
        fmt_sig(MARGIN_TOP + frame.plot_h / 2.0),
        fmt_sig(MARGIN_TOP + frame.plot_h / 2.0),
        esc(&meta.y_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#888888\">{}</text>",
        fmt_sig(MARGIN_LEFT),
        fmt_sig(height - 8.0),
        esc(&meta.footer)
    );
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if let Some(band) = &s.band {
            for &(_, lo, hi) in band {
                y_min = y_min.min(lo);
                y_max = y_max.max(hi);
            }
        }
    }
    if !x_min.is_finite() {
        (0.0, 1.0, 0.0, 1.0)
    } else {
        let pad = ((y_max - y_min) * 0.05).max(1e-9);
        (x_min, x_max, y_min - pad, y_max + pad)
    }
}

/// Multi-series line chart with optional shaded confidence bands.
pub fn line_chart(meta: &ChartMeta, series: &[Series]) -> String {
    let height = 520.0;
    let frame = {
        let (x_min, x_max, y_min, y_max) = bounds(series);
        Frame {
            x_min,
            x_max,
            y_min,
            y_max,
            plot_w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            plot_h: height - MARGIN_TOP - MARGIN_BOTTOM,
        }
    };
    let mut out = String::new();
    open_svg(&mut out, height);
    chrome(&mut out, meta, &frame, height);

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if let Some(band) = &s.band {
            if band.len() >= 2 {
                let mut d = String::new();
                for (i, &(x, lo, _)) in band.iter().enumerate() {
                    let _ = write!(
                        d,
                        "{}{},{} ",
                        if i == 0 { "M" } else { "L" },
                        fmt_sig(frame.x(x)),
                        fmt_sig(frame.y(lo))
                    );
                }
                for &(x, _, hi) in band.iter().rev() {
                    let _ = write!(d, "L{},{} ", fmt_sig(frame.x(x)), fmt_sig(frame.y(hi)));
                }
                let _ = writeln!(
                    out,
                    "<path d=\"{}Z\" fill=\"{}\" fill-opacity=\"0.15\" stroke=\"none\"/>",
                    d, color
                );
            }
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt_sig(frame.x(x)), fmt_sig(frame.y(y))))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>",
            pts.join(" "),
            color
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.4\" fill=\"{}\"/>",
                fmt_sig(frame.x(x)),
                fmt_sig(frame.y(y)),
                color
            );
        }
        // Legend.
        let ly = MARGIN_TOP + 14.0 * si as f64;
        let lx = WIDTH - MARGIN_RIGHT - 170.0;
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>",
            fmt_sig(lx),
            fmt_sig(ly),
            fmt_sig(lx + 18.0),
            fmt_sig(ly),
            color
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>",
            fmt_sig(lx + 24.0),
            fmt_sig(ly + 4.0),
            esc(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bar chart with one bar per label.
pub fn bar_chart(meta: &ChartMeta, labels: &[String], values: &[f64]) -> String {
    let height = 520.0;
    let y_max = values.iter().cloned().fold(0.0f64, f64::max).max(1e-9);
    let frame = Frame {
        x_min: 0.0,
        x_max: labels.len() as f64,
        y_min: 0.0,
        y_max: y_max * 1.08,
        plot_w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        plot_h: height - MARGIN_TOP - MARGIN_BOTTOM,
    };
    let mut out = String::new();
    open_svg(&mut out, height);
    // Bars before chrome so the axis sits on top.
    let slot = frame.plot_w / labels.len().max(1) as f64;
    for (i, (&v, label)) in values.iter().zip(labels).enumerate() {
        let x = MARGIN_LEFT + slot * i as f64 + slot * 0.15;
        let y = frame.y(v);
        let h = MARGIN_TOP + frame.plot_h - y;
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
            fmt_sig(x),
            fmt_sig(y),
            fmt_sig(slot * 0.7),
            fmt_sig(h),
            PALETTE[0]
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            fmt_sig(x + slot * 0.35),
            fmt_sig(MARGIN_TOP + frame.plot_h + 18.0),
            esc(label)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            fmt_sig(x + slot * 0.35),
            fmt_sig(y - 4.0),
            fmt_sig(v)
        );
    }
    // Axis lines and labels only (x ticks are bar labels).
    let y0 = MARGIN_TOP + frame.plot_h;
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt_sig(MARGIN_LEFT),
        fmt_sig(y0),
        fmt_sig(MARGIN_LEFT + frame.plot_w),
        fmt_sig(y0)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt_sig(MARGIN_LEFT),
        fmt_sig(MARGIN_TOP),
        fmt_sig(MARGIN_LEFT),
        fmt_sig(y0)
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        fmt_sig(WIDTH / 2.0),
        esc(&meta.title)
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        fmt_sig(MARGIN_LEFT + frame.plot_w / 2.0),
        fmt_sig(y0 + 38.0),
        esc(&meta.x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
        fmt_sig(MARGIN_TOP + frame.plot_h / 2.0),
        fmt_sig(MARGIN_TOP + frame.plot_h / 2.0),
        esc(&meta.y_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#888888\">{}</text>",
        fmt_sig(MARGIN_LEFT),
        fmt_sig(height - 8.0),
        esc(&meta.footer)
    );
    out.push_str("</svg>\n");
    out
}

/// One panel of a heatmap grid: a rows x cols matrix in row-major order.
pub struct HeatPanel {
    pub title: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub row_labels: Vec<String>,
}

fn heat_color(t: f64) -> String {
    // Four-stop dark-violet to yellow ramp.
    let stops = [
        (0.267f64, 0.004f64, 0.329f64),
        (0.192, 0.408, 0.556),
        (0.208, 0.718, 0.475),
        (0.992, 0.906, 0.145),
    ];
    let t = t.clamp(0.0, 1.0) * 3.0;
    let i = (t.floor() as usize).min(2);
    let f = t - i as f64;
    let (r0, g0, b0) = stops[i];
    let (r1, g1, b1) = stops[i + 1];
    let c = |a: f64, b: f64| ((a + (b - a) * f) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(r0, r1), c(g0, g1), c(b0, b1))
}

/// Vertically stacked heatmap panels sharing one color scale.
pub fn heatmap_grid(meta: &ChartMeta, panels: &[HeatPanel]) -> String {
    let panel_h = 120.0;
    let gap = 34.0;
    let height = MARGIN_TOP + panels.len() as f64 * (panel_h + gap) + MARGIN_BOTTOM;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;

    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for p in panels {
        for &v in &p.values {
            v_min = v_min.min(v);
            v_max = v_max.max(v);
        }
    }
    if !v_min.is_finite() {
        v_min = 0.0;
        v_max = 1.0;
    }
    let span = (v_max - v_min).max(1e-12);

    let mut out = String::new();
    open_svg(&mut out, height);
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        fmt_sig(WIDTH / 2.0),
        esc(&meta.title)
    );

    for (pi, p) in panels.iter().enumerate() {
        let top = MARGIN_TOP + pi as f64 * (panel_h + gap);
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>",
            fmt_sig(MARGIN_LEFT),
            fmt_sig(top - 6.0),
            esc(&p.title)
        );
        let cell_w = plot_w / p.cols as f64;
        let cell_h = panel_h / p.rows as f64;
        for r in 0..p.rows {
            for c in 0..p.cols {
                let v = p.values[r * p.cols + c];
                let t = (v - v_min) / span;
                let _ = writeln!(
                    out,
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                    fmt_sig(MARGIN_LEFT + c as f64 * cell_w),
                    fmt_sig(top + r as f64 * cell_h),
                    fmt_sig(cell_w + 0.5),
                    fmt_sig(cell_h + 0.5),
                    heat_color(t)
                );
            }
            if let Some(label) = p.row_labels.get(r) {
                let _ = writeln!(
                    out,
                    "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
                    fmt_sig(MARGIN_LEFT - 6.0),
                    fmt_sig(top + r as f64 * cell_h + cell_h * 0.7),
                    esc(label)
                );
            }
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\">scale: {} (dark) to {} (bright); x: {}</text>",
        fmt_sig(MARGIN_LEFT),
        fmt_sig(height - 26.0),
        fmt_sig(v_min),
        fmt_sig(v_max),
        esc(&meta.x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#888888\">{}</text>",
        fmt_sig(MARGIN_LEFT),
        fmt_sig(height - 8.0),
        esc(&meta.footer)
    );
    out.push_str("</svg>\n");
    out
}
