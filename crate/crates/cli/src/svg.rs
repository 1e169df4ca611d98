//! Native SVG line charts (polylines + axes + legend), so runs produce
//! figures without any plotting dependency. CSV stays the canonical output;
//! these are for eyeballing curves.

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 56.0;

/// Render a line chart. `log_y` switches the y axis to log10 (non-positive
/// values are clamped to the smallest positive value present).
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> String {
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;

    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut min_pos_y = f64::INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
            if y > 0.0 {
                min_pos_y = min_pos_y.min(y);
            }
        }
    }
    if !min_x.is_finite() {
        min_x = 0.0;
        max_x = 1.0;
        min_y = 0.0;
        max_y = 1.0;
    }
    let floor = if min_pos_y.is_finite() { min_pos_y } else { 1e-12 };
    let (lo_y, hi_y) = if log_y {
        (floor.log10().floor(), max_y.max(floor).log10().ceil().max(floor.log10().floor() + 1.0))
    } else {
        let pad = 0.05 * (max_y - min_y).max(1e-12);
        (min_y - pad, max_y + pad)
    };
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (hi_y - lo_y).max(1e-12);

    let x_of = |x: f64| MARGIN_L + (x - min_x) / span_x * plot_w;
    let y_of = |y: f64| {
        let v = if log_y { y.max(floor).log10() } else { y };
        MARGIN_T + plot_h - (v - lo_y) / span_y * plot_h
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    ));
    svg.push('\n');
    svg.push_str(&format!(
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        escape(title)
    ));
    svg.push('\n');

    // Axes box.
    svg.push_str(&format!(
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black" stroke-width="1"/>"#
    ));
    svg.push('\n');

    // Ticks.
    let n_ticks = 5usize;
    for k in 0..=n_ticks {
        let fx = min_x + span_x * k as f64 / n_ticks as f64;
        let px = x_of(fx);
        svg.push_str(&format!(
            r#"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>
<text x="{px:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 6.0,
            MARGIN_T + plot_h + 20.0,
            format_tick(fx)
        ));
        svg.push('\n');
        let fy = lo_y + span_y * k as f64 / n_ticks as f64;
        let py = MARGIN_T + plot_h - plot_h * k as f64 / n_ticks as f64;
        let label = if log_y { format!("1e{}", format_tick(fy)) } else { format_tick(fy) };
        svg.push_str(&format!(
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{MARGIN_L}" y2="{py:.1}" stroke="black"/>
<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{label}</text>"#,
            MARGIN_L - 6.0,
            MARGIN_L - 9.0,
            py + 4.0,
        ));
        svg.push('\n');
    }

    // Axis labels.
    svg.push_str(&format!(
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>
<text x="18" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label),
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(y_label)
    ));
    svg.push('\n');

    // Series.
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut path = String::new();
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            path.push_str(&format!("{:.2},{:.2} ", x_of(x), y_of(y)));
        }
        svg.push_str(&format!(
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            path.trim_end()
        ));
        svg.push('\n');
        let ly = MARGIN_T + 14.0 + 18.0 * idx as f64;
        svg.push_str(&format!(
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>
<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            WIDTH - MARGIN_R + 12.0,
            WIDTH - MARGIN_R + 38.0,
            WIDTH - MARGIN_R + 44.0,
            ly + 4.0,
            escape(&s.label)
        ));
        svg.push('\n');
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e5 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
