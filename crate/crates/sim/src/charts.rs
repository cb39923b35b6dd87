//! Static SVG charts: grouped bars of latency per load, and latency-vs-load
//! lines per slot duration.

use std::fmt::Write as _;

const W: f64 = 760.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#c0392b", "#e67e22", "#2e86c1", "#85c1e9", "#239b56", "#82e0aa", "#7d3c98", "#566573"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    /// One value per x category, in ms; `None` leaves a gap.
    pub values: Vec<Option<f64>>,
}

fn nice_ceiling(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * mag >= v {
            return m * mag;
        }
    }
    10.0 * mag
}

fn frame(svg: &mut String, title: &str, x_label: &str, y_label: &str, y_max: f64) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>
"#,
        (LEFT + W - RIGHT) / 2.0
    );
    let plot_h = H - TOP - BOTTOM;
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let y = TOP + plot_h * (1.0 - i as f64 / 5.0);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}" stroke="black"/><line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        H - BOTTOM,
        H - BOTTOM,
        W - RIGHT,
        H - BOTTOM
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text><text transform="translate(18,{:.1}) rotate(-90)" text-anchor="middle">{y_label}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 18.0,
        TOP + plot_h / 2.0
    );
}

fn legend(svg: &mut String, labels: &[&str]) {
    for (i, l) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = W - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{y:.1}">{l}</text>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0
        );
    }
}

fn y_of(v: f64, y_max: f64) -> f64 {
    let plot_h = H - TOP - BOTTOM;
    TOP + plot_h * (1.0 - v / y_max)
}

pub fn bar_chart(title: &str, categories: &[String], series: &[Series]) -> String {
    let top = series.iter().flat_map(|s| s.values.iter().flatten()).fold(0.0f64, |a, &b| a.max(b));
    let y_max = nice_ceiling(top * 1.05);
    let mut svg = String::new();
    frame(&mut svg, title, "PON load", "latency (ms)", y_max);
    let plot_w = W - LEFT - RIGHT;
    let group_w = plot_w / categories.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (ci, cat) in categories.iter().enumerate() {
        let gx = LEFT + group_w * ci as f64 + group_w * 0.1;
        for (si, s) in series.iter().enumerate() {
            if let Some(Some(v)) = s.values.get(ci) {
                let y = y_of(*v, y_max);
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                    gx + bar_w * si as f64,
                    bar_w * 0.95,
                    H - BOTTOM - y,
                    PALETTE[si % PALETTE.len()]
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{cat}</text>"#,
            gx + group_w * 0.4,
            H - BOTTOM + 16.0
        );
    }
    legend(&mut svg, &series.iter().map(|s| s.label.as_str()).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    svg
}

pub fn line_chart(title: &str, categories: &[String], series: &[Series]) -> String {
    let top = series.iter().flat_map(|s| s.values.iter().flatten()).fold(0.0f64, |a, &b| a.max(b));
    let y_max = nice_ceiling(top * 1.05);
    let mut svg = String::new();
    frame(&mut svg, title, "PON load", "latency (ms)", y_max);
    let plot_w = W - LEFT - RIGHT;
    let step = plot_w / categories.len().max(1) as f64;
    let x_of = |i: usize| LEFT + step * (i as f64 + 0.5);
    for (i, cat) in categories.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{cat}</text>"#,
            x_of(i),
            H - BOTTOM + 16.0
        );
    }
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let pts: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| format!("{:.1},{:.1}", x_of(i), y_of(v, y_max))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap();
            let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        }
    }
    legend(&mut svg, &series.iter().map(|s| s.label.as_str()).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    svg
}
