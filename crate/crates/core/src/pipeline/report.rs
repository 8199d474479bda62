//! CSV and SVG writers for pipeline reports.

use std::fmt::Write as _;

/// `metric,object_id,value` rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    pub rows: Vec<(String, String, Option<f64>)>,
}

impl MetricTable {
    pub fn push(&mut self, metric: &str, object_id: &str, value: Option<f64>) {
        self.rows.push((metric.to_string(), object_id.to_string(), value));
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,object_id,value\n");
        for (m, o, v) in &self.rows {
            let v = v.map_or_else(|| "null".to_string(), |v| v.to_string());
            let _ = writeln!(s, "{m},{o},{v}");
        }
        s
    }
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

fn frame(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{title}</text>"#, W / 2.0);
    let (x0, y0, x1, y1) = (PAD, H - PAD, W - PAD / 2.0, PAD / 1.5);
    let _ = writeln!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, (x0 + x1) / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    s
}

fn sx(x: f64, lo: f64, hi: f64) -> f64 {
    let span = if hi > lo { hi - lo } else { 1.0 };
    PAD + (x - lo) / span * (W - 1.5 * PAD)
}

fn sy(y: f64, lo: f64, hi: f64) -> f64 {
    let span = if hi > lo { hi - lo } else { 1.0 };
    H - PAD - (y - lo) / span * (H - PAD - PAD / 1.5)
}

/// Line plot of several `(x, y)` series on the unit square.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = frame(title, x_label, y_label);
    for (k, (name, pts)) in series.iter().enumerate() {
        let hue = (k * 67) % 360;
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d: Vec<String> = sorted
            .iter()
            .enumerate()
            .map(|(i, (x, y))| format!("{}{:.2} {:.2}", if i == 0 { 'M' } else { 'L' }, sx(*x, 0.0, 1.0), sy(*y, 0.0, 1.0)))
            .collect();
        let _ = writeln!(
            s,
            r#"<path d="{}" stroke="hsl({hue},70%,40%)" fill="none" stroke-width="1.5"><title>{name}</title></path>"#,
            d.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Histogram with `bins` equal-width bins over the data range.
pub fn histogram_svg(title: &str, x_label: &str, groups: &[(String, Vec<f64>)], bins: usize) -> String {
    let mut s = frame(title, x_label, "count");
    let all: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    if all.is_empty() || bins == 0 {
        s.push_str("</svg>\n");
        return s;
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let counts: Vec<Vec<usize>> = groups
        .iter()
        .map(|(_, v)| {
            let mut c = vec![0; bins];
            for x in v {
                c[(((x - lo) / width) as usize).min(bins - 1)] += 1;
            }
            c
        })
        .collect();
    let top = counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let bar = (W - 1.5 * PAD) / (bins * groups.len()) as f64;
    for (g, (name, _)) in groups.iter().enumerate() {
        let hue = (g * 137) % 360;
        for (b, &c) in counts[g].iter().enumerate() {
            let x = PAD + (b * groups.len() + g) as f64 * bar;
            let y = sy(c as f64, 0.0, top);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar:.2}" height="{:.2}" fill="hsl({hue},60%,55%)"><title>{name}</title></rect>"#,
                H - PAD - y
            );
        }
    }
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">{lo:.4}</text>"#, H - PAD + 14.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{hi:.4}</text>"#, W - PAD / 2.0, H - PAD + 14.0);
    s.push_str("</svg>\n");
    s
}
