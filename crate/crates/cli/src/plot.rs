//! Self-contained SVG charts. Each file carries its data as a CSV table in
//! a `<metadata>` block, so numbers can be read back without the picture.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(title: &str, width: f64, height: f64) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, width / 2.0, esc(title)).unwrap();
    s
}

fn close(mut s: String, csv: &str) -> String {
    writeln!(s, "<metadata id=\"data\" type=\"text/csv\"><![CDATA[\n{csv}]]></metadata>").unwrap();
    s.push_str("</svg>\n");
    s
}

/// The CSV table embedded by any chart in this module.
pub fn embedded_csv(svg: &str) -> Option<&str> {
    let start = svg.find("<![CDATA[\n")? + "<![CDATA[\n".len();
    let end = svg[start..].find("]]>")? + start;
    Some(&svg[start..end])
}

/// Round-number ticks covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() * step;
    (0..)
        .map(|i| first + i as f64 * step)
        .take_while(|&v| v <= hi + step * 1e-9)
        .collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e5) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.0e}")
    }
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Line chart; `log_x` puts the x axis on a base-2 log scale.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let tx = |x: f64| if log_x { x.log2() } else { x };
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let y0 = if y0 >= 0.0 && y0 < 0.5 * y1 { 0.0 } else { y0 };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = open(title, W, H);
    writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##).unwrap();
    for t in ticks(y0, y1) {
        let y = py(t);
        writeln!(s, r##"<line x1="{LEFT}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##, LEFT + pw).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_tick(t)).unwrap();
    }
    let xt: Vec<f64> = if log_x {
        let mut v: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    } else {
        ticks(x0, x1)
    };
    for t in xt {
        let x = px(t);
        writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(t)).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(x_label)).unwrap();
    writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        esc(y_label)
    )
    .unwrap();

    for (i, ser) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.6" points="{}"/>"#, pts.join(" ")).unwrap();
        if ser.points.len() <= 32 {
            for &(x, y) in &ser.points {
                writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, px(x), py(y)).unwrap();
            }
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        writeln!(s, r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{c}" stroke-width="3"/>"#, lx + 18.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, esc(&ser.name)).unwrap();
    }

    let mut csv = String::from("series,x,y\n");
    for ser in series {
        for &(x, y) in &ser.points {
            writeln!(csv, "{},{x},{y}", ser.name).unwrap();
        }
    }
    close(s, &csv)
}

/// Grouped bars: one group per category, one bar per series.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], series: &[(String, Vec<f64>)]) -> String {
    let (_, y1) = bounds(series.iter().flat_map(|s| s.1.iter().copied()).chain([0.0]));
    let y1 = if y1 <= 1.0 { 1.0 } else { y1 };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let py = |y: f64| TOP + ph - y / y1 * ph;
    let group = pw / categories.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;

    let mut s = open(title, W, H);
    writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##).unwrap();
    for t in ticks(0.0, y1) {
        let y = py(t);
        writeln!(s, r##"<line x1="{LEFT}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##, LEFT + pw).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_tick(t)).unwrap();
    }
    for (g, cat) in categories.iter().enumerate() {
        let gx = LEFT + g as f64 * group;
        writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, gx + group / 2.0, TOP + ph + 18.0, esc(cat)).unwrap();
        for (i, (_, vals)) in series.iter().enumerate() {
            let v = vals.get(g).copied().unwrap_or(0.0);
            let x = gx + group * 0.1 + i as f64 * bar;
            writeln!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                py(v),
                bar * 0.92,
                ph - (py(v) - TOP),
                COLORS[i % COLORS.len()]
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        esc(y_label)
    )
    .unwrap();
    for (i, (name, _)) in series.iter().enumerate() {
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        writeln!(s, r#"<rect x="{lx}" y="{}" width="14" height="10" fill="{}"/>"#, ly - 5.0, COLORS[i % COLORS.len()]).unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 20.0, ly + 4.0, esc(name)).unwrap();
    }

    let mut csv = String::from("category");
    for (name, _) in series {
        write!(csv, ",{name}").unwrap();
    }
    csv.push('\n');
    for (g, cat) in categories.iter().enumerate() {
        csv.push_str(cat);
        for (_, vals) in series {
            write!(csv, ",{}", vals.get(g).copied().unwrap_or(f64::NAN)).unwrap();
        }
        csv.push('\n');
    }
    close(s, &csv)
}

/// `P(phone | code)`: rows are phones by descending frequency, columns are
/// codes grouped by their most likely phone.
pub fn heatmap_chart(title: &str, values: &ndarray::Array2<f64>, row_names: &[String]) -> String {
    let (rows, cols) = values.dim();
    // Group columns by argmax row so the diagonal structure is visible.
    let mut order: Vec<usize> = (0..cols).collect();
    let best = |k: usize| {
        let c = values.column(k);
        let (r, v) = c.iter().enumerate().fold((rows, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        (r, -v)
    };
    order.sort_by(|&a, &b| {
        let (ra, va) = best(a);
        let (rb, vb) = best(b);
        ra.cmp(&rb).then(va.total_cmp(&vb)).then(a.cmp(&b))
    });
    let cell_w = (560.0 / cols.max(1) as f64).clamp(2.0, 24.0);
    let cell_h = (360.0 / rows.max(1) as f64).clamp(6.0, 24.0);
    let left = 60.0;
    let top = 40.0;
    let width = left + cell_w * cols as f64 + 20.0;
    let height = top + cell_h * rows as f64 + 40.0;

    let mut s = open(title, width.max(320.0), height);
    for (r, name) in row_names.iter().enumerate().take(rows) {
        let y = top + cell_h * (r as f64 + 0.5) + 4.0;
        writeln!(s, r#"<text x="{}" y="{y:.1}" text-anchor="end" font-size="10">{}</text>"#, left - 4.0, esc(name)).unwrap();
    }
    for (c, &k) in order.iter().enumerate() {
        for r in 0..rows {
            let v = values[[r, k]].clamp(0.0, 1.0);
            if v <= 0.0 {
                continue;
            }
            let shade = (255.0 * (1.0 - v)).round() as u8;
            writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell_w:.2}" height="{cell_h:.2}" fill="rgb({shade},{shade},255)"/>"#,
                left + c as f64 * cell_w,
                top + r as f64 * cell_h
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
        cell_w * cols as f64,
        cell_h * rows as f64
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">codes (grouped by most likely phone)</text>"#,
        left + cell_w * cols as f64 / 2.0,
        top + cell_h * rows as f64 + 24.0
    )
    .unwrap();

    let mut csv = String::from("phone,code,p_phone_given_code\n");
    for r in 0..rows {
        for k in 0..cols {
            writeln!(csv, "{},{k},{}", row_names.get(r).map_or("?", |s| s.as_str()), values[[r, k]]).unwrap();
        }
    }
    close(s, &csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_cover_range() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let t = ticks(3.0, 47.0);
        assert_eq!(t.first(), Some(&10.0));
        assert_eq!(t.last(), Some(&40.0));
    }

    #[test]
    fn chart_embeds_its_data() {
        let svg = line_chart(
            "t",
            "x",
            "y",
            &[Series {
                name: "a".into(),
                points: vec![(16.0, 0.5), (64.0, 0.75)],
            }],
            true,
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(embedded_csv(&svg), Some("series,x,y\na,16,0.5\na,64,0.75\n"));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = bar_chart("a<b", "y", &["x&y".into()], &[("s".into(), vec![0.5])]);
        assert!(svg.contains("a&lt;b") && svg.contains("x&amp;y"));
    }
}
