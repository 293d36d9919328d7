//! Minimal SVG charts. Every chart is drawn from the same rows that go into
//! the sibling CSV file.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{x}" y="22" text-anchor="middle" font-size="15">{t}</text>
"#,
        x = W / 2.0,
        t = escape(title)
    );
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.05 } else { 0.5 };
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// Line chart with shared axes. `x_range`/`y_range` override the data span.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    x_range: Option<(f64, f64)>,
    y_range: Option<(f64, f64)>,
) -> String {
    let finite = |v: &f64| v.is_finite();
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).filter(finite).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).filter(finite).collect();
    let span = |v: &[f64]| {
        nice_range(
            v.iter().copied().fold(f64::INFINITY, f64::min),
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let (x0, x1) = x_range.unwrap_or_else(|| span(&xs));
    let (y0, y1) = y_range.unwrap_or_else(|| span(&ys));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            sx(xv),
            TOP + ph + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            LEFT + pw,
            y = sy(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{y:.2}" text-anchor="middle" transform="rotate(-90 18 {y:.2})">{}</text>"#,
        escape(y_label),
        y = TOP + ph / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            escape(&s.name)
        );
        if pts.len() == 1 {
            let (x, y) = pts[0].split_once(',').expect("formatted pair");
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="3" fill="{colour}"/>"#);
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e4) {
        format!("{}", (v * 1000.0).round() / 1000.0)
    } else {
        format!("{v:.1e}")
    }
}

/// Confusion-matrix heat map, rows = true class, columns = predicted.
pub fn heatmap(title: &str, names: &[String], grid: &[Vec<u64>]) -> String {
    let k = names.len().max(1);
    let size = 300.0;
    let cell = size / k as f64;
    let (ox, oy) = (150.0, 60.0);
    let max = grid.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let mut out = String::new();
    header(&mut out, title);
    for (i, row) in grid.iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (j, &v) in row.iter().enumerate() {
            let shade = (255.0 - 200.0 * v as f64 / max).round() as u8;
            let (x, y) = (ox + j as f64 * cell, oy + i as f64 * cell);
            let _ = writeln!(
                out,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({shade},{shade},255)" stroke="#555"><title>{} / {}: {v} of {total}</title></rect>"##,
                escape(&names[i]),
                escape(&names[j])
            );
            let colour = if shade < 140 { "white" } else { "black" };
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="{colour}">{v}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for (i, n) in names.iter().enumerate() {
        let c = i as f64 * cell + cell / 2.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, ox - 6.0, oy + c + 4.0, escape(n));
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="end" transform="rotate(-45 {x:.2} {y:.2})">{}</text>"#,
            escape(n),
            x = ox + c,
            y = oy + size + 14.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{H}" dy="-8" text-anchor="middle">Predicted</text><text x="20" y="{y:.2}" transform="rotate(-90 20 {y:.2})" text-anchor="middle">True</text>"#,
        ox + size / 2.0,
        y = oy + size / 2.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn line_chart_has_one_polyline_per_series() {
        let s = vec![
            Series { name: "train".into(), points: vec![(1.0, 0.5), (2.0, 0.7)] },
            Series { name: "val".into(), points: vec![(1.0, 0.4), (2.0, 0.9)] },
        ];
        let svg = line_chart("acc", "epoch", "accuracy", &s, None, None);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let s = vec![Series { name: "flat".into(), points: vec![(1.0, 2.0)] }];
        let svg = line_chart("t", "x", "y", &s, None, None);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn heatmap_cells() {
        let names = vec!["a".to_string(), "b".to_string()];
        let svg = heatmap("cm", &names, &[vec![3, 1], vec![0, 4]]);
        assert_eq!(svg.matches("<rect x=").count(), 4);
    }
}
