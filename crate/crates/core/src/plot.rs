//! Minimal SVG line plots of estimated densities against the truth.

use std::fmt::Write as _;

use crate::sim::{Method, PlotData};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 120.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;

/// One polyline.
#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub name: String,
    pub color: &'static str,
    pub dashed: bool,
    pub ys: &'a [f64],
}

fn method_color(m: Method) -> &'static str {
    match m {
        Method::Hs => "#d62728",
        Method::Fhs => "#ff7f0e",
        Method::Cv => "#1f77b4",
        Method::Pi => "#2ca02c",
    }
}

/// Tick positions at a 1-2-5 step covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || target == 0 {
        return vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `series` over the shared abscissa `xs`. Non-finite points break
/// the line.
pub fn line_plot_svg(title: &str, xs: &[f64], series: &[Series<'_>]) -> String {
    let (x0, x1) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let y1 = series
        .iter()
        .flat_map(|s| s.ys.iter())
        .copied()
        .filter(|y| y.is_finite())
        .fold(0.0, f64::max);
    let y1 = if y1 > 0.0 { y1 * 1.05 } else { 1.0 };
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 1.0, x0 + 1.0) };
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_TOP + ph - y / y1 * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        escape(title)
    );
    // axes
    let (bx, by) = (MARGIN_LEFT, MARGIN_TOP + ph);
    let _ = writeln!(
        s,
        r#"<path d="M{bx:.1},{MARGIN_TOP:.1} L{bx:.1},{by:.1} L{:.1},{by:.1}" fill="none" stroke="black"/>"#,
        MARGIN_LEFT + pw
    );
    for t in nice_ticks(x0, x1, 8) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{by:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            by + 5.0,
            by + 18.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(0.0, y1, 5) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{bx:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            bx - 5.0,
            bx - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    // curves
    for (k, ser) in series.iter().enumerate() {
        let mut d = String::new();
        let mut pen_down = false;
        for (&x, &y) in xs.iter().zip(ser.ys) {
            if !y.is_finite() {
                pen_down = false;
                continue;
            }
            let cmd = if pen_down { 'L' } else { 'M' };
            let _ = write!(d, "{cmd}{:.2},{:.2} ", sx(x), sy(y.min(y1)));
            pen_down = true;
        }
        let dash = if ser.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.6"{dash}/>"#,
            d.trim_end(),
            ser.color
        );
        let ly = MARGIN_TOP + 10.0 + 18.0 * k as f64;
        let lx = MARGIN_LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="1.6"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 24.0,
            ser.color,
            lx + 30.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Truth (dashed) and every successfully fitted method of one replication.
pub fn density_svg(data: &PlotData) -> String {
    let mut series = vec![Series {
        name: "truth".into(),
        color: "black",
        dashed: true,
        ys: &data.truth,
    }];
    for (m, c) in &data.curves {
        if let Some(ys) = c {
            series.push(Series {
                name: m.label().into(),
                color: method_color(*m),
                dashed: false,
                ys,
            });
        }
    }
    let title = format!("{}, n = {}", data.scenario.label(), data.n);
    line_plot_svg(&title, &data.xs, &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = nice_ticks(-3.2, 3.2, 8);
        assert_eq!(t, vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        let t = nice_ticks(0.0, 0.42, 5);
        assert_eq!(t.len(), 5);
        assert!((t[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn svg_has_one_path_per_series() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let a: Vec<f64> = xs.iter().map(|x| (-x * x).exp()).collect();
        let mut b = a.clone();
        b[10] = f64::NAN;
        let svg = line_plot_svg(
            "a < b",
            &xs,
            &[
                Series { name: "a".into(), color: "red", dashed: false, ys: &a },
                Series { name: "b".into(), color: "blue", dashed: true, ys: &b },
            ],
        );
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("stroke-width=\"1.6\"").count(), 4);
        assert!(svg.contains("a &lt; b"));
        // the axes come first; the NaN splits the second curve into two pieces
        let second = svg.lines().filter(|l| l.starts_with("<path d=\"M")).nth(2).unwrap();
        assert_eq!(second.matches('M').count(), 2);
    }
}
