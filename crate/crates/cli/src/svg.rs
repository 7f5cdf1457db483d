//! Minimal line plots as standalone SVG documents, one `<polyline>` per
//! series.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const LEGEND_ROW: f64 = 18.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub dashed: bool,
    pub points: Vec<[f64; 2]>,
}

impl Series {
    pub fn new(name: impl Into<String>, color: &'static str, points: Vec<[f64; 2]>) -> Self {
        Self {
            name: name.into(),
            color,
            dashed: false,
            points,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Same scale on both axes, for paths in the plane.
    pub equal_aspect: bool,
    pub series: Vec<Series>,
}

pub const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl Plot {
    pub fn path(title: &str, series: Vec<Series>) -> Self {
        Self {
            title: title.into(),
            x_label: "x [m]".into(),
            y_label: "y [m]".into(),
            equal_aspect: true,
            series,
        }
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|p| p[0].is_finite() && p[1].is_finite());
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in pts {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if lo[0] > hi[0] {
            return ([0.0, 0.0], [1.0, 1.0]);
        }
        for k in 0..2 {
            if hi[k] - lo[k] < 1e-9 {
                lo[k] -= 0.5;
                hi[k] += 0.5;
            }
        }
        (lo, hi)
    }

    pub fn render(&self) -> String {
        let (lo, hi) = self.bounds();
        let plot_w = WIDTH - 2.0 * MARGIN;
        let plot_h = HEIGHT - 2.0 * MARGIN;
        let mut sx = plot_w / (hi[0] - lo[0]);
        let mut sy = plot_h / (hi[1] - lo[1]);
        if self.equal_aspect {
            sx = sx.min(sy);
            sy = sx;
        }
        let map = |p: &[f64; 2]| (MARGIN + (p[0] - lo[0]) * sx, HEIGHT - MARGIN - (p[1] - lo[1]) * sy);

        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            out,
            r#"<rect x="{x0}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black" stroke-width="0.5"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for (k, (v, anchor, x, y)) in [
            (lo[0], "start", x0, y0 + 16.0),
            (hi[0], "end", WIDTH - MARGIN, y0 + 16.0),
        ]
        .into_iter()
        .enumerate()
        {
            let _ = writeln!(
                out,
                r#"<text class="tick-x{k}" x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{v:.4}</text>"#
            );
        }
        for (k, (v, y)) in [(lo[1], y0), (hi[1], MARGIN + 10.0)].into_iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text class="tick-y{k}" x="{}" y="{y}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.4}</text>"#,
                x0 - 4.0
            );
        }
        for s in &self.series {
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| p[0].is_finite() && p[1].is_finite())
                .map(|p| {
                    let (x, y) = map(p);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<polyline data-series="{}" fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                escape(&s.name),
                s.color,
                pts.join(" ")
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let y = MARGIN + 14.0 + k as f64 * LEGEND_ROW;
            let x = WIDTH - MARGIN - 150.0;
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<line x1="{x}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"{dash}/>"#,
                y - 4.0,
                x + 20.0,
                y - 4.0,
                s.color
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11">{}</text>"#,
                x + 26.0,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series_and_valid_xml() {
        let plot = Plot::path(
            "a < b & c",
            vec![
                Series::new("reference", PALETTE[0], vec![[0.0, 0.0], [1.0, 1.0]]),
                Series::new("\"rollout\"", PALETTE[1], vec![[0.0, 0.1], [1.0, 0.9]]).dashed(),
            ],
        );
        let svg = plot.render();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].attribute("data-series"), Some("\"rollout\""));
    }

    #[test]
    fn degenerate_and_empty_series_still_render() {
        let plot = Plot::path(
            "dot",
            vec![
                Series::new("p", PALETTE[0], vec![[2.0, 2.0]]),
                Series::new("e", PALETTE[1], vec![]),
            ],
        );
        let svg = plot.render();
        assert!(roxmltree::Document::parse(&svg).is_ok());
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn equal_inputs_render_identically() {
        let mk = || Plot::path("x", vec![Series::new("a", PALETTE[0], vec![[0.3, 0.1], [0.7, -0.2]])]).render();
        assert_eq!(mk(), mk());
    }
}
