//! Minimal SVG line plots for ROC, CMC and FNMR-dynamics curves.

use std::fmt::Write;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub log_x: bool,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

impl Plot {
    fn map_x(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        let t = if self.log_x {
            (x.max(lo).ln() - lo.ln()) / (hi.ln() - lo.ln())
        } else {
            (x - lo) / (hi - lo)
        };
        MARGIN + t.clamp(0.0, 1.0) * (W - 2.0 * MARGIN)
    }

    fn map_y(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        let t = ((y - lo) / (hi - lo)).clamp(0.0, 1.0);
        H - MARGIN - t * (H - 2.0 * MARGIN)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let (x0, x1) = (MARGIN, W - MARGIN);
        let (y0, y1) = (H - MARGIN, MARGIN);
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let yv = self.y_range.0 + f * (self.y_range.1 - self.y_range.0);
            let py = self.map_y(yv);
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{yv:.2}</text>"#, x0 - 6.0, py + 4.0);
            let xv = if self.log_x {
                (self.x_range.0.ln() + f * (self.x_range.1.ln() - self.x_range.0.ln())).exp()
            } else {
                self.x_range.0 + f * (self.x_range.1 - self.x_range.0)
            };
            let px = self.map_x(xv);
            let _ = writeln!(s, r#"<text x="{px}" y="{}" text-anchor="middle">{xv:.3}</text>"#, y0 + 18.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", self.map_x(x), self.map_y(y)))
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
            let ly = MARGIN + 16.0 + 16.0 * i as f64;
            let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, x1 - 150.0, x1 - 130.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x1 - 125.0, ly + 4.0, escape(&series.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
