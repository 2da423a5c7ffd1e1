//! Minimal scatter-plot emission: standalone SVG plus a gnuplot-ready
//! `.dat` file. No plotting dependency; output is a pure function of the
//! data, so repeated runs produce identical bytes.

use dg_core::dataset::fmt_f64;
use dg_core::error::Result;

use crate::manifest::Manifest;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 58.0;
const TICKS: usize = 5;

/// A titled scatter of (x, y) points.
pub struct Scatter {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

/// Data range padded for display; collapses gracefully when all values
/// coincide (e.g. a vertical scatter from constant-size datasets).
fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        let pad = lo.abs().max(0.5) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".to_string()
    } else if (1e-3..1e5).contains(&a) {
        format!("{v:.4}")
    } else {
        format!("{v:.2e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Scatter {
    /// Render the standalone SVG document.
    pub fn svg(&self) -> String {
        let (x_lo, x_hi) = padded_range(self.points.iter().map(|p| p.0));
        let (y_lo, y_hi) = padded_range(self.points.iter().map(|p| p.1));
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let to_x = |v: f64| MARGIN_LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w;
        let to_y = |v: f64| MARGIN_TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h;

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"15\">{}</text>\n",
            WIDTH / 2.0,
            xml_escape(&self.title)
        ));

        // Axes.
        let x0 = MARGIN_LEFT;
        let x1 = WIDTH - MARGIN_RIGHT;
        let y0 = MARGIN_TOP + plot_h;
        let y1 = MARGIN_TOP;
        out.push_str(&format!(
            "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" \
             stroke=\"black\" stroke-width=\"1\"/>\n"
        ));
        out.push_str(&format!(
            "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" \
             stroke=\"black\" stroke-width=\"1\"/>\n"
        ));

        // Ticks and grid.
        for i in 0..TICKS {
            let f = i as f64 / (TICKS - 1) as f64;
            let xv = x_lo + f * (x_hi - x_lo);
            let yv = y_lo + f * (y_hi - y_lo);
            let px = to_x(xv);
            let py = to_y(yv);
            out.push_str(&format!(
                "<line x1=\"{px:.2}\" y1=\"{y0:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" \
                 stroke=\"black\" stroke-width=\"1\"/>\n",
                y0 + 5.0
            ));
            out.push_str(&format!(
                "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" \
                 font-family=\"monospace\" font-size=\"11\">{}</text>\n",
                y0 + 18.0,
                tick_label(xv)
            ));
            out.push_str(&format!(
                "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{x0:.2}\" y2=\"{py:.2}\" \
                 stroke=\"black\" stroke-width=\"1\"/>\n",
                x0 - 5.0
            ));
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" \
                 font-family=\"monospace\" font-size=\"11\">{}</text>\n",
                x0 - 8.0,
                py + 4.0,
                tick_label(yv)
            ));
        }

        // Axis labels.
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"13\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 14.0,
            xml_escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"13\" transform=\"rotate(-90 18 {:.2})\">{}</text>\n",
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            xml_escape(&self.y_label)
        ));

        // Points.
        for &(x, y) in &self.points {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\" \
                 fill-opacity=\"0.75\"/>\n",
                to_x(x),
                to_y(y)
            ));
        }
        out.push_str("</svg>\n");
        out
    }

    /// Render the gnuplot-compatible two-column data file.
    pub fn dat(&self) -> String {
        let mut out = format!("# {}\t{}\n", self.x_label, self.y_label);
        for &(x, y) in &self.points {
            out.push_str(&format!("{} {}\n", fmt_f64(x), fmt_f64(y)));
        }
        out
    }

    /// Write `<stem>.svg` and `<stem>.dat` into the manifest's directory.
    pub fn write(&self, manifest: &mut Manifest, stem: &str) -> Result<()> {
        manifest.write_text(&format!("{stem}.svg"), &self.svg())?;
        manifest.write_text(&format!("{stem}.dat"), &self.dat())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Scatter {
        Scatter {
            title: "demo".to_string(),
            x_label: "x".to_string(),
            y_label: "y".to_string(),
            points: vec![(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)],
        }
    }

    #[test]
    fn svg_contains_all_points_and_labels() {
        let svg = demo().svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains(">demo<"));
    }

    #[test]
    fn svg_is_deterministic() {
        assert_eq!(demo().svg(), demo().svg());
    }

    #[test]
    fn constant_x_renders_vertical_scatter() {
        let s = Scatter {
            points: vec![(5.0, 1.0), (5.0, 2.0), (5.0, 3.0)],
            ..demo()
        };
        let svg = s.svg();
        assert_eq!(svg.matches("<circle").count(), 3);
        // All three circles share the same x position.
        let cx: Vec<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<circle"))
            .map(|l| l.split("cx=\"").nth(1).unwrap().split('"').next().unwrap())
            .collect();
        assert!(cx.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn dat_round_trips_full_precision() {
        let text = demo().dat();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        let first: Vec<f64> = lines
            .next()
            .unwrap()
            .split(' ')
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(first, vec![0.0, 1.0]);
    }
}
