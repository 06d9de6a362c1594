//! Vector-field figures: one fixed-length arrow per grid sample, colored by
//! speed, with optional rollout polylines on top.

use std::fmt::Write;

use elastic_ds::{Point, Vector};

const WIDTH: f64 = 800.0;
const MARGIN: f64 = 20.0;

/// Linear blend from blue (slow) to red (fast).
fn speed_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(44.0, 215.0), lerp(123.0, 25.0), lerp(182.0, 28.0))
}

/// Maps world `(x, y)` to pixels; `y` grows upwards in the world.
struct Canvas {
    lo: [f64; 2],
    scale: f64,
    height: f64,
}

impl Canvas {
    fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        let span_x = (hi[0] - lo[0]).max(f64::MIN_POSITIVE);
        let span_y = (hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let scale = (WIDTH - 2.0 * MARGIN) / span_x;
        Self {
            lo,
            scale,
            height: span_y * scale + 2.0 * MARGIN,
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            MARGIN + (x - self.lo[0]) * self.scale,
            self.height - MARGIN - (y - self.lo[1]) * self.scale,
        )
    }
}

/// Renders `samples` (grid order, first two coordinates used) with the
/// given rollouts and attractor.
pub fn render_field(
    samples: &[(Point, Vector)],
    nx: usize,
    ny: usize,
    rollouts: &[Vec<Point>],
    attractor: &Point,
) -> String {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (p, _) in samples {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let canvas = Canvas::new(lo, hi);
    let cell_x = (hi[0] - lo[0]) / (nx.max(2) - 1) as f64 * canvas.scale;
    let cell_y = (hi[1] - lo[1]) / (ny.max(2) - 1) as f64 * canvas.scale;
    let glyph = 0.4 * cell_x.min(cell_y).max(1.0);
    let max_speed = samples
        .iter()
        .map(|(_, v)| v.rows(0, 2).norm())
        .fold(0.0, f64::max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{:.0}" viewBox="0 0 {WIDTH:.0} {:.2}">"#,
        canvas.height.ceil(),
        canvas.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<g class="field" stroke-width="1.2" fill="none">"#);
    for (p, v) in samples {
        let (cx, cy) = canvas.px(p[0], p[1]);
        let planar = v.rows(0, 2);
        let speed = planar.norm();
        if !(speed > 0.0) {
            let _ = writeln!(svg, r#"<circle class="still" cx="{cx:.2}" cy="{cy:.2}" r="1.5" fill="black"/>"#);
            continue;
        }
        let color = speed_color(speed / max_speed);
        // Screen y points down, so the y component flips.
        let (ux, uy) = (planar[0] / speed, -planar[1] / speed);
        let (tx, ty) = (cx + ux * glyph, cy + uy * glyph);
        let head = 0.35 * glyph;
        let (lx, ly) = (tx - head * (ux - 0.5 * uy), ty - head * (uy + 0.5 * ux));
        let (rx, ry) = (tx - head * (ux + 0.5 * uy), ty - head * (uy - 0.5 * ux));
        let _ = writeln!(
            svg,
            r#"<line class="arrow" x1="{cx:.2}" y1="{cy:.2}" x2="{tx:.2}" y2="{ty:.2}" stroke="{color}"/><polyline points="{lx:.2},{ly:.2} {tx:.2},{ty:.2} {rx:.2},{ry:.2}" stroke="{color}"/>"#
        );
    }
    let _ = writeln!(svg, "</g>");
    for path in rollouts {
        let pts: Vec<String> = path
            .iter()
            .map(|p| {
                let (x, y) = canvas.px(p[0], p[1]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="rollout" points="{}" stroke="black" stroke-width="2" fill="none"/>"#,
            pts.join(" ")
        );
    }
    let (ax, ay) = canvas.px(attractor[0], attractor[1]);
    let _ = writeln!(
        svg,
        r#"<circle class="attractor" cx="{ax:.2}" cy="{ay:.2}" r="5" fill="black"/>"#
    );
    svg.push_str("</svg>\n");
    svg
}
