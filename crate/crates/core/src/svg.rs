//! Minimal SVG writer for clusters, traces and boundaries.

use std::fmt::Write as _;

use num_complex::Complex64;

/// Drawing surface mapping a world-coordinate rectangle onto a square image.
#[derive(Debug, Clone)]
pub struct Canvas {
    size: f64,
    x0: f64,
    y0: f64,
    scale: f64,
    body: String,
}

impl Canvas {
    /// Canvas showing the square `[cx − half, cx + half] × [cy − half, cy + half]`.
    pub fn new(size: f64, center: Complex64, half: f64) -> Self {
        let half = if half > 0.0 && half.is_finite() { half } else { 1.0 };
        Self {
            size,
            x0: center.re - half,
            y0: center.im + half,
            scale: size / (2.0 * half),
            body: String::new(),
        }
    }

    /// Canvas fitted around a set of points with a 5% margin.
    pub fn fit<'a>(size: f64, points: impl IntoIterator<Item = &'a Complex64>) -> Self {
        let (mut lo, mut hi) = (Complex64::new(f64::INFINITY, f64::INFINITY), Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in points {
            if p.re.is_finite() && p.im.is_finite() {
                lo = Complex64::new(lo.re.min(p.re), lo.im.min(p.im));
                hi = Complex64::new(hi.re.max(p.re), hi.im.max(p.im));
            }
        }
        if !lo.re.is_finite() {
            return Self::new(size, Complex64::new(0.0, 0.0), 1.0);
        }
        let half = 0.525 * (hi.re - lo.re).max(hi.im - lo.im).max(1e-9);
        Self::new(size, (lo + hi) / 2.0, half)
    }

    fn px(&self, z: Complex64) -> (f64, f64) {
        ((z.re - self.x0) * self.scale, (self.y0 - z.im) * self.scale)
    }

    pub fn polyline(&mut self, points: &[Complex64], colour: &str, width: f64, closed: bool) {
        let mut d = String::new();
        for (k, &z) in points.iter().enumerate() {
            let (x, y) = self.px(z);
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            let _ = write!(d, "{}{x:.2},{y:.2} ", if k == 0 { "M" } else { "L" });
        }
        if closed {
            d.push('Z');
        }
        let _ = writeln!(
            self.body,
            r#"<path d="{d}" fill="none" stroke="{colour}" stroke-width="{width}"/>"#
        );
    }

    pub fn circle(&mut self, center: Complex64, radius: f64, colour: &str, filled: bool) {
        let (x, y) = self.px(center);
        let r = radius * self.scale;
        let (fill, stroke) = if filled { (colour, "none") } else { ("none", colour) };
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}" stroke="{stroke}"/>"#
        );
    }

    /// Axis-aligned square of side `side` centred at `center`.
    pub fn square(&mut self, center: Complex64, side: f64, colour: &str) {
        let (x, y) = self.px(center - Complex64::new(side / 2.0, -side / 2.0));
        let s = side * self.scale;
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{s:.2}" height="{s:.2}" fill="{colour}"/>"#
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" viewBox=\"0 0 {s} {s}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            s = self.size
        )
    }
}

/// Green-to-blue ramp for `x ∈ [0, 1]`.
pub fn ramp(x: f64) -> String {
    let x = x.clamp(0.0, 1.0);
    let g = (200.0 * (1.0 - x)) as u8;
    let b = (80.0 + 175.0 * x) as u8;
    format!("rgb(20,{g},{b})")
}
