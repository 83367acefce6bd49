//! Deterministic SVG and PPM drawings of triangulated polygons.
//!
//! Solid (boundary) edges are heavy strokes, dashed (internal) edges are
//! light dashed strokes. Every triangle is drawn as its own group so that
//! junction triangles show up as groups of three dashed edges.

use std::fmt::Write as _;

use base64::Engine as _;

use crate::geometry::{Point, TriangulatedPolygon};
use crate::grid::Grid;
use crate::image::GrayImage;

/// Maps shape coordinates to canvas coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub width: f64,
    pub height: f64,
    scale: (f64, f64),
    offset: (f64, f64),
}

impl Frame {
    /// Grid-unit shapes drawn over their image. Canvas units are pixels
    /// with pixel `(i, j)` covering `[i, i + 1] x [j, j + 1]`.
    pub fn grid(grid: Grid, image_width: usize, image_height: usize) -> Self {
        let sx = image_width as f64 / grid.width as f64;
        let sy = image_height as f64 / grid.height as f64;
        Frame {
            width: image_width as f64,
            height: image_height as f64,
            scale: (sx, sy),
            offset: (0.5 * sx, 0.5 * sy),
        }
    }

    /// Uniform scale placing every vertex of `shapes` inside a `size` square
    /// canvas with a margin.
    pub fn fit<'a>(shapes: impl IntoIterator<Item = &'a TriangulatedPolygon>, size: f64) -> Self {
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for s in shapes {
            for t in s.triangles() {
                for p in t.x {
                    lo = (lo.0.min(p.x), lo.1.min(p.y));
                    hi = (hi.0.max(p.x), hi.1.max(p.y));
                }
            }
        }
        if !lo.0.is_finite() {
            lo = (0.0, 0.0);
            hi = (1.0, 1.0);
        }
        let margin = 0.05 * size;
        let span = (hi.0 - lo.0).max(hi.1 - lo.1).max(1e-12);
        let k = (size - 2.0 * margin) / span;
        let pad = (
            margin + 0.5 * (size - 2.0 * margin - k * (hi.0 - lo.0)),
            margin + 0.5 * (size - 2.0 * margin - k * (hi.1 - lo.1)),
        );
        Frame {
            width: size,
            height: size,
            scale: (k, k),
            offset: (pad.0 - k * lo.0, pad.1 - k * lo.1),
        }
    }

    pub fn map(&self, p: Point) -> Point {
        Point::new(p.x * self.scale.0 + self.offset.0, p.y * self.scale.1 + self.offset.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Style {
    pub solid_width: f64,
    pub dashed_width: f64,
    pub solid_color: &'static str,
    pub dashed_color: &'static str,
    /// Draw internal edges; with `false` only the boundary is drawn.
    pub show_dashed: bool,
}

impl Default for Style {
    fn default() -> Self {
        Style {
            solid_width: 2.0,
            dashed_width: 0.6,
            solid_color: "#000000",
            dashed_color: "#777777",
            show_dashed: true,
        }
    }
}

impl Style {
    /// Boundary only, in a color that stands out over a grayscale image.
    pub fn overlay() -> Self {
        Style {
            solid_width: 1.2,
            dashed_width: 0.4,
            solid_color: "#e02020",
            dashed_color: "#ffd000",
            show_dashed: false,
        }
    }
}

fn f(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn shape_group(out: &mut String, shape: &TriangulatedPolygon, frame: &Frame, style: &Style) {
    out.push_str("  <g class=\"shape\">\n");
    for t in shape.triangles() {
        let _ = writeln!(out, "    <g class=\"triangle type-{}\">", t.ttype.index());
        for s in 0..3 {
            let (a, b) = t.edge(s);
            let (a, b) = (frame.map(a), frame.map(b));
            if t.ttype.is_solid_slot(s) {
                let _ = writeln!(
                    out,
                    "      <line class=\"solid\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\" stroke-linecap=\"round\"/>",
                    f(a.x), f(a.y), f(b.x), f(b.y), style.solid_color, f(style.solid_width)
                );
            } else if style.show_dashed {
                let _ = writeln!(
                    out,
                    "      <line class=\"dashed\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\" stroke-dasharray=\"{} {}\"/>",
                    f(a.x), f(a.y), f(b.x), f(b.y), style.dashed_color, f(style.dashed_width),
                    f(3.0 * style.dashed_width), f(2.0 * style.dashed_width)
                );
            }
        }
        out.push_str("    </g>\n");
    }
    out.push_str("  </g>\n");
}

fn svg_open(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        f(w), f(h), f(w), f(h)
    );
}

/// One SVG with all `shapes` drawn in `frame`, over an optional backdrop
/// image embedded as a PNG data URI.
pub fn render_svg(shapes: &[TriangulatedPolygon], frame: &Frame, backdrop: Option<&GrayImage>, style: &Style) -> String {
    let mut out = String::new();
    svg_open(&mut out, frame.width, frame.height);
    match backdrop {
        Some(img) => {
            let data = base64::engine::general_purpose::STANDARD.encode(img.to_png());
            let _ = writeln!(
                out,
                "  <image x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" preserveAspectRatio=\"none\" style=\"image-rendering:pixelated\" href=\"data:image/png;base64,{}\"/>",
                img.width(), img.height(), data
            );
        }
        None => {
            let _ = writeln!(out, "  <rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
        }
    }
    for s in shapes {
        shape_group(&mut out, s, frame, style);
    }
    out.push_str("</svg>\n");
    out
}

/// Shapes laid out in a grid of `cell`-sized squares, each fitted to its
/// own cell.
pub fn render_gallery(shapes: &[TriangulatedPolygon], columns: usize, cell: f64) -> String {
    let columns = columns.max(1);
    let rows = shapes.len().div_ceil(columns).max(1);
    let mut out = String::new();
    svg_open(&mut out, columns as f64 * cell, rows as f64 * cell);
    let _ = writeln!(out, "  <rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
    let style = Style::default();
    for (i, s) in shapes.iter().enumerate() {
        let (cx, cy) = ((i % columns) as f64 * cell, (i / columns) as f64 * cell);
        let _ = writeln!(out, " <g transform=\"translate({},{})\">", f(cx), f(cy));
        shape_group(&mut out, s, &Frame::fit([s], cell), &style);
        out.push_str(" </g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// RGB raster with a binary PPM (P6) encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, backdrop: Option<&GrayImage>) -> Self {
        let mut rgb = vec![255u8; width * height * 3];
        if let Some(img) = backdrop {
            for y in 0..height.min(img.height()) {
                for x in 0..width.min(img.width()) {
                    let v = (img.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8;
                    rgb[(y * width + x) * 3..][..3].copy_from_slice(&[v, v, v]);
                }
            }
        }
        Canvas { width, height, rgb }
    }

    fn plot(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = (y as usize * self.width + x as usize) * 3;
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    /// Line in canvas units; dashed lines skip every other run of 3 pixels.
    pub fn line(&mut self, a: Point, b: Point, c: [u8; 3], dashed: bool) {
        let steps = (b.x - a.x).abs().max((b.y - a.y).abs()).ceil().max(1.0) as i64;
        for k in 0..=steps {
            if dashed && (k / 3) % 2 == 1 {
                continue;
            }
            let t = k as f64 / steps as f64;
            let x = a.x + t * (b.x - a.x);
            let y = a.y + t * (b.y - a.y);
            self.plot(x.floor() as i64, y.floor() as i64, c);
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }
}

/// PPM drawing: dashed edges first, then solid edges on top. Only
/// `style.show_dashed` is honored; colors are fixed.
pub fn render_ppm(shapes: &[TriangulatedPolygon], frame: &Frame, backdrop: Option<&GrayImage>, style: &Style) -> Vec<u8> {
    let mut canvas = Canvas::new(frame.width.round() as usize, frame.height.round() as usize, backdrop);
    for s in shapes.iter().filter(|_| style.show_dashed) {
        for (a, b) in s.dashed_edges() {
            canvas.line(frame.map(a), frame.map(b), [0, 110, 255], true);
        }
    }
    for s in shapes {
        for (a, b) in s.solid_edges() {
            canvas.line(frame.map(a), frame.map(b), [220, 30, 30], false);
        }
    }
    canvas.to_ppm()
}
