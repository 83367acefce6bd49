//! Synthetic test images: filled polygons ("blobs") with known boundaries.

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::image::{GrayImage, ImageError};

/// A simple polygon in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub vertices: Vec<Point>,
}

impl Blob {
    pub fn new(vertices: Vec<Point>) -> Self {
        Blob { vertices }
    }

    /// Regular `n`-gon approximating an ellipse.
    pub fn ellipse(center: Point, rx: f64, ry: f64, n: usize) -> Self {
        let vertices = (0..n)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Point::new(center.x + rx * th.cos(), center.y + ry * th.sin())
            })
            .collect();
        Blob { vertices }
    }

    pub fn translate(&self, d: Point) -> Self {
        Blob::new(self.vertices.iter().map(|v| v.add(d)).collect())
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Euclidean distance from `p` to the polygon outline.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len() as f64;
        let s = self.vertices.iter().fold(Point::new(0.0, 0.0), |acc, v| acc.add(*v));
        s.scale(1.0 / n)
    }
}

pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b.sub(a);
    let len2 = d.x * d.x + d.y * d.y;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (p.sub(a).x * d.x + p.sub(a).y * d.y) / len2
    };
    p.dist(a.add(d.scale(t.clamp(0.0, 1.0))))
}

/// Renders blobs as intensity 1 on 0, antialiased by `ss x ss` supersampling
/// of each pixel (pixel `(x, y)` covers `[x - 0.5, x + 0.5]`).
pub fn render_blobs(width: usize, height: usize, blobs: &[Blob], ss: usize) -> Result<GrayImage, ImageError> {
    let ss = ss.max(1);
    GrayImage::from_fn(width, height, |x, y| {
        let mut hits = 0usize;
        for i in 0..ss {
            for j in 0..ss {
                let p = Point::new(
                    x as f64 - 0.5 + (i as f64 + 0.5) / ss as f64,
                    y as f64 - 0.5 + (j as f64 + 0.5) / ss as f64,
                );
                if blobs.iter().any(|b| b.contains(p)) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (ss * ss) as f64
    })
}
