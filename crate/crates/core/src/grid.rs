//! The finite vertex lattice and the indexing of admissible ordered edges.
//!
//! Grid points are integer coordinates `(x, y)` with `0 <= x < width`,
//! `0 <= y < height`. An ordered edge `(a, b)` is admissible when
//! `l_min <= |b - a| <= l_max` in grid steps. Edges are stored densely as
//! slot `index(a) * n_offsets + k`, where `k` indexes the offset `b - a` in a
//! fixed table shared by every point; slots whose `b` falls off the grid are
//! unused.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid must be at least 3x3, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("invalid edge length band [{0}, {1}]")]
    BadBand(f64, f64),
    #[error("no admissible edges for length band [{0}, {1}]")]
    NoEdges(f64, f64),
}

pub type GridPoint = (i32, i32);

/// A `width x height` lattice laid over an image.
///
/// The lattice is inset by half a cell from each image border, pixel
/// centers sit at integer pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Result<Self, GridError> {
        if width < 3 || height < 3 {
            return Err(GridError::TooSmall(width, height));
        }
        Ok(Grid { width, height })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, p: GridPoint) -> bool {
        p.0 >= 0 && p.1 >= 0 && (p.0 as usize) < self.width && (p.1 as usize) < self.height
    }

    pub fn index(&self, p: GridPoint) -> usize {
        p.1 as usize * self.width + p.0 as usize
    }

    pub fn point(&self, index: usize) -> GridPoint {
        ((index % self.width) as i32, (index / self.width) as i32)
    }

    /// Longest distance between two grid points.
    pub fn diameter(&self) -> f64 {
        ((self.width - 1) as f64).hypot((self.height - 1) as f64)
    }

    /// Pixel coordinates of a grid-unit point for an image of the given size.
    pub fn to_pixel(&self, p: Point, image_width: usize, image_height: usize) -> Point {
        let sx = image_width as f64 / self.width as f64;
        let sy = image_height as f64 / self.height as f64;
        Point::new(-0.5 + (p.x + 0.5) * sx, -0.5 + (p.y + 0.5) * sy)
    }
}

pub fn grid_point(p: Point) -> Option<GridPoint> {
    let (x, y) = (p.x.round(), p.y.round());
    if x != p.x || y != p.y || x.abs() > i32::MAX as f64 || y.abs() > i32::MAX as f64 {
        return None;
    }
    Some((x as i32, y as i32))
}

pub fn to_point(p: GridPoint) -> Point {
    Point::new(p.0 as f64, p.1 as f64)
}

/// Dense indexing of admissible ordered edges on a grid.
#[derive(Debug, Clone)]
pub struct EdgeLayout {
    grid: Grid,
    l_min: f64,
    l_max: f64,
    offsets: Vec<GridPoint>,
    radius: i32,
    offset_lookup: Vec<u32>,
}

const NO_OFFSET: u32 = u32::MAX;

impl EdgeLayout {
    pub fn new(grid: Grid, l_min: f64, l_max: f64) -> Result<Self, GridError> {
        if !(l_min > 0.0 && l_max >= l_min && l_max.is_finite()) {
            return Err(GridError::BadBand(l_min, l_max));
        }
        let max_span = grid.width.max(grid.height) as i32 - 1;
        let radius = (l_max.floor() as i32).min(max_span);
        let (lo2, hi2) = (l_min * l_min - 1e-9, l_max * l_max + 1e-9);
        let side = (2 * radius + 1) as usize;
        let mut offsets = Vec::new();
        let mut offset_lookup = vec![NO_OFFSET; side * side];
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let d2 = (dx * dx + dy * dy) as f64;
                if d2 >= lo2 && d2 <= hi2 {
                    offset_lookup[(dy + radius) as usize * side + (dx + radius) as usize] =
                        offsets.len() as u32;
                    offsets.push((dx, dy));
                }
            }
        }
        if offsets.is_empty() {
            return Err(GridError::NoEdges(l_min, l_max));
        }
        Ok(EdgeLayout {
            grid,
            l_min,
            l_max,
            offsets,
            radius,
            offset_lookup,
        })
    }

    /// Every pair of distinct grid points is admissible.
    pub fn unpruned(grid: Grid) -> Self {
        Self::new(grid, 1.0, grid.diameter()).expect("full band is valid")
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn l_min(&self) -> f64 {
        self.l_min
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn offsets(&self) -> &[GridPoint] {
        &self.offsets
    }

    pub fn n_offsets(&self) -> usize {
        self.offsets.len()
    }

    /// Total slots, including unused ones.
    pub fn n_slots(&self) -> usize {
        self.grid.len() * self.offsets.len()
    }

    pub fn offset_index(&self, d: GridPoint) -> Option<usize> {
        let r = self.radius;
        if d.0.abs() > r || d.1.abs() > r {
            return None;
        }
        let side = (2 * r + 1) as usize;
        match self.offset_lookup[(d.1 + r) as usize * side + (d.0 + r) as usize] {
            NO_OFFSET => None,
            k => Some(k as usize),
        }
    }

    #[inline]
    pub fn slot_of(&self, a_index: usize, k: usize) -> usize {
        a_index * self.offsets.len() + k
    }

    /// Slot of the admissible edge `(a, b)`, if any.
    pub fn slot(&self, a: GridPoint, b: GridPoint) -> Option<usize> {
        if !self.grid.contains(a) || !self.grid.contains(b) {
            return None;
        }
        let k = self.offset_index((b.0 - a.0, b.1 - a.1))?;
        Some(self.slot_of(self.grid.index(a), k))
    }

    pub fn endpoints(&self, slot: usize) -> (GridPoint, GridPoint) {
        let n = self.offsets.len();
        let a = self.grid.point(slot / n);
        let d = self.offsets[slot % n];
        (a, (a.0 + d.0, a.1 + d.1))
    }

    /// Whether `slot` holds an edge that stays on the grid.
    pub fn is_valid(&self, slot: usize) -> bool {
        let (_, b) = self.endpoints(slot);
        self.grid.contains(b)
    }

    /// All admissible ordered edges.
    pub fn edges(&self) -> impl Iterator<Item = (usize, GridPoint, GridPoint)> + '_ {
        (0..self.n_slots()).filter_map(move |s| {
            let (a, b) = self.endpoints(s);
            self.grid.contains(b).then_some((s, a, b))
        })
    }

    pub fn is_admissible(&self, a: GridPoint, b: GridPoint) -> bool {
        self.slot(a, b).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_small() {
        assert!(Grid::new(2, 5).is_err());
        assert!(Grid::new(3, 3).is_ok());
    }

    #[test]
    fn slots_round_trip() {
        let layout = EdgeLayout::new(Grid::new(6, 4).unwrap(), 1.0, 2.5).unwrap();
        for (s, a, b) in layout.edges() {
            assert_eq!(layout.slot(a, b), Some(s));
            assert_eq!(layout.endpoints(s), (a, b));
        }
    }

    #[test]
    fn unpruned_counts_every_pair() {
        let g = Grid::new(4, 4).unwrap();
        let layout = EdgeLayout::unpruned(g);
        assert_eq!(layout.edges().count(), 16 * 15);
    }

    #[test]
    fn pixel_mapping_insets_half_a_cell() {
        let g = Grid::new(4, 4).unwrap();
        let p = g.to_pixel(Point::new(0.0, 3.0), 40, 40);
        assert_eq!(p, Point::new(4.5, 34.5));
    }
}
