//! Regular space-time lattice of cells tiling a window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, SpaceTimeWindow};

/// `nx * ny * nt` equal cells. Cell `(ix, iy, it)` has linear index
/// `(iy * nx + ix) * nt + it`: spatial-major, time fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub window: SpaceTimeWindow,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
}

impl SpaceTimeGrid {
    pub fn new(window: SpaceTimeWindow, nx: usize, ny: usize, nt: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nt == 0 {
            return Err(Error::InvalidParameter(format!("grid counts ({nx}, {ny}, {nt}) must be positive")));
        }
        Ok(Self { window, nx, ny, nt })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dx(&self) -> f64 {
        self.window.x.length() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.window.y.length() / self.ny as f64
    }

    pub fn dt(&self) -> f64 {
        self.window.t.length() / self.nt as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dy() * self.dt()
    }

    pub fn index(&self, ix: usize, iy: usize, it: usize) -> usize {
        (iy * self.nx + ix) * self.nt + it
    }

    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let it = index % self.nt;
        let s = index / self.nt;
        (s % self.nx, s / self.nx, it)
    }

    pub fn x_center(&self, ix: usize) -> f64 {
        self.window.x.lo + (ix as f64 + 0.5) * self.dx()
    }

    pub fn y_center(&self, iy: usize) -> f64 {
        self.window.y.lo + (iy as f64 + 0.5) * self.dy()
    }

    pub fn t_center(&self, it: usize) -> f64 {
        self.window.t.lo + (it as f64 + 0.5) * self.dt()
    }

    pub fn center(&self, index: usize) -> Point {
        let (ix, iy, it) = self.coords(index);
        Point::new(self.x_center(ix), self.y_center(iy), self.t_center(it))
    }

    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(|i| self.center(i))
    }

    fn axis_cell(lo: f64, step: f64, n: usize, v: f64) -> usize {
        let k = ((v - lo) / step).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(n - 1)
        }
    }

    /// Cell containing `p`. Points on the upper boundary belong to the last cell.
    pub fn cell_of(&self, p: &Point) -> (usize, usize, usize) {
        (
            Self::axis_cell(self.window.x.lo, self.dx(), self.nx, p.x),
            Self::axis_cell(self.window.y.lo, self.dy(), self.ny, p.y),
            Self::axis_cell(self.window.t.lo, self.dt(), self.nt, p.t),
        )
    }

    pub fn index_of(&self, p: &Point) -> usize {
        let (ix, iy, it) = self.cell_of(p);
        self.index(ix, iy, it)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let g = SpaceTimeGrid::new(SpaceTimeWindow::unit_square(50.0).unwrap(), 4, 3, 5).unwrap();
        assert_eq!(g.len(), 60);
        for i in 0..g.len() {
            let (ix, iy, it) = g.coords(i);
            assert_eq!(g.index(ix, iy, it), i);
            assert_eq!(g.index_of(&g.center(i)), i);
        }
        assert_eq!(g.cell_of(&Point::new(1.0, 1.0, 50.0)), (3, 2, 4));
        assert!((g.cell_volume() * g.len() as f64 - 50.0).abs() < 1e-12);
    }
}
