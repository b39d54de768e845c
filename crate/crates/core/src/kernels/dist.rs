//! Distributed vectors and the structured-grid distribution.

use alloc::vec;
use alloc::vec::Vec;

use crate::device::{CoreCoord, CoreRect};
use crate::error::{Error, Result};
use crate::numerics::{scalar_from_f64, ScalarFmt, Tile, TileShape, TILE_ELEMS};

/// Tile shape used by every distributed vector.
pub const VEC_SHAPE: TileShape = TileShape::Tall64x16;

/// Equal share of tiles on each core of a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VecLayout {
    pub rect: CoreRect,
    pub tiles_per_core: usize,
}

impl VecLayout {
    pub fn new(rect: CoreRect, tiles_per_core: usize) -> Self {
        VecLayout {
            rect,
            tiles_per_core,
        }
    }

    pub fn num_tiles(&self) -> usize {
        self.rect.len() * self.tiles_per_core
    }

    pub fn len(&self) -> usize {
        self.num_tiles() * TILE_ELEMS
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A vector split into 64x16 tiles, each core owning a contiguous block.
///
/// Cost-only placeholders carry a layout but no tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct DistVector {
    layout: VecLayout,
    fmt: ScalarFmt,
    tiles: Vec<Tile>,
}

impl DistVector {
    pub fn zeros(layout: VecLayout, fmt: ScalarFmt) -> Self {
        DistVector {
            layout,
            fmt,
            tiles: vec![Tile::zeros(VEC_SHAPE, fmt); layout.num_tiles()],
        }
    }

    pub fn placeholder(layout: VecLayout, fmt: ScalarFmt) -> Self {
        DistVector {
            layout,
            fmt,
            tiles: Vec::new(),
        }
    }

    pub fn from_tiles(layout: VecLayout, fmt: ScalarFmt, tiles: Vec<Tile>) -> Result<Self> {
        if tiles.len() != layout.num_tiles()
            || tiles
                .iter()
                .any(|t| t.shape() != VEC_SHAPE || t.fmt() != fmt)
        {
            return Err(Error::LayoutMismatch);
        }
        Ok(DistVector { layout, fmt, tiles })
    }

    /// Builds from values in block order: core, then tile, then row-major within the tile.
    pub fn from_values(layout: VecLayout, fmt: ScalarFmt, values: &[f64]) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::LayoutMismatch);
        }
        let tiles = values
            .chunks_exact(TILE_ELEMS)
            .map(|ch| Tile::from_fn(VEC_SHAPE, fmt, |r, c| ch[r * VEC_SHAPE.cols() + c]))
            .collect();
        Ok(DistVector { layout, fmt, tiles })
    }

    pub fn from_fn(layout: VecLayout, fmt: ScalarFmt, mut f: impl FnMut(usize) -> f64) -> Self {
        let tiles = (0..layout.num_tiles())
            .map(|t| {
                Tile::from_fn(VEC_SHAPE, fmt, |r, c| {
                    f(t * TILE_ELEMS + r * VEC_SHAPE.cols() + c)
                })
            })
            .collect();
        DistVector { layout, fmt, tiles }
    }

    pub fn layout(&self) -> VecLayout {
        self.layout
    }

    pub fn fmt(&self) -> ScalarFmt {
        self.fmt
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_materialized(&self) -> bool {
        !self.tiles.is_empty() || self.layout.num_tiles() == 0
    }

    pub fn tiles(&self) -> Result<&[Tile]> {
        if self.is_materialized() {
            Ok(&self.tiles)
        } else {
            Err(Error::NotMaterialized)
        }
    }

    /// Tiles owned by the `i`-th core of the layout rectangle.
    pub fn core_tiles(&self, i: usize) -> Result<&[Tile]> {
        let n = self.layout.tiles_per_core;
        Ok(&self.tiles()?[i * n..(i + 1) * n])
    }

    /// Values in block order.
    pub fn to_values(&self) -> Result<Vec<f32>> {
        Ok(self
            .tiles()?
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect())
    }

    pub fn check_compatible(&self, other: &DistVector) -> Result<()> {
        if self.layout != other.layout || self.fmt != other.fmt {
            Err(Error::LayoutMismatch)
        } else {
            Ok(())
        }
    }
}

/// Placement of an `nx` x `ny` x `nz` grid on a `px` x `py` core rectangle.
///
/// Each core owns an `nx/px` x `ny/py` block of the horizontal plane as
/// `tiles_x` x `tiles_y` tiles of 64 rows (y) by 16 columns (x), and every
/// z-layer of it. Core row 0 is the north edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridDistribution {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub px: usize,
    pub py: usize,
}

/// Where one grid point lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointLoc {
    pub core: usize,
    pub tile: usize,
    pub row: usize,
    pub col: usize,
}

impl GridDistribution {
    pub fn new(nx: usize, ny: usize, nz: usize, px: usize, py: usize) -> Result<Self> {
        let cols = VEC_SHAPE.cols();
        let rows = VEC_SHAPE.rows();
        if nz == 0
            || px == 0
            || py == 0
            || nx == 0
            || ny == 0
            || !nx.is_multiple_of(cols * px)
            || !ny.is_multiple_of(rows * py)
        {
            return Err(Error::IndivisibleGrid { nx, ny, nz, px, py });
        }
        Ok(GridDistribution { nx, ny, nz, px, py })
    }

    /// Smallest grid with the given tile block on every core.
    pub fn from_tiles(
        tiles_x: usize,
        tiles_y: usize,
        nz: usize,
        px: usize,
        py: usize,
    ) -> Result<Self> {
        Self::new(
            tiles_x * VEC_SHAPE.cols() * px,
            tiles_y * VEC_SHAPE.rows() * py,
            nz,
            px,
            py,
        )
    }

    pub fn tiles_x(&self) -> usize {
        self.nx / (VEC_SHAPE.cols() * self.px)
    }

    pub fn tiles_y(&self) -> usize {
        self.ny / (VEC_SHAPE.rows() * self.py)
    }

    pub fn tiles_per_core(&self) -> usize {
        self.tiles_x() * self.tiles_y() * self.nz
    }

    pub fn rect(&self) -> CoreRect {
        CoreRect::new(0, 0, self.px, self.py)
    }

    pub fn layout(&self) -> VecLayout {
        VecLayout::new(self.rect(), self.tiles_per_core())
    }

    pub fn num_points(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Position of local tile `(tx, ty, k)` in its core's block.
    pub fn tile_index(&self, tx: usize, ty: usize, k: usize) -> usize {
        (ty * self.tiles_x() + tx) * self.nz + k
    }

    /// Global linear index of `(i, j, k)`.
    pub fn global_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    pub fn locate(&self, i: usize, j: usize, k: usize) -> PointLoc {
        let (bw, bh) = (self.nx / self.px, self.ny / self.py);
        let (cx, cy) = (i / bw, j / bh);
        let (li, lj) = (i % bw, j % bh);
        let (cols, rows) = (VEC_SHAPE.cols(), VEC_SHAPE.rows());
        PointLoc {
            core: cy * self.px + cx,
            tile: self.tile_index(li / cols, lj / rows, k),
            row: lj % rows,
            col: li % cols,
        }
    }

    /// Distributes values given in global linear order.
    pub fn scatter(&self, fmt: ScalarFmt, values: &[f64]) -> Result<DistVector> {
        if values.len() != self.num_points() {
            return Err(Error::LayoutMismatch);
        }
        let layout = self.layout();
        let mut block = vec![0.0f64; layout.len()];
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    block[self.block_offset(self.locate(i, j, k))] =
                        values[self.global_index(i, j, k)];
                }
            }
        }
        DistVector::from_values(layout, fmt, &block)
    }

    /// Collects values into global linear order.
    pub fn gather(&self, v: &DistVector) -> Result<Vec<f32>> {
        if v.layout() != self.layout() {
            return Err(Error::LayoutMismatch);
        }
        let block = v.to_values()?;
        let mut out = vec![0.0f32; self.num_points()];
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    out[self.global_index(i, j, k)] =
                        block[self.block_offset(self.locate(i, j, k))];
                }
            }
        }
        Ok(out)
    }

    fn block_offset(&self, p: PointLoc) -> usize {
        (p.core * self.tiles_per_core() + p.tile) * TILE_ELEMS + p.row * VEC_SHAPE.cols() + p.col
    }

    /// Neighbouring core in the given direction, if inside the rectangle.
    pub fn neighbor(&self, c: CoreCoord, dx: isize, dy: isize) -> Option<CoreCoord> {
        let x = c.x as isize + dx;
        let y = c.y as isize + dy;
        (x >= 0 && y >= 0 && (x as usize) < self.px && (y as usize) < self.py)
            .then(|| CoreCoord::new(x as usize, y as usize))
    }
}

/// Rounds every element of `values` into `fmt`.
pub fn round_values(values: &[f64], fmt: ScalarFmt) -> Vec<f32> {
    values.iter().map(|&v| scalar_from_f64(v, fmt)).collect()
}
