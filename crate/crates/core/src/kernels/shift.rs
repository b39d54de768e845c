//! Neighbour views of 64x16 tiles built from shifted CB read pointers.

use crate::device::{Cb, CbSpec};
use crate::error::{Error, Result};
pub use crate::numerics::ShiftDir;
use crate::numerics::{image_size, Tile, TileShape, SUBTILE};

/// Rows of a transposed tile that hold the halo of an East or West view.
pub const fn ew_halo_rows(dir: ShiftDir) -> [usize; 4] {
    match dir {
        ShiftDir::West => [0, 16, 32, 48],
        _ => [15, 31, 47, 63],
    }
}

/// Rows of a transposed tile holding its column 0 (`West`) or column 15 (`East`).
pub const fn ew_edge_rows(side: ShiftDir) -> [usize; 4] {
    ew_halo_rows(side)
}

/// Copies `t` through a guarded one-page CB whose read pointer is moved by
/// `rows` logical rows. Rows read from the guard pages are zero.
pub(crate) fn row_shift(t: &Tile, rows: i64) -> Result<Tile> {
    if t.shape() != TileShape::Tall64x16 {
        return Err(Error::TileMismatch);
    }
    let fmt = t.fmt();
    let mut cb = Cb::new(
        CbSpec::new("shift", image_size(fmt), 1).with_guards(1),
        true,
    );
    cb.write_page(0, &t.linearize())?;
    cb.push(1, 0)?;
    cb.offset_read_ptr(rows * t.shape().row_bytes(fmt) as i64)?;
    Tile::delinearize(cb.read_page(0)?, t.shape(), fmt)
}

/// View of `t` aligned with its neighbour in `dir`: the North view holds
/// `t(r-1, c)` at `(r, c)`, the East view `t(r, c+1)`, and so on. Halo
/// elements, which belong to the neighbouring tile, are zero.
pub fn shift_tile(t: &Tile, dir: ShiftDir) -> Result<Tile> {
    match dir {
        ShiftDir::North => row_shift(t, -1),
        ShiftDir::South => row_shift(t, 1),
        ShiftDir::East | ShiftDir::West => shift_tile_ew(t, dir),
    }
}

/// East or West view through transpose, row shift and transpose back.
///
/// In the transposed image each 16-element column becomes a row of its
/// subtile, so a one-row shift moves every subtile by one column. The row
/// pulled across a subtile boundary is halo and is cleared.
pub fn shift_tile_ew(t: &Tile, dir: ShiftDir) -> Result<Tile> {
    let rows = match dir {
        ShiftDir::West => -1,
        ShiftDir::East => 1,
        ShiftDir::North | ShiftDir::South => return shift_tile(t, dir),
    };
    let mut v = row_shift(&t.transpose_subtiles(), rows)?;
    let zeros = [0.0f32; SUBTILE];
    for r in ew_halo_rows(dir) {
        v.set_row(r, &zeros);
    }
    Ok(v.transpose_subtiles())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ScalarFmt;

    fn idx_tile(fmt: ScalarFmt, f: impl Fn(usize, usize) -> f64) -> Tile {
        Tile::from_fn(TileShape::Tall64x16, fmt, f)
    }

    #[test]
    fn north_view_is_previous_row() {
        for fmt in [ScalarFmt::Bf16, ScalarFmt::Fp32] {
            let t = idx_tile(fmt, |r, _| r as f64 + 1.0);
            let n = shift_tile(&t, ShiftDir::North).unwrap();
            for r in 0..64 {
                for c in 0..16 {
                    assert_eq!(n.get(r, c), r as f32);
                }
            }
            let s = shift_tile(&t, ShiftDir::South).unwrap();
            assert_eq!(s.get(0, 3), 2.0);
            assert_eq!(s.get(63, 3), 0.0);
        }
    }

    #[test]
    fn west_view_is_previous_column() {
        let t = idx_tile(ScalarFmt::Fp32, |_, c| c as f64 + 1.0);
        let w = shift_tile(&t, ShiftDir::West).unwrap();
        let e = shift_tile(&t, ShiftDir::East).unwrap();
        for r in 0..64 {
            for c in 0..16 {
                assert_eq!(w.get(r, c), c as f32, "W ({r},{c})");
                let want = if c == 15 { 0.0 } else { c as f32 + 2.0 };
                assert_eq!(e.get(r, c), want, "E ({r},{c})");
            }
        }
    }

    #[test]
    fn square_tiles_are_rejected() {
        let t = Tile::zeros(TileShape::Square32, ScalarFmt::Bf16);
        assert_eq!(shift_tile(&t, ShiftDir::North), Err(Error::TileMismatch));
    }
}
