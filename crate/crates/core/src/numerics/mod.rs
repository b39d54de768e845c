//! Scalar formats and tile-level arithmetic.

pub mod scalar;
pub mod tile;

pub use scalar::{
    flush_input, ftz_add, ftz_div, ftz_mul, ftz_sqrt, ftz_sub, is_ftz_clean, scalar_from_f64,
    ScalarFmt,
};
pub use tile::{
    image_size, matmul_block, EltwiseOp, ShiftDir, Tile, TileShape, SUBTILE, TILE_ELEMS,
};
