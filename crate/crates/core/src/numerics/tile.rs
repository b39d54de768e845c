use alloc::vec;
use alloc::vec::Vec;

use super::scalar::{ftz_add, ftz_mul, ftz_sub, scalar_from_f64, ScalarFmt};
use crate::error::{Error, Result};

/// Number of elements in every tile.
pub const TILE_ELEMS: usize = 1024;
/// Edge length of the square subtiles that make up a tile's physical image.
pub const SUBTILE: usize = 16;
const SUBTILE_ELEMS: usize = SUBTILE * SUBTILE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TileShape {
    /// 32 rows by 32 columns; subtiles in [TL, TR, BL, BR] order.
    Square32,
    /// 64 rows by 16 columns; subtiles stacked top to bottom.
    Tall64x16,
}

impl TileShape {
    pub const fn rows(self) -> usize {
        match self {
            TileShape::Square32 => 32,
            TileShape::Tall64x16 => 64,
        }
    }

    pub const fn cols(self) -> usize {
        match self {
            TileShape::Square32 => 32,
            TileShape::Tall64x16 => 16,
        }
    }

    /// Element offset of logical `(r, c)` within the physical image.
    #[inline]
    pub const fn physical_offset(self, r: usize, c: usize) -> usize {
        let sub = match self {
            TileShape::Square32 => (r / SUBTILE) * 2 + c / SUBTILE,
            TileShape::Tall64x16 => r / SUBTILE,
        };
        sub * SUBTILE_ELEMS + (r % SUBTILE) * SUBTILE + c % SUBTILE
    }

    /// Logical `(row, col)` of the element stored at physical offset `p`.
    #[inline]
    pub const fn logical_coord(self, p: usize) -> (usize, usize) {
        let sub = p / SUBTILE_ELEMS;
        let within = p % SUBTILE_ELEMS;
        let (sr, sc) = match self {
            TileShape::Square32 => (sub / 2, sub % 2),
            TileShape::Tall64x16 => (sub, 0),
        };
        (
            sr * SUBTILE + within / SUBTILE,
            sc * SUBTILE + within % SUBTILE,
        )
    }

    /// Bytes in one logical row of this shape.
    pub const fn row_bytes(self, fmt: ScalarFmt) -> usize {
        self.cols() * fmt.byte_width()
    }
}

/// Direction of a neighbour view.
///
/// North and South are row shifts of the physical image; East and West are
/// built from a transpose, a row shift and a second transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShiftDir {
    North,
    South,
    East,
    West,
}

impl ShiftDir {
    pub const ALL: [ShiftDir; 4] = [
        ShiftDir::North,
        ShiftDir::South,
        ShiftDir::East,
        ShiftDir::West,
    ];
}

/// Byte size of a tile image in `fmt`.
pub const fn image_size(fmt: ScalarFmt) -> usize {
    TILE_ELEMS * fmt.byte_width()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EltwiseOp {
    Add,
    Sub,
    Mul,
}

impl EltwiseOp {
    #[inline]
    pub fn apply(self, a: f32, b: f32, fmt: ScalarFmt) -> f32 {
        match self {
            EltwiseOp::Add => ftz_add(a, b, fmt),
            EltwiseOp::Sub => ftz_sub(a, b, fmt),
            EltwiseOp::Mul => ftz_mul(a, b, fmt),
        }
    }
}

/// A 1024-element block in logical row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    shape: TileShape,
    fmt: ScalarFmt,
    data: Vec<f32>,
}

impl Tile {
    pub fn zeros(shape: TileShape, fmt: ScalarFmt) -> Self {
        Self::splat(shape, fmt, 0.0)
    }

    pub fn splat(shape: TileShape, fmt: ScalarFmt, v: f64) -> Self {
        let v = scalar_from_f64(v, fmt);
        Tile {
            shape,
            fmt,
            data: vec![v; TILE_ELEMS],
        }
    }

    /// Builds a tile from `f(row, col)`, rounding each value into `fmt`.
    pub fn from_fn(
        shape: TileShape,
        fmt: ScalarFmt,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let cols = shape.cols();
        let data = (0..TILE_ELEMS)
            .map(|i| scalar_from_f64(f(i / cols, i % cols), fmt))
            .collect();
        Tile { shape, fmt, data }
    }

    /// Wraps row-major values; each is rounded into `fmt`.
    pub fn from_values(shape: TileShape, fmt: ScalarFmt, values: &[f32]) -> Result<Self> {
        if values.len() != TILE_ELEMS {
            return Err(Error::TileMismatch);
        }
        let data = values
            .iter()
            .map(|&v| scalar_from_f64(v as f64, fmt))
            .collect();
        Ok(Tile { shape, fmt, data })
    }

    pub fn shape(&self) -> TileShape {
        self.shape
    }

    pub fn fmt(&self) -> ScalarFmt {
        self.fmt
    }

    /// Row-major logical elements.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.shape.cols() + c]
    }

    /// Stores `v` rounded into the tile's format.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        let cols = self.shape.cols();
        self.data[r * cols + c] = scalar_from_f64(v as f64, self.fmt);
    }

    pub fn row(&self, r: usize) -> &[f32] {
        let cols = self.shape.cols();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn set_row(&mut self, r: usize, values: &[f32]) {
        let cols = self.shape.cols();
        for (c, &v) in values.iter().enumerate().take(cols) {
            self.data[r * cols + c] = scalar_from_f64(v as f64, self.fmt);
        }
    }

    pub fn column(&self, c: usize) -> Vec<f32> {
        (0..self.shape.rows()).map(|r| self.get(r, c)).collect()
    }

    /// Physical byte image (see [`TileShape::physical_offset`]), little-endian.
    pub fn linearize(&self) -> Vec<u8> {
        let mut out = vec![0u8; image_size(self.fmt)];
        self.write_image(&mut out);
        out
    }

    /// Writes the physical image into `out`, which must hold at least one image.
    pub fn write_image(&self, out: &mut [u8]) {
        let w = self.fmt.byte_width();
        let cols = self.shape.cols();
        for (i, &v) in self.data.iter().enumerate() {
            let p = self.shape.physical_offset(i / cols, i % cols);
            self.fmt.write_le(v, &mut out[p * w..(p + 1) * w]);
        }
    }

    /// Inverse of [`Tile::linearize`].
    pub fn delinearize(bytes: &[u8], shape: TileShape, fmt: ScalarFmt) -> Result<Self> {
        let expected = image_size(fmt);
        if bytes.len() != expected {
            return Err(Error::BadTileImageSize {
                expected,
                got: bytes.len(),
            });
        }
        let w = fmt.byte_width();
        let cols = shape.cols();
        let mut data = vec![0.0f32; TILE_ELEMS];
        for (p, chunk) in bytes.chunks_exact(w).enumerate() {
            let (r, c) = shape.logical_coord(p);
            data[r * cols + c] = fmt.read_le(chunk);
        }
        Ok(Tile { shape, fmt, data })
    }

    fn check_pair(&self, other: &Tile) -> Result<()> {
        if self.shape != other.shape || self.fmt != other.fmt {
            Err(Error::TileMismatch)
        } else {
            Ok(())
        }
    }

    /// Element-wise FTZ arithmetic.
    pub fn eltwise(op: EltwiseOp, a: &Tile, b: &Tile) -> Result<Tile> {
        a.check_pair(b)?;
        let fmt = a.fmt;
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| op.apply(x, y, fmt))
            .collect();
        Ok(Tile {
            shape: a.shape,
            fmt,
            data,
        })
    }

    /// Multiplies every element by `c`, which must already be a value of the tile's format.
    pub fn scale(c: f32, t: &Tile) -> Result<Tile> {
        if !t.fmt.contains(c) {
            return Err(Error::ScalarNotInFormat {
                value: c,
                fmt: t.fmt,
            });
        }
        let fmt = t.fmt;
        let data = t.data.iter().map(|&x| ftz_mul(c, x, fmt)).collect();
        Ok(Tile {
            shape: t.shape,
            fmt,
            data,
        })
    }

    /// Sum of all elements, accumulated left to right in physical order
    /// (row-major within each subtile, subtiles in image order).
    pub fn reduce_sum(&self) -> f32 {
        let cols = self.shape.cols();
        let mut acc: Option<f32> = None;
        for p in 0..TILE_ELEMS {
            let (r, c) = self.shape.logical_coord(p);
            let v = self.data[r * cols + c];
            acc = Some(match acc {
                None => scalar_from_f64(v as f64, self.fmt),
                Some(a) => ftz_add(a, v, self.fmt),
            });
        }
        acc.unwrap_or(0.0)
    }

    /// Transposes each 16x16 subtile in place; shape metadata is unchanged.
    pub fn transpose_subtiles(&self) -> Tile {
        let cols = self.shape.cols();
        let mut data = vec![0.0f32; TILE_ELEMS];
        for r in 0..self.shape.rows() {
            for c in 0..cols {
                let (br, bc) = (r - r % SUBTILE, c - c % SUBTILE);
                let (tr, tc) = (br + c % SUBTILE, bc + r % SUBTILE);
                data[tr * cols + tc] = self.data[r * cols + c];
            }
        }
        Tile {
            shape: self.shape,
            fmt: self.fmt,
            data,
        }
    }
}

/// One FPU matrix step: an 8x16 block times a 16x16 block, both row-major.
///
/// Accumulates over `k = 0..16` in ascending order starting from the `k = 0`
/// product.
pub fn matmul_block(a: &[f32], b: &[f32], fmt: ScalarFmt) -> Result<[f32; 128]> {
    if fmt != ScalarFmt::Bf16 {
        return Err(Error::FpuFormat);
    }
    if a.len() != 8 * 16 {
        return Err(Error::MatmulOperand("left operand must be 8x16"));
    }
    if b.len() != 16 * 16 {
        return Err(Error::MatmulOperand("right operand must be 16x16"));
    }
    let mut out = [0.0f32; 128];
    for i in 0..8 {
        for j in 0..16 {
            let mut acc = ftz_mul(a[i * 16], b[j], fmt);
            for k in 1..16 {
                acc = ftz_add(acc, ftz_mul(a[i * 16 + k], b[k * 16 + j], fmt), fmt);
            }
            out[i * 16 + j] = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tile(rng: &mut ChaCha8Rng, shape: TileShape, fmt: ScalarFmt) -> Tile {
        Tile::from_fn(shape, fmt, |_, _| rng.random_range(-100.0..100.0))
    }

    #[test]
    fn square_layout_offset_256_is_row0_col16() {
        let t = Tile::from_fn(TileShape::Square32, ScalarFmt::Fp32, |r, c| {
            (32 * r + c) as f64
        });
        let img = t.linearize();
        // Brute-force index mapping: walk subtiles TL, TR, BL, BR row-major.
        let mut order = Vec::new();
        for (sr, sc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            for r in 0..16 {
                for c in 0..16 {
                    order.push((sr * 16 + r, sc * 16 + c));
                }
            }
        }
        for (p, &(r, c)) in order.iter().enumerate() {
            let v = ScalarFmt::Fp32.read_le(&img[p * 4..p * 4 + 4]);
            assert_eq!(v, t.get(r, c));
        }
        assert_eq!(order[256], (0, 16));
        assert_eq!(ScalarFmt::Fp32.read_le(&img[1024..1028]), 16.0);
    }

    #[test]
    fn tall_layout_is_row_major() {
        let t = Tile::from_fn(TileShape::Tall64x16, ScalarFmt::Bf16, |r, c| {
            (r * 16 + c) as f64
        });
        let img = t.linearize();
        assert_eq!(img.len(), 2048);
        assert_eq!(TileShape::Tall64x16.physical_offset(16, 0), 256);
        assert_eq!(ScalarFmt::Bf16.read_le(&img[512..514]), 256.0);
    }

    #[test]
    fn delinearize_rejects_wrong_length() {
        let err = Tile::delinearize(&[0u8; 100], TileShape::Square32, ScalarFmt::Bf16).unwrap_err();
        assert_eq!(
            err,
            Error::BadTileImageSize {
                expected: 2048,
                got: 100
            }
        );
        assert!(err.to_string().starts_with("bad tile image size"));
    }

    #[test]
    fn round_trip_all_shapes_and_formats() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for shape in [TileShape::Square32, TileShape::Tall64x16] {
            for fmt in [ScalarFmt::Bf16, ScalarFmt::Fp32] {
                let t = random_tile(&mut rng, shape, fmt);
                let back = Tile::delinearize(&t.linearize(), shape, fmt).unwrap();
                assert_eq!(back, t);
            }
        }
    }

    #[test]
    fn eltwise_identities_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fmt = ScalarFmt::Bf16;
        let a = random_tile(&mut rng, TileShape::Tall64x16, fmt);
        let b = random_tile(&mut rng, TileShape::Tall64x16, fmt);
        let zeros = Tile::zeros(a.shape(), fmt);
        let ones = Tile::splat(a.shape(), fmt, 1.0);
        assert_eq!(Tile::eltwise(EltwiseOp::Add, &a, &zeros).unwrap(), a);
        assert_eq!(Tile::eltwise(EltwiseOp::Mul, &a, &ones).unwrap(), a);
        let sum = Tile::eltwise(EltwiseOp::Add, &a, &b).unwrap();
        for i in 0..TILE_ELEMS {
            assert_eq!(
                sum.data()[i].to_bits(),
                ftz_add(a.data()[i], b.data()[i], fmt).to_bits()
            );
        }
    }

    #[test]
    fn eltwise_rejects_mismatch() {
        let a = Tile::zeros(TileShape::Tall64x16, ScalarFmt::Bf16);
        let b = Tile::zeros(TileShape::Square32, ScalarFmt::Bf16);
        let c = Tile::zeros(TileShape::Tall64x16, ScalarFmt::Fp32);
        assert_eq!(
            Tile::eltwise(EltwiseOp::Add, &a, &b),
            Err(Error::TileMismatch)
        );
        assert_eq!(
            Tile::eltwise(EltwiseOp::Sub, &a, &c),
            Err(Error::TileMismatch)
        );
    }

    #[test]
    fn scale_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fmt = ScalarFmt::Bf16;
        let t = random_tile(&mut rng, TileShape::Tall64x16, fmt);
        assert_eq!(Tile::scale(1.0, &t).unwrap(), t);
        assert!(Tile::scale(0.0, &t)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let sixth = scalar_from_f64(1.0 / 6.0, fmt);
        let ones = Tile::splat(TileShape::Tall64x16, fmt, 1.0);
        let s = Tile::scale(sixth, &ones).unwrap();
        assert!(s
            .data()
            .iter()
            .all(|&v| v.to_bits() == ftz_mul(sixth, 1.0, fmt).to_bits()));
        assert_eq!(s.data()[0], 0.166_992_19);
        assert!(matches!(
            Tile::scale(0.1, &t),
            Err(Error::ScalarNotInFormat { .. })
        ));
    }

    #[test]
    fn reduce_sum_examples() {
        let fmt = ScalarFmt::Bf16;
        let mut t = Tile::zeros(TileShape::Square32, fmt);
        assert_eq!(t.reduce_sum(), 0.0);
        t.set(5, 20, 3.0);
        assert_eq!(t.reduce_sum(), 3.0);
        let ones = Tile::splat(TileShape::Tall64x16, fmt, 1.0);
        // BF16 stalls at 256: 256 + 1 rounds back to 256 under ties-to-even.
        assert_eq!(ones.reduce_sum(), 256.0);
        assert_eq!(
            Tile::splat(TileShape::Tall64x16, ScalarFmt::Fp32, 1.0).reduce_sum(),
            1024.0
        );
    }

    #[test]
    fn reduce_sum_follows_physical_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for shape in [TileShape::Square32, TileShape::Tall64x16] {
            let t = random_tile(&mut rng, shape, ScalarFmt::Bf16);
            let img = t.linearize();
            let mut acc = ScalarFmt::Bf16.read_le(&img[0..2]);
            for p in 1..TILE_ELEMS {
                acc = ftz_add(
                    acc,
                    ScalarFmt::Bf16.read_le(&img[2 * p..2 * p + 2]),
                    ScalarFmt::Bf16,
                );
            }
            assert_eq!(t.reduce_sum().to_bits(), acc.to_bits());
        }
    }

    #[test]
    fn transpose_breaks_column_into_four_rows() {
        let fmt = ScalarFmt::Fp32;
        let t = Tile::from_fn(TileShape::Tall64x16, fmt, |r, c| {
            if c == 0 {
                r as f64
            } else {
                -1.0
            }
        });
        let tt = t.transpose_subtiles();
        for s in 0..4 {
            let row = tt.row(16 * s);
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, (16 * s + j) as f64 as f32);
            }
        }
        assert_eq!(tt.transpose_subtiles(), t);
        let k = Tile::splat(TileShape::Square32, fmt, 2.5);
        assert_eq!(k.transpose_subtiles(), k);
    }

    #[test]
    fn square_transpose_is_per_quadrant() {
        let t = Tile::from_fn(TileShape::Square32, ScalarFmt::Fp32, |r, c| {
            (32 * r + c) as f64
        });
        let tt = t.transpose_subtiles();
        assert_eq!(tt.get(0, 17), t.get(1, 16));
        assert_eq!(tt.get(20, 3), t.get(19, 4));
    }

    #[test]
    fn matmul_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fmt = ScalarFmt::Bf16;
        let a: Vec<f32> = (0..128)
            .map(|_| scalar_from_f64(rng.random_range(-4.0..4.0), fmt))
            .collect();
        let b: Vec<f32> = (0..256)
            .map(|_| scalar_from_f64(rng.random_range(-4.0..4.0), fmt))
            .collect();
        let mut eye = vec![0.0f32; 256];
        for i in 0..16 {
            eye[i * 16 + i] = 1.0;
        }
        assert_eq!(&matmul_block(&a, &eye, fmt).unwrap()[..], &a[..]);
        let zeros = vec![0.0f32; 128];
        assert!(matmul_block(&zeros, &b, fmt)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        let got = matmul_block(&a, &b, fmt).unwrap();
        for i in 0..8 {
            for j in 0..16 {
                let mut acc = 0.0f32;
                for k in 0..16 {
                    let p = ftz_mul(a[i * 16 + k], b[k * 16 + j], fmt);
                    acc = if k == 0 { p } else { ftz_add(acc, p, fmt) };
                }
                assert_eq!(got[i * 16 + j].to_bits(), acc.to_bits());
            }
        }
        assert_eq!(matmul_block(&a, &b, ScalarFmt::Fp32), Err(Error::FpuFormat));
    }
}
