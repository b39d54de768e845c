//! Reduced-precision scalars with flush-to-zero semantics.
//!
//! Values are carried as `f32` whose bit pattern is always a valid member of
//! the active [`ScalarFmt`]: BF16 values are `f32`s with the low 16 bits clear.
//! Every operation rounds exactly once (round-to-nearest-even) and then flushes
//! any result below the smallest normal to a signed zero.

/// Element format of a tile or scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScalarFmt {
    /// 1 sign, 8 exponent, 7 mantissa bits.
    Bf16,
    /// IEEE-754 binary32 layout.
    Fp32,
}

const F64_MANTISSA_BITS: u32 = 52;
const SIGN_MASK: u64 = 1 << 63;

/// Smallest positive normal shared by both formats (2^-126).
const MIN_NORMAL: f64 = 1.1754943508222875e-38;
/// First power of two past the largest finite value of both formats (2^128).
const OVERFLOW: f64 = 3.402823669209385e38;

impl ScalarFmt {
    pub const fn byte_width(self) -> usize {
        match self {
            ScalarFmt::Bf16 => 2,
            ScalarFmt::Fp32 => 4,
        }
    }

    pub const fn mantissa_bits(self) -> u32 {
        match self {
            ScalarFmt::Bf16 => 7,
            ScalarFmt::Fp32 => 23,
        }
    }

    /// Width in bits of the storage format.
    pub const fn bits(self) -> u32 {
        (self.byte_width() * 8) as u32
    }

    /// Smallest positive normal value.
    pub fn min_positive(self) -> f32 {
        f32::MIN_POSITIVE
    }

    /// Storage bit pattern of a value already in this format.
    pub fn to_bits(self, v: f32) -> u32 {
        match self {
            ScalarFmt::Bf16 => v.to_bits() >> 16,
            ScalarFmt::Fp32 => v.to_bits(),
        }
    }

    /// Decodes a storage bit pattern, flushing subnormal encodings to zero.
    pub fn from_bits(self, bits: u32) -> f32 {
        let v = match self {
            ScalarFmt::Bf16 => f32::from_bits((bits & 0xFFFF) << 16),
            ScalarFmt::Fp32 => f32::from_bits(bits),
        };
        flush_input(v)
    }

    pub fn write_le(self, v: f32, out: &mut [u8]) {
        let bits = self.to_bits(v);
        match self {
            ScalarFmt::Bf16 => out[..2].copy_from_slice(&(bits as u16).to_le_bytes()),
            ScalarFmt::Fp32 => out[..4].copy_from_slice(&bits.to_le_bytes()),
        }
    }

    pub fn read_le(self, bytes: &[u8]) -> f32 {
        match self {
            ScalarFmt::Bf16 => self.from_bits(u16::from_le_bytes([bytes[0], bytes[1]]) as u32),
            ScalarFmt::Fp32 => {
                self.from_bits(u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]))
            }
        }
    }

    /// True if `v` is exactly a value of this format that FTZ arithmetic can produce.
    pub fn contains(self, v: f32) -> bool {
        if v.is_nan() {
            return true;
        }
        scalar_from_f64(v as f64, self).to_bits() == v.to_bits()
    }
}

/// Rounds `x` into `fmt` (nearest-even), flushing subnormal results to signed
/// zero and overflowing to signed infinity.
///
/// Tininess is detected after rounding: a value that rounds up to the
/// smallest normal is kept.
pub fn scalar_from_f64(x: f64, fmt: ScalarFmt) -> f32 {
    if x.is_nan() {
        return f32::NAN;
    }
    let bits = x.to_bits();
    let sign = bits & SIGN_MASK;
    let mag = bits & !SIGN_MASK;
    let signed = |v: f32| if sign != 0 { -v } else { v };
    if x.is_infinite() {
        return signed(f32::INFINITY);
    }
    if mag == 0 {
        return signed(0.0);
    }

    let drop = F64_MANTISSA_BITS - fmt.mantissa_bits();
    let half = 1u64 << (drop - 1);
    let lsb = (mag >> drop) & 1;
    let rounded = (mag + half - 1 + lsb) & !((1u64 << drop) - 1);
    let r = f64::from_bits(rounded);

    if r >= OVERFLOW {
        signed(f32::INFINITY)
    } else if r < MIN_NORMAL {
        signed(0.0)
    } else {
        signed(r as f32)
    }
}

/// Treats subnormal operands as signed zero.
#[inline]
pub fn flush_input(v: f32) -> f32 {
    if v.is_subnormal() {
        if v.is_sign_negative() {
            -0.0
        } else {
            0.0
        }
    } else {
        v
    }
}

#[inline]
fn binary(a: f32, b: f32, fmt: ScalarFmt, f: impl Fn(f64, f64) -> f64) -> f32 {
    let a = flush_input(a) as f64;
    let b = flush_input(b) as f64;
    scalar_from_f64(f(a, b), fmt)
}

// Double rounding through f64 is innocuous for +, -, *, / and sqrt because
// 53 >= 2 * 24 + 2; products of two 24-bit significands are exact in f64.

pub fn ftz_add(a: f32, b: f32, fmt: ScalarFmt) -> f32 {
    binary(a, b, fmt, |a, b| a + b)
}

pub fn ftz_sub(a: f32, b: f32, fmt: ScalarFmt) -> f32 {
    binary(a, b, fmt, |a, b| a - b)
}

pub fn ftz_mul(a: f32, b: f32, fmt: ScalarFmt) -> f32 {
    binary(a, b, fmt, |a, b| a * b)
}

pub fn ftz_div(a: f32, b: f32, fmt: ScalarFmt) -> f32 {
    binary(a, b, fmt, |a, b| a / b)
}

/// Square root computed in double precision and rounded once into `fmt`.
pub fn ftz_sqrt(a: f32, fmt: ScalarFmt) -> f32 {
    scalar_from_f64(libm::sqrt(flush_input(a) as f64), fmt)
}

/// True if `v` is NOT a subnormal encoding (the FTZ closure property).
pub fn is_ftz_clean(v: f32) -> bool {
    !v.is_subnormal()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pow2(e: i32) -> f64 {
        libm::ldexp(1.0, e)
    }

    #[test]
    fn one_encodes_to_3f80() {
        let v = scalar_from_f64(1.0, ScalarFmt::Bf16);
        assert_eq!(ScalarFmt::Bf16.to_bits(v), 0x3F80);
    }

    #[test]
    fn subnormal_flushes_to_zero() {
        let v = scalar_from_f64(pow2(-127) * 0.5, ScalarFmt::Bf16);
        assert_eq!(v.to_bits(), 0);
        let v = scalar_from_f64(-pow2(-130), ScalarFmt::Fp32);
        assert_eq!(v.to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn ties_to_even_brute_force() {
        // Enumerate every BF16 value in [0.5, 4) and pick the nearest, breaking
        // ties toward an even mantissa; compare against the rounding routine.
        let x = 1.00390625;
        let mut best: Option<(f64, u32)> = None;
        for bits in 0x3F00u32..0x4080 {
            let cand = f32::from_bits(bits << 16) as f64;
            let d = (cand - x).abs();
            best = match best {
                None => Some((d, bits)),
                Some((bd, bb)) if d < bd || (d == bd && bits & 1 == 0 && bb & 1 == 1) => {
                    Some((d, bits))
                }
                keep => keep,
            };
        }
        let (_, want) = best.unwrap();
        let got = scalar_from_f64(x, ScalarFmt::Bf16);
        assert_eq!(ScalarFmt::Bf16.to_bits(got), want);
        assert_eq!(got, 1.0);
    }

    #[test]
    fn overflow_goes_to_infinity() {
        assert_eq!(scalar_from_f64(1e39, ScalarFmt::Fp32), f32::INFINITY);
        assert_eq!(scalar_from_f64(-3.4e38, ScalarFmt::Bf16), f32::NEG_INFINITY);
        assert_eq!(scalar_from_f64(f32::MAX as f64, ScalarFmt::Fp32), f32::MAX);
    }

    #[test]
    fn rounding_up_to_min_normal_is_kept() {
        let x = pow2(-126) * (1.0 - pow2(-20));
        assert_eq!(scalar_from_f64(x, ScalarFmt::Bf16), f32::MIN_POSITIVE);
    }

    #[test]
    fn arithmetic_examples() {
        let bf = ScalarFmt::Bf16;
        assert_eq!(ftz_add(1.0, 1.0, bf), 2.0);
        let a = pow2(-63) as f32;
        let b = pow2(-64) as f32;
        let p = ftz_mul(a, b, bf);
        assert_eq!(p.to_bits(), 0);
        for x in [1.5f32, -3.25e7, 1.0e-30, 7.0] {
            assert_eq!(ftz_add(x, -x, ScalarFmt::Fp32).to_bits(), 0);
        }
    }

    #[test]
    fn subnormal_inputs_read_as_zero() {
        let sub = f32::from_bits(1);
        assert_eq!(ftz_add(sub, 0.0, ScalarFmt::Fp32).to_bits(), 0);
        assert_eq!(ftz_mul(sub, 1e30, ScalarFmt::Fp32).to_bits(), 0);
        assert_eq!(ScalarFmt::Fp32.from_bits(1).to_bits(), 0);
        assert_eq!(ScalarFmt::Bf16.from_bits(0x0001), 0.0);
    }

    #[test]
    fn nan_propagates() {
        assert!(ftz_add(f32::NAN, 1.0, ScalarFmt::Bf16).is_nan());
        assert!(ftz_mul(f32::INFINITY, 0.0, ScalarFmt::Fp32).is_nan());
        assert_eq!(ftz_div(1.0, 0.0, ScalarFmt::Fp32), f32::INFINITY);
    }

    #[test]
    fn fp32_matches_native_for_normal_results() {
        let vals = [1.1f32, 3.7e-3, -2.5e10, 6.0, 0.1, -7.77e-20];
        for &a in &vals {
            for &b in &vals {
                for (got, want) in [
                    (ftz_add(a, b, ScalarFmt::Fp32), a + b),
                    (ftz_mul(a, b, ScalarFmt::Fp32), a * b),
                    (ftz_div(a, b, ScalarFmt::Fp32), a / b),
                ] {
                    let want = if want.is_subnormal() { 0.0 } else { want };
                    assert_eq!(got.to_bits(), want.to_bits());
                }
            }
        }
    }

    #[test]
    fn byte_codec() {
        let mut buf = [0u8; 4];
        ScalarFmt::Bf16.write_le(-2.0, &mut buf);
        assert_eq!(&buf[..2], &[0x00, 0xC0]);
        assert_eq!(ScalarFmt::Bf16.read_le(&buf), -2.0);
        ScalarFmt::Fp32.write_le(0.1, &mut buf);
        assert_eq!(ScalarFmt::Fp32.read_le(&buf), 0.1);
    }
}
