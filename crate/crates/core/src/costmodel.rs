//! Cycle accounting for the per-core compute pipeline and the single-core roofline.

use core::fmt;
use core::ops::{Add, AddAssign, Sub};

use crate::error::{Error, Result};
use crate::numerics::{ScalarFmt, TILE_ELEMS};

/// Which compute engine executes an operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    /// Matrix engine; BF16-class formats only.
    Fpu,
    /// Vector engine; BF16 or FP32.
    Sfpu,
}

/// Roofline curves, one per engine/width combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RooflineUnit {
    Fpu,
    Sfpu16,
    Sfpu32,
}

impl RooflineUnit {
    pub const ALL: [RooflineUnit; 3] = [
        RooflineUnit::Fpu,
        RooflineUnit::Sfpu16,
        RooflineUnit::Sfpu32,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RooflineUnit::Fpu => "fpu",
            RooflineUnit::Sfpu16 => "sfpu16",
            RooflineUnit::Sfpu32 => "sfpu32",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    pub fpu_eltwise_flops_per_cycle: u64,
    pub sfpu_flops_per_cycle_16bit: u64,
    pub sfpu_flops_per_cycle_32bit: u64,
    /// Packer and unpacker throughput, bytes/cycle each.
    pub packer_unpacker_bw: u64,
    /// Dst register copy bandwidth on the SFPU path, bytes/cycle.
    pub dst_copy_bw: u64,
    /// Elements reduced per cycle by the FPU (one 16x16 block).
    pub fpu_reduce_elems_per_cycle: u64,
    /// (8x16)x(16x16) block products per cycle.
    pub fpu_matmul_blocks_per_cycle: u64,
    /// Bytes of Dst lane traffic per FLOP for a 16-bit SFPU binary op.
    ///
    /// A 16-bit binary op moves 6 bytes per element through pack/unpack, so the
    /// SFPU path is charged `(in + out) * bytes_per_flop / 6` bytes at `dst_copy_bw`.
    pub sfpu_bytes_per_flop_16bit: u64,
    /// Fixed cost of issuing one tile operation to the compute pipeline.
    pub tile_op_issue_cycles: u64,
    /// Scalar arithmetic on the compute core (dot results, CG coefficients).
    pub scalar_op_cycles: u64,
    /// Per-element cost of writing halo zeros from a data-movement core.
    pub zero_fill_cycles_per_elem: u64,
    /// Per-kernel launch overhead in split execution.
    pub launch_overhead_cycles: u64,
    /// Per-iteration device-to-host residual readback in split execution.
    pub host_readback_cycles: u64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            fpu_eltwise_flops_per_cycle: 128,
            sfpu_flops_per_cycle_16bit: 32,
            sfpu_flops_per_cycle_32bit: 16,
            packer_unpacker_bw: 64,
            dst_copy_bw: 32,
            fpu_reduce_elems_per_cycle: 256,
            fpu_matmul_blocks_per_cycle: 1,
            sfpu_bytes_per_flop_16bit: 16,
            tile_op_issue_cycles: 512,
            scalar_op_cycles: 32,
            zero_fill_cycles_per_elem: 8,
            launch_overhead_cycles: 2000,
            host_readback_cycles: 5000,
        }
    }
}

/// Ledger categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Unpack,
    Compute,
    Pack,
    Copy,
    Noc,
    Dram,
    Other,
    /// Time spent blocked on a circular buffer or barrier.
    Idle,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Unpack,
        Category::Compute,
        Category::Pack,
        Category::Copy,
        Category::Noc,
        Category::Dram,
        Category::Other,
        Category::Idle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Unpack => "unpack",
            Category::Compute => "compute",
            Category::Pack => "pack",
            Category::Copy => "copy",
            Category::Noc => "noc",
            Category::Dram => "dram",
            Category::Other => "other",
            Category::Idle => "idle",
        }
    }
}

/// Cycles by category plus work counters.
///
/// Categories record exposed time: for an overlapped operation only the
/// bounding side is charged, so the sum of categories equals elapsed time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostLedger {
    cycles: [u64; 8],
    pub flops: u64,
    pub bytes_moved: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, c: Category) -> u64 {
        self.cycles[c as usize]
    }

    pub fn charge(&mut self, c: Category, cycles: u64) {
        self.cycles[c as usize] += cycles;
    }

    pub fn total(&self) -> u64 {
        self.cycles.iter().sum()
    }

    /// Total without idle time.
    pub fn busy(&self) -> u64 {
        self.total() - self.get(Category::Idle)
    }

    /// Charges the exposed portion of `op` and returns its elapsed cycles.
    pub fn charge_op(&mut self, op: &OpCost) -> u64 {
        self.charge(Category::Other, op.issue);
        if op.compute >= op.memory() {
            self.charge(Category::Compute, op.compute);
        } else {
            self.charge(Category::Unpack, op.unpack);
            self.charge(Category::Pack, op.pack);
            self.charge(Category::Copy, op.copy);
        }
        self.flops += op.flops;
        self.bytes_moved += op.bytes;
        op.cycles()
    }
}

impl Add for CostLedger {
    type Output = CostLedger;

    fn add(mut self, rhs: CostLedger) -> CostLedger {
        self += rhs;
        self
    }
}

impl AddAssign for CostLedger {
    fn add_assign(&mut self, rhs: CostLedger) {
        for (a, b) in self.cycles.iter_mut().zip(rhs.cycles) {
            *a += b;
        }
        self.flops += rhs.flops;
        self.bytes_moved += rhs.bytes_moved;
    }
}

/// Difference of two snapshots of one growing ledger; `rhs` must be earlier.
impl Sub for CostLedger {
    type Output = CostLedger;

    fn sub(mut self, rhs: CostLedger) -> CostLedger {
        for (a, b) in self.cycles.iter_mut().zip(rhs.cycles) {
            *a -= b;
        }
        self.flops -= rhs.flops;
        self.bytes_moved -= rhs.bytes_moved;
        self
    }
}

impl fmt::Display for CostLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in Category::ALL.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}={}", c.name(), self.get(*c))?;
        }
        Ok(())
    }
}

/// Raw cycle breakdown of one operation before overlap is applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCost {
    pub issue: u64,
    pub unpack: u64,
    pub compute: u64,
    pub pack: u64,
    pub copy: u64,
    pub flops: u64,
    pub bytes: u64,
}

impl OpCost {
    pub fn memory(&self) -> u64 {
        self.unpack + self.pack + self.copy
    }

    /// Elapsed cycles: issue plus the bound side of the overlapped pipeline.
    pub fn cycles(&self) -> u64 {
        self.issue + self.compute.max(self.memory())
    }
}

/// Shape of work handed to the compute pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileOpKind {
    /// Two tiles in, one out (add/sub/mul).
    Binary,
    /// One tile in, one out, one FLOP per element (scalar multiply).
    Unary,
    /// Unpack/pack data copy, including the unpacker's transpose.
    Copy,
    /// One tile in, one scalar out.
    Reduce,
    /// One (8x16)x(16x16) block product.
    Matmul,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

impl CostParams {
    /// Element throughput of `unit` for `fmt`, in FLOPs/cycle.
    pub fn throughput(&self, unit: Unit, fmt: ScalarFmt) -> Result<u64> {
        match (unit, fmt) {
            (Unit::Fpu, ScalarFmt::Bf16) => Ok(self.fpu_eltwise_flops_per_cycle),
            (Unit::Fpu, ScalarFmt::Fp32) => Err(Error::FpuFormat),
            (Unit::Sfpu, ScalarFmt::Bf16) => Ok(self.sfpu_flops_per_cycle_16bit),
            (Unit::Sfpu, ScalarFmt::Fp32) => Ok(self.sfpu_flops_per_cycle_32bit),
        }
    }

    pub fn peak(&self, unit: RooflineUnit) -> u64 {
        match unit {
            RooflineUnit::Fpu => self.fpu_eltwise_flops_per_cycle,
            RooflineUnit::Sfpu16 => self.sfpu_flops_per_cycle_16bit,
            RooflineUnit::Sfpu32 => self.sfpu_flops_per_cycle_32bit,
        }
    }

    /// Memory bandwidth feeding `unit`, bytes/cycle.
    pub fn roofline_bw(&self, unit: RooflineUnit) -> u64 {
        match unit {
            RooflineUnit::Fpu => self.packer_unpacker_bw,
            RooflineUnit::Sfpu16 | RooflineUnit::Sfpu32 => self.dst_copy_bw,
        }
    }

    /// Attainable FLOPs/cycle at arithmetic intensity `ai` (FLOPs/byte).
    pub fn roofline_bound(&self, ai: f64, unit: RooflineUnit) -> f64 {
        let peak = self.peak(unit) as f64;
        let mem = self.roofline_bw(unit) as f64 * ai;
        if mem < peak {
            mem
        } else {
            peak
        }
    }

    /// Memory-side cycles for moving `in_bytes` + `out_bytes` through `unit`.
    fn memory_split(&self, unit: Unit, in_bytes: u64, out_bytes: u64) -> (u64, u64, u64) {
        let unpack = ceil_div(in_bytes, self.packer_unpacker_bw);
        let pack = ceil_div(out_bytes, self.packer_unpacker_bw);
        match unit {
            Unit::Fpu => (unpack, pack, 0),
            Unit::Sfpu => {
                let lane_bytes = (in_bytes + out_bytes) * self.sfpu_bytes_per_flop_16bit;
                let total = ceil_div(lane_bytes, 6 * self.dst_copy_bw);
                (unpack, pack, total.saturating_sub(unpack + pack))
            }
        }
    }

    /// Cost of a streaming element-wise binary op over `n` elements, without issue overhead.
    pub fn eltwise_cost(&self, n: u64, unit: Unit, fmt: ScalarFmt) -> Result<OpCost> {
        let thr = self.throughput(unit, fmt)?;
        let w = fmt.byte_width() as u64;
        let (in_b, out_b) = (2 * n * w, n * w);
        let (unpack, pack, copy) = self.memory_split(unit, in_b, out_b);
        Ok(OpCost {
            issue: 0,
            unpack,
            compute: ceil_div(n, thr),
            pack,
            copy,
            flops: n,
            bytes: in_b + out_b,
        })
    }

    /// Cost of one tile operation including its issue overhead.
    pub fn tile_op(&self, kind: TileOpKind, unit: Unit, fmt: ScalarFmt) -> Result<OpCost> {
        let n = TILE_ELEMS as u64;
        let tile_b = n * fmt.byte_width() as u64;
        let mut op = match kind {
            TileOpKind::Binary => self.eltwise_cost(n, unit, fmt)?,
            TileOpKind::Unary => {
                let thr = self.throughput(unit, fmt)?;
                let (unpack, pack, copy) = self.memory_split(unit, tile_b, tile_b);
                OpCost {
                    issue: 0,
                    unpack,
                    compute: ceil_div(n, thr),
                    pack,
                    copy,
                    flops: n,
                    bytes: 2 * tile_b,
                }
            }
            TileOpKind::Copy => OpCost {
                issue: 0,
                unpack: ceil_div(tile_b, self.packer_unpacker_bw),
                compute: 0,
                pack: ceil_div(tile_b, self.packer_unpacker_bw),
                copy: 0,
                flops: 0,
                bytes: 2 * tile_b,
            },
            TileOpKind::Reduce => {
                let compute = match unit {
                    Unit::Fpu => {
                        self.throughput(unit, fmt)?;
                        ceil_div(n, self.fpu_reduce_elems_per_cycle)
                    }
                    Unit::Sfpu => ceil_div(n, self.throughput(unit, fmt)?),
                };
                let (unpack, pack, copy) = self.memory_split(unit, tile_b, 16);
                OpCost {
                    issue: 0,
                    unpack,
                    compute,
                    pack,
                    copy,
                    flops: n,
                    bytes: tile_b + 16,
                }
            }
            TileOpKind::Matmul => {
                if unit != Unit::Fpu || fmt != ScalarFmt::Bf16 {
                    return Err(Error::FpuFormat);
                }
                let (a_b, b_b, out_b) = (8 * 16 * 2, 16 * 16 * 2, 8 * 16 * 2);
                let (unpack, pack, copy) = self.memory_split(unit, a_b + b_b, out_b);
                OpCost {
                    issue: 0,
                    unpack,
                    compute: ceil_div(1, self.fpu_matmul_blocks_per_cycle),
                    pack,
                    copy,
                    flops: 2 * 8 * 16 * 16,
                    bytes: a_b + b_b + out_b,
                }
            }
        };
        op.issue = self.tile_op_issue_cycles;
        Ok(op)
    }

    /// Charges a streaming element-wise op on `n` elements and returns its cycles.
    pub fn charge_eltwise(
        &self,
        ledger: &mut CostLedger,
        n: u64,
        unit: Unit,
        fmt: ScalarFmt,
    ) -> Result<u64> {
        let op = self.eltwise_cost(n, unit, fmt)?;
        Ok(ledger.charge_op(&op))
    }

    /// Pipeline-bound cycles for adding two `n`-element vectors on one core.
    pub fn predict_vector_add(&self, n: u64, unit: Unit, fmt: ScalarFmt) -> Result<u64> {
        Ok(self.eltwise_cost(n, unit, fmt)?.cycles())
    }

    /// Achieved FLOPs/cycle of [`CostParams::predict_vector_add`]; zero for empty input.
    pub fn achieved_add_flops(&self, n: u64, unit: Unit, fmt: ScalarFmt) -> Result<f64> {
        let c = self.predict_vector_add(n, unit, fmt)?;
        Ok(if c == 0 { 0.0 } else { n as f64 / c as f64 })
    }

    /// Cycles for a data-movement core to write `elems` scalar zeros.
    pub fn zero_fill(&self, elems: u64) -> u64 {
        elems * self.zero_fill_cycles_per_elem
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roofline_examples() {
        let p = CostParams::default();
        assert!((p.roofline_bound(1.0 / 6.0, RooflineUnit::Fpu) - 64.0 / 6.0).abs() < 1e-12);
        assert_eq!(p.roofline_bound(1.0 / 16.0, RooflineUnit::Sfpu16), 2.0);
        assert_eq!(p.roofline_bound(10.0, RooflineUnit::Fpu), 128.0);
        assert_eq!(p.roofline_bound(2.0, RooflineUnit::Fpu), 128.0);
        assert_eq!(p.roofline_bound(1.0, RooflineUnit::Sfpu16), 32.0);
        assert_eq!(p.roofline_bound(0.5, RooflineUnit::Sfpu32), 16.0);
    }

    #[test]
    fn eltwise_compute_cycles() {
        let p = CostParams::default();
        assert_eq!(
            p.eltwise_cost(1024, Unit::Fpu, ScalarFmt::Bf16)
                .unwrap()
                .compute,
            8
        );
        assert_eq!(
            p.eltwise_cost(1024, Unit::Sfpu, ScalarFmt::Bf16)
                .unwrap()
                .compute,
            32
        );
        assert_eq!(
            p.eltwise_cost(1024, Unit::Sfpu, ScalarFmt::Fp32)
                .unwrap()
                .compute,
            64
        );
        assert_eq!(
            p.eltwise_cost(1024, Unit::Fpu, ScalarFmt::Fp32),
            Err(Error::FpuFormat)
        );
    }

    #[test]
    fn vector_add_prediction() {
        let p = CostParams::default();
        let n = 262_144;
        assert_eq!(
            p.predict_vector_add(n, Unit::Fpu, ScalarFmt::Bf16).unwrap(),
            24_576
        );
        assert_eq!(
            p.achieved_add_flops(n, Unit::Fpu, ScalarFmt::Bf16).unwrap(),
            32.0 / 3.0
        );
        assert_eq!(
            p.achieved_add_flops(n, Unit::Sfpu, ScalarFmt::Bf16)
                .unwrap(),
            2.0
        );
        assert_eq!(
            p.predict_vector_add(0, Unit::Fpu, ScalarFmt::Bf16).unwrap(),
            0
        );
    }

    #[test]
    fn ledger_records_exposed_side() {
        let p = CostParams::default();
        let mut l = CostLedger::new();
        let c = p
            .charge_eltwise(&mut l, 1024, Unit::Fpu, ScalarFmt::Bf16)
            .unwrap();
        assert_eq!(c, 96);
        assert_eq!(l.get(Category::Unpack), 64);
        assert_eq!(l.get(Category::Pack), 32);
        assert_eq!(l.get(Category::Compute), 0);
        assert_eq!(l.total(), c);

        let mut l = CostLedger::new();
        let c = p
            .charge_eltwise(&mut l, 1024, Unit::Sfpu, ScalarFmt::Fp32)
            .unwrap();
        assert_eq!(c, 1024);
        assert_eq!(l.total(), 1024);
        assert_eq!(l.get(Category::Copy), 1024 - 128 - 64);
    }

    #[test]
    fn copy_and_transpose_cost() {
        let p = CostParams::default();
        let bf = p
            .tile_op(TileOpKind::Copy, Unit::Fpu, ScalarFmt::Bf16)
            .unwrap();
        assert_eq!(bf.cycles() - bf.issue, 64);
        let fp = p
            .tile_op(TileOpKind::Copy, Unit::Sfpu, ScalarFmt::Fp32)
            .unwrap();
        assert_eq!(fp.cycles() - fp.issue, 128);
    }
}
