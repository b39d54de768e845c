//! Distributed kernels built on the device model.

pub mod bench;
pub mod dist;
pub mod eltwise;
pub mod reduce;
pub mod shift;
pub mod stencil;

use alloc::rc::Rc;
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

pub use bench::predict_reduction_speedup;
pub use dist::{DistVector, GridDistribution, PointLoc, VecLayout, VEC_SHAPE};
pub use eltwise::{dist_axpy, dist_eltwise, dist_scale, dist_scale_axpy};
pub use reduce::{
    dot_with_precond, global_dot, local_dot_partial, reduction_tree, Granularity, ReductionConfig,
    ReductionTree, Routing, Side,
};
pub use shift::{shift_tile, shift_tile_ew, ShiftDir};
pub use stencil::{
    halo_exchange, stencil_apply, HaloSet, StencilCoeffs, StencilVariant, TileHalos,
};

use crate::costmodel::{TileOpKind, Unit};
use crate::device::{Device, ExecMode, RunStats, TaskCtx};
use crate::error::{Error, Result};
use crate::numerics::{image_size, EltwiseOp, ScalarFmt, Tile};

/// Where a kernel's vectors live between kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Residency {
    /// Resident in each core's SRAM; readers copy tiles locally.
    Sram,
    /// In device DRAM; readers and writers stream through the shared endpoint.
    Dram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelOpts {
    pub unit: Unit,
    pub residency: Residency,
    /// Tiles processed per issued operation.
    pub block: usize,
    /// SRAM per core held by resident vectors while the kernel runs.
    pub resident_bytes: usize,
}

impl KernelOpts {
    pub fn new(unit: Unit) -> Self {
        KernelOpts {
            unit,
            residency: Residency::Sram,
            block: 1,
            resident_bytes: 0,
        }
    }

    /// FPU for BF16, SFPU for FP32.
    pub fn default_for(fmt: ScalarFmt) -> Self {
        Self::new(match fmt {
            ScalarFmt::Bf16 => Unit::Fpu,
            ScalarFmt::Fp32 => Unit::Sfpu,
        })
    }

    pub fn with_residency(mut self, r: Residency) -> Self {
        self.residency = r;
        self
    }

    pub fn with_block(mut self, block: usize) -> Self {
        self.block = block.max(1);
        self
    }

    /// Streams a full Dst register file of tiles per issued operation.
    pub fn streaming(mut self, fmt: ScalarFmt) -> Self {
        self.block = dst_capacity(fmt);
        self
    }

    pub fn with_resident_bytes(mut self, bytes: usize) -> Self {
        self.resident_bytes = bytes;
        self
    }
}

/// Tiles held by the Dst register file.
pub const fn dst_capacity(fmt: ScalarFmt) -> usize {
    match fmt {
        ScalarFmt::Bf16 => 16,
        ScalarFmt::Fp32 => 8,
    }
}

/// A kernel result together with the run that produced it.
#[derive(Debug, Clone)]
pub struct Launch<T> {
    pub out: T,
    pub stats: RunStats,
}

/// A tile value inside a running task; `None` in cost-only execution.
pub(crate) type Val = Option<Tile>;

/// Tile arithmetic that charges the running task.
pub(crate) struct Alu {
    ctx: TaskCtx,
    unit: Unit,
    fmt: ScalarFmt,
    issue: Cell<bool>,
}

impl Alu {
    pub(crate) fn new(ctx: TaskCtx, unit: Unit, fmt: ScalarFmt) -> Self {
        Alu {
            ctx,
            unit,
            fmt,
            issue: Cell::new(true),
        }
    }

    /// Whether following ops pay the issue overhead.
    pub(crate) fn set_issue(&self, on: bool) {
        self.issue.set(on);
    }

    fn charge(&self, kind: TileOpKind) -> Result<()> {
        self.ctx
            .charge_tile_op(kind, self.unit, self.fmt, self.issue.get())?;
        Ok(())
    }

    pub(crate) fn binary(&self, op: EltwiseOp, a: &Val, b: &Val) -> Result<Val> {
        self.charge(TileOpKind::Binary)?;
        match (a, b) {
            (Some(a), Some(b)) => Ok(Some(Tile::eltwise(op, a, b)?)),
            _ => Ok(None),
        }
    }

    pub(crate) fn add(&self, a: &Val, b: &Val) -> Result<Val> {
        self.binary(EltwiseOp::Add, a, b)
    }

    pub(crate) fn mul(&self, a: &Val, b: &Val) -> Result<Val> {
        self.binary(EltwiseOp::Mul, a, b)
    }

    pub(crate) fn scale(&self, c: f32, a: &Val) -> Result<Val> {
        self.charge(TileOpKind::Unary)?;
        a.as_ref().map(|t| Tile::scale(c, t)).transpose()
    }

    /// Unpack/pack data copy; charges only.
    pub(crate) fn copy(&self) -> Result<()> {
        self.charge(TileOpKind::Copy)
    }

    pub(crate) fn transpose(&self, a: &Val) -> Result<Val> {
        self.charge(TileOpKind::Copy)?;
        Ok(a.as_ref().map(Tile::transpose_subtiles))
    }

    pub(crate) fn reduce(&self, a: &Val) -> Result<Option<f32>> {
        self.charge(TileOpKind::Reduce)?;
        Ok(a.as_ref().map(Tile::reduce_sum))
    }
}

/// Read access to a kernel input, wherever it lives.
pub(crate) struct Source {
    tiles: Option<Rc<Vec<Tile>>>,
    dram_base: Option<usize>,
    tiles_per_core: usize,
    fmt: ScalarFmt,
}

impl Source {
    pub(crate) fn new(dev: &mut Device, v: &DistVector, residency: Residency) -> Result<Rc<Self>> {
        let full = dev.exec_mode() == ExecMode::Full;
        if full && !v.is_materialized() {
            return Err(Error::NotMaterialized);
        }
        let tiles = full.then(|| Rc::new(v.tiles().map(|t| t.to_vec()).unwrap_or_default()));
        let dram_base = match residency {
            Residency::Sram => None,
            Residency::Dram => {
                let page = image_size(v.fmt());
                let base = dev.dram_mut().alloc(page * v.layout().num_tiles());
                if let Some(ts) = &tiles {
                    for (i, t) in ts.iter().enumerate() {
                        dev.dram_mut().write(base + i * page, &t.linearize())?;
                    }
                }
                Some(base)
            }
        };
        Ok(Rc::new(Source {
            tiles,
            dram_base,
            tiles_per_core: v.layout().tiles_per_core,
            fmt: v.fmt(),
        }))
    }

    /// Direct SRAM access without charging (same-core resident data).
    pub(crate) fn peek(&self, core: usize, t: usize) -> Option<&Tile> {
        self.tiles
            .as_ref()
            .map(|ts| &ts[core * self.tiles_per_core + t])
    }

    /// Fetches a tile into the calling task, charging the transfer.
    pub(crate) fn load(&self, ctx: &TaskCtx, core: usize, t: usize) -> Result<Val> {
        let page = image_size(self.fmt);
        match self.dram_base {
            None => {
                ctx.charge_sram_move(page);
                Ok(self.peek(core, t).cloned())
            }
            Some(base) => {
                let addr = base + (core * self.tiles_per_core + t) * page;
                match ctx.dram_read(addr, page)? {
                    Some(bytes) => Ok(Some(Tile::delinearize(&bytes, dist::VEC_SHAPE, self.fmt)?)),
                    None => Ok(None),
                }
            }
        }
    }
}

/// Write access for a kernel output.
pub(crate) struct Sink {
    layout: VecLayout,
    fmt: ScalarFmt,
    tiles: Option<RefCell<Vec<Tile>>>,
    dram_base: Option<usize>,
}

impl Sink {
    pub(crate) fn new(
        dev: &mut Device,
        layout: VecLayout,
        fmt: ScalarFmt,
        residency: Residency,
    ) -> Rc<Self> {
        let full = dev.exec_mode() == ExecMode::Full;
        let dram_base = (residency == Residency::Dram)
            .then(|| dev.dram_mut().alloc(image_size(fmt) * layout.num_tiles()));
        let tiles = (full && dram_base.is_none())
            .then(|| RefCell::new(DistVector::zeros(layout, fmt).tiles().unwrap().to_vec()));
        Rc::new(Sink {
            layout,
            fmt,
            tiles,
            dram_base,
        })
    }

    pub(crate) fn store(&self, ctx: &TaskCtx, core: usize, t: usize, tile: Val) -> Result<()> {
        let page = image_size(self.fmt);
        let idx = core * self.layout.tiles_per_core + t;
        match self.dram_base {
            None => {
                ctx.charge_sram_move(page);
                if let (Some(ts), Some(tile)) = (&self.tiles, tile) {
                    ts.borrow_mut()[idx] = tile;
                }
                Ok(())
            }
            Some(base) => {
                let bytes = match tile {
                    Some(t) => t.linearize(),
                    None => alloc::vec![0u8; page],
                };
                ctx.dram_write(base + idx * page, &bytes)
            }
        }
    }

    pub(crate) fn finish(self: Rc<Self>, dev: &Device) -> Result<DistVector> {
        if dev.exec_mode() == ExecMode::CostOnly {
            return Ok(DistVector::placeholder(self.layout, self.fmt));
        }
        match self.dram_base {
            None => {
                let tiles = self
                    .tiles
                    .as_ref()
                    .map(|t| t.borrow().clone())
                    .unwrap_or_default();
                DistVector::from_tiles(self.layout, self.fmt, tiles)
            }
            Some(base) => {
                let page = image_size(self.fmt);
                let tiles = (0..self.layout.num_tiles())
                    .map(|i| {
                        let b = dev
                            .dram()
                            .read(base + i * page, page)?
                            .ok_or(Error::NotMaterialized)?;
                        Tile::delinearize(b, dist::VEC_SHAPE, self.fmt)
                    })
                    .collect::<Result<Vec<_>>>()?;
                DistVector::from_tiles(self.layout, self.fmt, tiles)
            }
        }
    }
}

/// Fails early when `c` is not a value of `fmt`.
pub(crate) fn check_scalar(c: f32, fmt: ScalarFmt) -> Result<()> {
    if fmt.contains(c) {
        Ok(())
    } else {
        Err(Error::ScalarNotInFormat { value: c, fmt })
    }
}
