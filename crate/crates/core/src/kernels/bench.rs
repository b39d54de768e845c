//! Cost-only benchmark drivers for the kernel library.

use super::{
    dist_eltwise, global_dot, stencil_apply, DistVector, GridDistribution, KernelOpts,
    ReductionConfig, Residency, Routing, StencilCoeffs, StencilVariant, VecLayout,
};
use crate::costmodel::Unit;
use crate::device::{CoreRect, Device, DeviceConfig, ExecMode};
use crate::error::Result;
use crate::numerics::{EltwiseOp, ScalarFmt};

fn cost_device(cfg: &DeviceConfig) -> Result<Device> {
    Device::new(cfg.clone().with_exec(ExecMode::CostOnly))
}

/// Simulated cycles of one global dot product over a `width` x `height`
/// rectangle with operands streamed from DRAM.
pub fn dot_cycles(
    cfg: &DeviceConfig,
    width: usize,
    height: usize,
    tiles_per_core: usize,
    fmt: ScalarFmt,
    red: ReductionConfig,
    unit: Unit,
) -> Result<u64> {
    let mut dev = cost_device(cfg)?;
    let layout = VecLayout::new(CoreRect::new(0, 0, width, height), tiles_per_core);
    let v = DistVector::placeholder(layout, fmt);
    let opts = KernelOpts::new(unit)
        .with_residency(Residency::Dram)
        .streaming(fmt);
    Ok(global_dot(&mut dev, &v, &v, red, opts)?.stats.cycles())
}

/// Percent speedup of center over naive routing, `100 * (naive / center - 1)`.
pub fn predict_reduction_speedup(
    cfg: &DeviceConfig,
    width: usize,
    height: usize,
    tiles_per_core: usize,
    red: ReductionConfig,
    fmt: ScalarFmt,
    unit: Unit,
) -> Result<f64> {
    let run = |routing| {
        dot_cycles(
            cfg,
            width,
            height,
            tiles_per_core,
            fmt,
            ReductionConfig { routing, ..red },
            unit,
        )
    };
    let naive = run(Routing::Naive)? as f64;
    let center = run(Routing::Center)? as f64;
    Ok(100.0 * (naive / center - 1.0))
}

/// Simulated cycles of one stencil application on `px` x `py` cores, each
/// holding `tiles_x` x `tiles_y` x `nz` tiles.
#[allow(clippy::too_many_arguments)]
pub fn stencil_cycles(
    cfg: &DeviceConfig,
    px: usize,
    py: usize,
    tiles_x: usize,
    tiles_y: usize,
    nz: usize,
    fmt: ScalarFmt,
    variant: StencilVariant,
    opts: KernelOpts,
) -> Result<u64> {
    let mut dev = cost_device(cfg)?;
    let g = GridDistribution::from_tiles(tiles_x, tiles_y, nz, px, py)?;
    let u = DistVector::placeholder(g.layout(), fmt);
    Ok(
        stencil_apply(&mut dev, &g, &u, &StencilCoeffs::laplacian(), variant, opts)?
            .stats
            .cycles(),
    )
}

/// Simulated single-core element-wise add of `tiles` tiles per operand.
///
/// Returns `(cycles, flops_per_cycle)`.
pub fn add_cycles(
    cfg: &DeviceConfig,
    tiles: usize,
    unit: Unit,
    fmt: ScalarFmt,
) -> Result<(u64, f64)> {
    let mut dev = cost_device(cfg)?;
    let layout = VecLayout::new(CoreRect::new(0, 0, 1, 1), tiles);
    let v = DistVector::placeholder(layout, fmt);
    let opts = KernelOpts::new(unit).streaming(fmt);
    let c = dist_eltwise(&mut dev, EltwiseOp::Add, &v, &v, opts)?
        .stats
        .cycles();
    let flops = (layout.len()) as f64;
    Ok((c, if c == 0 { 0.0 } else { flops / c as f64 }))
}
