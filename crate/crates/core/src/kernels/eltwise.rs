//! Element-wise kernels: each core streams its own tiles, no NoC traffic.

use alloc::rc::Rc;
use alloc::vec::Vec;

use super::{check_scalar, Alu, DistVector, KernelOpts, Launch, Sink, Source, Val};
use crate::device::{CbSpec, Device, Program, TaskKind};
use crate::error::{Error, Result};
use crate::numerics::{image_size, EltwiseOp};

pub(crate) type TileFn = Rc<dyn Fn(&Alu, &[Val]) -> Result<Val>>;

/// Runs `f` over matching tiles of `inputs` on every core.
pub(crate) fn map_tiles(
    dev: &mut Device,
    name: &str,
    inputs: &[&DistVector],
    opts: KernelOpts,
    f: TileFn,
) -> Result<Launch<DistVector>> {
    let first = inputs.first().ok_or(Error::LayoutMismatch)?;
    for v in &inputs[1..] {
        first.check_compatible(v)?;
    }
    let (layout, fmt) = (first.layout(), first.fmt());
    let page = image_size(fmt);
    let sources = inputs
        .iter()
        .map(|v| Source::new(dev, v, opts.residency))
        .collect::<Result<Vec<_>>>()?;
    let sink = Sink::new(dev, layout, fmt, opts.residency);

    let mut p = Program::new(name, layout.rect);
    p.set_resident_bytes(opts.resident_bytes);
    if opts.residency == super::Residency::Dram {
        p.set_dram_streams(layout.rect.len());
    }
    let cb_in: Vec<_> = (0..inputs.len())
        .map(|i| p.add_cb(CbSpec::new(alloc::format!("in{i}"), page, 2)))
        .collect();
    let cb_out = p.add_cb(CbSpec::new("out", page, 2));
    let n = layout.tiles_per_core;

    for (core, coord) in layout.rect.iter().enumerate() {
        let (srcs, cbs) = (sources.clone(), cb_in.clone());
        p.task(coord, TaskKind::Reader, move |ctx| async move {
            for t in 0..n {
                for (s, &cb) in srcs.iter().zip(&cbs) {
                    ctx.reserve_back(cb, 1).await?;
                    if let Some(tile) = s.load(&ctx, core, t)? {
                        ctx.write_tile(cb, 0, &tile)?;
                    }
                    ctx.push_back(cb, 1)?;
                }
            }
            Ok(())
        });

        let (cbs, f) = (cb_in.clone(), f.clone());
        p.task(coord, TaskKind::Compute, move |ctx| async move {
            let alu = Alu::new(ctx.clone(), opts.unit, fmt);
            let full = ctx.is_full();
            for t in 0..n {
                let mut args = Vec::with_capacity(cbs.len());
                for &cb in &cbs {
                    ctx.wait_front(cb, 1).await?;
                    args.push(if full {
                        Some(ctx.read_tile(cb, 0, super::VEC_SHAPE, fmt)?)
                    } else {
                        None
                    });
                    ctx.pop_front(cb, 1)?;
                }
                alu.set_issue(t % opts.block == 0);
                let out = f(&alu, &args)?;
                ctx.reserve_back(cb_out, 1).await?;
                if let Some(o) = &out {
                    ctx.write_tile(cb_out, 0, o)?;
                }
                ctx.push_back(cb_out, 1)?;
            }
            Ok(())
        });

        let sink = sink.clone();
        p.task(coord, TaskKind::Writer, move |ctx| async move {
            let full = ctx.is_full();
            for t in 0..n {
                ctx.wait_front(cb_out, 1).await?;
                let tile = if full {
                    Some(ctx.read_tile(cb_out, 0, super::VEC_SHAPE, fmt)?)
                } else {
                    None
                };
                sink.store(&ctx, core, t, tile)?;
                ctx.pop_front(cb_out, 1)?;
            }
            Ok(())
        });
    }
    let stats = dev.run(p)?;
    Ok(Launch {
        out: sink.finish(dev)?,
        stats,
    })
}

/// `op(a, b)` element-wise.
pub fn dist_eltwise(
    dev: &mut Device,
    op: EltwiseOp,
    a: &DistVector,
    b: &DistVector,
    opts: KernelOpts,
) -> Result<Launch<DistVector>> {
    map_tiles(
        dev,
        "eltwise",
        &[a, b],
        opts,
        Rc::new(move |alu, v| alu.binary(op, &v[0], &v[1])),
    )
}

/// `alpha * x + y`, rounded after the multiply and after the add.
pub fn dist_axpy(
    dev: &mut Device,
    alpha: f32,
    x: &DistVector,
    y: &DistVector,
    opts: KernelOpts,
) -> Result<Launch<DistVector>> {
    check_scalar(alpha, x.fmt())?;
    map_tiles(
        dev,
        "axpy",
        &[x, y],
        opts,
        Rc::new(move |alu, v| {
            let ax = alu.scale(alpha, &v[0])?;
            alu.add(&ax, &v[1])
        }),
    )
}

/// `c * x`.
pub fn dist_scale(
    dev: &mut Device,
    c: f32,
    x: &DistVector,
    opts: KernelOpts,
) -> Result<Launch<DistVector>> {
    check_scalar(c, x.fmt())?;
    map_tiles(
        dev,
        "scale",
        &[x],
        opts,
        Rc::new(move |alu, v| alu.scale(c, &v[0])),
    )
}

/// `beta * p + c * r`: a direction update that regenerates `c * r` instead of
/// reading a stored copy. Bit-identical to `dist_axpy(beta, p, dist_scale(c, r))`.
pub fn dist_scale_axpy(
    dev: &mut Device,
    beta: f32,
    p: &DistVector,
    c: f32,
    r: &DistVector,
    opts: KernelOpts,
) -> Result<Launch<DistVector>> {
    check_scalar(beta, p.fmt())?;
    check_scalar(c, p.fmt())?;
    map_tiles(
        dev,
        "scale_axpy",
        &[p, r],
        opts,
        Rc::new(move |alu, v| {
            let z = alu.scale(c, &v[1])?;
            let bp = alu.scale(beta, &v[0])?;
            alu.add(&bp, &z)
        }),
    )
}
