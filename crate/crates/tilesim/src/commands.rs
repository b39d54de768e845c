//! Subcommand bodies. Each builds its tables in memory; `Ctx::emit` writes them.

use std::path::PathBuf;

use tilesim_core::costmodel::{RooflineUnit, Unit};
use tilesim_core::device::Device;
use tilesim_core::kernels::bench::{add_cycles, dot_cycles, stencil_cycles};
use tilesim_core::kernels::{DistVector, GridDistribution, KernelOpts};
use tilesim_core::numerics::{ScalarFmt, TILE_ELEMS};
use tilesim_core::solver::{pcg_estimate, pcg_solve, shadow_solve, PcgConfig, ShadowGrid};

use crate::config::{fmt_name, granularity_name, routing_name, unit_name, ConfigError, RunConfig};
use crate::oracles;
use crate::output::{self, schema, Table};
use crate::validate::{self, Fault, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Sim(#[from] tilesim_core::Error),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} of {1} validation checks failed")]
    Validation(usize, usize),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Sim(
                tilesim_core::Error::Config(_) | tilesim_core::Error::IndivisibleGrid { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type CmdResult<T> = Result<T, CmdError>;

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Ctx {
    pub fn emit(&self, name: &str, t: &Table) -> CmdResult<()> {
        t.write(&output::out_path(&self.out, name))?;
        Ok(())
    }
}

fn cores_name((w, h): (usize, usize)) -> String {
    format!("{w}x{h}")
}

/// Element-wise add over the tile counts of `sweep.add_tiles`, for every
/// engine/format pair. The simulated run streams operands from DRAM; the
/// predicted rate is the compute pipeline alone.
pub fn bench_add(cfg: &RunConfig) -> CmdResult<Table> {
    let mut t = Table::new(schema::ADD);
    let pairs = [
        (Unit::Fpu, ScalarFmt::Bf16, RooflineUnit::Fpu),
        (Unit::Sfpu, ScalarFmt::Bf16, RooflineUnit::Sfpu16),
        (Unit::Sfpu, ScalarFmt::Fp32, RooflineUnit::Sfpu32),
    ];
    for &tiles in &cfg.sweep.add_tiles {
        for (unit, fmt, ru) in pairs {
            let (cycles, fpc) = add_cycles(&cfg.device, tiles, unit, fmt)?;
            // one flop per element over three operands' bytes
            let ai = 1.0 / (3 * fmt.byte_width()) as f64;
            let bound = cfg.device.cost.roofline_bound(ai, ru);
            let predicted =
                cfg.device
                    .cost
                    .achieved_add_flops((tiles * TILE_ELEMS) as u64, unit, fmt)?;
            t.push(vec![
                tiles.to_string(),
                unit_name(unit).into(),
                fmt_name(fmt).into(),
                cycles.to_string(),
                fpc.to_string(),
                predicted.to_string(),
                bound.to_string(),
            ]);
        }
    }
    Ok(t)
}

pub fn bench_dot(cfg: &RunConfig) -> CmdResult<Table> {
    let mut t = Table::new(schema::DOT);
    for &cores in &cfg.sweep.cores {
        for &tiles in &cfg.sweep.tiles_per_core {
            for red in cfg.sweep.reductions() {
                let c = dot_cycles(
                    &cfg.device,
                    cores.0,
                    cores.1,
                    tiles,
                    cfg.fmt,
                    red,
                    cfg.unit(),
                )?;
                t.push(vec![
                    cores_name(cores),
                    tiles.to_string(),
                    granularity_name(red.granularity).into(),
                    routing_name(red.routing).into(),
                    c.to_string(),
                ]);
            }
        }
    }
    Ok(t)
}

/// Layers per core so that each core holds `tiles` tiles in a
/// `stencil.tiles_x` x `stencil.tiles_y` block.
fn stencil_layers(cfg: &RunConfig, tiles: usize) -> CmdResult<usize> {
    let (tx, ty) = cfg.stencil_tiles;
    if !tiles.is_multiple_of(tx * ty) {
        return Err(ConfigError::BadValue {
            key: "tiles_per_core".into(),
            msg: format!("{tiles} is not a multiple of the {tx}x{ty} stencil block"),
        }
        .into());
    }
    Ok(tiles / (tx * ty))
}

pub fn bench_stencil(cfg: &RunConfig) -> CmdResult<Table> {
    let mut t = Table::new(schema::STENCIL);
    let (tx, ty) = cfg.stencil_tiles;
    let opts = KernelOpts::new(cfg.unit());
    for &cores in &cfg.sweep.cores {
        for &tiles in &cfg.sweep.tiles_per_core {
            let nz = stencil_layers(cfg, tiles)?;
            for &v in &cfg.sweep.variants {
                let c =
                    stencil_cycles(&cfg.device, cores.0, cores.1, tx, ty, nz, cfg.fmt, v, opts)?;
                t.push(vec![
                    cores_name(cores),
                    tiles.to_string(),
                    v.name().into(),
                    c.to_string(),
                    (c as f64 / tiles as f64).to_string(),
                ]);
            }
        }
    }
    Ok(t)
}

/// Arithmetic intensities on a log grid from 1/64 to 64 FLOPs/byte, plus the
/// intensity of a streaming BF16 add.
pub fn roofline_ais() -> Vec<f64> {
    let mut v: Vec<f64> = (-12..=12).map(|k| 2f64.powf(k as f64 / 2.0)).collect();
    v.push(1.0 / 6.0);
    v.sort_by(f64::total_cmp);
    v
}

pub fn roofline(cfg: &RunConfig) -> Table {
    let mut t = Table::new(schema::ROOFLINE);
    for ai in roofline_ais() {
        for u in RooflineUnit::ALL {
            t.push(vec![
                ai.to_string(),
                u.name().into(),
                cfg.device.cost.roofline_bound(ai, u).to_string(),
            ]);
        }
    }
    t
}

pub struct SolveOutput {
    pub history: Table,
    pub summary: Table,
    pub shadow: Option<Table>,
    /// `(file name, JSONL bytes)` per sweep point.
    pub traces: Vec<(String, Vec<u8>)>,
}

fn solve_grid(cfg: &RunConfig, cores: (usize, usize), tiles: usize) -> CmdResult<GridDistribution> {
    let s = &cfg.solve;
    let g = if s.nx > 0 || s.ny > 0 || s.nz > 0 {
        GridDistribution::new(s.nx, s.ny, s.nz, cores.0, cores.1)?
    } else {
        let (tx, ty) = cfg.stencil_tiles;
        GridDistribution::from_tiles(tx, ty, stencil_layers(cfg, tiles)?, cores.0, cores.1)?
    };
    Ok(g)
}

/// PCG at every `sweep.cores` x `sweep.tiles_per_core` point. With
/// `solve.nx/ny/nz` set the grid is fixed (strong scaling); otherwise it
/// grows with the core count (weak scaling).
pub fn solve(cfg: &RunConfig, seed: u64) -> CmdResult<SolveOutput> {
    let mut out = SolveOutput {
        history: Table::new(schema::SOLVE_HISTORY),
        summary: Table::new(schema::SOLVE_SUMMARY),
        shadow: cfg.solve.shadow.then(|| Table::new(schema::SHADOW_HISTORY)),
        traces: Vec::new(),
    };
    let pcg_cfg = PcgConfig::new(cfg.fmt)
        .with_mode(cfg.mode())
        .with_unit(cfg.unit())
        .with_reduction(cfg.reduction())
        .with_epsilon(cfg.solve.epsilon)
        .with_max_iters(cfg.solve.max_iters);
    pcg_cfg.validate()?;
    let estimate = cfg.solve.estimate_iters > 0;
    for &cores in &cfg.sweep.cores {
        for &tiles in &cfg.sweep.tiles_per_core {
            let g = solve_grid(cfg, cores, tiles)?;
            let b = oracles::rhs(seed, g.num_points());
            let rep = if estimate {
                pcg_estimate(&cfg.device, &g, &pcg_cfg, cfg.solve.estimate_iters)?
            } else {
                let mut dev = Device::new(cfg.device.clone())?;
                let bv = g.scatter(cfg.fmt, &b)?;
                let x0 = DistVector::zeros(g.layout(), cfg.fmt);
                let rep = pcg_solve(&mut dev, &g, &bv, &x0, &pcg_cfg)?;
                let name = format!(
                    "solve_trace_{}_t{}.jsonl",
                    cores_name(cores),
                    g.tiles_per_core()
                );
                out.traces.push((name, output::trace_jsonl(dev.trace())));
                rep
            };
            let st = &rep.state;
            for (i, (r, c)) in st
                .residual_history
                .iter()
                .zip(&st.cycle_history)
                .enumerate()
            {
                // cost-only runs carry no residuals
                let r = if estimate {
                    String::new()
                } else {
                    r.to_string()
                };
                out.history
                    .push(vec![cores_name(cores), i.to_string(), r, c.to_string()]);
            }
            let cpi = rep.cycles_per_iter();
            out.summary.push(vec![
                st.converged.to_string(),
                st.iter.to_string(),
                cpi.to_string(),
                (cpi / g.tiles_per_core() as f64).to_string(),
                fmt_name(cfg.fmt).into(),
                pcg_cfg.mode.name().into(),
                g.nx.to_string(),
                g.ny.to_string(),
                g.nz.to_string(),
                cores_name(cores),
            ]);
            if let Some(t) = out.shadow.as_mut() {
                let sg = ShadowGrid::new(g.nx, g.ny, g.nz);
                let s = shadow_solve(
                    sg,
                    &pcg_cfg.coeffs,
                    &b,
                    &vec![0.0; b.len()],
                    cfg.solve.epsilon,
                    cfg.solve.max_iters,
                )?;
                for (i, r) in s.residual_history.iter().enumerate() {
                    t.push(vec![cores_name(cores), i.to_string(), r.to_string()]);
                }
            }
        }
    }
    Ok(out)
}

/// Every check for `seeds`, in seed order.
pub fn validate_seeds(seeds: impl IntoIterator<Item = u64>, fault: Option<Fault>) -> Vec<Outcome> {
    seeds
        .into_iter()
        .flat_map(|s| validate::run_all(s, fault))
        .collect()
}

pub fn validate_table(outcomes: &[Outcome]) -> Table {
    let mut t = Table::new(schema::VALIDATE);
    for o in outcomes {
        t.push(vec![
            o.check.into(),
            o.seed.to_string(),
            if o.passed { "pass" } else { "fail" }.into(),
            o.detail.clone(),
        ]);
    }
    t
}

/// Runs `cmd` and writes its files under `ctx.out`.
pub fn run(cmd: &str, ctx: &Ctx) -> CmdResult<()> {
    let cfg = &ctx.cfg;
    match cmd {
        "bench-add" => ctx.emit("bench_add.csv", &bench_add(cfg)?),
        "bench-dot" => ctx.emit("bench_dot.csv", &bench_dot(cfg)?),
        "bench-stencil" => ctx.emit("bench_stencil.csv", &bench_stencil(cfg)?),
        "roofline" => ctx.emit("roofline.csv", &roofline(cfg)),
        "solve" => {
            let s = solve(cfg, ctx.seed)?;
            ctx.emit("solve_history.csv", &s.history)?;
            ctx.emit("solve_summary.csv", &s.summary)?;
            if let Some(t) = &s.shadow {
                ctx.emit("solve_shadow.csv", t)?;
            }
            for (name, bytes) in &s.traces {
                output::write_atomic(&output::out_path(&ctx.out, name), bytes)?;
            }
            Ok(())
        }
        "validate" => {
            let res = validate_seeds([ctx.seed], ctx.fault);
            ctx.emit("validate.csv", &validate_table(&res))?;
            let failed: Vec<_> = res.iter().filter(|o| !o.passed).collect();
            output::write_atomic(
                &output::out_path(&ctx.out, "validate_failures.jsonl"),
                &output::jsonl(&failed),
            )?;
            for o in &failed {
                eprintln!("FAIL {} (seed {}): {}", o.check, o.seed, o.detail);
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CmdError::Validation(failed.len(), res.len()))
            }
        }
        _ => unreachable!("unknown subcommand {cmd}"),
    }
}
