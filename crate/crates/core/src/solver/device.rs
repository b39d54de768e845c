//! The iteration on the simulated grid.

use alloc::vec::Vec;

use super::{pcg, PcgBackend, PcgConfig, PcgMode, PcgState, SramPlan, Stop};
use crate::costmodel::{Category, CostLedger};
use crate::device::{CoreRect, Device, DeviceConfig, ExecMode};
use crate::error::{Error, Result};
use crate::kernels::{
    dist_axpy, dist_scale, dist_scale_axpy, dot_with_precond, global_dot, stencil_apply,
    DistVector, GridDistribution, KernelOpts, Launch, StencilCoeffs, StencilVariant,
};
use crate::numerics::{ftz_div, ftz_sqrt, scalar_from_f64, ScalarFmt};

/// Jacobi scale `1 / center`, rounded into `fmt`.
pub fn jacobi_scale(coeffs: &StencilCoeffs, fmt: ScalarFmt) -> f32 {
    scalar_from_f64(1.0 / coeffs.center as f64, fmt)
}

/// `q = A p` with zero Dirichlet boundaries.
pub fn spmv(
    dev: &mut Device,
    grid: &GridDistribution,
    p: &DistVector,
    coeffs: &StencilCoeffs,
    opts: KernelOpts,
) -> Result<Launch<DistVector>> {
    stencil_apply(dev, grid, p, coeffs, StencilVariant::Full, opts)
}

/// `z = M^-1 r` for the diagonal preconditioner.
pub fn jacobi_apply(
    dev: &mut Device,
    r: &DistVector,
    coeffs: &StencilCoeffs,
    opts: KernelOpts,
) -> Result<Launch<DistVector>> {
    dist_scale(dev, jacobi_scale(coeffs, r.fmt()), r, opts)
}

/// Runs each step as a kernel on a device.
pub struct DeviceBackend<'a> {
    dev: &'a mut Device,
    grid: GridDistribution,
    cfg: PcgConfig,
    opts: KernelOpts,
    jacobi: f32,
    z: Option<DistVector>,
    start: u64,
}

impl<'a> DeviceBackend<'a> {
    /// Checks the configuration and the SRAM plan.
    pub fn new(dev: &'a mut Device, grid: GridDistribution, cfg: PcgConfig) -> Result<Self> {
        cfg.validate()?;
        let plan = SramPlan::new(cfg.fmt, cfg.mode, grid.tiles_per_core());
        plan.check(dev.sram_available())?;
        let opts = KernelOpts::new(cfg.unit).with_resident_bytes(plan.resident_bytes());
        let start = dev.max_clock(grid.rect());
        Ok(DeviceBackend {
            jacobi: jacobi_scale(&cfg.coeffs, cfg.fmt),
            dev,
            grid,
            cfg,
            opts,
            z: None,
            start,
        })
    }

    fn rect(&self) -> CoreRect {
        self.grid.rect()
    }

    fn launch(&mut self) {
        if self.cfg.mode == PcgMode::Split {
            let o = self.dev.cost().launch_overhead_cycles;
            self.dev.barrier(self.rect(), o);
        }
    }

    fn scalar_op(&mut self) {
        let c = self.dev.cost().scalar_op_cycles;
        self.dev.charge_cores(self.rect(), Category::Other, c);
    }

    /// Dot results are absent in cost-only execution; any nonzero stand-in
    /// keeps the control flow identical.
    fn scalar(v: Option<f32>) -> f64 {
        v.map_or(1.0, |v| v as f64)
    }

    fn narrow(&self, v: f64) -> Result<f32> {
        let s = v as f32;
        if s as f64 != v || !self.cfg.fmt.contains(s) {
            return Err(Error::ScalarNotInFormat {
                value: s,
                fmt: self.cfg.fmt,
            });
        }
        Ok(s)
    }
}

impl PcgBackend for DeviceBackend<'_> {
    type Vector = DistVector;

    fn spmv(&mut self, p: &DistVector) -> Result<DistVector> {
        self.launch();
        Ok(spmv(self.dev, &self.grid, p, &self.cfg.coeffs, self.opts)?.out)
    }

    fn dot(&mut self, x: &DistVector, y: &DistVector) -> Result<f64> {
        self.launch();
        Ok(Self::scalar(
            global_dot(self.dev, x, y, self.cfg.reduction, self.opts)?.out,
        ))
    }

    fn axpy(&mut self, alpha: f64, x: &DistVector, y: &DistVector) -> Result<DistVector> {
        let a = self.narrow(alpha)?;
        self.launch();
        Ok(dist_axpy(self.dev, a, x, y, self.opts)?.out)
    }

    fn precond_dot(&mut self, r: &DistVector) -> Result<f64> {
        match self.cfg.mode {
            PcgMode::Fused => {
                let d =
                    dot_with_precond(self.dev, r, self.jacobi, self.cfg.reduction, self.opts)?.out;
                Ok(Self::scalar(d))
            }
            PcgMode::Split => {
                self.launch();
                let z = dist_scale(self.dev, self.jacobi, r, self.opts)?.out;
                let d = self.dot(r, &z)?;
                self.z = Some(z);
                Ok(d)
            }
        }
    }

    fn initial_direction(&mut self, r: &DistVector) -> Result<DistVector> {
        match (self.cfg.mode, &self.z) {
            (PcgMode::Split, Some(z)) => Ok(z.clone()),
            _ => {
                self.launch();
                Ok(dist_scale(self.dev, self.jacobi, r, self.opts)?.out)
            }
        }
    }

    fn update_direction(
        &mut self,
        beta: f64,
        p: &DistVector,
        r: &DistVector,
    ) -> Result<DistVector> {
        let b = self.narrow(beta)?;
        self.launch();
        match (self.cfg.mode, &self.z) {
            (PcgMode::Split, Some(z)) => Ok(dist_axpy(self.dev, b, p, z, self.opts)?.out),
            _ => Ok(dist_scale_axpy(self.dev, b, p, self.jacobi, r, self.opts)?.out),
        }
    }

    fn div(&mut self, a: f64, b: f64) -> f64 {
        self.scalar_op();
        ftz_div(a as f32, b as f32, self.cfg.fmt) as f64
    }

    fn sqrt(&mut self, a: f64) -> f64 {
        self.scalar_op();
        ftz_sqrt(a as f32, self.cfg.fmt) as f64
    }

    /// Zero, non-finite, or below the smallest normal, which FTZ arithmetic
    /// would otherwise flush silently.
    fn is_breakdown(&self, v: f64) -> bool {
        !v.is_finite() || v.abs() < self.cfg.fmt.min_positive() as f64
    }

    fn end_iteration(&mut self) -> Result<()> {
        if self.cfg.mode == PcgMode::Split {
            let c = self.dev.cost().host_readback_cycles;
            self.dev.barrier(self.rect(), c);
        }
        Ok(())
    }

    fn cycles(&self) -> u64 {
        self.dev.max_clock(self.rect()) - self.start
    }

    fn take_z(&mut self) -> Option<DistVector> {
        self.z.take()
    }
}

/// A finished solve on the device.
#[derive(Debug, Clone)]
pub struct PcgReport {
    pub state: PcgState<DistVector>,
    /// Cycles from the start of the solve to the end of the last iteration.
    pub cycles: u64,
    /// Ledgers of the solve alone, one per core in `grid.rect()` order.
    pub core_ledgers: Vec<CostLedger>,
}

impl PcgReport {
    /// Sum over cores.
    pub fn ledger(&self) -> CostLedger {
        self.core_ledgers
            .iter()
            .fold(CostLedger::new(), |a, &b| a + b)
    }

    /// Cycles of the iterations, excluding residual initialization.
    pub fn cycles_per_iter(&self) -> f64 {
        let h = &self.state.cycle_history;
        match self.state.iter {
            0 => 0.0,
            n => (h[h.len() - 1] - h[0]) as f64 / n as f64,
        }
    }
}

fn run(
    dev: &mut Device,
    grid: &GridDistribution,
    b: &DistVector,
    x0: &DistVector,
    cfg: &PcgConfig,
    stop: Stop,
) -> Result<PcgReport> {
    if b.layout() != grid.layout() {
        return Err(Error::LayoutMismatch);
    }
    b.check_compatible(x0)?;
    if b.fmt() != cfg.fmt {
        return Err(Error::TileMismatch);
    }
    let rect = grid.rect();
    let before: Vec<_> = rect.iter().map(|c| dev.core_ledger(c)).collect();
    let mut be = DeviceBackend::new(dev, *grid, *cfg)?;
    let state = pcg(&mut be, b, x0, stop)?;
    let cycles = be.cycles();
    let core_ledgers = rect
        .iter()
        .zip(before)
        .map(|(c, b0)| dev.core_ledger(c) - b0)
        .collect();
    Ok(PcgReport {
        state,
        cycles,
        core_ledgers,
    })
}

/// Solves `A x = b` from `x0`.
///
/// Running out of iterations is not an error: the report carries
/// `converged == false` and the last iterate.
pub fn pcg_solve(
    dev: &mut Device,
    grid: &GridDistribution,
    b: &DistVector,
    x0: &DistVector,
    cfg: &PcgConfig,
) -> Result<PcgReport> {
    let stop = Stop::Converge {
        epsilon: cfg.epsilon,
        max_iters: cfg.max_iters,
    };
    run(dev, grid, b, x0, cfg, stop)
}

/// Cycles of `iterations` iterations, from a cost-only run of the same
/// kernel sequence a full solve executes.
pub fn pcg_estimate(
    dev_cfg: &DeviceConfig,
    grid: &GridDistribution,
    cfg: &PcgConfig,
    iterations: usize,
) -> Result<PcgReport> {
    let mut dev = Device::new(dev_cfg.clone().with_exec(ExecMode::CostOnly))?;
    let v = DistVector::placeholder(grid.layout(), cfg.fmt);
    run(&mut dev, grid, &v, &v, cfg, Stop::Fixed(iterations))
}
