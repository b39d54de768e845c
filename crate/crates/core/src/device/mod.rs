//! Deterministic simulation of a grid of cores with circular buffers, a torus
//! NoC and a shared DRAM endpoint.

pub mod cb;
pub mod dram;
pub mod exec;
pub mod noc;
pub mod trace;

use alloc::vec;
use alloc::vec::Vec;

pub use cb::{Cb, CbSpec};
pub use dram::Dram;
pub use exec::{CbId, Program, RunStats, TaskCtx};
pub use noc::NocConfig;
pub use trace::{TaskKind, TraceZone};

use crate::costmodel::{Category, CostLedger, CostParams};
use crate::error::{Error, Result};

/// Largest compute sub-grid.
pub const MAX_GRID_WIDTH: usize = 8;
pub const MAX_GRID_HEIGHT: usize = 7;

pub const DEFAULT_SRAM_CAPACITY: usize = 1_572_864;
pub const DEFAULT_RESERVED_OVERHEAD: usize = 180_224;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CoreCoord {
    pub x: usize,
    pub y: usize,
}

impl CoreCoord {
    pub const fn new(x: usize, y: usize) -> Self {
        CoreCoord { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridDims {
    pub width: usize,
    pub height: usize,
}

impl GridDims {
    pub const fn new(width: usize, height: usize) -> Self {
        GridDims { width, height }
    }

    pub fn check(&self, c: CoreCoord) -> Result<()> {
        if c.x < self.width && c.y < self.height {
            Ok(())
        } else {
            Err(Error::CoreOutOfGrid {
                x: c.x,
                y: c.y,
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Row-major index of `c`.
    pub fn index(&self, c: CoreCoord) -> usize {
        c.y * self.width + c.x
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rect(&self) -> CoreRect {
        CoreRect::new(0, 0, self.width, self.height)
    }
}

/// Axis-aligned rectangle of cores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoreRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl CoreRect {
    pub const fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        CoreRect {
            x0,
            y0,
            width,
            height,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, c: CoreCoord) -> bool {
        c.x >= self.x0
            && c.x < self.x0 + self.width
            && c.y >= self.y0
            && c.y < self.y0 + self.height
    }

    /// Row-major position of `c` within the rectangle.
    pub fn index_of(&self, c: CoreCoord) -> Option<usize> {
        self.contains(c)
            .then(|| (c.y - self.y0) * self.width + (c.x - self.x0))
    }

    pub fn coord(&self, i: usize) -> CoreCoord {
        CoreCoord::new(self.x0 + i % self.width, self.y0 + i / self.width)
    }

    /// Cores in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = CoreCoord> + '_ {
        let r = *self;
        (0..r.len()).map(move |i| r.coord(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecMode {
    /// Store data and compute values.
    Full,
    /// Account cycles only.
    CostOnly,
}

/// Order in which the executor polls tasks. Results must not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulePolicy {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub grid: GridDims,
    pub noc: NocConfig,
    pub sram_capacity: usize,
    pub reserved_overhead: usize,
    /// Aggregate DRAM bandwidth in bytes/cycle.
    pub dram_bandwidth: u64,
    pub cost: CostParams,
    pub exec: ExecMode,
    pub schedule: SchedulePolicy,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            grid: GridDims::new(MAX_GRID_WIDTH, MAX_GRID_HEIGHT),
            noc: NocConfig::default(),
            sram_capacity: DEFAULT_SRAM_CAPACITY,
            reserved_overhead: DEFAULT_RESERVED_OVERHEAD,
            dram_bandwidth: 64,
            cost: CostParams::default(),
            exec: ExecMode::Full,
            schedule: SchedulePolicy::Forward,
        }
    }
}

impl DeviceConfig {
    pub fn with_grid(mut self, width: usize, height: usize) -> Self {
        self.grid = GridDims::new(width, height);
        self
    }

    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.grid.width == 0 || self.grid.width > MAX_GRID_WIDTH {
            return bad("grid.width must be in 1..=8");
        }
        if self.grid.height == 0 || self.grid.height > MAX_GRID_HEIGHT {
            return bad("grid.height must be in 1..=7");
        }
        if self.noc.hop_latency == 0 || self.noc.link_bandwidth == 0 {
            return bad("noc parameters must be positive");
        }
        if self.dram_bandwidth == 0 {
            return bad("dram.bandwidth must be positive");
        }
        if self.reserved_overhead >= self.sram_capacity {
            return bad("sram.reserved_overhead must be below sram.capacity");
        }
        Ok(())
    }

    /// SRAM available to buffers on each core.
    pub fn sram_available(&self) -> usize {
        self.sram_capacity - self.reserved_overhead
    }
}

/// A simulated device. Clocks, ledgers and traces persist across programs.
#[derive(Debug, Clone)]
pub struct Device {
    cfg: DeviceConfig,
    clocks: Vec<u64>,
    ledgers: Vec<[CostLedger; 3]>,
    trace: Vec<TraceZone>,
    dram: Dram,
}

impl Device {
    pub fn new(cfg: DeviceConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.grid.len();
        let dram = Dram::new(cfg.exec == ExecMode::Full);
        Ok(Device {
            clocks: vec![0; n],
            ledgers: vec![[CostLedger::new(); 3]; n],
            trace: Vec::new(),
            dram,
            cfg,
        })
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.cfg
    }

    pub fn grid(&self) -> GridDims {
        self.cfg.grid
    }

    pub fn exec_mode(&self) -> ExecMode {
        self.cfg.exec
    }

    pub fn cost(&self) -> &CostParams {
        &self.cfg.cost
    }

    pub fn sram_available(&self) -> usize {
        self.cfg.sram_available()
    }

    pub fn clock(&self, c: CoreCoord) -> u64 {
        self.clocks[self.cfg.grid.index(c)]
    }

    /// Latest core clock in `rect`.
    pub fn max_clock(&self, rect: CoreRect) -> u64 {
        rect.iter().map(|c| self.clock(c)).max().unwrap_or(0)
    }

    /// Accumulated ledger of one core, all tasks.
    pub fn core_ledger(&self, c: CoreCoord) -> CostLedger {
        self.ledgers[self.cfg.grid.index(c)]
            .iter()
            .fold(CostLedger::new(), |a, &b| a + b)
    }

    pub fn task_ledger(&self, c: CoreCoord, kind: TaskKind) -> CostLedger {
        self.ledgers[self.cfg.grid.index(c)][kind as usize]
    }

    pub fn trace(&self) -> &[TraceZone] {
        &self.trace
    }

    pub fn dram(&self) -> &Dram {
        &self.dram
    }

    pub fn dram_mut(&mut self) -> &mut Dram {
        &mut self.dram
    }

    /// Charges `cycles` of `cat` to the compute task of every core in `rect`.
    pub fn charge_cores(&mut self, rect: CoreRect, cat: Category, cycles: u64) {
        for c in rect.iter() {
            let i = self.cfg.grid.index(c);
            self.ledgers[i][TaskKind::Compute as usize].charge(cat, cycles);
            self.clocks[i] += cycles;
        }
    }

    /// Synchronizes `rect` to its latest clock, then adds `overhead` cycles.
    pub fn barrier(&mut self, rect: CoreRect, overhead: u64) {
        let t = self.max_clock(rect);
        for c in rect.iter() {
            let i = self.cfg.grid.index(c);
            self.ledgers[i][TaskKind::Compute as usize].charge(Category::Idle, t - self.clocks[i]);
            self.clocks[i] = t;
        }
        self.charge_cores(rect, Category::Other, overhead);
    }
}
