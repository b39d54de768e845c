//! Programs and the cooperative task executor.

use alloc::boxed::Box;
use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::future::{poll_fn, Future};
use core::pin::Pin;
use core::task::{Context, Poll, Waker};

use super::cb::{Cb, CbSpec};
use super::dram::Dram;
use super::noc::NocConfig;
use super::trace::{TaskKind, TraceZone};
use super::{CoreCoord, CoreRect, Device, ExecMode, GridDims, SchedulePolicy};
use crate::costmodel::{Category, CostLedger, CostParams, OpCost, TileOpKind, Unit};
use crate::error::{Error, Result};
use crate::numerics::{ScalarFmt, Tile, TileShape};

pub type TaskFuture = Pin<Box<dyn Future<Output = Result<()>>>>;
type TaskFactory = Box<dyn FnOnce(TaskCtx) -> TaskFuture>;

/// Handle to a circular buffer declared on every core of a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CbId(usize);

/// A set of per-core reader/compute/writer tasks over a core rectangle.
pub struct Program {
    name: String,
    rect: CoreRect,
    cbs: Vec<CbSpec>,
    tasks: Vec<(CoreCoord, TaskKind, TaskFactory)>,
    resident_bytes: usize,
    dram_streams: usize,
}

impl Program {
    pub fn new(name: impl Into<String>, rect: CoreRect) -> Self {
        Program {
            name: name.into(),
            rect,
            cbs: Vec::new(),
            tasks: Vec::new(),
            resident_bytes: 0,
            dram_streams: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rect(&self) -> CoreRect {
        self.rect
    }

    /// Declares a circular buffer present on every core of the program.
    pub fn add_cb(&mut self, spec: CbSpec) -> CbId {
        self.cbs.push(spec);
        CbId(self.cbs.len() - 1)
    }

    pub fn cbs(&self) -> &[CbSpec] {
        &self.cbs
    }

    /// SRAM held per core by data that outlives the program (resident vectors).
    pub fn set_resident_bytes(&mut self, bytes: usize) {
        self.resident_bytes = bytes;
    }

    /// Number of cores streaming from DRAM concurrently (for bandwidth sharing).
    pub fn set_dram_streams(&mut self, cores: usize) {
        self.dram_streams = cores;
    }

    /// Per-core SRAM needed: resident data plus every CB region.
    pub fn sram_footprint(&self) -> usize {
        self.resident_bytes + self.cbs.iter().map(CbSpec::region_bytes).sum::<usize>()
    }

    pub fn task<F, Fut>(&mut self, core: CoreCoord, kind: TaskKind, f: F)
    where
        F: FnOnce(TaskCtx) -> Fut + 'static,
        Fut: Future<Output = Result<()>> + 'static,
    {
        self.tasks.push((
            core,
            kind,
            Box::new(move |ctx| Box::pin(f(ctx)) as TaskFuture),
        ));
    }
}

/// Outcome of one program run.
#[derive(Debug, Clone)]
pub struct RunStats {
    pub rect: CoreRect,
    /// Earliest task start over the rectangle.
    pub start: u64,
    /// Latest task end over the rectangle.
    pub end: u64,
    /// Per-core, per-task ledgers for this run, indexed like `rect`.
    pub ledgers: Vec<[CostLedger; 3]>,
    /// Per-core (start, end) clocks.
    pub core_span: Vec<(u64, u64)>,
}

impl RunStats {
    pub fn cycles(&self) -> u64 {
        self.end - self.start
    }

    pub fn core_ledger(&self, i: usize) -> CostLedger {
        self.ledgers[i]
            .iter()
            .fold(CostLedger::new(), |a, &b| a + b)
    }
}

struct SimState {
    grid: GridDims,
    rect: CoreRect,
    noc: NocConfig,
    cost: CostParams,
    mode: ExecMode,
    dram_bw: u64,
    dram_streams: usize,
    dram: Dram,
    cbs: Vec<Vec<Cb>>,
    clocks: Vec<[u64; 3]>,
    ledgers: Vec<[CostLedger; 3]>,
    blocked: Vec<[Option<String>; 3]>,
    progress: u64,
}

impl SimState {
    fn advance_to(&mut self, core: usize, kind: TaskKind, t: u64) {
        let k = kind as usize;
        let now = self.clocks[core][k];
        if t > now {
            self.ledgers[core][k].charge(Category::Idle, t - now);
            self.clocks[core][k] = t;
        }
    }

    fn charge(&mut self, core: usize, kind: TaskKind, cat: Category, cycles: u64) {
        let k = kind as usize;
        self.ledgers[core][k].charge(cat, cycles);
        self.clocks[core][k] += cycles;
    }
}

/// A task's view of the running simulation.
#[derive(Clone)]
pub struct TaskCtx {
    st: Rc<RefCell<SimState>>,
    core: usize,
    coord: CoreCoord,
    kind: TaskKind,
}

impl TaskCtx {
    pub fn coord(&self) -> CoreCoord {
        self.coord
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    /// False in cost-only mode, where no data is stored or computed.
    pub fn is_full(&self) -> bool {
        self.st.borrow().mode == ExecMode::Full
    }

    pub fn cost_params(&self) -> CostParams {
        self.st.borrow().cost.clone()
    }

    pub fn clock(&self) -> u64 {
        self.st.borrow().clocks[self.core][self.kind as usize]
    }

    pub fn charge(&self, cat: Category, cycles: u64) {
        self.st
            .borrow_mut()
            .charge(self.core, self.kind, cat, cycles);
    }

    /// Charges the exposed cycles of `op` and returns its elapsed cycles.
    pub fn charge_op(&self, op: &OpCost) -> u64 {
        let mut st = self.st.borrow_mut();
        let k = self.kind as usize;
        let c = st.ledgers[self.core][k].charge_op(op);
        st.clocks[self.core][k] += c;
        c
    }

    /// Charges one tile operation; `issue == false` skips the issue overhead
    /// for ops batched behind an earlier issue.
    pub fn charge_tile_op(
        &self,
        kind: TileOpKind,
        unit: Unit,
        fmt: ScalarFmt,
        issue: bool,
    ) -> Result<u64> {
        let mut op = self.st.borrow().cost.tile_op(kind, unit, fmt)?;
        if !issue {
            op.issue = 0;
        }
        Ok(self.charge_op(&op))
    }

    /// Charges a local SRAM-to-CB move of `len` bytes.
    pub fn charge_sram_move(&self, len: usize) {
        let mut st = self.st.borrow_mut();
        let c = st.noc.transfer_cycles(len);
        st.charge(self.core, self.kind, Category::Noc, c);
        st.ledgers[self.core][self.kind as usize].bytes_moved += len as u64;
    }

    fn block(&self, st: &mut SimState, why: String) {
        st.blocked[self.core][self.kind as usize] = Some(why);
    }

    fn unblock(&self, st: &mut SimState) {
        st.blocked[self.core][self.kind as usize] = None;
    }

    fn check_request(&self, core: usize, cb: CbId, n: usize) -> Result<()> {
        self.st.borrow().cbs[core][cb.0].check_request(n)
    }

    /// Waits until `n` pages are free for writing.
    pub async fn reserve_back(&self, cb: CbId, n: usize) -> Result<()> {
        self.check_request(self.core, cb, n)?;
        poll_fn(|_| {
            let mut st = self.st.borrow_mut();
            let c = &st.cbs[self.core][cb.0];
            if c.free() >= n {
                let t = c.back_free(n);
                st.advance_to(self.core, self.kind, t);
                self.unblock(&mut st);
                Poll::Ready(Ok(()))
            } else {
                let why = format!("reserve_back {} on {}", n, c.describe());
                self.block(&mut st, why);
                Poll::Pending
            }
        })
        .await
    }

    /// Publishes `n` written pages to the consumer.
    pub fn push_back(&self, cb: CbId, n: usize) -> Result<()> {
        let mut st = self.st.borrow_mut();
        let t = st.clocks[self.core][self.kind as usize];
        st.cbs[self.core][cb.0].push(n, t)?;
        st.progress += 1;
        Ok(())
    }

    /// Waits until `n` pages are readable.
    pub async fn wait_front(&self, cb: CbId, n: usize) -> Result<()> {
        self.check_request(self.core, cb, n)?;
        poll_fn(|_| {
            let mut st = self.st.borrow_mut();
            let c = &st.cbs[self.core][cb.0];
            if c.occupied() >= n {
                let t = c.front_ready(n);
                st.advance_to(self.core, self.kind, t);
                self.unblock(&mut st);
                Poll::Ready(Ok(()))
            } else {
                let why = format!("wait_front {} on {}", n, c.describe());
                self.block(&mut st, why);
                Poll::Pending
            }
        })
        .await
    }

    /// Releases `n` consumed pages back to the producer.
    pub fn pop_front(&self, cb: CbId, n: usize) -> Result<()> {
        let mut st = self.st.borrow_mut();
        let t = st.clocks[self.core][self.kind as usize];
        st.cbs[self.core][cb.0].pop(n, t)?;
        st.progress += 1;
        Ok(())
    }

    pub fn offset_read_ptr(&self, cb: CbId, delta: i64) -> Result<()> {
        self.st.borrow_mut().cbs[self.core][cb.0].offset_read_ptr(delta)
    }

    pub fn read_ptr(&self, cb: CbId) -> i64 {
        self.st.borrow().cbs[self.core][cb.0].read_ptr()
    }

    pub fn write_page(&self, cb: CbId, i: usize, bytes: &[u8]) -> Result<()> {
        self.st.borrow_mut().cbs[self.core][cb.0].write_page(i, bytes)
    }

    pub fn write_tile(&self, cb: CbId, i: usize, t: &Tile) -> Result<()> {
        self.write_page(cb, i, &t.linearize())
    }

    pub fn read_page(&self, cb: CbId, i: usize) -> Result<Vec<u8>> {
        Ok(self.st.borrow().cbs[self.core][cb.0].read_page(i)?.to_vec())
    }

    pub fn read_tile(&self, cb: CbId, i: usize, shape: TileShape, fmt: ScalarFmt) -> Result<Tile> {
        let st = self.st.borrow();
        Tile::delinearize(st.cbs[self.core][cb.0].read_page(i)?, shape, fmt)
    }

    fn local_index(&self, st: &SimState, c: CoreCoord) -> Result<usize> {
        st.grid.check(c)?;
        st.rect.index_of(c).ok_or(Error::CoreOutOfGrid {
            x: c.x,
            y: c.y,
            width: st.rect.width,
            height: st.rect.height,
        })
    }

    /// Writes one page into `cb` on core `dst` and pushes it there.
    ///
    /// Waits for a free slot at the destination, charges the sender the full
    /// transfer, and stamps the page with the sender's clock afterwards.
    pub async fn send_page(
        &self,
        dst: CoreCoord,
        cb: CbId,
        payload: Option<&[u8]>,
        len: usize,
    ) -> Result<()> {
        let (d, cost) = {
            let st = self.st.borrow();
            let d = self.local_index(&st, dst)?;
            (d, st.noc.unicast_cost(st.grid, self.coord, dst, len)?)
        };
        self.check_request(d, cb, 1)?;
        poll_fn(|_| {
            let mut st = self.st.borrow_mut();
            let c = &st.cbs[d][cb.0];
            if c.free() >= 1 {
                let t = c.back_free(1);
                st.advance_to(self.core, self.kind, t);
                st.charge(self.core, self.kind, Category::Noc, cost);
                st.ledgers[self.core][self.kind as usize].bytes_moved += len as u64;
                let stamp = st.clocks[self.core][self.kind as usize];
                let c = &mut st.cbs[d][cb.0];
                if let Some(p) = payload {
                    c.write_page(0, p)?;
                }
                c.push(1, stamp)?;
                st.progress += 1;
                self.unblock(&mut st);
                Poll::Ready(Ok(()))
            } else {
                let why = format!("send to ({},{}) {}", dst.x, dst.y, c.describe());
                self.block(&mut st, why);
                Poll::Pending
            }
        })
        .await
    }

    /// Delivers one page into `cb` on every core of `rect`.
    pub async fn multicast_page(
        &self,
        rect: CoreRect,
        cb: CbId,
        payload: Option<&[u8]>,
        len: usize,
    ) -> Result<()> {
        let (dsts, cost) = {
            let st = self.st.borrow();
            let cost = st.noc.multicast_cost(st.grid, self.coord, rect, len)?;
            let dsts = rect
                .iter()
                .map(|c| self.local_index(&st, c))
                .collect::<Result<Vec<_>>>()?;
            (dsts, cost)
        };
        for &d in &dsts {
            self.check_request(d, cb, 1)?;
        }
        poll_fn(|_| {
            let mut st = self.st.borrow_mut();
            if let Some(&d) = dsts.iter().find(|&&d| st.cbs[d][cb.0].free() == 0) {
                let why = format!("multicast into {}", st.cbs[d][cb.0].describe());
                self.block(&mut st, why);
                return Poll::Pending;
            }
            let t = dsts
                .iter()
                .map(|&d| st.cbs[d][cb.0].back_free(1))
                .max()
                .unwrap_or(0);
            st.advance_to(self.core, self.kind, t);
            st.charge(self.core, self.kind, Category::Noc, cost);
            st.ledgers[self.core][self.kind as usize].bytes_moved += (len * dsts.len()) as u64;
            let stamp = st.clocks[self.core][self.kind as usize];
            for &d in &dsts {
                let c = &mut st.cbs[d][cb.0];
                if let Some(p) = payload {
                    c.write_page(0, p)?;
                }
                c.push(1, stamp)?;
            }
            st.progress += 1;
            self.unblock(&mut st);
            Poll::Ready(Ok(()))
        })
        .await
    }

    /// Reads from DRAM, charging this core's share of the endpoint bandwidth.
    pub fn dram_read(&self, addr: usize, len: usize) -> Result<Option<Vec<u8>>> {
        let mut st = self.st.borrow_mut();
        let data = st.dram.read(addr, len)?.map(|b| b.to_vec());
        let c = Dram::transfer_cycles(st.dram_bw, len, st.dram_streams);
        st.charge(self.core, self.kind, Category::Dram, c);
        st.ledgers[self.core][self.kind as usize].bytes_moved += len as u64;
        Ok(data)
    }

    pub fn dram_write(&self, addr: usize, data: &[u8]) -> Result<()> {
        let mut st = self.st.borrow_mut();
        st.dram.write(addr, data)?;
        let c = Dram::transfer_cycles(st.dram_bw, data.len(), st.dram_streams);
        st.charge(self.core, self.kind, Category::Dram, c);
        st.ledgers[self.core][self.kind as usize].bytes_moved += data.len() as u64;
        Ok(())
    }
}

struct Slot {
    core: usize,
    kind: TaskKind,
    fut: Option<TaskFuture>,
}

impl Device {
    /// Runs `prog` to completion.
    ///
    /// Every task starts at its core's current clock. Tasks are polled in a
    /// fixed order and yield only when blocked on a buffer; a full sweep with
    /// no buffer movement and no task completion is reported as a deadlock.
    pub fn run(&mut self, prog: Program) -> Result<RunStats> {
        let Program {
            name,
            rect,
            cbs,
            tasks,
            resident_bytes,
            dram_streams,
        } = prog;
        let grid = self.cfg.grid;
        if rect.is_empty() {
            return Err(Error::EmptyRect);
        }
        for c in [
            CoreCoord::new(rect.x0, rect.y0),
            CoreCoord::new(rect.x0 + rect.width - 1, rect.y0 + rect.height - 1),
        ] {
            grid.check(c)?;
        }
        for spec in &cbs {
            spec.validate()?;
        }
        let needed = resident_bytes + cbs.iter().map(CbSpec::region_bytes).sum::<usize>();
        let available = self.sram_available();
        if needed > available {
            return Err(Error::SramBudget { needed, available });
        }

        let n = rect.len();
        let materialized = self.cfg.exec == ExecMode::Full;
        let starts: Vec<u64> = rect.iter().map(|c| self.clocks[grid.index(c)]).collect();
        let st = Rc::new(RefCell::new(SimState {
            grid,
            rect,
            noc: self.cfg.noc,
            cost: self.cfg.cost.clone(),
            mode: self.cfg.exec,
            dram_bw: self.cfg.dram_bandwidth,
            dram_streams,
            dram: core::mem::take(&mut self.dram),
            cbs: (0..n)
                .map(|_| {
                    cbs.iter()
                        .map(|s| Cb::new(s.clone(), materialized))
                        .collect()
                })
                .collect(),
            clocks: starts.iter().map(|&s| [s; 3]).collect(),
            ledgers: vec![[CostLedger::new(); 3]; n],
            blocked: vec![[None, None, None]; n],
            progress: 0,
        }));

        let mut slots = Vec::with_capacity(tasks.len());
        for (coord, kind, factory) in tasks {
            let core = rect.index_of(coord).ok_or(Error::CoreOutOfGrid {
                x: coord.x,
                y: coord.y,
                width: rect.width,
                height: rect.height,
            })?;
            let ctx = TaskCtx {
                st: st.clone(),
                core,
                coord,
                kind,
            };
            slots.push(Slot {
                core,
                kind,
                fut: Some(factory(ctx)),
            });
        }
        let mut present = vec![[false; 3]; n];
        for s in &slots {
            present[s.core][s.kind as usize] = true;
        }
        slots.sort_by_key(|s| (s.core, s.kind));
        if self.cfg.schedule == SchedulePolicy::Reverse {
            slots.reverse();
        }

        let result = drive(&st, &mut slots);
        drop(slots);
        let st = Rc::try_unwrap(st).ok().expect("tasks dropped").into_inner();
        self.dram = st.dram;
        result?;

        let mut core_span = Vec::with_capacity(n);
        for (i, c) in rect.iter().enumerate() {
            let end = st.clocks[i].iter().copied().max().unwrap_or(starts[i]);
            let gi = grid.index(c);
            self.clocks[gi] = end;
            for k in 0..3 {
                self.ledgers[gi][k] += st.ledgers[i][k];
            }
            core_span.push((starts[i], end));
        }
        for (i, c) in rect.iter().enumerate() {
            for kind in TaskKind::ALL {
                if present[i][kind as usize] {
                    self.trace.push(TraceZone {
                        core: c,
                        task: kind,
                        label: name.clone(),
                        start_cycle: starts[i],
                        end_cycle: st.clocks[i][kind as usize],
                    });
                }
            }
        }
        let start = starts.iter().copied().min().unwrap_or(0);
        let end = core_span.iter().map(|s| s.1).max().unwrap_or(start);
        Ok(RunStats {
            rect,
            start,
            end,
            ledgers: st.ledgers,
            core_span,
        })
    }
}

fn drive(st: &Rc<RefCell<SimState>>, slots: &mut [Slot]) -> Result<()> {
    let mut cx = Context::from_waker(Waker::noop());
    loop {
        let before = st.borrow().progress;
        let mut live = 0;
        for slot in slots.iter_mut() {
            let Some(fut) = slot.fut.as_mut() else {
                continue;
            };
            match fut.as_mut().poll(&mut cx) {
                Poll::Ready(Ok(())) => {
                    slot.fut = None;
                    st.borrow_mut().progress += 1;
                }
                Poll::Ready(Err(e)) => return Err(e),
                Poll::Pending => live += 1,
            }
        }
        if live == 0 {
            return Ok(());
        }
        if st.borrow().progress == before {
            let s = st.borrow();
            let mut msg = String::new();
            for slot in slots.iter().filter(|s| s.fut.is_some()) {
                let c = s.rect.coord(slot.core);
                let why = s.blocked[slot.core][slot.kind as usize]
                    .as_deref()
                    .unwrap_or("not started");
                if !msg.is_empty() {
                    msg.push_str("; ");
                }
                msg.push_str(&format!(
                    "core ({},{}) {} blocked: {}",
                    c.x,
                    c.y,
                    slot.kind.name(),
                    why
                ));
            }
            return Err(Error::Deadlock(msg));
        }
    }
}
