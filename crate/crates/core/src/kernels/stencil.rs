//! 7-point stencil on a grid distributed as columns of 64x16 tiles.
//!
//! Every layer `k` runs the same protocol on each core:
//!
//! * compute, phase A: transpose the tiles on the east/west core boundary and
//!   queue their edge rows (four 16-element rows per side) on `ew_out`;
//! * writer: send north/south boundary rows straight from the resident input,
//!   then forward the queued east/west rows, then drain the layer's outputs;
//! * compute, phase B: per tile, combine the centre with the vertical
//!   neighbours and the four shifted views, filling view halos from the
//!   neighbouring tile, an inbox, or zeros at the domain edge.
//!
//! Inboxes hold two layers of rows and `ew_out` one layer, which is enough
//! for the slowest core to always make progress.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::shift::ew_halo_rows;
use super::{
    check_scalar, Alu, DistVector, GridDistribution, KernelOpts, Launch, Residency, Sink, Source,
    Val, VEC_SHAPE,
};
use crate::costmodel::Category;
use crate::device::{CbId, CbSpec, CoreCoord, Device, Program, TaskCtx, TaskKind};
use crate::error::{Error, Result};
use crate::numerics::{image_size, ScalarFmt, ShiftDir, Tile, SUBTILE};

const ROWS: usize = 64;
const COLS: usize = 16;

/// Stencil weights. Array order is west, north, below, center, east, south, above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilCoeffs {
    pub west: f32,
    pub north: f32,
    pub below: f32,
    pub center: f32,
    pub east: f32,
    pub south: f32,
    pub above: f32,
}

impl StencilCoeffs {
    pub fn from_array(c: [f32; 7]) -> Self {
        StencilCoeffs {
            west: c[0],
            north: c[1],
            below: c[2],
            center: c[3],
            east: c[4],
            south: c[5],
            above: c[6],
        }
    }

    pub fn to_array(&self) -> [f32; 7] {
        [
            self.west,
            self.north,
            self.below,
            self.center,
            self.east,
            self.south,
            self.above,
        ]
    }

    /// Standard 7-point Laplacian `[-1, -1, -1, 6, -1, -1, -1]`.
    pub fn laplacian() -> Self {
        Self::from_array([-1.0, -1.0, -1.0, 6.0, -1.0, -1.0, -1.0])
    }

    pub fn check(&self, fmt: ScalarFmt) -> Result<()> {
        self.to_array()
            .iter()
            .try_for_each(|&c| check_scalar(c, fmt))
    }
}

/// Which parts of the boundary handling run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StencilVariant {
    Full,
    /// Cross-core halos are left zero; no exchange traffic.
    NoHalo,
    /// Domain-edge halos are zeroed without charge.
    NoZeroFill,
    Neither,
}

impl StencilVariant {
    pub const ALL: [StencilVariant; 4] = [
        StencilVariant::Full,
        StencilVariant::NoHalo,
        StencilVariant::NoZeroFill,
        StencilVariant::Neither,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StencilVariant::Full => "full",
            StencilVariant::NoHalo => "no_halo",
            StencilVariant::NoZeroFill => "no_zero_fill",
            StencilVariant::Neither => "neither",
        }
    }

    pub fn exchanges_halo(self) -> bool {
        matches!(self, StencilVariant::Full | StencilVariant::NoZeroFill)
    }

    pub fn charges_zero_fill(self) -> bool {
        matches!(self, StencilVariant::Full | StencilVariant::NoHalo)
    }
}

/// Halo values received for one tile: rows of 16 (north, south) and columns
/// of 64 (west, east).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TileHalos {
    pub north: Vec<f32>,
    pub south: Vec<f32>,
    pub west: Vec<f32>,
    pub east: Vec<f32>,
}

/// Halos of every tile, indexed `[core][tile]`.
pub type HaloSet = Vec<Vec<TileHalos>>;

#[derive(Debug, Clone, Copy)]
struct Geom {
    core: usize,
    tx_n: usize,
    ty_n: usize,
    nz: usize,
    north: Option<CoreCoord>,
    south: Option<CoreCoord>,
    west: Option<CoreCoord>,
    east: Option<CoreCoord>,
    exchange: bool,
}

enum HaloSrc {
    Local(usize),
    Inbox,
    Edge,
}

impl Geom {
    fn tile(&self, tx: usize, ty: usize, k: usize) -> usize {
        (ty * self.tx_n + tx) * self.nz + k
    }

    fn src(&self, dir: ShiftDir, tx: usize, ty: usize, k: usize) -> HaloSrc {
        let (local, nb) = match dir {
            ShiftDir::North => (
                (ty > 0).then(|| self.tile(tx, ty.wrapping_sub(1), k)),
                self.north,
            ),
            ShiftDir::South => (
                (ty + 1 < self.ty_n).then(|| self.tile(tx, ty + 1, k)),
                self.south,
            ),
            ShiftDir::West => (
                (tx > 0).then(|| self.tile(tx.wrapping_sub(1), ty, k)),
                self.west,
            ),
            ShiftDir::East => (
                (tx + 1 < self.tx_n).then(|| self.tile(tx + 1, ty, k)),
                self.east,
            ),
        };
        match (local, nb) {
            (Some(t), _) => HaloSrc::Local(t),
            (None, Some(_)) => HaloSrc::Inbox,
            (None, None) => HaloSrc::Edge,
        }
    }

    /// Tiles whose transposed edge rows are queued in phase A of a layer, in
    /// send order, with the side they go to.
    fn ew_sends(&self, k: usize) -> Vec<(usize, ShiftDir)> {
        let mut v = Vec::new();
        if !self.exchange {
            return v;
        }
        for ty in 0..self.ty_n {
            if self.west.is_some() {
                v.push((self.tile(0, ty, k), ShiftDir::West));
            }
            if self.east.is_some() {
                v.push((self.tile(self.tx_n - 1, ty, k), ShiftDir::East));
            }
        }
        v
    }
}

fn halo_len(dir: ShiftDir) -> usize {
    match dir {
        ShiftDir::North | ShiftDir::South => COLS,
        ShiftDir::East | ShiftDir::West => ROWS,
    }
}

/// Boundary slice of `t` facing `side`, as seen by the neighbour on that side.
fn edge_slice(t: &Tile, side: ShiftDir) -> Vec<f32> {
    match side {
        ShiftDir::North => t.row(0).to_vec(),
        ShiftDir::South => t.row(ROWS - 1).to_vec(),
        ShiftDir::West => t.column(0),
        ShiftDir::East => t.column(COLS - 1),
    }
}

fn opposite(d: ShiftDir) -> ShiftDir {
    match d {
        ShiftDir::North => ShiftDir::South,
        ShiftDir::South => ShiftDir::North,
        ShiftDir::East => ShiftDir::West,
        ShiftDir::West => ShiftDir::East,
    }
}

fn encode(values: &[f32], fmt: ScalarFmt) -> Vec<u8> {
    let w = fmt.byte_width();
    let mut out = vec![0u8; values.len() * w];
    for (v, ch) in values.iter().zip(out.chunks_exact_mut(w)) {
        fmt.write_le(*v, ch);
    }
    out
}

fn decode(bytes: &[u8], fmt: ScalarFmt) -> Vec<f32> {
    bytes
        .chunks_exact(fmt.byte_width())
        .map(|ch| fmt.read_le(ch))
        .collect()
}

struct Cbs {
    ctr: CbId,
    vert: CbId,
    tr: CbId,
    inbox: [CbId; 4],
    ew_out: CbId,
    out: CbId,
}

impl Cbs {
    /// Inbox on the receiving core for halos arriving from `dir`.
    fn inbox(&self, dir: ShiftDir) -> CbId {
        self.inbox[dir as usize]
    }
}

/// `out = A u` for the 7-point operator `coeffs` with zero Dirichlet boundaries.
///
/// Per point the sum is accumulated as center, below, above, north, south,
/// west, east, each term scaled before it is added.
pub fn stencil_apply(
    dev: &mut Device,
    grid: &GridDistribution,
    u: &DistVector,
    coeffs: &StencilCoeffs,
    variant: StencilVariant,
    opts: KernelOpts,
) -> Result<Launch<DistVector>> {
    let (out, _, stats) = run(dev, grid, u, Some(coeffs), variant, opts)?;
    Ok(Launch {
        out: out.expect("apply produces output"),
        stats,
    })
}

/// Runs only the halo exchange and returns the halo every tile receives.
pub fn halo_exchange(
    dev: &mut Device,
    grid: &GridDistribution,
    u: &DistVector,
    variant: StencilVariant,
    opts: KernelOpts,
) -> Result<Launch<Option<HaloSet>>> {
    let (_, halos, stats) = run(dev, grid, u, None, variant, opts)?;
    Ok(Launch { out: halos, stats })
}

type RunOut = (Option<DistVector>, Option<HaloSet>, crate::device::RunStats);

fn run(
    dev: &mut Device,
    grid: &GridDistribution,
    u: &DistVector,
    coeffs: Option<&StencilCoeffs>,
    variant: StencilVariant,
    opts: KernelOpts,
) -> Result<RunOut> {
    let layout = grid.layout();
    if u.layout() != layout {
        return Err(Error::LayoutMismatch);
    }
    let fmt = u.fmt();
    if let Some(c) = coeffs {
        c.check(fmt)?;
    }
    let coeffs = coeffs.copied();
    let apply = coeffs.is_some();
    let full = dev.exec_mode() == crate::device::ExecMode::Full;
    let page = image_size(fmt);
    let row = VEC_SHAPE.row_bytes(fmt);
    let (tx_n, ty_n, nz) = (grid.tiles_x(), grid.tiles_y(), grid.nz);
    let src = Source::new(dev, u, opts.residency)?;
    let sink = apply.then(|| Sink::new(dev, layout, fmt, Residency::Sram));
    let halos: Option<Rc<RefCell<HaloSet>>> = (!apply && full).then(|| {
        Rc::new(RefCell::new(vec![
            vec![
                TileHalos::default();
                layout.tiles_per_core
            ];
            layout.rect.len()
        ]))
    });

    let mut p = Program::new(if apply { "stencil" } else { "halo" }, layout.rect);
    p.set_resident_bytes(opts.resident_bytes);
    if opts.residency == Residency::Dram {
        p.set_dram_streams(layout.rect.len());
    }
    let cbs = Rc::new(Cbs {
        ctr: p.add_cb(CbSpec::new("ctr", page, 2).with_guards(1)),
        vert: p.add_cb(CbSpec::new("vert", page, 4)),
        tr: p.add_cb(CbSpec::new("tr", page, 1).with_guards(1)),
        inbox: [
            p.add_cb(CbSpec::new("h_n", row, 2 * tx_n)),
            p.add_cb(CbSpec::new("h_s", row, 2 * tx_n)),
            p.add_cb(CbSpec::new("h_e", row, 8 * ty_n)),
            p.add_cb(CbSpec::new("h_w", row, 8 * ty_n)),
        ],
        ew_out: p.add_cb(CbSpec::new("ew_out", row, 8 * ty_n)),
        out: p.add_cb(CbSpec::new("out", page, 2)),
    });

    for (core, coord) in layout.rect.iter().enumerate() {
        let g = Geom {
            core,
            tx_n,
            ty_n,
            nz,
            north: grid.neighbor(coord, 0, -1),
            south: grid.neighbor(coord, 0, 1),
            west: grid.neighbor(coord, -1, 0),
            east: grid.neighbor(coord, 1, 0),
            exchange: variant.exchanges_halo(),
        };

        if apply {
            let (src, cbs) = (src.clone(), cbs.clone());
            p.task(coord, TaskKind::Reader, move |ctx| async move {
                let zero = full.then(|| Tile::zeros(VEC_SHAPE, fmt));
                for k in 0..nz {
                    for ty in 0..ty_n {
                        for tx in 0..tx_n {
                            ctx.reserve_back(cbs.ctr, 1).await?;
                            if let Some(t) = src.load(&ctx, core, g.tile(tx, ty, k))? {
                                ctx.write_tile(cbs.ctr, 0, &t)?;
                            }
                            ctx.push_back(cbs.ctr, 1)?;
                            ctx.reserve_back(cbs.vert, 2).await?;
                            for (i, kk) in [k.checked_sub(1), (k + 1 < nz).then_some(k + 1)]
                                .into_iter()
                                .enumerate()
                            {
                                let t = match kk {
                                    Some(kk) => src.load(&ctx, core, g.tile(tx, ty, kk))?,
                                    None => zero.clone(),
                                };
                                if let Some(t) = t {
                                    ctx.write_tile(cbs.vert, i, &t)?;
                                }
                            }
                            ctx.push_back(cbs.vert, 2)?;
                        }
                    }
                }
                Ok(())
            });
        }

        {
            let (src, cbs, halos) = (src.clone(), cbs.clone(), halos.clone());
            p.task(coord, TaskKind::Compute, move |ctx| async move {
                let alu = Alu::new(ctx.clone(), opts.unit, fmt);
                let mut n_issued = 0usize;
                for k in 0..nz {
                    // Phase A.
                    let mut last: Option<(usize, Val)> = None;
                    for (t, side) in g.ew_sends(k) {
                        let tr = match &last {
                            Some((lt, v)) if *lt == t => v.clone(),
                            _ => {
                                alu.set_issue(n_issued.is_multiple_of(opts.block));
                                n_issued += 1;
                                let v = alu.transpose(&src.peek(core, t).cloned())?;
                                last = Some((t, v.clone()));
                                v
                            }
                        };
                        ctx.reserve_back(cbs.ew_out, 4).await?;
                        if let Some(tr) = &tr {
                            for (i, r) in ew_halo_rows(side).into_iter().enumerate() {
                                ctx.write_page(cbs.ew_out, i, &encode(tr.row(r), fmt))?;
                            }
                        }
                        ctx.push_back(cbs.ew_out, 4)?;
                    }

                    // Phase B.
                    for ty in 0..ty_n {
                        for tx in 0..tx_n {
                            let t = g.tile(tx, ty, k);
                            let mut got = [None, None, None, None];
                            for d in ShiftDir::ALL {
                                got[d as usize] =
                                    fetch_halo(&ctx, &g, &cbs, &src, variant, fmt, d, tx, ty, k)
                                        .await?;
                            }
                            if let Some(h) = &halos {
                                let [n, s, e, w] = got.clone();
                                h.borrow_mut()[core][t] = TileHalos {
                                    north: n.unwrap_or_default(),
                                    south: s.unwrap_or_default(),
                                    west: w.unwrap_or_default(),
                                    east: e.unwrap_or_default(),
                                };
                            }
                            if let Some(c) = coeffs {
                                alu.set_issue(n_issued.is_multiple_of(opts.block));
                                n_issued += 1;
                                let acc = combine(&ctx, &alu, &cbs, &c, &got, fmt).await?;
                                ctx.reserve_back(cbs.out, 1).await?;
                                if let Some(a) = &acc {
                                    ctx.write_tile(cbs.out, 0, a)?;
                                }
                                ctx.push_back(cbs.out, 1)?;
                            }
                        }
                    }
                }
                Ok(())
            });
        }

        let (src, cbs, sink) = (src.clone(), cbs.clone(), sink.clone());
        p.task(coord, TaskKind::Writer, move |ctx| async move {
            let full = ctx.is_full();
            for k in 0..nz {
                if g.exchange {
                    for (dir, dst, ty) in [
                        (ShiftDir::North, g.north, 0),
                        (ShiftDir::South, g.south, ty_n - 1),
                    ] {
                        let Some(dst) = dst else { continue };
                        for tx in 0..tx_n {
                            let payload = src
                                .peek(core, g.tile(tx, ty, k))
                                .map(|t| encode(&edge_slice(t, dir), fmt));
                            ctx.send_page(dst, cbs.inbox(opposite(dir)), payload.as_deref(), row)
                                .await?;
                        }
                    }
                    for (_, side) in g.ew_sends(k) {
                        let dst = if side == ShiftDir::West {
                            g.west
                        } else {
                            g.east
                        }
                        .expect("neighbour exists");
                        for _ in 0..4 {
                            ctx.wait_front(cbs.ew_out, 1).await?;
                            let payload = if full {
                                Some(ctx.read_page(cbs.ew_out, 0)?)
                            } else {
                                None
                            };
                            ctx.send_page(dst, cbs.inbox(opposite(side)), payload.as_deref(), row)
                                .await?;
                            ctx.pop_front(cbs.ew_out, 1)?;
                        }
                    }
                }
                if let Some(sink) = &sink {
                    for ty in 0..ty_n {
                        for tx in 0..tx_n {
                            ctx.wait_front(cbs.out, 1).await?;
                            let tile = if full {
                                Some(ctx.read_tile(cbs.out, 0, VEC_SHAPE, fmt)?)
                            } else {
                                None
                            };
                            sink.store(&ctx, core, g.tile(tx, ty, k), tile)?;
                            ctx.pop_front(cbs.out, 1)?;
                        }
                    }
                }
            }
            Ok(())
        });
    }

    let stats = dev.run(p)?;
    let out = match sink {
        Some(s) => Some(s.finish(dev)?),
        None => None,
    };
    let halos = halos.map(|h| core::mem::take(&mut *h.borrow_mut()));
    Ok((out, halos, stats))
}

/// Obtains the halo of tile `(tx, ty, k)` on side `dir`, charging its source.
#[allow(clippy::too_many_arguments)]
async fn fetch_halo(
    ctx: &TaskCtx,
    g: &Geom,
    cbs: &Cbs,
    src: &Source,
    variant: StencilVariant,
    fmt: ScalarFmt,
    dir: ShiftDir,
    tx: usize,
    ty: usize,
    k: usize,
) -> Result<Option<Vec<f32>>> {
    let len = halo_len(dir);
    let bytes = len * fmt.byte_width();
    let full = ctx.is_full();
    match g.src(dir, tx, ty, k) {
        HaloSrc::Local(t) => {
            ctx.charge_sram_move(bytes);
            Ok(src.peek(g.core, t).map(|nb| edge_slice(nb, opposite(dir))))
        }
        HaloSrc::Inbox if g.exchange => {
            let cb = cbs.inbox(dir);
            let pages = len / COLS;
            ctx.wait_front(cb, pages).await?;
            let mut v = Vec::with_capacity(len);
            if full {
                for i in 0..pages {
                    v.extend(decode(&ctx.read_page(cb, i)?, fmt));
                }
            }
            ctx.pop_front(cb, pages)?;
            ctx.charge_sram_move(bytes);
            Ok(full.then_some(v))
        }
        HaloSrc::Inbox => Ok(full.then(|| vec![0.0; len])),
        HaloSrc::Edge => {
            if variant.charges_zero_fill() {
                let c = ctx.cost_params().zero_fill(len as u64);
                ctx.charge(Category::Other, c);
            }
            Ok(full.then(|| vec![0.0; len]))
        }
    }
}

/// Reads a view of the front page of `cb` shifted by `rows` rows.
fn shifted_front(
    ctx: &TaskCtx,
    cb: CbId,
    rows: i64,
    row_bytes: usize,
    fmt: ScalarFmt,
) -> Result<Option<Tile>> {
    let delta = rows * row_bytes as i64;
    ctx.offset_read_ptr(cb, delta)?;
    let t = if ctx.is_full() {
        Some(ctx.read_tile(cb, 0, VEC_SHAPE, fmt))
    } else {
        None
    };
    ctx.offset_read_ptr(cb, -delta)?;
    t.transpose()
}

/// Phase-B arithmetic for one tile. Consumes the `ctr` and `vert` pages.
async fn combine(
    ctx: &TaskCtx,
    alu: &Alu,
    cbs: &Cbs,
    c: &StencilCoeffs,
    halos: &[Option<Vec<f32>>; 4],
    fmt: ScalarFmt,
) -> Result<Val> {
    let full = ctx.is_full();
    let row = VEC_SHAPE.row_bytes(fmt);
    let halo = |d: ShiftDir| halos[d as usize].as_deref();

    ctx.wait_front(cbs.ctr, 1).await?;
    ctx.wait_front(cbs.vert, 2).await?;
    let center = if full {
        Some(ctx.read_tile(cbs.ctr, 0, VEC_SHAPE, fmt)?)
    } else {
        None
    };
    let below = if full {
        Some(ctx.read_tile(cbs.vert, 0, VEC_SHAPE, fmt)?)
    } else {
        None
    };
    let above = if full {
        Some(ctx.read_tile(cbs.vert, 1, VEC_SHAPE, fmt)?)
    } else {
        None
    };

    let mut acc = alu.scale(c.center, &center)?;
    for (coef, v) in [(c.below, &below), (c.above, &above)] {
        let s = alu.scale(coef, v)?;
        acc = alu.add(&acc, &s)?;
    }

    for (dir, coef, shift, fill_row) in [
        (ShiftDir::North, c.north, -1, 0),
        (ShiftDir::South, c.south, 1, ROWS - 1),
    ] {
        let mut view = shifted_front(ctx, cbs.ctr, shift, row, fmt)?;
        alu.copy()?;
        if let (Some(v), Some(h)) = (&mut view, halo(dir)) {
            v.set_row(fill_row, h);
        }
        let s = alu.scale(coef, &view)?;
        acc = alu.add(&acc, &s)?;
    }

    ctx.reserve_back(cbs.tr, 1).await?;
    let tr = alu.transpose(&center)?;
    if let Some(t) = &tr {
        ctx.write_tile(cbs.tr, 0, t)?;
    }
    ctx.push_back(cbs.tr, 1)?;
    ctx.wait_front(cbs.tr, 1).await?;
    for (dir, coef, shift) in [(ShiftDir::West, c.west, -1), (ShiftDir::East, c.east, 1)] {
        let mut view = shifted_front(ctx, cbs.tr, shift, row, fmt)?;
        alu.copy()?;
        if let (Some(v), Some(h)) = (&mut view, halo(dir)) {
            for (s, r) in ew_halo_rows(dir).into_iter().enumerate() {
                v.set_row(r, &h[s * SUBTILE..(s + 1) * SUBTILE]);
            }
        }
        let back = alu.transpose(&view)?;
        let s = alu.scale(coef, &back)?;
        acc = alu.add(&acc, &s)?;
    }
    ctx.pop_front(cbs.tr, 1)?;
    ctx.pop_front(cbs.vert, 2)?;
    ctx.pop_front(cbs.ctr, 1)?;
    Ok(acc)
}
