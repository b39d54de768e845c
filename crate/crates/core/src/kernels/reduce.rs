//! Global dot product: local partial tiles, a reduction tree over the NoC,
//! and a multicast of the result back to every core.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::{check_scalar, Alu, DistVector, KernelOpts, Launch, Residency, Source, Val, VEC_SHAPE};
use crate::costmodel::Category;
use crate::device::{CbId, CbSpec, CoreCoord, CoreRect, Device, Program, TaskKind};
use crate::error::{Error, Result};
use crate::numerics::{ftz_add, image_size, EltwiseOp, ScalarFmt, Tile};

/// Scalar NoC messages are padded to one aligned write.
const SCALAR_PAGE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    /// Every core reduces its partial tile to a scalar before sending.
    ScalarFirst,
    /// Partial tiles travel to the root, which reduces once.
    TileToRoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Routing {
    /// Leftward along every row, then up column 0 to the top-left core.
    Naive,
    /// Along rows toward the centre column, then along it to the centre core.
    Center,
    /// Every core sends straight to the centre core.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReductionConfig {
    pub granularity: Granularity,
    pub routing: Routing,
}

impl ReductionConfig {
    pub fn new(granularity: Granularity, routing: Routing) -> Self {
        ReductionConfig {
            granularity,
            routing,
        }
    }
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig::new(Granularity::ScalarFirst, Routing::Center)
    }
}

/// Side of a parent on which a child sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    West = 0,
    East = 1,
    North = 2,
    South = 3,
}

/// Reduction tree over a `width` x `height` rectangle, cores indexed row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionTree {
    pub width: usize,
    pub height: usize,
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    /// Children of each core in accumulation order, with their side.
    pub children: Vec<Vec<(usize, Side)>>,
    /// Inbox index each core writes to at its parent.
    pub slot: Vec<usize>,
}

impl ReductionTree {
    fn side_of(&self, parent: usize, child: usize) -> Side {
        let (px, py) = (parent % self.width, parent / self.width);
        let (cx, cy) = (child % self.width, child / self.width);
        if cy == py {
            if cx < px {
                Side::West
            } else {
                Side::East
            }
        } else if cy < py {
            Side::North
        } else {
            Side::South
        }
    }

    /// Inbox CBs a parent needs; at least one per side.
    pub fn inbox_count(&self) -> usize {
        self.slot.iter().map(|s| s + 1).max().unwrap_or(0).max(4)
    }

    /// Longest root-to-leaf path in tree edges.
    pub fn depth(&self) -> usize {
        (0..self.parent.len())
            .map(|mut i| {
                let mut d = 0;
                while let Some(p) = self.parent[i] {
                    i = p;
                    d += 1;
                }
                d
            })
            .max()
            .unwrap_or(0)
    }
}

pub fn reduction_tree(width: usize, height: usize, routing: Routing) -> ReductionTree {
    let n = width * height;
    let idx = |x: usize, y: usize| y * width + x;
    let (root, order): (usize, &[Side]) = match routing {
        Routing::Naive => (0, &[Side::East, Side::South]),
        Routing::Center | Routing::Direct => (
            idx(width / 2, height / 2),
            &[Side::West, Side::East, Side::North, Side::South],
        ),
    };
    let (cx, cy) = (root % width, root / width);
    let mut parent = vec![None; n];
    for (i, slot) in parent.iter_mut().enumerate() {
        let (x, y) = (i % width, i / width);
        *slot = match routing {
            Routing::Naive if x > 0 => Some(idx(x - 1, y)),
            Routing::Naive if y > 0 => Some(idx(0, y - 1)),
            Routing::Center if x < cx => Some(idx(x + 1, y)),
            Routing::Center if x > cx => Some(idx(x - 1, y)),
            Routing::Center if y < cy => Some(idx(x, y + 1)),
            Routing::Center if y > cy => Some(idx(x, y - 1)),
            Routing::Direct if i != root => Some(root),
            _ => None,
        };
    }
    let mut tree = ReductionTree {
        width,
        height,
        root,
        parent,
        children: vec![Vec::new(); n],
        slot: vec![0; n],
    };
    for i in 0..n {
        if let Some(p) = tree.parent[i] {
            let s = tree.side_of(p, i);
            tree.children[p].push((i, s));
        }
    }
    if routing == Routing::Direct {
        for (k, &(c, _)) in tree.children[root].iter().enumerate() {
            tree.slot[c] = k;
        }
    } else {
        for ch in &mut tree.children {
            ch.sort_by_key(|&(_, s)| order.iter().position(|&o| o == s));
        }
        for i in 0..n {
            if let Some(p) = tree.parent[i] {
                tree.slot[i] = tree.side_of(p, i) as usize;
            }
        }
    }
    tree
}

/// Sum of element-wise products, accumulated tile by tile in ascending order.
pub fn local_dot_partial(x: &[Tile], y: &[Tile]) -> Result<Tile> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::LayoutMismatch);
    }
    let mut acc = Tile::eltwise(EltwiseOp::Mul, &x[0], &y[0])?;
    for (a, b) in x.iter().zip(y).skip(1) {
        acc = Tile::eltwise(EltwiseOp::Add, &acc, &Tile::eltwise(EltwiseOp::Mul, a, b)?)?;
    }
    Ok(acc)
}

fn encode_scalar(v: f32, fmt: ScalarFmt) -> [u8; SCALAR_PAGE] {
    let mut b = [0u8; SCALAR_PAGE];
    fmt.write_le(v, &mut b);
    b
}

type ProductFn = Rc<dyn Fn(&Alu, &Val, &Val) -> Result<Val>>;

/// `x . y`, identical on every core.
///
/// Returns `None` in cost-only mode.
pub fn global_dot(
    dev: &mut Device,
    x: &DistVector,
    y: &DistVector,
    cfg: ReductionConfig,
    opts: KernelOpts,
) -> Result<Launch<Option<f32>>> {
    x.check_compatible(y)?;
    dot_kernel(
        dev,
        "dot",
        x,
        Some(y),
        cfg,
        opts,
        Rc::new(|alu, a, b| alu.mul(a, b)),
    )
}

/// `r . (c * r)` with the scaled copy regenerated per tile; bit-identical to
/// `global_dot(r, dist_scale(c, r))`.
pub fn dot_with_precond(
    dev: &mut Device,
    r: &DistVector,
    c: f32,
    cfg: ReductionConfig,
    opts: KernelOpts,
) -> Result<Launch<Option<f32>>> {
    check_scalar(c, r.fmt())?;
    dot_kernel(
        dev,
        "dot_precond",
        r,
        None,
        cfg,
        opts,
        Rc::new(move |alu, a, _| {
            let z = alu.scale(c, a)?;
            alu.mul(a, &z)
        }),
    )
}

fn dot_kernel(
    dev: &mut Device,
    name: &str,
    x: &DistVector,
    y: Option<&DistVector>,
    cfg: ReductionConfig,
    opts: KernelOpts,
    product: ProductFn,
) -> Result<Launch<Option<f32>>> {
    let layout = x.layout();
    let fmt = x.fmt();
    let rect = layout.rect;
    let n = layout.tiles_per_core;
    if n == 0 {
        return Err(Error::LayoutMismatch);
    }
    let tile_page = image_size(fmt);
    let tree = Rc::new(reduction_tree(rect.width, rect.height, cfg.routing));
    let mut srcs = vec![Source::new(dev, x, opts.residency)?];
    if let Some(y) = y {
        srcs.push(Source::new(dev, y, opts.residency)?);
    }

    let mut p = Program::new(name, rect);
    p.set_resident_bytes(opts.resident_bytes);
    if opts.residency == Residency::Dram {
        p.set_dram_streams(rect.len());
    }
    let cb_in: Vec<CbId> = (0..srcs.len())
        .map(|i| p.add_cb(CbSpec::new(alloc::format!("in{i}"), tile_page, 2)))
        .collect();
    let msg_page = match cfg.granularity {
        Granularity::ScalarFirst => SCALAR_PAGE,
        Granularity::TileToRoot => tile_page,
    };
    let inbox: Vec<CbId> = (0..tree.inbox_count())
        .map(|k| {
            let nm = match k {
                0..4 => ["from_w", "from_e", "from_n", "from_s"][k].into(),
                _ => alloc::format!("from_{k}"),
            };
            p.add_cb(CbSpec::new(nm, msg_page, 1))
        })
        .collect();
    let up = p.add_cb(CbSpec::new("up", msg_page, 1));
    let bcast = p.add_cb(CbSpec::new("bcast", SCALAR_PAGE, 1));
    let result = p.add_cb(CbSpec::new("result", SCALAR_PAGE, 1));
    let results = Rc::new(RefCell::new(vec![None; rect.len()]));

    for (core, coord) in rect.iter().enumerate() {
        let (srcs_r, cbs) = (srcs.clone(), cb_in.clone());
        p.task(coord, TaskKind::Reader, move |ctx| async move {
            for t in 0..n {
                for (s, &cb) in srcs_r.iter().zip(&cbs) {
                    ctx.reserve_back(cb, 1).await?;
                    if let Some(tile) = s.load(&ctx, core, t)? {
                        ctx.write_tile(cb, 0, &tile)?;
                    }
                    ctx.push_back(cb, 1)?;
                }
            }
            Ok(())
        });

        let (cbs, product, tree_c, inbox_c, results) = (
            cb_in.clone(),
            product.clone(),
            tree.clone(),
            inbox.clone(),
            results.clone(),
        );
        p.task(coord, TaskKind::Compute, move |ctx| async move {
            let alu = Alu::new(ctx.clone(), opts.unit, fmt);
            let full = ctx.is_full();
            let scalar_cost = ctx.cost_params().scalar_op_cycles;
            let mut partial: Val = None;
            for t in 0..n {
                let mut args: Vec<Val> = Vec::with_capacity(2);
                for &cb in &cbs {
                    ctx.wait_front(cb, 1).await?;
                    args.push(if full {
                        Some(ctx.read_tile(cb, 0, VEC_SHAPE, fmt)?)
                    } else {
                        None
                    });
                    ctx.pop_front(cb, 1)?;
                }
                alu.set_issue(t % opts.block == 0);
                let b = if args.len() > 1 {
                    args.pop().unwrap()
                } else {
                    None
                };
                let prod = product(&alu, &args[0], &b)?;
                partial = if t == 0 {
                    prod
                } else {
                    alu.add(&partial, &prod)?
                };
            }
            alu.set_issue(true);

            let is_root = tree_c.root == core;
            match cfg.granularity {
                Granularity::ScalarFirst => {
                    let mut s = alu.reduce(&partial)?;
                    for &(c, _) in &tree_c.children[core] {
                        let cb = inbox_c[tree_c.slot[c]];
                        ctx.wait_front(cb, 1).await?;
                        if full {
                            let v = fmt.read_le(&ctx.read_page(cb, 0)?);
                            s = s.map(|a| ftz_add(a, v, fmt));
                        }
                        ctx.charge(Category::Other, scalar_cost);
                        ctx.pop_front(cb, 1)?;
                    }
                    let out = if is_root { bcast } else { up };
                    ctx.reserve_back(out, 1).await?;
                    if let Some(s) = s {
                        ctx.write_page(out, 0, &encode_scalar(s, fmt))?;
                    }
                    ctx.push_back(out, 1)?;
                }
                Granularity::TileToRoot => {
                    let mut acc = partial;
                    for &(c, _) in &tree_c.children[core] {
                        let cb = inbox_c[tree_c.slot[c]];
                        ctx.wait_front(cb, 1).await?;
                        let child = if full {
                            Some(ctx.read_tile(cb, 0, VEC_SHAPE, fmt)?)
                        } else {
                            None
                        };
                        acc = alu.add(&acc, &child)?;
                        ctx.pop_front(cb, 1)?;
                    }
                    if is_root {
                        let s = alu.reduce(&acc)?;
                        ctx.reserve_back(bcast, 1).await?;
                        if let Some(s) = s {
                            ctx.write_page(bcast, 0, &encode_scalar(s, fmt))?;
                        }
                        ctx.push_back(bcast, 1)?;
                    } else {
                        ctx.reserve_back(up, 1).await?;
                        if let Some(a) = &acc {
                            ctx.write_tile(up, 0, a)?;
                        }
                        ctx.push_back(up, 1)?;
                    }
                }
            }

            ctx.wait_front(result, 1).await?;
            if full {
                results.borrow_mut()[core] = Some(fmt.read_le(&ctx.read_page(result, 0)?));
            }
            ctx.pop_front(result, 1)
        });

        let (tree_w, inbox_w) = (tree.clone(), inbox.clone());
        p.task(coord, TaskKind::Writer, move |ctx| async move {
            let full = ctx.is_full();
            match tree_w.parent[core] {
                Some(par) => {
                    ctx.wait_front(up, 1).await?;
                    let payload = if full {
                        Some(ctx.read_page(up, 0)?)
                    } else {
                        None
                    };
                    let dst = rect.coord(par);
                    ctx.send_page(
                        dst,
                        inbox_w[tree_w.slot[core]],
                        payload.as_deref(),
                        msg_page,
                    )
                    .await?;
                    ctx.pop_front(up, 1)
                }
                None => {
                    ctx.wait_front(bcast, 1).await?;
                    let payload = if full {
                        Some(ctx.read_page(bcast, 0)?)
                    } else {
                        None
                    };
                    ctx.multicast_page(rect, result, payload.as_deref(), SCALAR_PAGE)
                        .await?;
                    ctx.pop_front(bcast, 1)
                }
            }
        });
    }
    let stats = dev.run(p)?;
    let res = results.borrow();
    let out = match res[0] {
        Some(v) => {
            if res.iter().any(|r| r.map(f32::to_bits) != Some(v.to_bits())) {
                return Err(Error::Deadlock("dot result differs between cores".into()));
            }
            Some(v)
        }
        None => None,
    };
    Ok(Launch { out, stats })
}

/// Root of the reduction tree for a rectangle.
pub fn reduction_root(rect: CoreRect, routing: Routing) -> CoreCoord {
    rect.coord(reduction_tree(rect.width, rect.height, routing).root)
}
