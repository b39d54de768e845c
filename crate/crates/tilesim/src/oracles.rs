//! Reference implementations written from the definitions. They share only
//! scalar arithmetic with the kernels they check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tilesim_core::kernels::{Granularity, Routing};
use tilesim_core::numerics::{
    ftz_add, ftz_mul, scalar_from_f64, ScalarFmt, ShiftDir, Tile, TileShape,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Values with magnitude in `[lo, hi)` and random sign, rounded into `fmt`.
pub fn values(rng: &mut ChaCha8Rng, n: usize, fmt: ScalarFmt, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(lo..hi);
            scalar_from_f64(if rng.random_bool(0.5) { m } else { -m }, fmt) as f64
        })
        .collect()
}

/// Right-hand side with entries uniform in `[-1, 1)`.
pub fn rhs(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn storage_bytes(v: f32, fmt: ScalarFmt) -> Vec<u8> {
    match fmt {
        ScalarFmt::Bf16 => ((v.to_bits() >> 16) as u16).to_le_bytes().to_vec(),
        ScalarFmt::Fp32 => v.to_bits().to_le_bytes().to_vec(),
    }
}

/// Logical position of element `e` of subtile `s`.
fn subtile_coord(shape: TileShape, s: usize, e: usize) -> (usize, usize) {
    let (rr, cc) = (e / 16, e % 16);
    match shape {
        TileShape::Square32 => ((s / 2) * 16 + rr, (s % 2) * 16 + cc),
        TileShape::Tall64x16 => (s * 16 + rr, cc),
    }
}

/// Byte image: four 16x16 subtiles (TL, TR, BL, BR for 32x32; top to bottom
/// for 64x16), each row-major, elements little-endian.
pub fn linearize(t: &Tile) -> Vec<u8> {
    let mut out = Vec::with_capacity(1024 * t.fmt().byte_width());
    for s in 0..4 {
        for e in 0..256 {
            let (r, c) = subtile_coord(t.shape(), s, e);
            out.extend(storage_bytes(t.get(r, c), t.fmt()));
        }
    }
    out
}

/// Transposes each 16x16 block of a byte image.
pub fn transpose_image(img: &[u8], fmt: ScalarFmt) -> Vec<u8> {
    let w = fmt.byte_width();
    let mut out = vec![0u8; img.len()];
    for s in 0..4 {
        for r in 0..16 {
            for c in 0..16 {
                let from = (s * 256 + r * 16 + c) * w;
                let to = (s * 256 + c * 16 + r) * w;
                out[to..to + w].copy_from_slice(&img[from..from + w]);
            }
        }
    }
    out
}

/// Neighbour view of a 64x16 tile: element `(r, c)` holds the element one
/// step toward `dir`, or zero past the edge.
pub fn shifted(t: &Tile, dir: ShiftDir) -> Vec<f32> {
    let mut out = Vec::with_capacity(1024);
    for r in 0..64isize {
        for c in 0..16isize {
            let (sr, sc) = match dir {
                ShiftDir::North => (r - 1, c),
                ShiftDir::South => (r + 1, c),
                ShiftDir::West => (r, c - 1),
                ShiftDir::East => (r, c + 1),
            };
            let inside = (0..64).contains(&sr) && (0..16).contains(&sc);
            out.push(if inside {
                t.get(sr as usize, sc as usize)
            } else {
                0.0
            });
        }
    }
    out
}

pub fn lin(nx: usize, ny: usize, i: usize, j: usize, k: usize) -> usize {
    i + nx * (j + ny * k)
}

/// Offsets in accumulation order (center, below, above, north, south, west,
/// east) with the index of their weight in the west, north, below, center,
/// east, south, above array.
const TERMS: [((isize, isize, isize), usize); 7] = [
    ((0, 0, 0), 3),
    ((0, 0, -1), 2),
    ((0, 0, 1), 6),
    ((0, -1, 0), 1),
    ((0, 1, 0), 5),
    ((-1, 0, 0), 0),
    ((1, 0, 0), 4),
];

/// Compressed sparse rows; entries of a row are stored in accumulation order.
#[derive(Debug, Clone)]
pub struct Csr {
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f32>,
}

/// The 7-point operator on an `nx` x `ny` x `nz` grid with zero boundaries.
pub fn assemble(nx: usize, ny: usize, nz: usize, coeffs: [f32; 7]) -> Csr {
    let mut m = Csr {
        row_ptr: vec![0],
        col: Vec::new(),
        val: Vec::new(),
    };
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for ((di, dj, dk), w) in TERMS {
                    let (a, b, c) = (i as isize + di, j as isize + dj, k as isize + dk);
                    if a >= 0
                        && b >= 0
                        && c >= 0
                        && (a as usize) < nx
                        && (b as usize) < ny
                        && (c as usize) < nz
                    {
                        m.col.push(lin(nx, ny, a as usize, b as usize, c as usize));
                        m.val.push(coeffs[w]);
                    }
                }
                m.row_ptr.push(m.col.len());
            }
        }
    }
    m
}

/// `m u` with FTZ products and sums, in row order.
pub fn csr_apply(m: &Csr, u: &[f32], fmt: ScalarFmt) -> Vec<f32> {
    (0..m.row_ptr.len() - 1)
        .map(|r| {
            let (lo, hi) = (m.row_ptr[r], m.row_ptr[r + 1]);
            let mut acc = ftz_mul(m.val[lo], u[m.col[lo]], fmt);
            for e in lo + 1..hi {
                acc = ftz_add(acc, ftz_mul(m.val[e], u[m.col[e]], fmt), fmt);
            }
            acc
        })
        .collect()
}

/// `m u` in double precision.
pub fn csr_apply_f64(m: &Csr, u: &[f64]) -> Vec<f64> {
    (0..m.row_ptr.len() - 1)
        .map(|r| {
            (m.row_ptr[r]..m.row_ptr[r + 1])
                .map(|e| m.val[e] as f64 * u[m.col[e]])
                .sum()
        })
        .collect()
}

/// Unpreconditioned conjugate gradient in double precision from zero.
/// Returns the solution and the iterations taken.
pub fn reference_cg(m: &Csr, b: &[f64], tol: f64, max_iters: usize) -> (Vec<f64>, usize) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 0..max_iters {
        if rr.sqrt() <= tol {
            return (x, it);
        }
        let q = csr_apply_f64(m, &p);
        let a = rr / dot(&p, &q);
        for i in 0..x.len() {
            x[i] += a * p[i];
            r[i] -= a * q[i];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = next;
    }
    (x, max_iters)
}

/// Per-core dot partial: element products of each tile pair summed tile by
/// tile. Tiles are given as 1024 row-major values.
pub fn dot_partial(x: &[Vec<f32>], y: &[Vec<f32>], fmt: ScalarFmt) -> Vec<f32> {
    let mut acc: Vec<f32> = x[0]
        .iter()
        .zip(&y[0])
        .map(|(&a, &b)| ftz_mul(a, b, fmt))
        .collect();
    for (a, b) in x.iter().zip(y).skip(1) {
        for (s, (&u, &v)) in acc.iter_mut().zip(a.iter().zip(b)) {
            *s = ftz_add(*s, ftz_mul(u, v, fmt), fmt);
        }
    }
    acc
}

/// Left-to-right sum of a 64x16 tile; its physical order is row-major.
pub fn tile_sum(t: &[f32], fmt: ScalarFmt) -> f32 {
    t[1..].iter().fold(t[0], |a, &v| ftz_add(a, v, fmt))
}

/// Children of core `(x, y)` in the order their contributions are added.
pub fn tree_children(
    w: usize,
    h: usize,
    x: usize,
    y: usize,
    routing: Routing,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    match routing {
        Routing::Naive => {
            if x + 1 < w {
                out.push((x + 1, y));
            }
            if x == 0 && y + 1 < h {
                out.push((0, y + 1));
            }
        }
        Routing::Center => {
            let (cx, cy) = (w / 2, h / 2);
            if x <= cx && x > 0 {
                out.push((x - 1, y));
            }
            if x >= cx && x + 1 < w {
                out.push((x + 1, y));
            }
            if x == cx && y <= cy && y > 0 {
                out.push((x, y - 1));
            }
            if x == cx && y >= cy && y + 1 < h {
                out.push((x, y + 1));
            }
        }
        Routing::Direct => {
            if (x, y) == (w / 2, h / 2) {
                out.extend(
                    (0..h)
                        .flat_map(|j| (0..w).map(move |i| (i, j)))
                        .filter(|&c| c != (x, y)),
                );
            }
        }
    }
    out
}

pub fn tree_root(w: usize, h: usize, routing: Routing) -> (usize, usize) {
    match routing {
        Routing::Naive => (0, 0),
        Routing::Center | Routing::Direct => (w / 2, h / 2),
    }
}

/// Replays a global dot over per-core partials indexed `y * w + x`.
pub fn replay_dot(
    partials: &[Vec<f32>],
    w: usize,
    h: usize,
    g: Granularity,
    routing: Routing,
    fmt: ScalarFmt,
) -> f32 {
    fn scalar(
        p: &[Vec<f32>],
        w: usize,
        h: usize,
        at: (usize, usize),
        ro: Routing,
        fmt: ScalarFmt,
    ) -> f32 {
        let mut s = tile_sum(&p[at.1 * w + at.0], fmt);
        for ch in tree_children(w, h, at.0, at.1, ro) {
            s = ftz_add(s, scalar(p, w, h, ch, ro, fmt), fmt);
        }
        s
    }
    fn tile(
        p: &[Vec<f32>],
        w: usize,
        h: usize,
        at: (usize, usize),
        ro: Routing,
        fmt: ScalarFmt,
    ) -> Vec<f32> {
        let mut acc = p[at.1 * w + at.0].clone();
        for ch in tree_children(w, h, at.0, at.1, ro) {
            let c = tile(p, w, h, ch, ro, fmt);
            for (a, b) in acc.iter_mut().zip(c) {
                *a = ftz_add(*a, b, fmt);
            }
        }
        acc
    }
    let root = tree_root(w, h, routing);
    match g {
        Granularity::ScalarFirst => scalar(partials, w, h, root, routing, fmt),
        Granularity::TileToRoot => tile_sum(&tile(partials, w, h, root, routing, fmt), fmt),
    }
}
