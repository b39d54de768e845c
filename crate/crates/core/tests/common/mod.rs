//! Reference implementations written directly from the definitions, sharing
//! no code with the kernels beyond scalar arithmetic.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tilesim_core::numerics::{ftz_add, ftz_mul, scalar_from_f64, ScalarFmt};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Nonzero values in `[-hi, -lo] U [lo, hi]`, already rounded into `fmt`.
pub fn nonzero_values(
    rng: &mut ChaCha8Rng,
    n: usize,
    fmt: ScalarFmt,
    lo: f64,
    hi: f64,
) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(lo..hi);
            let v = if rng.random_bool(0.5) { m } else { -m };
            scalar_from_f64(v, fmt) as f64
        })
        .collect()
}

pub fn lin(nx: usize, ny: usize, i: usize, j: usize, k: usize) -> usize {
    i + nx * (j + ny * k)
}

/// Neighbour offsets in accumulation order: center, below, above, north,
/// south, west, east. Coefficient index into the west, north, below, center,
/// east, south, above array.
pub const TERMS: [((isize, isize, isize), usize); 7] = [
    ((0, 0, 0), 3),
    ((0, 0, -1), 2),
    ((0, 0, 1), 6),
    ((0, -1, 0), 1),
    ((0, 1, 0), 5),
    ((-1, 0, 0), 0),
    ((1, 0, 0), 4),
];

fn neighbour(
    dims: (usize, usize, usize),
    p: (usize, usize, usize),
    d: (isize, isize, isize),
) -> Option<usize> {
    let (i, j, k) = (p.0 as isize + d.0, p.1 as isize + d.1, p.2 as isize + d.2);
    let ok = i >= 0
        && j >= 0
        && k >= 0
        && (i as usize) < dims.0
        && (j as usize) < dims.1
        && (k as usize) < dims.2;
    ok.then(|| lin(dims.0, dims.1, i as usize, j as usize, k as usize))
}

/// Point-by-point loop; out-of-domain neighbours contribute `coef * 0`.
pub fn stencil_loop(
    u: &[f32],
    nx: usize,
    ny: usize,
    nz: usize,
    c: [f32; 7],
    fmt: ScalarFmt,
) -> Vec<f32> {
    let mut out = vec![0.0; u.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let mut acc = None;
                for (d, ci) in TERMS {
                    let v = neighbour((nx, ny, nz), (i, j, k), d).map_or(0.0, |n| u[n]);
                    let term = ftz_mul(c[ci], v, fmt);
                    acc = Some(match acc {
                        None => term,
                        Some(a) => ftz_add(a, term, fmt),
                    });
                }
                out[lin(nx, ny, i, j, k)] = acc.unwrap();
            }
        }
    }
    out
}

/// Compressed sparse rows with entries stored in accumulation order.
pub struct Csr {
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f32>,
}

/// Assembles the 7-point operator with only in-domain couplings.
pub fn assemble(nx: usize, ny: usize, nz: usize, c: [f32; 7]) -> Csr {
    let mut m = Csr {
        row_ptr: vec![0],
        col: Vec::new(),
        val: Vec::new(),
    };
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for (d, ci) in TERMS {
                    if let Some(n) = neighbour((nx, ny, nz), (i, j, k), d) {
                        m.col.push(n);
                        m.val.push(c[ci]);
                    }
                }
                m.row_ptr.push(m.col.len());
            }
        }
    }
    m
}

pub fn csr_apply(m: &Csr, u: &[f32], fmt: ScalarFmt) -> Vec<f32> {
    (0..m.row_ptr.len() - 1)
        .map(|r| {
            let mut acc = ftz_mul(m.val[m.row_ptr[r]], u[m.col[m.row_ptr[r]]], fmt);
            for e in m.row_ptr[r] + 1..m.row_ptr[r + 1] {
                acc = ftz_add(acc, ftz_mul(m.val[e], u[m.col[e]], fmt), fmt);
            }
            acc
        })
        .collect()
}

/// Per-core partial of a dot product: element products of each tile pair,
/// summed tile by tile in ascending order. Each inner slice is one tile.
pub fn partial(x: &[Vec<f32>], y: &[Vec<f32>], fmt: ScalarFmt) -> Vec<f32> {
    let mut acc: Option<Vec<f32>> = None;
    for (a, b) in x.iter().zip(y) {
        let p: Vec<f32> = a.iter().zip(b).map(|(&u, &v)| ftz_mul(u, v, fmt)).collect();
        acc = Some(match acc {
            None => p,
            Some(s) => s
                .iter()
                .zip(&p)
                .map(|(&u, &v)| ftz_add(u, v, fmt))
                .collect(),
        });
    }
    acc.unwrap()
}

/// Sum of a 64x16 tile in physical order, which for this shape is row-major.
pub fn reduce_tile(t: &[f32], fmt: ScalarFmt) -> f32 {
    t[1..].iter().fold(t[0], |a, &v| ftz_add(a, v, fmt))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Pattern {
    Naive,
    Center,
    Direct,
}

/// Children of `(x, y)` in accumulation order.
pub fn children(w: usize, h: usize, x: usize, y: usize, p: Pattern) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    match p {
        Pattern::Naive => {
            if x + 1 < w {
                out.push((x + 1, y));
            }
            if x == 0 && y + 1 < h {
                out.push((0, y + 1));
            }
        }
        Pattern::Center => {
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
        Pattern::Direct => {
            if (x, y) == (w / 2, h / 2) {
                for j in 0..h {
                    for i in 0..w {
                        if (i, j) != (x, y) {
                            out.push((i, j));
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn root(w: usize, h: usize, p: Pattern) -> (usize, usize) {
    match p {
        Pattern::Naive => (0, 0),
        Pattern::Center | Pattern::Direct => (w / 2, h / 2),
    }
}

/// Replays scalar-first reduction: every core reduces its partial, then adds
/// the results of its children in order.
pub fn replay_scalar(partials: &[Vec<f32>], w: usize, h: usize, p: Pattern, fmt: ScalarFmt) -> f32 {
    fn go(
        parts: &[Vec<f32>],
        w: usize,
        h: usize,
        at: (usize, usize),
        p: Pattern,
        fmt: ScalarFmt,
    ) -> f32 {
        let mut s = reduce_tile(&parts[at.1 * w + at.0], fmt);
        for ch in children(w, h, at.0, at.1, p) {
            s = ftz_add(s, go(parts, w, h, ch, p, fmt), fmt);
        }
        s
    }
    go(partials, w, h, root(w, h, p), p, fmt)
}

/// Replays tile-to-root reduction: tiles are added along the tree and the
/// root reduces once.
pub fn replay_tile(partials: &[Vec<f32>], w: usize, h: usize, p: Pattern, fmt: ScalarFmt) -> f32 {
    fn go(
        parts: &[Vec<f32>],
        w: usize,
        h: usize,
        at: (usize, usize),
        p: Pattern,
        fmt: ScalarFmt,
    ) -> Vec<f32> {
        let mut acc = parts[at.1 * w + at.0].clone();
        for ch in children(w, h, at.0, at.1, p) {
            let c = go(parts, w, h, ch, p, fmt);
            acc = acc
                .iter()
                .zip(&c)
                .map(|(&a, &b)| ftz_add(a, b, fmt))
                .collect();
        }
        acc
    }
    reduce_tile(&go(partials, w, h, root(w, h, p), p, fmt), fmt)
}

/// Unpreconditioned textbook CG in double precision on an assembled matrix.
pub fn reference_cg(m: &Csr, b: &[f64], tol: f64, max_iters: usize) -> (Vec<f64>, usize) {
    let apply = |u: &[f64]| -> Vec<f64> {
        (0..m.row_ptr.len() - 1)
            .map(|r| {
                (m.row_ptr[r]..m.row_ptr[r + 1])
                    .map(|e| m.val[e] as f64 * u[m.col[e]])
                    .sum()
            })
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 0..max_iters {
        if rr.sqrt() <= tol {
            return (x, it);
        }
        let q = apply(&p);
        let a = rr / dot(&p, &q);
        for i in 0..x.len() {
            x[i] += a * p[i];
            r[i] -= a * q[i];
        }
        let rr_new = dot(&r, &r);
        for i in 0..p.len() {
            p[i] = r[i] + rr_new / rr * p[i];
        }
        rr = rr_new;
    }
    (x, max_iters)
}
