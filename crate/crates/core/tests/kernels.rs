mod common;

use common::*;
use tilesim_core::costmodel::Unit;
use tilesim_core::device::{CoreRect, Device, DeviceConfig, ExecMode, SchedulePolicy};
use tilesim_core::kernels::{
    dist_axpy, dist_scale, dist_scale_axpy, dot_with_precond, global_dot, halo_exchange,
    local_dot_partial, reduction_tree, stencil_apply, DistVector, Granularity, GridDistribution,
    KernelOpts, ReductionConfig, Residency, Routing, StencilCoeffs, StencilVariant, VecLayout,
};
use tilesim_core::numerics::{ftz_add, ftz_mul, scalar_from_f64, ScalarFmt, Tile, TileShape};

const BF: ScalarFmt = ScalarFmt::Bf16;
const FP: ScalarFmt = ScalarFmt::Fp32;

fn device(w: usize, h: usize) -> Device {
    Device::new(DeviceConfig::default().with_grid(w, h)).unwrap()
}

fn layout(w: usize, h: usize, tiles: usize) -> VecLayout {
    VecLayout::new(CoreRect::new(0, 0, w, h), tiles)
}

fn random_vec(seed: u64, l: VecLayout, fmt: ScalarFmt) -> DistVector {
    let vals = nonzero_values(&mut rng(seed), l.len(), fmt, 0.01, 2.0);
    DistVector::from_values(l, fmt, &vals).unwrap()
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn core_tile_values(v: &DistVector, core: usize) -> Vec<Vec<f32>> {
    v.core_tiles(core)
        .unwrap()
        .iter()
        .map(|t| t.data().to_vec())
        .collect()
}

#[test]
fn axpy_matches_element_loop() {
    let l = layout(2, 1, 3);
    let (x, y) = (random_vec(1, l, BF), random_vec(2, l, BF));
    let alpha = scalar_from_f64(-0.7, BF);
    let mut dev = device(2, 1);
    let out = dist_axpy(&mut dev, alpha, &x, &y, KernelOpts::default_for(BF))
        .unwrap()
        .out;
    let want: Vec<f32> = x
        .to_values()
        .unwrap()
        .iter()
        .zip(y.to_values().unwrap())
        .map(|(&a, b)| ftz_add(ftz_mul(alpha, a, BF), b, BF))
        .collect();
    assert_eq!(bits(&out.to_values().unwrap()), bits(&want));
}

#[test]
fn axpy_identities() {
    let l = layout(1, 1, 2);
    let (x, y) = (random_vec(3, l, FP), random_vec(4, l, FP));
    let mut dev = device(1, 1);
    let opts = KernelOpts::default_for(FP);
    assert_eq!(dist_axpy(&mut dev, 0.0, &x, &y, opts).unwrap().out, y);
    let z = DistVector::zeros(l, FP);
    assert_eq!(dist_axpy(&mut dev, 1.0, &x, &z, opts).unwrap().out, x);
}

#[test]
fn axpy_rejects_mismatched_layouts() {
    let mut dev = device(2, 1);
    let x = DistVector::zeros(layout(1, 1, 1), BF);
    let y = DistVector::zeros(layout(2, 1, 1), BF);
    assert!(dist_axpy(&mut dev, 1.0, &x, &y, KernelOpts::default_for(BF)).is_err());
}

#[test]
fn regenerated_direction_update_is_bit_identical() {
    let l = layout(2, 2, 2);
    let (p, r) = (random_vec(5, l, BF), random_vec(6, l, BF));
    let (beta, c) = (scalar_from_f64(0.3, BF), scalar_from_f64(1.0 / 6.0, BF));
    let opts = KernelOpts::default_for(BF);
    let mut dev = device(2, 2);
    let fused = dist_scale_axpy(&mut dev, beta, &p, c, &r, opts)
        .unwrap()
        .out;
    let z = dist_scale(&mut dev, c, &r, opts).unwrap().out;
    let split = dist_axpy(&mut dev, beta, &p, &z, opts).unwrap().out;
    assert_eq!(fused, split);
}

#[test]
fn dram_residency_gives_same_values() {
    let l = layout(2, 1, 2);
    let (x, y) = (random_vec(7, l, FP), random_vec(8, l, FP));
    let mut dev = device(2, 1);
    let a = dist_axpy(&mut dev, 0.5, &x, &y, KernelOpts::default_for(FP))
        .unwrap()
        .out;
    let opts = KernelOpts::default_for(FP).with_residency(Residency::Dram);
    let b = dist_axpy(&mut dev, 0.5, &x, &y, opts).unwrap().out;
    assert_eq!(a, b);
}

#[test]
fn local_partial_examples() {
    let ones = vec![Tile::splat(TileShape::Tall64x16, BF, 1.0)];
    assert_eq!(local_dot_partial(&ones, &ones).unwrap(), ones[0]);
    let zeros = vec![Tile::zeros(TileShape::Tall64x16, BF)];
    assert_eq!(local_dot_partial(&zeros, &ones).unwrap(), zeros[0]);

    let l = layout(1, 1, 4);
    let (x, y) = (random_vec(9, l, BF), random_vec(10, l, BF));
    let got = local_dot_partial(x.tiles().unwrap(), y.tiles().unwrap()).unwrap();
    let want = partial(&core_tile_values(&x, 0), &core_tile_values(&y, 0), BF);
    assert_eq!(bits(got.data()), bits(&want));
}

#[test]
fn reduction_tree_shapes() {
    let t = reduction_tree(8, 7, Routing::Naive);
    assert_eq!(t.root, 0);
    assert_eq!(t.depth(), 7 + 6);
    let c = reduction_tree(8, 7, Routing::Center);
    assert_eq!(c.root, 3 * 8 + 4);
    assert_eq!(c.depth(), 4 + 3);
    let d = reduction_tree(8, 7, Routing::Direct);
    assert_eq!(d.root, c.root);
    assert_eq!(d.depth(), 1);
    assert_eq!(d.children[d.root].len(), 55);
    assert_eq!(d.inbox_count(), 55);
    assert_eq!(c.inbox_count(), 4);
    for tree in [t, c, d] {
        let linked = tree.parent.iter().filter(|p| p.is_some()).count();
        assert_eq!(linked, 55);
    }
}

#[test]
fn dot_examples() {
    let mut dev = device(2, 2);
    let l = layout(2, 2, 2);
    let z = DistVector::zeros(l, BF);
    let opts = KernelOpts::default_for(BF);
    for cfg in configs() {
        assert_eq!(
            global_dot(&mut dev, &z, &z, cfg, opts).unwrap().out,
            Some(0.0)
        );
    }
    let l1 = layout(1, 1, 1);
    let mut one = device(1, 1);
    let ones = DistVector::from_fn(l1, FP, |_| 1.0);
    let got = global_dot(
        &mut one,
        &ones,
        &ones,
        ReductionConfig::default(),
        KernelOpts::default_for(FP),
    )
    .unwrap()
    .out;
    assert_eq!(got, Some(1024.0));
    // Sequential BF16 accumulation stalls once the spacing reaches 2: 256 + 1 rounds to 256.
    let ones = DistVector::from_fn(l1, BF, |_| 1.0);
    assert_eq!(
        global_dot(&mut one, &ones, &ones, ReductionConfig::default(), opts)
            .unwrap()
            .out,
        Some(256.0)
    );
}

fn configs() -> Vec<ReductionConfig> {
    let mut v = Vec::new();
    for g in [Granularity::ScalarFirst, Granularity::TileToRoot] {
        for r in [Routing::Naive, Routing::Center, Routing::Direct] {
            v.push(ReductionConfig::new(g, r));
        }
    }
    v
}

fn replay(
    x: &DistVector,
    y: &DistVector,
    w: usize,
    h: usize,
    cfg: ReductionConfig,
    fmt: ScalarFmt,
) -> f32 {
    let parts: Vec<Vec<f32>> = (0..w * h)
        .map(|c| partial(&core_tile_values(x, c), &core_tile_values(y, c), fmt))
        .collect();
    let p = match cfg.routing {
        Routing::Naive => Pattern::Naive,
        Routing::Center => Pattern::Center,
        Routing::Direct => Pattern::Direct,
    };
    match cfg.granularity {
        Granularity::ScalarFirst => replay_scalar(&parts, w, h, p, fmt),
        Granularity::TileToRoot => replay_tile(&parts, w, h, p, fmt),
    }
}

#[test]
fn dot_matches_order_replay() {
    for (w, h) in [(2, 2), (3, 2), (4, 3), (1, 5)] {
        for fmt in [BF, FP] {
            let l = layout(w, h, 3);
            let (x, y) = (
                random_vec(11 + w as u64, l, fmt),
                random_vec(17 + h as u64, l, fmt),
            );
            let mut dev = device(w, h);
            for cfg in configs() {
                let got = global_dot(&mut dev, &x, &y, cfg, KernelOpts::default_for(fmt))
                    .unwrap()
                    .out
                    .unwrap();
                let want = replay(&x, &y, w, h, cfg, fmt);
                assert_eq!(got.to_bits(), want.to_bits(), "{w}x{h} {fmt:?} {cfg:?}");
            }
        }
    }
}

fn agree(x: &DistVector, y: &DistVector, w: usize, h: usize) -> (f32, f32) {
    let mut dev = device(w, h);
    let opts = KernelOpts::default_for(x.fmt());
    let mut run = |g| {
        global_dot(
            &mut dev,
            x,
            y,
            ReductionConfig::new(g, Routing::Center),
            opts,
        )
        .unwrap()
        .out
        .unwrap()
    };
    (run(Granularity::ScalarFirst), run(Granularity::TileToRoot))
}

#[test]
fn dot_methods_agree_within_rounding() {
    let l = layout(4, 4, 4);
    let pos = |seed| {
        let v = nonzero_values(&mut rng(seed), l.len(), FP, 0.01, 2.0);
        DistVector::from_values(l, FP, &v.iter().map(|v| v.abs()).collect::<Vec<_>>()).unwrap()
    };
    let (a, b) = agree(&pos(21), &pos(22), 4, 4);
    assert!((a - b).abs() <= a.abs() / 64.0, "{a} vs {b}");

    // BF16 only meets the bound when the accumulation chains are short.
    let l = layout(2, 2, 1);
    for seed in 0..50u64 {
        let mut r = rng(seed);
        let vals = nonzero_values(&mut r, 4, BF, 0.5, 2.0);
        let mut x = vec![0.0; l.len()];
        for (core, v) in vals.iter().enumerate() {
            x[core * 1024 + (seed as usize * 37 + core * 101) % 1024] = v.abs();
        }
        let x = DistVector::from_values(l, BF, &x).unwrap();
        let (a, b) = agree(&x, &x, 2, 2);
        assert!((a - b).abs() <= a.abs() / 64.0, "{a} vs {b}");
    }
}

#[test]
fn precond_dot_equals_dot_with_scaled_copy() {
    let l = layout(3, 2, 2);
    let r = random_vec(23, l, BF);
    let c = scalar_from_f64(1.0 / 6.0, BF);
    let opts = KernelOpts::default_for(BF);
    let mut dev = device(3, 2);
    for cfg in configs() {
        let a = dot_with_precond(&mut dev, &r, c, cfg, opts).unwrap().out;
        let z = dist_scale(&mut dev, c, &r, opts).unwrap().out;
        let b = global_dot(&mut dev, &r, &z, cfg, opts).unwrap().out;
        assert_eq!(a.map(f32::to_bits), b.map(f32::to_bits));
    }
}

#[test]
fn dot_on_one_core_ignores_routing() {
    let l = layout(1, 1, 4);
    let x = random_vec(24, l, FP);
    let opts = KernelOpts::default_for(FP);
    let mut a = device(1, 1);
    let mut b = device(1, 1);
    let na = global_dot(
        &mut a,
        &x,
        &x,
        ReductionConfig::new(Granularity::ScalarFirst, Routing::Naive),
        opts,
    )
    .unwrap();
    let nb = global_dot(
        &mut b,
        &x,
        &x,
        ReductionConfig::new(Granularity::ScalarFirst, Routing::Center),
        opts,
    )
    .unwrap();
    assert_eq!(na.out, nb.out);
    assert_eq!(na.stats.cycles(), nb.stats.cycles());
}

fn grid_values(seed: u64, g: &GridDistribution, fmt: ScalarFmt) -> Vec<f64> {
    nonzero_values(&mut rng(seed), g.num_points(), fmt, 0.01, 4.0)
}

fn check_stencil(g: GridDistribution, fmt: ScalarFmt, seed: u64) {
    let vals = grid_values(seed, &g, fmt);
    let u = g.scatter(fmt, &vals).unwrap();
    let c = StencilCoeffs::laplacian();
    let mut dev = device(g.px, g.py);
    let out = stencil_apply(
        &mut dev,
        &g,
        &u,
        &c,
        StencilVariant::Full,
        KernelOpts::default_for(fmt),
    )
    .unwrap()
    .out;
    let got = g.gather(&out).unwrap();
    let uf: Vec<f32> = vals.iter().map(|&v| v as f32).collect();
    let want = stencil_loop(&uf, g.nx, g.ny, g.nz, c.to_array(), fmt);
    assert_eq!(bits(&got), bits(&want), "{g:?} {fmt:?}");
}

#[test]
fn stencil_single_core_matches_loop() {
    for fmt in [BF, FP] {
        check_stencil(GridDistribution::new(16, 64, 4, 1, 1).unwrap(), fmt, 30);
    }
}

#[test]
fn stencil_multi_core_matches_loop() {
    let cases = [
        (1, 1, 2, 2, 3),
        (2, 1, 1, 1, 2),
        (1, 2, 1, 1, 2),
        (2, 2, 1, 2, 2),
        (3, 3, 1, 1, 2),
        (4, 2, 2, 1, 1),
        (2, 3, 1, 1, 3),
    ];
    for (i, &(px, py, tx, ty, nz)) in cases.iter().enumerate() {
        for fmt in [BF, FP] {
            check_stencil(
                GridDistribution::from_tiles(tx, ty, nz, px, py).unwrap(),
                fmt,
                40 + i as u64,
            );
        }
    }
}

#[test]
fn stencil_examples() {
    let g = GridDistribution::from_tiles(1, 1, 3, 2, 2).unwrap();
    let mut dev = device(2, 2);
    let c = StencilCoeffs::laplacian();
    let opts = KernelOpts::default_for(BF);
    let z = DistVector::zeros(g.layout(), BF);
    let out = stencil_apply(&mut dev, &g, &z, &c, StencilVariant::Full, opts)
        .unwrap()
        .out;
    assert!(out.to_values().unwrap().iter().all(|&v| v == 0.0));

    let u = g.scatter(BF, &vec![3.0; g.num_points()]).unwrap();
    let out = g
        .gather(
            &stencil_apply(&mut dev, &g, &u, &c, StencilVariant::Full, opts)
                .unwrap()
                .out,
        )
        .unwrap();
    for k in 1..g.nz - 1 {
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                assert_eq!(out[g.global_index(i, j, k)], 0.0);
            }
        }
    }
}

#[test]
fn stencil_is_schedule_independent_and_cost_only_agrees() {
    let g = GridDistribution::from_tiles(2, 1, 3, 3, 2).unwrap();
    let u = g.scatter(BF, &grid_values(50, &g, BF)).unwrap();
    let c = StencilCoeffs::laplacian();
    let opts = KernelOpts::default_for(BF);
    let base = DeviceConfig::default().with_grid(3, 2);
    let run = |cfg: DeviceConfig| {
        let mut dev = Device::new(cfg).unwrap();
        let u = if dev.exec_mode() == ExecMode::Full {
            u.clone()
        } else {
            DistVector::placeholder(g.layout(), BF)
        };
        let l = stencil_apply(&mut dev, &g, &u, &c, StencilVariant::Full, opts).unwrap();
        (l.out, l.stats.cycles(), l.stats.ledgers)
    };
    let fwd = run(base.clone());
    let rev = run(DeviceConfig {
        schedule: SchedulePolicy::Reverse,
        ..base.clone()
    });
    let cost = run(base.clone().with_exec(ExecMode::CostOnly));
    assert_eq!(fwd.0, rev.0);
    assert_eq!(fwd.1, rev.1);
    assert_eq!(fwd.2, rev.2);
    assert_eq!(fwd.1, cost.1);
    assert_eq!(fwd.2, cost.2);
}

#[test]
fn halo_single_core_is_all_zero_without_traffic() {
    let g = GridDistribution::from_tiles(1, 1, 2, 1, 1).unwrap();
    let u = g.scatter(FP, &grid_values(60, &g, FP)).unwrap();
    let mut dev = device(1, 1);
    let l = halo_exchange(
        &mut dev,
        &g,
        &u,
        StencilVariant::Full,
        KernelOpts::default_for(FP),
    )
    .unwrap();
    for h in &l.out.unwrap()[0] {
        assert!(h
            .north
            .iter()
            .chain(&h.south)
            .chain(&h.west)
            .chain(&h.east)
            .all(|&v| v == 0.0));
    }
    assert_eq!(
        l.stats
            .core_ledger(0)
            .get(tilesim_core::costmodel::Category::Noc),
        0
    );
}

#[test]
fn halo_constant_field_crosses_cores() {
    let g = GridDistribution::from_tiles(1, 1, 1, 2, 1).unwrap();
    let u = g.scatter(BF, &vec![5.0; g.num_points()]).unwrap();
    let mut dev = device(2, 1);
    let h = halo_exchange(
        &mut dev,
        &g,
        &u,
        StencilVariant::Full,
        KernelOpts::default_for(BF),
    )
    .unwrap()
    .out
    .unwrap();
    assert!(h[0][0].east.iter().all(|&v| v == 5.0));
    assert!(h[1][0].west.iter().all(|&v| v == 5.0));
    assert!(h[0][0].west.iter().all(|&v| v == 0.0));
}

#[test]
fn halos_equal_neighbour_boundaries() {
    let g = GridDistribution::from_tiles(2, 2, 2, 3, 3).unwrap();
    let vals = grid_values(61, &g, BF);
    let u = g.scatter(BF, &vals).unwrap();
    let mut dev = device(3, 3);
    let h = halo_exchange(
        &mut dev,
        &g,
        &u,
        StencilVariant::Full,
        KernelOpts::default_for(BF),
    )
    .unwrap()
    .out
    .unwrap();
    let at = |i: isize, j: isize, k: usize| -> f32 {
        if i < 0 || j < 0 || i as usize >= g.nx || j as usize >= g.ny {
            0.0
        } else {
            vals[g.global_index(i as usize, j as usize, k)] as f32
        }
    };
    for k in 0..g.nz {
        for j0 in (0..g.ny).step_by(64) {
            for i0 in (0..g.nx).step_by(16) {
                let p = g.locate(i0, j0, k);
                let th = &h[p.core][p.tile];
                let (i0, j0) = (i0 as isize, j0 as isize);
                for c in 0..16 {
                    assert_eq!(th.north[c], at(i0 + c as isize, j0 - 1, k));
                    assert_eq!(th.south[c], at(i0 + c as isize, j0 + 64, k));
                }
                for r in 0..64 {
                    assert_eq!(th.west[r], at(i0 - 1, j0 + r as isize, k));
                    assert_eq!(th.east[r], at(i0 + 16, j0 + r as isize, k));
                }
            }
        }
    }
}

#[test]
fn no_halo_variant_skips_exchange() {
    let g = GridDistribution::from_tiles(1, 1, 2, 2, 2).unwrap();
    let u = DistVector::placeholder(g.layout(), BF);
    let cfg = DeviceConfig::default()
        .with_grid(2, 2)
        .with_exec(ExecMode::CostOnly);
    let c = StencilCoeffs::laplacian();
    let opts = KernelOpts::default_for(BF);
    let mut cycles = Vec::new();
    for v in StencilVariant::ALL {
        let mut dev = Device::new(cfg.clone()).unwrap();
        cycles.push(
            stencil_apply(&mut dev, &g, &u, &c, v, opts)
                .unwrap()
                .stats
                .cycles(),
        );
    }
    let [full, no_halo, no_zf, neither] = cycles[..] else {
        unreachable!()
    };
    assert!(
        full >= no_halo && full >= no_zf && no_halo >= neither && no_zf >= neither,
        "{cycles:?}"
    );
    assert!(full > neither);
}

#[test]
fn sfpu_and_fpu_agree_on_values() {
    let l = layout(2, 1, 2);
    let (x, y) = (random_vec(70, l, BF), random_vec(71, l, BF));
    let mut dev = device(2, 1);
    let a = dist_axpy(&mut dev, 2.0, &x, &y, KernelOpts::new(Unit::Fpu)).unwrap();
    let b = dist_axpy(&mut dev, 2.0, &x, &y, KernelOpts::new(Unit::Sfpu)).unwrap();
    assert_eq!(a.out, b.out);
    assert!(b.stats.cycles() > a.stats.cycles());
    assert!(dist_axpy(
        &mut dev,
        2.0,
        &random_vec(72, l, FP),
        &random_vec(73, l, FP),
        KernelOpts::new(Unit::Fpu)
    )
    .is_err());
}
