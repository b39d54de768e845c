//! Oracle comparisons behind the `validate` command.

use serde::Serialize;
use serde_json::{json, Value};
use tilesim_core::costmodel::Unit;
use tilesim_core::device::{CoreRect, Device, DeviceConfig};
use tilesim_core::kernels::{
    global_dot, shift_tile, stencil_apply, DistVector, Granularity, GridDistribution, KernelOpts,
    ReductionConfig, Routing, StencilCoeffs, StencilVariant, VecLayout,
};
use tilesim_core::numerics::{ScalarFmt, ShiftDir, Tile, TileShape};
use tilesim_core::solver::{
    max_tiles_per_core, pcg_solve, shadow_solve, PcgConfig, PcgMode, ShadowGrid, SramPlan,
};

use crate::oracles;

/// Deliberate defects for negative-control testing of the harness itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Swaps two subtiles of every linearized image before comparison.
    TileLinearize,
}

impl Fault {
    pub fn parse(s: &str) -> Option<Fault> {
        match s {
            "tile-linearize" => Some(Fault::TileLinearize),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub check: &'static str,
    pub seed: u64,
    pub passed: bool,
    pub detail: String,
    /// Inputs of the first failing case, enough to replay it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<Value>,
}

type Check = fn(u64, Option<Fault>) -> Result<String, (String, Value)>;

pub const CHECKS: &[(&str, Check)] = &[
    ("tile_linearize", check_linearize),
    ("tile_transpose", check_transpose),
    ("tile_shift", check_shift),
    ("stencil_vs_matrix", check_stencil),
    ("dot_order_replay", check_dot),
    ("pcg_fp32_vs_reference", check_pcg),
    ("pcg_shadow", check_shadow),
    ("sram_capacity", check_capacity),
];

pub fn run_all(seed: u64, fault: Option<Fault>) -> Vec<Outcome> {
    CHECKS
        .iter()
        .map(|&(check, f)| match f(seed, fault) {
            Ok(detail) => Outcome {
                check,
                seed,
                passed: true,
                detail,
                case: None,
            },
            Err((detail, case)) => Outcome {
                check,
                seed,
                passed: false,
                detail,
                case: Some(case),
            },
        })
        .collect()
}

const FMTS: [ScalarFmt; 2] = [ScalarFmt::Bf16, ScalarFmt::Fp32];

fn random_tile(seed: u64, shape: TileShape, fmt: ScalarFmt) -> Tile {
    let v = oracles::values(&mut oracles::rng(seed), 1024, fmt, 1e-3, 1e3);
    let mut it = v.into_iter();
    Tile::from_fn(shape, fmt, |_, _| it.next().unwrap())
}

fn linearize_impl(t: &Tile, fault: Option<Fault>) -> Vec<u8> {
    let mut img = t.linearize();
    if fault == Some(Fault::TileLinearize) {
        let sub = 256 * t.fmt().byte_width();
        let (a, b) = img.split_at_mut(sub);
        a.swap_with_slice(&mut b[..sub]);
    }
    img
}

fn check_linearize(seed: u64, fault: Option<Fault>) -> Result<String, (String, Value)> {
    let mut n = 0;
    for (i, shape) in [TileShape::Square32, TileShape::Tall64x16]
        .into_iter()
        .enumerate()
    {
        for fmt in FMTS {
            for k in 0..8u64 {
                let s = seed.wrapping_mul(1000) + i as u64 * 100 + k;
                let t = random_tile(s, shape, fmt);
                let got = linearize_impl(&t, fault);
                if got != oracles::linearize(&t) {
                    let at = got
                        .iter()
                        .zip(oracles::linearize(&t))
                        .position(|(a, b)| *a != b)
                        .unwrap_or(0);
                    return Err((
                        format!("image differs at byte {at}"),
                        json!({"shape": format!("{shape:?}"), "fmt": format!("{fmt:?}"), "tile_seed": s}),
                    ));
                }
                if Tile::delinearize(&got, shape, fmt).ok().as_ref() != Some(&t) {
                    return Err((
                        "round trip failed".into(),
                        json!({"shape": format!("{shape:?}"), "tile_seed": s}),
                    ));
                }
                n += 1;
            }
        }
    }
    Ok(format!("{n} tiles"))
}

fn check_transpose(seed: u64, _: Option<Fault>) -> Result<String, (String, Value)> {
    for shape in [TileShape::Square32, TileShape::Tall64x16] {
        for fmt in FMTS {
            let s = seed ^ 0x7a;
            let t = random_tile(s, shape, fmt);
            let want = oracles::transpose_image(&oracles::linearize(&t), fmt);
            if oracles::linearize(&t.transpose_subtiles()) != want {
                return Err((
                    "subtile transpose differs".into(),
                    json!({"shape": format!("{shape:?}"), "fmt": format!("{fmt:?}"), "tile_seed": s}),
                ));
            }
        }
    }
    Ok("4 tiles".into())
}

fn check_shift(seed: u64, _: Option<Fault>) -> Result<String, (String, Value)> {
    for fmt in FMTS {
        let s = seed ^ 0x51;
        let t = random_tile(s, TileShape::Tall64x16, fmt);
        for dir in ShiftDir::ALL {
            let got = shift_tile(&t, dir).map_err(|e| (e.to_string(), json!({"tile_seed": s})))?;
            if got.data() != oracles::shifted(&t, dir).as_slice() {
                return Err((
                    format!("{dir:?} view differs"),
                    json!({"fmt": format!("{fmt:?}"), "dir": format!("{dir:?}"), "tile_seed": s}),
                ));
            }
        }
    }
    Ok("8 views".into())
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Grid shape for case `k`: tiles per core, layers and core grid.
fn stencil_case(seed: u64, k: u64) -> (usize, usize, usize, usize, usize) {
    let h = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(k * 1442695040888963407)
        >> 33;
    let px = 1 + (h % 4) as usize;
    let py = 1 + ((h >> 2) % 4) as usize;
    let tx = 1 + ((h >> 4) % 2) as usize;
    let ty = 1 + ((h >> 5) % 2) as usize;
    let nz = 1 + ((h >> 6) % 3) as usize;
    (tx, ty, nz, px, py)
}

/// One stencil comparison against the assembled matrix; `Ok(points)`.
#[allow(clippy::too_many_arguments)]
pub fn stencil_case_matches(
    tx: usize,
    ty: usize,
    nz: usize,
    px: usize,
    py: usize,
    fmt: ScalarFmt,
    unit: Unit,
    seed: u64,
) -> Result<usize, String> {
    let g = GridDistribution::from_tiles(tx, ty, nz, px, py).map_err(|e| e.to_string())?;
    let coeffs = StencilCoeffs::laplacian();
    let vals = oracles::values(&mut oracles::rng(seed), g.num_points(), fmt, 0.01, 4.0);
    let u = g.scatter(fmt, &vals).map_err(|e| e.to_string())?;
    let mut dev =
        Device::new(DeviceConfig::default().with_grid(px, py)).map_err(|e| e.to_string())?;
    let out = stencil_apply(
        &mut dev,
        &g,
        &u,
        &coeffs,
        StencilVariant::Full,
        KernelOpts::new(unit),
    )
    .map_err(|e| e.to_string())?
    .out;
    let got = g.gather(&out).map_err(|e| e.to_string())?;
    let m = oracles::assemble(g.nx, g.ny, g.nz, coeffs.to_array());
    let uf: Vec<f32> = vals.iter().map(|&v| v as f32).collect();
    let want = oracles::csr_apply(&m, &uf, fmt);
    match bits(&got)
        .iter()
        .zip(bits(&want))
        .position(|(a, b)| *a != b)
    {
        None => Ok(g.num_points()),
        Some(i) => Err(format!("point {i}: got {:e}, want {:e}", got[i], want[i])),
    }
}

fn check_stencil(seed: u64, _: Option<Fault>) -> Result<String, (String, Value)> {
    let mut points = 0;
    for k in 0..4 {
        let (tx, ty, nz, px, py) = stencil_case(seed, k);
        for fmt in FMTS {
            let unit = if fmt == ScalarFmt::Bf16 {
                Unit::Fpu
            } else {
                Unit::Sfpu
            };
            let s = seed.wrapping_add(k);
            points += stencil_case_matches(tx, ty, nz, px, py, fmt, unit, s).map_err(|d| {
                (d, json!({"tiles_x": tx, "tiles_y": ty, "nz": nz, "cores": format!("{px}x{py}"), "fmt": format!("{fmt:?}"), "value_seed": s}))
            })?;
        }
    }
    Ok(format!("{points} points bit-exact"))
}

fn check_dot(seed: u64, _: Option<Fault>) -> Result<String, (String, Value)> {
    let (w, h, tiles) = (3, 2, 2);
    let mut n = 0;
    for fmt in FMTS {
        let l = VecLayout::new(CoreRect::new(0, 0, w, h), tiles);
        let mut r = oracles::rng(seed ^ 0xd07);
        let xs = oracles::values(&mut r, l.len(), fmt, 0.01, 2.0);
        let ys = oracles::values(&mut r, l.len(), fmt, 0.01, 2.0);
        let x = DistVector::from_values(l, fmt, &xs).expect("in-format values");
        let y = DistVector::from_values(l, fmt, &ys).expect("in-format values");
        let chunk = |v: &[f64], core: usize| -> Vec<Vec<f32>> {
            (0..tiles)
                .map(|t| {
                    v[(core * tiles + t) * 1024..][..1024]
                        .iter()
                        .map(|&a| a as f32)
                        .collect()
                })
                .collect()
        };
        let partials: Vec<Vec<f32>> = (0..w * h)
            .map(|c| oracles::dot_partial(&chunk(&xs, c), &chunk(&ys, c), fmt))
            .collect();
        for g in [Granularity::ScalarFirst, Granularity::TileToRoot] {
            for ro in [Routing::Naive, Routing::Center, Routing::Direct] {
                let mut dev =
                    Device::new(DeviceConfig::default().with_grid(w, h)).expect("valid grid");
                let got = global_dot(
                    &mut dev,
                    &x,
                    &y,
                    ReductionConfig::new(g, ro),
                    KernelOpts::default_for(fmt),
                )
                .map_err(|e| (e.to_string(), json!({})))?
                .out
                .unwrap_or(f32::NAN);
                let want = oracles::replay_dot(&partials, w, h, g, ro, fmt);
                if got.to_bits() != want.to_bits() {
                    return Err((
                        format!("{g:?}/{ro:?}: got {got:e}, want {want:e}"),
                        json!({"fmt": format!("{fmt:?}"), "granularity": format!("{g:?}"), "routing": format!("{ro:?}"), "value_seed": seed ^ 0xd07}),
                    ));
                }
                n += 1;
            }
        }
    }
    Ok(format!("{n} reductions bit-exact"))
}

/// FP32 solve on one 64x16 plane stack against double-precision CG;
/// returns the relative infinity-norm error.
pub fn pcg_fp32_error(seed: u64, nz: usize, epsilon: f64) -> Result<(f64, usize), String> {
    let (nx, ny) = (16, 64);
    let g = GridDistribution::new(nx, ny, nz, 1, 1).map_err(|e| e.to_string())?;
    let b = oracles::rhs(seed, g.num_points());
    let fmt = ScalarFmt::Fp32;
    let bv = g.scatter(fmt, &b).map_err(|e| e.to_string())?;
    let mut dev =
        Device::new(DeviceConfig::default().with_grid(1, 1)).map_err(|e| e.to_string())?;
    let x0 = DistVector::zeros(g.layout(), fmt);
    let rep = pcg_solve(
        &mut dev,
        &g,
        &bv,
        &x0,
        &PcgConfig::new(fmt).with_epsilon(epsilon),
    )
    .map_err(|e| e.to_string())?;
    if !rep.state.converged {
        return Err(format!("not converged after {} iterations", rep.state.iter));
    }
    let b_used: Vec<f64> = g
        .gather(&bv)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|&v| v as f64)
        .collect();
    let m = oracles::assemble(nx, ny, nz, StencilCoeffs::laplacian().to_array());
    let (xr, _) = oracles::reference_cg(&m, &b_used, 1e-10, 20 * g.num_points());
    let x = g.gather(&rep.state.x).map_err(|e| e.to_string())?;
    let err = x
        .iter()
        .zip(&xr)
        .map(|(&a, b)| (a as f64 - b).abs())
        .fold(0.0, f64::max);
    let scale = xr.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok((err / scale, rep.state.iter))
}

fn check_pcg(seed: u64, _: Option<Fault>) -> Result<String, (String, Value)> {
    let case = json!({"nx": 16, "ny": 64, "nz": 4, "epsilon": 1e-4, "rhs_seed": seed});
    let (err, iters) = pcg_fp32_error(seed, 4, 1e-4).map_err(|d| (d, case.clone()))?;
    if err > 1e-3 {
        return Err((format!("relative error {err:e} > 1e-3"), case));
    }
    Ok(format!("{iters} iterations, relative error {err:.3e}"))
}

/// Shadow solve on `grid`; `Ok(iterations)` when it converges within the
/// number of unknowns and matches double-precision CG.
pub fn shadow_case(grid: ShadowGrid, seed: u64) -> Result<usize, String> {
    let coeffs = StencilCoeffs::laplacian();
    let b = oracles::rhs(seed, grid.len());
    let st = shadow_solve(grid, &coeffs, &b, &vec![0.0; grid.len()], 1e-8, grid.len())
        .map_err(|e| e.to_string())?;
    if !st.converged || st.iter > grid.len() {
        return Err(format!("{} iterations without convergence", st.iter));
    }
    if !st.residual_history.iter().all(|v| v.is_finite()) {
        return Err("non-finite residual".into());
    }
    let m = oracles::assemble(grid.nx, grid.ny, grid.nz, coeffs.to_array());
    let (xr, _) = oracles::reference_cg(&m, &b, 1e-12, 20 * grid.len());
    let err =
        st.x.iter()
            .zip(&xr)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
    if err > 1e-6 {
        return Err(format!("differs from reference CG by {err:e}"));
    }
    Ok(st.iter)
}

fn check_shadow(seed: u64, _: Option<Fault>) -> Result<String, (String, Value)> {
    let mut iters = Vec::new();
    for (nx, ny, nz) in [(16, 64, 1), (32, 64, 3), (16, 128, 2)] {
        let it = shadow_case(ShadowGrid::new(nx, ny, nz), seed)
            .map_err(|d| (d, json!({"nx": nx, "ny": ny, "nz": nz, "rhs_seed": seed})))?;
        iters.push(it);
    }
    Ok(format!("iterations {iters:?}"))
}

fn check_capacity(_: u64, _: Option<Fault>) -> Result<String, (String, Value)> {
    let avail = DeviceConfig::default().sram_available();
    for (fmt, mode, max) in [
        (ScalarFmt::Bf16, PcgMode::Fused, 164),
        (ScalarFmt::Fp32, PcgMode::Split, 64),
    ] {
        let got = max_tiles_per_core(fmt, mode, avail);
        let fits = SramPlan::new(fmt, mode, max).check(avail).is_ok();
        let over = SramPlan::new(fmt, mode, max + 1).check(avail).is_err();
        if got != max || !fits || !over {
            return Err((
                format!("{fmt:?} {mode:?}: limit {got}, expected {max}"),
                json!({"fmt": format!("{fmt:?}")}),
            ));
        }
    }
    Ok("164 bf16 fused, 64 fp32 split".into())
}
