//! Run configuration: a flat file of dotted `key = value` lines.
//!
//! ```text
//! grid.width = 8
//! grid.height = 7
//! cost.zero_fill_cycles_per_elem = 8
//! sweep.cores = ["1x1", "2x2", "4x4", "8x7"]
//! sweep.tiles_per_core = [1, 4, 64, 128]
//! solve.epsilon = 1e-4
//! ```
//!
//! Every key is listed in [`KEYS`]; anything else is rejected.

use std::collections::BTreeMap;
use std::path::Path;

use tilesim_core::costmodel::Unit;
use tilesim_core::device::DeviceConfig;
use tilesim_core::kernels::{Granularity, ReductionConfig, Routing, StencilVariant};
use tilesim_core::numerics::ScalarFmt;
use tilesim_core::solver::PcgMode;
use toml::Value;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("config key '{key}': {msg}")]
    BadValue { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] tilesim_core::Error),
}

type Res<T> = Result<T, ConfigError>;

/// Recognized keys with a one-line description each.
pub const KEYS: &[(&str, &str)] = &[
    ("grid.width", "physical core grid width (1..=8)"),
    ("grid.height", "physical core grid height (1..=7)"),
    ("noc.hop_latency", "cycles per router hop"),
    ("noc.link_bandwidth", "NoC link bytes/cycle"),
    ("sram.capacity", "SRAM bytes per core"),
    (
        "sram.reserved_overhead",
        "SRAM bytes per core unavailable to buffers",
    ),
    ("dram.bandwidth", "aggregate DRAM bytes/cycle"),
    ("cost.fpu_eltwise_flops_per_cycle", "FPU element-wise peak"),
    (
        "cost.sfpu_flops_per_cycle_16bit",
        "SFPU peak for 16-bit data",
    ),
    (
        "cost.sfpu_flops_per_cycle_32bit",
        "SFPU peak for 32-bit data",
    ),
    ("cost.packer_unpacker_bw", "pack/unpack bytes/cycle"),
    ("cost.dst_copy_bw", "Dst copy bytes/cycle"),
    (
        "cost.fpu_reduce_elems_per_cycle",
        "FPU reduction elements/cycle",
    ),
    (
        "cost.tile_op_issue_cycles",
        "fixed cost per issued tile operation",
    ),
    ("cost.scalar_op_cycles", "cost of one scalar operation"),
    (
        "cost.zero_fill_cycles_per_elem",
        "halo zero-fill cycles per element",
    ),
    (
        "cost.launch_overhead_cycles",
        "split-mode kernel launch overhead",
    ),
    (
        "cost.host_readback_cycles",
        "split-mode residual readback per iteration",
    ),
    ("run.cores", "core rectangle, \"WxH\""),
    ("run.tiles_per_core", "tiles per core"),
    ("run.fmt", "bf16 | fp32"),
    ("run.mode", "fused | split"),
    ("run.unit", "fpu | sfpu"),
    ("run.routing", "naive | center | direct"),
    ("run.granularity", "scalar | tile"),
    ("sweep.cores", "list of core rectangles"),
    ("sweep.tiles_per_core", "list of tiles/core"),
    ("sweep.routing", "list of routings"),
    ("sweep.granularity", "list of granularities"),
    ("sweep.variants", "list of stencil variants"),
    ("sweep.add_tiles", "list of tile counts for bench-add"),
    ("stencil.tiles_x", "tiles per core along x"),
    ("stencil.tiles_y", "tiles per core along y"),
    (
        "solve.nx",
        "global grid points along x (0: derive from cores and tiles)",
    ),
    ("solve.ny", "global grid points along y"),
    ("solve.nz", "global grid points along z"),
    ("solve.epsilon", "absolute residual threshold"),
    ("solve.max_iters", "iteration limit"),
    ("solve.shadow", "also solve in double precision on the host"),
    (
        "solve.estimate_iters",
        "cost-only estimate of this many iterations (0: full solve)",
    ),
];

/// Points swept by the benchmark commands.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub cores: Vec<(usize, usize)>,
    pub tiles_per_core: Vec<usize>,
    pub routing: Vec<Routing>,
    pub granularity: Vec<Granularity>,
    pub variants: Vec<StencilVariant>,
    pub add_tiles: Vec<usize>,
}

impl Sweep {
    pub fn reductions(&self) -> Vec<ReductionConfig> {
        let mut out = Vec::new();
        for &g in &self.granularity {
            for &r in &self.routing {
                out.push(ReductionConfig::new(g, r));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveParams {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub shadow: bool,
    pub estimate_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub device: DeviceConfig,
    pub cores: (usize, usize),
    pub tiles_per_core: usize,
    pub fmt: ScalarFmt,
    pub mode: Option<PcgMode>,
    pub unit: Option<Unit>,
    pub routing: Routing,
    pub granularity: Granularity,
    pub sweep: Sweep,
    pub stencil_tiles: (usize, usize),
    pub solve: SolveParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            device: DeviceConfig::default(),
            cores: (1, 1),
            tiles_per_core: 1,
            fmt: ScalarFmt::Bf16,
            mode: None,
            unit: None,
            routing: Routing::Center,
            granularity: Granularity::ScalarFirst,
            sweep: Sweep {
                cores: vec![(1, 1)],
                tiles_per_core: vec![1],
                routing: vec![Routing::Naive, Routing::Center],
                granularity: vec![Granularity::ScalarFirst, Granularity::TileToRoot],
                variants: StencilVariant::ALL.to_vec(),
                add_tiles: vec![1, 2, 4, 8, 16, 32, 64, 128],
            },
            stencil_tiles: (1, 1),
            solve: SolveParams {
                nx: 0,
                ny: 0,
                nz: 0,
                epsilon: 1e-4,
                max_iters: 1000,
                shadow: false,
                estimate_iters: 0,
            },
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Res<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Res<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &Value::Table(table), &mut flat);
        let mut cfg = RunConfig::default();
        for (k, v) in &flat {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &Value) -> Res<()> {
        let d = &mut self.device;
        let c = &mut d.cost;
        match key {
            "grid.width" => d.grid.width = uint(key, v)?,
            "grid.height" => d.grid.height = uint(key, v)?,
            "noc.hop_latency" => d.noc.hop_latency = uint(key, v)?,
            "noc.link_bandwidth" => d.noc.link_bandwidth = uint(key, v)?,
            "sram.capacity" => d.sram_capacity = uint(key, v)?,
            "sram.reserved_overhead" => d.reserved_overhead = uint(key, v)?,
            "dram.bandwidth" => d.dram_bandwidth = uint(key, v)?,
            "cost.fpu_eltwise_flops_per_cycle" => c.fpu_eltwise_flops_per_cycle = uint(key, v)?,
            "cost.sfpu_flops_per_cycle_16bit" => c.sfpu_flops_per_cycle_16bit = uint(key, v)?,
            "cost.sfpu_flops_per_cycle_32bit" => c.sfpu_flops_per_cycle_32bit = uint(key, v)?,
            "cost.packer_unpacker_bw" => c.packer_unpacker_bw = uint(key, v)?,
            "cost.dst_copy_bw" => c.dst_copy_bw = uint(key, v)?,
            "cost.fpu_reduce_elems_per_cycle" => c.fpu_reduce_elems_per_cycle = uint(key, v)?,
            "cost.tile_op_issue_cycles" => c.tile_op_issue_cycles = uint(key, v)?,
            "cost.scalar_op_cycles" => c.scalar_op_cycles = uint(key, v)?,
            "cost.zero_fill_cycles_per_elem" => c.zero_fill_cycles_per_elem = uint(key, v)?,
            "cost.launch_overhead_cycles" => c.launch_overhead_cycles = uint(key, v)?,
            "cost.host_readback_cycles" => c.host_readback_cycles = uint(key, v)?,
            "run.cores" => self.cores = parse_cores(&string(key, v)?).map_err(|m| bad(key, m))?,
            "run.tiles_per_core" => self.tiles_per_core = uint(key, v)?,
            "run.fmt" => self.fmt = parse_fmt(&string(key, v)?).map_err(|m| bad(key, m))?,
            "run.mode" => self.mode = Some(parse_mode(&string(key, v)?).map_err(|m| bad(key, m))?),
            "run.unit" => self.unit = Some(parse_unit(&string(key, v)?).map_err(|m| bad(key, m))?),
            "run.routing" => {
                self.routing = parse_routing(&string(key, v)?).map_err(|m| bad(key, m))?
            }
            "run.granularity" => {
                self.granularity = parse_granularity(&string(key, v)?).map_err(|m| bad(key, m))?
            }
            "sweep.cores" => self.sweep.cores = list(key, v, |s| parse_cores(&s))?,
            "sweep.tiles_per_core" => self.sweep.tiles_per_core = uint_list(key, v)?,
            "sweep.routing" => self.sweep.routing = list(key, v, |s| parse_routing(&s))?,
            "sweep.granularity" => {
                self.sweep.granularity = list(key, v, |s| parse_granularity(&s))?
            }
            "sweep.variants" => self.sweep.variants = list(key, v, |s| parse_variant(&s))?,
            "sweep.add_tiles" => self.sweep.add_tiles = uint_list(key, v)?,
            "stencil.tiles_x" => self.stencil_tiles.0 = uint(key, v)?,
            "stencil.tiles_y" => self.stencil_tiles.1 = uint(key, v)?,
            "solve.nx" => self.solve.nx = uint(key, v)?,
            "solve.ny" => self.solve.ny = uint(key, v)?,
            "solve.nz" => self.solve.nz = uint(key, v)?,
            "solve.epsilon" => self.solve.epsilon = float(key, v)?,
            "solve.max_iters" => self.solve.max_iters = uint(key, v)?,
            "solve.shadow" => {
                self.solve.shadow = v
                    .as_bool()
                    .ok_or_else(|| bad(key, "expected a boolean".into()))?
            }
            "solve.estimate_iters" => self.solve.estimate_iters = uint(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Res<()> {
        self.device.validate()?;
        let g = self.device.grid;
        for &(w, h) in self.sweep.cores.iter().chain([&self.cores]) {
            if w == 0 || h == 0 || w > g.width || h > g.height {
                return Err(bad(
                    "cores",
                    format!("{w}x{h} does not fit the {}x{} grid", g.width, g.height),
                ));
            }
        }
        if self.tiles_per_core == 0 || self.sweep.tiles_per_core.contains(&0) {
            return Err(bad("tiles_per_core", "must be positive".into()));
        }
        if self.stencil_tiles.0 == 0 || self.stencil_tiles.1 == 0 {
            return Err(bad(
                "stencil.tiles_x",
                "stencil tiles must be positive".into(),
            ));
        }
        if self.solve.epsilon.is_nan() || self.solve.epsilon <= 0.0 {
            return Err(bad("solve.epsilon", "must be positive".into()));
        }
        if self.unit == Some(Unit::Fpu) && self.fmt == ScalarFmt::Fp32 {
            return Err(bad("run.unit", "the FPU does not support fp32".into()));
        }
        Ok(())
    }

    /// FPU for BF16 and SFPU for FP32 unless overridden.
    pub fn unit(&self) -> Unit {
        self.unit.unwrap_or(match self.fmt {
            ScalarFmt::Bf16 => Unit::Fpu,
            ScalarFmt::Fp32 => Unit::Sfpu,
        })
    }

    pub fn mode(&self) -> PcgMode {
        self.mode.unwrap_or(match self.fmt {
            ScalarFmt::Bf16 => PcgMode::Fused,
            ScalarFmt::Fp32 => PcgMode::Split,
        })
    }

    pub fn reduction(&self) -> ReductionConfig {
        ReductionConfig::new(self.granularity, self.routing)
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn bad(key: &str, msg: String) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        msg,
    }
}

fn uint<T: TryFrom<i64>>(key: &str, v: &Value) -> Res<T> {
    v.as_integer()
        .filter(|&i| i >= 0)
        .and_then(|i| T::try_from(i).ok())
        .ok_or_else(|| bad(key, format!("expected a non-negative integer, got {v}")))
}

fn float(key: &str, v: &Value) -> Res<f64> {
    v.as_float()
        .or_else(|| v.as_integer().map(|i| i as f64))
        .ok_or_else(|| bad(key, format!("expected a number, got {v}")))
}

fn string(key: &str, v: &Value) -> Res<String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| bad(key, format!("expected a string, got {v}")))
}

fn list<T>(key: &str, v: &Value, f: impl Fn(String) -> Result<T, String>) -> Res<Vec<T>> {
    let arr = v
        .as_array()
        .ok_or_else(|| bad(key, "expected a list".into()))?;
    arr.iter()
        .map(|e| f(string(key, e)?).map_err(|m| bad(key, m)))
        .collect()
}

fn uint_list(key: &str, v: &Value) -> Res<Vec<usize>> {
    let arr = v
        .as_array()
        .ok_or_else(|| bad(key, "expected a list".into()))?;
    arr.iter().map(|e| uint(key, e)).collect()
}

pub fn parse_cores(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let p = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("expected WxH, got '{s}'"))
    };
    Ok((p(w)?, p(h)?))
}

pub fn parse_fmt(s: &str) -> Result<ScalarFmt, String> {
    match s {
        "bf16" => Ok(ScalarFmt::Bf16),
        "fp32" => Ok(ScalarFmt::Fp32),
        _ => Err(format!("unknown format '{s}' (bf16, fp32)")),
    }
}

pub fn parse_mode(s: &str) -> Result<PcgMode, String> {
    match s {
        "fused" => Ok(PcgMode::Fused),
        "split" => Ok(PcgMode::Split),
        _ => Err(format!("unknown mode '{s}' (fused, split)")),
    }
}

pub fn parse_unit(s: &str) -> Result<Unit, String> {
    match s {
        "fpu" => Ok(Unit::Fpu),
        "sfpu" => Ok(Unit::Sfpu),
        _ => Err(format!("unknown unit '{s}' (fpu, sfpu)")),
    }
}

pub fn parse_routing(s: &str) -> Result<Routing, String> {
    match s {
        "naive" => Ok(Routing::Naive),
        "center" => Ok(Routing::Center),
        "direct" => Ok(Routing::Direct),
        _ => Err(format!("unknown routing '{s}' (naive, center, direct)")),
    }
}

pub fn parse_granularity(s: &str) -> Result<Granularity, String> {
    match s {
        "scalar" => Ok(Granularity::ScalarFirst),
        "tile" => Ok(Granularity::TileToRoot),
        _ => Err(format!("unknown granularity '{s}' (scalar, tile)")),
    }
}

pub fn parse_variant(s: &str) -> Result<StencilVariant, String> {
    StencilVariant::ALL
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| {
            format!("unknown stencil variant '{s}' (full, no_halo, no_zero_fill, neither)")
        })
}

pub fn fmt_name(f: ScalarFmt) -> &'static str {
    match f {
        ScalarFmt::Bf16 => "bf16",
        ScalarFmt::Fp32 => "fp32",
    }
}

pub fn unit_name(u: Unit) -> &'static str {
    match u {
        Unit::Fpu => "fpu",
        Unit::Sfpu => "sfpu",
    }
}

pub fn routing_name(r: Routing) -> &'static str {
    match r {
        Routing::Naive => "naive",
        Routing::Center => "center",
        Routing::Direct => "direct",
    }
}

pub fn granularity_name(g: Granularity) -> &'static str {
    match g {
        Granularity::ScalarFirst => "scalar",
        Granularity::TileToRoot => "tile",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys() {
        let c = RunConfig::parse(
            "grid.width = 4\nnoc.hop_latency = 2\nsweep.cores = [\"1x1\", \"2x2\"]\n[solve]\nepsilon = 1e-3\n",
        )
        .unwrap();
        assert_eq!(c.device.grid.width, 4);
        assert_eq!(c.device.noc.hop_latency, 2);
        assert_eq!(c.sweep.cores, vec![(1, 1), (2, 2)]);
        assert_eq!(c.solve.epsilon, 1e-3);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::parse("grid.depth = 3").unwrap_err();
        assert_eq!(e.to_string(), "unknown config key 'grid.depth'");
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(matches!(
            RunConfig::parse("grid.width = -1"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            RunConfig::parse("grid.width = 9"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::parse("run.fmt = \"fp16\""),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            RunConfig::parse("sweep.cores = [\"9x1\"]"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn every_documented_key_is_accepted() {
        for (k, _) in KEYS {
            let v = match *k {
                "run.cores" => "\"1x1\"".to_string(),
                "run.fmt" => "\"bf16\"".into(),
                "run.mode" => "\"fused\"".into(),
                "run.unit" => "\"fpu\"".into(),
                "run.routing" => "\"naive\"".into(),
                "run.granularity" => "\"tile\"".into(),
                "sweep.cores" => "[\"1x1\"]".into(),
                "sweep.routing" => "[\"naive\"]".into(),
                "sweep.granularity" => "[\"scalar\"]".into(),
                "sweep.variants" => "[\"full\"]".into(),
                "sweep.tiles_per_core" | "sweep.add_tiles" => "[1]".into(),
                "solve.shadow" => "true".into(),
                "solve.epsilon" => "0.5".into(),
                "sram.capacity" => "1572864".into(),
                "sram.reserved_overhead" => "180224".into(),
                "grid.width" | "grid.height" => "1".into(),
                _ => "3".into(),
            };
            RunConfig::parse(&format!("{k} = {v}")).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }
}
