//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use tilesim_core::kernels::{Granularity, Routing};
use tilesim_core::numerics::ScalarFmt;
use tilesim_core::solver::PcgMode;

use crate::commands::{self, CmdError, Ctx};
use crate::config::{
    parse_cores, parse_fmt, parse_granularity, parse_mode, parse_routing, RunConfig,
};
use crate::validate::Fault;

#[derive(Debug, Parser)]
#[command(
    name = "tilesim",
    version,
    about = "Tile-accelerator simulator harness"
)]
pub struct Cli {
    /// Config file of dotted `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Core rectangle "WxH"; replaces the core sweep.
    #[arg(long, global = true, value_parser = parse_cores)]
    pub cores: Option<(usize, usize)>,
    /// Replaces the tiles-per-core sweep.
    #[arg(long, global = true)]
    pub tiles_per_core: Option<usize>,
    /// bf16 or fp32.
    #[arg(long, global = true, value_parser = parse_fmt)]
    pub fmt: Option<ScalarFmt>,
    /// fused or split.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<PcgMode>,
    /// naive, center or direct; replaces the routing sweep.
    #[arg(long, global = true, value_parser = parse_routing)]
    pub routing: Option<Routing>,
    /// scalar or tile; replaces the granularity sweep.
    #[arg(long, global = true, value_parser = parse_granularity)]
    pub granularity: Option<Granularity>,
    #[arg(long, global = true, hide = true, value_parser = ["tile-linearize"])]
    pub inject_fault: Option<String>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Cmd {
    /// Element-wise add throughput against the roofline.
    BenchAdd,
    /// Global dot product over core grids, tile counts and reduction schemes.
    BenchDot,
    /// Stencil application with and without halo exchange and zero fill.
    BenchStencil,
    /// PCG solves with residual history, summary and traces.
    Solve,
    /// Roofline bounds per compute unit.
    Roofline,
    /// Runs every oracle comparison.
    Validate,
}

impl Cmd {
    pub fn name(self) -> &'static str {
        match self {
            Cmd::BenchAdd => "bench-add",
            Cmd::BenchDot => "bench-dot",
            Cmd::BenchStencil => "bench-stencil",
            Cmd::Solve => "solve",
            Cmd::Roofline => "roofline",
            Cmd::Validate => "validate",
        }
    }
}

impl Cli {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn run_config(&self) -> Result<RunConfig, CmdError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(c) = self.cores {
            cfg.cores = c;
            cfg.sweep.cores = vec![c];
        }
        if let Some(t) = self.tiles_per_core {
            cfg.tiles_per_core = t;
            cfg.sweep.tiles_per_core = vec![t];
        }
        if let Some(f) = self.fmt {
            cfg.fmt = f;
        }
        if self.mode.is_some() {
            cfg.mode = self.mode;
        }
        if let Some(r) = self.routing {
            cfg.routing = r;
            cfg.sweep.routing = vec![r];
        }
        if let Some(g) = self.granularity {
            cfg.granularity = g;
            cfg.sweep.granularity = vec![g];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let res = cli.run_config().and_then(|cfg| {
        let ctx = Ctx {
            cfg,
            out: cli.out.clone(),
            seed: cli.seed,
            fault: cli.inject_fault.as_deref().and_then(Fault::parse),
        };
        commands::run(cli.cmd.name(), &ctx)
    });
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
