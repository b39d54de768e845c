use alloc::string::String;

use crate::numerics::ScalarFmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("bad tile image size: expected {expected} bytes, got {got}")]
    BadTileImageSize { expected: usize, got: usize },
    #[error("tile shape/format mismatch")]
    TileMismatch,
    #[error("scalar {value} is not representable in {fmt:?}")]
    ScalarNotInFormat { value: f32, fmt: ScalarFmt },
    #[error("FPU restricted to ≤19-bit formats")]
    FpuFormat,
    #[error("bad matmul operand: {0}")]
    MatmulOperand(&'static str),

    #[error("request exceeds CB capacity: {requested} pages > {capacity}")]
    CbCapacity { requested: usize, capacity: usize },
    #[error("CB '{name}': {op} of {requested} pages without matching state")]
    CbProtocol {
        name: String,
        op: &'static str,
        requested: usize,
    },
    #[error("unaligned pointer adjustment: {0} bytes")]
    UnalignedPointer(i64),
    #[error("pointer escape: offset {offset} outside region of {region} bytes")]
    PointerEscape { offset: i64, region: usize },
    #[error("core ({x},{y}) outside {width}x{height} grid")]
    CoreOutOfGrid {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("empty multicast rectangle")]
    EmptyRect,
    #[error("multicast root outside rectangle")]
    RootOutsideRect,
    #[error("NoC payload of {0} bytes is not 16B aligned")]
    UnalignedPayload(usize),
    #[error("unaligned DRAM {op} at address {addr}")]
    DramAlignment { op: &'static str, addr: usize },
    #[error("DRAM read of {len} bytes at {addr} past end of {size} bytes")]
    DramBounds {
        addr: usize,
        len: usize,
        size: usize,
    },
    #[error("SRAM budget exceeded on core: need {needed} bytes, {available} available")]
    SramBudget { needed: usize, available: usize },
    #[error("deadlock: {0}")]
    Deadlock(String),
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vector layout mismatch")]
    LayoutMismatch,
    #[error("vector has no data (cost-only placeholder)")]
    NotMaterialized,
    #[error("grid {nx}x{ny}x{nz} does not tile evenly over {px}x{py} cores")]
    IndivisibleGrid {
        nx: usize,
        ny: usize,
        nz: usize,
        px: usize,
        py: usize,
    },
    #[error("CG breakdown at iteration {0}")]
    Breakdown(usize),
}
