//! Torus network-on-chip cost model.

use super::{CoreCoord, CoreRect, GridDims};
use crate::error::{Error, Result};

/// L1 write alignment; every NoC payload is a multiple of this.
pub const NOC_ALIGN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NocConfig {
    /// Cycles per router hop.
    pub hop_latency: u64,
    /// Link bandwidth in bytes/cycle.
    pub link_bandwidth: u64,
}

impl Default for NocConfig {
    fn default() -> Self {
        NocConfig {
            hop_latency: 1,
            link_bandwidth: 32,
        }
    }
}

/// Shortest distance between `a` and `b` on a ring of `n` nodes.
pub fn ring_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// Dimension-order hop count on the torus.
pub fn hops(grid: GridDims, a: CoreCoord, b: CoreCoord) -> usize {
    ring_distance(a.x, b.x, grid.width) + ring_distance(a.y, b.y, grid.height)
}

impl NocConfig {
    pub fn transfer_cycles(&self, len: usize) -> u64 {
        (len as u64).div_ceil(self.link_bandwidth)
    }

    pub fn unicast_cost(
        &self,
        grid: GridDims,
        src: CoreCoord,
        dst: CoreCoord,
        len: usize,
    ) -> Result<u64> {
        grid.check(src)?;
        grid.check(dst)?;
        if !len.is_multiple_of(NOC_ALIGN) {
            return Err(Error::UnalignedPayload(len));
        }
        Ok(hops(grid, src, dst) as u64 * self.hop_latency + self.transfer_cycles(len))
    }

    /// Cost of delivering `len` bytes from `root` to every core of `rect`:
    /// the slowest unicast along the multicast tree.
    pub fn multicast_cost(
        &self,
        grid: GridDims,
        root: CoreCoord,
        rect: CoreRect,
        len: usize,
    ) -> Result<u64> {
        if rect.is_empty() {
            return Err(Error::EmptyRect);
        }
        if !rect.contains(root) {
            return Err(Error::RootOutsideRect);
        }
        let mut worst = 0;
        for c in rect.iter() {
            worst = worst.max(self.unicast_cost(grid, root, c, len)?);
        }
        Ok(worst)
    }
}
