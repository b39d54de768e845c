//! Per-core SRAM budget of a solve.

use super::PcgMode;
use crate::error::{Error, Result};
use crate::numerics::{image_size, ScalarFmt};

/// Resident vectors plus a fixed scratch reservation for circular buffers.
///
/// Fused keeps x, r, p and q resident and regenerates z; split also keeps z.
/// The scratch reservation covers the largest CB set of any kernel in the
/// mode, with double buffering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SramPlan {
    pub fmt: ScalarFmt,
    pub mode: PcgMode,
    pub tiles_per_core: usize,
}

impl SramPlan {
    pub fn new(fmt: ScalarFmt, mode: PcgMode, tiles_per_core: usize) -> Self {
        SramPlan {
            fmt,
            mode,
            tiles_per_core,
        }
    }

    pub fn resident_vectors(&self) -> usize {
        match self.mode {
            PcgMode::Fused => 4,
            PcgMode::Split => 5,
        }
    }

    pub fn scratch_pages(&self) -> usize {
        match self.mode {
            PcgMode::Fused => 22,
            PcgMode::Split => 18,
        }
    }

    pub fn page_bytes(&self) -> usize {
        image_size(self.fmt)
    }

    pub fn resident_bytes(&self) -> usize {
        self.resident_vectors() * self.tiles_per_core * self.page_bytes()
    }

    pub fn scratch_bytes(&self) -> usize {
        self.scratch_pages() * self.page_bytes()
    }

    pub fn total_bytes(&self) -> usize {
        self.resident_bytes() + self.scratch_bytes()
    }

    pub fn check(&self, available: usize) -> Result<()> {
        let needed = self.total_bytes();
        if needed > available {
            return Err(Error::SramBudget { needed, available });
        }
        Ok(())
    }
}

/// Largest tiles/core that fits in `available` bytes.
pub fn max_tiles_per_core(fmt: ScalarFmt, mode: PcgMode, available: usize) -> usize {
    let p = SramPlan::new(fmt, mode, 0);
    let per_tile = p.resident_vectors() * p.page_bytes();
    available.saturating_sub(p.scratch_bytes()) / per_tile
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceConfig;

    #[test]
    fn capacity_limits() {
        let avail = DeviceConfig::default().sram_available();
        assert_eq!(
            max_tiles_per_core(ScalarFmt::Bf16, PcgMode::Fused, avail),
            164
        );
        assert_eq!(
            max_tiles_per_core(ScalarFmt::Fp32, PcgMode::Split, avail),
            64
        );
        assert!(SramPlan::new(ScalarFmt::Bf16, PcgMode::Fused, 165)
            .check(avail)
            .is_err());
        assert!(SramPlan::new(ScalarFmt::Fp32, PcgMode::Split, 65)
            .check(avail)
            .is_err());
    }
}
