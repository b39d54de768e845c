//! Single shared DRAM endpoint.

use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const DRAM_READ_ALIGN: usize = 32;
pub const DRAM_WRITE_ALIGN: usize = 16;

#[derive(Debug, Clone, Default)]
pub struct Dram {
    bytes: Vec<u8>,
    size: usize,
    materialized: bool,
}

impl Dram {
    /// With `materialized == false` only addresses are tracked and reads return no data.
    pub fn new(materialized: bool) -> Self {
        Dram {
            bytes: Vec::new(),
            size: 0,
            materialized,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Reserves `len` bytes at the next read-aligned address.
    pub fn alloc(&mut self, len: usize) -> usize {
        let addr = self.size.next_multiple_of(DRAM_READ_ALIGN);
        self.size = addr + len;
        if self.materialized {
            self.bytes.resize(self.size, 0);
        }
        addr
    }

    fn bounds(&self, addr: usize, len: usize) -> Result<()> {
        if addr + len > self.size {
            Err(Error::DramBounds {
                addr,
                len,
                size: self.size,
            })
        } else {
            Ok(())
        }
    }

    pub fn check_read(&self, addr: usize, len: usize) -> Result<()> {
        if !addr.is_multiple_of(DRAM_READ_ALIGN) {
            return Err(Error::DramAlignment { op: "read", addr });
        }
        self.bounds(addr, len)
    }

    pub fn check_write(&self, addr: usize, len: usize) -> Result<()> {
        if !addr.is_multiple_of(DRAM_WRITE_ALIGN) || !len.is_multiple_of(DRAM_WRITE_ALIGN) {
            return Err(Error::DramAlignment { op: "write", addr });
        }
        self.bounds(addr, len)
    }

    /// Returns the stored bytes, or `None` when not materialized.
    pub fn read(&self, addr: usize, len: usize) -> Result<Option<&[u8]>> {
        self.check_read(addr, len)?;
        Ok(self.materialized.then(|| &self.bytes[addr..addr + len]))
    }

    pub fn write(&mut self, addr: usize, data: &[u8]) -> Result<()> {
        self.check_write(addr, data.len())?;
        if self.materialized {
            self.bytes[addr..addr + data.len()].copy_from_slice(data);
        }
        Ok(())
    }

    /// Cycles to move `len` bytes when `active` cores share the endpoint evenly.
    pub fn transfer_cycles(bandwidth: u64, len: usize, active: usize) -> u64 {
        (len as u64 * active.max(1) as u64).div_ceil(bandwidth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_rules() {
        let mut d = Dram::new(true);
        let a = d.alloc(100);
        let b = d.alloc(64);
        assert_eq!(a, 0);
        assert_eq!(b, 128);
        assert!(d.read(b, 64).is_ok());
        assert_eq!(
            d.read(16, 16),
            Err(Error::DramAlignment {
                op: "read",
                addr: 16
            })
        );
        assert!(d.write(16, &[0u8; 16]).is_ok());
        assert!(d.write(8, &[0u8; 16]).is_err());
        assert!(matches!(d.read(128, 128), Err(Error::DramBounds { .. })));
    }

    #[test]
    fn round_trip_and_fair_share() {
        let mut d = Dram::new(true);
        let a = d.alloc(32);
        let data: Vec<u8> = (0..32).collect();
        d.write(a, &data).unwrap();
        assert_eq!(d.read(a, 32).unwrap().unwrap(), &data[..]);
        assert_eq!(Dram::transfer_cycles(64, 4096, 1), 64);
        assert_eq!(Dram::transfer_cycles(64, 4096, 56), 3584);
        let shadow = Dram::new(false);
        assert!(shadow.read(0, 0).unwrap().is_none());
    }
}
