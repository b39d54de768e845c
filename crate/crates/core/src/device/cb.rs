//! Circular buffers: bounded FIFOs of pages in a core's SRAM.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Read pointer adjustments must be multiples of this many bytes.
pub const PTR_ALIGN: i64 = 32;
/// L1 access alignment for page sizes.
pub const L1_ALIGN: usize = 16;

/// Static description of a circular buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CbSpec {
    pub name: String,
    pub page_size: usize,
    pub capacity: usize,
    /// Pages of padding before and after the ring. Shifted views of the first
    /// or last slot read into this padding instead of escaping the region.
    pub guard_pages: usize,
}

impl CbSpec {
    pub fn new(name: impl Into<String>, page_size: usize, capacity: usize) -> Self {
        CbSpec {
            name: name.into(),
            page_size,
            capacity,
            guard_pages: 0,
        }
    }

    pub fn with_guards(mut self, pages: usize) -> Self {
        self.guard_pages = pages;
        self
    }

    /// SRAM bytes occupied, guards included.
    pub fn region_bytes(&self) -> usize {
        (self.capacity + 2 * self.guard_pages) * self.page_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.page_size == 0 || !self.page_size.is_multiple_of(L1_ALIGN) || self.capacity == 0 {
            return Err(Error::Config(alloc::format!(
                "CB '{}' needs a nonzero 16B-aligned page size and capacity",
                self.name
            )));
        }
        Ok(())
    }
}

/// Runtime state of one circular buffer.
#[derive(Debug, Clone)]
pub struct Cb {
    pub spec: CbSpec,
    rd_slot: usize,
    wr_slot: usize,
    occupied: usize,
    view_offset: i64,
    /// Per slot: cycle at which the page became readable (occupied slots)
    /// or writable again (free slots).
    stamps: Vec<u64>,
    data: Option<Vec<u8>>,
}

impl Cb {
    pub fn new(spec: CbSpec, materialized: bool) -> Self {
        let data = materialized.then(|| vec![0u8; spec.region_bytes()]);
        Cb {
            stamps: vec![0; spec.capacity],
            rd_slot: 0,
            wr_slot: 0,
            occupied: 0,
            view_offset: 0,
            data,
            spec,
        }
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    pub fn free(&self) -> usize {
        self.spec.capacity - self.occupied
    }

    pub fn check_request(&self, n: usize) -> Result<()> {
        if n > self.spec.capacity {
            Err(Error::CbCapacity {
                requested: n,
                capacity: self.spec.capacity,
            })
        } else {
            Ok(())
        }
    }

    fn slot_base(&self, slot: usize) -> usize {
        (self.spec.guard_pages + slot) * self.spec.page_size
    }

    /// Absolute byte offset of the read pointer within the region.
    pub fn read_ptr(&self) -> i64 {
        self.slot_base(self.rd_slot) as i64 + self.view_offset
    }

    pub fn write_ptr(&self) -> usize {
        self.slot_base(self.wr_slot)
    }

    /// Latest readiness stamp among the first `n` occupied pages.
    pub fn front_ready(&self, n: usize) -> u64 {
        (0..n)
            .map(|i| self.stamps[(self.rd_slot + i) % self.spec.capacity])
            .max()
            .unwrap_or(0)
    }

    /// Latest release stamp among the next `n` free slots.
    pub fn back_free(&self, n: usize) -> u64 {
        (0..n)
            .map(|i| self.stamps[(self.wr_slot + i) % self.spec.capacity])
            .max()
            .unwrap_or(0)
    }

    pub fn push(&mut self, n: usize, stamp: u64) -> Result<()> {
        self.check_request(n)?;
        if n > self.free() {
            return Err(self.protocol("push_back", n));
        }
        for i in 0..n {
            self.stamps[(self.wr_slot + i) % self.spec.capacity] = stamp;
        }
        self.wr_slot = (self.wr_slot + n) % self.spec.capacity;
        self.occupied += n;
        Ok(())
    }

    pub fn pop(&mut self, n: usize, stamp: u64) -> Result<()> {
        self.check_request(n)?;
        if n > self.occupied {
            return Err(self.protocol("pop_front", n));
        }
        for i in 0..n {
            self.stamps[(self.rd_slot + i) % self.spec.capacity] = stamp;
        }
        self.rd_slot = (self.rd_slot + n) % self.spec.capacity;
        self.occupied -= n;
        Ok(())
    }

    fn protocol(&self, op: &'static str, n: usize) -> Error {
        Error::CbProtocol {
            name: self.spec.name.clone(),
            op,
            requested: n,
        }
    }

    /// Moves the read pointer by `delta` bytes.
    pub fn offset_read_ptr(&mut self, delta: i64) -> Result<()> {
        if delta % PTR_ALIGN != 0 {
            return Err(Error::UnalignedPointer(delta));
        }
        let region = self.spec.region_bytes();
        let new = self.read_ptr() + delta;
        if new < 0 || new >= region as i64 {
            return Err(Error::PointerEscape {
                offset: new,
                region,
            });
        }
        self.view_offset += delta;
        Ok(())
    }

    /// Writes one page into the `i`-th slot after the write pointer.
    pub fn write_page(&mut self, i: usize, bytes: &[u8]) -> Result<()> {
        if i >= self.free() || bytes.len() > self.spec.page_size {
            return Err(self.protocol("write_page", i + 1));
        }
        let base = self.slot_base((self.wr_slot + i) % self.spec.capacity);
        if let Some(d) = &mut self.data {
            d[base..base + bytes.len()].copy_from_slice(bytes);
        }
        Ok(())
    }

    /// Reads `page_size` bytes at the read pointer plus `i` pages.
    ///
    /// With a shifted read pointer the bytes may straddle neighbouring slots
    /// or guard pages.
    pub fn read_page(&self, i: usize) -> Result<&[u8]> {
        if i >= self.occupied {
            return Err(self.protocol("read_page", i + 1));
        }
        let page = self.spec.page_size;
        let region = self.spec.region_bytes();
        let slot = (self.rd_slot + i) % self.spec.capacity;
        let start = self.slot_base(slot) as i64 + self.view_offset;
        if start < 0 || start as usize + page > region {
            return Err(Error::PointerEscape {
                offset: start,
                region,
            });
        }
        let start = start as usize;
        match &self.data {
            Some(d) => Ok(&d[start..start + page]),
            None => Err(Error::NotMaterialized),
        }
    }

    pub fn describe(&self) -> String {
        alloc::format!(
            "'{}' ({} of {} pages occupied)",
            self.spec.name,
            self.occupied,
            self.spec.capacity
        )
    }
}
