use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical address width assumed when none is configured.
pub const DEFAULT_ADDRESS_BITS: u32 = 45;

/// Shape of a set-associative cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheGeometry {
    pub size_bytes: u64,
    pub assoc: u32,
    pub block_bytes: u64,
    pub sets: u64,
    pub tag_bits: u32,
    pub page_bytes: u64,
    pub address_bits: u32,
}

fn require_pow2(name: &str, v: u64) -> Result<()> {
    if v == 0 || !v.is_power_of_two() {
        return Err(Error::config(format!(
            "{name} must be a positive power of two, got {v}"
        )));
    }
    Ok(())
}

/// Derives the set count and tag width for a cache, using the default
/// 45-bit physical address.
pub fn derive_geometry(
    size_bytes: u64,
    assoc: u32,
    block_bytes: u64,
    page_bytes: u64,
) -> Result<CacheGeometry> {
    derive_geometry_with_address_bits(size_bytes, assoc, block_bytes, page_bytes, DEFAULT_ADDRESS_BITS)
}

pub fn derive_geometry_with_address_bits(
    size_bytes: u64,
    assoc: u32,
    block_bytes: u64,
    page_bytes: u64,
    address_bits: u32,
) -> Result<CacheGeometry> {
    require_pow2("size_bytes", size_bytes)?;
    require_pow2("assoc", u64::from(assoc))?;
    require_pow2("block_bytes", block_bytes)?;
    require_pow2("page_bytes", page_bytes)?;
    if page_bytes < block_bytes {
        return Err(Error::config(format!(
            "page_bytes ({page_bytes}) must be at least block_bytes ({block_bytes})"
        )));
    }
    let way_bytes = u64::from(assoc) * block_bytes;
    if size_bytes % way_bytes != 0 || size_bytes < way_bytes {
        return Err(Error::config(format!(
            "assoc x block_bytes ({way_bytes}) does not divide size_bytes ({size_bytes})"
        )));
    }
    let sets = size_bytes / way_bytes;
    let index_bits = sets.trailing_zeros() + block_bytes.trailing_zeros();
    if address_bits > 64 || index_bits > address_bits {
        return Err(Error::config(format!(
            "address width {address_bits} too small for {index_bits} index+offset bits"
        )));
    }
    Ok(CacheGeometry {
        size_bytes,
        assoc,
        block_bytes,
        sets,
        tag_bits: address_bits - index_bits,
        page_bytes,
        address_bits,
    })
}

impl CacheGeometry {
    pub fn total_blocks(&self) -> u64 {
        self.sets * u64::from(self.assoc)
    }

    /// Blocks in one page; also the number of sets in one cache color.
    pub fn blocks_per_page(&self) -> u64 {
        self.page_bytes / self.block_bytes
    }

    pub fn block_bits(&self) -> u32 {
        (self.block_bytes * 8) as u32
    }
}
