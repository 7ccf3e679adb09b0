//! Sector padding.
//!
//! Intel parts fetch adjacent 64-byte lines in pairs, so the effective unit of
//! false sharing is 128 bytes. Every hot shared word in this crate lives in its
//! own 128-byte sector.

use std::fmt;
use std::ops::{Deref, DerefMut};

/// Size in bytes of the sector each padded value occupies.
pub const SECTOR_BYTES: usize = 128;

/// Pads and aligns a value to a full 128-byte sector.
#[derive(Default)]
#[repr(C, align(128))]
pub struct SectorPadded<T>(T);

impl<T> SectorPadded<T> {
    pub const fn new(value: T) -> Self {
        SectorPadded(value)
    }

    pub fn into_inner(self) -> T {
        self.0
    }
}

impl<T> Deref for SectorPadded<T> {
    type Target = T;

    fn deref(&self) -> &T {
        &self.0
    }
}

impl<T> DerefMut for SectorPadded<T> {
    fn deref_mut(&mut self) -> &mut T {
        &mut self.0
    }
}

impl<T: fmt::Debug> fmt::Debug for SectorPadded<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("SectorPadded").field(&self.0).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU64;

    #[test]
    fn occupies_whole_sectors() {
        assert_eq!(std::mem::align_of::<SectorPadded<AtomicU64>>(), SECTOR_BYTES);
        assert_eq!(std::mem::size_of::<SectorPadded<AtomicU64>>(), SECTOR_BYTES);
        assert_eq!(std::mem::size_of::<SectorPadded<[u64; 17]>>(), 2 * SECTOR_BYTES);

        let pair = [SectorPadded::new(AtomicU64::new(0)), SectorPadded::new(AtomicU64::new(0))];
        let a = &*pair[0] as *const AtomicU64 as usize;
        let b = &*pair[1] as *const AtomicU64 as usize;
        assert_eq!(a % SECTOR_BYTES, 0);
        assert_eq!(b - a, SECTOR_BYTES);
    }
}
