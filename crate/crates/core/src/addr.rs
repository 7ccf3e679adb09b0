//! Address-based waiting: block on a word until some other thread wakes that
//! address. On Linux this is a private futex; elsewhere a small hashed table
//! of mutex/condvar buckets gives the same contract.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

/// A word that can serve as an address-wait location.
///
/// Only 32 bits take part in the comparison. For 64-bit counters that only
/// ever advance by one, the low half changes on every update, which is all a
/// waiter needs.
pub trait WaitWord {
    /// Address of the 32 bits the kernel compares against `expected`.
    fn key(&self) -> *const u32;
    /// Current value of those 32 bits.
    fn load_word(&self) -> u32;
}

impl WaitWord for AtomicU32 {
    #[inline]
    fn key(&self) -> *const u32 {
        self.as_ptr() as *const u32
    }

    #[inline]
    fn load_word(&self) -> u32 {
        self.load(Ordering::SeqCst)
    }
}

impl WaitWord for AtomicU64 {
    #[inline]
    fn key(&self) -> *const u32 {
        let base = self.as_ptr() as *const u32;
        if cfg!(target_endian = "little") {
            base
        } else {
            base.wrapping_add(1)
        }
    }

    #[inline]
    fn load_word(&self) -> u32 {
        self.load(Ordering::SeqCst) as u32
    }
}

/// Blocks while the word still holds `expected`.
///
/// Returns immediately if the word already differs. May return spuriously;
/// callers loop on their own condition.
pub fn address_wait<W: WaitWord + ?Sized>(word: &W, expected: u32) {
    if word.load_word() != expected {
        return;
    }
    imp::wait(word, expected);
}

/// Wakes every thread blocked in [`address_wait`] on `word`.
pub fn address_wake_all<W: WaitWord + ?Sized>(word: &W) {
    imp::wake_all(word.key());
}

/// Wakes every thread blocked on `key`.
///
/// Only the address is used, never dereferenced, so this is safe to call with
/// an address whose storage may already have been released by its waiter. The
/// worst outcome is a spurious wakeup of an unrelated waiter at that address.
pub fn address_wake_all_raw(key: *const u32) {
    imp::wake_all(key);
}

#[cfg(target_os = "linux")]
mod imp {
    use super::WaitWord;

    pub(super) fn wait<W: WaitWord + ?Sized>(word: &W, expected: u32) {
        // EINTR and EAGAIN both surface as a plain return.
        unsafe {
            libc::syscall(
                libc::SYS_futex,
                word.key(),
                libc::FUTEX_WAIT | libc::FUTEX_PRIVATE_FLAG,
                expected,
                std::ptr::null::<libc::timespec>(),
            );
        }
    }

    pub(super) fn wake_all(key: *const u32) {
        unsafe {
            libc::syscall(
                libc::SYS_futex,
                key,
                libc::FUTEX_WAKE | libc::FUTEX_PRIVATE_FLAG,
                i32::MAX,
            );
        }
    }
}

#[cfg(not(target_os = "linux"))]
mod imp {
    use super::WaitWord;
    use std::sync::{Condvar, Mutex, OnceLock};

    const BUCKETS: usize = 256;

    struct Bucket {
        lock: Mutex<()>,
        cond: Condvar,
    }

    fn bucket(key: *const u32) -> &'static Bucket {
        static TABLE: OnceLock<Vec<Bucket>> = OnceLock::new();
        let table = TABLE.get_or_init(|| {
            (0..BUCKETS)
                .map(|_| Bucket { lock: Mutex::new(()), cond: Condvar::new() })
                .collect()
        });
        let h = (key as usize as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 56;
        &table[h as usize % BUCKETS]
    }

    pub(super) fn wait<W: WaitWord + ?Sized>(word: &W, expected: u32) {
        let b = bucket(word.key());
        let guard = b.lock.lock().unwrap_or_else(|e| e.into_inner());
        if word.load_word() != expected {
            return;
        }
        let _guard = b.cond.wait(guard).unwrap_or_else(|e| e.into_inner());
    }

    pub(super) fn wake_all(key: *const u32) {
        let b = bucket(key);
        let _guard = b.lock.lock().unwrap_or_else(|e| e.into_inner());
        b.cond.notify_all();
    }
}
