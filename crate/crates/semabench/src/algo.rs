//! Selecting and building the semaphore under test.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use twasem::{
    Probe, SemaphoreCore, Semaphore, SlotVariant, TicketSemaphore, TwaOptions, TwaSemaphore,
    WaitStrategy, WaitingArray, WouldBlock,
};

use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    Ticket,
    TwaCounter,
    TwaChain,
    OsBaseline,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Ticket, Algo::TwaCounter, Algo::TwaChain, Algo::OsBaseline];
    pub const FIFO: [Algo; 3] = [Algo::Ticket, Algo::TwaCounter, Algo::TwaChain];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Ticket => "ticket",
            Algo::TwaCounter => "twa-counter",
            Algo::TwaChain => "twa-chain",
            Algo::OsBaseline => "os-baseline",
        }
    }

    /// Whether admissions are first-come first-enabled.
    pub fn is_fifo(self) -> bool {
        self != Algo::OsBaseline
    }

    pub fn uses_array(self) -> bool {
        matches!(self, Algo::TwaCounter | Algo::TwaChain)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| BenchError::UnknownAlgo(s.to_string()))
    }
}

/// Everything needed to construct one semaphore.
#[derive(Clone, Debug)]
pub struct SemSpec {
    pub algo: Algo,
    pub permits: u64,
    pub threshold: u64,
    pub strategy: WaitStrategy,
    pub array: Option<Arc<WaitingArray>>,
    pub probe: Option<Arc<Probe>>,
}

impl SemSpec {
    pub fn new(algo: Algo) -> Self {
        SemSpec {
            algo,
            permits: 0,
            threshold: twasem::twa::DEFAULT_THRESHOLD,
            strategy: WaitStrategy::default(),
            array: None,
            probe: None,
        }
    }

    pub fn permits(mut self, permits: u64) -> Self {
        self.permits = permits;
        self
    }

    pub fn threshold(mut self, threshold: u64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn strategy(mut self, strategy: WaitStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn array(mut self, array: Arc<WaitingArray>) -> Self {
        self.array = Some(array);
        self
    }

    pub fn probe(mut self, probe: Arc<Probe>) -> Self {
        self.probe = Some(probe);
        self
    }

    pub fn build(&self) -> Result<AnySemaphore, BenchError> {
        let twa = |variant| {
            let mut opts = TwaOptions::default()
                .threshold(self.threshold)
                .variant(variant)
                .strategy(self.strategy);
            opts.array = self.array.clone();
            opts.probe = self.probe.clone();
            AnySemaphore::Twa(TwaSemaphore::with_options(self.permits, opts))
        };
        Ok(match self.algo {
            Algo::Ticket => {
                let mut s = TicketSemaphore::with_strategy(self.permits, self.strategy);
                if let Some(p) = &self.probe {
                    s = s.instrumented(p.clone());
                }
                AnySemaphore::Ticket(s)
            }
            Algo::TwaCounter => twa(SlotVariant::Counter),
            Algo::TwaChain => twa(SlotVariant::Chain),
            Algo::OsBaseline => AnySemaphore::Os(OsSemaphore::new(self.permits)?),
        })
    }
}

/// Any of the benchmarkable semaphores.
pub enum AnySemaphore {
    Ticket(TicketSemaphore),
    Twa(TwaSemaphore),
    Os(OsSemaphore),
}

impl AnySemaphore {
    /// Takes and reports the admitted ticket; `None` for the OS semaphore.
    pub fn take_ticket(&self) -> Option<u64> {
        match self {
            AnySemaphore::Ticket(s) => Some(s.take_ticket()),
            AnySemaphore::Twa(s) => Some(s.take_ticket()),
            AnySemaphore::Os(s) => {
                s.take();
                None
            }
        }
    }

    pub fn core(&self) -> Option<&SemaphoreCore> {
        match self {
            AnySemaphore::Ticket(s) => Some(s.core()),
            AnySemaphore::Twa(s) => Some(s.core()),
            AnySemaphore::Os(_) => None,
        }
    }

    pub fn as_twa(&self) -> Option<&TwaSemaphore> {
        match self {
            AnySemaphore::Twa(s) => Some(s),
            _ => None,
        }
    }
}

impl Semaphore for AnySemaphore {
    #[inline]
    fn take(&self) {
        match self {
            AnySemaphore::Ticket(s) => s.take(),
            AnySemaphore::Twa(s) => s.take(),
            AnySemaphore::Os(s) => s.take(),
        }
    }

    #[inline]
    fn post(&self) {
        match self {
            AnySemaphore::Ticket(s) => s.post(),
            AnySemaphore::Twa(s) => s.post(),
            AnySemaphore::Os(s) => s.post(),
        }
    }

    fn try_take(&self) -> Result<(), WouldBlock> {
        match self {
            AnySemaphore::Ticket(s) => s.try_take(),
            AnySemaphore::Twa(s) => s.try_take(),
            AnySemaphore::Os(s) => s.try_take(),
        }
    }
}

pub use os::OsSemaphore;

#[cfg(target_os = "linux")]
mod os {
    use std::cell::UnsafeCell;
    use std::io;

    use twasem::{Semaphore, WouldBlock};

    use crate::BenchError;

    /// The platform's POSIX unnamed semaphore. Not FIFO.
    pub struct OsSemaphore {
        sem: Box<UnsafeCell<libc::sem_t>>,
    }

    // SAFETY: sem_t is designed for concurrent use through a stable address,
    // which the box provides.
    unsafe impl Send for OsSemaphore {}
    unsafe impl Sync for OsSemaphore {}

    impl OsSemaphore {
        pub fn new(permits: u64) -> Result<Self, BenchError> {
            let value = u32::try_from(permits).map_err(|_| BenchError::Unsupported("permit count above u32"))?;
            let sem = Box::new(UnsafeCell::new(unsafe { std::mem::zeroed::<libc::sem_t>() }));
            if unsafe { libc::sem_init(sem.get(), 0, value) } != 0 {
                return Err(BenchError::Io(io::Error::last_os_error()));
            }
            Ok(OsSemaphore { sem })
        }
    }

    impl Semaphore for OsSemaphore {
        fn take(&self) {
            while unsafe { libc::sem_wait(self.sem.get()) } != 0 {
                let err = io::Error::last_os_error();
                assert_eq!(err.raw_os_error(), Some(libc::EINTR), "sem_wait: {err}");
            }
        }

        fn post(&self) {
            let rc = unsafe { libc::sem_post(self.sem.get()) };
            assert_eq!(rc, 0, "sem_post: {}", io::Error::last_os_error());
        }

        fn try_take(&self) -> Result<(), WouldBlock> {
            match unsafe { libc::sem_trywait(self.sem.get()) } {
                0 => Ok(()),
                _ => Err(WouldBlock),
            }
        }
    }

    impl Drop for OsSemaphore {
        fn drop(&mut self) {
            unsafe { libc::sem_destroy(self.sem.get()) };
        }
    }
}

#[cfg(not(target_os = "linux"))]
mod os {
    use twasem::{Semaphore, WouldBlock};

    use crate::BenchError;

    /// Placeholder: no platform semaphore is wired up on this target.
    pub struct OsSemaphore(());

    impl OsSemaphore {
        pub fn new(_permits: u64) -> Result<Self, BenchError> {
            Err(BenchError::Unsupported("os-baseline is only available on Linux"))
        }
    }

    impl Semaphore for OsSemaphore {
        fn take(&self) {
            unreachable!()
        }
        fn post(&self) {
            unreachable!()
        }
        fn try_take(&self) -> Result<(), WouldBlock> {
            unreachable!()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.name().parse::<Algo>().unwrap(), a);
        }
        assert!("mcs".parse::<Algo>().is_err());
    }

    #[test]
    fn every_algo_takes_and_posts() {
        for a in Algo::ALL {
            let s = match SemSpec::new(a).permits(1).build() {
                Ok(s) => s,
                Err(BenchError::Unsupported(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            s.take();
            assert_eq!(s.try_take(), Err(WouldBlock));
            s.post();
            assert_eq!(s.try_take(), Ok(()));
            s.post();
        }
    }

    #[test]
    fn fifo_algos_report_tickets() {
        for a in Algo::FIFO {
            let s = SemSpec::new(a).permits(2).build().unwrap();
            assert_eq!(s.take_ticket(), Some(0));
            assert_eq!(s.take_ticket(), Some(1));
            assert_eq!(s.core().unwrap().snapshot().ticket, 2);
        }
    }
}
