use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

/// Seconds since the Unix epoch, as carried in a token's `expire` field.
pub trait Clock: Send + Sync {
    fn now(&self) -> u32;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u32 {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        u32::try_from(secs).unwrap_or(u32::MAX)
    }
}

/// Settable clock shared between a service and a simulator in tests and
/// scenarios.
#[derive(Debug, Default, Clone)]
pub struct ManualClock(Arc<AtomicU32>);

impl ManualClock {
    pub fn new(t: u32) -> Self {
        ManualClock(Arc::new(AtomicU32::new(t)))
    }

    pub fn set(&self, t: u32) {
        self.0.store(t, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> u32 {
        self.0.load(Ordering::SeqCst)
    }
}
