//! Cooperative deadlines over an injectable monotonic clock.

use alloc::sync::Arc;
use core::fmt;
use core::time::Duration;

/// Monotonic time source. The harness supplies one backed by
/// `std::time::Instant`; without a clock nothing ever expires.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

/// Clock that never advances.
#[derive(Debug, Default, Clone, Copy)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now(&self) -> Duration {
        Duration::ZERO
    }
}

#[derive(Clone, Default)]
pub struct Deadline {
    inner: Option<(Arc<dyn Clock>, Duration)>,
}

impl fmt::Debug for Deadline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.inner {
            None => f.write_str("Deadline(never)"),
            Some((_, at)) => write!(f, "Deadline({at:?})"),
        }
    }
}

impl Deadline {
    pub fn never() -> Self {
        Self { inner: None }
    }

    pub fn after(clock: Arc<dyn Clock>, budget: Duration) -> Self {
        let at = clock.now().saturating_add(budget);
        Self { inner: Some((clock, at)) }
    }

    pub fn expired(&self) -> bool {
        match &self.inner {
            None => false,
            Some((clock, at)) => clock.now() > *at,
        }
    }

    /// `None` when unbounded.
    pub fn remaining(&self) -> Option<Duration> {
        self.inner.as_ref().map(|(clock, at)| at.saturating_sub(clock.now()))
    }
}
