//! Wall clock and the hard per-call watchdog.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use improvevolve_core::engine::{OperatorError, Operators};
use improvevolve_core::{Clock, Deadline};

/// Extra time an operator gets past its deadline before it is abandoned.
pub const GRACE: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy)]
pub struct InstantClock {
    origin: Instant,
}

impl InstantClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }

    pub fn shared() -> Arc<dyn Clock> {
        Arc::new(Self::new())
    }
}

impl Default for InstantClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for InstantClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Runs every operator call on its own thread and stops waiting for it at
/// the deadline plus [`GRACE`]. A call that is abandoned, or that returns
/// after its deadline, is reported as a timeout. Abandoned threads finish in
/// the background; their results are dropped.
#[derive(Debug)]
pub struct Guarded<O> {
    inner: Arc<O>,
    fallback: Duration,
}

impl<O> Guarded<O> {
    /// `fallback` bounds calls whose deadline is unbounded.
    pub fn new(inner: O, fallback: Duration) -> Self {
        Self { inner: Arc::new(inner), fallback }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O> Guarded<O>
where
    O: Operators + Send + Sync + 'static,
    O::Solution: Send + 'static,
{
    fn call<T, F>(&self, deadline: &Deadline, f: F) -> Result<T, OperatorError>
    where
        T: Send + 'static,
        F: FnOnce(&O, &Deadline) -> Result<T, OperatorError> + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        let inner = Arc::clone(&self.inner);
        let d = deadline.clone();
        let wait = deadline.remaining().unwrap_or(self.fallback) + GRACE;
        thread::Builder::new()
            .name("operator-call".into())
            .spawn(move || {
                let _ = tx.send(f(&inner, &d));
            })
            .map_err(|e| OperatorError::Failed(format!("cannot start operator thread: {e}")))?;
        match rx.recv_timeout(wait) {
            Ok(Ok(_)) if deadline.expired() => Err(OperatorError::Timeout),
            Ok(result) => result,
            Err(RecvTimeoutError::Timeout) => Err(OperatorError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(OperatorError::Failed("operator panicked".into())),
        }
    }
}

impl<O> Operators for Guarded<O>
where
    O: Operators + Send + Sync + 'static,
    O::Solution: Send + 'static,
{
    type Solution = O::Solution;

    fn generate(&self, seed: u64, deadline: &Deadline) -> Result<O::Solution, OperatorError> {
        self.call(deadline, move |o, d| o.generate(seed, d))
    }

    fn improve(&self, s: &O::Solution, deadline: &Deadline) -> Result<O::Solution, OperatorError> {
        let s = s.clone();
        self.call(deadline, move |o, d| o.improve(&s, d))
    }

    fn perturb(&self, s: &O::Solution, sigma: f64, seed: u64, deadline: &Deadline) -> Result<O::Solution, OperatorError> {
        let s = s.clone();
        self.call(deadline, move |o, d| o.perturb(&s, sigma, seed, d))
    }
}

/// Worker count: the flag, else `IMPROVOLVE_WORKERS`, else the CPU count.
pub fn resolve_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("IMPROVOLVE_WORKERS").ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&w| w > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}
