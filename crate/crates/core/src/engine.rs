//! Two-stage validation of an operator triple.
//!
//! Stage A improves `K` generated starts and keeps the best; Stage B runs
//! `R` rounds of basin hopping from it, walking the σ schedule from the top
//! in every round. Acceptance is monotone with `≥`, so plateau moves are
//! taken.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::time::Duration;

use serde::{Deserialize, Serialize};

use crate::deadline::{Clock, Deadline};
use crate::rng;

pub use crate::deadline::FrozenClock;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("sigma schedule must contain at least one value")]
    EmptySchedule,
    #[error("sigma values must be finite and positive, got {0}")]
    BadSigma(f64),
    #[error("geometric schedule needs sigma_max >= sigma_min > 0 and at least 2 steps")]
    BadGeometric,
    #[error("K must be at least 1 when stage A runs")]
    NoSeeds,
    #[error("per-call timeout must be positive")]
    ZeroTimeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSchedule {
    Explicit { values: Vec<f64> },
    Geometric { sigma_max: f64, sigma_min: f64, steps: usize },
}

impl SigmaSchedule {
    pub fn explicit(values: Vec<f64>) -> Result<Self, ParamError> {
        let s = Self::Explicit { values };
        s.validate()?;
        Ok(s)
    }

    pub fn geometric(sigma_max: f64, sigma_min: f64, steps: usize) -> Result<Self, ParamError> {
        let s = Self::Geometric { sigma_max, sigma_min, steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self {
            Self::Explicit { values } => {
                if values.is_empty() {
                    return Err(ParamError::EmptySchedule);
                }
                match values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    Some(v) => Err(ParamError::BadSigma(*v)),
                    None => Ok(()),
                }
            }
            Self::Geometric { sigma_max, sigma_min, steps } => {
                let ok = sigma_min.is_finite() && sigma_max.is_finite() && *sigma_min > 0.0 && sigma_max >= sigma_min;
                if ok && *steps >= 2 {
                    Ok(())
                } else {
                    Err(ParamError::BadGeometric)
                }
            }
        }
    }

    /// Number of steps `M` per round.
    pub fn len(&self) -> usize {
        match self {
            Self::Explicit { values } => values.len(),
            Self::Geometric { steps, .. } => *steps,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// σ at 1-based step `t`. Geometric endpoints are returned exactly.
    pub fn sigma(&self, t: usize) -> f64 {
        match self {
            Self::Explicit { values } => values[t - 1],
            Self::Geometric { sigma_max, sigma_min, steps } => {
                if t == 1 {
                    *sigma_max
                } else if t == *steps {
                    *sigma_min
                } else {
                    let frac = (t - 1) as f64 / (*steps - 1) as f64;
                    sigma_max * libm::pow(sigma_min / sigma_max, frac)
                }
            }
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (1..=self.len()).map(|t| self.sigma(t)).collect()
    }

    pub fn table3_hex() -> Self {
        Self::Explicit { values: alloc::vec![1e2, 5e1, 1e1, 5.0, 1.0, 5e-1, 1e-1, 5e-2, 1e-2, 5e-3, 1e-3] }
    }

    pub fn table3_aci() -> Self {
        Self::Explicit { values: alloc::vec![1e2, 1e1, 1.0, 1e-1, 1e-2, 1e-3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageMode {
    #[serde(rename = "A-only")]
    AOnly,
    #[serde(rename = "B-only")]
    BOnly,
    #[serde(rename = "A+B")]
    Both,
}

impl StageMode {
    pub fn runs_a(self) -> bool {
        matches!(self, Self::AOnly | Self::Both)
    }

    pub fn runs_b(self) -> bool {
        matches!(self, Self::BOnly | Self::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// Abort the whole evaluation on the first invalid result (evolution).
    Discard,
    /// Skip the iteration and keep the incumbent (final validation).
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyAction {
    Continue,
    DiscardCandidate,
}

pub fn apply_invalid_policy(policy: InvalidPolicy) -> PolicyAction {
    match policy {
        InvalidPolicy::Discard => PolicyAction::DiscardCandidate,
        InvalidPolicy::Skip => PolicyAction::Continue,
    }
}

mod secs {
    use core::time::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinHopParams {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "R")]
    pub rounds: usize,
    pub schedule: SigmaSchedule,
    /// Seconds in serialized form.
    #[serde(with = "secs")]
    pub per_call_timeout: Duration,
    pub invalid_policy: InvalidPolicy,
    pub stage_mode: StageMode,
}

impl BasinHopParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        self.schedule.validate()?;
        if self.stage_mode.runs_a() && self.k == 0 {
            return Err(ParamError::NoSeeds);
        }
        if self.per_call_timeout.is_zero() {
            return Err(ParamError::ZeroTimeout);
        }
        Ok(())
    }

    pub fn table3_hex() -> Self {
        Self {
            k: 10,
            rounds: 15,
            schedule: SigmaSchedule::table3_hex(),
            per_call_timeout: Duration::from_secs(300),
            invalid_policy: InvalidPolicy::Skip,
            stage_mode: StageMode::Both,
        }
    }

    pub fn table3_aci() -> Self {
        Self {
            k: 3,
            rounds: 5,
            schedule: SigmaSchedule::table3_aci(),
            per_call_timeout: Duration::from_secs(1200),
            invalid_policy: InvalidPolicy::Skip,
            stage_mode: StageMode::Both,
        }
    }

    /// Long final-validation runs for the larger hexagon table.
    pub fn final_hex() -> Self {
        Self {
            k: 100,
            rounds: 100,
            schedule: SigmaSchedule::Geometric { sigma_max: 1e3, sigma_min: 1e-3, steps: 25 },
            ..Self::table3_hex()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum OperatorError {
    /// The operator returned something that fails validation.
    #[error("invalid solution: {0}")]
    Invalid(String),
    #[error("operator exceeded its deadline")]
    Timeout,
    #[error("operator failed: {0}")]
    Failed(String),
    /// The operator can no longer be called at all.
    #[error("operator unavailable: {0}")]
    Fatal(String),
}

/// A candidate optimizer: the operator triple.
pub trait Operators {
    type Solution: Clone;

    fn generate(&self, seed: u64, deadline: &Deadline) -> Result<Self::Solution, OperatorError>;
    fn improve(&self, solution: &Self::Solution, deadline: &Deadline) -> Result<Self::Solution, OperatorError>;
    fn perturb(
        &self,
        solution: &Self::Solution,
        sigma: f64,
        seed: u64,
        deadline: &Deadline,
    ) -> Result<Self::Solution, OperatorError>;
}

/// Trusted fitness; higher is better. Errors mark the solution invalid.
pub trait Evaluator<S> {
    fn fitness(&self, solution: &S) -> Result<f64, OperatorError>;
}

impl<S, F: Fn(&S) -> Result<f64, OperatorError>> Evaluator<S> for F {
    fn fitness(&self, solution: &S) -> Result<f64, OperatorError> {
        self(solution)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub stage: Stage,
    /// 0 in stage A.
    pub round: usize,
    /// Seed index in stage A, schedule step in stage B (both 1-based).
    pub iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub fitness_before: Option<f64>,
    pub fitness_after: Option<f64>,
    pub accepted: bool,
    #[serde(with = "secs")]
    pub elapsed: Duration,
    pub invalid: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub events: Vec<TraceEvent>,
    /// Incumbent fitness after each event, from the first valid one on.
    pub best_fitness_curve: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<S> {
    pub best: S,
    pub fitness: f64,
    pub trace: RunTrace,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("candidate discarded at stage {stage:?} round {round} iteration {iteration}: {cause}")]
    Discarded { stage: Stage, round: usize, iteration: usize, cause: OperatorError, trace: RunTrace },
    #[error("no valid starting point")]
    NoValidStart { trace: RunTrace },
    #[error(transparent)]
    Fatal(OperatorError),
}

impl RunError {
    pub fn trace(&self) -> Option<&RunTrace> {
        match self {
            Self::Discarded { trace, .. } | Self::NoValidStart { trace } => Some(trace),
            _ => None,
        }
    }
}

/// Seed handed to `perturb` at round `r`, step `t` of a run seeded `seed`.
pub fn perturb_seed(seed: u64, round: usize, step: usize) -> u64 {
    rng::mix(seed, round as u64, step as u64)
}

struct Run<'a, O: Operators, E> {
    ops: &'a O,
    eval: &'a E,
    params: &'a BasinHopParams,
    clock: Arc<dyn Clock>,
    start: Duration,
    trace: RunTrace,
    best: Option<(O::Solution, f64)>,
}

impl<O: Operators, E: Evaluator<O::Solution>> Run<'_, O, E> {
    fn deadline(&self) -> Deadline {
        Deadline::after(self.clock.clone(), self.params.per_call_timeout)
    }

    fn attempt(
        &self,
        first: impl FnOnce(&Deadline) -> Result<O::Solution, OperatorError>,
    ) -> Result<(O::Solution, f64), OperatorError> {
        let x = first(&self.deadline())?;
        let x = self.ops.improve(&x, &self.deadline())?;
        let f = self.eval.fitness(&x)?;
        if f.is_finite() {
            Ok((x, f))
        } else {
            Err(OperatorError::Invalid("non-finite fitness".into()))
        }
    }

    /// Records one event; `accept` decides on a valid result.
    fn record(
        &mut self,
        stage: Stage,
        round: usize,
        iteration: usize,
        sigma: Option<f64>,
        result: Result<(O::Solution, f64), OperatorError>,
        accept: impl FnOnce(f64, Option<f64>) -> bool,
    ) -> Result<(), RunError> {
        let fitness_before = self.best.as_ref().map(|b| b.1);
        let elapsed = self.clock.now().saturating_sub(self.start);
        let (fitness_after, accepted, invalid, cause) = match result {
            Ok((x, f)) => {
                let accepted = accept(f, fitness_before);
                if accepted {
                    self.best = Some((x, f));
                }
                (Some(f), accepted, false, None)
            }
            Err(e @ OperatorError::Fatal(_)) => return Err(RunError::Fatal(e)),
            Err(e) => (None, false, true, Some(e)),
        };
        self.trace.events.push(TraceEvent {
            stage,
            round,
            iteration,
            sigma,
            fitness_before,
            fitness_after,
            accepted,
            elapsed,
            invalid,
        });
        if let Some(b) = &self.best {
            self.trace.best_fitness_curve.push(b.1);
        }
        if let Some(cause) = cause {
            if apply_invalid_policy(self.params.invalid_policy) == PolicyAction::DiscardCandidate {
                return Err(RunError::Discarded {
                    stage,
                    round,
                    iteration,
                    cause,
                    trace: core::mem::take(&mut self.trace),
                });
            }
        }
        Ok(())
    }
}

/// Runs the two-stage validation scheme.
///
/// Stage A seeds are `1..=K`; B-only mode starts from `improve(generate(seed))`.
/// Perturbation seeds come from [`perturb_seed`]. Per-call deadlines are
/// measured on `clock`.
pub fn run_validation<O, E>(
    ops: &O,
    eval: &E,
    params: &BasinHopParams,
    seed: u64,
    clock: Arc<dyn Clock>,
) -> Result<RunOutcome<O::Solution>, RunError>
where
    O: Operators,
    E: Evaluator<O::Solution>,
{
    params.validate()?;
    let start = clock.now();
    let mut run = Run { ops, eval, params, clock, start, trace: RunTrace::default(), best: None };

    // a later seed wins only when strictly better, so ties keep the lowest
    let improves = |f: f64, best: Option<f64>| best.is_none_or(|b| f > b);
    if params.stage_mode.runs_a() {
        for s in 1..=params.k {
            let result = run.attempt(|d| ops.generate(s as u64, d));
            run.record(Stage::A, 0, s, None, result, improves)?;
        }
    } else {
        let result = run.attempt(|d| ops.generate(seed, d));
        run.record(Stage::A, 0, 1, None, result, improves)?;
    }
    if run.best.is_none() {
        return Err(RunError::NoValidStart { trace: run.trace });
    }

    if params.stage_mode.runs_b() {
        for round in 1..=params.rounds {
            for t in 1..=params.schedule.len() {
                let sigma = params.schedule.sigma(t);
                let incumbent = run.best.as_ref().map(|b| b.0.clone()).expect("incumbent exists");
                let pseed = perturb_seed(seed, round, t);
                let result = run.attempt(|d| ops.perturb(&incumbent, sigma, pseed, d));
                run.record(Stage::B, round, t, Some(sigma), result, |f, best| best.is_none_or(|b| f >= b))?;
            }
        }
    }

    let (best, fitness) = run.best.expect("incumbent exists");
    Ok(RunOutcome { best, fitness, trace: run.trace })
}
