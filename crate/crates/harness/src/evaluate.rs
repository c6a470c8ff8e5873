//! Candidate evaluation on a bounded worker pool.

use std::sync::Arc;

use improvevolve_core::engine::{run_validation, BasinHopParams, RunError, RunOutcome};
use improvevolve_core::evolution::{CandidateEvaluator, EvalJob, Evaluation, Payload};
use improvevolve_core::problem::trace_metrics;
use improvevolve_core::{BuiltinOps, Clock, ProblemKind, Solution};
use rayon::prelude::*;

use crate::protocol::ExternalOps;
use crate::runtime::{Guarded, InstantClock};

/// Runs two-stage validation for any payload. Built-in triples run in-process under
/// the watchdog; external ones in a fresh process per evaluation.
pub struct HarnessEvaluator {
    pub problem: ProblemKind,
    clock: Arc<dyn Clock>,
    pool: rayon::ThreadPool,
}

impl HarnessEvaluator {
    pub fn new(problem: ProblemKind, workers: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .thread_name(|i| format!("evaluator-{i}"))
            .build()
            .expect("evaluator pool");
        Self { problem, clock: InstantClock::shared(), pool }
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs one payload and keeps the best solution.
    pub fn run(&self, payload: &Payload, params: &BasinHopParams, seed: u64) -> Result<RunOutcome<Solution>, RunError> {
        let problem = self.problem;
        let eval = move |s: &Solution| problem.fitness(s);
        let fallback = params.per_call_timeout;
        match payload {
            Payload::BuiltinParametric { params: set } => {
                let ops = Guarded::new(BuiltinOps::from_params(problem, set), fallback);
                run_validation(&ops, &eval, params, seed, self.clock.clone())
            }
            Payload::ExternalProcess { launch } => {
                let ops = ExternalOps::new(launch.clone(), problem, seed, fallback, fallback);
                run_validation(&ops, &eval, params, seed, self.clock.clone())
            }
        }
    }

    fn evaluate_one(&self, job: &EvalJob, params: &BasinHopParams) -> Result<Evaluation, String> {
        let out = self.run(&job.payload, params, job.seed).map_err(|e| e.to_string())?;
        Ok(Evaluation { fitness: out.fitness, metrics: trace_metrics(&out.trace) })
    }
}

impl CandidateEvaluator for HarnessEvaluator {
    fn evaluate(&self, job: &EvalJob, params: &BasinHopParams) -> Result<Evaluation, String> {
        self.evaluate_one(job, params)
    }

    fn evaluate_batch(&self, jobs: &[EvalJob], params: &BasinHopParams) -> Vec<Result<Evaluation, String>> {
        self.pool.install(|| jobs.par_iter().map(|j| self.evaluate_one(j, params)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use improvevolve_core::evolution::LaunchSpec;
    use improvevolve_core::{InvalidPolicy, SigmaSchedule, StageMode};
    use std::time::Duration;

    fn small() -> BasinHopParams {
        BasinHopParams {
            k: 2,
            rounds: 1,
            schedule: SigmaSchedule::explicit(vec![0.1, 0.01]).unwrap(),
            per_call_timeout: Duration::from_secs(30),
            invalid_policy: InvalidPolicy::Discard,
            stage_mode: StageMode::Both,
        }
    }

    #[test]
    fn batches_keep_job_order_and_match_sequential() {
        let problem = ProblemKind::Hex { n: 3 };
        let payload = Payload::BuiltinParametric { params: BuiltinOps::new(problem).to_params() };
        let jobs: Vec<EvalJob> = (0..4).map(|seed| EvalJob { payload: payload.clone(), seed }).collect();
        let parallel = HarnessEvaluator::new(problem, 4).evaluate_batch(&jobs, &small());
        let serial = HarnessEvaluator::new(problem, 1);
        for (job, got) in jobs.iter().zip(&parallel) {
            let want = serial.evaluate(job, &small()).unwrap();
            assert_eq!(got.as_ref().unwrap().fitness.to_bits(), want.fitness.to_bits());
        }
    }

    #[test]
    fn unlaunchable_external_candidate_is_discarded() {
        let problem = ProblemKind::Hex { n: 2 };
        let launch = LaunchSpec { command: vec!["/nonexistent/x".into()], working_dir: None, source: None };
        let job = EvalJob { payload: Payload::ExternalProcess { launch }, seed: 0 };
        assert!(HarnessEvaluator::new(problem, 1).evaluate(&job, &small()).is_err());
    }
}
