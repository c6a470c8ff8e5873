//! Fitness-binned MAP-Elites over operator candidates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::engine::{BasinHopParams, InvalidPolicy};
use crate::params::ParamSet;
use crate::rng;

pub const ARCHIVE_BINS: usize = 150;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvolutionError {
    #[error("archive is empty")]
    EmptyArchive,
    #[error("invalid evolution parameters: {0}")]
    Params(String),
}

/// How an external candidate is started.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchSpec {
    pub command: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub working_dir: Option<String>,
    /// Program text the candidate was built from, kept for mutation prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    BuiltinParametric { params: ParamSet },
    ExternalProcess { launch: LaunchSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub payload: Payload,
    pub fitness: Option<f64>,
    pub generation: u64,
    pub parent_ids: Vec<u64>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum InsertOutcome {
    Inserted { bin: usize, replaced: Option<u64> },
    Rejected { reason: String },
}

impl InsertOutcome {
    pub fn inserted(&self) -> bool {
        matches!(self, Self::Inserted { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub bins: Vec<Option<Candidate>>,
    pub fitness_range: (f64, f64),
    pub generation: u64,
    /// Next candidate id to hand out.
    pub next_id: u64,
}

impl Archive {
    pub fn new(fitness_range: (f64, f64)) -> Self {
        assert!(fitness_range.0 < fitness_range.1, "fitness range must be increasing");
        Self { bins: vec![None; ARCHIVE_BINS], fitness_range, generation: 0, next_id: 0 }
    }

    pub fn bin_index(&self, fitness: f64) -> usize {
        let (lo, hi) = self.fitness_range;
        let raw = libm::floor(ARCHIVE_BINS as f64 * (fitness - lo) / (hi - lo));
        raw.clamp(0.0, (ARCHIVE_BINS - 1) as f64) as usize
    }

    pub fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Strictly better candidates replace the bin incumbent.
    pub fn insert(&mut self, c: Candidate) -> InsertOutcome {
        let Some(f) = c.fitness else {
            return InsertOutcome::Rejected { reason: "candidate not evaluated".into() };
        };
        if !f.is_finite() {
            return InsertOutcome::Rejected { reason: format!("non-finite fitness {f}") };
        }
        let bin = self.bin_index(f);
        let slot = &mut self.bins[bin];
        match slot {
            Some(inc) if inc.fitness.is_some_and(|g| f <= g) => {
                InsertOutcome::Rejected { reason: format!("bin {bin} holds fitness {:?}", inc.fitness.unwrap_or(f)) }
            }
            _ => {
                let replaced = slot.as_ref().map(|inc| inc.id);
                *slot = Some(c);
                InsertOutcome::Inserted { bin, replaced }
            }
        }
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.bins.iter().flatten()
    }

    pub fn occupancy(&self) -> usize {
        self.candidates().count()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy() == 0
    }

    pub fn best(&self) -> Option<&Candidate> {
        // bins are ordered by fitness, so the highest occupied bin holds the best
        self.bins.iter().rev().flatten().next()
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.best().and_then(|c| c.fitness)
    }

    pub fn stats(&self) -> ArchiveStats {
        let fits: Vec<f64> = self.candidates().filter_map(|c| c.fitness).collect();
        let occupied = fits.len();
        let (mut best, mut worst, mut sum) = (f64::NEG_INFINITY, f64::INFINITY, 0.0);
        for &f in &fits {
            best = best.max(f);
            worst = worst.min(f);
            sum += f;
        }
        ArchiveStats {
            occupied,
            best: (occupied > 0).then_some(best),
            worst: (occupied > 0).then_some(worst),
            mean: (occupied > 0).then(|| sum / occupied as f64),
            generation: self.generation,
        }
    }
}

pub fn archive_insert(a: &mut Archive, c: Candidate) -> InsertOutcome {
    a.insert(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveStats {
    pub occupied: usize,
    pub best: Option<f64>,
    pub worst: Option<f64>,
    pub mean: Option<f64>,
    pub generation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    ShiftedProportional,
    RankProportional,
}

/// Sampling weights over `fitness`. Shifted weights are `f − min + ε` with
/// `ε = 1e-6·(max − min + 1)`; ranks (ties averaged) are used on request or
/// when every fitness is equal.
pub fn selection_weights(fitness: &[f64], selection: Selection) -> Vec<f64> {
    let min = fitness.iter().copied().fold(f64::INFINITY, f64::min);
    let max = fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if selection == Selection::ShiftedProportional && max > min {
        let eps = 1e-6 * (max - min + 1.0);
        return fitness.iter().map(|f| f - min + eps).collect();
    }
    fitness
        .iter()
        .map(|f| {
            let below = fitness.iter().filter(|g| *g < f).count() as f64;
            let equal = fitness.iter().filter(|g| *g == f).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// `n` draws with replacement, in bin order before sampling.
pub fn select_elites(a: &Archive, n: usize, seed: u64) -> Result<Vec<Candidate>, EvolutionError> {
    select_elites_with(a, n, seed, Selection::ShiftedProportional)
}

pub fn select_elites_with(
    a: &Archive,
    n: usize,
    seed: u64,
    selection: Selection,
) -> Result<Vec<Candidate>, EvolutionError> {
    let pool: Vec<&Candidate> = a.candidates().collect();
    if pool.is_empty() {
        return Err(EvolutionError::EmptyArchive);
    }
    let fits: Vec<f64> = pool.iter().map(|c| c.fitness.unwrap_or(f64::NEG_INFINITY)).collect();
    let weights = selection_weights(&fits, selection);
    let dist = WeightedIndex::new(&weights).map_err(|e| EvolutionError::Params(format!("{e}")))?;
    let mut rng = rng::seeded(seed);
    Ok((0..n).map(|_| pool[dist.sample(&mut rng)].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    pub n_elites: usize,
    pub n_parents: usize,
    pub n_offspring: usize,
    pub eval_params: BasinHopParams,
    pub generations: usize,
    pub selection: Selection,
}

impl EvolutionParams {
    /// Common settings with the reduced `R = 3` evaluation budget.
    pub fn with_eval(eval: BasinHopParams) -> Self {
        Self {
            n_elites: 6,
            n_parents: 2,
            n_offspring: 10,
            eval_params: BasinHopParams { rounds: 3, invalid_policy: InvalidPolicy::Discard, ..eval },
            generations: 10,
            selection: Selection::ShiftedProportional,
        }
    }

    pub fn validate(&self) -> Result<(), EvolutionError> {
        if self.n_parents == 0 || self.n_parents > self.n_elites {
            return Err(EvolutionError::Params("need 1 <= n_parents <= n_elites".into()));
        }
        if self.n_offspring == 0 {
            return Err(EvolutionError::Params("need n_offspring >= 1".into()));
        }
        self.eval_params.validate().map_err(|e| EvolutionError::Params(format!("{e}")))
    }
}

/// What the mutation operator sees about an offspring's parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationContext {
    pub parents: Vec<Candidate>,
    pub archive: ArchiveStats,
    pub generation: u64,
}

impl MutationContext {
    /// Plain-text summary of parent metrics and archive statistics.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "generation {}; archive: {} occupied bins, best {}, mean {}, worst {}\n",
            self.generation,
            self.archive.occupied,
            fmt_opt(self.archive.best),
            fmt_opt(self.archive.mean),
            fmt_opt(self.archive.worst),
        );
        for (k, p) in self.parents.iter().enumerate() {
            let delta = match (p.fitness, self.archive.best) {
                (Some(f), Some(b)) => format!("{:+.6}", f - b),
                _ => "n/a".into(),
            };
            out += &format!(
                "parent {k} (id {}, generation {}): fitness {}, gap to best {delta}",
                p.id,
                p.generation,
                fmt_opt(p.fitness)
            );
            for (name, v) in &p.metrics {
                out += &format!(", {name} {v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

pub trait Mutator {
    fn mutate(&self, ctx: &MutationContext, seed: u64) -> Result<Payload, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalJob {
    pub payload: Payload,
    pub seed: u64,
}

/// Evaluates one payload with the engine; `Err` means discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

pub trait CandidateEvaluator {
    fn evaluate(&self, job: &EvalJob, params: &BasinHopParams) -> Result<Evaluation, String>;

    /// Evaluates independent jobs; results are in job order. Implementations
    /// may run them concurrently.
    fn evaluate_batch(&self, jobs: &[EvalJob], params: &BasinHopParams) -> Vec<Result<Evaluation, String>> {
        jobs.iter().map(|j| self.evaluate(j, params)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OffspringStatus {
    MutationFailed { reason: String },
    Discarded { reason: String },
    Evaluated { fitness: f64, insert: InsertOutcome },
}

/// One line of the generation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringRecord {
    pub generation: u64,
    pub index: usize,
    pub child_id: Option<u64>,
    pub parent_ids: Vec<u64>,
    #[serde(flatten)]
    pub status: OffspringStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: u64,
    pub offspring: Vec<OffspringRecord>,
    pub births: usize,
    pub discards: usize,
    pub mutation_failures: usize,
    pub inserts: usize,
    pub best_fitness: Option<f64>,
    pub occupancy: usize,
}

/// Evaluates `payload` as a generation-0 candidate and inserts it.
pub fn seed_archive<E: CandidateEvaluator + ?Sized>(
    a: &mut Archive,
    payload: Payload,
    evaluator: &E,
    params: &EvolutionParams,
    seed: u64,
) -> Result<InsertOutcome, String> {
    let eval = BasinHopParams { invalid_policy: InvalidPolicy::Discard, ..params.eval_params.clone() };
    let job = EvalJob { payload, seed };
    let result = evaluator.evaluate(&job, &eval)?;
    let id = a.fresh_id();
    let c = Candidate {
        id,
        payload: job.payload,
        fitness: Some(result.fitness),
        generation: a.generation,
        parent_ids: Vec::new(),
        metrics: result.metrics,
    };
    Ok(a.insert(c))
}

/// One MAP-Elites generation: select elites, breed, evaluate with the
/// discard policy, insert survivors.
pub fn step_generation<M, E>(
    a: &mut Archive,
    p: &EvolutionParams,
    mutator: &M,
    evaluator: &E,
    seed: u64,
) -> Result<GenerationReport, EvolutionError>
where
    M: Mutator + ?Sized,
    E: CandidateEvaluator + ?Sized,
{
    p.validate()?;
    let generation = a.generation + 1;
    let elites = select_elites_with(a, p.n_elites, rng::mix(seed, generation, 0), p.selection)?;
    let stats = a.stats();

    let mut records = Vec::with_capacity(p.n_offspring);
    let mut pending = Vec::new();
    for k in 0..p.n_offspring {
        let mut pick = rng::seeded(rng::mix(seed, generation, 1 + 2 * k as u64));
        let parents: Vec<Candidate> =
            index::sample(&mut pick, elites.len(), p.n_parents).into_iter().map(|i| elites[i].clone()).collect();
        let parent_ids: Vec<u64> = parents.iter().map(|c| c.id).collect();
        let ctx = MutationContext { parents, archive: stats.clone(), generation };
        match mutator.mutate(&ctx, rng::mix(seed, generation, 2 + 2 * k as u64)) {
            Ok(payload) => {
                let id = a.fresh_id();
                pending.push((records.len(), id, EvalJob { payload, seed: rng::mix(seed, generation, 1 << 32 | k as u64) }));
                records.push(OffspringRecord {
                    generation,
                    index: k,
                    child_id: Some(id),
                    parent_ids,
                    status: OffspringStatus::Discarded { reason: String::new() },
                });
            }
            Err(reason) => records.push(OffspringRecord {
                generation,
                index: k,
                child_id: None,
                parent_ids,
                status: OffspringStatus::MutationFailed { reason },
            }),
        }
    }

    let eval = BasinHopParams { invalid_policy: InvalidPolicy::Discard, ..p.eval_params.clone() };
    let jobs: Vec<EvalJob> = pending.iter().map(|(_, _, j)| j.clone()).collect();
    let results = evaluator.evaluate_batch(&jobs, &eval);
    // insertion is serialized here, in offspring order
    for ((slot, id, job), result) in pending.into_iter().zip(results) {
        let record = &mut records[slot];
        record.status = match result {
            Err(reason) => OffspringStatus::Discarded { reason },
            Ok(ev) => {
                let c = Candidate {
                    id,
                    payload: job.payload,
                    fitness: Some(ev.fitness),
                    generation,
                    parent_ids: record.parent_ids.clone(),
                    metrics: ev.metrics,
                };
                OffspringStatus::Evaluated { fitness: ev.fitness, insert: a.insert(c) }
            }
        };
    }
    a.generation = generation;

    let count = |f: fn(&OffspringStatus) -> bool| records.iter().filter(|r| f(&r.status)).count();
    Ok(GenerationReport {
        generation,
        births: count(|s| matches!(s, OffspringStatus::Evaluated { .. })),
        discards: count(|s| matches!(s, OffspringStatus::Discarded { .. })),
        mutation_failures: count(|s| matches!(s, OffspringStatus::MutationFailed { .. })),
        inserts: count(|s| matches!(s, OffspringStatus::Evaluated { insert, .. } if insert.inserted())),
        best_fitness: a.best_fitness(),
        occupancy: a.occupancy(),
        offspring: records,
    })
}
