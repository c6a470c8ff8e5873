//! The two benchmark problems behind one solution type, and the reference
//! operator triple parameterized by a [`ParamSet`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::aci::{self, AciError, AciParams, GridMode, StepFunction};
use crate::deadline::{Clock, Deadline};
use crate::engine::{run_validation, BasinHopParams, OperatorError, Operators, RunTrace};
use crate::evolution::{CandidateEvaluator, EvalJob, Evaluation, MutationContext, Mutator, Payload};
use crate::geometry::Point2;
use crate::hex::{self, HexConfig, HexError, HexParams, OptimizerMode};
use crate::params::{mutate_builtin, ParamSet, ParamSpec, ParamValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum ProblemKind {
    Hex { n: usize },
    Aci { resolution: usize },
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Hex { .. } => "hex",
            Self::Aci { .. } => "aci",
        }
    }

    /// Structural check: right problem and, for hexagons, the right count.
    pub fn check_shape(&self, s: &Solution) -> Result<(), OperatorError> {
        match (self, s) {
            (Self::Hex { n }, Solution::Hex(c)) if c.n() == *n => Ok(()),
            (Self::Hex { n }, Solution::Hex(c)) => {
                Err(OperatorError::Invalid(format!("expected {n} hexagons, got {}", c.n())))
            }
            (Self::Aci { .. }, Solution::Aci(_)) => Ok(()),
            _ => Err(OperatorError::Invalid(format!("solution is not a {} solution", self.name()))),
        }
    }

    /// Trusted fitness: `−L` for hexagons, `C` for step functions.
    pub fn fitness(&self, s: &Solution) -> Result<f64, OperatorError> {
        self.check_shape(s)?;
        match s {
            Solution::Hex(c) => hex::hex_fitness(c).map_err(hex_error),
            Solution::Aci(f) => Ok(aci::aci_fitness(f).c_value),
        }
    }

    /// Whether `a` is strictly better than `b`.
    pub fn better(&self, a: f64, b: f64) -> bool {
        a > b
    }

    /// MAP-Elites fitness range used for binning.
    pub fn default_fitness_range(&self) -> (f64, f64) {
        match self {
            Self::Hex { n: 11 } => (-6.0, -3.85),
            Self::Hex { n } => {
                // widen around the lattice side for other sizes
                let lattice = hex::honeycomb_lattice(*n).map(|c| c.side_length()).unwrap_or(1.0);
                (-1.5 * lattice, -0.9 * lattice)
            }
            Self::Aci { .. } => (0.5, 1.0),
        }
    }
}

/// A solution of either problem, in the shared file format
/// `{"problem": "hex", "n", "centers", "angles"}` or
/// `{"problem": "aci", "values"}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Solution {
    Hex(HexConfig),
    Aci(StepFunction),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
enum SolutionRepr {
    Hex { n: usize, centers: Vec<[f64; 2]>, angles: Vec<f64> },
    Aci { values: Vec<f64> },
}

impl Serialize for Solution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            Solution::Hex(c) => SolutionRepr::Hex {
                n: c.n(),
                centers: c.centers().iter().map(|p| [p.x, p.y]).collect(),
                angles: c.angles().to_vec(),
            },
            Solution::Aci(f) => SolutionRepr::Aci { values: f.values().to_vec() },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Solution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match SolutionRepr::deserialize(d)? {
            SolutionRepr::Hex { n, centers, angles } => {
                if centers.len() != n || angles.len() != n {
                    return Err(D::Error::custom(format!(
                        "n = {n} but {} centers and {} angles",
                        centers.len(),
                        angles.len()
                    )));
                }
                let centers = centers.into_iter().map(|[x, y]| Point2::new(x, y)).collect();
                HexConfig::new(centers, angles).map(Solution::Hex).map_err(D::Error::custom)
            }
            SolutionRepr::Aci { values } => StepFunction::new(values).map(Solution::Aci).map_err(D::Error::custom),
        }
    }
}

impl Solution {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Solution::Hex(c) => ProblemKind::Hex { n: c.n() },
            Solution::Aci(f) => ProblemKind::Aci { resolution: f.len() },
        }
    }
}

fn hex_error(e: HexError) -> OperatorError {
    match e {
        HexError::Timeout => OperatorError::Timeout,
        HexError::Malformed(_) | HexError::ConstraintViolation(_) => OperatorError::Invalid(e.to_string()),
        HexError::CountOutOfRange(_) | HexError::ImprovementFailed(_) => OperatorError::Failed(e.to_string()),
    }
}

fn aci_error(e: AciError) -> OperatorError {
    match e {
        AciError::Timeout => OperatorError::Timeout,
        AciError::ResolutionTooSmall(_) | AciError::ImprovementFailed(_) => OperatorError::Failed(e.to_string()),
        _ => OperatorError::Invalid(e.to_string()),
    }
}

/// The reference operator triple for one problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinOps {
    pub problem: ProblemKind,
    pub hex: HexParams,
    pub aci: AciParams,
}

impl BuiltinOps {
    pub fn new(problem: ProblemKind) -> Self {
        Self { problem, hex: HexParams::default(), aci: AciParams::default() }
    }

    pub fn with_hex_mode(mut self, mode: OptimizerMode) -> Self {
        self.hex = HexParams::for_mode(mode);
        self
    }

    pub fn with_grid(mut self, grid: GridMode) -> Self {
        self.aci = AciParams::for_mode(grid);
        self
    }

    /// Built-in triple configured from a candidate payload. Missing fields
    /// keep their defaults.
    pub fn from_params(problem: ProblemKind, p: &ParamSet) -> Self {
        let mut ops = Self::new(problem);
        if let Some(m) = p.choice("mode") {
            ops.hex = HexParams::for_mode(if m == "sqp" { OptimizerMode::Sqp } else { OptimizerMode::Gradient });
        }
        let h = &mut ops.hex;
        let set_real = |v: &mut f64, k: &str| {
            if let Some(x) = p.real(k) {
                *v = x;
            }
        };
        let set_int = |v: &mut usize, k: &str| {
            if let Some(x) = p.int(k) {
                *v = x.max(0) as usize;
            }
        };
        set_real(&mut h.jitter_center, "jitter_center");
        set_real(&mut h.jitter_angle, "jitter_angle");
        set_real(&mut h.penalty_start, "penalty_start");
        set_real(&mut h.penalty_growth, "penalty_growth");
        set_int(&mut h.penalty_rounds, "penalty_rounds");
        set_int(&mut h.max_iters, "max_iters");
        set_real(&mut h.bound_slack, "bound_slack");
        set_real(&mut h.perturb_center_scale, "perturb_center_scale");
        set_real(&mut h.teleport_threshold, "teleport_threshold");

        if let Some(g) = p.choice("grid") {
            let grid = if g == "extended" {
                GridMode::Extended { cap: p.int("extended_cap").map_or(aci::DEFAULT_EXTENDED_CAP, |c| c as usize) }
            } else {
                GridMode::Default
            };
            ops.aci = AciParams::for_mode(grid);
        }
        let a = &mut ops.aci;
        set_real(&mut a.beta_start, "beta_start");
        set_real(&mut a.beta_end, "beta_end");
        set_int(&mut a.beta_stages, "beta_stages");
        set_int(&mut a.iters_per_stage, "iters_per_stage");
        set_int(&mut a.lbfgs_memory, "lbfgs_memory");
        set_real(&mut a.coarse_noise_cap, "coarse_noise_cap");
        ops
    }

    /// The current configuration as a payload.
    pub fn to_params(&self) -> ParamSet {
        use ParamValue::{Choice, Int, Real};
        match self.problem {
            ProblemKind::Hex { .. } => {
                let h = &self.hex;
                let mode = match h.mode {
                    OptimizerMode::Gradient => "gradient",
                    OptimizerMode::Sqp => "sqp",
                };
                ParamSet::default()
                    .with("mode", Choice(mode.into()))
                    .with("jitter_center", Real(h.jitter_center))
                    .with("jitter_angle", Real(h.jitter_angle))
                    .with("penalty_start", Real(h.penalty_start))
                    .with("penalty_growth", Real(h.penalty_growth))
                    .with("penalty_rounds", Int(h.penalty_rounds as i64))
                    .with("max_iters", Int(h.max_iters as i64))
                    .with("bound_slack", Real(h.bound_slack))
                    .with("perturb_center_scale", Real(h.perturb_center_scale))
                    .with("teleport_threshold", Real(h.teleport_threshold))
            }
            ProblemKind::Aci { .. } => {
                let a = &self.aci;
                let (grid, cap) = match a.grid {
                    GridMode::Default => ("default", aci::DEFAULT_EXTENDED_CAP),
                    GridMode::Extended { cap } => ("extended", cap),
                };
                ParamSet::default()
                    .with("grid", Choice(grid.into()))
                    .with("extended_cap", Int(cap as i64))
                    .with("beta_start", Real(a.beta_start))
                    .with("beta_end", Real(a.beta_end))
                    .with("beta_stages", Int(a.beta_stages as i64))
                    .with("iters_per_stage", Int(a.iters_per_stage as i64))
                    .with("lbfgs_memory", Int(a.lbfgs_memory as i64))
                    .with("coarse_noise_cap", Real(a.coarse_noise_cap))
            }
        }
    }
}

/// Mutable fields of the built-in payload and their bounds.
pub fn builtin_schema(problem: ProblemKind) -> Vec<ParamSpec> {
    match problem {
        ProblemKind::Hex { .. } => alloc::vec![
            ParamSpec::choice("mode", &["gradient", "sqp"]),
            ParamSpec::real("jitter_center", 0.0, 0.5),
            ParamSpec::real("jitter_angle", 0.0, 0.5),
            ParamSpec::real("penalty_start", 0.1, 1e3),
            ParamSpec::real("penalty_growth", 2.0, 100.0),
            ParamSpec::int("penalty_rounds", 3, 10),
            ParamSpec::int("max_iters", 50, 5000),
            ParamSpec::real("bound_slack", 1.0, 5.0),
            ParamSpec::real("perturb_center_scale", 0.01, 1.0),
            ParamSpec::real("teleport_threshold", 1.0, 100.0),
        ],
        ProblemKind::Aci { .. } => alloc::vec![
            ParamSpec::choice("grid", &["default", "extended"]),
            ParamSpec::int("extended_cap", 1024, aci::MAX_EXTENDED_CAP as i64),
            ParamSpec::real("beta_start", 10.0, 1e4),
            ParamSpec::real("beta_end", 1e2, 1e6),
            ParamSpec::int("beta_stages", 1, 6),
            ParamSpec::int("iters_per_stage", 50, 3000),
            ParamSpec::int("lbfgs_memory", 3, 40),
            ParamSpec::real("coarse_noise_cap", 0.1, 3.0),
        ],
    }
}

impl Operators for BuiltinOps {
    type Solution = Solution;

    fn generate(&self, seed: u64, _: &Deadline) -> Result<Solution, OperatorError> {
        match self.problem {
            ProblemKind::Hex { n } => hex::hex_generate_with(n, seed, &self.hex).map(Solution::Hex).map_err(hex_error),
            ProblemKind::Aci { resolution } => {
                aci::aci_generate(resolution, seed).map(Solution::Aci).map_err(aci_error)
            }
        }
    }

    fn improve(&self, s: &Solution, deadline: &Deadline) -> Result<Solution, OperatorError> {
        self.problem.check_shape(s)?;
        match s {
            Solution::Hex(c) => hex::hex_improve_with(c, &self.hex, deadline).map(Solution::Hex).map_err(hex_error),
            Solution::Aci(f) => aci::aci_improve_with(f, &self.aci, deadline).map(Solution::Aci).map_err(aci_error),
        }
    }

    fn perturb(&self, s: &Solution, sigma: f64, seed: u64, _: &Deadline) -> Result<Solution, OperatorError> {
        self.problem.check_shape(s)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(OperatorError::Failed(format!("perturbation intensity must be positive, got {sigma}")));
        }
        Ok(match s {
            Solution::Hex(c) => Solution::Hex(hex::hex_perturb_with(c, sigma, seed, &self.hex)),
            Solution::Aci(f) => Solution::Aci(aci::aci_perturb_with(f, sigma, seed, &self.aci)),
        })
    }
}

/// Evaluates built-in payloads with the engine; external payloads need
/// the harness.
#[derive(Clone)]
pub struct BuiltinEvaluator {
    pub problem: ProblemKind,
    pub clock: Arc<dyn Clock>,
}

impl CandidateEvaluator for BuiltinEvaluator {
    fn evaluate(&self, job: &EvalJob, params: &BasinHopParams) -> Result<Evaluation, String> {
        let Payload::BuiltinParametric { params: payload } = &job.payload else {
            return Err("external candidates cannot be evaluated in-process".into());
        };
        let ops = BuiltinOps::from_params(self.problem, payload);
        let problem = self.problem;
        let eval = move |s: &Solution| problem.fitness(s);
        let out = run_validation(&ops, &eval, params, job.seed, self.clock.clone()).map_err(|e| e.to_string())?;
        Ok(Evaluation { fitness: out.fitness, metrics: trace_metrics(&out.trace) })
    }
}

/// Summary numbers of a run, attached to candidates.
pub fn trace_metrics(trace: &RunTrace) -> BTreeMap<String, f64> {
    let events = trace.events.len().max(1) as f64;
    let invalid = trace.events.iter().filter(|e| e.invalid).count() as f64;
    let accepted = trace.events.iter().filter(|e| e.accepted).count() as f64;
    let wall = trace.events.last().map_or(0.0, |e| e.elapsed.as_secs_f64());
    BTreeMap::from([
        ("invalid_rate".into(), invalid / events),
        ("acceptance_rate".into(), accepted / events),
        ("wall_time".into(), wall),
    ])
}

/// Offline mutation of built-in payloads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinMutator {
    pub problem: ProblemKind,
    /// Log-normal spread; 0 makes children copies of their parents' fields.
    pub log_std: f64,
}

impl BuiltinMutator {
    pub fn new(problem: ProblemKind) -> Self {
        Self { problem, log_std: crate::params::MUTATION_LOG_STD }
    }
}

impl Mutator for BuiltinMutator {
    fn mutate(&self, ctx: &MutationContext, seed: u64) -> Result<Payload, String> {
        let parents: Vec<ParamSet> = ctx
            .parents
            .iter()
            .filter_map(|c| match &c.payload {
                Payload::BuiltinParametric { params } => Some(params.clone()),
                Payload::ExternalProcess { .. } => None,
            })
            .collect();
        if parents.is_empty() {
            return Err("no built-in parent to mutate".into());
        }
        let params = mutate_builtin(&parents, &builtin_schema(self.problem), seed, self.log_std);
        Ok(Payload::BuiltinParametric { params })
    }
}

/// Human-readable one-line summary of a solution's quality.
pub fn describe(s: &Solution) -> String {
    match s {
        Solution::Hex(c) => format!("n={} L={:.6}", c.n(), c.side_length()),
        Solution::Aci(f) => format!("N={} C={:.6}", f.len(), aci::aci_fitness(f).c_value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solution_file_round_trip() {
        let s = Solution::Hex(hex::honeycomb_lattice(3).unwrap());
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.starts_with(r#"{"problem":"hex","n":3,"centers":[[0.0,0.0],"#), "{json}");
        assert_eq!(serde_json::from_str::<Solution>(&json).unwrap(), s);

        let a = Solution::Aci(StepFunction::new(alloc::vec![0.1, 1.0 / 3.0]).unwrap());
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"{"problem":"aci","values":[0.1,0.3333333333333333]}"#);
        assert_eq!(serde_json::from_str::<Solution>(&json).unwrap(), a);
    }

    #[test]
    fn malformed_files_are_rejected() {
        for bad in [
            r#"{"problem":"hex","n":2,"centers":[[0,0]],"angles":[0]}"#,
            r#"{"problem":"aci","values":[1,-1]}"#,
            r#"{"problem":"aci","values":[0,0]}"#,
            r#"{"problem":"square","values":[1]}"#,
        ] {
            assert!(serde_json::from_str::<Solution>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn wrong_count_is_invalid() {
        let kind = ProblemKind::Hex { n: 11 };
        let twelve = Solution::Hex(hex::honeycomb_lattice(12).unwrap());
        assert!(matches!(kind.fitness(&twelve), Err(OperatorError::Invalid(_))));
    }

    #[test]
    fn params_round_trip_through_payload() {
        for kind in [ProblemKind::Hex { n: 5 }, ProblemKind::Aci { resolution: 64 }] {
            let ops = BuiltinOps::new(kind);
            let back = BuiltinOps::from_params(kind, &ops.to_params());
            assert_eq!(back, ops);
            let alt = match kind {
                ProblemKind::Hex { .. } => BuiltinOps::new(kind).with_hex_mode(OptimizerMode::Sqp),
                ProblemKind::Aci { .. } => BuiltinOps::new(kind).with_grid(GridMode::extended()),
            };
            assert_eq!(BuiltinOps::from_params(kind, &alt.to_params()), alt);
        }
    }

    #[test]
    fn default_payload_lies_within_schema() {
        for kind in [ProblemKind::Hex { n: 5 }, ProblemKind::Aci { resolution: 64 }] {
            let p = BuiltinOps::new(kind).to_params();
            let schema = builtin_schema(kind);
            assert_eq!(mutate_builtin(&[p.clone()], &schema, 1, 0.0), p);
        }
    }
}
