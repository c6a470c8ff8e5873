//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid solution or failed run, 2 unreadable
//! input or bad arguments.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use improvevolve_core::aci::{self, GridMode, StepFunction, DEFAULT_EXTENDED_CAP};
use improvevolve_core::engine::{run_validation, BasinHopParams, InvalidPolicy, SigmaSchedule, StageMode};
use improvevolve_core::evolution::{
    seed_archive, step_generation, Archive, EvolutionParams, LaunchSpec, Mutator, Payload, Selection,
};
use improvevolve_core::hex::{hex_validate, OptimizerMode};
use improvevolve_core::params::ParamSet;
use improvevolve_core::problem::{describe, BuiltinMutator};
use improvevolve_core::{BuiltinOps, ProblemKind, Solution};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::bench::bench_solution;
use crate::evaluate::HarnessEvaluator;
use crate::files;
use crate::mutation::{default_shim_command, write_candidate, EndpointConfig, ServiceMutator};
use crate::protocol::{serve, ServeOptions};
use crate::runtime::{resolve_workers, Guarded, InstantClock};
use crate::svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "improvevolve", version, about = "Operator-triple optimization for hexagon packing and the autoconvolution ratio")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a solution file and print its score.
    Validate { file: PathBuf },
    /// Run two-stage basin hopping with the built-in operators.
    Solve(SolveArgs),
    /// Evolve operator candidates in a MAP-Elites archive.
    Evolve(EvolveArgs),
    /// Compare A-only, B-only and A+B runs on one hexagon instance.
    Ablate(AblateArgs),
    /// Draw a solution or a trace as SVG.
    Render { input: PathBuf, output: PathBuf },
    /// Compare a solution with the published best values.
    Bench { file: PathBuf },
    /// Serve the built-in operators over the candidate protocol on stdio.
    Serve {
        /// Built-in parameter set (JSON object) applied at init.
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    Hex,
    Aci,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Table3Hex,
    Table3Aci,
    FinalHex,
}

impl Preset {
    fn params(self) -> BasinHopParams {
        match self {
            Preset::Table3Hex => BasinHopParams::table3_hex(),
            Preset::Table3Aci => BasinHopParams::table3_aci(),
            Preset::FinalHex => BasinHopParams::final_hex(),
        }
    }

    fn problem(self) -> ProblemArg {
        match self {
            Preset::Table3Aci => ProblemArg::Aci,
            Preset::Table3Hex | Preset::FinalHex => ProblemArg::Hex,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Discard,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HexMode {
    Gradient,
    Sqp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grid {
    Default,
    Extended,
}

/// `sigma_max,sigma_min,steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometric {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub steps: usize,
}

impl FromStr for Geometric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [hi, lo, m] = parts[..] else {
            return Err(format!("expected sigma_max,sigma_min,steps, got {s:?}"));
        };
        let num = |x: &str| x.parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
        Ok(Self { sigma_max: num(hi)?, sigma_min: num(lo)?, steps: m.parse().map_err(|e| format!("{m:?}: {e}"))? })
    }
}

impl<'de> Deserialize<'de> for Geometric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

fn parse_stage_mode(s: &str) -> Result<StageMode, String> {
    serde_json::from_value(Value::String(s.into())).map_err(|_| format!("expected A-only, B-only or A+B, got {s:?}"))
}

fn de_stage_mode<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<StageMode>, D::Error> {
    Option::<String>::deserialize(d)?.map(|s| parse_stage_mode(&s).map_err(serde::de::Error::custom)).transpose()
}

/// Run settings shared by flags and JSON config files; config keys are the
/// flag names.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunFlags {
    /// Stage-A seeds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Stage-B rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Explicit schedule, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "geometric")]
    pub sigmas: Option<Vec<f64>>,
    /// Geometric schedule `sigma_max,sigma_min,steps`.
    #[arg(long)]
    pub geometric: Option<Geometric>,
    /// Per-call timeout in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long, value_enum)]
    pub policy: Option<Policy>,
    /// A-only, B-only or A+B.
    #[arg(long, value_parser = parse_stage_mode)]
    #[serde(default, deserialize_with = "de_stage_mode")]
    pub stage_mode: Option<StageMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub hex_mode: Option<HexMode>,
    #[arg(long, value_enum)]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub extended_cap: Option<usize>,
}

impl RunFlags {
    /// Field-wise `self` over `other`; the schedule moves as one unit.
    pub fn or(self, other: RunFlags) -> RunFlags {
        let schedule_set = self.sigmas.is_some() || self.geometric.is_some();
        let (sigmas, geometric) =
            if schedule_set { (self.sigmas, self.geometric) } else { (other.sigmas, other.geometric) };
        RunFlags {
            k: self.k.or(other.k),
            rounds: self.rounds.or(other.rounds),
            sigmas,
            geometric,
            timeout: self.timeout.or(other.timeout),
            policy: self.policy.or(other.policy),
            stage_mode: self.stage_mode.or(other.stage_mode),
            seed: self.seed.or(other.seed),
            hex_mode: self.hex_mode.or(other.hex_mode),
            grid: self.grid.or(other.grid),
            extended_cap: self.extended_cap.or(other.extended_cap),
        }
    }

    /// Applies the set fields on top of `base`.
    pub fn apply(&self, mut base: BasinHopParams) -> anyhow::Result<BasinHopParams> {
        if let Some(k) = self.k {
            base.k = k;
        }
        if let Some(r) = self.rounds {
            base.rounds = r;
        }
        match (&self.sigmas, self.geometric) {
            (Some(_), Some(_)) => bail!("give either sigmas or geometric, not both"),
            (Some(v), None) => base.schedule = SigmaSchedule::explicit(v.clone())?,
            (None, Some(g)) => base.schedule = SigmaSchedule::geometric(g.sigma_max, g.sigma_min, g.steps)?,
            (None, None) => {}
        }
        if let Some(t) = self.timeout {
            if !(t > 0.0 && t.is_finite()) {
                bail!("timeout must be positive, got {t}");
            }
            base.per_call_timeout = Duration::from_secs_f64(t);
        }
        if let Some(p) = self.policy {
            base.invalid_policy = match p {
                Policy::Discard => InvalidPolicy::Discard,
                Policy::Skip => InvalidPolicy::Skip,
            };
        }
        if let Some(m) = self.stage_mode {
            base.stage_mode = m;
        }
        base.validate()?;
        Ok(base)
    }

    /// Built-in operators for `kind` with the mode flags applied.
    pub fn ops(&self, kind: ProblemKind) -> anyhow::Result<BuiltinOps> {
        let mut ops = BuiltinOps::new(kind);
        match kind {
            ProblemKind::Hex { .. } => {
                if self.grid.is_some() || self.extended_cap.is_some() {
                    bail!("--grid and --extended-cap apply to aci only");
                }
                if let Some(m) = self.hex_mode {
                    ops = ops.with_hex_mode(match m {
                        HexMode::Gradient => OptimizerMode::Gradient,
                        HexMode::Sqp => OptimizerMode::Sqp,
                    });
                }
            }
            ProblemKind::Aci { .. } => {
                if self.hex_mode.is_some() {
                    bail!("--hex-mode applies to hex only");
                }
                let grid = match (self.grid, self.extended_cap) {
                    (Some(Grid::Extended), cap) | (None, cap @ Some(_)) => {
                        Some(GridMode::Extended { cap: cap.unwrap_or(DEFAULT_EXTENDED_CAP) })
                    }
                    (Some(Grid::Default), Some(_)) => bail!("--extended-cap needs --grid extended"),
                    (Some(Grid::Default), None) => Some(GridMode::Default),
                    (None, None) => None,
                };
                if let Some(g) = grid {
                    ops = ops.with_grid(g);
                }
            }
        }
        Ok(ops)
    }
}

#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    #[arg(value_enum)]
    pub problem: ProblemArg,
    /// Number of hexagons.
    #[arg(long)]
    pub n: Option<usize>,
    /// Initial step-function resolution.
    #[arg(long)]
    pub resolution: Option<usize>,
}

pub const DEFAULT_HEX_N: usize = 11;
pub const DEFAULT_RESOLUTION: usize = 1024;

impl InstanceArgs {
    pub fn kind(&self) -> anyhow::Result<ProblemKind> {
        match self.problem {
            ProblemArg::Hex => {
                if self.resolution.is_some() {
                    bail!("--resolution applies to aci only");
                }
                let n = self.n.unwrap_or(DEFAULT_HEX_N);
                if n == 0 || n > improvevolve_core::hex::MAX_HEXAGONS {
                    bail!("--n must be in 1..={}", improvevolve_core::hex::MAX_HEXAGONS);
                }
                Ok(ProblemKind::Hex { n })
            }
            ProblemArg::Aci => {
                if self.n.is_some() {
                    bail!("--n applies to hex only");
                }
                let resolution = self.resolution.unwrap_or(DEFAULT_RESOLUTION);
                if resolution < aci::MIN_GENERATE_RESOLUTION {
                    bail!("--resolution must be at least {}", aci::MIN_GENERATE_RESOLUTION);
                }
                Ok(ProblemKind::Aci { resolution })
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Defaults to table3-hex or table3-aci by problem.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// JSON file with the same keys as the run flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
    /// Best solution output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trace output, one JSON event per line.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MutationMode {
    Builtin,
    External,
}

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Generations to run in this invocation.
    #[arg(long, default_value_t = 10)]
    pub generations: usize,
    #[arg(long, value_enum, default_value_t = MutationMode::Builtin)]
    pub mutation: MutationMode,
    /// Endpoint config (JSON) for external mutation.
    #[arg(long)]
    pub endpoint: Option<PathBuf>,
    /// Archive checkpoint, written after every generation.
    #[arg(long)]
    pub archive: PathBuf,
    /// Continue from an existing checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Generation report (JSON lines); defaults next to the archive.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "IMPROVOLVE_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = 6)]
    pub elites: usize,
    #[arg(long, default_value_t = 2)]
    pub parents: usize,
    #[arg(long, default_value_t = 10)]
    pub offspring: usize,
    /// Rank-proportional instead of shifted fitness-proportional selection.
    #[arg(long)]
    pub rank_selection: bool,
    /// Built-in parameter set (JSON object) for the seed candidate.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Program seeding the archive in external mode.
    #[arg(long)]
    pub initial_source: Option<PathBuf>,
    /// Command that runs a program through the shim.
    #[arg(long, env = "IMPROVOLVE_SHIM")]
    pub shim_command: Option<String>,
    /// Where child programs are written; defaults next to the archive.
    #[arg(long)]
    pub candidates_dir: Option<PathBuf>,
    /// Evaluation settings; the preset's rounds drop to 3 unless set.
    #[command(flatten)]
    pub run: EvalFlags,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalFlags {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long, value_delimiter = ',', conflicts_with = "geometric")]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long)]
    pub geometric: Option<Geometric>,
    #[arg(long)]
    pub timeout: Option<f64>,
}

impl EvalFlags {
    fn run_flags(&self) -> RunFlags {
        RunFlags {
            k: self.k,
            rounds: self.rounds,
            sigmas: self.sigmas.clone(),
            geometric: self.geometric,
            timeout: self.timeout,
            ..RunFlags::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[arg(long, default_value_t = 7)]
    pub n: usize,
    /// Seeds for the A-only column.
    #[arg(long, default_value_t = 50)]
    pub k_a_only: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "IMPROVOLVE_WORKERS")]
    pub workers: Option<usize>,
    /// Solutions and a summary are written here when given.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError { code: EXIT_USAGE, error: e.into() }
}

fn failed(e: impl Into<anyhow::Error>) -> CliError {
    CliError { code: EXIT_FAILED, error: e.into() }
}

type CliResult = Result<i32, CliError>;

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(code) => code,
        Err(CliError { code, error }) => {
            let _ = out.flush();
            eprintln!("error: {error:#}");
            code
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Validate { file } => cmd_validate(&file, out),
        Command::Solve(args) => cmd_solve(&args, out),
        Command::Evolve(args) => cmd_evolve(&args, out),
        Command::Ablate(args) => cmd_ablate(&args, out),
        Command::Render { input, output } => cmd_render(&input, &output, out),
        Command::Bench { file } => cmd_bench(&file, out),
        Command::Serve { params } => cmd_serve(params.as_deref()),
    }
}

fn say(out: &mut dyn Write, text: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", text.as_ref()).map_err(failed)
}

fn read_json_arg<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    files::read_json(path).map_err(usage)
}

/// Validates raw file contents. Step functions are checked sample by
/// sample so bad values are reported rather than refused at parse time.
pub fn validate_text(text: &str) -> Result<(bool, String), String> {
    let raw: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if raw.get("problem").and_then(Value::as_str) == Some("aci") {
        let values: Vec<f64> = raw
            .get("values")
            .cloned()
            .ok_or("missing values")
            .and_then(|v| serde_json::from_value(v).map_err(|_| "values must be an array of numbers"))?;
        return Ok(match StepFunction::new(values) {
            Ok(f) => {
                let r = aci::aci_fitness(&f);
                (true, format!("ACI N={}: C = {:.10}\nvalid", f.len(), r.c_value))
            }
            Err(e) => (false, format!("ACI N={}: {e}\ninvalid", raw["values"].as_array().map_or(0, Vec::len))),
        });
    }
    let s: Solution = serde_json::from_value(raw).map_err(|e| e.to_string())?;
    Ok(match &s {
        Solution::Hex(c) => {
            let report = hex_validate(c).map_err(|e| e.to_string())?;
            let mut text = format!("HEX n={}: L = {:.10}", c.n(), report.side_length);
            for o in &report.overlaps {
                text += &format!("\noverlap: hexagons {} and {} (depth {:.3e})", o.i, o.j, o.depth);
            }
            text += if report.valid { "\nvalid" } else { "\ninvalid" };
            (report.valid, text)
        }
        Solution::Aci(_) => unreachable!("handled above"),
    })
}

fn cmd_validate(file: &Path, out: &mut dyn Write) -> CliResult {
    let text = std::fs::read_to_string(file).with_context(|| file.display().to_string()).map_err(usage)?;
    let (valid, report) = validate_text(&text).map_err(|e| usage(anyhow!("{}: {e}", file.display())))?;
    say(out, report)?;
    Ok(if valid { EXIT_OK } else { EXIT_FAILED })
}

/// Resolved solve settings: flags over config over preset.
pub fn solve_settings(args: &SolveArgs) -> anyhow::Result<(ProblemKind, BuiltinOps, BasinHopParams, u64)> {
    let kind = args.instance.kind()?;
    let preset = args.preset.unwrap_or(match args.instance.problem {
        ProblemArg::Hex => Preset::Table3Hex,
        ProblemArg::Aci => Preset::Table3Aci,
    });
    if preset.problem() != args.instance.problem {
        bail!("preset {:?} does not apply to {}", preset, kind.name());
    }
    let config = match &args.config {
        Some(path) => files::read_json::<RunFlags>(path)?,
        None => RunFlags::default(),
    };
    let flags = args.run.clone().or(config);
    let params = flags.apply(preset.params())?;
    Ok((kind, flags.ops(kind)?, params, flags.seed.unwrap_or(0)))
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> CliResult {
    let (kind, ops, params, seed) = solve_settings(args).map_err(usage)?;
    let started = Instant::now();
    let guarded = Guarded::new(ops, params.per_call_timeout);
    let eval = move |s: &Solution| kind.fitness(s);
    let result = run_validation(&guarded, &eval, &params, seed, InstantClock::shared());
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            if let (Some(path), Some(trace)) = (&args.trace, e.trace()) {
                files::write_trace(path, trace).map_err(failed)?;
            }
            return Err(failed(e));
        }
    };
    let best = match outcome.best {
        Solution::Aci(f) => Solution::Aci(aci::aci_finalize(&f)),
        hex => hex,
    };
    let fitness = kind.fitness(&best).map_err(failed)?;
    if let Some(path) = &args.out {
        files::write_solution(path, &best).map_err(failed)?;
    }
    if let Some(path) = &args.trace {
        files::write_trace(path, &outcome.trace).map_err(failed)?;
    }
    let invalid = outcome.trace.events.iter().filter(|e| e.invalid).count();
    say(
        out,
        format!(
            "{} ({} iterations, {invalid} invalid, {:.1} s)\nfitness {fitness:.10}",
            describe(&best),
            outcome.trace.events.len(),
            started.elapsed().as_secs_f64()
        ),
    )?;
    Ok(EXIT_OK)
}

fn shim_command(args: &EvolveArgs) -> Vec<String> {
    args.shim_command
        .as_deref()
        .map(|s| s.split_whitespace().map(String::from).collect())
        .filter(|v: &Vec<String>| !v.is_empty())
        .unwrap_or_else(default_shim_command)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "archive".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_evolve(args: &EvolveArgs, out: &mut dyn Write) -> CliResult {
    let kind = args.instance.kind().map_err(usage)?;
    let base = match kind {
        ProblemKind::Hex { .. } => BasinHopParams::table3_hex(),
        ProblemKind::Aci { .. } => BasinHopParams::table3_aci(),
    };
    let mut ep = EvolutionParams::with_eval(base);
    ep.eval_params = args.run.run_flags().apply(ep.eval_params).map_err(usage)?;
    ep.generations = args.generations;
    ep.n_elites = args.elites;
    ep.n_parents = args.parents;
    ep.n_offspring = args.offspring;
    if args.rank_selection {
        ep.selection = Selection::RankProportional;
    }
    ep.validate().map_err(usage)?;

    let report_path = args.report.clone().unwrap_or_else(|| sibling(&args.archive, ".report.jsonl"));
    let candidates_dir = args.candidates_dir.clone().unwrap_or_else(|| sibling(&args.archive, ".candidates"));
    let shim = shim_command(args);
    let mutator: Box<dyn Mutator> = match args.mutation {
        MutationMode::Builtin => Box::new(BuiltinMutator::new(kind)),
        MutationMode::External => {
            let path = args.endpoint.as_ref().ok_or_else(|| usage(anyhow!("--mutation external needs --endpoint")))?;
            let endpoint: EndpointConfig = read_json_arg(path)?;
            Box::new(ServiceMutator { problem: kind, endpoint, candidates_dir: candidates_dir.clone(), shim: shim.clone() })
        }
    };
    let evaluator = HarnessEvaluator::new(kind, resolve_workers(args.workers));

    let mut archive = if args.resume {
        files::load_archive(&args.archive).map_err(usage)?
    } else {
        let payload = match args.mutation {
            MutationMode::Builtin => {
                let params = match &args.params {
                    Some(p) => read_json_arg::<ParamSet>(p)?,
                    None => BuiltinOps::new(kind).to_params(),
                };
                Payload::BuiltinParametric { params }
            }
            MutationMode::External => {
                let path = args
                    .initial_source
                    .as_ref()
                    .ok_or_else(|| usage(anyhow!("--mutation external needs --initial-source")))?;
                let source = std::fs::read_to_string(path).with_context(|| path.display().to_string()).map_err(usage)?;
                let launch: LaunchSpec =
                    write_candidate(&candidates_dir.join("initial"), &source, &shim, kind).map_err(failed)?;
                Payload::ExternalProcess { launch }
            }
        };
        let mut archive = Archive::new(kind.default_fitness_range());
        seed_archive(&mut archive, payload, &evaluator, &ep, args.seed)
            .map_err(|e| failed(anyhow!("initial candidate failed: {e}")))?;
        if report_path.exists() {
            std::fs::remove_file(&report_path).map_err(failed)?;
        }
        files::save_archive(&args.archive, &archive).map_err(failed)?;
        archive
    };
    say(out, format!("generation {}: best {}", archive.generation, fmt_best(archive.best_fitness())))?;

    for _ in 0..args.generations {
        let report = step_generation(&mut archive, &ep, mutator.as_ref(), &evaluator, args.seed).map_err(failed)?;
        files::save_archive(&args.archive, &archive).map_err(failed)?;
        files::append_report(&report_path, &report).map_err(failed)?;
        say(
            out,
            format!(
                "generation {}: best {} occupancy {} births {} inserts {} discards {} mutation failures {}",
                report.generation,
                fmt_best(report.best_fitness),
                report.occupancy,
                report.births,
                report.inserts,
                report.discards,
                report.mutation_failures
            ),
        )?;
    }
    Ok(EXIT_OK)
}

fn fmt_best(f: Option<f64>) -> String {
    f.map_or_else(|| "none".into(), |f| format!("{f:.10}"))
}

/// The three columns of the stage ablation.
pub fn ablation_modes(k_a_only: usize) -> [(&'static str, BasinHopParams); 3] {
    let base = BasinHopParams::table3_hex();
    [
        ("A-only", BasinHopParams { k: k_a_only, stage_mode: StageMode::AOnly, ..base.clone() }),
        ("B-only", BasinHopParams { stage_mode: StageMode::BOnly, ..base.clone() }),
        ("A+B", base),
    ]
}

fn cmd_ablate(args: &AblateArgs, out: &mut dyn Write) -> CliResult {
    let kind = InstanceArgs { problem: ProblemArg::Hex, n: Some(args.n), resolution: None }.kind().map_err(usage)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(args.workers).min(3))
        .build()
        .map_err(failed)?;
    let modes = ablation_modes(args.k_a_only);
    let results: Vec<_> = pool.install(|| {
        use rayon::prelude::*;
        modes
            .par_iter()
            .map(|(name, params)| {
                let started = Instant::now();
                let ops = Guarded::new(BuiltinOps::new(kind), params.per_call_timeout);
                let eval = move |s: &Solution| kind.fitness(s);
                let r = run_validation(&ops, &eval, params, args.seed, InstantClock::shared());
                (*name, r, started.elapsed())
            })
            .collect()
    });
    say(out, format!("HEX {} ablation (seed {})", args.n, args.seed))?;
    say(out, format!("{:<8} {:>5} {:>4} {:>12} {:>6} {:>9}", "mode", "K", "R", "L", "valid", "time [s]"))?;
    let mut all_valid = true;
    let mut summary = Vec::new();
    for ((name, r, elapsed), (_, params)) in results.into_iter().zip(&modes) {
        let (l, valid) = match &r {
            Ok(o) => match &o.best {
                Solution::Hex(c) => {
                    let valid = hex_validate(c).map(|v| v.valid).unwrap_or(false);
                    (c.side_length(), valid)
                }
                Solution::Aci(_) => (f64::NAN, false),
            },
            Err(_) => (f64::NAN, false),
        };
        all_valid &= valid;
        let k = if params.stage_mode.runs_a() { params.k.to_string() } else { "-".into() };
        let rounds = if params.stage_mode.runs_b() { params.rounds.to_string() } else { "-".into() };
        say(out, format!("{name:<8} {k:>5} {rounds:>4} {l:>12.6} {valid:>6} {:>9.1}", elapsed.as_secs_f64()))?;
        if let Err(e) = &r {
            say(out, format!("  {name} failed: {e}"))?;
        }
        if let (Some(dir), Ok(o)) = (&args.out_dir, &r) {
            let file = dir.join(format!("{}.json", name.replace('+', "_plus_").to_lowercase()));
            files::write_solution(&file, &o.best).map_err(failed)?;
        }
        summary.push(serde_json::json!({
            "mode": name, "side_length": l, "valid": valid, "seconds": elapsed.as_secs_f64(),
        }));
    }
    if let Some(dir) = &args.out_dir {
        files::write_json(&dir.join("summary.json"), &summary).map_err(failed)?;
    }
    Ok(if all_valid { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_render(input: &Path, output: &Path, out: &mut dyn Write) -> CliResult {
    let svg = match files::read_solution(input) {
        Ok(s) => svg::render_solution(&s),
        Err(solution_err) => match files::read_trace(input) {
            Ok(trace) => svg::render_trace(&trace),
            Err(_) => return Err(usage(solution_err)),
        },
    };
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(failed)?;
    }
    std::fs::write(output, svg).with_context(|| output.display().to_string()).map_err(failed)?;
    say(out, format!("wrote {}", output.display()))?;
    Ok(EXIT_OK)
}

fn cmd_bench(file: &Path, out: &mut dyn Write) -> CliResult {
    let s = files::read_solution(file).map_err(usage)?;
    if let Solution::Hex(c) = &s {
        let report = hex_validate(c).map_err(failed)?;
        if !report.valid {
            say(out, format!("invalid packing: {} overlapping pairs", report.overlaps.len()))?;
            return Ok(EXIT_FAILED);
        }
    }
    write!(out, "{}", bench_solution(&s)).map_err(failed)?;
    Ok(EXIT_OK)
}

fn cmd_serve(params: Option<&Path>) -> CliResult {
    let params = params.map(read_json_arg::<ParamSet>).transpose()?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve(stdin.lock(), stdout.lock(), &ServeOptions { params, file_dir: None }).map_err(failed)?;
    Ok(EXIT_OK)
}
