//! Operator-triple global optimization.
//!
//! A candidate optimizer is a triple of operators (`generate`, `improve`,
//! `perturb`). The [`engine`] drives such a triple through multi-seed
//! initialization followed by scheduled monotonic basin hopping, and the
//! [`evolution`] module evolves triples with a fitness-binned MAP-Elites
//! archive. Two problems ship with reference triples: packing unit hexagons
//! into the smallest flat-topped hexagon ([`hex`]) and maximizing the
//! autoconvolution norm ratio of a step function ([`aci`]).
//!
//! The crate is `no_std` with `alloc`; clocks, processes and files live in
//! the companion harness crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod aci;
pub mod deadline;
pub mod engine;
pub mod evolution;
pub mod geometry;
pub mod hex;
pub mod optim;
pub mod params;
pub mod problem;

mod fft;
mod math;
mod rng;

pub use deadline::{Clock, Deadline, FrozenClock};
pub use engine::{
    run_validation, BasinHopParams, Evaluator, InvalidPolicy, OperatorError, Operators, RunError, RunOutcome,
    RunTrace, SigmaSchedule, Stage, StageMode, TraceEvent,
};
pub use geometry::{Hexagon, Point2};
pub use problem::{BuiltinEvaluator, BuiltinMutator, BuiltinOps, ProblemKind, Solution};
