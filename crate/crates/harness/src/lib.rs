//! Runtime for operator-triple optimization: real clocks and watchdogs,
//! solution/trace/archive files, the JSON-lines candidate protocol, the
//! mutation-service client, the parallel candidate evaluator, SVG output,
//! the known-best tables and the command-line front end.

pub mod bench;
pub mod cli;
pub mod evaluate;
pub mod files;
pub mod mutation;
pub mod protocol;
pub mod runtime;
pub mod svg;

pub use improvevolve_core as core;
