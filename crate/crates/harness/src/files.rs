//! Solution files, JSON-lines traces and reports, archive checkpoints.
//!
//! Numbers are written in shortest round-trip form and parsed exactly, so a
//! write/read cycle reproduces every double bit for bit.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use improvevolve_core::engine::{RunTrace, Stage, TraceEvent};
use improvevolve_core::evolution::{Archive, GenerationReport};
use improvevolve_core::Solution;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FileError + '_ {
    move |source| FileError::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path) -> impl FnOnce(serde_json::Error) -> FileError + '_ {
    move |source| FileError::Parse { path: path.to_path_buf(), source }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(parse_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    let text = serde_json::to_string(value).map_err(parse_err(path))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_solution(path: &Path) -> Result<Solution, FileError> {
    read_json(path)
}

pub fn write_solution(path: &Path, s: &Solution) -> Result<(), FileError> {
    write_json(path, s)
}

/// Writes one value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>, append: bool) -> Result<(), FileError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    let file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, &item).map_err(parse_err(path))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FileError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(parse_err(path))?);
        }
    }
    Ok(out)
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<(), FileError> {
    write_jsonl(path, &trace.events, false)
}

/// Reads trace events and rebuilds the best-fitness curve from them.
pub fn read_trace(path: &Path) -> Result<RunTrace, FileError> {
    let events: Vec<TraceEvent> = read_jsonl(path)?;
    Ok(trace_from_events(events))
}

pub fn trace_from_events(events: Vec<TraceEvent>) -> RunTrace {
    let mut best: Option<f64> = None;
    let mut curve = Vec::with_capacity(events.len());
    for e in &events {
        if e.accepted {
            if let Some(f) = e.fitness_after {
                best = Some(match (e.stage, best) {
                    (Stage::A, Some(b)) => b.max(f),
                    _ => f,
                });
            }
        }
        if let Some(b) = best {
            curve.push(b);
        }
    }
    RunTrace { events, best_fitness_curve: curve }
}

pub fn save_archive(path: &Path, archive: &Archive) -> Result<(), FileError> {
    // write then rename so an interrupted checkpoint never leaves a torn file
    let tmp = path.with_extension("json.tmp");
    write_json(&tmp, archive)?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn load_archive(path: &Path) -> Result<Archive, FileError> {
    read_json(path)
}

/// Appends one line per offspring.
pub fn append_report(path: &Path, report: &GenerationReport) -> Result<(), FileError> {
    write_jsonl(path, &report.offspring, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use improvevolve_core::aci::StepFunction;
    use improvevolve_core::hex::honeycomb_lattice;
    use std::time::Duration;

    #[test]
    fn solutions_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let values: Vec<f64> = (1..200).map(|i| 1.0 / i as f64 + 1e-300 * i as f64).collect();
        for s in [Solution::Aci(StepFunction::new(values).unwrap()), Solution::Hex(honeycomb_lattice(7).unwrap())] {
            write_solution(&path, &s).unwrap();
            assert_eq!(read_solution(&path).unwrap(), s);
        }
    }

    #[test]
    fn traces_round_trip_and_rebuild_the_curve() {
        let ev = |stage, it, after: Option<f64>, accepted| TraceEvent {
            stage,
            round: 0,
            iteration: it,
            sigma: (stage == Stage::B).then_some(0.5),
            fitness_before: None,
            fitness_after: after,
            accepted,
            elapsed: Duration::from_millis(it as u64),
            invalid: after.is_none(),
        };
        let events = vec![
            ev(Stage::A, 1, None, false),
            ev(Stage::A, 2, Some(-4.0), true),
            ev(Stage::B, 1, Some(-4.5), false),
            ev(Stage::B, 2, Some(-3.9), true),
        ];
        let trace = trace_from_events(events);
        assert_eq!(trace.best_fitness_curve, vec![-4.0, -4.0, -3.9]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_trace(&path, &trace).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 4);
        assert_eq!(read_trace(&path).unwrap(), trace);
    }

    #[test]
    fn parse_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{").unwrap();
        let err = read_solution(&path).unwrap_err();
        assert!(matches!(err, FileError::Parse { .. }));
        assert!(err.to_string().contains("bad.json"));
    }
}
