//! Helpers shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use improvevolve::core::engine::Operators;
use improvevolve::core::evolution::LaunchSpec;
use improvevolve::core::params::{ParamSet, ParamValue};
use improvevolve::core::{BuiltinOps, Deadline, ProblemKind, Solution};
use improvevolve::protocol::{spawn_candidate, ProtocolError, Session, Transport};
use proptest::prelude::*;

pub const HEX7: ProblemKind = ProblemKind::Hex { n: 7 };
pub const ACI48: ProblemKind = ProblemKind::Aci { resolution: 48 };

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_improvevolve"))
}

/// Runs the binary and returns (exit code, stdout, stderr).
pub fn run(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out: Output = Command::new(bin()).args(args).current_dir(cwd).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

/// Built-in settings that keep one improve call well under a second.
pub fn fast_params(kind: ProblemKind) -> ParamSet {
    let mut p = BuiltinOps::new(kind).to_params();
    match kind {
        ProblemKind::Hex { .. } => {
            p = p.with("max_iters", ParamValue::Int(150)).with("penalty_rounds", ParamValue::Int(3));
        }
        ProblemKind::Aci { resolution } => {
            p = p
                .with("grid", ParamValue::Choice("extended".into()))
                .with("extended_cap", ParamValue::Int(resolution as i64))
                .with("beta_stages", ParamValue::Int(2))
                .with("iters_per_stage", ParamValue::Int(40));
        }
    }
    p
}

/// Launch spec of `improvevolve serve` with the given parameter file.
pub fn serve_launch(params_file: &Path) -> LaunchSpec {
    LaunchSpec {
        command: vec![bin().display().to_string(), "serve".into(), "--params".into(), params_file.display().to_string()],
        working_dir: None,
        source: None,
    }
}

pub fn sh(script: &str) -> LaunchSpec {
    LaunchSpec { command: vec!["sh".into(), "-c".into(), script.into()], working_dir: None, source: None }
}

/// Compares generate, improve and perturb through a served process against
/// the same operators in-process, for seeds 0..seeds. Returns the number of
/// compared results.
pub fn loopback(kind: ProblemKind, seeds: u64, dir: &Path) -> Result<usize, String> {
    let params = fast_params(kind);
    let file = dir.join(format!("{}.params.json", kind.name()));
    std::fs::write(&file, serde_json::to_string(&params).unwrap()).map_err(|e| e.to_string())?;
    let local = BuiltinOps::from_params(kind, &params);
    let never = Deadline::never();
    let wait = Some(Duration::from_secs(120));
    let mut session = spawn_candidate(&serve_launch(&file), kind, 0, Duration::from_secs(30)).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for seed in 0..seeds {
        let check = |what: &str, remote: Result<Solution, ProtocolError>, here: Solution| -> Result<Solution, String> {
            let remote = remote.map_err(|e| format!("{what} seed {seed}: {e}"))?;
            if remote != here {
                return Err(format!("{what} seed {seed}: served result differs"));
            }
            Ok(here)
        };
        let start = check("generate", session.generate(seed, wait), local.generate(seed, &never).unwrap())?;
        let improved = check("improve", session.improve(&start, 600_000, wait), local.improve(&start, &never).unwrap())?;
        let sigma = [0.01, 0.3, 5.0, 50.0][seed as usize % 4];
        let moved = local.perturb(&improved, sigma, seed, &never).unwrap();
        check("perturb", session.perturb(&improved, sigma, seed, wait), moved)?;
        compared += 3;
    }
    session.shutdown(Duration::from_secs(5));
    Ok(compared)
}

/// Replays canned lines; runs dry with `Died`.
pub struct Scripted(pub VecDeque<String>);

impl Transport for Scripted {
    fn send(&mut self, _: &str) -> Result<(), ProtocolError> {
        Ok(())
    }

    fn recv(&mut self, _: Option<Duration>) -> Result<String, ProtocolError> {
        self.0.pop_front().ok_or_else(|| ProtocolError::Died("script ended".into()))
    }

    fn close(&mut self) {}
}

fn valid_reply(id: u64, kind: ProblemKind) -> String {
    let s = BuiltinOps::new(kind).generate(id, &Deadline::never()).unwrap();
    serde_json::json!({ "id": id, "result": s }).to_string()
}

/// Response lines: valid replies, byte-level corruptions of them, wrong ids,
/// remote errors, arbitrary JSON and arbitrary text.
pub fn response_line(kind: ProblemKind) -> impl Strategy<Value = String> {
    let corrupted = (1u64..6, prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6)).prop_map(
        move |(id, edits)| {
            let mut bytes = valid_reply(id, kind).into_bytes();
            for (at, b) in edits {
                let i = at.index(bytes.len());
                bytes[i] = b;
            }
            String::from_utf8_lossy(&bytes).into_owned()
        },
    );
    let json = prop_oneof![
        Just(serde_json::Value::Null),
        any::<f64>().prop_map(serde_json::Value::from),
        ".{0,12}".prop_map(serde_json::Value::from),
        prop::collection::vec(any::<f64>(), 0..5).prop_map(serde_json::Value::from),
    ]
    .prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(serde_json::Value::Array),
            prop::collection::btree_map(
                prop_oneof![Just("id".to_string()), Just("result".into()), Just("error".into()), Just("problem".into()), Just("n".into()), "[a-z]{1,6}"],
                inner,
                0..4
            )
            .prop_map(|m| serde_json::Value::Object(m.into_iter().collect())),
        ]
    });
    prop_oneof![
        3 => (1u64..6).prop_map(move |id| valid_reply(id, kind)),
        3 => corrupted,
        1 => (1u64..6, any::<i64>(), ".{0,20}")
            .prop_map(|(id, code, m)| serde_json::json!({ "id": id, "error": { "code": code, "message": m } }).to_string()),
        1 => (1u64..6, json.clone()).prop_map(|(id, v)| serde_json::json!({ "id": id, "result": v }).to_string()),
        1 => json.prop_map(|v| v.to_string()),
        1 => ".{0,80}",
        1 => Just(r#"{"id":1,"result":{"ready":true}}"#.to_string()),
    ]
}

/// Drives a session over scripted lines. Any outcome is acceptable except a
/// panic, an accepted solution of the wrong shape, or a dead session that
/// keeps answering.
pub fn drive(kind: ProblemKind, lines: Vec<String>) -> Result<(), String> {
    let mut session = match Session::handshake(Scripted(lines.into()), kind, 0, Duration::from_millis(10)) {
        Ok(s) => s,
        Err(_) => return Ok(()),
    };
    let probe = BuiltinOps::new(kind).generate(0, &Deadline::never()).unwrap();
    for step in 0..6 {
        let r = match step % 3 {
            0 => session.generate(step, None),
            1 => session.improve(&probe, 1000, None),
            _ => session.perturb(&probe, 0.5, step, None),
        };
        match r {
            Ok(s) if s.kind() != kind => return Err(format!("accepted a {:?} solution", s.kind())),
            Err(_) if !session.is_live() => {
                if session.generate(0, None) != Err(ProtocolError::Closed) {
                    return Err("closed session answered".into());
                }
                return Ok(());
            }
            _ => {}
        }
    }
    Ok(())
}
