mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use improvevolve::core::engine::{run_validation, BasinHopParams, InvalidPolicy, OperatorError, Operators, SigmaSchedule, StageMode};
use improvevolve::core::{BuiltinOps, Deadline, FrozenClock, ProblemKind, Solution};
use improvevolve::protocol::{spawn_candidate, ExternalOps, ProtocolError};
use proptest::prelude::*;

#[test]
fn served_hex_operators_match_in_process() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(loopback(HEX7, 50, dir.path()).unwrap(), 150);
}

#[test]
fn served_aci_operators_match_in_process() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(loopback(ACI48, 50, dir.path()).unwrap(), 150);
}

#[test]
fn full_run_through_the_protocol_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let kind = ProblemKind::Hex { n: 5 };
    let file = dir.path().join("p.json");
    let params = fast_params(kind);
    std::fs::write(&file, serde_json::to_string(&params).unwrap()).unwrap();
    let run = BasinHopParams {
        k: 3,
        rounds: 2,
        schedule: SigmaSchedule::explicit(vec![2.0, 0.2, 0.02]).unwrap(),
        per_call_timeout: Duration::from_secs(60),
        invalid_policy: InvalidPolicy::Skip,
        stage_mode: StageMode::Both,
    };
    let eval = move |s: &Solution| kind.fitness(s);
    let remote = ExternalOps::new(serve_launch(&file), kind, 0, Duration::from_secs(30), Duration::from_secs(60));
    let a = run_validation(&remote, &eval, &run, 9, Arc::new(FrozenClock)).unwrap();
    let b = run_validation(&BuiltinOps::from_params(kind, &params), &eval, &run, 9, Arc::new(FrozenClock)).unwrap();
    assert_eq!(a.best, b.best);
    assert_eq!(a.trace.best_fitness_curve, b.trace.best_fitness_curve);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn fuzzed_hex_responses_never_crash(lines in prop::collection::vec(response_line(HEX7), 0..8)) {
        prop_assert_eq!(drive(HEX7, lines), Ok(()));
    }

    #[test]
    fn fuzzed_aci_responses_never_crash(lines in prop::collection::vec(response_line(ProblemKind::Aci { resolution: 16 }), 0..8)) {
        prop_assert_eq!(drive(ProblemKind::Aci { resolution: 16 }, lines), Ok(()));
    }
}

#[test]
fn garbage_handshake_is_malformed() {
    let err = spawn_candidate(&sh("echo garbage; sleep 5"), HEX7, 0, Duration::from_secs(5)).err().unwrap();
    assert!(matches!(err, ProtocolError::Malformed(_)), "{err:?}");
}

#[test]
fn silent_candidate_times_out() {
    let started = Instant::now();
    let err = spawn_candidate(&sh("sleep 30"), HEX7, 0, Duration::from_millis(300)).err().unwrap();
    assert_eq!(err, ProtocolError::Timeout);
    assert!(started.elapsed() < Duration::from_secs(10));
}

#[test]
fn candidate_dying_mid_call_is_reported() {
    let script = r#"read l; echo '{"id":1,"result":{"ready":true}}'; read l; exit 3"#;
    let mut s = spawn_candidate(&sh(script), HEX7, 0, Duration::from_secs(5)).unwrap();
    let err = s.generate(1, Some(Duration::from_secs(5))).unwrap_err();
    assert!(matches!(err, ProtocolError::Died(_)), "{err:?}");
    assert!(!s.is_live());
}

#[test]
fn external_ops_recover_after_a_timeout() {
    // the first process hangs on generate; the second one serves normally
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("started");
    let script = format!(
        r#"if [ -e {m} ]; then exec {bin} serve; fi; touch {m}; read l; echo '{{"id":1,"result":{{"ready":true}}}}'; sleep 30"#,
        m = marker.display(),
        bin = bin().display()
    );
    let ops = ExternalOps::new(sh(&script), HEX7, 0, Duration::from_secs(10), Duration::from_millis(300));
    let never = Deadline::never();
    let started = Instant::now();
    assert_eq!(ops.generate(1, &never), Err(OperatorError::Timeout));
    assert!(started.elapsed() < Duration::from_secs(10));
    let s = ops.generate(1, &never).unwrap();
    assert_eq!(s, BuiltinOps::new(HEX7).generate(1, &never).unwrap());
}

#[test]
fn remote_operator_failures_do_not_end_the_session() {
    // a hex solution sent to an aci server is rejected, the session stays usable
    let lines = [
        r#"{"id":1,"result":{"ready":true}}"#.to_string(),
        r#"{"id":2,"error":{"code":-32003,"message":"overlap"}}"#.to_string(),
        serde_json::json!({ "id": 3, "result": BuiltinOps::new(HEX7).generate(3, &Deadline::never()).unwrap() }).to_string(),
    ];
    let mut s = improvevolve::protocol::Session::handshake(Scripted(lines.into()), HEX7, 0, Duration::from_secs(1)).unwrap();
    let probe = BuiltinOps::new(HEX7).generate(0, &Deadline::never()).unwrap();
    let err = s.improve(&probe, 10, None).unwrap_err();
    assert!(matches!(OperatorError::from(err), OperatorError::Invalid(_)));
    assert_eq!(s.generate(3, None).unwrap().kind(), HEX7);
}
