//! JSON-lines candidate protocol.
//!
//! One request per line on the candidate's stdin, one response per line on
//! its stdout. Requests are `{"id", "method", "params"}`; responses echo the
//! id with either `result` or `error: {code, message}`. Solutions travel in
//! the solution file format, or as `{"file": path}` when they are too large
//! to inline.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use improvevolve_core::engine::{OperatorError, Operators};
use improvevolve_core::evolution::LaunchSpec;
use improvevolve_core::params::ParamSet;
use improvevolve_core::{BuiltinOps, Deadline, ProblemKind, Solution};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::runtime::{InstantClock, GRACE};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const OPERATOR_FAILED: i64 = -32000;
pub const OPERATOR_TIMEOUT: i64 = -32001;
pub const NOT_INITIALIZED: i64 = -32002;
pub const INVALID_SOLUTION: i64 = -32003;

/// Solutions with more samples than this are passed by file reference.
pub const INLINE_LIMIT: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Init,
    Generate,
    Improve,
    Perturb,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub method: Method,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: i64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    pub problem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    pub seed: u64,
}

impl InitParams {
    pub fn for_problem(kind: ProblemKind, seed: u64) -> Self {
        match kind {
            ProblemKind::Hex { n } => Self { problem: "hex".into(), n: Some(n), resolution: None, seed },
            ProblemKind::Aci { resolution } => {
                Self { problem: "aci".into(), n: None, resolution: Some(resolution), seed }
            }
        }
    }

    pub fn kind(&self) -> Result<ProblemKind, String> {
        match (self.problem.as_str(), self.n, self.resolution) {
            ("hex", Some(n), _) => Ok(ProblemKind::Hex { n }),
            ("aci", _, Some(resolution)) => Ok(ProblemKind::Aci { resolution }),
            ("hex", None, _) => Err("hex init needs n".into()),
            ("aci", _, None) => Err("aci init needs resolution".into()),
            (other, _, _) => Err(format!("unknown problem {other:?}")),
        }
    }
}

/// A solution inline or by file reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireSolution {
    File { file: PathBuf },
    Inline(Solution),
}

impl WireSolution {
    /// Inlines small solutions; larger ones are written under `dir`.
    pub fn encode(s: &Solution, dir: &Path) -> io::Result<Self> {
        let large = matches!(s, Solution::Aci(f) if f.len() > INLINE_LIMIT);
        if !large {
            return Ok(Self::Inline(s.clone()));
        }
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        let name = format!("solution-{}-{}.json", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed));
        let path = dir.join(name);
        std::fs::write(&path, serde_json::to_vec(s).map_err(io::Error::other)?)?;
        Ok(Self::File { file: path })
    }

    pub fn decode(self) -> Result<Solution, String> {
        match self {
            Self::Inline(s) => Ok(s),
            Self::File { file } => {
                let text = std::fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", file.display()))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct GenerateParams {
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct ImproveParams {
    solution: WireSolution,
    deadline_ms: u64,
}

#[derive(Debug, Deserialize)]
struct PerturbParams {
    solution: WireSolution,
    sigma: f64,
    seed: u64,
}

fn wire_error(code: i64, message: impl Into<String>) -> WireError {
    WireError { code, message: message.into() }
}

fn operator_wire_error(e: OperatorError) -> WireError {
    match e {
        OperatorError::Timeout => wire_error(OPERATOR_TIMEOUT, e.to_string()),
        OperatorError::Invalid(_) => wire_error(INVALID_SOLUTION, e.to_string()),
        _ => wire_error(OPERATOR_FAILED, e.to_string()),
    }
}

/// Options of the self-hosted server.
#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Built-in payload applied at init; defaults otherwise.
    pub params: Option<ParamSet>,
    /// Where oversized solutions are written; the temp dir by default.
    pub file_dir: Option<PathBuf>,
}

/// Serves the built-in operators until `shutdown` or end of input.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W, options: &ServeOptions) -> io::Result<()> {
    let file_dir = options.file_dir.clone().unwrap_or_else(std::env::temp_dir);
    let mut ops: Option<BuiltinOps> = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (response, stop) = match serde_json::from_str::<Request>(&line) {
            Err(e) => {
                // echo the id when at least that much parses
                let value = serde_json::from_str::<Value>(&line).ok();
                let id = value.as_ref().and_then(|v| v.get("id")?.as_u64()).unwrap_or(0);
                let code = match &value {
                    None => PARSE_ERROR,
                    Some(v) if unknown_method(v) => METHOD_NOT_FOUND,
                    Some(_) => INVALID_REQUEST,
                };
                (Response { id, result: None, error: Some(wire_error(code, e.to_string())) }, false)
            }
            Ok(req) => {
                let stop = req.method == Method::Shutdown;
                let outcome = dispatch(&req, &mut ops, options, &file_dir);
                let (result, error) = match outcome {
                    Ok(v) => (Some(v), None),
                    Err(e) => (None, Some(e)),
                };
                (Response { id: req.id, result, error }, stop)
            }
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
        if stop {
            break;
        }
    }
    Ok(())
}

/// A well-formed request whose method name is not one of ours.
fn unknown_method(v: &Value) -> bool {
    let named = v.get("id").is_some_and(Value::is_u64) && v.get("method").is_some_and(Value::is_string);
    named && serde_json::from_value::<Method>(v["method"].clone()).is_err()
}

fn dispatch(
    req: &Request,
    ops: &mut Option<BuiltinOps>,
    options: &ServeOptions,
    file_dir: &Path,
) -> Result<Value, WireError> {
    let params = |v: &Value| v.clone();
    let bad = |e: serde_json::Error| wire_error(INVALID_PARAMS, e.to_string());
    let encode = |s: Solution| {
        WireSolution::encode(&s, file_dir)
            .map_err(|e| wire_error(OPERATOR_FAILED, e.to_string()))
            .and_then(|w| serde_json::to_value(w).map_err(|e| wire_error(OPERATOR_FAILED, e.to_string())))
    };
    match req.method {
        Method::Init => {
            let p: InitParams = serde_json::from_value(params(&req.params)).map_err(bad)?;
            let kind = p.kind().map_err(|e| wire_error(INVALID_PARAMS, e))?;
            *ops = Some(match &options.params {
                Some(set) => BuiltinOps::from_params(kind, set),
                None => BuiltinOps::new(kind),
            });
            Ok(json!({ "ready": true }))
        }
        Method::Shutdown => Ok(json!({})),
        method => {
            let ops = ops.as_ref().ok_or_else(|| wire_error(NOT_INITIALIZED, "init must come first"))?;
            let never = Deadline::never();
            let solution = match method {
                Method::Generate => {
                    let p: GenerateParams = serde_json::from_value(params(&req.params)).map_err(bad)?;
                    ops.generate(p.seed, &never)
                }
                Method::Improve => {
                    let p: ImproveParams = serde_json::from_value(params(&req.params)).map_err(bad)?;
                    let s = p.solution.decode().map_err(|e| wire_error(INVALID_PARAMS, e))?;
                    let deadline = Deadline::after(InstantClock::shared(), Duration::from_millis(p.deadline_ms));
                    ops.improve(&s, &deadline)
                }
                Method::Perturb => {
                    let p: PerturbParams = serde_json::from_value(params(&req.params)).map_err(bad)?;
                    let s = p.solution.decode().map_err(|e| wire_error(INVALID_PARAMS, e))?;
                    ops.perturb(&s, p.sigma, p.seed, &never)
                }
                Method::Init | Method::Shutdown => unreachable!("handled above"),
            };
            encode(solution.map_err(operator_wire_error)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("cannot start candidate: {0}")]
    Spawn(String),
    #[error("candidate did not answer in time")]
    Timeout,
    #[error("candidate exited: {0}")]
    Died(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("response id {got} does not match request id {expected}")]
    WrongId { expected: u64, got: u64 },
    #[error("candidate error {code}: {message}")]
    Remote { code: i64, message: String },
    #[error("wrong solution shape: {0}")]
    Shape(String),
    #[error("session is closed")]
    Closed,
}

impl From<ProtocolError> for OperatorError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Timeout => OperatorError::Timeout,
            ProtocolError::Remote { code: OPERATOR_TIMEOUT, .. } => OperatorError::Timeout,
            ProtocolError::Spawn(_) => OperatorError::Fatal(e.to_string()),
            ProtocolError::Died(_) | ProtocolError::Closed => OperatorError::Failed(e.to_string()),
            ProtocolError::Malformed(_)
            | ProtocolError::WrongId { .. }
            | ProtocolError::Remote { .. }
            | ProtocolError::Shape(_) => OperatorError::Invalid(e.to_string()),
        }
    }
}

/// A line-oriented duplex channel to a candidate.
pub trait Transport: Send {
    fn send(&mut self, line: &str) -> Result<(), ProtocolError>;
    /// Next non-empty line; `None` waits forever.
    fn recv(&mut self, timeout: Option<Duration>) -> Result<String, ProtocolError>;
    /// Terminates the peer.
    fn close(&mut self);
}

/// Reads lines on a background thread. Bytes may arrive in any chunking;
/// only complete lines are delivered.
pub fn spawn_line_reader<R: Read + Send + 'static>(reader: R) -> Receiver<io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::Builder::new()
        .name("candidate-stdout".into())
        .spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut buf = Vec::new();
                match reader.read_until(b'\n', &mut buf) {
                    Ok(0) => break,
                    Ok(_) => {
                        let line = String::from_utf8(buf)
                            .map(|s| s.trim_end_matches(['\n', '\r']).to_string())
                            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e));
                        if tx.send(line).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        })
        .expect("spawn reader thread");
    rx
}

fn receive(rx: &Receiver<io::Result<String>>, timeout: Option<Duration>) -> Result<String, ProtocolError> {
    loop {
        let next = match timeout {
            Some(t) => rx.recv_timeout(t),
            None => rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        match next {
            Ok(Ok(line)) if line.trim().is_empty() => continue,
            Ok(Ok(line)) => return Ok(line),
            Ok(Err(e)) => return Err(ProtocolError::Malformed(e.to_string())),
            Err(RecvTimeoutError::Timeout) => return Err(ProtocolError::Timeout),
            Err(RecvTimeoutError::Disconnected) => return Err(ProtocolError::Died("end of output".into())),
        }
    }
}

/// A candidate child process.
pub struct ProcessTransport {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<io::Result<String>>,
}

impl ProcessTransport {
    pub fn spawn(launch: &LaunchSpec) -> Result<Self, ProtocolError> {
        let (program, args) =
            launch.command.split_first().ok_or_else(|| ProtocolError::Spawn("empty command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null());
        if let Some(dir) = &launch.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| ProtocolError::Spawn(format!("{program}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().ok_or_else(|| ProtocolError::Spawn("no stdout pipe".into()))?;
        Ok(Self { child, stdin, lines: spawn_line_reader(stdout) })
    }
}

impl Transport for ProcessTransport {
    fn send(&mut self, line: &str) -> Result<(), ProtocolError> {
        let stdin = self.stdin.as_mut().ok_or(ProtocolError::Closed)?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| ProtocolError::Died(e.to_string()))
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<String, ProtocolError> {
        receive(&self.lines, timeout)
    }

    fn close(&mut self) {
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        self.close();
    }
}

/// Client side of one candidate session: strict request/response.
pub struct Session<T: Transport> {
    transport: T,
    kind: ProblemKind,
    next_id: u64,
    live: bool,
    file_dir: PathBuf,
}

impl<T: Transport> Session<T> {
    /// Sends `init` and waits for an ok response.
    pub fn handshake(transport: T, kind: ProblemKind, seed: u64, timeout: Duration) -> Result<Self, ProtocolError> {
        let mut s = Self { transport, kind, next_id: 1, live: true, file_dir: std::env::temp_dir() };
        let params = serde_json::to_value(InitParams::for_problem(kind, seed)).expect("init params serialize");
        s.call(Method::Init, params, Some(timeout))?;
        Ok(s)
    }

    pub fn is_live(&self) -> bool {
        self.live
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    fn fail(&mut self, e: ProtocolError) -> ProtocolError {
        // any framing problem leaves the stream in an unknown state
        self.live = false;
        self.transport.close();
        e
    }

    pub fn call(&mut self, method: Method, params: Value, timeout: Option<Duration>) -> Result<Value, ProtocolError> {
        if !self.live {
            return Err(ProtocolError::Closed);
        }
        let id = self.next_id;
        self.next_id += 1;
        let line = serde_json::to_string(&Request { id, method, params }).expect("request serializes");
        if let Err(e) = self.transport.send(&line) {
            return Err(self.fail(e));
        }
        let reply = match self.transport.recv(timeout) {
            Ok(r) => r,
            Err(e) => return Err(self.fail(e)),
        };
        let response: Response = match serde_json::from_str(&reply) {
            Ok(r) => r,
            Err(e) => return Err(self.fail(ProtocolError::Malformed(e.to_string()))),
        };
        if response.id != id {
            return Err(self.fail(ProtocolError::WrongId { expected: id, got: response.id }));
        }
        match (response.result, response.error) {
            (_, Some(err)) => Err(ProtocolError::Remote { code: err.code, message: err.message }),
            (Some(v), None) => Ok(v),
            (None, None) => Err(self.fail(ProtocolError::Malformed("neither result nor error".into()))),
        }
    }

    fn solution_call(&mut self, method: Method, params: Value, timeout: Option<Duration>) -> Result<Solution, ProtocolError> {
        let value = self.call(method, params, timeout)?;
        let wire: WireSolution = serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        let s = wire.decode().map_err(ProtocolError::Malformed)?;
        self.kind.check_shape(&s).map_err(|e| ProtocolError::Shape(e.to_string()))?;
        Ok(s)
    }

    fn encode(&self, s: &Solution) -> Result<Value, ProtocolError> {
        let w = WireSolution::encode(s, &self.file_dir).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        Ok(serde_json::to_value(w).expect("solution serializes"))
    }

    pub fn generate(&mut self, seed: u64, timeout: Option<Duration>) -> Result<Solution, ProtocolError> {
        self.solution_call(Method::Generate, json!({ "seed": seed }), timeout)
    }

    pub fn improve(&mut self, s: &Solution, deadline_ms: u64, timeout: Option<Duration>) -> Result<Solution, ProtocolError> {
        let solution = self.encode(s)?;
        self.solution_call(Method::Improve, json!({ "solution": solution, "deadline_ms": deadline_ms }), timeout)
    }

    pub fn perturb(&mut self, s: &Solution, sigma: f64, seed: u64, timeout: Option<Duration>) -> Result<Solution, ProtocolError> {
        let solution = self.encode(s)?;
        self.solution_call(Method::Perturb, json!({ "solution": solution, "sigma": sigma, "seed": seed }), timeout)
    }

    /// Asks the candidate to exit, then closes the transport regardless.
    pub fn shutdown(&mut self, timeout: Duration) {
        if self.live {
            let _ = self.call(Method::Shutdown, json!({}), Some(timeout));
        }
        self.live = false;
        self.transport.close();
    }
}

/// Opens a session with a candidate process.
pub fn spawn_candidate(
    launch: &LaunchSpec,
    kind: ProblemKind,
    seed: u64,
    timeout: Duration,
) -> Result<Session<ProcessTransport>, ProtocolError> {
    let transport = ProcessTransport::spawn(launch)?;
    Session::handshake(transport, kind, seed, timeout)
}

/// An external process as an operator triple. The process is (re)started
/// lazily, so a call that killed it on timeout does not end the run.
pub struct ExternalOps {
    launch: LaunchSpec,
    kind: ProblemKind,
    seed: u64,
    handshake_timeout: Duration,
    fallback: Duration,
    session: Mutex<Option<Session<ProcessTransport>>>,
}

impl ExternalOps {
    pub fn new(launch: LaunchSpec, kind: ProblemKind, seed: u64, handshake_timeout: Duration, fallback: Duration) -> Self {
        Self { launch, kind, seed, handshake_timeout, fallback, session: Mutex::new(None) }
    }

    fn with_session<T>(
        &self,
        deadline: &Deadline,
        f: impl FnOnce(&mut Session<ProcessTransport>, u64, Duration) -> Result<T, ProtocolError>,
    ) -> Result<T, OperatorError> {
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        if !guard.as_ref().is_some_and(Session::is_live) {
            *guard = Some(spawn_candidate(&self.launch, self.kind, self.seed, self.handshake_timeout)?);
        }
        let session = guard.as_mut().expect("session present");
        let budget = deadline.remaining().unwrap_or(self.fallback);
        let deadline_ms = budget.as_millis().min(u64::MAX as u128) as u64;
        Ok(f(session, deadline_ms, budget + GRACE)?)
    }
}

impl Operators for ExternalOps {
    type Solution = Solution;

    fn generate(&self, seed: u64, deadline: &Deadline) -> Result<Solution, OperatorError> {
        self.with_session(deadline, |s, _, t| s.generate(seed, Some(t)))
    }

    fn improve(&self, sol: &Solution, deadline: &Deadline) -> Result<Solution, OperatorError> {
        self.with_session(deadline, |s, ms, t| s.improve(sol, ms, Some(t)))
    }

    fn perturb(&self, sol: &Solution, sigma: f64, seed: u64, deadline: &Deadline) -> Result<Solution, OperatorError> {
        self.with_session(deadline, |s, _, t| s.perturb(sol, sigma, seed, Some(t)))
    }
}

impl Drop for ExternalOps {
    fn drop(&mut self) {
        if let Some(s) = self.session.get_mut().ok().and_then(Option::as_mut) {
            s.shutdown(Duration::from_secs(2));
        }
    }
}
