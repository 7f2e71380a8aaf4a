//! Binding between the specification and the system under test.
//!
//! The SUT side is an RTES kernel with three subsystems per cycle: the
//! set-mediator writes the stimulus into the CSUT inputs, the CSUT runs, and
//! the get-mediator reads outputs, readable state and the system time. The
//! test side reaches that kernel either in process or over newline-delimited
//! JSON on a TCP socket or a child's stdio.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::dsl::{ModelAst, Signature, Value, Visibility};
use crate::interp::{eval_model, EvalResult, InterpError, Valuation};
use crate::kernel::{CycleContext, CycleRecord, Kernel, KernelConfig, KernelError, GET_MEDIATOR, SET_MEDIATOR};
use crate::temporal::{HeldSemantics, PredicateTracker, TemporalError, TimeFlags};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// One message of the wire protocol. Each is a single JSON object on its
/// own line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Hello {
        model: String,
        inputs: Vec<String>,
        outputs: Vec<String>,
        state: Vec<String>,
        cycle_period_ms: u64,
    },
    SetInputs {
        cycle: u64,
        #[serde(deserialize_with = "values")]
        values: Valuation,
    },
    Observation {
        cycle: u64,
        sys_time_ms: u64,
        #[serde(deserialize_with = "values")]
        outputs: Valuation,
        #[serde(deserialize_with = "values")]
        state: Valuation,
    },
    Shutdown,
    Error {
        message: String,
    },
}

/// Accepts `true`/`false` as well as integers, for harnesses written in
/// languages with a native boolean type.
fn values<'de, D: Deserializer<'de>>(d: D) -> Result<Valuation, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(Value),
        Bool(bool),
    }
    let raw = std::collections::BTreeMap::<String, Raw>::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                Raw::Int(i) => i,
                Raw::Bool(b) => Value::from(b),
            };
            (k, v)
        })
        .collect())
}

impl WireMessage {
    pub fn hello(sig: &Signature, cycle_period_ms: u64) -> Self {
        WireMessage::Hello {
            model: sig.model.clone(),
            inputs: sig.inputs.clone(),
            outputs: sig.outputs.clone(),
            state: sig.state.clone(),
            cycle_period_ms,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("wire messages always serialize");
        s.push('\n');
        s
    }

    pub fn from_line(line: &str) -> Result<Self, LinkError> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n']))
            .map_err(|e| LinkError::Protocol(format!("malformed message: {e}")))
    }
}

/// What the get-mediator reads after the CSUT has run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleObservation {
    pub cycle: u64,
    pub sys_time_ms: u64,
    pub outputs: Valuation,
    pub visible_state: Valuation,
}

impl CycleObservation {
    fn into_wire(self) -> WireMessage {
        WireMessage::Observation {
            cycle: self.cycle,
            sys_time_ms: self.sys_time_ms,
            outputs: self.outputs,
            state: self.visible_state,
        }
    }
}

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("handshake rejected: {0}")]
    Handshake(String),
    #[error("no observation within {0:?}")]
    Timeout(Duration),
    #[error("SUT disconnected")]
    Disconnect,
    #[error("SUT reported: {0}")]
    Remote(String),
    #[error("SUT kernel: {0}")]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Test-side end of a mediator connection.
pub trait Link {
    /// Sends one stimulus and returns the observation of the cycle it drove.
    fn exchange(&mut self, inputs: &Valuation) -> Result<CycleObservation, LinkError>;

    /// Index of the cycle the next stimulus will drive.
    fn next_cycle(&self) -> u64;

    fn shutdown(&mut self) -> Result<(), LinkError> {
        Ok(())
    }
}

/// A control subsystem as the kernel sees it: input ports written by the
/// set-mediator, a step per cycle, output ports and readable state read by
/// the get-mediator.
pub trait ControlSubsystem: Send {
    fn signature(&self) -> Signature;
    fn step(&mut self, inputs: &Valuation, ctx: &CycleContext) -> Result<(), String>;
    fn outputs(&self) -> Valuation;
    fn visible_state(&self) -> Valuation {
        Valuation::new()
    }
}

/// A CSUT that executes a predicate-extracted model directly. Useful to run
/// scenarios against models without a hand-written implementation; it
/// agrees with the specification by construction.
#[derive(Clone, Debug)]
pub struct ModelSut {
    model: ModelAst,
    predicates: PredicateTracker,
    state: Valuation,
    outputs: Valuation,
}

impl ModelSut {
    pub fn new(model: ModelAst, semantics: HeldSemantics) -> Self {
        let predicates = PredicateTracker::new(&model.predicates, semantics);
        let state = crate::interp::initial_state(&model);
        let outputs = model.outputs.iter().map(|d| (d.name.clone(), 0)).collect();
        Self {
            model,
            predicates,
            state,
            outputs,
        }
    }
}

impl ControlSubsystem for ModelSut {
    fn signature(&self) -> Signature {
        self.model.signature()
    }

    fn step(&mut self, inputs: &Valuation, ctx: &CycleContext) -> Result<(), String> {
        let state = &self.state;
        self.predicates
            .step(|v| inputs.get(v).or_else(|| state.get(v)).copied(), ctx.sys_time_ms)
            .map_err(|e| e.to_string())?;
        let r = eval_model(&self.model, inputs, &self.state, &self.predicates.flags())
            .map_err(|e| e.to_string())?;
        self.outputs = r.outputs;
        self.state = r.state_post;
        Ok(())
    }

    fn outputs(&self) -> Valuation {
        self.outputs.clone()
    }

    fn visible_state(&self) -> Valuation {
        self.model
            .readable_state()
            .map(|d| (d.name.clone(), self.state[&d.name]))
            .collect()
    }
}

/// The simulated RTES: mailboxes shared by the mediator subsystems and the
/// CSUT between kernel cycles.
pub struct Rtes {
    csut: Box<dyn ControlSubsystem>,
    mailbox_in: Option<Valuation>,
    inputs: Valuation,
    mailbox_out: Option<CycleObservation>,
}

/// SUT side of the mediator: a testing-mode kernel around one CSUT.
pub struct SutHost {
    kernel: Kernel<Rtes>,
    signature: Signature,
    cycle_log: Vec<CycleRecord>,
    keep_cycle_log: bool,
}

impl SutHost {
    pub fn new(csut: Box<dyn ControlSubsystem>, config: KernelConfig) -> Self {
        let signature = csut.signature();
        let config = KernelConfig {
            testing_mode: true,
            ..config
        };
        let rtes = Rtes {
            csut,
            mailbox_in: None,
            inputs: Valuation::new(),
            mailbox_out: None,
        };
        let mut kernel = Kernel::new(config, rtes);
        kernel
            .register_subsystem(SET_MEDIATOR, |r: &mut Rtes, _| {
                r.inputs = r
                    .mailbox_in
                    .take()
                    .ok_or_else(|| "no stimulus for this cycle".to_string())?;
                Ok(())
            })
            .expect("fresh kernel");
        kernel
            .register_subsystem("csut", |r: &mut Rtes, ctx| r.csut.step(&r.inputs, ctx))
            .expect("fresh kernel");
        kernel
            .register_subsystem(GET_MEDIATOR, |r: &mut Rtes, ctx| {
                r.mailbox_out = Some(CycleObservation {
                    cycle: ctx.cycle_index,
                    sys_time_ms: ctx.sys_time_ms,
                    outputs: r.csut.outputs(),
                    visible_state: r.csut.visible_state(),
                });
                Ok(())
            })
            .expect("fresh kernel");
        Self {
            kernel,
            signature,
            cycle_log: Vec::new(),
            keep_cycle_log: false,
        }
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn config(&self) -> &KernelConfig {
        self.kernel.config()
    }

    pub fn next_cycle(&self) -> u64 {
        self.kernel.cycles_run()
    }

    pub fn keep_cycle_log(&mut self, on: bool) {
        self.keep_cycle_log = on;
    }

    pub fn cycle_log(&self) -> &[CycleRecord] {
        &self.cycle_log
    }

    /// Runs exactly one kernel cycle with `inputs` on the input ports.
    pub fn cycle(&mut self, inputs: &Valuation) -> Result<CycleObservation, LinkError> {
        for name in &self.signature.inputs {
            if !inputs.contains_key(name) {
                return Err(LinkError::Protocol(format!("missing input `{name}`")));
            }
        }
        if let Some(extra) = inputs.keys().find(|k| !self.signature.inputs.contains(k)) {
            return Err(LinkError::Protocol(format!("unknown input `{extra}`")));
        }
        let rtes = self.kernel.context_mut();
        rtes.mailbox_in = Some(inputs.clone());
        rtes.mailbox_out = None;
        let record = self.kernel.run_cycle()?;
        if self.keep_cycle_log {
            self.cycle_log.push(record);
        }
        self.kernel
            .context_mut()
            .mailbox_out
            .take()
            .ok_or_else(|| LinkError::Protocol("get-mediator produced no observation".into()))
    }
}

/// Link that drives a kernel in the same process.
pub struct InProcessLink {
    host: SutHost,
}

impl InProcessLink {
    pub fn new(host: SutHost) -> Self {
        Self { host }
    }

    pub fn host(&self) -> &SutHost {
        &self.host
    }
}

impl Link for InProcessLink {
    fn exchange(&mut self, inputs: &Valuation) -> Result<CycleObservation, LinkError> {
        self.host.cycle(inputs)
    }

    fn next_cycle(&self) -> u64 {
        self.host.next_cycle()
    }
}

/// Link to a SUT in another process, speaking the NDJSON protocol.
pub struct RemoteLink {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    timeout: Duration,
    next_cycle: u64,
    child: Option<Child>,
    closed: bool,
}

impl RemoteLink {
    /// Performs the handshake on an already-open byte stream.
    pub fn handshake(
        reader: impl io::Read + Send + 'static,
        writer: impl Write + Send + 'static,
        signature: &Signature,
        cycle_period_ms: u64,
        timeout: Duration,
    ) -> Result<Self, LinkError> {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let mut link = Self {
            writer: Box::new(writer),
            lines: rx,
            timeout,
            next_cycle: 0,
            child: None,
            closed: false,
        };
        link.send(&WireMessage::hello(signature, cycle_period_ms))?;
        match link.recv()? {
            WireMessage::Hello {
                model,
                inputs,
                outputs,
                state,
                ..
            } => {
                let theirs = Signature {
                    model,
                    inputs,
                    outputs,
                    state,
                };
                if &theirs != signature {
                    return Err(LinkError::Handshake(format!(
                        "signature mismatch: expected {signature:?}, SUT has {theirs:?}"
                    )));
                }
                Ok(link)
            }
            WireMessage::Error { message } => Err(LinkError::Handshake(message)),
            other => Err(LinkError::Protocol(format!("expected hello, got {other:?}"))),
        }
    }

    pub fn connect_tcp(
        addr: impl ToSocketAddrs,
        signature: &Signature,
        cycle_period_ms: u64,
        timeout: Duration,
    ) -> Result<Self, LinkError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Self::handshake(reader, stream, signature, cycle_period_ms, timeout)
    }

    /// Spawns `command` and speaks the protocol over its stdin/stdout.
    pub fn spawn_stdio(
        mut command: Command,
        signature: &Signature,
        cycle_period_ms: u64,
        timeout: Duration,
    ) -> Result<Self, LinkError> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        match Self::handshake(stdout, stdin, signature, cycle_period_ms, timeout) {
            Ok(mut link) => {
                link.child = Some(child);
                Ok(link)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    fn send(&mut self, msg: &WireMessage) -> Result<(), LinkError> {
        let line = msg.to_line();
        log::trace!("-> {}", line.trim_end());
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| match e.kind() {
                io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => LinkError::Disconnect,
                _ => LinkError::Io(e),
            })
    }

    fn recv(&mut self) -> Result<WireMessage, LinkError> {
        loop {
            match self.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => {
                    log::trace!("<- {}", line.trim_end());
                    return WireMessage::from_line(&line);
                }
                Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => return Err(LinkError::Disconnect),
                Err(RecvTimeoutError::Timeout) => return Err(LinkError::Timeout(self.timeout)),
            }
        }
    }
}

impl Link for RemoteLink {
    fn exchange(&mut self, inputs: &Valuation) -> Result<CycleObservation, LinkError> {
        let cycle = self.next_cycle;
        self.send(&WireMessage::SetInputs {
            cycle,
            values: inputs.clone(),
        })?;
        match self.recv()? {
            WireMessage::Observation {
                cycle: got,
                sys_time_ms,
                outputs,
                state,
            } => {
                if got != cycle {
                    return Err(LinkError::Protocol(format!(
                        "observation for cycle {got} after set_inputs for cycle {cycle}"
                    )));
                }
                self.next_cycle += 1;
                Ok(CycleObservation {
                    cycle,
                    sys_time_ms,
                    outputs,
                    visible_state: state,
                })
            }
            WireMessage::Error { message } => Err(LinkError::Remote(message)),
            other => Err(LinkError::Protocol(format!("expected observation, got {other:?}"))),
        }
    }

    fn next_cycle(&self) -> u64 {
        self.next_cycle
    }

    fn shutdown(&mut self) -> Result<(), LinkError> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let sent = self.send(&WireMessage::Shutdown);
        if let Some(mut child) = self.child.take() {
            drop(std::mem::replace(&mut self.writer, Box::new(io::sink())));
            child.wait()?;
        }
        sent
    }
}

impl Drop for RemoteLink {
    fn drop(&mut self) {
        if let Err(e) = self.shutdown() {
            log::debug!("shutdown on drop: {e}");
        }
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Serves one test session on `reader`/`writer`. The kernel adopts the cycle
/// period announced in the client's hello. Returns after shutdown or EOF.
pub fn serve(
    csut: Box<dyn ControlSubsystem>,
    base: KernelConfig,
    reader: impl BufRead,
    mut writer: impl Write,
) -> Result<Vec<CycleRecord>, LinkError> {
    let send = |w: &mut dyn Write, msg: &WireMessage| -> Result<(), LinkError> {
        w.write_all(msg.to_line().as_bytes())?;
        w.flush()?;
        Ok(())
    };
    let mut lines = reader.lines();
    let mut next = || -> Result<Option<WireMessage>, LinkError> {
        for line in lines.by_ref() {
            let line = line?;
            if !line.trim().is_empty() {
                return WireMessage::from_line(&line).map(Some);
            }
        }
        Ok(None)
    };

    let sig = csut.signature();
    let mut host = match next() {
        Ok(Some(WireMessage::Hello {
            model,
            inputs,
            outputs,
            state,
            cycle_period_ms,
        })) => {
            let theirs = Signature {
                model,
                inputs,
                outputs,
                state,
            };
            if theirs != sig || cycle_period_ms == 0 {
                let message = if cycle_period_ms == 0 {
                    "cycle_period_ms must be positive".to_string()
                } else {
                    format!("signature mismatch: SUT has {sig:?}")
                };
                send(&mut writer, &WireMessage::Error { message: message.clone() })?;
                return Err(LinkError::Handshake(message));
            }
            send(&mut writer, &WireMessage::hello(&sig, cycle_period_ms))?;
            SutHost::new(
                csut,
                KernelConfig {
                    cycle_period_ms,
                    ..base
                },
            )
        }
        Ok(Some(other)) => {
            let message = format!("expected hello, got {other:?}");
            send(&mut writer, &WireMessage::Error { message: message.clone() })?;
            return Err(LinkError::Protocol(message));
        }
        Ok(None) => return Err(LinkError::Disconnect),
        Err(e) => {
            send(&mut writer, &WireMessage::Error { message: e.to_string() })?;
            return Err(e);
        }
    };
    host.keep_cycle_log(true);

    loop {
        let msg = match next() {
            Ok(Some(m)) => m,
            Ok(None) => break,
            Err(e) => {
                send(&mut writer, &WireMessage::Error { message: e.to_string() })?;
                return Err(e);
            }
        };
        match msg {
            WireMessage::SetInputs { cycle, values } => {
                let expected = host.next_cycle();
                if cycle != expected {
                    let message = format!("set_inputs for cycle {cycle}, expected {expected}");
                    send(&mut writer, &WireMessage::Error { message: message.clone() })?;
                    return Err(LinkError::Protocol(message));
                }
                match host.cycle(&values) {
                    Ok(obs) => send(&mut writer, &obs.into_wire())?,
                    Err(e) => {
                        send(&mut writer, &WireMessage::Error { message: e.to_string() })?;
                        return Err(e);
                    }
                }
            }
            WireMessage::Shutdown => break,
            other => {
                let message = format!("unexpected message {other:?}");
                send(&mut writer, &WireMessage::Error { message: message.clone() })?;
                return Err(LinkError::Protocol(message));
            }
        }
    }
    Ok(host.cycle_log().to_vec())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyncError {
    #[error("observation reports undeclared state variable `{0}`")]
    UnknownStateVar(String),
    #[error("observation lacks readable state variable `{0}`")]
    MissingStateVar(String),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Model(#[from] InterpError),
}

/// Specification-side state: the model's state variables plus the
/// predicate trackers evaluating its temporal conditions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecificationState {
    pub state_vars: Valuation,
    pub predicates: PredicateTracker,
    /// Time flags of the last cycle (all false before the first).
    pub time_flags: TimeFlags,
    pub last_observation: Option<CycleObservation>,
}

impl SpecificationState {
    pub fn initial(model: &ModelAst, predicates: PredicateTracker) -> Self {
        let time_flags = TimeFlags::all_false(model.predicates.iter().map(|p| p.id.as_str()));
        Self {
            state_vars: crate::interp::initial_state(model),
            predicates,
            time_flags,
            last_observation: None,
        }
    }
}

/// Brings the specification state up to date with one observed cycle.
///
/// Predicates are stepped with this cycle's inputs and pre-cycle state at the
/// system time the SUT saw. The model is then evaluated on the pre-state and
/// the fresh time flags; readable state variables are copied from the
/// observation and hidden ones taken from the model's post-state, assuming
/// the SUT works correctly. Returns the new state and the reference result.
pub fn sync_state(
    pre: &SpecificationState,
    obs: &CycleObservation,
    inputs: &Valuation,
    ast: &ModelAst,
) -> Result<(SpecificationState, EvalResult), SyncError> {
    for name in obs.visible_state.keys() {
        if !ast.state_vars.iter().any(|s| &s.name == name) {
            return Err(SyncError::UnknownStateVar(name.clone()));
        }
    }
    let mut next = pre.clone();
    next.predicates.step(
        |var| inputs.get(var).or_else(|| pre.state_vars.get(var)).copied(),
        obs.sys_time_ms,
    )?;
    next.time_flags = next.predicates.flags();
    let reference = eval_model(ast, inputs, &pre.state_vars, &next.time_flags)?;
    for decl in &ast.state_vars {
        let v = match decl.visibility {
            Visibility::Readable => *obs
                .visible_state
                .get(&decl.name)
                .ok_or_else(|| SyncError::MissingStateVar(decl.name.clone()))?,
            Visibility::Hidden => reference.state_post[&decl.name],
        };
        next.state_vars.insert(decl.name.clone(), v);
    }
    next.last_observation = Some(obs.clone());
    Ok((next, reference))
}
