//! Model loading, time scaling and SUT selection shared by the subcommands.

use std::fmt;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::str::FromStr;
use std::time::Duration;

use cyclotest_core::dsl::{check_model, parse_model, Diagnostic, ModelAst, Severity};
use cyclotest_core::interp::Valuation;
use cyclotest_core::iron::{make_mutant, IronTiming, MutantId};
use cyclotest_core::kernel::{CycleRecord, KernelConfig};
use cyclotest_core::mediator::{
    CycleObservation, InProcessLink, Link, LinkError, ModelSut, RemoteLink, SutHost,
};
use cyclotest_core::temporal::{parse_duration_overrides, HeldSemantics, TimeScale};

use crate::CliError;

/// Reads and parses a model, failing on parse errors and error diagnostics.
/// Warnings are returned for the caller to print.
pub fn load_model(path: &Path) -> Result<(ModelAst, Vec<Diagnostic>), CliError> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{file}: cannot read model: {e}")))?;
    let ast = parse_model(&text).map_err(|e| CliError::Parse(e.render(&file)))?;
    let diags = check_model(&ast);
    let errors: Vec<String> = diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.render(&file))
        .collect();
    if !errors.is_empty() {
        return Err(CliError::Parse(errors.join("\n")));
    }
    Ok((ast, diags))
}

/// Combines a uniform ratio with explicit duration overrides
/// (`"60=3,900=5"`, seconds unless suffixed).
pub fn time_scale(ratio: Option<TimeScale>, durations: Option<&str>) -> Result<TimeScale, CliError> {
    let mut scale = ratio.unwrap_or_default();
    if let Some(d) = durations {
        let overrides = parse_duration_overrides(d).map_err(CliError::Usage)?;
        scale.overrides.extend(overrides);
    }
    Ok(scale)
}

/// Where the system under test lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SutSpec {
    /// `inproc:iron[:<mutant>]` or `inproc:model`.
    InProc { name: String, mutant: Option<MutantId> },
    /// `tcp:<host:port>`
    Tcp(String),
    /// `stdio:<command line>`
    Stdio(String),
}

impl FromStr for SutSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("`{s}`: expected inproc:<name>, tcp:<addr> or stdio:<cmd>"))?;
        match kind {
            "inproc" => {
                let (name, mutant) = match rest.split_once(':') {
                    Some((n, m)) => (n, Some(m.parse::<MutantId>().map_err(|e| e.to_string())?)),
                    None => (rest, None),
                };
                match name {
                    "iron" => {}
                    "model" if mutant.is_none() => {}
                    "model" => return Err("the model SUT has no mutants".into()),
                    other => return Err(format!("unknown in-process SUT `{other}` (iron, model)")),
                }
                Ok(Self::InProc {
                    name: name.to_string(),
                    mutant,
                })
            }
            "tcp" if !rest.is_empty() => Ok(Self::Tcp(rest.to_string())),
            "stdio" if !rest.trim().is_empty() => Ok(Self::Stdio(rest.to_string())),
            _ => Err(format!("`{s}`: expected inproc:<name>, tcp:<addr> or stdio:<cmd>")),
        }
    }
}

impl fmt::Display for SutSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InProc { name, mutant: None } => write!(f, "inproc:{name}"),
            Self::InProc {
                name,
                mutant: Some(m),
            } => write!(f, "inproc:{name}:{m}"),
            Self::Tcp(a) => write!(f, "tcp:{a}"),
            Self::Stdio(c) => write!(f, "stdio:{c}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinkOptions {
    /// Scaled cycle period.
    pub period_ms: u64,
    pub scale: TimeScale,
    pub streaming: bool,
    pub deterministic: bool,
    pub semantics: HeldSemantics,
    pub timeout: Duration,
    pub keep_cycle_log: bool,
}

/// A link to any kind of SUT, keeping access to the kernel's cycle log when
/// the SUT runs in process.
pub enum SutLink {
    InProc(InProcessLink),
    Remote(RemoteLink),
}

impl SutLink {
    pub fn cycle_log(&self) -> &[CycleRecord] {
        match self {
            Self::InProc(l) => l.host().cycle_log(),
            Self::Remote(_) => &[],
        }
    }
}

impl Link for SutLink {
    fn exchange(&mut self, inputs: &Valuation) -> Result<CycleObservation, LinkError> {
        match self {
            Self::InProc(l) => l.exchange(inputs),
            Self::Remote(l) => l.exchange(inputs),
        }
    }

    fn next_cycle(&self) -> u64 {
        match self {
            Self::InProc(l) => l.next_cycle(),
            Self::Remote(l) => l.next_cycle(),
        }
    }

    fn shutdown(&mut self) -> Result<(), LinkError> {
        match self {
            Self::InProc(l) => l.shutdown(),
            Self::Remote(l) => l.shutdown(),
        }
    }
}

/// Opens a link to `spec`. `model` is the predicate-extracted, scaled model
/// the SUT must match.
pub fn open_link(spec: &SutSpec, model: &ModelAst, opts: &LinkOptions) -> Result<SutLink, CliError> {
    let signature = model.signature();
    let protocol = |e: LinkError| CliError::Protocol(format!("{spec}: {e}"));
    match spec {
        SutSpec::InProc { name, mutant } => {
            let csut: Box<dyn cyclotest_core::mediator::ControlSubsystem> = match name.as_str() {
                "iron" => Box::new(make_mutant(*mutant, IronTiming::scaled(&opts.scale))),
                _ => Box::new(ModelSut::new(model.clone(), opts.semantics)),
            };
            let theirs = csut.signature();
            if theirs != signature {
                return Err(CliError::Protocol(format!(
                    "{spec}: signature mismatch: model has {signature:?}, SUT has {theirs:?}"
                )));
            }
            let config = KernelConfig {
                cycle_period_ms: opts.period_ms,
                streaming: opts.streaming,
                measure_exec_time: !opts.deterministic,
                ..KernelConfig::default()
            };
            let mut host = SutHost::new(csut, config);
            host.keep_cycle_log(opts.keep_cycle_log);
            Ok(SutLink::InProc(InProcessLink::new(host)))
        }
        SutSpec::Tcp(addr) => RemoteLink::connect_tcp(addr.as_str(), &signature, opts.period_ms, opts.timeout)
            .map(SutLink::Remote)
            .map_err(protocol),
        SutSpec::Stdio(cmdline) => {
            let mut words = cmdline.split_whitespace();
            let program = words.next().expect("checked non-empty");
            let mut cmd = Command::new(program);
            cmd.args(words);
            RemoteLink::spawn_stdio(cmd, &signature, opts.period_ms, opts.timeout)
                .map(SutLink::Remote)
                .map_err(protocol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sut_specs() {
        assert_eq!(
            "inproc:iron:M3".parse::<SutSpec>(),
            Ok(SutSpec::InProc {
                name: "iron".into(),
                mutant: Some(MutantId::M3)
            })
        );
        assert_eq!("tcp:127.0.0.1:9000".parse::<SutSpec>(), Ok(SutSpec::Tcp("127.0.0.1:9000".into())));
        assert_eq!(
            "stdio:iron-sut --mutant M1".parse::<SutSpec>().unwrap().to_string(),
            "stdio:iron-sut --mutant M1"
        );
        assert!("inproc:toaster".parse::<SutSpec>().is_err());
        assert!("inproc:iron:M7".parse::<SutSpec>().is_err());
        assert!("serial:/dev/tty".parse::<SutSpec>().is_err());
    }

    #[test]
    fn scale_with_overrides() {
        let s = time_scale(Some("1/2".parse().unwrap()), Some("60=3")).unwrap();
        assert_eq!(s.duration(60_000), 3_000);
        assert_eq!(s.duration(900_000), 450_000);
        assert_eq!(s.period(1000), 500);
        assert!(matches!(time_scale(None, Some("60=")), Err(CliError::Usage(_))));
    }
}
