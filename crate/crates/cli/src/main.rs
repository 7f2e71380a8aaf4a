use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use cyclotest_cli::campaign::{run_campaign, ReportFormat, Requirement, RunConfig, ScenarioKind};
use cyclotest_cli::report::{enumerate_states, reduce_model, StaticConfig};
use cyclotest_cli::setup::{load_model, time_scale, SutSpec};
use cyclotest_cli::{exit, init_logging, CliError};
use cyclotest_core::dsl::Severity;
use cyclotest_core::temporal::{HeldSemantics, TimeScale};

/// Model-based testing of cyclic control logic.
#[derive(Parser)]
#[command(name = "cyclotest", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a test campaign against a SUT.
    Run(RunArgs),
    /// Count reachable temporal flag states.
    EnumerateStates(StaticArgs),
    /// Print test cases, rewritten conditions, projections and the partition.
    Reduce(StaticArgs),
    /// Run a campaign and print the explored automaton in DOT.
    Dot(RunArgs),
    /// Check a model and print its diagnostics.
    Check {
        model: PathBuf,
    },
}

#[derive(Args, Clone)]
struct TimeArgs {
    /// Cycle period before scaling.
    #[arg(long, default_value_t = 1000)]
    period_ms: u64,
    /// Uniform scale applied to durations and the period, e.g. 1/20.
    #[arg(long)]
    time_scale: Option<TimeScale>,
    /// Explicit duration overrides, e.g. 60=3,900=5 (seconds unless suffixed).
    #[arg(long)]
    durations: Option<String>,
    /// Require the elapsed time to exceed durations strictly.
    #[arg(long)]
    strict_held: bool,
}

impl TimeArgs {
    fn scale(&self) -> Result<TimeScale, CliError> {
        time_scale(self.time_scale.clone(), self.durations.as_deref())
    }

    fn semantics(&self) -> HeldSemantics {
        if self.strict_held {
            HeldSemantics::Strict
        } else {
            HeldSemantics::Inclusive
        }
    }
}

#[derive(Args)]
struct StaticArgs {
    model: PathBuf,
    #[command(flatten)]
    time: TimeArgs,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
}

#[derive(Args)]
struct RunArgs {
    model: PathBuf,
    /// inproc:iron[:<mutant>], inproc:model, tcp:<host:port> or stdio:<command>.
    #[arg(long, default_value = "inproc:iron")]
    sut: SutSpec,
    /// coverage, piecemeal or enlarged.
    #[arg(long, default_value = "coverage")]
    scenario: ScenarioKind,
    #[command(flatten)]
    time: TimeArgs,
    /// Sleep out each cycle period instead of streaming.
    #[arg(long)]
    realtime: bool,
    /// Maximum test actions per scenario.
    #[arg(long, default_value_t = 100_000)]
    budget: u64,
    /// Shuffle action order with this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    /// Write the explored automaton in DOT.
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Write the test log as JSON lines.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Coverage requirement, e.g. branch=1.0; repeatable.
    #[arg(long = "require")]
    require: Vec<Requirement>,
    /// Zero execution times and omit timestamps.
    #[arg(long)]
    deterministic: bool,
    /// Print the kernel's per-cycle records to stderr (in-process SUTs).
    #[arg(long)]
    trace_cycles: bool,
    /// Run piecemeal scenarios on this many workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Reply timeout for remote SUTs.
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::new(&self.model, self.sut.clone());
        c.scenario = self.scenario;
        c.cycle_period_ms = self.time.period_ms;
        c.streaming = !self.realtime;
        c.time_scale = self.time.scale()?;
        c.budget = self.budget;
        c.seed = self.seed;
        c.report_format = self.format;
        c.dot_path = self.dot.clone();
        c.log_path = self.log.clone();
        c.required_coverage = self.require.clone();
        c.deterministic = self.deterministic;
        c.trace_cycles = self.trace_cycles;
        c.semantics = self.time.semantics();
        c.jobs = self.jobs;
        c.timeout = Duration::from_millis(self.timeout_ms);
        Ok(c)
    }
}

impl StaticArgs {
    fn config(&self) -> Result<StaticConfig, CliError> {
        Ok(StaticConfig {
            time_scale: self.time.scale()?,
            cycle_period_ms: self.time.period_ms,
            semantics: self.time.semantics(),
        })
    }
}

fn render(format: ReportFormat, text: String, json: serde_json::Value) -> String {
    match format {
        ReportFormat::Text => text,
        ReportFormat::Json => serde_json::to_string_pretty(&json).expect("json") + "\n",
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Cmd::Run(args) => {
            let config = args.config()?;
            let result = run_campaign(&config)?;
            if config.trace_cycles {
                trace_cycles(&result);
            }
            let report = render(config.report_format, result.to_text(&config), result.to_json(&config));
            out.write_all(report.as_bytes())?;
            Ok(result.exit_code)
        }
        Cmd::Dot(args) => {
            let config = args.config()?;
            let result = run_campaign(&config)?;
            out.write_all(result.to_dot().as_bytes())?;
            Ok(result.exit_code)
        }
        Cmd::EnumerateStates(args) => {
            let e = enumerate_states(&args.model, &args.config()?)?;
            out.write_all(render(args.format, e.to_text(), e.to_json()).as_bytes())?;
            Ok(exit::OK)
        }
        Cmd::Reduce(args) => {
            let r = reduce_model(&args.model, &args.config()?)?;
            out.write_all(render(args.format, r.to_text(), r.to_json()).as_bytes())?;
            Ok(exit::OK)
        }
        Cmd::Check { model } => {
            let (_, diags) = load_model(&model)?;
            let file = model.display().to_string();
            for d in &diags {
                writeln!(out, "{}", d.render(&file))?;
            }
            let errors = diags.iter().any(|d| d.severity == Severity::Error);
            Ok(if errors { exit::PARSE } else { exit::OK })
        }
    }
}

fn trace_cycles(result: &cyclotest_cli::campaign::CampaignResult) {
    let mut err = std::io::stderr().lock();
    for s in &result.scenarios {
        for r in &s.cycle_log {
            let mut v = serde_json::to_value(r).expect("cycle records serialize");
            v["scenario"] = serde_json::json!(s.name);
            let _ = writeln!(err, "{v}");
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
