//! The iron shut-off subsystem as a standalone SUT speaking the NDJSON
//! protocol on stdio (default) or TCP.

use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::process::ExitCode;

use clap::Parser;

use cyclotest_cli::init_logging;
use cyclotest_cli::setup::time_scale;
use cyclotest_core::iron::{make_mutant, IronTiming, MutantId};
use cyclotest_core::kernel::{CycleRecord, KernelConfig};
use cyclotest_core::mediator::serve;
use cyclotest_core::temporal::TimeScale;

#[derive(Parser, Clone)]
#[command(name = "iron-sut", version)]
struct Args {
    /// Run a seeded mutant (M1..M5) instead of the correct logic.
    #[arg(long)]
    mutant: Option<MutantId>,
    /// Accept test sessions on this TCP address instead of stdio.
    #[arg(long)]
    listen: Option<String>,
    /// With --listen, exit after the first session.
    #[arg(long)]
    once: bool,
    /// Uniform duration scale, e.g. 1/20.
    #[arg(long)]
    time_scale: Option<TimeScale>,
    /// Explicit duration overrides, e.g. 60=3,900=5.
    #[arg(long)]
    durations: Option<String>,
    /// Sleep out each cycle period instead of streaming.
    #[arg(long)]
    realtime: bool,
    /// Zero execution times in cycle records.
    #[arg(long)]
    deterministic: bool,
    /// Print the kernel's per-cycle records to stderr.
    #[arg(long)]
    trace_cycles: bool,
}

fn kernel_config(args: &Args) -> KernelConfig {
    KernelConfig {
        streaming: !args.realtime,
        measure_exec_time: !args.deterministic,
        ..KernelConfig::default()
    }
}

fn report(args: &Args, records: &[CycleRecord]) {
    if args.trace_cycles {
        let mut err = io::stderr().lock();
        for r in records {
            let _ = writeln!(err, "{}", serde_json::to_string(r).expect("cycle records serialize"));
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    let args = Args::parse();
    let timing = match time_scale(args.time_scale.clone(), args.durations.as_deref()) {
        Ok(s) => IronTiming::scaled(&s),
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let Some(addr) = args.listen.clone() else {
        let stdin = io::stdin().lock();
        let stdout = io::stdout().lock();
        return match serve(Box::new(make_mutant(args.mutant, timing)), kernel_config(&args), stdin, stdout) {
            Ok(records) => {
                report(&args, &records);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("iron-sut: {e}");
                ExitCode::from(3)
            }
        };
    };

    let listener = match TcpListener::bind(&addr) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("iron-sut: cannot listen on {addr}: {e}");
            return ExitCode::from(1);
        }
    };
    let local = listener.local_addr().expect("bound socket has an address");
    eprintln!("listening on {local}");
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept: {e}");
                continue;
            }
        };
        let once = args.once;
        let args = args.clone();
        let session = move || {
            let peer = stream.peer_addr().ok();
            let _ = stream.set_nodelay(true);
            let reader = match stream.try_clone() {
                Ok(r) => BufReader::new(r),
                Err(e) => return log::warn!("{peer:?}: {e}"),
            };
            match serve(Box::new(make_mutant(args.mutant, timing)), kernel_config(&args), reader, stream) {
                Ok(records) => report(&args, &records),
                Err(e) => log::warn!("session with {peer:?}: {e}"),
            }
        };
        if once {
            session();
            break;
        }
        std::thread::spawn(session);
    }
    ExitCode::SUCCESS
}
