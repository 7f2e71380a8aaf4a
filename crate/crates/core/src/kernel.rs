//! Simulation kernel of the real-time system: one global control loop that
//! calls every registered subsystem in order on each cycle, with the system
//! time frozen at the start of the cycle.

use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SET_MEDIATOR: &str = "set-mediator";
pub const GET_MEDIATOR: &str = "get-mediator";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("subsystem `{0}` is already registered")]
    DuplicateId(String),
    #[error("cannot register `{0}`: the control loop has already started")]
    RegistrationClosed(String),
    #[error("subsystem `{id}` failed on cycle {cycle}: {message}")]
    SubsystemPanic { id: String, cycle: u64, message: String },
    #[error("cycle {cycle} overran its period: {exec_time_us} us > {period_ms} ms")]
    Overrun {
        cycle: u64,
        exec_time_us: u64,
        period_ms: u64,
    },
    #[error("testing mode requires `{SET_MEDIATOR}` first and `{GET_MEDIATOR}` last")]
    MediatorOrder,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub cycle_period_ms: u64,
    /// Start the next cycle as soon as the previous one finishes.
    pub streaming: bool,
    /// System time is written by the kernel as `previous + period` instead of
    /// being read from the wall clock.
    pub writable_sys_time: bool,
    /// Require the set-mediator first and the get-mediator last.
    pub testing_mode: bool,
    /// Measure wall-clock execution time. Off for bit-reproducible logs.
    pub measure_exec_time: bool,
    /// Turn an overrun into an error instead of a flag.
    pub fail_on_overrun: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            cycle_period_ms: 1000,
            streaming: true,
            writable_sys_time: true,
            testing_mode: false,
            measure_exec_time: true,
            fail_on_overrun: false,
        }
    }
}

impl KernelConfig {
    /// Streaming, simulated time, no wall-clock measurements.
    pub fn deterministic(cycle_period_ms: u64) -> Self {
        Self {
            cycle_period_ms,
            measure_exec_time: false,
            ..Self::default()
        }
    }
}

/// Read-only view of the current cycle handed to each subsystem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CycleContext {
    pub cycle_index: u64,
    pub sys_time_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle_index: u64,
    pub sys_time_ms: u64,
    pub exec_time_us: u64,
    pub overrun: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrunSummary {
    pub cycles: u64,
    pub overruns: u64,
    pub max_exec_time_us: u64,
}

impl OverrunSummary {
    pub fn held(&self) -> bool {
        self.overruns == 0
    }
}

pub type StepFn<C> = Box<dyn FnMut(&mut C, &CycleContext) -> Result<(), String> + Send>;

struct Subsystem<C> {
    id: String,
    step: StepFn<C>,
}

#[cfg(not(target_arch = "wasm32"))]
mod clock {
    pub use std::time::Instant;

    pub fn now() -> Option<Instant> {
        Some(Instant::now())
    }
}

#[cfg(target_arch = "wasm32")]
mod clock {
    #[derive(Clone, Copy)]
    pub struct Instant;

    impl Instant {
        pub fn elapsed(&self) -> std::time::Duration {
            std::time::Duration::ZERO
        }
    }

    pub fn now() -> Option<Instant> {
        None
    }
}

pub struct Kernel<C> {
    config: KernelConfig,
    subsystems: Vec<Subsystem<C>>,
    context: C,
    next_cycle: u64,
    last_sys_time_ms: Option<u64>,
    started_at: Option<clock::Instant>,
    last_cycle_start: Option<clock::Instant>,
    summary: OverrunSummary,
}

impl<C> Kernel<C> {
    pub fn new(config: KernelConfig, context: C) -> Self {
        assert!(config.cycle_period_ms > 0, "cycle period must be positive");
        Self {
            config,
            subsystems: Vec::new(),
            context,
            next_cycle: 0,
            last_sys_time_ms: None,
            started_at: None,
            last_cycle_start: None,
            summary: OverrunSummary::default(),
        }
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn context(&self) -> &C {
        &self.context
    }

    pub fn context_mut(&mut self) -> &mut C {
        &mut self.context
    }

    pub fn into_context(self) -> C {
        self.context
    }

    pub fn cycles_run(&self) -> u64 {
        self.next_cycle
    }

    pub fn subsystem_ids(&self) -> Vec<&str> {
        self.subsystems.iter().map(|s| s.id.as_str()).collect()
    }

    /// Adds a subsystem, called every cycle after those registered before it.
    pub fn register_subsystem(
        &mut self,
        id: impl Into<String>,
        step: impl FnMut(&mut C, &CycleContext) -> Result<(), String> + Send + 'static,
    ) -> Result<(), KernelError> {
        let id = id.into();
        if self.next_cycle > 0 {
            return Err(KernelError::RegistrationClosed(id));
        }
        if self.subsystems.iter().any(|s| s.id == id) {
            return Err(KernelError::DuplicateId(id));
        }
        self.subsystems.push(Subsystem {
            id,
            step: Box::new(step),
        });
        Ok(())
    }

    /// Toggling is allowed between cycles.
    pub fn set_streaming(&mut self, on: bool) {
        self.config.streaming = on;
    }

    pub fn overrun_summary(&self) -> OverrunSummary {
        self.summary
    }

    fn check_order(&self) -> Result<(), KernelError> {
        if !self.config.testing_mode {
            return Ok(());
        }
        let ids = self.subsystem_ids();
        if ids.first() == Some(&SET_MEDIATOR) && ids.last() == Some(&GET_MEDIATOR) && ids.len() >= 2 {
            Ok(())
        } else {
            Err(KernelError::MediatorOrder)
        }
    }

    fn wait_for_period(&self) {
        #[cfg(not(target_arch = "wasm32"))]
        if !self.config.streaming {
            if let Some(start) = self.last_cycle_start {
                let period = std::time::Duration::from_millis(self.config.cycle_period_ms);
                let spent = start.elapsed();
                if spent < period {
                    std::thread::sleep(period - spent);
                }
            }
        }
    }

    /// Runs one turn of the control loop.
    pub fn run_cycle(&mut self) -> Result<CycleRecord, KernelError> {
        if self.next_cycle == 0 {
            self.check_order()?;
            self.started_at = clock::now();
        }
        self.wait_for_period();
        let cycle_start = clock::now();
        let cycle_index = self.next_cycle;
        let sys_time_ms = if self.config.writable_sys_time {
            match self.last_sys_time_ms {
                None => 0,
                Some(prev) => prev + self.config.cycle_period_ms,
            }
        } else {
            let wall = match (self.started_at, cycle_start) {
                (Some(s), Some(_)) => s.elapsed().as_millis() as u64,
                _ => cycle_index * self.config.cycle_period_ms,
            };
            wall.max(self.last_sys_time_ms.unwrap_or(0))
        };
        let ctx = CycleContext {
            cycle_index,
            sys_time_ms,
        };
        self.next_cycle += 1;
        self.last_sys_time_ms = Some(sys_time_ms);
        self.last_cycle_start = cycle_start;

        for sub in &mut self.subsystems {
            let context = &mut self.context;
            let step = &mut sub.step;
            let outcome = catch_unwind(AssertUnwindSafe(|| step(context, &ctx)));
            let message = match outcome {
                Ok(Ok(())) => continue,
                Ok(Err(msg)) => msg,
                Err(payload) => payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "panic".to_string()),
            };
            return Err(KernelError::SubsystemPanic {
                id: sub.id.clone(),
                cycle: cycle_index,
                message,
            });
        }

        let exec_time_us = match (self.config.measure_exec_time, cycle_start) {
            (true, Some(start)) => start.elapsed().as_micros() as u64,
            _ => 0,
        };
        let overrun =
            !self.config.streaming && exec_time_us > self.config.cycle_period_ms * 1000;
        self.summary.cycles += 1;
        self.summary.overruns += u64::from(overrun);
        self.summary.max_exec_time_us = self.summary.max_exec_time_us.max(exec_time_us);
        if overrun && self.config.fail_on_overrun {
            return Err(KernelError::Overrun {
                cycle: cycle_index,
                exec_time_us,
                period_ms: self.config.cycle_period_ms,
            });
        }
        Ok(CycleRecord {
            cycle_index,
            sys_time_ms,
            exec_time_us,
            overrun,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn simulated_time_advances_by_period_regardless_of_wall_time() {
        let mut k = Kernel::new(KernelConfig::deterministic(100), ());
        k.register_subsystem("slow", |_, _| {
            std::thread::sleep(Duration::from_millis(5));
            Ok(())
        })
        .unwrap();
        let first = k.run_cycle().unwrap();
        let second = k.run_cycle().unwrap();
        assert_eq!((first.sys_time_ms, second.sys_time_ms), (0, 100));
        assert_eq!(second.cycle_index, 1);
        assert!(!second.overrun);
    }

    #[test]
    fn overrun_flagged_when_not_streaming() {
        let cfg = KernelConfig {
            cycle_period_ms: 100,
            streaming: false,
            ..KernelConfig::default()
        };
        let mut k = Kernel::new(cfg, ());
        k.register_subsystem("sleepy", |_, _| {
            std::thread::sleep(Duration::from_millis(150));
            Ok(())
        })
        .unwrap();
        assert!(k.run_cycle().unwrap().overrun);
        assert_eq!(k.overrun_summary().overruns, 1);
        assert!(!k.overrun_summary().held());
    }

    #[test]
    fn overrun_can_be_fatal() {
        let cfg = KernelConfig {
            cycle_period_ms: 1,
            streaming: false,
            fail_on_overrun: true,
            ..KernelConfig::default()
        };
        let mut k = Kernel::new(cfg, ());
        k.register_subsystem("sleepy", |_, _| {
            std::thread::sleep(Duration::from_millis(5));
            Ok(())
        })
        .unwrap();
        assert!(matches!(k.run_cycle(), Err(KernelError::Overrun { cycle: 0, .. })));
    }

    #[test]
    fn empty_kernel_cycles() {
        let mut k = Kernel::new(KernelConfig::default(), ());
        let r = k.run_cycle().unwrap();
        assert!(!r.overrun);
        assert!(r.exec_time_us < 1000);
    }

    #[test]
    fn non_streaming_waits_for_the_period() {
        let cfg = KernelConfig {
            cycle_period_ms: 30,
            streaming: false,
            ..KernelConfig::default()
        };
        let mut k = Kernel::new(cfg, ());
        let start = std::time::Instant::now();
        for _ in 0..3 {
            k.run_cycle().unwrap();
        }
        assert!(start.elapsed() >= Duration::from_millis(60));

        // Streaming: no waiting.
        k.set_streaming(true);
        let start = std::time::Instant::now();
        for _ in 0..50 {
            k.run_cycle().unwrap();
        }
        assert!(start.elapsed() < Duration::from_millis(30 * 50));
    }

    #[test]
    fn subsystems_run_in_order_and_see_constant_time() {
        let mut k = Kernel::new(KernelConfig::deterministic(10), Vec::<(String, u64, u64)>::new());
        for id in [SET_MEDIATOR, "csut", GET_MEDIATOR] {
            k.register_subsystem(id, move |log: &mut Vec<(String, u64, u64)>, ctx| {
                log.push((id.to_string(), ctx.cycle_index, ctx.sys_time_ms));
                Ok(())
            })
            .unwrap();
        }
        k.run_cycle().unwrap();
        k.run_cycle().unwrap();
        let log = k.context();
        let ids: Vec<&str> = log.iter().map(|(id, _, _)| id.as_str()).collect();
        assert_eq!(ids, [SET_MEDIATOR, "csut", GET_MEDIATOR, SET_MEDIATOR, "csut", GET_MEDIATOR]);
        assert!(log[..3].iter().all(|(_, c, t)| (*c, *t) == (0, 0)));
        assert!(log[3..].iter().all(|(_, c, t)| (*c, *t) == (1, 10)));
    }

    #[test]
    fn registration_rules() {
        let mut k = Kernel::new(KernelConfig::default(), ());
        k.register_subsystem("csut", |_, _| Ok(())).unwrap();
        assert_eq!(
            k.register_subsystem("csut", |_, _| Ok(())),
            Err(KernelError::DuplicateId("csut".into()))
        );
        k.run_cycle().unwrap();
        assert_eq!(
            k.register_subsystem("late", |_, _| Ok(())),
            Err(KernelError::RegistrationClosed("late".into()))
        );
    }

    #[test]
    fn testing_mode_checks_mediator_placement() {
        let cfg = KernelConfig {
            testing_mode: true,
            ..KernelConfig::deterministic(10)
        };
        let mut k = Kernel::new(cfg.clone(), ());
        k.register_subsystem("csut", |_, _| Ok(())).unwrap();
        k.register_subsystem(SET_MEDIATOR, |_, _| Ok(())).unwrap();
        k.register_subsystem(GET_MEDIATOR, |_, _| Ok(())).unwrap();
        assert_eq!(k.run_cycle(), Err(KernelError::MediatorOrder));
    }

    #[test]
    fn panics_and_errors_name_the_subsystem() {
        let mut k = Kernel::new(KernelConfig::deterministic(10), ());
        k.register_subsystem("ok", |_, _| Ok(())).unwrap();
        k.register_subsystem("bad", |_, ctx| {
            if ctx.cycle_index == 1 {
                panic!("boom");
            }
            Ok(())
        })
        .unwrap();
        k.run_cycle().unwrap();
        assert_eq!(
            k.run_cycle(),
            Err(KernelError::SubsystemPanic {
                id: "bad".into(),
                cycle: 1,
                message: "boom".into()
            })
        );
    }

    #[test]
    fn deterministic_runs_are_identical() {
        let run = || {
            let mut k = Kernel::new(KernelConfig::deterministic(250), 0u64);
            k.register_subsystem("acc", |n: &mut u64, ctx| {
                *n = n.wrapping_mul(31).wrapping_add(ctx.sys_time_ms);
                Ok(())
            })
            .unwrap();
            let records: Vec<CycleRecord> = (0..20).map(|_| k.run_cycle().unwrap()).collect();
            (records, *k.context())
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!(a.0.windows(2).all(|w| w[1].sys_time_ms == w[0].sys_time_ms + 250));
    }

    #[test]
    fn wall_clock_time_is_monotone() {
        let cfg = KernelConfig {
            writable_sys_time: false,
            ..KernelConfig::default()
        };
        let mut k = Kernel::new(cfg, ());
        k.register_subsystem("s", |_, _| {
            std::thread::sleep(Duration::from_millis(2));
            Ok(())
        })
        .unwrap();
        let times: Vec<u64> = (0..5).map(|_| k.run_cycle().unwrap().sys_time_ms).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        assert!(times[4] >= 8);
    }
}
