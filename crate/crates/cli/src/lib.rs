//! Command-line front end: `run`, `explore`, `abstract` and `replay`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use scooplock_core::alias::AbstractMachine;
use scooplock_core::deadlock::DeadlockWitness;
use scooplock_core::explorer::{
    explore, read_trace, replay, run_strategy_with, write_trace, Bounds, DeadlockReport, ExplorationReport, RunOptions,
    Semantics, Strategy, Trace,
};
use scooplock_core::ir::{parse_program, validate_program, Program};
use scooplock_core::runtime::{Machine, ProcessorId, Terminal};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DEADLOCK: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "scooplock",
    version,
    about = "Run, explore and analyse mini-SCOOP programs for deadlocks",
    arg_required_else_help = true,
    after_help = "Exit status: 0 no deadlock, 2 deadlock found, 1 error.\nSCOOPLOCK_SEED is reserved; exploration is deterministic."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute one schedule chosen by a strategy.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        strategy: StrategyArg,
    },
    /// Breadth-first search over every schedule within the bounds.
    Explore {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        bounds: BoundArgs,
    },
    /// Explore (or, with --strategy, run) the alias-based abstract semantics.
    Abstract {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        bounds: BoundArgs,
        #[command(flatten)]
        strategy: StrategyArg,
        /// Selector depth cutoff of alias expressions.
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
        alias_depth: u32,
    },
    /// Replay a trace file against a program.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Trace written by --trace-out.
        trace: PathBuf,
        /// Selector depth cutoff, for traces of the abstract semantics.
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
        alias_depth: u32,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Program file.
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Override the program's deadlock-check setting.
    #[arg(long, value_enum)]
    deadlock: Option<Switch>,
    /// Write the run's trace, or the first deadlock trace, as JSON lines.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundArgs {
    /// Maximum schedule length.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    depth: u64,
    /// Maximum number of distinct configurations.
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    states: u64,
}

#[derive(Args, Debug)]
struct StrategyArg {
    /// Strategy text, or a file containing it. Defaults to the program's
    /// `using` clause, then to `run`.
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Switch {
    On,
    Off,
}

#[derive(Serialize)]
struct DeadlockOut<'a> {
    witness: &'a DeadlockWitness,
    names: &'a BTreeMap<ProcessorId, String>,
    describe: Vec<String>,
    trace: &'a Trace,
}

#[derive(Serialize)]
struct Report<'a> {
    mode: &'static str,
    program: String,
    program_hash: String,
    semantics: &'static str,
    deadlock_check: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<BoundsOut>,
    states_visited: usize,
    completed_traces: usize,
    stuck_states: usize,
    bound_hit: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    terminal: Option<Terminal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    deadlocks: Vec<DeadlockOut<'a>>,
}

#[derive(Serialize)]
struct BoundsOut {
    depth: usize,
    states: usize,
}

#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Parses `argv` (including the program name), runs the command and writes
/// the report to `out` and diagnostics to `err`. Returns the exit status.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_ERROR
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_ERROR
        }
    }
}

fn load(path: &Path, err: &mut dyn Write) -> Result<Program, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let program = parse_program(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let diags = validate_program(&program);
    for d in &diags {
        let kind = if d.is_error() { "error" } else { "warning" };
        writeln!(err, "{}:{}:{}: {kind}[{}]: {}", path.display(), d.line, d.col, d.code, d.message)?;
    }
    if diags.iter().any(|d| d.is_error()) {
        return Err(Failure(format!("{} failed validation", path.display())));
    }
    Ok(program)
}

fn strategy(arg: &StrategyArg, program: &Program) -> Result<Strategy, Failure> {
    let text = match (&arg.strategy, &program.strategy) {
        (Some(s), _) if Path::new(s).is_file() => std::fs::read_to_string(s)?,
        (Some(s), _) => s.clone(),
        (None, Some(s)) => s.clone(),
        (None, None) => "run".into(),
    };
    Ok(text.trim().trim_end_matches('.').parse()?)
}

fn deadlock_flag(common: &Common, program: &Program) -> bool {
    match common.deadlock {
        Some(s) => s == Switch::On,
        None => program.settings.deadlock_check.is_on(),
    }
}

fn bounds(b: &BoundArgs, deadlock_check: bool) -> Bounds {
    let mut bounds = Bounds::new(b.depth as usize, b.states as usize);
    bounds.deadlock_check = deadlock_check;
    bounds
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Run { common, strategy: s } => {
            let program = load(&common.file, err)?;
            let strategy = strategy(&s, &program)?;
            let sem = Machine::new(&program);
            run_mode("run", &sem, &common, &program, &strategy, out)
        }
        Command::Explore { common, bounds: b } => {
            let program = load(&common.file, err)?;
            let sem = Machine::new(&program);
            explore_mode("explore", &sem, &common, &program, &b, out)
        }
        Command::Abstract { common, bounds: b, strategy: s, alias_depth } => {
            let program = load(&common.file, err)?;
            let sem = AbstractMachine::new(&program, alias_depth as usize);
            match s.strategy {
                Some(_) => {
                    let strategy = strategy(&s, &program)?;
                    run_mode("abstract", &sem, &common, &program, &strategy, out)
                }
                None => explore_mode("abstract", &sem, &common, &program, &b, out),
            }
        }
        Command::Replay { common, trace, alias_depth } => {
            let program = load(&common.file, err)?;
            let text = std::fs::read_to_string(&trace).map_err(|e| Failure(format!("{}: {e}", trace.display())))?;
            let t = read_trace(&text)?;
            if t.semantics == AbstractMachine::KIND {
                replay_mode(&AbstractMachine::new(&program, alias_depth as usize), &common, &program, &t, out)
            } else {
                replay_mode(&Machine::new(&program), &common, &program, &t, out)
            }
        }
    }
}

fn base_report<S: Semantics>(
    mode: &'static str,
    common: &Common,
    program: &Program,
    deadlock_check: bool,
) -> Report<'static> {
    Report {
        mode,
        program: common.file.display().to_string(),
        program_hash: program.content_hash(),
        semantics: S::KIND,
        deadlock_check,
        strategy: None,
        bounds: None,
        states_visited: 0,
        completed_traces: 0,
        stuck_states: 0,
        bound_hit: false,
        terminal: None,
        steps: None,
        deadlocks: Vec::new(),
    }
}

fn deadlocks(r: &ExplorationReport) -> Vec<DeadlockOut<'_>> {
    r.deadlocks
        .iter()
        .map(|d: &DeadlockReport| DeadlockOut {
            witness: &d.witness,
            names: &d.names,
            describe: d.describe(),
            trace: &d.trace,
        })
        .collect()
}

fn run_mode<S: Semantics>(
    mode: &'static str,
    sem: &S,
    common: &Common,
    program: &Program,
    strategy: &Strategy,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let check = deadlock_flag(common, program);
    let opts = RunOptions { deadlock_check: check, ..RunOptions::for_program(program) };
    let run = run_strategy_with(sem, strategy, opts)?;
    if let Some(path) = &common.trace_out {
        std::fs::write(path, write_trace(sem, &run.trace)?)?;
    }
    let report = Report {
        strategy: Some(strategy.to_string()),
        states_visited: run.report.states_visited,
        completed_traces: run.report.completed_traces,
        stuck_states: run.report.stuck_states,
        terminal: Some(run.trace.terminal),
        steps: Some(run.trace.choices.len()),
        deadlocks: deadlocks(&run.report),
        ..base_report::<S>(mode, common, program, check)
    };
    emit(&report, common.format, out)
}

fn explore_mode<S: Semantics>(
    mode: &'static str,
    sem: &S,
    common: &Common,
    program: &Program,
    b: &BoundArgs,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let check = deadlock_flag(common, program);
    let bounds = bounds(b, check);
    let r = explore(sem, bounds, |_| {})?;
    if let (Some(path), Some(d)) = (&common.trace_out, r.deadlocks.first()) {
        std::fs::write(path, write_trace(sem, &d.trace)?)?;
    }
    let report = Report {
        bounds: Some(BoundsOut { depth: bounds.depth, states: bounds.states }),
        states_visited: r.states_visited,
        completed_traces: r.completed_traces,
        stuck_states: r.stuck_states,
        bound_hit: r.bound_hit,
        deadlocks: deadlocks(&r),
        ..base_report::<S>(mode, common, program, check)
    };
    emit(&report, common.format, out)
}

fn replay_mode<S: Semantics>(
    sem: &S,
    common: &Common,
    program: &Program,
    t: &Trace,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let mut c = replay(sem, t)?;
    let mut report = Report {
        states_visited: t.choices.len() + 1,
        terminal: Some(t.terminal),
        steps: Some(t.choices.len()),
        ..base_report::<S>("replay", common, program, t.deadlock_check)
    };
    let names;
    let witness;
    let describe;
    if t.terminal == Terminal::Deadlock {
        witness = sem.check_deadlock(&mut c).ok_or_else(|| Failure("replayed deadlock has no witness".into()))?;
        names = witness
            .labels
            .iter()
            .flat_map(|((p, q), hs)| [*p, *q].into_iter().chain(hs.iter().copied()))
            .map(|p| (p, sem.processor_name(&c, p)))
            .collect::<BTreeMap<_, _>>();
        describe = witness.describe(|p| names[&p].clone());
        report.deadlocks.push(DeadlockOut { witness: &witness, names: &names, describe, trace: t });
    } else if t.terminal == Terminal::Done {
        report.completed_traces = 1;
    }
    emit(&report, common.format, out)
}

fn emit(r: &Report<'_>, format: Format, out: &mut dyn Write) -> Result<i32, Failure> {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(r)?)?,
        Format::Text => write_text(r, out)?,
    }
    Ok(if r.deadlocks.is_empty() { EXIT_OK } else { EXIT_DEADLOCK })
}

fn write_text(r: &Report<'_>, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "program: {} ({})", r.program, r.program_hash)?;
    let check = if r.deadlock_check { "on" } else { "off" };
    writeln!(out, "mode: {} ({} semantics, deadlock check {check})", r.mode, r.semantics)?;
    if let Some(s) = &r.strategy {
        writeln!(out, "strategy: {s}")?;
    }
    if let Some(b) = &r.bounds {
        writeln!(out, "bounds: depth {}, states {}", b.depth, b.states)?;
    }
    if let (Some(t), Some(n)) = (r.terminal, r.steps) {
        writeln!(out, "result: {} after {n} steps", terminal_word(t))?;
    }
    writeln!(out, "states visited: {}", r.states_visited)?;
    writeln!(out, "completed traces: {}", r.completed_traces)?;
    if r.stuck_states > 0 {
        writeln!(out, "stuck states: {}", r.stuck_states)?;
    }
    if r.bounds.is_some() {
        writeln!(out, "bound hit: {}", if r.bound_hit { "yes" } else { "no" })?;
    }
    writeln!(out, "deadlocks: {}", r.deadlocks.len())?;
    for (i, d) in r.deadlocks.iter().enumerate() {
        writeln!(out, "deadlock {} after {} steps:", i + 1, d.trace.choices.len())?;
        for line in &d.describe {
            writeln!(out, "  {line}")?;
        }
    }
    Ok(())
}

fn terminal_word(t: Terminal) -> &'static str {
    match t {
        Terminal::Running => "running",
        Terminal::Done => "done",
        Terminal::Deadlock => "deadlock",
    }
}
