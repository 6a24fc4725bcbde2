use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{DeadlockReport, ExplorationReport, Semantics, Trace, RULE_NAMES};
use crate::deadlock::DeadlockWitness;
use crate::ir::Program;
use crate::runtime::{Choice, EngineError, Machine, ProcessorId, Terminal};

/// Rule-name filter of a `parallelism{…}` step; `!` complements it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleFilter {
    pub rules: BTreeSet<String>,
    pub negated: bool,
}

impl RuleFilter {
    pub fn matches(&self, rule: &str) -> bool {
        self.rules.contains(rule) != self.negated
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrategyStep {
    Init,
    /// Fire the lowest enabled processor whose next rule passes the filter,
    /// until none does.
    Parallelism(RuleFilter),
    RunUntilQuiescent,
    DeadlockCheck,
    Pick(ProcessorId),
    Repeat(u32, Vec<StrategyStep>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    pub steps: Vec<StrategyStep>,
}

impl Strategy {
    /// The schedule that forces the split fork pickup: every lock fires as
    /// soon as it is reachable, everything else runs in between.
    pub fn guided() -> Strategy {
        "init ; parallelism{lock} ; repeat(32, parallelism{!lock} ; parallelism{lock}) ; deadlock-on"
            .parse()
            .expect("guided strategy parses")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error("strategy syntax error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("strategy step {index}: {reason}")]
    Inapplicable { index: usize, reason: String },
    #[error("strategy exceeded {0} steps")]
    StepLimit(usize),
    #[error("strategy step {index}: {source}")]
    Engine { index: usize, source: EngineError },
}

fn write_steps(f: &mut fmt::Formatter<'_>, steps: &[StrategyStep]) -> fmt::Result {
    for (i, s) in steps.iter().enumerate() {
        if i > 0 {
            f.write_str(" ; ")?;
        }
        match s {
            StrategyStep::Init => f.write_str("init")?,
            StrategyStep::Parallelism(flt) => {
                let rules: Vec<&str> = flt.rules.iter().map(String::as_str).collect();
                write!(f, "parallelism{{{}{}}}", if flt.negated { "!" } else { "" }, rules.join(","))?
            }
            StrategyStep::RunUntilQuiescent => f.write_str("run")?,
            StrategyStep::DeadlockCheck => f.write_str("deadlock-on")?,
            StrategyStep::Pick(p) => write!(f, "pick({})", p.0)?,
            StrategyStep::Repeat(n, sub) => {
                write!(f, "repeat({n}, ")?;
                write_steps(f, sub)?;
                f.write_str(")")?
            }
        }
    }
    Ok(())
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_steps(f, &self.steps)
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().map_or(0, char::len_utf8);
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, StrategyError> {
        Err(StrategyError::Parse { offset: self.pos, message: message.into() })
    }

    fn expect(&mut self, c: char) -> Result<(), StrategyError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn word(&mut self) -> Result<&'a str, StrategyError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest.find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-')).unwrap_or(rest.len());
        if len == 0 {
            return self.err("expected a strategy word");
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn number(&mut self) -> Result<u32, StrategyError> {
        let at = self.pos;
        let w = self.word()?;
        w.parse().map_err(|_| StrategyError::Parse { offset: at, message: format!("expected a number, found `{w}`") })
    }

    fn sequence(&mut self, top: bool) -> Result<Vec<StrategyStep>, StrategyError> {
        let mut steps = vec![self.step()?];
        while self.eat(';') {
            steps.push(self.step()?);
        }
        if top {
            self.eat('.');
        }
        Ok(steps)
    }

    fn step(&mut self) -> Result<StrategyStep, StrategyError> {
        let at = self.pos;
        Ok(match self.word()? {
            "init" => StrategyStep::Init,
            "run" | "run_until_quiescent" => StrategyStep::RunUntilQuiescent,
            "deadlock-on" | "deadlock_check" => StrategyStep::DeadlockCheck,
            "pick" => {
                self.expect('(')?;
                let p = self.number()?;
                self.expect(')')?;
                StrategyStep::Pick(ProcessorId(p))
            }
            "repeat" => {
                self.expect('(')?;
                let n = self.number()?;
                if n == 0 {
                    return self.err("repeat count must be at least 1");
                }
                self.expect(',')?;
                let sub = self.sequence(false)?;
                self.expect(')')?;
                StrategyStep::Repeat(n, sub)
            }
            "parallelism" => {
                self.expect('{')?;
                let negated = self.eat('!');
                let mut rules = BTreeSet::new();
                loop {
                    let at = self.pos;
                    let r = self.word()?;
                    if !RULE_NAMES.contains(&r) {
                        return Err(StrategyError::Parse { offset: at, message: format!("unknown rule `{r}`") });
                    }
                    rules.insert(r.to_string());
                    if !self.eat(',') {
                        break;
                    }
                }
                self.expect('}')?;
                StrategyStep::Parallelism(RuleFilter { rules, negated })
            }
            other => return Err(StrategyError::Parse { offset: at, message: format!("unknown step `{other}`") }),
        })
    }
}

fn contains_init(steps: &[StrategyStep]) -> bool {
    steps.iter().any(|s| match s {
        StrategyStep::Init => true,
        StrategyStep::Repeat(_, sub) => contains_init(sub),
        _ => false,
    })
}

impl FromStr for Strategy {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Strategy, StrategyError> {
        let mut lx = Lexer { src: s, pos: 0 };
        let steps = lx.sequence(true)?;
        if lx.peek().is_some() {
            return lx.err("trailing input");
        }
        if contains_init(&steps[1..]) || matches!(&steps[0], StrategyStep::Repeat(_, sub) if contains_init(sub)) {
            return Err(StrategyError::Parse { offset: 0, message: "`init` may only be the first step".into() });
        }
        Ok(Strategy { steps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Check for deadlock after every step and honor `deadlock-on` steps.
    pub deadlock_check: bool,
    pub max_steps: usize,
}

impl RunOptions {
    pub fn for_program(p: &Program) -> RunOptions {
        RunOptions { deadlock_check: p.settings.deadlock_check.is_on(), max_steps: 1_000_000 }
    }
}

/// Result of a guided run: the report, the schedule taken and where it
/// ended.
#[derive(Debug, Clone)]
pub struct StrategyRun<C> {
    pub report: ExplorationReport,
    pub trace: Trace,
    pub last: C,
}

struct Runner<'s, S: Semantics> {
    sem: &'s S,
    opts: RunOptions,
    config: S::Config,
    choices: Vec<Choice>,
    witness: Option<DeadlockWitness>,
}

impl<S: Semantics> Runner<'_, S> {
    fn fire(&mut self, index: usize, ch: Choice) -> Result<(), StrategyError> {
        if self.choices.len() >= self.opts.max_steps {
            return Err(StrategyError::StepLimit(self.opts.max_steps));
        }
        self.config = self.sem.step(&self.config, ch).map_err(|source| StrategyError::Engine { index, source })?;
        self.choices.push(ch);
        if self.opts.deadlock_check {
            self.check();
        }
        Ok(())
    }

    fn check(&mut self) {
        if let Some(w) = self.sem.check_deadlock(&mut self.config) {
            self.witness = Some(w);
        }
    }

    fn run(&mut self, index: usize, step: &StrategyStep) -> Result<(), StrategyError> {
        match step {
            StrategyStep::Init => {}
            StrategyStep::Parallelism(filter) => loop {
                let next = self
                    .sem
                    .enabled(&self.config)
                    .into_iter()
                    .find(|ch| self.sem.rule_name(&self.config, ch.processor).is_some_and(|r| filter.matches(r)));
                match next {
                    Some(ch) => self.fire(index, ch)?,
                    None => break,
                }
            },
            StrategyStep::RunUntilQuiescent => {
                while let Some(ch) = self.sem.enabled(&self.config).first().copied() {
                    self.fire(index, ch)?;
                }
            }
            StrategyStep::DeadlockCheck => {
                if self.opts.deadlock_check {
                    self.check();
                }
            }
            StrategyStep::Pick(p) => {
                let ch = Choice { processor: *p };
                if !self.sem.enabled(&self.config).contains(&ch) {
                    return Err(StrategyError::Inapplicable { index, reason: format!("processor {p} is not enabled") });
                }
                self.fire(index, ch)?;
            }
            StrategyStep::Repeat(n, sub) => {
                for _ in 0..*n {
                    for s in sub {
                        self.run(index, s)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs `s` over any semantics. The initial configuration is built before
/// the first step, so a leading `init` is optional.
pub fn run_strategy_with<S: Semantics>(
    sem: &S,
    s: &Strategy,
    opts: RunOptions,
) -> Result<StrategyRun<S::Config>, StrategyError> {
    let config = sem.initial().map_err(|source| StrategyError::Engine { index: 0, source })?;
    let mut r = Runner { sem, opts, config, choices: Vec::new(), witness: None };
    for (index, step) in s.steps.iter().enumerate() {
        r.run(index, step)?;
    }
    let terminal = sem.terminal(&r.config);
    let trace = Trace::new(sem, opts.deadlock_check, r.choices, terminal);
    let mut report = ExplorationReport { states_visited: trace.choices.len() + 1, ..ExplorationReport::default() };
    match (terminal, r.witness) {
        (Terminal::Deadlock, Some(w)) => report.deadlocks.push(DeadlockReport::new(sem, &r.config, trace.clone(), w)),
        (Terminal::Done, _) => report.completed_traces = 1,
        _ if sem.enabled(&r.config).is_empty() => report.stuck_states = 1,
        _ => {}
    }
    Ok(StrategyRun { report, trace, last: r.config })
}

/// Runs `s` on the concrete semantics with the program's own settings.
pub fn run_strategy(p: &Program, s: &Strategy) -> Result<ExplorationReport, StrategyError> {
    run_strategy_with(&Machine::new(p), s, RunOptions::for_program(p)).map(|r| r.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_guided_and_round_trips() {
        let s = Strategy::guided();
        assert_eq!(s.steps.len(), 4);
        assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        assert!(matches!(&s.steps[2], StrategyStep::Repeat(32, sub) if sub.len() == 2));
    }

    #[test]
    fn filters() {
        let s: Strategy = "parallelism{!lock,release} .".parse().unwrap();
        let StrategyStep::Parallelism(f) = &s.steps[0] else { panic!() };
        assert!(f.matches("eval"));
        assert!(!f.matches("release"));
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["", "run ; init", "parallelism{spin}", "repeat(0, run)", "pick(x)", "run run"] {
            assert!(bad.parse::<Strategy>().is_err(), "{bad}");
        }
    }
}
