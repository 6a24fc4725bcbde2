use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Semantics;
use crate::ir::Program;
use crate::runtime::{Choice, Configuration, EngineError, Machine, ProcessorId, Terminal, TraceLine};

/// A schedule from the initial configuration of a program. The initial
/// configuration itself is rebuilt from the program on replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub program_hash: String,
    pub semantics: String,
    pub deadlock_check: bool,
    pub choices: Vec<Choice>,
    pub terminal: Terminal,
}

impl Trace {
    pub fn new<S: Semantics>(sem: &S, deadlock_check: bool, choices: Vec<Choice>, terminal: Terminal) -> Trace {
        Trace {
            program_hash: sem.program().content_hash(),
            semantics: S::KIND.to_string(),
            deadlock_check,
            choices,
            terminal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("trace was recorded for program {expected}, not {found}")]
    HashMismatch { expected: String, found: String },
    #[error("trace was recorded with the {expected} semantics, not {found}")]
    SemanticsMismatch { expected: String, found: String },
    #[error("step {index}: processor {processor} is not enabled")]
    Divergence { index: usize, processor: ProcessorId },
    #[error("replay ended {found:?}, trace says {expected:?}")]
    TerminalMismatch { expected: Terminal, found: Terminal },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceFormatError {
    pub line: usize,
    pub message: String,
}

/// Applies the trace's choices in order, checking each one is enabled.
pub fn replay<S: Semantics>(sem: &S, t: &Trace) -> Result<S::Config, ReplayError> {
    replay_lines(sem, t, |_| {})
}

pub fn replay_trace(p: &Program, t: &Trace) -> Result<Configuration, ReplayError> {
    replay(&Machine::new(p), t)
}

fn replay_lines<S: Semantics>(sem: &S, t: &Trace, mut emit: impl FnMut(TraceLine)) -> Result<S::Config, ReplayError> {
    let found = sem.program().content_hash();
    if found != t.program_hash {
        return Err(ReplayError::HashMismatch { expected: t.program_hash.clone(), found });
    }
    if t.semantics != S::KIND {
        return Err(ReplayError::SemanticsMismatch { expected: t.semantics.clone(), found: S::KIND.to_string() });
    }
    let mut c = sem.initial()?;
    for (index, ch) in t.choices.iter().enumerate() {
        if !sem.enabled(&c).contains(ch) {
            return Err(ReplayError::Divergence { index, processor: ch.processor });
        }
        let rule_name = sem.rule_name(&c, ch.processor).unwrap_or("none");
        c = sem.step(&c, *ch)?;
        if t.deadlock_check {
            sem.check_deadlock(&mut c);
        }
        emit(TraceLine {
            step_index: index,
            processor: ch.processor,
            rule_name,
            lock_sets: sem.lock_sets(&c),
            terminal: sem.terminal(&c),
        });
    }
    let found = sem.terminal(&c);
    if found != t.terminal {
        return Err(ReplayError::TerminalMismatch { expected: t.terminal, found });
    }
    Ok(c)
}

#[derive(Serialize, Deserialize)]
struct Header {
    program_hash: String,
    semantics: String,
    deadlock_check: bool,
    terminal: Terminal,
    steps: usize,
}

#[derive(Deserialize)]
struct StepLine {
    step_index: usize,
    processor: ProcessorId,
}

/// JSON lines: a header object, then one object per step.
pub fn write_trace<S: Semantics>(sem: &S, t: &Trace) -> Result<String, ReplayError> {
    let header = Header {
        program_hash: t.program_hash.clone(),
        semantics: t.semantics.clone(),
        deadlock_check: t.deadlock_check,
        terminal: t.terminal,
        steps: t.choices.len(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    replay_lines(sem, t, |line| {
        out.push_str(&serde_json::to_string(&line).expect("trace line serializes"));
        out.push('\n');
    })?;
    Ok(out)
}

pub fn read_trace(text: &str) -> Result<Trace, TraceFormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let err = |line: usize, message: String| TraceFormatError { line: line + 1, message };
    let (n, first) = lines.next().ok_or_else(|| err(0, "empty trace".into()))?;
    let header: Header = serde_json::from_str(first).map_err(|e| err(n, e.to_string()))?;
    let mut choices = Vec::with_capacity(header.steps);
    for (n, l) in lines {
        let s: StepLine = serde_json::from_str(l).map_err(|e| err(n, e.to_string()))?;
        if s.step_index != choices.len() {
            return Err(err(n, format!("expected step_index {}, found {}", choices.len(), s.step_index)));
        }
        choices.push(Choice { processor: s.processor });
    }
    if choices.len() != header.steps {
        return Err(err(0, format!("header announces {} steps, found {}", header.steps, choices.len())));
    }
    Ok(Trace {
        program_hash: header.program_hash,
        semantics: header.semantics,
        deadlock_check: header.deadlock_check,
        choices,
        terminal: header.terminal,
    })
}
