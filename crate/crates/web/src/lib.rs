//! Browser bindings: exhaustive exploration with the wait-for graph of the
//! first deadlock, guided runs with per-step lock sets, and the alias loop
//! fixpoint. Every export takes program text and returns a JSON string.

use scooplock_core::alias::{alias_exec, parse_alias_program, AliasRelation};
use scooplock_core::deadlock::build_wait_for_graph;
use scooplock_core::explorer::{explore_bounded, replay_trace, run_strategy_with, write_trace, RunOptions, Strategy};
use scooplock_core::ir::{parse_program, validate_program, Program};
use scooplock_core::runtime::{Configuration, Machine};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const EXAMPLES: [(&str, &str); 4] = [
    ("dining_wrong", include_str!("../../../corpus/dining_wrong.scp")),
    ("dining_correct", include_str!("../../../corpus/dining_correct.scp")),
    ("dining_conditional", include_str!("../../../corpus/dining_conditional.scp")),
    ("straight_line", include_str!("../../../corpus/straight_line.scp")),
];

fn load(source: &str) -> Result<Program, String> {
    let p = parse_program(source).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validate_program(&p)
        .into_iter()
        .filter(|d| d.is_error())
        .map(|d| format!("{}:{}: {}", d.line, d.col, d.message))
        .collect();
    if errors.is_empty() {
        Ok(p)
    } else {
        Err(errors.join("\n"))
    }
}

fn graph(c: &Configuration) -> Value {
    let g = build_wait_for_graph(c);
    let nodes: Vec<Value> = g.nodes.iter().map(|p| json!({ "id": p.0, "name": c.processor_name(*p) })).collect();
    let edges: Vec<Value> = g
        .edges
        .iter()
        .map(|((p, q), hs)| {
            let handlers: Vec<String> = hs.iter().map(|h| c.processor_name(*h)).collect();
            json!({ "from": p.0, "to": q.0, "handlers": handlers })
        })
        .collect();
    json!({ "nodes": nodes, "edges": edges })
}

/// Corpus program text by name.
pub fn example_text(name: &str) -> Result<String, String> {
    EXAMPLES.iter().find(|(n, _)| *n == name).map(|(_, t)| t.to_string()).ok_or_else(|| format!("no example {name}"))
}

pub fn explore_json(source: &str, depth: u32, states: u32) -> Result<String, String> {
    let p = load(source)?;
    let r = explore_bounded(&p, depth as usize, states as usize).map_err(|e| e.to_string())?;
    let first = match r.deadlocks.first() {
        Some(d) => graph(&replay_trace(&p, &d.trace).map_err(|e| e.to_string())?),
        None => Value::Null,
    };
    let deadlocks: Vec<Value> =
        r.deadlocks.iter().map(|d| json!({ "steps": d.trace.choices.len(), "describe": d.describe() })).collect();
    Ok(json!({
        "states_visited": r.states_visited,
        "completed_traces": r.completed_traces,
        "bound_hit": r.bound_hit,
        "deadlocks": deadlocks,
        "graph": first,
    })
    .to_string())
}

/// Runs `strategy` (empty: the program's own, then the guided default).
pub fn run_guided_json(source: &str, strategy: &str) -> Result<String, String> {
    let p = load(source)?;
    let s: Strategy = match (strategy.trim(), &p.strategy) {
        ("", Some(own)) => own.parse(),
        ("", None) => Ok(Strategy::guided()),
        (text, _) => text.parse(),
    }
    .map_err(|e| e.to_string())?;
    let m = Machine::new(&p);
    let run = run_strategy_with(&m, &s, RunOptions::for_program(&p)).map_err(|e| e.to_string())?;
    let lines = write_trace(&m, &run.trace).map_err(|e| e.to_string())?;
    let steps: Vec<Value> =
        lines.lines().skip(1).map(|l| serde_json::from_str(l).expect("trace line is JSON")).collect();
    let describe: Vec<String> = run.report.deadlocks.iter().flat_map(|d| d.describe()).collect();
    Ok(json!({
        "strategy": s.to_string(),
        "terminal": run.trace.terminal,
        "steps": steps,
        "describe": describe,
        "graph": graph(&run.last),
    })
    .to_string())
}

pub fn alias_loop_json(program: &str, depth: u32) -> Result<String, String> {
    if depth == 0 {
        return Err("depth must be at least 1".into());
    }
    let stmts = parse_alias_program(program).map_err(|e| e.to_string())?;
    let r = alias_exec(&AliasRelation::new(depth as usize), &stmts);
    Ok(serde_json::to_string(&r).expect("relation serializes"))
}

#[wasm_bindgen]
pub fn example(name: &str) -> Result<String, JsError> {
    example_text(name).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn explore(source: &str, depth: u32, states: u32) -> Result<String, JsError> {
    explore_json(source, depth, states).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn run_guided(source: &str, strategy: &str) -> Result<String, JsError> {
    run_guided_json(source, strategy).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn alias_loop(program: &str, depth: u32) -> Result<String, JsError> {
    alias_loop_json(program, depth).map_err(|e| JsError::new(&e))
}
