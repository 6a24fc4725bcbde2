//! May-alias analysis over bounded-depth access paths, and an abstract
//! semantics that runs programs on an alias relation instead of a heap.

mod expr;
mod machine;
mod relation;

pub use expr::{AliasExpr, ExprParseError, Root};
pub use machine::{
    abstract_deadlock_check, abstract_enabled, abstract_rule_name, abstract_step, abstract_wait_for_graph,
    abstract_wait_set, initial_abstract, is_blocked, AbsArg, AbsCall, AbsFrame, AbsItem, AbsObject,
    AbstractConfiguration, AbstractMachine, AbstractState, HandlerName,
};
pub use relation::{
    alias_after_assign, alias_exec, alias_kill, alias_loop_fixpoint, may_alias, parse_alias_program, AliasRelation,
    AliasStmt, AliasSyntaxError, DEFAULT_DEPTH,
};
