//! A miniature SCOOP runtime: each object is handled by a processor, calls on
//! separate objects become asynchronous requests guarded by request-queue
//! locks, and a Coffman deadlock detector inspects the resulting
//! configurations. An alias-based abstract semantics runs the same programs
//! without a heap.

pub mod alias;
pub mod deadlock;
pub mod explorer;
pub mod ir;
pub mod runtime;

pub use ir::{parse_program, validate_program, Program};
