//! Class-based intermediate representation of analyzed programs.
//!
//! The textual form is an S-expression-flavoured listing of classes followed by
//! a `settings(...)` clause naming the root class and creation procedure. See
//! `docs/grammar.md` for the full grammar.

mod lexer;
mod parser;
mod printer;
mod validate;

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

pub use parser::{parse_program, ParseError};
pub use printer::print_program;
pub use validate::{validate_program, Diagnostic, Severity};

/// Interned identifier text.
pub type Name = Arc<str>;

/// Class name that every export clause may mention without declaring it.
pub const ANY_CLASS: &str = "ANY";
/// Built-in class of boolean values.
pub const BOOLEAN_CLASS: &str = "BOOLEAN";

/// Source position. Positions never take part in structural equality, so two
/// programs that differ only in layout compare equal.
#[derive(Debug, Clone, Copy, Default)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Loc {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Loc {}

impl Hash for Loc {
    fn hash<H: Hasher>(&self, _: &mut H) {}
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// An identifier. The leading apostrophe of the source form is remembered for
/// printing but plays no role in name resolution.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ident {
    pub name: Name,
    pub quoted: bool,
    pub loc: Loc,
}

impl Ident {
    pub fn new(name: &str) -> Self {
        Ident { name: name.into(), quoted: true, loc: Loc::default() }
    }

    pub fn as_str(&self) -> &str {
        &self.name
    }
}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeadlockCheck {
    On,
    Off,
}

impl DeadlockCheck {
    pub fn is_on(self) -> bool {
        self == DeadlockCheck::On
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Settings {
    pub root_class: Ident,
    pub root_procedure: Ident,
    /// Third positional setting, carried verbatim.
    pub flag: bool,
    pub deadlock_check: DeadlockCheck,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    /// Library named by the `import` clause (`default` in every shipped file).
    pub import: Ident,
    pub classes: Vec<ClassDecl>,
    pub settings: Settings,
    /// Raw strategy text following `using`, without the terminating period.
    pub strategy: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attachment {
    /// `!`: never Void.
    Attached,
    /// `?`: may be Void.
    Detachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ProcessorTag {
    /// `T`: any processor, i.e. separate.
    Any,
    /// `.`: the processor of `Current`.
    Current,
    /// A named processor tag. Treated as separate.
    Explicit(Ident),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypeAnnot {
    pub attachment: Attachment,
    pub processor: ProcessorTag,
    pub class_name: Ident,
}

impl TypeAnnot {
    pub fn is_separate(&self) -> bool {
        !matches!(self.processor, ProcessorTag::Current)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decl {
    pub name: Ident,
    pub ty: TypeAnnot,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Attribute {
    pub export: Vec<Ident>,
    pub name: Ident,
    pub ty: TypeAnnot,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Procedure {
    pub export: Vec<Ident>,
    pub name: Ident,
    pub formals: Vec<Decl>,
    pub precondition: Expression,
    pub locals: Vec<Decl>,
    pub body: Vec<Instruction>,
    pub postcondition: Expression,
    /// Parsed and validated, never executed.
    pub rescue: Vec<Instruction>,
}

impl Procedure {
    pub fn formal(&self, name: &str) -> Option<&Decl> {
        self.formals.iter().find(|d| d.name.as_str() == name)
    }

    pub fn local(&self, name: &str) -> Option<&Decl> {
        self.locals.iter().find(|d| d.name.as_str() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassDecl {
    pub name: Ident,
    pub creators: Vec<Ident>,
    pub attributes: Vec<Attribute>,
    pub procedures: Vec<Procedure>,
    pub invariant: Expression,
}

impl ClassDecl {
    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name.as_str() == name)
    }

    pub fn procedure(&self, name: &str) -> Option<&Procedure> {
        self.procedures.iter().find(|p| p.name.as_str() == name)
    }

    pub fn is_creator(&self, name: &str) -> bool {
        self.creators.iter().any(|c| c.as_str() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExprRoot {
    Current { quoted: bool },
    Name(Ident),
    Bool(bool),
}

/// A dot path: `Current`, a variable, or a boolean literal followed by zero or
/// more attribute selectors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Expression {
    pub root: ExprRoot,
    pub selectors: Vec<Ident>,
    pub loc: Loc,
}

impl Expression {
    pub fn current() -> Self {
        Expression { root: ExprRoot::Current { quoted: true }, selectors: Vec::new(), loc: Loc::default() }
    }

    pub fn name(name: &str) -> Self {
        Expression { root: ExprRoot::Name(Ident::new(name)), selectors: Vec::new(), loc: Loc::default() }
    }

    pub fn literal(value: bool) -> Self {
        Expression { root: ExprRoot::Bool(value), selectors: Vec::new(), loc: Loc::default() }
    }

    pub fn dot(mut self, selector: &str) -> Self {
        self.selectors.push(Ident::new(selector));
        self
    }

    pub fn is_true_literal(&self) -> bool {
        matches!(self.root, ExprRoot::Bool(true)) && self.selectors.is_empty()
    }

    /// Number of path components, counting the root.
    pub fn path_len(&self) -> usize {
        1 + self.selectors.len()
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.root {
            ExprRoot::Current { .. } => f.write_str("Current")?,
            ExprRoot::Name(id) => f.write_str(id.as_str())?,
            ExprRoot::Bool(b) => f.write_str(if *b { "True" } else { "False" })?,
        }
        for s in &self.selectors {
            write!(f, ".{s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    Create { target: Expression, creator: Ident, args: Vec<Expression> },
    Assign { target: Expression, source: Expression },
    Command { target: Expression, feature: Ident, args: Vec<Expression> },
    If { condition: Expression, then_branch: Vec<Instruction>, else_branch: Vec<Instruction> },
    Nil,
}

impl Instruction {
    pub fn loc(&self) -> Loc {
        match self {
            Instruction::Create { target, .. }
            | Instruction::Assign { target, .. }
            | Instruction::Command { target, .. } => target.loc,
            Instruction::If { condition, .. } => condition.loc,
            Instruction::Nil => Loc::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("class `{0}` not found")]
    ClassNotFound(String),
    #[error("feature `{feature}` not found in class `{class}`")]
    FeatureNotFound { class: String, feature: String },
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.iter().find(|c| c.name.as_str() == name)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name.as_str() == name)
    }

    /// Stable content hash of the program, hex encoded.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(print_program(self).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Finds the procedure `feature_name` of `class_name`.
pub fn lookup_feature<'p>(
    program: &'p Program,
    class_name: &str,
    feature_name: &str,
) -> Result<&'p Procedure, LookupError> {
    let class = program.class(class_name).ok_or_else(|| LookupError::ClassNotFound(class_name.to_string()))?;
    class.procedure(feature_name).ok_or_else(|| LookupError::FeatureNotFound {
        class: class_name.to_string(),
        feature: feature_name.to_string(),
    })
}
