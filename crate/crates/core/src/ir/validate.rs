use std::collections::BTreeSet;

use serde::Serialize;

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// A validation finding. Codes are stable and kebab-cased.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: &'static str,
    pub message: String,
    pub line: u32,
    pub col: u32,
    pub severity: Severity,
}

impl Diagnostic {
    fn error(code: &'static str, loc: Loc, message: String) -> Self {
        Diagnostic { code, message, line: loc.line, col: loc.col, severity: Severity::Error }
    }

    fn warning(code: &'static str, loc: Loc, message: String) -> Self {
        Diagnostic { code, message, line: loc.line, col: loc.col, severity: Severity::Warning }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// Checks name resolution, arity and creator use. Warnings flag contract
/// expressions other than the literal `True`, which are not executed.
pub fn validate_program(program: &Program) -> Vec<Diagnostic> {
    let mut v = Validator { program, diags: Vec::new() };
    v.settings();
    for class in &program.classes {
        v.class(class);
    }
    v.diags
}

struct Validator<'p> {
    program: &'p Program,
    diags: Vec<Diagnostic>,
}

/// Static type of an expression: a class name, or unknown after an error.
type StaticType = Option<Name>;

struct Scope<'p> {
    class: &'p ClassDecl,
    procedure: &'p Procedure,
}

impl<'p> Scope<'p> {
    fn variable(&self, name: &str) -> Option<&'p TypeAnnot> {
        self.procedure
            .formal(name)
            .or_else(|| self.procedure.local(name))
            .map(|d| &d.ty)
            .or_else(|| self.class.attribute(name).map(|a| &a.ty))
    }
}

impl<'p> Validator<'p> {
    fn class_known(&self, name: &str) -> bool {
        name == BOOLEAN_CLASS || self.program.class(name).is_some()
    }

    fn settings(&mut self) {
        let s = &self.program.settings;
        match self.program.class(s.root_class.as_str()) {
            None => self.diags.push(Diagnostic::error(
                "unresolved-root",
                s.root_class.loc,
                format!("root class `{}` is not declared", s.root_class),
            )),
            Some(class) => {
                if !class.is_creator(s.root_procedure.as_str()) || class.procedure(s.root_procedure.as_str()).is_none()
                {
                    self.diags.push(Diagnostic::error(
                        "unresolved-root",
                        s.root_procedure.loc,
                        format!("`{}` is not a creation procedure of `{}`", s.root_procedure, s.root_class),
                    ));
                }
            }
        }
    }

    fn type_annot(&mut self, ty: &TypeAnnot) {
        if !self.class_known(ty.class_name.as_str()) {
            self.diags.push(Diagnostic::error(
                "unknown-class",
                ty.class_name.loc,
                format!("class `{}` is not declared", ty.class_name),
            ));
        }
    }

    fn export(&mut self, export: &[Ident]) {
        for e in export {
            if e.as_str() != ANY_CLASS && self.program.class(e.as_str()).is_none() {
                self.diags.push(Diagnostic::error("unknown-class", e.loc, format!("class `{e}` is not declared")));
            }
        }
    }

    fn contract(&mut self, e: &Expression, what: &str) {
        if !e.is_true_literal() {
            self.diags.push(Diagnostic::warning(
                "unsupported-contract",
                e.loc,
                format!("{what} `{e}` is not executed; only `True` is supported"),
            ));
        }
    }

    fn class(&mut self, class: &'p ClassDecl) {
        let mut names = BTreeSet::new();
        for a in &class.attributes {
            if !names.insert(a.name.name.clone()) {
                self.diags.push(Diagnostic::error(
                    "duplicate-feature",
                    a.name.loc,
                    format!("`{}` is declared twice in `{}`", a.name, class.name),
                ));
            }
            self.export(&a.export);
            self.type_annot(&a.ty);
        }
        for p in &class.procedures {
            if !names.insert(p.name.name.clone()) {
                self.diags.push(Diagnostic::error(
                    "duplicate-feature",
                    p.name.loc,
                    format!("`{}` is declared twice in `{}`", p.name, class.name),
                ));
            }
        }
        for c in &class.creators {
            if class.procedure(c.as_str()).is_none() {
                self.diags.push(Diagnostic::error(
                    "unknown-creator",
                    c.loc,
                    format!("creator `{c}` is not a procedure of `{}`", class.name),
                ));
            }
        }
        for p in &class.procedures {
            self.procedure(class, p);
        }
        self.contract(&class.invariant, "invariant");
    }

    fn procedure(&mut self, class: &'p ClassDecl, p: &'p Procedure) {
        self.export(&p.export);
        let mut seen = BTreeSet::new();
        for d in p.formals.iter().chain(&p.locals) {
            if !seen.insert(d.name.name.clone()) || class.attribute(d.name.as_str()).is_some() {
                self.diags.push(Diagnostic::error(
                    "duplicate-name",
                    d.name.loc,
                    format!("`{}` clashes with another name in `{}.{}`", d.name, class.name, p.name),
                ));
            }
            self.type_annot(&d.ty);
        }
        self.contract(&p.precondition, "precondition");
        self.contract(&p.postcondition, "postcondition");
        let scope = Scope { class, procedure: p };
        for instr in p.body.iter().chain(&p.rescue) {
            self.instruction(&scope, instr);
        }
    }

    fn expression(&mut self, scope: &Scope<'p>, e: &Expression) -> StaticType {
        let mut ty: Name = match &e.root {
            ExprRoot::Current { .. } => scope.class.name.name.clone(),
            ExprRoot::Bool(_) => {
                if let Some(sel) = e.selectors.first() {
                    self.diags.push(Diagnostic::error(
                        "unknown-attribute",
                        sel.loc,
                        format!("boolean literal has no attribute `{sel}`"),
                    ));
                    return None;
                }
                return Some(BOOLEAN_CLASS.into());
            }
            ExprRoot::Name(id) => match scope.variable(id.as_str()) {
                Some(t) => t.class_name.name.clone(),
                None => {
                    self.diags.push(Diagnostic::error(
                        "unknown-identifier",
                        id.loc,
                        format!("`{id}` is not declared in `{}.{}`", scope.class.name, scope.procedure.name),
                    ));
                    return None;
                }
            },
        };
        for sel in &e.selectors {
            let attr = self.program.class(&ty).and_then(|c| c.attribute(sel.as_str()));
            match attr {
                Some(a) => ty = a.ty.class_name.name.clone(),
                None => {
                    self.diags.push(Diagnostic::error(
                        "unknown-attribute",
                        sel.loc,
                        format!("class `{ty}` has no attribute `{sel}`"),
                    ));
                    return None;
                }
            }
        }
        Some(ty)
    }

    fn writable(&mut self, scope: &Scope<'p>, target: &Expression) {
        let ok = match &target.root {
            ExprRoot::Current { .. } => !target.selectors.is_empty(),
            ExprRoot::Name(id) => scope.procedure.formal(id.as_str()).is_none() || !target.selectors.is_empty(),
            ExprRoot::Bool(_) => false,
        };
        if !ok {
            self.diags.push(Diagnostic::error("invalid-target", target.loc, format!("`{target}` cannot be assigned")));
        }
    }

    fn call(&mut self, class: &Name, feature: &Ident, args: &[Expression], creation: bool) {
        let Some(decl) = self.program.class(class) else {
            self.diags.push(Diagnostic::error(
                "unknown-feature",
                feature.loc,
                format!("class `{class}` has no feature `{feature}`"),
            ));
            return;
        };
        let Some(proc_) = decl.procedure(feature.as_str()) else {
            self.diags.push(Diagnostic::error(
                "unknown-feature",
                feature.loc,
                format!("class `{class}` has no feature `{feature}`"),
            ));
            return;
        };
        if creation && !decl.is_creator(feature.as_str()) {
            self.diags.push(Diagnostic::error(
                "unknown-creator",
                feature.loc,
                format!("`{feature}` is not a creation procedure of `{class}`"),
            ));
        }
        if proc_.formals.len() != args.len() {
            self.diags.push(Diagnostic::error(
                "arity-mismatch",
                feature.loc,
                format!("`{class}.{feature}` takes {} arguments, {} given", proc_.formals.len(), args.len()),
            ));
        }
    }

    fn instruction(&mut self, scope: &Scope<'p>, instr: &Instruction) {
        match instr {
            Instruction::Create { target, creator, args } => {
                self.writable(scope, target);
                let ty = self.expression(scope, target);
                for a in args {
                    self.expression(scope, a);
                }
                if let Some(ty) = ty {
                    self.call(&ty, creator, args, true);
                }
            }
            Instruction::Assign { target, source } => {
                self.writable(scope, target);
                self.expression(scope, target);
                self.expression(scope, source);
            }
            Instruction::Command { target, feature, args } => {
                let ty = self.expression(scope, target);
                for a in args {
                    self.expression(scope, a);
                }
                if let Some(ty) = ty {
                    self.call(&ty, feature, args, false);
                }
            }
            Instruction::If { condition, then_branch, else_branch } => {
                if let Some(ty) = self.expression(scope, condition) {
                    if &*ty != BOOLEAN_CLASS {
                        self.diags.push(Diagnostic::error(
                            "non-boolean-condition",
                            condition.loc,
                            format!("condition `{condition}` has type `{ty}`"),
                        ));
                    }
                }
                for i in then_branch.iter().chain(else_branch) {
                    self.instruction(scope, i);
                }
            }
            Instruction::Nil => {}
        }
    }
}
