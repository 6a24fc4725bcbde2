use std::collections::BTreeSet;

use thiserror::Error;

use super::lexer::{tokenize, Tok, Token};
use super::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: expected one of {}, found {found}", expected.join(", "))]
    Syntax { line: u32, col: u32, expected: Vec<String>, found: String },
    #[error("{line}:{col}: duplicate class `{name}`")]
    DuplicateClass { name: String, line: u32, col: u32 },
}

impl ParseError {
    pub fn position(&self) -> (u32, u32) {
        match self {
            ParseError::Syntax { line, col, .. } | ParseError::DuplicateClass { line, col, .. } => (*line, *col),
        }
    }
}

type PResult<T> = Result<T, ParseError>;

/// Parses the textual intermediate representation.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let tokens = tokenize(text).map_err(|e| ParseError::Syntax {
        line: e.loc.line,
        col: e.loc.col,
        expected: vec!["a token".into()],
        found: format!("`{}`", e.found),
    })?;
    let mut p = Parser { tokens, pos: 0 };
    let program = p.program()?;
    let mut seen = BTreeSet::new();
    for class in &program.classes {
        if !seen.insert(class.name.name.clone()) {
            return Err(ParseError::DuplicateClass {
                name: class.name.to_string(),
                line: class.name.loc.line,
                col: class.name.loc.col,
            });
        }
    }
    Ok(program)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn loc(&self) -> Loc {
        self.tokens[self.pos].loc
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let t = &self.tokens[self.pos];
        Err(ParseError::Syntax {
            line: t.loc.line,
            col: t.loc.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.describe(),
        })
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.error(&[&tok.describe()])
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Word(x) if x == w)
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            self.error(&[&format!("`{w}`")])
        }
    }

    fn quoted(&mut self) -> PResult<Ident> {
        let loc = self.loc();
        match self.peek().clone() {
            Tok::Quoted(name) => {
                self.bump();
                Ok(Ident { name: name.into(), quoted: true, loc })
            }
            _ => self.error(&["quoted identifier"]),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        self.eat_word("srew");
        self.expect(Tok::LParen)?;
        self.expect(Tok::LParen)?;
        self.expect_word("import")?;
        let import_loc = self.loc();
        let import = match self.peek().clone() {
            Tok::Word(w) => {
                self.bump();
                Ident { name: w.into(), quoted: false, loc: import_loc }
            }
            _ => return self.error(&["library name"]),
        };
        let mut classes = Vec::new();
        while self.peek() == &Tok::LParen {
            self.bump();
            classes.push(self.class()?);
            self.expect(Tok::RParen)?;
            self.expect(Tok::Semi)?;
        }
        if self.peek() != &Tok::RParen {
            return self.error(&["`(`", "`)`"]);
        }
        self.bump();
        let settings = self.settings()?;
        self.expect(Tok::RParen)?;
        let strategy = if self.eat_word("using") {
            match self.peek().clone() {
                Tok::Raw(raw) => {
                    self.bump();
                    let trimmed = raw.trim_end();
                    let Some(body) = trimmed.strip_suffix('.') else {
                        return self.error(&["strategy terminated by `.`"]);
                    };
                    Some(body.trim().to_string())
                }
                _ => return self.error(&["strategy text"]),
            }
        } else {
            None
        };
        if self.peek() != &Tok::Eof {
            return self.error(&["`using`", "end of input"]);
        }
        Ok(Program { import, classes, settings, strategy })
    }

    fn settings(&mut self) -> PResult<Settings> {
        let loc = self.loc();
        if !self.is_word("settings") {
            return self.error(&["`settings`"]);
        }
        self.bump();
        self.expect(Tok::LParen)?;
        let root_class = self.quoted()?;
        self.expect(Tok::Comma)?;
        let root_procedure = self.quoted()?;
        self.expect(Tok::Comma)?;
        let flag = if self.eat_word("true") {
            true
        } else if self.eat_word("false") {
            false
        } else {
            return self.error(&["`true`", "`false`"]);
        };
        self.expect(Tok::Comma)?;
        let deadlock_check = if self.eat_word("deadlock-on") {
            DeadlockCheck::On
        } else if self.eat_word("deadlock-off") {
            DeadlockCheck::Off
        } else {
            return self.error(&["`deadlock-on`", "`deadlock-off`"]);
        };
        self.expect(Tok::RParen)?;
        Ok(Settings { root_class, root_procedure, flag, deadlock_check, loc })
    }

    /// `{ 'A 'B }`, commas optional.
    fn name_set(&mut self) -> PResult<Vec<Ident>> {
        self.expect(Tok::LBrace)?;
        let mut names = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(names);
                }
                Tok::Comma if !names.is_empty() => {
                    self.bump();
                }
                Tok::Quoted(_) => names.push(self.quoted()?),
                _ => return self.error(&["quoted identifier", "`}`"]),
            }
        }
    }

    fn class(&mut self) -> PResult<ClassDecl> {
        self.expect_word("class")?;
        let name = self.quoted()?;
        self.expect_word("create")?;
        let creators = self.name_set()?;
        self.expect(Tok::LParen)?;
        let mut attributes = Vec::new();
        let mut procedures = Vec::new();
        loop {
            if self.eat_word("attribute") {
                let export = self.name_set()?;
                let name = self.quoted()?;
                self.expect(Tok::Colon)?;
                let ty = self.type_annot()?;
                self.expect(Tok::Semi)?;
                attributes.push(Attribute { export, name, ty });
            } else if self.eat_word("procedure") {
                procedures.push(self.procedure()?);
                self.expect(Tok::Semi)?;
            } else if self.eat(&Tok::RParen) {
                break;
            } else {
                return self.error(&["`attribute`", "`procedure`", "`)`"]);
            }
        }
        self.expect_word("invariant")?;
        let invariant = self.expression()?;
        self.expect_word("end")?;
        Ok(ClassDecl { name, creators, attributes, procedures, invariant })
    }

    fn type_annot(&mut self) -> PResult<TypeAnnot> {
        self.expect(Tok::LBracket)?;
        let attachment = if self.eat(&Tok::Bang) {
            Attachment::Attached
        } else if self.eat(&Tok::Question) {
            Attachment::Detachable
        } else {
            return self.error(&["`!`", "`?`"]);
        };
        self.expect(Tok::Comma)?;
        let processor = if self.eat_word("T") {
            ProcessorTag::Any
        } else if self.eat(&Tok::Dot) {
            ProcessorTag::Current
        } else if matches!(self.peek(), Tok::Quoted(_)) {
            ProcessorTag::Explicit(self.quoted()?)
        } else {
            return self.error(&["`T`", "`.`", "quoted identifier"]);
        };
        self.expect(Tok::Comma)?;
        let class_name = self.quoted()?;
        self.expect(Tok::RBracket)?;
        Ok(TypeAnnot { attachment, processor, class_name })
    }

    /// `nil` or a sequence of `'name : type ;`, inside the caller's parentheses.
    fn decls(&mut self) -> PResult<Vec<Decl>> {
        if self.eat_word("nil") {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        while matches!(self.peek(), Tok::Quoted(_)) {
            let name = self.quoted()?;
            self.expect(Tok::Colon)?;
            let ty = self.type_annot()?;
            self.expect(Tok::Semi)?;
            out.push(Decl { name, ty });
        }
        Ok(out)
    }

    fn procedure(&mut self) -> PResult<Procedure> {
        let export = self.name_set()?;
        let name = self.quoted()?;
        self.expect(Tok::LParen)?;
        let formals = self.decls()?;
        self.expect(Tok::RParen)?;
        self.expect_word("require")?;
        let precondition = self.expression()?;
        self.expect_word("local")?;
        self.expect(Tok::LParen)?;
        let locals = self.decls()?;
        self.expect(Tok::RParen)?;
        self.expect_word("do")?;
        let body = self.block()?;
        self.expect_word("ensure")?;
        let postcondition = self.expression()?;
        self.expect_word("rescue")?;
        let rescue = if self.eat_word("nil") { Vec::new() } else { self.block()? };
        self.expect_word("end")?;
        Ok(Procedure { export, name, formals, precondition, locals, body, postcondition, rescue })
    }

    /// `( nil )` or `( instr ; instr ; )`.
    fn block(&mut self) -> PResult<Vec<Instruction>> {
        self.expect(Tok::LParen)?;
        if self.is_word("nil") && self.peek_at(1) == &Tok::RParen {
            self.bump();
            self.bump();
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        while !self.eat(&Tok::RParen) {
            out.push(self.instruction()?);
            self.expect(Tok::Semi)?;
        }
        Ok(out)
    }

    fn instruction(&mut self) -> PResult<Instruction> {
        if self.eat_word("create") {
            self.expect(Tok::LParen)?;
            let (target, creator, args) = self.call()?;
            self.expect(Tok::RParen)?;
            Ok(Instruction::Create { target, creator, args })
        } else if self.eat_word("command") {
            self.expect(Tok::LParen)?;
            let (target, feature, args) = self.call()?;
            self.expect(Tok::RParen)?;
            Ok(Instruction::Command { target, feature, args })
        } else if self.eat_word("assign") {
            self.expect(Tok::LParen)?;
            let target = self.expression()?;
            self.expect(Tok::Comma)?;
            let source = self.expression()?;
            self.expect(Tok::RParen)?;
            Ok(Instruction::Assign { target, source })
        } else if self.eat_word("if") {
            let condition = self.expression()?;
            self.expect_word("then")?;
            let then_branch = self.block()?;
            self.expect_word("else")?;
            let else_branch = self.block()?;
            self.expect_word("end")?;
            Ok(Instruction::If { condition, then_branch, else_branch })
        } else if self.eat_word("nil") {
            Ok(Instruction::Nil)
        } else {
            self.error(&["`create`", "`command`", "`assign`", "`if`", "`nil`", "`)`"])
        }
    }

    /// `target . 'feature(args)` where target is a dot path.
    fn call(&mut self) -> PResult<(Expression, Ident, Vec<Expression>)> {
        let mut target = self.expr_root()?;
        loop {
            self.expect(Tok::Dot)?;
            let id = self.quoted()?;
            if self.peek() == &Tok::LParen {
                let args = self.args()?;
                return Ok((target, id, args));
            }
            target.selectors.push(id);
        }
    }

    fn args(&mut self) -> PResult<Vec<Expression>> {
        self.expect(Tok::LParen)?;
        if self.eat_word("nil") {
            self.expect(Tok::RParen)?;
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        while !self.eat(&Tok::RParen) {
            out.push(self.expression()?);
            self.expect(Tok::Semi)?;
        }
        Ok(out)
    }

    fn expr_root(&mut self) -> PResult<Expression> {
        let loc = self.loc();
        let root = match self.peek().clone() {
            Tok::Quoted(name) if name == "Current" => {
                self.bump();
                ExprRoot::Current { quoted: true }
            }
            Tok::Word(w) if w == "Current" => {
                self.bump();
                ExprRoot::Current { quoted: false }
            }
            Tok::Word(w) if w == "True" || w == "False" => {
                self.bump();
                ExprRoot::Bool(w == "True")
            }
            Tok::Quoted(_) => ExprRoot::Name(self.quoted()?),
            _ => return self.error(&["quoted identifier", "`Current`", "`True`", "`False`"]),
        };
        Ok(Expression { root, selectors: Vec::new(), loc })
    }

    fn expression(&mut self) -> PResult<Expression> {
        let mut e = self.expr_root()?;
        while self.peek() == &Tok::Dot && matches!(self.peek_at(1), Tok::Quoted(_)) {
            self.bump();
            e.selectors.push(self.quoted()?);
        }
        Ok(e)
    }
}
