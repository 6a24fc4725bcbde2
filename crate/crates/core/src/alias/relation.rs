use std::collections::BTreeSet;
use std::iter;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::expr::{AliasExpr, Root};

/// Default bound on selector depth.
pub const DEFAULT_DEPTH: usize = 3;

/// A symmetric, irreflexive set of expression pairs. Each pair is stored once
/// with the smaller expression first; every expression has at most `depth`
/// selectors.
///
/// A pair `{a, b}` also stands for every `{a.σ, b.σ}`, so the relation
/// describes aliasing of arbitrarily long paths.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AliasRelation {
    depth: usize,
    pairs: BTreeSet<(AliasExpr, AliasExpr)>,
}

impl Default for AliasRelation {
    fn default() -> Self {
        AliasRelation::new(DEFAULT_DEPTH)
    }
}

impl AliasRelation {
    pub fn new(depth: usize) -> Self {
        AliasRelation { depth, pairs: BTreeSet::new() }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Adds `{a, b}` after truncating both sides. Pairs of one path are
    /// dropped.
    pub fn insert(&mut self, a: AliasExpr, b: AliasExpr) -> bool {
        let (a, b) = (a.truncate(self.depth), b.truncate(self.depth));
        if a.same_path(&b) {
            return false;
        }
        self.pairs.insert(if a <= b { (a, b) } else { (b, a) })
    }

    pub fn contains(&self, a: &AliasExpr, b: &AliasExpr) -> bool {
        let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        self.pairs.contains(&key)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&AliasExpr, &AliasExpr)> {
        self.pairs.iter().map(|(a, b)| (a, b))
    }

    /// Every pair in both orientations.
    pub fn oriented(&self) -> impl Iterator<Item = (&AliasExpr, &AliasExpr)> {
        self.pairs.iter().flat_map(|(a, b)| [(a, b), (b, a)])
    }

    pub fn union(&self, other: &AliasRelation) -> AliasRelation {
        let mut out = self.clone();
        out.pairs.extend(other.pairs.iter().cloned());
        out
    }

    pub fn retain(&mut self, keep: impl Fn(&AliasExpr, &AliasExpr) -> bool) {
        self.pairs.retain(|(a, b)| keep(a, b));
    }

    /// Drops every pair mentioning a root that satisfies `dead`.
    pub fn forget_roots(&mut self, dead: impl Fn(&Root) -> bool) {
        self.pairs.retain(|(a, b)| !dead(&a.root) && !dead(&b.root));
    }
}

impl Serialize for AliasRelation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("AliasRelation", 2)?;
        st.serialize_field("depth", &self.depth)?;
        let pairs: Vec<[&AliasExpr; 2]> = self.pairs.iter().map(|(a, b)| [a, b]).collect();
        st.serialize_field("pairs", &pairs)?;
        st.end()
    }
}

/// Whether `e1` and `e2` may denote the same object. Widened expressions
/// are matched by prefix.
pub fn may_alias(r: &AliasRelation, e1: &AliasExpr, e2: &AliasExpr) -> bool {
    if e1.same_path(e2) || (e1.widened && e2.has_prefix(e1)) || (e2.widened && e1.has_prefix(e2)) {
        return true;
    }
    r.oriented().any(|(a, b)| derives(a, b, e1, e2))
}

/// `{a, b}` gives `{a.π, b.π}`.
fn derives(a: &AliasExpr, b: &AliasExpr, e1: &AliasExpr, e2: &AliasExpr) -> bool {
    if !(a.widened || b.widened || e1.widened || e2.widened) {
        return e1.suffix_after(a).is_some_and(|pi| e2.suffix_after(b).is_some_and(|rest| rest == pi));
    }
    let meets = |e: &AliasExpr, x: &AliasExpr| e.has_prefix(x) || (e.widened && x.has_prefix(e));
    meets(e1, a) && meets(e2, b)
}

/// Relation after `t := s`.
///
/// Expressions below `t` now mean what the matching expressions below `s`
/// meant before, and keep nothing else. When `t` is an attribute path
/// `P.f`, every `u.f` with `u` a possible alias of `P` may also have
/// changed, so it gains the new pairs and keeps its old ones.
pub fn alias_after_assign(r: &AliasRelation, t: &AliasExpr, s: &AliasExpr) -> AliasRelation {
    if t.same_path(s) {
        return r.clone();
    }
    transfer(r, t, Some(s))
}

/// Relation after `t` receives a value that aliases nothing, such as
/// `Void` or a boolean.
pub fn alias_kill(r: &AliasRelation, t: &AliasExpr) -> AliasRelation {
    transfer(r, t, None)
}

fn transfer(r: &AliasRelation, t: &AliasExpr, s: Option<&AliasExpr>) -> AliasRelation {
    let depth = r.depth;
    let mut pre: Vec<(AliasExpr, AliasExpr)> = r.pairs.iter().cloned().collect();
    if let Some(s) = s {
        pre.push((s.clone(), s.clone()));
        for (a, b) in r.oriented() {
            match s.suffix_after(a) {
                Some(_) if a.widened => pre.push((s.clone().widen(), b.clone().widen())),
                Some(k) if !k.is_empty() => pre.push((s.clone(), b.extend(k, depth))),
                _ => {}
            }
        }
    }
    let others: Vec<AliasExpr> = match t.parent() {
        None => Vec::new(),
        Some((prefix, f)) => r
            .oriented()
            .filter_map(|(a, b)| {
                let sigma = prefix.suffix_after(a)?;
                let u = if a.widened { b.clone().widen() } else { b.extend(sigma, depth) };
                (u.widened || !u.same_path(&prefix)).then(|| u.extend(std::slice::from_ref(f), depth))
            })
            .collect(),
    };
    let post = |c: &AliasExpr| -> Vec<AliasExpr> {
        let mut names = Vec::new();
        if !c.has_prefix(t) {
            names.push(c.clone());
        }
        let Some(s) = s else { return names };
        let targets = iter::once(t).chain(&others);
        if let Some(rho) = c.suffix_after(s) {
            names.extend(targets.map(|n| {
                let e = n.extend(rho, depth);
                if c.widened {
                    e.widen()
                } else {
                    e
                }
            }));
        } else if c.widened && s.has_prefix(c) {
            names.extend(targets.map(|n| n.clone().widen()));
        }
        names
    };
    let mut out = AliasRelation::new(depth);
    for (c, d) in &pre {
        let (cs, ds) = (post(c), post(d));
        for u in &cs {
            for v in &ds {
                out.insert(u.clone(), v.clone());
            }
        }
    }
    out
}

/// Statements of the straight-line alias language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AliasStmt {
    /// `target := source`; no source means `Void`.
    Assign { target: AliasExpr, source: Option<AliasExpr> },
    /// Zero or more iterations.
    Loop(Vec<AliasStmt>),
    /// One of two branches.
    Choice(Vec<AliasStmt>, Vec<AliasStmt>),
}

/// Relation after running `stmts` from `r`.
pub fn alias_exec(r: &AliasRelation, stmts: &[AliasStmt]) -> AliasRelation {
    stmts.iter().fold(r.clone(), |r, s| match s {
        AliasStmt::Assign { target, source: Some(source) } => alias_after_assign(&r, target, source),
        AliasStmt::Assign { target, source: None } => alias_kill(&r, target),
        AliasStmt::Loop(body) => alias_loop_fixpoint(&r, body),
        AliasStmt::Choice(a, b) => alias_exec(&r, a).union(&alias_exec(&r, b)),
    })
}

/// Least `R ⊇ r` with `exec(body, R) ⊆ R`: covers every number of
/// iterations. Terminates because truncation keeps the expression space
/// finite.
pub fn alias_loop_fixpoint(r: &AliasRelation, body: &[AliasStmt]) -> AliasRelation {
    let mut current = r.clone();
    loop {
        let next = current.union(&alias_exec(&current, body));
        if next == current {
            return current;
        }
        current = next;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("alias program, token {token}: {message}")]
pub struct AliasSyntaxError {
    pub token: usize,
    pub message: String,
}

/// Parses `x := y; loop x := x.next end`. Statements are separated by `;`;
/// `loop … end` repeats, `if … else … end` chooses, `Void` clears.
pub fn parse_alias_program(text: &str) -> Result<Vec<AliasStmt>, AliasSyntaxError> {
    let spaced = text.replace(":=", " := ").replace(';', " ; ");
    let tokens: Vec<&str> = spaced.split_whitespace().collect();
    let mut pos = 0;
    let stmts = parse_block(&tokens, &mut pos)?;
    if pos < tokens.len() {
        return Err(AliasSyntaxError { token: pos, message: format!("unexpected `{}`", tokens[pos]) });
    }
    Ok(stmts)
}

fn parse_block(tokens: &[&str], pos: &mut usize) -> Result<Vec<AliasStmt>, AliasSyntaxError> {
    let err = |pos: usize, message: String| AliasSyntaxError { token: pos, message };
    let mut out = Vec::new();
    while let Some(&tok) = tokens.get(*pos) {
        match tok {
            ";" => *pos += 1,
            "end" | "else" => break,
            "loop" => {
                *pos += 1;
                let body = parse_block(tokens, pos)?;
                expect(tokens, pos, "end")?;
                out.push(AliasStmt::Loop(body));
            }
            "if" => {
                *pos += 1;
                let a = parse_block(tokens, pos)?;
                expect(tokens, pos, "else")?;
                let b = parse_block(tokens, pos)?;
                expect(tokens, pos, "end")?;
                out.push(AliasStmt::Choice(a, b));
            }
            _ => {
                let target: AliasExpr = tok.parse().map_err(|e: super::ExprParseError| err(*pos, e.to_string()))?;
                if target.widened {
                    return Err(err(*pos, "cannot assign to a widened expression".into()));
                }
                *pos += 1;
                expect(tokens, pos, ":=")?;
                let src = tokens.get(*pos).ok_or_else(|| err(*pos, "missing source".into()))?;
                let source = match *src {
                    "Void" => None,
                    s => Some(s.parse::<AliasExpr>().map_err(|e| err(*pos, e.to_string()))?),
                };
                *pos += 1;
                out.push(AliasStmt::Assign { target, source });
            }
        }
    }
    Ok(out)
}

fn expect(tokens: &[&str], pos: &mut usize, want: &str) -> Result<(), AliasSyntaxError> {
    match tokens.get(*pos) {
        Some(t) if *t == want => {
            *pos += 1;
            Ok(())
        }
        other => Err(AliasSyntaxError {
            token: *pos,
            message: format!("expected `{want}`, found `{}`", other.copied().unwrap_or("end of input")),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> AliasExpr {
        s.parse().unwrap()
    }

    fn pairs(r: &AliasRelation) -> Vec<String> {
        r.pairs().map(|(a, b)| format!("{a}~{b}")).collect()
    }

    #[test]
    fn copy_chains_through_the_source() {
        let mut r = AliasRelation::default();
        r.insert(e("x"), e("y"));
        let r = alias_after_assign(&r, &e("z"), &e("x"));
        assert_eq!(pairs(&r), ["x~y", "x~z", "y~z"]);
    }

    #[test]
    fn reassignment_kills_old_pairs() {
        let mut r = AliasRelation::default();
        r.insert(e("x"), e("y"));
        let r = alias_after_assign(&r, &e("x"), &e("z"));
        assert_eq!(pairs(&r), ["x~z"]);
        assert!(alias_kill(&r, &e("x")).is_empty());
    }

    #[test]
    fn self_assignment_is_identity() {
        let mut r = AliasRelation::default();
        r.insert(e("x"), e("y.f"));
        assert_eq!(alias_after_assign(&r, &e("x"), &e("x")), r);
    }

    #[test]
    fn loop_reaches_the_widened_marker() {
        let prog = parse_alias_program("x := y; loop x := x.next end").unwrap();
        let r = alias_exec(&AliasRelation::default(), &prog);
        assert_eq!(pairs(&r), ["x~y", "x~y.next", "x~y.next^2", "x~y.next^3", "x~y.next^3.*"]);
        assert!(may_alias(&r, &e("x.val"), &e("y.next^2.val")));
        assert!(!may_alias(&r, &e("x.val"), &e("y.val.next")));
    }

    #[test]
    fn field_write_through_an_alias() {
        let prog = parse_alias_program("x := y; x.f := z").unwrap();
        let r = alias_exec(&AliasRelation::default(), &prog);
        assert!(may_alias(&r, &e("y.f"), &e("z")));
        assert!(may_alias(&r, &e("x.f"), &e("z")));
    }

    #[test]
    fn cyclic_structure_relates_a_variable_to_its_own_field() {
        let prog = parse_alias_program("x.f := x").unwrap();
        let r = alias_exec(&AliasRelation::default(), &prog);
        assert!(may_alias(&r, &e("x"), &e("x.f")));
        assert!(may_alias(&r, &e("x.g"), &e("x.f.g")));
    }

    #[test]
    fn choice_unions_branches() {
        let prog = parse_alias_program("if a := l; b := r else a := r; b := l end").unwrap();
        let r = alias_exec(&AliasRelation::default(), &prog);
        assert_eq!(pairs(&r), ["a~l", "a~r", "b~l", "b~r"]);
    }

    #[test]
    fn syntax_errors_point_at_tokens() {
        let err = parse_alias_program("x := ; y").unwrap_err();
        assert_eq!(err.token, 2);
        assert!(parse_alias_program("loop x := y").is_err());
        assert!(parse_alias_program("x.* := y").is_err());
    }

    #[test]
    fn serializes_as_strings() {
        let mut r = AliasRelation::new(2);
        r.insert(e("y.next"), e("x"));
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"depth":2,"pairs":[["x","y.next"]]}"#);
    }
}
