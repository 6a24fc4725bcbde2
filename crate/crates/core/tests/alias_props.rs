use proptest::prelude::*;
use scooplock_core::alias::{alias_exec, alias_loop_fixpoint, may_alias, AliasExpr, AliasRelation, AliasStmt};

const VARS: [&str; 4] = ["x", "y", "z", "w"];
const FIELDS: [&str; 2] = ["f", "g"];
const L: usize = 3;

#[derive(Debug, Clone)]
struct Path {
    root: usize,
    sels: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Stmt {
    target: Path,
    source: Option<Path>,
}

fn path(max: usize) -> impl Strategy<Value = Path> {
    (0..VARS.len(), prop::collection::vec(0..FIELDS.len(), 0..=max)).prop_map(|(root, sels)| Path { root, sels })
}

fn stmt() -> impl Strategy<Value = Stmt> {
    (path(1), prop::option::weighted(0.85, path(2))).prop_map(|(target, source)| Stmt { target, source })
}

fn expr(p: &Path) -> AliasExpr {
    p.sels.iter().fold(AliasExpr::var(VARS[p.root]), |e, s| e.dot(FIELDS[*s]))
}

fn alias_stmt(s: &Stmt) -> AliasStmt {
    AliasStmt::Assign { target: expr(&s.target), source: s.source.as_ref().map(expr) }
}

/// One object per variable to start with, every field `Void`.
#[derive(Debug, Clone)]
struct Heap {
    vars: [Option<usize>; 4],
    fields: Vec<[Option<usize>; 2]>,
}

impl Heap {
    fn new() -> Self {
        Heap { vars: [Some(0), Some(1), Some(2), Some(3)], fields: vec![[None; 2]; 4] }
    }

    fn eval(&self, p: &Path) -> Option<usize> {
        p.sels.iter().try_fold(self.vars[p.root]?, |o, s| self.fields[o][*s])
    }

    /// A void source stores `Void`; a void target prefix skips the write.
    /// Returns false when the write closes a cycle in the heap, which the pair
    /// calculus cannot follow.
    fn exec(&mut self, s: &Stmt) -> bool {
        let value = s.source.as_ref().and_then(|p| self.eval(p));
        match s.target.sels.split_last() {
            None => self.vars[s.target.root] = value,
            Some((last, prefix)) => {
                if let Some(o) = self.eval(&Path { root: s.target.root, sels: prefix.to_vec() }) {
                    self.fields[o][*last] = value;
                    return !value.is_some_and(|v| self.reaches(v, o));
                }
            }
        }
        true
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.fields.len()];
        let mut work = vec![from];
        while let Some(o) = work.pop() {
            if o == to {
                return true;
            }
            if !std::mem::replace(&mut seen[o], true) {
                work.extend(self.fields[o].iter().flatten());
            }
        }
        false
    }
}

fn all_paths() -> Vec<Path> {
    let mut out = Vec::new();
    for root in 0..VARS.len() {
        let mut layer = vec![Vec::new()];
        for _ in 0..=L {
            let mut next = Vec::new();
            for sels in &layer {
                out.push(Path { root, sels: sels.clone() });
                for f in 0..FIELDS.len() {
                    let mut longer = sels.clone();
                    longer.push(f);
                    next.push(longer);
                }
            }
            layer = next;
        }
    }
    out
}

/// Every pair of paths that reach the same object is reported by `may_alias`.
fn sound(r: &AliasRelation, h: &Heap) -> Result<(), TestCaseError> {
    let paths = all_paths();
    let values: Vec<Option<usize>> = paths.iter().map(|p| h.eval(p)).collect();
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            if values[i].is_some() && values[i] == values[j] {
                let (a, b) = (expr(&paths[i]), expr(&paths[j]));
                prop_assert!(may_alias(r, &a, &b), "{a} and {b} alias but the relation {:?} misses it", r);
            }
        }
    }
    Ok(())
}

fn well_formed(r: &AliasRelation) -> Result<(), TestCaseError> {
    for (a, b) in r.pairs() {
        prop_assert!(a < b);
        prop_assert!(!a.same_path(b));
        prop_assert!(a.depth() <= r.depth() && b.depth() <= r.depth());
        prop_assert!(r.contains(b, a));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn straight_line_relations_over_approximate(stmts in prop::collection::vec(stmt(), 1..10)) {
        let mut r = AliasRelation::new(L);
        let mut h = Heap::new();
        for s in &stmts {
            if !h.exec(s) {
                break;
            }
            r = alias_exec(&r, &[alias_stmt(s)]);
            well_formed(&r)?;
            sound(&r, &h)?;
        }
    }

    #[test]
    fn loop_fixpoint_covers_every_unrolling(
        prefix in prop::collection::vec(stmt(), 0..5),
        body in prop::collection::vec(stmt(), 1..4),
    ) {
        let prefix_stmts: Vec<AliasStmt> = prefix.iter().map(alias_stmt).collect();
        let body_stmts: Vec<AliasStmt> = body.iter().map(alias_stmt).collect();
        let start = alias_exec(&AliasRelation::new(L), &prefix_stmts);
        let fix = alias_loop_fixpoint(&start, &body_stmts);
        well_formed(&fix)?;
        let mut h = Heap::new();
        if !prefix.iter().all(|s| h.exec(s)) {
            return Ok(());
        }
        let mut unrolled = start.clone();
        let mut acyclic = true;
        for _ in 0..=5 {
            if acyclic {
                sound(&fix, &h)?;
                acyclic = body.iter().all(|s| h.exec(s));
            }
            prop_assert!(unrolled.pairs().all(|(a, b)| fix.contains(a, b)));
            unrolled = alias_exec(&unrolled, &body_stmts);
        }
        prop_assert_eq!(alias_loop_fixpoint(&fix, &body_stmts), fix);
    }

    #[test]
    fn may_alias_is_symmetric_and_reflexive(
        stmts in prop::collection::vec(stmt(), 1..8),
        a in path(3),
        b in path(3),
    ) {
        let r = alias_exec(&AliasRelation::new(L), &stmts.iter().map(alias_stmt).collect::<Vec<_>>());
        let (a, b) = (expr(&a), expr(&b));
        prop_assert_eq!(may_alias(&r, &a, &b), may_alias(&r, &b, &a));
        prop_assert!(may_alias(&r, &a, &a));
    }
}

#[test]
fn copy_then_field_matches_a_two_object_heap() {
    let s = Stmt { target: Path { root: 0, sels: vec![] }, source: Some(Path { root: 1, sels: vec![] }) };
    let r = alias_exec(&AliasRelation::new(L), &[alias_stmt(&s)]);
    let mut h = Heap { vars: [Some(0), Some(1), None, None], fields: vec![[Some(1), None], [Some(0), None]] };
    assert!(h.exec(&s));
    let xf = Path { root: 0, sels: vec![0] };
    let yf = Path { root: 1, sels: vec![0] };
    assert_eq!(h.eval(&xf), h.eval(&yf));
    assert!(may_alias(&r, &expr(&xf), &expr(&yf)));
    assert!(!may_alias(&r, &AliasExpr::var("u"), &AliasExpr::var("v")));
}

#[test]
fn unrelated_loop_leaves_the_relation_alone() {
    let mut r = AliasRelation::new(L);
    r.insert(AliasExpr::var("x"), AliasExpr::var("y"));
    let body = [AliasStmt::Assign { target: AliasExpr::var("u"), source: Some(AliasExpr::var("v").dot("next")) }];
    let fix = alias_loop_fixpoint(&r, &body);
    assert!(fix.contains(&AliasExpr::var("x"), &AliasExpr::var("y")));
    assert!(fix.pairs().all(|(a, b)| (a.same_path(&AliasExpr::var("x")) && b.same_path(&AliasExpr::var("y")))
        || ![a, b].iter().any(|e| matches!(e.to_string().as_str(), "x" | "y"))));
}
