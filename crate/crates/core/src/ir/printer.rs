use std::fmt::Write;

use super::*;

/// Renders a program back to its textual form. Parsing the output yields a
/// structurally identical program.
pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    out.push_str("((import ");
    out.push_str(program.import.as_str());
    out.push('\n');
    for class in &program.classes {
        print_class(&mut out, class);
    }
    let s = &program.settings;
    let _ = write!(
        out,
        ") settings({}, {}, {}, {}))",
        ident(&s.root_class),
        ident(&s.root_procedure),
        s.flag,
        if s.deadlock_check.is_on() { "deadlock-on" } else { "deadlock-off" }
    );
    if let Some(strategy) = &program.strategy {
        let _ = write!(out, "\nusing {strategy} .");
    }
    out.push('\n');
    out
}

fn ident(id: &Ident) -> String {
    if id.quoted {
        format!("'{}", id.name)
    } else {
        id.name.to_string()
    }
}

fn name_set(ids: &[Ident]) -> String {
    let inner: Vec<_> = ids.iter().map(ident).collect();
    if inner.is_empty() {
        "{ }".to_string()
    } else {
        format!("{{ {} }}", inner.join(", "))
    }
}

fn type_annot(t: &TypeAnnot) -> String {
    let mark = match t.attachment {
        Attachment::Attached => "!",
        Attachment::Detachable => "?",
    };
    let tag = match &t.processor {
        ProcessorTag::Any => "T".to_string(),
        ProcessorTag::Current => ".".to_string(),
        ProcessorTag::Explicit(id) => ident(id),
    };
    format!("[{mark},{tag},{}]", ident(&t.class_name))
}

fn decls(ds: &[Decl]) -> String {
    if ds.is_empty() {
        return "nil".to_string();
    }
    ds.iter().map(|d| format!("{} : {} ;", ident(&d.name), type_annot(&d.ty))).collect::<Vec<_>>().join(" ")
}

pub(crate) fn expression(e: &Expression) -> String {
    let mut s = match &e.root {
        ExprRoot::Current { quoted: true } => "'Current".to_string(),
        ExprRoot::Current { quoted: false } => "Current".to_string(),
        ExprRoot::Name(id) => ident(id),
        ExprRoot::Bool(b) => if *b { "True" } else { "False" }.to_string(),
    };
    for sel in &e.selectors {
        s.push_str(" . ");
        s.push_str(&ident(sel));
    }
    s
}

fn args(a: &[Expression]) -> String {
    if a.is_empty() {
        "nil".to_string()
    } else {
        a.iter().map(|e| format!("{} ;", expression(e))).collect::<Vec<_>>().join(" ")
    }
}

fn block(out: &mut String, body: &[Instruction], indent: usize) {
    if body.is_empty() {
        out.push_str("( nil )");
        return;
    }
    out.push_str("(\n");
    for instr in body {
        out.push_str(&" ".repeat(indent + 4));
        instruction(out, instr, indent + 4);
        out.push_str(" ;\n");
    }
    out.push_str(&" ".repeat(indent));
    out.push(')');
}

fn instruction(out: &mut String, instr: &Instruction, indent: usize) {
    match instr {
        Instruction::Create { target, creator, args: a } => {
            let _ = write!(out, "create ({} . {}({}))", expression(target), ident(creator), args(a));
        }
        Instruction::Command { target, feature, args: a } => {
            let _ = write!(out, "command ({} . {}({}))", expression(target), ident(feature), args(a));
        }
        Instruction::Assign { target, source } => {
            let _ = write!(out, "assign ({}, {})", expression(target), expression(source));
        }
        Instruction::If { condition, then_branch, else_branch } => {
            let _ = write!(out, "if {} then ", expression(condition));
            block(out, then_branch, indent);
            out.push_str(" else ");
            block(out, else_branch, indent);
            out.push_str(" end");
        }
        Instruction::Nil => out.push_str("nil"),
    }
}

fn print_class(out: &mut String, class: &ClassDecl) {
    let _ = writeln!(out, "(class {}\n    create {}\n    (", ident(&class.name), name_set(&class.creators));
    for a in &class.attributes {
        let _ = writeln!(out, "        attribute {} {} : {} ;", name_set(&a.export), ident(&a.name), type_annot(&a.ty));
    }
    for p in &class.procedures {
        let _ = writeln!(out, "        procedure {} {} ({})", name_set(&p.export), ident(&p.name), decls(&p.formals));
        let _ = writeln!(out, "            require {}", expression(&p.precondition));
        let _ = writeln!(out, "            local ({})", decls(&p.locals));
        out.push_str("            do ");
        block(out, &p.body, 12);
        out.push('\n');
        let _ = writeln!(out, "            ensure {}", expression(&p.postcondition));
        out.push_str("            rescue ");
        if p.rescue.is_empty() {
            out.push_str("nil");
        } else {
            block(out, &p.rescue, 12);
        }
        out.push_str("\n        end ;\n");
    }
    let _ = writeln!(out, "    )\n    invariant {}\nend) ;", expression(&class.invariant));
}
