use std::fmt::Write as _;

use super::{AppModel, Const, Operand, Statement};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn args(list: &[String]) -> String {
    list.join(", ")
}

pub(super) fn write_app(app: &AppModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "app {}", app.id);
    for p in &app.manifest.permissions {
        let _ = writeln!(out, "permission {p}");
    }
    for (k, v) in &app.manifest.metadata {
        if v.is_empty() {
            let _ = writeln!(out, "meta {k}");
        } else {
            let _ = writeln!(out, "meta {k} {v}");
        }
    }
    for e in &app.entry_points {
        let _ = writeln!(out, "entry {e}");
    }
    for s in &app.screens {
        let _ = write!(out, "\nscreen {}", s.id);
        if let Some(m) = &s.on_enter {
            let _ = write!(out, " enter {m}");
        }
        out.push('\n');
        for w in &s.widgets {
            let _ = write!(out, "  widget {} -> {}", w.id, w.handler);
            if let Some(t) = &w.transition {
                let _ = write!(out, " goto {t}");
            }
            if w.weight != 1.0 {
                let _ = write!(out, " weight {}", w.weight);
            }
            out.push('\n');
        }
        out.push_str("end\n");
    }
    for m in app.methods.values() {
        let _ = writeln!(out, "\nmethod {}({})", m.id, args(&m.params));
        for (i, stmt) in m.statements.iter().enumerate() {
            let _ = write!(out, "  {i}: ");
            match stmt {
                Statement::Assign { dst, src } => {
                    let rhs = match src {
                        Operand::Var(v) => v.clone(),
                        Operand::Const(Const::Int(n)) => n.to_string(),
                        Operand::Const(Const::Bool(b)) => b.to_string(),
                        Operand::Const(Const::Null) => "null".to_owned(),
                        Operand::Const(Const::Str(s)) => quote(s),
                    };
                    let _ = write!(out, "{dst} = {rhs}");
                }
                Statement::CallApi { api, args: a, ret } => {
                    if let Some(r) = ret {
                        let _ = write!(out, "{r} = ");
                    }
                    let _ = write!(out, "api {api}({})", args(a));
                }
                Statement::CallMethod { callee, args: a, ret } => {
                    if let Some(r) = ret {
                        let _ = write!(out, "{r} = ");
                    }
                    let _ = write!(out, "call {callee}({})", args(a));
                }
                Statement::Branch { cond, then_index, else_index } => {
                    let _ = write!(out, "if {cond} then {then_index} else {else_index}");
                }
                Statement::Return(None) => out.push_str("return"),
                Statement::Return(Some(v)) => {
                    let _ = write!(out, "return {v}");
                }
            }
            out.push('\n');
        }
        out.push_str("end\n");
    }
    out
}
