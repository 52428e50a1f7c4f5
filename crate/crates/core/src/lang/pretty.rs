//! Canonical source text for syntax trees. Output reparses to the same tree.

use std::fmt::Write;

use super::ast::*;
use crate::relalg::{AggFunc, ArithOp, CmpOp, KeyKind};

fn path(p: &[String]) -> String {
    p.join(".")
}

fn literal(l: &Literal) -> String {
    match l {
        Literal::Int(v) => v.to_string(),
        Literal::Float(x) => format!("{x:?}"),
        Literal::Str(s) => {
            let mut out = String::from("\"");
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
        Literal::Bool(true) => "TRUE".into(),
        Literal::Bool(false) => "FALSE".into(),
        Literal::Date(d) => d.to_string(),
        Literal::Null => "NULL".into(),
    }
}

fn bin_symbol(op: BinOp) -> &'static str {
    match op {
        BinOp::Arith(ArithOp::Add) => "+",
        BinOp::Arith(ArithOp::Sub) => "-",
        BinOp::Arith(ArithOp::Mul) => "*",
        BinOp::Arith(ArithOp::Div) => "/",
        BinOp::Cmp(CmpOp::Eq) => "=",
        BinOp::Cmp(CmpOp::Ne) => "<>",
        BinOp::Cmp(CmpOp::Lt) => "<",
        BinOp::Cmp(CmpOp::Le) => "<=",
        BinOp::Cmp(CmpOp::Gt) => ">",
        BinOp::Cmp(CmpOp::Ge) => ">=",
        BinOp::And => "AND",
        BinOp::Or => "OR",
    }
}

fn agg_name(f: AggFunc) -> &'static str {
    match f {
        AggFunc::Sum => "Sum",
        AggFunc::Count => "Count",
    }
}

fn list<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

/// Operand of a postfix operator, wrapped unless it is already a primary.
fn base(e: &Expr) -> String {
    match e {
        Expr::Name(_)
        | Expr::This
        | Expr::Member(..)
        | Expr::Call { .. }
        | Expr::Object(_)
        | Expr::Exist(_)
        | Expr::Project { .. }
        | Expr::Rename { .. }
        | Expr::Replace { .. }
        | Expr::Tuple(_)
        | Expr::Lit(Literal::Str(_) | Literal::Bool(_) | Literal::Null | Literal::Date(_)) => expr(e),
        _ => format!("({})", expr(e)),
    }
}

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Lit(l) => literal(l),
        Expr::Name(n) => n.clone(),
        Expr::This => "this".into(),
        Expr::Member(b, n) => format!("{}.{n}", base(b)),
        Expr::Call { target: None, name, args } => format!("{name}({})", list(args, expr)),
        Expr::Call { target: Some(t), name, args } => format!("{}.{name}({})", base(t), list(args, expr)),
        Expr::Object(x) => format!("Object({})", expr(x)),
        Expr::Exist(x) => format!("EXIST({})", expr(x)),
        Expr::Where(a, c) => format!("({} WHERE {})", base(a), base(c)),
        Expr::Project { expr: x, names, drop } => {
            format!("{}[{}{}]", base(x), if *drop { "!" } else { "" }, list(names, |p| path(p)))
        }
        Expr::Rename { expr: x, pairs } => {
            format!("{} RENAME ({})", base(x), list(pairs, |(a, b)| format!("{} AS {}", path(a), path(b))))
        }
        Expr::Replace { expr: x, sets } => {
            format!("{} REPLACE ({})", base(x), list(sets, |(p, v)| format!("{} := {}", path(p), base(v))))
        }
        Expr::SetOp(op, a, b) => format!("({} {} {})", base(a), op.keyword(), base(b)),
        Expr::Summarize { expr: x, by, adds } => {
            let mut s = format!("(SUMMARIZE {}", base(x));
            if !by.is_empty() {
                let _ = write!(s, " BY {}", list(by, |p| path(p)));
            }
            let _ = write!(
                s,
                " ADD {})",
                list(adds, |a| format!("{}({}) AS {}", agg_name(a.func), expr(&a.arg), path(&a.name)))
            );
            s
        }
        Expr::Expand(x, p) => format!("{} EXPAND {}", base(x), path(p)),
        Expr::Ov(x, conds) => format!("{}<{}>", base(x), list(conds, base)),
        Expr::Binary(op, a, b) => format!("({} {} {})", base(a), bin_symbol(*op), base(b)),
        Expr::Not(x) => format!("(NOT {})", base(x)),
        Expr::Neg(x) => format!("(-{})", base(x)),
        Expr::IsNull(x) => format!("({} IS NULL)", base(x)),
        Expr::IsType { expr: x, ty, exact } => {
            format!("({} {} {ty})", base(x), if *exact { "OF" } else { "IS" })
        }
        Expr::Tuple(fields) => format!("{{{}}}", list(fields, |(n, v)| format!("{n}: {}", base(v)))),
    }
}

fn type_expr(t: &TypeExpr) -> String {
    match t {
        TypeExpr::Named(n) => n.clone(),
        TypeExpr::SetOf(n) => format!("SET OF {n}"),
    }
}

fn key(k: &KeyDecl) -> String {
    let kind = match k.kind {
        KeyKind::Global => "GLOBALKEY",
        KeyKind::Local => "LOCALKEY",
        KeyKind::Foreign => "FOREIGNKEY",
    };
    let mut s = format!("{kind} ({})", list(&k.fields, |p| path(p)));
    if let Some(t) = &k.target {
        let _ = write!(s, " ON {}", path(t));
    }
    s
}

fn keys(ks: &[KeyDecl]) -> String {
    if ks.is_empty() {
        String::new()
    } else {
        format!(" CONSTRAIN {}", list(ks, key))
    }
}

fn component(c: &ComponentDecl) -> String {
    let mut s = c.name.clone();
    if let Some(ps) = &c.params {
        let _ = write!(s, "({})", list(ps, |p| format!("{} {}", p.name, type_expr(&p.ty))));
    }
    if let Some(t) = &c.ty {
        let _ = write!(s, " {}", type_expr(t));
    }
    s + &keys(&c.keys)
}

fn block(stmts: &[Stmt], indent: usize) -> String {
    let pad = "  ".repeat(indent);
    let mut s = String::from("BEGIN\n");
    for st in stmts {
        let _ = writeln!(s, "{pad}  {}", stmt(st, indent + 1));
    }
    s + &pad + "END"
}

pub fn stmt(s: &Stmt, indent: usize) -> String {
    match s {
        Stmt::Declare { name, ty } => format!("{name} {};", type_expr(ty)),
        Stmt::Assign { target, value } => format!("{} := {};", expr(target), expr(value)),
        Stmt::Insert { target, value } => format!("INSERT {} INTO {};", expr(value), base(target)),
        Stmt::Delete { target, cond } => format!("DELETE FROM {}{};", base(target), where_clause(cond)),
        Stmt::Update { target, sets, cond } => {
            format!("UPDATE {} SET {}{};", base(target), sets_clause(sets), where_clause(cond))
        }
        Stmt::If { cond, then, els } => {
            let mut out = format!("IF {} THEN {}", expr(cond), block(then, indent));
            if !els.is_empty() {
                let _ = write!(out, " ELSE {}", block(els, indent));
            }
            out + ";"
        }
        Stmt::DoWhile { body, cond } => {
            let pad = "  ".repeat(indent);
            let mut out = String::from("DO\n");
            for st in body {
                let _ = writeln!(out, "{pad}  {}", stmt(st, indent + 1));
            }
            let _ = write!(out, "{pad}WHILE {};", expr(cond));
            out
        }
        Stmt::Return(None) => "RETURN;".into(),
        Stmt::Return(Some(e)) => format!("RETURN {};", expr(e)),
        Stmt::Execute(e) => format!("EXECUTE {};", expr(e)),
    }
}

fn where_clause(c: &Option<Expr>) -> String {
    c.as_ref().map(|c| format!(" WHERE {}", base(c))).unwrap_or_default()
}

fn sets_clause(sets: &[(Path, Expr)]) -> String {
    format!("({})", list(sets, |(p, v)| format!("{} := {}", path(p), base(v))))
}

/// Source text of a method or computed-component body.
pub fn body(stmts: &[Stmt]) -> String {
    block(stmts, 0)
}

fn action(a: &AlterAction) -> String {
    match a {
        AlterAction::Add(c) => format!("ADD {}", component(c)),
        AlterAction::Drop(n) => format!("DROP {n}"),
        AlterAction::Alter(c) => format!("ALTER {}", component(c)),
        AlterAction::AddKey(k) => format!("ADD CONSTRAIN {}", key(k)),
        AlterAction::Realize { names, body: b } => {
            let names = match names {
                RealizeNames::All => "*".to_string(),
                RealizeNames::List(ns) => ns.join(", "),
            };
            let b = match b {
                RealizeBody::Stored => "STORED".to_string(),
                RealizeBody::Expr(e) => expr(e),
                RealizeBody::Block(st) => block(st, 1),
            };
            format!("REALIZE {names} AS {b}")
        }
    }
}

/// Canonical text of one command, without the trailing `;`.
pub fn command(c: &Command) -> String {
    match c {
        Command::DescribeTuple { name, attrs } => {
            format!("DESCRIBE TUPLE {name} {{{}}}", attrs.iter().map(|(a, t)| format!("{a} {t}")).collect::<Vec<_>>().join("; "))
        }
        Command::CreateClass { name, parents, components, keys: ks } => {
            let mut s = format!("CREATE CLASS {name}");
            if !parents.is_empty() {
                let _ = write!(s, " EXTENDED {}", parents.join(", "));
            }
            s.push_str(" {\n");
            for c in components {
                let _ = writeln!(s, "  {};", component(c));
            }
            s.push('}');
            s + &keys(ks)
        }
        Command::AlterClass { name, actions } => {
            let mut s = format!("ALTER CLASS {name}");
            for a in actions {
                let _ = write!(s, "\n  {}", action(a));
            }
            s
        }
        Command::Drop(n) => format!("DROP {n}"),
        Command::CreateGlobal { name, ty, keys: ks, realize } => {
            let r = match realize {
                GlobalRealize::Stored => "STORED".to_string(),
                GlobalRealize::Expr(e) => expr(e),
            };
            format!("CREATE {name} AS {}{} REALIZE AS {r}", type_expr(ty), keys(ks))
        }
        Command::New { ty, args } => format!("NEW {ty}({})", list(args, expr)),
        Command::Destroy(e) => format!("DESTROY {}", expr(e)),
        Command::Execute(e) => format!("EXECUTE {}", expr(e)),
        Command::Insert { target, value } => format!("INSERT {} INTO {}", expr(value), base(target)),
        Command::Delete { target, cond } => format!("DELETE FROM {}{}", base(target), where_clause(cond)),
        Command::Update { target, sets, cond } => {
            format!("UPDATE {} SET {}{}", base(target), sets_clause(sets), where_clause(cond))
        }
        Command::Assign { target, value } => format!("{} := {}", expr(target), expr(value)),
        Command::Query(e) => expr(e),
        Command::If { cond, then, els } => {
            let mut s = format!("IF {} THEN {}", expr(cond), command(then));
            if let Some(e) = els {
                let _ = write!(s, " ELSE {}", command(e));
            }
            s
        }
        Command::Begin => "BEGIN TRANSACTION".into(),
        Command::Commit => "COMMIT".into(),
        Command::Rollback => "ROLLBACK".into(),
    }
}

/// Canonical text of a script.
pub fn script(cmds: &[Command]) -> String {
    cmds.iter().map(|c| command(c) + ";\n").collect()
}
