use std::collections::HashMap;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use crate::error::{Error, Result};
use crate::relalg::{AggFunc, ArithOp, CmpOp, KeyKind};

const MAX_DEPTH: usize = 160;
const FUEL: u64 = 5_000_000;
const STACK_BYTES: usize = 256 << 20;

/// Words that cannot be used as plain names inside expressions.
const RESERVED: &[&str] = &[
    "WHERE", "UNION", "MINUS", "INTERSECT", "INTERSEPT", "TIMES", "JOIN", "AND", "OR", "NOT", "IS",
    "OF", "NULL", "TRUE", "FALSE", "EXIST", "EXISTS", "SUMMARIZE", "BY", "ADD", "AS", "SELECT",
    "FROM", "EXPAND", "RENAME", "REPLACE", "THEN", "ELSE", "WHILE", "DO", "END", "BEGIN", "IF",
    "RETURN", "INTO", "SET", "CONSTRAIN", "THIS", "REALIZE", "VALUE", "VALUES",
];

/// Expressions that can only denote a scalar, so `<` after them is a comparison.
fn scalar_form(e: &Expr) -> bool {
    matches!(
        e,
        Expr::Lit(_) | Expr::Binary(..) | Expr::Neg(_) | Expr::Not(_) | Expr::IsNull(_) | Expr::IsType { .. } | Expr::Exist(_)
    )
}

pub fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// Runs `f` on a thread whose stack fits the deepest accepted nesting.
fn on_parser_stack<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(STACK_BYTES)
            .spawn_scoped(s, f)
            .map_err(|e| Error::Io(e.to_string()))?
            .join()
            .unwrap_or_else(|p| std::panic::resume_unwind(p))
    })
}

/// Parses a whole script of `;`-terminated commands.
pub fn parse_script(src: &str) -> Result<Vec<SpannedCommand>> {
    on_parser_stack(|| script(src))
}

fn script(src: &str) -> Result<Vec<SpannedCommand>> {
    let mut p = Parser::new(src)?;
    let mut out = Vec::new();
    loop {
        while p.eat(&Tok::Semi) {}
        if p.at(&Tok::Eof) {
            return Ok(out);
        }
        let span = p.span();
        let cmd = p.command()?;
        let needs_semi = !matches!(cmd, Command::Begin);
        out.push(SpannedCommand { span, cmd });
        if !p.eat(&Tok::Semi) && needs_semi && !p.at(&Tok::Eof) {
            return Err(p.error("expected `;` after command"));
        }
    }
}

/// Parses exactly one command; a trailing `;` is optional.
pub fn parse_command(src: &str) -> Result<Command> {
    on_parser_stack(|| command(src))
}

fn command(src: &str) -> Result<Command> {
    let mut p = Parser::new(src)?;
    let cmd = p.command()?;
    p.eat(&Tok::Semi);
    p.expect_eof()?;
    Ok(cmd)
}

pub fn parse_expr(src: &str) -> Result<Expr> {
    on_parser_stack(|| expression(src))
}

fn expression(src: &str) -> Result<Expr> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses a `BEGIN ... END` method body.
pub fn parse_body(src: &str) -> Result<Vec<Stmt>> {
    on_parser_stack(|| body(src))
}

fn body(src: &str) -> Result<Vec<Stmt>> {
    let mut p = Parser::new(src)?;
    p.expect_kw("BEGIN")?;
    let body = p.stmts_until(&["END"])?;
    p.expect_kw("END")?;
    p.eat(&Tok::Semi);
    p.expect_eof()?;
    Ok(body)
}

type OvMemo = HashMap<(usize, bool, bool), Option<(Vec<Expr>, usize)>>;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    no_gt: bool,
    /// Directly inside `<...>`, read `<` as a comparison rather than a nested retrieval.
    flat: bool,
    depth: usize,
    fuel: u64,
    ov_memo: OvMemo,
}

fn kind_of(word: &str) -> Option<KeyKind> {
    match word.to_ascii_uppercase().as_str() {
        "GLOBALKEY" | "GLOBAL" => Some(KeyKind::Global),
        "LOCALKEY" | "LOCAL" => Some(KeyKind::Local),
        "FOREIGNKEY" | "FOREIGN" => Some(KeyKind::Foreign),
        _ => None,
    }
}

fn agg_of(word: &str) -> Option<AggFunc> {
    match word.to_ascii_uppercase().as_str() {
        "SUM" => Some(AggFunc::Sum),
        "COUNT" => Some(AggFunc::Count),
        _ => None,
    }
}

impl Parser {
    fn new(src: &str) -> Result<Self> {
        Ok(Parser { toks: tokenize(src)?, pos: 0, no_gt: false, flat: false, depth: 0, fuel: FUEL, ov_memo: HashMap::new() })
    }

    fn tok(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn tok_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        let s = self.span();
        let found = match self.tok() {
            Tok::Eof => "end of input".to_string(),
            t => format!("{t:?}"),
        };
        Error::Syntax { line: s.line, col: s.col, message: format!("{}, found {found}", msg.into()) }
    }

    fn advance(&mut self) -> Result<Tok> {
        if self.fuel == 0 {
            return Err(self.error("input too complex"));
        }
        self.fuel -= 1;
        let t = self.tok().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        Ok(t)
    }

    fn at(&self, t: &Tok) -> bool {
        self.tok() == t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.pos = (self.pos + 1).min(self.toks.len() - 1);
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn expect_eof(&self) -> Result<()> {
        if self.at(&Tok::Eof) {
            Ok(())
        } else {
            Err(self.error("expected end of input"))
        }
    }

    fn is_kw_at(&self, k: usize, kw: &str) -> bool {
        matches!(self.tok_at(k), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn is_kw(&self, kw: &str) -> bool {
        self.is_kw_at(0, kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected {kw}")))
        }
    }

    /// A non-reserved identifier.
    fn name(&mut self, what: &str) -> Result<String> {
        match self.tok() {
            Tok::Ident(s) if !is_reserved(s) => {
                let s = s.clone();
                self.advance()?;
                Ok(s)
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    /// Any identifier, reserved words included (used after `.`).
    fn any_ident(&mut self, what: &str) -> Result<String> {
        match self.tok() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.advance()?;
                Ok(s)
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn path(&mut self) -> Result<Path> {
        let mut p = vec![self.name("attribute name")?];
        while self.at(&Tok::Dot) && matches!(self.tok_at(1), Tok::Ident(_)) {
            self.advance()?;
            p.push(self.any_ident("attribute name")?);
        }
        Ok(p)
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    // ---------------------------------------------------------------- commands

    fn command(&mut self) -> Result<Command> {
        self.enter()?;
        let r = self.command_inner();
        self.leave();
        r
    }

    fn command_inner(&mut self) -> Result<Command> {
        if self.eat_kw("DESCRIBE") {
            self.expect_kw("TUPLE")?;
            let name = self.name("tuple type name")?;
            self.eat(&Tok::Dot);
            self.expect(&Tok::LBrace, "`{`")?;
            let mut attrs = Vec::new();
            while !self.eat(&Tok::RBrace) {
                let a = self.name("attribute name")?;
                let t = self.name("scalar type")?;
                attrs.push((a, t));
                if !self.eat(&Tok::Semi) && !self.at(&Tok::RBrace) {
                    return Err(self.error("expected `;` or `}`"));
                }
            }
            return Ok(Command::DescribeTuple { name, attrs });
        }
        if self.eat_kw("CREATE") {
            if self.eat_kw("CLASS") {
                return self.create_class();
            }
            return self.create_global();
        }
        if self.eat_kw("ALTER") {
            self.expect_kw("CLASS")?;
            let name = self.name("class name")?;
            let mut actions = Vec::new();
            loop {
                if self.eat_kw("ADD") {
                    if self.is_kw("CONSTRAIN") || self.key_kind_ahead() {
                        self.eat_kw("CONSTRAIN");
                        for k in self.key_defs()? {
                            actions.push(AlterAction::AddKey(k));
                        }
                    } else {
                        actions.push(AlterAction::Add(self.component_decl()?));
                    }
                } else if self.eat_kw("DROP") {
                    actions.push(AlterAction::Drop(self.name("component name")?));
                } else if self.eat_kw("ALTER") {
                    actions.push(AlterAction::Alter(self.component_decl()?));
                } else if self.eat_kw("REALIZE") {
                    actions.push(self.realize()?);
                } else {
                    break;
                }
            }
            if actions.is_empty() {
                return Err(self.error("expected ADD, DROP, ALTER or REALIZE"));
            }
            return Ok(Command::AlterClass { name, actions });
        }
        if self.eat_kw("DROP") {
            if !self.eat_kw("CLASS") {
                self.eat_kw("TUPLE");
            }
            return Ok(Command::Drop(self.name("name")?));
        }
        if self.eat_kw("NEW") {
            let ty = self.name("class name")?;
            let args = if self.at(&Tok::LParen) { self.args()? } else { Vec::new() };
            return Ok(Command::New { ty, args });
        }
        if self.eat_kw("DESTROY") {
            return Ok(Command::Destroy(self.expr()?));
        }
        if self.eat_kw("EXECUTE") {
            let e = self.expr()?;
            if !matches!(e, Expr::Call { .. }) {
                return Err(self.error("EXECUTE expects a method invocation"));
            }
            return Ok(Command::Execute(e));
        }
        if self.is_kw("INSERT") {
            let (target, value) = self.insert_parts()?;
            return Ok(Command::Insert { target, value });
        }
        if self.is_kw("DELETE") {
            let (target, cond) = self.delete_parts()?;
            return Ok(Command::Delete { target, cond });
        }
        if self.is_kw("UPDATE") {
            let (target, sets, cond) = self.update_parts()?;
            return Ok(Command::Update { target, sets, cond });
        }
        if self.eat_kw("IF") {
            let cond = self.expr()?;
            self.expect_kw("THEN")?;
            let then = Box::new(self.command()?);
            if self.at(&Tok::Semi) && self.is_kw_at(1, "ELSE") {
                self.advance()?;
            }
            let els = if self.eat_kw("ELSE") { Some(Box::new(self.command()?)) } else { None };
            return Ok(Command::If { cond, then, els });
        }
        if self.is_kw("BEGIN") && self.is_kw_at(1, "TRANSACTION") {
            self.pos += 2;
            return Ok(Command::Begin);
        }
        if self.eat_kw("COMMIT") {
            self.eat_kw("TRANSACTION");
            return Ok(Command::Commit);
        }
        if self.eat_kw("ROLLBACK") {
            self.eat_kw("TRANSACTION");
            return Ok(Command::Rollback);
        }
        let e = self.expr()?;
        if self.eat(&Tok::Assign) {
            let value = self.expr()?;
            return Ok(Command::Assign { target: e, value });
        }
        Ok(Command::Query(e))
    }

    fn create_class(&mut self) -> Result<Command> {
        let name = self.name("class name")?;
        let mut parents = Vec::new();
        if self.eat_kw("EXTENDED") {
            parents.push(self.name("parent class name")?);
            while self.eat(&Tok::Comma) {
                parents.push(self.name("parent class name")?);
            }
        }
        self.expect(&Tok::LBrace, "`{`")?;
        let mut components = Vec::new();
        while !self.eat(&Tok::RBrace) {
            components.push(self.component_decl()?);
            if !self.eat(&Tok::Semi) && !self.at(&Tok::RBrace) {
                return Err(self.error("expected `;` or `}`"));
            }
        }
        let keys = if self.eat_kw("CONSTRAIN") { self.key_defs()? } else { Vec::new() };
        Ok(Command::CreateClass { name, parents, components, keys })
    }

    fn create_global(&mut self) -> Result<Command> {
        let name = self.name("variable name")?;
        self.eat_kw("AS");
        let ty = self.type_expr()?;
        let keys = if self.eat_kw("CONSTRAIN") { self.key_defs()? } else { Vec::new() };
        let realize = if self.eat_kw("REALIZE") {
            self.expect_kw("AS")?;
            if self.eat_kw("STORED") {
                GlobalRealize::Stored
            } else {
                GlobalRealize::Expr(self.expr()?)
            }
        } else {
            GlobalRealize::Stored
        };
        Ok(Command::CreateGlobal { name, ty, keys, realize })
    }

    fn type_expr(&mut self) -> Result<TypeExpr> {
        if self.eat_kw("SET") {
            self.expect_kw("OF")?;
            return Ok(TypeExpr::SetOf(self.name("element type")?));
        }
        Ok(TypeExpr::Named(self.name("type name")?))
    }

    fn component_decl(&mut self) -> Result<ComponentDecl> {
        let name = self.name("component name")?;
        let params = if self.eat(&Tok::LParen) {
            let mut ps = Vec::new();
            if !self.eat(&Tok::RParen) {
                loop {
                    let pname = self.name("parameter name")?;
                    self.eat_kw("AS");
                    let ty = self.type_expr()?;
                    ps.push(Param { name: pname, ty });
                    if self.eat(&Tok::RParen) {
                        break;
                    }
                    self.expect(&Tok::Comma, "`,` or `)`")?;
                }
            }
            Some(ps)
        } else {
            None
        };
        let ty = if self.is_kw("SET")
            || matches!(self.tok(), Tok::Ident(s) if !is_reserved(s) && !s.eq_ignore_ascii_case("DROP") && !s.eq_ignore_ascii_case("ALTER"))
        {
            Some(self.type_expr()?)
        } else {
            None
        };
        let keys = if self.eat_kw("CONSTRAIN") { self.key_defs()? } else { Vec::new() };
        Ok(ComponentDecl { name, params, ty, keys })
    }

    fn key_kind_ahead(&self) -> bool {
        matches!(self.tok(), Tok::Ident(s) if kind_of(s).is_some())
    }

    /// `GLOBALKEY`, `GLOBAL KEY`, `LOCALKEY`, ... with an optional separate `KEY`.
    fn key_kind(&mut self) -> Result<KeyKind> {
        let Tok::Ident(s) = self.tok().clone() else {
            return Err(self.error("expected key kind"));
        };
        let kind = kind_of(&s).ok_or_else(|| self.error("expected key kind"))?;
        self.advance()?;
        if !s.to_ascii_uppercase().ends_with("KEY") {
            self.expect_kw("KEY")?;
        }
        Ok(kind)
    }

    fn key_fields(&mut self) -> Result<Vec<Path>> {
        if self.eat(&Tok::LParen) {
            let mut fs = vec![self.path()?];
            while self.eat(&Tok::Comma) {
                fs.push(self.path()?);
            }
            self.expect(&Tok::RParen, "`)`")?;
            Ok(fs)
        } else {
            Ok(vec![self.path()?])
        }
    }

    fn key_defs(&mut self) -> Result<Vec<KeyDecl>> {
        let mut keys = Vec::new();
        loop {
            let k = if self.key_kind_ahead() {
                let kind = self.key_kind()?;
                let fields = self.key_fields()?;
                let target = if self.eat_kw("ON") { Some(self.path()?) } else { None };
                KeyDecl { kind, fields, target }
            } else {
                let fields = self.key_fields()?;
                self.expect_kw("AS")?;
                let kind = self.key_kind()?;
                let target = if self.eat_kw("ON") { Some(self.path()?) } else { None };
                KeyDecl { kind, fields, target }
            };
            if k.kind == KeyKind::Foreign && k.target.is_none() {
                return Err(self.error("FOREIGNKEY requires ON Type.field"));
            }
            keys.push(k);
            if self.eat(&Tok::Comma) || self.key_kind_ahead() {
                continue;
            }
            return Ok(keys);
        }
    }

    fn realize(&mut self) -> Result<AlterAction> {
        let names = if self.eat(&Tok::Star) {
            RealizeNames::All
        } else {
            let mut ns = Vec::new();
            loop {
                ns.push(self.name("component name")?);
                if self.at(&Tok::LParen) {
                    self.skip_balanced()?;
                }
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            RealizeNames::List(ns)
        };
        self.expect_kw("AS")?;
        let body = if self.eat_kw("STORED") {
            RealizeBody::Stored
        } else if self.eat_kw("BEGIN") {
            let stmts = self.stmts_until(&["END"])?;
            self.expect_kw("END")?;
            RealizeBody::Block(stmts)
        } else {
            RealizeBody::Expr(self.expr()?)
        };
        Ok(AlterAction::Realize { names, body })
    }

    fn skip_balanced(&mut self) -> Result<()> {
        let mut depth = 0usize;
        loop {
            match self.advance()? {
                Tok::LParen => depth += 1,
                Tok::RParen => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                Tok::Eof => return Err(self.error("unbalanced parentheses")),
                _ => {}
            }
        }
    }

    fn insert_parts(&mut self) -> Result<(Expr, Expr)> {
        self.expect_kw("INSERT")?;
        if self.eat_kw("INTO") {
            let target = self.postfix()?;
            if !self.eat_kw("VALUE") {
                self.expect_kw("VALUES")?;
            }
            let value = self.expr()?;
            Ok((target, value))
        } else {
            let value = self.expr()?;
            self.expect_kw("INTO")?;
            let target = self.postfix()?;
            Ok((target, value))
        }
    }

    fn delete_parts(&mut self) -> Result<(Expr, Option<Expr>)> {
        self.expect_kw("DELETE")?;
        self.expect_kw("FROM")?;
        let target = self.postfix()?;
        let cond = if self.eat_kw("WHERE") { Some(self.or_expr()?) } else { None };
        Ok((target, cond))
    }

    fn update_parts(&mut self) -> Result<(Expr, Vec<(Path, Expr)>, Option<Expr>)> {
        self.expect_kw("UPDATE")?;
        let target = self.postfix()?;
        self.expect_kw("SET")?;
        let sets = self.assignments()?;
        let cond = if self.eat_kw("WHERE") { Some(self.or_expr()?) } else { None };
        Ok((target, sets, cond))
    }

    fn assignments(&mut self) -> Result<Vec<(Path, Expr)>> {
        let paren = self.eat(&Tok::LParen);
        let saved = (std::mem::replace(&mut self.no_gt, false), std::mem::replace(&mut self.flat, false));
        let mut sets = Vec::new();
        loop {
            let p = self.path()?;
            self.expect(&Tok::Assign, "`:=`")?;
            let e = self.or_expr()?;
            sets.push((p, e));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        (self.no_gt, self.flat) = saved;
        if paren {
            self.expect(&Tok::RParen, "`)`")?;
        }
        Ok(sets)
    }

    // -------------------------------------------------------------- statements

    fn stmts_until(&mut self, stops: &[&str]) -> Result<Vec<Stmt>> {
        let mut out = Vec::new();
        loop {
            while self.eat(&Tok::Semi) {}
            if stops.iter().any(|k| self.is_kw(k)) {
                return Ok(out);
            }
            if self.at(&Tok::Eof) {
                return Err(self.error(format!("expected {}", stops.join(" or "))));
            }
            out.extend(self.stmt()?);
        }
    }

    fn end_simple(&mut self) -> Result<()> {
        if self.eat(&Tok::Semi) || self.is_kw("END") || self.is_kw("ELSE") || self.is_kw("WHILE") {
            Ok(())
        } else {
            Err(self.error("expected `;`"))
        }
    }

    /// One statement; blocks are flattened into their statement list.
    fn stmt(&mut self) -> Result<Vec<Stmt>> {
        self.enter()?;
        let r = self.stmt_inner();
        self.leave();
        r
    }

    fn stmt_inner(&mut self) -> Result<Vec<Stmt>> {
        if self.eat_kw("BEGIN") {
            let body = self.stmts_until(&["END"])?;
            self.expect_kw("END")?;
            self.eat(&Tok::Semi);
            return Ok(body);
        }
        if self.eat_kw("IF") {
            let cond = self.expr()?;
            self.expect_kw("THEN")?;
            let then = self.stmt()?;
            let els = if self.eat_kw("ELSE") { self.stmt()? } else { Vec::new() };
            return Ok(vec![Stmt::If { cond, then, els }]);
        }
        if self.eat_kw("DO") {
            let body = self.stmts_until(&["WHILE"])?;
            self.expect_kw("WHILE")?;
            let cond = self.expr()?;
            self.end_simple()?;
            return Ok(vec![Stmt::DoWhile { body, cond }]);
        }
        let s = if self.eat_kw("RETURN") {
            let e = if self.at(&Tok::Semi) || self.is_kw("END") || self.is_kw("ELSE") {
                None
            } else {
                Some(self.expr()?)
            };
            Stmt::Return(e)
        } else if self.is_kw("INSERT") {
            let (target, value) = self.insert_parts()?;
            Stmt::Insert { target, value }
        } else if self.is_kw("DELETE") {
            let (target, cond) = self.delete_parts()?;
            Stmt::Delete { target, cond }
        } else if self.is_kw("UPDATE") {
            let (target, sets, cond) = self.update_parts()?;
            Stmt::Update { target, sets, cond }
        } else if self.eat_kw("EXECUTE") {
            let e = self.expr()?;
            if !matches!(e, Expr::Call { .. }) {
                return Err(self.error("EXECUTE expects a method invocation"));
            }
            Stmt::Execute(e)
        } else if self.declaration_ahead() {
            let name = self.name("variable name")?;
            let ty = self.type_expr()?;
            Stmt::Declare { name, ty }
        } else {
            let e = self.expr()?;
            if self.eat(&Tok::Assign) {
                let value = self.expr()?;
                Stmt::Assign { target: e, value }
            } else if matches!(e, Expr::Call { .. }) {
                Stmt::Execute(e)
            } else {
                return Err(self.error("expected a statement"));
            }
        };
        self.end_simple()?;
        Ok(vec![s])
    }

    fn declaration_ahead(&self) -> bool {
        match (self.tok(), self.tok_at(1)) {
            (Tok::Ident(a), Tok::Ident(b)) if !is_reserved(a) => {
                b.eq_ignore_ascii_case("SET") || !is_reserved(b)
            }
            _ => false,
        }
    }

    // ------------------------------------------------------------- expressions

    pub(crate) fn expr(&mut self) -> Result<Expr> {
        self.enter()?;
        let r = self.set_expr();
        self.leave();
        r
    }

    fn set_op(&self) -> Option<SetOp> {
        let Tok::Ident(s) = self.tok() else { return None };
        Some(match s.to_ascii_uppercase().as_str() {
            "UNION" => SetOp::Union,
            "MINUS" => SetOp::Minus,
            "INTERSECT" | "INTERSEPT" => SetOp::Intersect,
            "TIMES" => SetOp::Times,
            "JOIN" => SetOp::Join,
            _ => return None,
        })
    }

    fn set_expr(&mut self) -> Result<Expr> {
        let mut e = self.where_expr()?;
        while let Some(op) = self.set_op() {
            self.advance()?;
            let r = self.where_expr()?;
            e = Expr::SetOp(op, Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn where_expr(&mut self) -> Result<Expr> {
        let mut e = self.or_expr()?;
        while self.eat_kw("WHERE") {
            let c = self.or_expr()?;
            e = Expr::Where(Box::new(e), Box::new(c));
        }
        Ok(e)
    }

    fn or_expr(&mut self) -> Result<Expr> {
        self.enter()?;
        let mut e = self.and_expr()?;
        while self.eat_kw("OR") {
            let r = self.and_expr()?;
            e = Expr::bin(BinOp::Or, e, r);
        }
        self.leave();
        Ok(e)
    }

    fn and_expr(&mut self) -> Result<Expr> {
        let mut e = self.not_expr()?;
        while self.eat_kw("AND") {
            let r = self.not_expr()?;
            e = Expr::bin(BinOp::And, e, r);
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> Result<Expr> {
        if self.is_kw("NOT") && !self.is_kw_at(1, "IS") {
            self.advance()?;
            self.enter()?;
            let e = self.not_expr();
            self.leave();
            return Ok(Expr::Not(Box::new(e?)));
        }
        self.cmp_expr()
    }

    fn cmp_op(&self) -> Option<CmpOp> {
        Some(match self.tok() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt if !self.no_gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return None,
        })
    }

    fn cmp_expr(&mut self) -> Result<Expr> {
        let e = self.add_expr()?;
        if let Some(op) = self.cmp_op() {
            self.advance()?;
            let r = self.add_expr()?;
            return Ok(Expr::bin(BinOp::Cmp(op), e, r));
        }
        if self.is_kw("NOT") && self.is_kw_at(1, "IS") && self.is_kw_at(2, "NULL") {
            self.pos += 3;
            return Ok(Expr::Not(Box::new(Expr::IsNull(Box::new(e)))));
        }
        if self.eat_kw("IS") {
            if self.eat_kw("NOT") {
                self.expect_kw("NULL")?;
                return Ok(Expr::Not(Box::new(Expr::IsNull(Box::new(e)))));
            }
            if self.eat_kw("NULL") {
                return Ok(Expr::IsNull(Box::new(e)));
            }
            let ty = self.name("type name")?;
            return Ok(Expr::IsType { expr: Box::new(e), ty, exact: false });
        }
        if self.eat_kw("OF") {
            let ty = self.name("type name")?;
            return Ok(Expr::IsType { expr: Box::new(e), ty, exact: true });
        }
        Ok(e)
    }

    fn add_expr(&mut self) -> Result<Expr> {
        let mut e = self.mul_expr()?;
        loop {
            let op = match self.tok() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(e),
            };
            self.advance()?;
            let r = self.mul_expr()?;
            e = Expr::bin(BinOp::Arith(op), e, r);
        }
    }

    fn mul_expr(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            let op = match self.tok() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(e),
            };
            self.advance()?;
            let r = self.unary()?;
            e = Expr::bin(BinOp::Arith(op), e, r);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Minus) {
            match self.tok().clone() {
                Tok::Int(v) => {
                    self.advance()?;
                    return Ok(Expr::Lit(Literal::Int((-v) as i64)));
                }
                Tok::Float(x) => {
                    self.advance()?;
                    return Ok(Expr::Lit(Literal::Float(-x)));
                }
                _ => {}
            }
            self.enter()?;
            let e = self.unary();
            self.leave();
            return Ok(Expr::Neg(Box::new(e?)));
        }
        self.postfix()
    }

    fn primary_start(&self) -> bool {
        match self.tok() {
            Tok::Ident(s) => {
                !is_reserved(s)
                    || ["NOT", "NULL", "TRUE", "FALSE", "EXIST", "EXISTS", "SUMMARIZE", "SELECT", "THIS"]
                        .iter()
                        .any(|k| k.eq_ignore_ascii_case(s))
            }
            Tok::Int(_)
            | Tok::Float(_)
            | Tok::Str(_)
            | Tok::Date(_)
            | Tok::LParen
            | Tok::LBrace
            | Tok::Minus => true,
            _ => false,
        }
    }

    fn with_gt<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let saved = (std::mem::replace(&mut self.no_gt, false), std::mem::replace(&mut self.flat, false));
        let r = f(self);
        (self.no_gt, self.flat) = saved;
        r
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        self.expect(&Tok::LParen, "`(`")?;
        self.with_gt(|p| {
            let mut args = Vec::new();
            if p.eat(&Tok::RParen) {
                return Ok(args);
            }
            loop {
                args.push(p.expr()?);
                if p.eat(&Tok::RParen) {
                    return Ok(args);
                }
                p.expect(&Tok::Comma, "`,` or `)`")?;
            }
        })
    }

    fn paths_in_brackets(&mut self) -> Result<Vec<Path>> {
        let mut ps = Vec::new();
        if self.at(&Tok::RBracket) {
            return Ok(ps);
        }
        loop {
            ps.push(self.path()?);
            if !self.eat(&Tok::Comma) {
                return Ok(ps);
            }
        }
    }

    /// Attempts `<cond, ...>` at the current position.
    fn try_ov(&mut self) -> Result<Option<Vec<Expr>>> {
        let start = self.pos;
        let key = (start, self.no_gt, self.flat);
        if let Some(hit) = self.ov_memo.get(&key).cloned() {
            return Ok(hit.map(|(conds, end)| {
                self.pos = end;
                conds
            }));
        }
        if self.at(&Tok::Ne) {
            self.advance()?;
            let ok = !self.primary_start() && !self.at(&Tok::Lt);
            let res = ok.then(Vec::new);
            if !ok {
                self.pos = start;
            }
            self.ov_memo.insert(key, res.clone().map(|c| (c, self.pos)));
            return Ok(res);
        }
        self.advance()?;
        let after = self.pos;
        let saved = (self.no_gt, self.flat);
        let mut res = None;
        for flat in [false, true] {
            self.pos = after;
            (self.no_gt, self.flat) = (true, flat);
            let attempt = (|| -> Result<Option<Vec<Expr>>> {
                let mut conds = vec![self.or_expr()?];
                while self.eat(&Tok::Comma) {
                    conds.push(self.or_expr()?);
                }
                if !self.eat(&Tok::Gt) {
                    return Ok(None);
                }
                Ok(Some(conds))
            })();
            match attempt {
                Ok(Some(conds)) if !self.primary_start() => {
                    res = Some(conds);
                    break;
                }
                Err(e @ Error::Syntax { .. }) if e.to_string().contains("too") => {
                    (self.no_gt, self.flat) = saved;
                    return Err(e);
                }
                _ => {}
            }
        }
        (self.no_gt, self.flat) = saved;
        if res.is_none() {
            self.pos = start;
        }
        self.ov_memo.insert(key, res.clone().map(|c| (c, self.pos)));
        Ok(res)
    }

    fn postfix(&mut self) -> Result<Expr> {
        self.enter()?;
        let r = self.postfix_inner();
        self.leave();
        r
    }

    fn postfix_inner(&mut self) -> Result<Expr> {
        let mut e = self.primary()?;
        loop {
            match self.tok() {
                Tok::Dot => {
                    self.advance()?;
                    let name = self.any_ident("member name")?;
                    if self.at(&Tok::LParen) {
                        let args = self.args()?;
                        e = Expr::Call { target: Some(Box::new(e)), name, args };
                    } else {
                        e = Expr::Member(Box::new(e), name);
                    }
                }
                Tok::LBracket => {
                    self.advance()?;
                    let drop = self.eat(&Tok::Bang);
                    let names = self.paths_in_brackets()?;
                    self.expect(&Tok::RBracket, "`]`")?;
                    e = Expr::Project { expr: Box::new(e), names, drop };
                }
                Tok::Lt | Tok::Ne if (self.no_gt && self.flat) || scalar_form(&e) => return Ok(e),
                Tok::Lt | Tok::Ne => match self.try_ov()? {
                    Some(conds) => e = Expr::Ov(Box::new(e), conds),
                    None => return Ok(e),
                },
                Tok::Ident(s) if s.eq_ignore_ascii_case("EXPAND") => {
                    self.advance()?;
                    let p = self.path()?;
                    e = Expr::Expand(Box::new(e), p);
                }
                Tok::Ident(s) if s.eq_ignore_ascii_case("RENAME") => {
                    self.advance()?;
                    let paren = self.eat(&Tok::LParen);
                    let mut pairs = Vec::new();
                    loop {
                        let from = self.path()?;
                        self.expect_kw("AS")?;
                        let to = self.path()?;
                        pairs.push((from, to));
                        if !(paren && self.eat(&Tok::Comma)) {
                            break;
                        }
                    }
                    if paren {
                        self.expect(&Tok::RParen, "`)`")?;
                    }
                    e = Expr::Rename { expr: Box::new(e), pairs };
                }
                Tok::Ident(s) if s.eq_ignore_ascii_case("REPLACE") => {
                    self.advance()?;
                    if !self.at(&Tok::LParen) {
                        return Err(self.error("expected `(` after REPLACE"));
                    }
                    let sets = self.assignments()?;
                    e = Expr::Replace { expr: Box::new(e), sets };
                }
                _ => return Ok(e),
            }
        }
    }

    fn agg_item(&mut self) -> Result<AggItem> {
        let Tok::Ident(s) = self.tok().clone() else {
            return Err(self.error("expected Sum or Count"));
        };
        let func = agg_of(&s).ok_or_else(|| self.error("expected Sum or Count"))?;
        self.advance()?;
        self.expect(&Tok::LParen, "`(`")?;
        let arg = self.with_gt(|p| p.expr())?;
        self.expect(&Tok::RParen, "`)`")?;
        self.expect_kw("AS")?;
        let name = self.path()?;
        Ok(AggItem { func, arg, name })
    }

    fn agg_ahead(&self, k: usize) -> bool {
        matches!(self.tok_at(k), Tok::Ident(s) if agg_of(s).is_some()) && self.tok_at(k + 1) == &Tok::LParen
    }

    fn primary(&mut self) -> Result<Expr> {
        let tok = self.tok().clone();
        match tok {
            Tok::Int(v) => {
                self.advance()?;
                if v > i64::MAX as i128 {
                    return Err(self.error("integer literal out of range"));
                }
                Ok(Expr::Lit(Literal::Int(v as i64)))
            }
            Tok::Float(x) => {
                self.advance()?;
                Ok(Expr::Lit(Literal::Float(x)))
            }
            Tok::Str(s) => {
                self.advance()?;
                Ok(Expr::Lit(Literal::Str(s)))
            }
            Tok::Date(d) => {
                self.advance()?;
                Ok(Expr::Lit(Literal::Date(d)))
            }
            Tok::LParen => {
                self.advance()?;
                let e = self.with_gt(|p| p.expr())?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::LBrace => {
                self.advance()?;
                self.with_gt(|p| {
                    let mut fields = Vec::new();
                    if p.eat(&Tok::RBrace) {
                        return Ok(Expr::Tuple(fields));
                    }
                    loop {
                        let n = p.name("field name")?;
                        p.expect(&Tok::Colon, "`:`")?;
                        fields.push((n, p.or_expr()?));
                        if p.eat(&Tok::RBrace) {
                            return Ok(Expr::Tuple(fields));
                        }
                        p.expect(&Tok::Comma, "`,` or `}`")?;
                    }
                })
            }
            Tok::Ident(s) => {
                let up = s.to_ascii_uppercase();
                match up.as_str() {
                    "TRUE" | "FALSE" => {
                        self.advance()?;
                        Ok(Expr::Lit(Literal::Bool(up == "TRUE")))
                    }
                    "NULL" => {
                        self.advance()?;
                        Ok(Expr::Lit(Literal::Null))
                    }
                    "THIS" => {
                        self.advance()?;
                        Ok(Expr::This)
                    }
                    "EXIST" | "EXISTS" => {
                        self.advance()?;
                        self.expect(&Tok::LParen, "`(`")?;
                        let e = self.with_gt(|p| p.expr())?;
                        self.expect(&Tok::RParen, "`)`")?;
                        Ok(Expr::Exist(Box::new(e)))
                    }
                    "SUMMARIZE" => {
                        self.advance()?;
                        let src = self.postfix()?;
                        let mut by = Vec::new();
                        if self.eat_kw("BY") {
                            loop {
                                by.push(self.path()?);
                                if !self.eat(&Tok::Comma) || self.is_kw("ADD") {
                                    break;
                                }
                            }
                        }
                        self.expect_kw("ADD")?;
                        let mut adds = vec![self.agg_item()?];
                        while self.at(&Tok::Comma) && self.agg_ahead(1) {
                            self.advance()?;
                            adds.push(self.agg_item()?);
                        }
                        Ok(Expr::Summarize { expr: Box::new(src), by, adds })
                    }
                    "SELECT" => {
                        self.advance()?;
                        let Tok::Ident(a) = self.tok().clone() else {
                            return Err(self.error("expected Sum or Count"));
                        };
                        let func = agg_of(&a).ok_or_else(|| self.error("expected Sum or Count"))?;
                        self.advance()?;
                        self.expect(&Tok::LParen, "`(`")?;
                        let arg = self.with_gt(|p| p.expr())?;
                        self.expect(&Tok::RParen, "`)`")?;
                        self.expect_kw("FROM")?;
                        let src = self.postfix()?;
                        let name = arg.as_path().unwrap_or_else(|| vec!["value".to_string()]);
                        Ok(Expr::Summarize {
                            expr: Box::new(src),
                            by: Vec::new(),
                            adds: vec![AggItem { func, arg, name }],
                        })
                    }
                    _ if s == "Object" && self.tok_at(1) == &Tok::LParen => {
                        self.advance()?;
                        self.advance()?;
                        let e = self.with_gt(|p| p.expr())?;
                        self.expect(&Tok::RParen, "`)`")?;
                        Ok(Expr::Object(Box::new(e)))
                    }
                    _ if is_reserved(&s) => Err(self.error("expected an expression")),
                    _ => {
                        self.advance()?;
                        if self.at(&Tok::LParen) {
                            let args = self.args()?;
                            Ok(Expr::Call { target: None, name: s, args })
                        } else {
                            Ok(Expr::Name(s))
                        }
                    }
                }
            }
            _ => Err(self.error("expected an expression")),
        }
    }
}
