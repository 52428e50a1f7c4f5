//! Fixtures, generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use overrel::relalg::{ArithOp, AttrName, CmpOp, Oid, Relation, RowExpr, Scheme, Tuple, Value};
use overrel::storage::{Database, State};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn db(src: &str) -> Database {
    let mut db = Database::new();
    if let Err(e) = db.run_script(src) {
        panic!("fixture script failed: {e}");
    }
    db
}

pub fn run(db: &mut Database, src: &str) {
    if let Err(e) = db.run_script(src) {
        panic!("script failed: {e}\n{src}");
    }
}

pub fn tuples(r: &Relation) -> BTreeSet<Tuple> {
    r.tuples().clone()
}

pub fn names(r: &Relation) -> Vec<String> {
    r.scheme().names().map(ToString::to_string).collect()
}

/// `(r WHERE OID = o)[!OID]`
pub fn at(r: &Relation, o: Oid) -> Relation {
    let cond = RowExpr::eq(RowExpr::attr(AttrName::oid()), RowExpr::lit(o));
    r.select_where(&cond).unwrap().project_drop(&[AttrName::oid()]).unwrap()
}

pub fn oids(db: &Database, ty: &str) -> Vec<Oid> {
    db.state.oids.members(&db.state.types, ty)
}

pub fn int(v: Option<i64>) -> Value {
    v.map_or(Value::Undefined, Value::Int)
}

/// Replaces the rows of a stored set component for the listed objects.
pub fn write_set(db: &mut Database, ty: &str, comp: &str, rows: &[(Oid, Vec<Value>)]) {
    let scheme = db.state.var_scheme(&(ty.to_string(), comp.to_string())).unwrap().without_keys();
    let group: BTreeSet<Oid> = rows.iter().map(|(o, _)| *o).collect();
    let tuples = rows.iter().map(|(o, vals)| {
        let mut t = vec![Value::Oid(*o)];
        t.extend(vals.iter().cloned());
        t
    });
    let rel = Relation::from_tuples(scheme, tuples).unwrap();
    db.state.write(ty, comp, &group, &rel).unwrap();
}

/// Sets a stored scalar component of one object.
pub fn write_scalar(db: &mut Database, ty: &str, comp: &str, o: Oid, v: Value) {
    let owner = db.state.types.component(ty, comp).unwrap().owner;
    let spec = db.state.types.component(ty, comp).unwrap().spec;
    let vt = spec.value_type().unwrap().clone();
    let mut attrs = vec![overrel::relalg::Attr::new(AttrName::oid(), overrel::relalg::ScalarType::Ref(ty.into()))];
    attrs.extend(db.state.types.value_attrs(comp, &vt).unwrap());
    let rel = Relation::from_tuples(Scheme::new(attrs).unwrap(), [vec![Value::Oid(o), v]]).unwrap();
    db.state.write(&owner, comp, &[o].into(), &rel).unwrap();
}

// ---------------------------------------------------------------------------
// Integer expressions and conditions with a text form, a kernel form and an
// independent evaluator.

#[derive(Debug, Clone, PartialEq)]
pub enum IntE {
    Lit(i64),
    Var(String),
    Add(Box<IntE>, Box<IntE>),
    Sub(Box<IntE>, Box<IntE>),
    Mul(Box<IntE>, Box<IntE>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Cmp(CmpOp, IntE, IntE),
    IsNull(String),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Not(Box<Cond>),
}

fn cmp_text(op: CmpOp) -> &'static str {
    op.symbol()
}

impl IntE {
    pub fn text(&self) -> String {
        match self {
            IntE::Lit(i) if *i < 0 => format!("(0 - {})", -i),
            IntE::Lit(i) => i.to_string(),
            IntE::Var(v) => v.clone(),
            IntE::Add(a, b) => format!("({} + {})", a.text(), b.text()),
            IntE::Sub(a, b) => format!("({} - {})", a.text(), b.text()),
            IntE::Mul(a, b) => format!("({} * {})", a.text(), b.text()),
        }
    }

    pub fn row(&self) -> RowExpr {
        match self {
            IntE::Lit(i) => RowExpr::lit(*i),
            IntE::Var(v) => RowExpr::attr(v.as_str()),
            IntE::Add(a, b) => RowExpr::arith(ArithOp::Add, a.row(), b.row()),
            IntE::Sub(a, b) => RowExpr::arith(ArithOp::Sub, a.row(), b.row()),
            IntE::Mul(a, b) => RowExpr::arith(ArithOp::Mul, a.row(), b.row()),
        }
    }

    pub fn eval(&self, env: &BTreeMap<String, Value>) -> Option<i64> {
        match self {
            IntE::Lit(i) => Some(*i),
            IntE::Var(v) => match env.get(v) {
                Some(Value::Int(i)) => Some(*i),
                Some(Value::Undefined) => None,
                other => panic!("{v} bound to {other:?}"),
            },
            IntE::Add(a, b) => Some(a.eval(env)? + b.eval(env)?),
            IntE::Sub(a, b) => Some(a.eval(env)? - b.eval(env)?),
            IntE::Mul(a, b) => Some(a.eval(env)? * b.eval(env)?),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            IntE::Lit(_) | IntE::Var(_) => 1,
            IntE::Add(a, b) | IntE::Sub(a, b) | IntE::Mul(a, b) => 1 + a.size() + b.size(),
        }
    }
}

impl Cond {
    pub fn text(&self) -> String {
        match self {
            Cond::Cmp(op, a, b) => format!("{} {} {}", a.text(), cmp_text(*op), b.text()),
            Cond::IsNull(v) => format!("{v} IS NULL"),
            Cond::And(a, b) => format!("({} AND {})", a.text(), b.text()),
            Cond::Or(a, b) => format!("({} OR {})", a.text(), b.text()),
            Cond::Not(a) => format!("NOT ({})", a.text()),
        }
    }

    pub fn row(&self) -> RowExpr {
        match self {
            Cond::Cmp(op, a, b) => RowExpr::cmp(*op, a.row(), b.row()),
            Cond::IsNull(v) => RowExpr::IsNull(Box::new(RowExpr::attr(v.as_str()))),
            Cond::And(a, b) => RowExpr::and(a.row(), b.row()),
            Cond::Or(a, b) => RowExpr::or(a.row(), b.row()),
            Cond::Not(a) => RowExpr::not(a.row()),
        }
    }

    /// Two-valued: a comparison with an undefined operand is false.
    pub fn eval(&self, env: &BTreeMap<String, Value>) -> bool {
        match self {
            Cond::Cmp(op, a, b) => match (a.eval(env), b.eval(env)) {
                (Some(x), Some(y)) => match op {
                    CmpOp::Eq => x == y,
                    CmpOp::Ne => x != y,
                    CmpOp::Lt => x < y,
                    CmpOp::Le => x <= y,
                    CmpOp::Gt => x > y,
                    CmpOp::Ge => x >= y,
                },
                _ => false,
            },
            Cond::IsNull(v) => env.get(v).is_some_and(Value::is_undefined),
            Cond::And(a, b) => a.eval(env) && b.eval(env),
            Cond::Or(a, b) => a.eval(env) || b.eval(env),
            Cond::Not(a) => !a.eval(env),
        }
    }
}

pub const CMPS: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

pub fn gen_int(rng: &mut StdRng, vars: &[&str], depth: u32) -> IntE {
    if depth == 0 || rng.gen_bool(0.6) {
        if vars.is_empty() || rng.gen_bool(0.35) {
            IntE::Lit(rng.gen_range(-1..=4))
        } else {
            IntE::Var(vars.choose(rng).unwrap().to_string())
        }
    } else {
        let a = Box::new(gen_int(rng, vars, depth - 1));
        let b = Box::new(gen_int(rng, vars, depth - 1));
        match rng.gen_range(0..5) {
            0 | 1 => IntE::Add(a, b),
            2 | 3 => IntE::Sub(a, b),
            _ => IntE::Mul(a, Box::new(IntE::Lit(rng.gen_range(0..=2)))),
        }
    }
}

pub fn gen_cond(rng: &mut StdRng, vars: &[&str], depth: u32) -> Cond {
    if depth == 0 || rng.gen_bool(0.55) {
        if rng.gen_bool(0.1) {
            return Cond::IsNull(vars.choose(rng).unwrap().to_string());
        }
        let a = IntE::Var(vars.choose(rng).unwrap().to_string());
        let a = if rng.gen_bool(0.3) { IntE::Add(Box::new(a), Box::new(IntE::Lit(rng.gen_range(0..=2)))) } else { a };
        Cond::Cmp(*CMPS.choose(rng).unwrap(), a, gen_int(rng, vars, 1))
    } else {
        let a = Box::new(gen_cond(rng, vars, depth - 1));
        match rng.gen_range(0..5) {
            0 | 1 => Cond::And(a, Box::new(gen_cond(rng, vars, depth - 1))),
            2 | 3 => Cond::Or(a, Box::new(gen_cond(rng, vars, depth - 1))),
            _ => Cond::Not(a),
        }
    }
}

pub fn maybe_int(rng: &mut StdRng, lo: i64, hi: i64, null: f64) -> Value {
    if rng.gen_bool(null) {
        Value::Undefined
    } else {
        Value::Int(rng.gen_range(lo..=hi))
    }
}

/// Binds the attributes of `t` by their display names.
pub fn env_of(scheme: &Scheme, t: &[Value]) -> BTreeMap<String, Value> {
    scheme.names().map(ToString::to_string).zip(t.iter().cloned()).collect()
}

// ---------------------------------------------------------------------------
// Random method bodies over `C { n INTEGER; s SET OF P; t SET OF P }` with
// `P { k INTEGER; v INTEGER }`. Every statement touches only the receiving
// object's own components, so effects are independent across objects.

pub const BODY_SCHEMA: &str = "
DESCRIBE TUPLE P { k INTEGER; v INTEGER; };
CREATE CLASS C { n INTEGER; s SET OF P; t SET OF P; m(x INTEGER) INTEGER; };
ALTER CLASS C REALIZE n, s, t AS STORED;
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetC {
    S,
    T,
}

impl SetC {
    pub fn name(self) -> &'static str {
        match self {
            SetC::S => "s",
            SetC::T => "t",
        }
    }

    fn other(self) -> SetC {
        match self {
            SetC::S => SetC::T,
            SetC::T => SetC::S,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Test {
    Cond(Cond),
    Exist(SetC, Cond),
    Empty(SetC),
}

impl Test {
    fn text(&self) -> String {
        match self {
            Test::Cond(c) => c.text(),
            Test::Exist(s, c) => format!("EXIST ({} WHERE {})", s.name(), c.text()),
            Test::Empty(s) => format!("NOT EXIST ({})", s.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetE {
    Union(SetC, SetC),
    Minus(SetC, SetC),
    Where(SetC, Cond),
}

#[derive(Debug, Clone, PartialEq)]
pub enum G {
    SetN(IntE),
    Insert(SetC, IntE, IntE),
    Delete(SetC, Cond),
    Update(SetC, IntE, Cond),
    Assign(SetC, SetE),
    If(Test, Vec<G>, Vec<G>),
    Loop(u8, Vec<G>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ret {
    None,
    N,
    Expr(IntE),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjInit {
    pub n: Option<i64>,
    pub s: Vec<(i64, i64)>,
    pub t: Vec<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub objs: Vec<ObjInit>,
    pub body: Vec<G>,
    pub ret: Ret,
    pub arg: i64,
}

fn stmts_text(out: &mut String, body: &[G], pad: usize) {
    for g in body {
        stmt_text(out, g, pad);
    }
}

fn stmt_text(out: &mut String, g: &G, pad: usize) {
    let ind = "  ".repeat(pad);
    match g {
        G::SetN(e) => {
            let _ = writeln!(out, "{ind}n := {};", e.text());
        }
        G::Insert(s, k, v) => {
            let _ = writeln!(out, "{ind}INSERT {{k: {}, v: {}}} INTO {};", k.text(), v.text(), s.name());
        }
        G::Delete(s, c) => {
            let _ = writeln!(out, "{ind}DELETE FROM {} WHERE {};", s.name(), c.text());
        }
        G::Update(s, e, c) => {
            let _ = writeln!(out, "{ind}UPDATE {} SET (v := {}) WHERE {};", s.name(), e.text(), c.text());
        }
        G::Assign(s, e) => {
            let rhs = match e {
                SetE::Union(a, b) => format!("{} UNION {}", a.name(), b.name()),
                SetE::Minus(a, b) => format!("{} MINUS {}", a.name(), b.name()),
                SetE::Where(a, c) => format!("{} WHERE {}", a.name(), c.text()),
            };
            let _ = writeln!(out, "{ind}{} := {rhs};", s.name());
        }
        G::If(t, th, el) => {
            let _ = writeln!(out, "{ind}IF {} THEN BEGIN", t.text());
            stmts_text(out, th, pad + 1);
            if el.is_empty() {
                let _ = writeln!(out, "{ind}END;");
            } else {
                let _ = writeln!(out, "{ind}END ELSE BEGIN");
                stmts_text(out, el, pad + 1);
                let _ = writeln!(out, "{ind}END;");
            }
        }
        G::Loop(count, body) => {
            let _ = writeln!(out, "{ind}i := 0;");
            let _ = writeln!(out, "{ind}DO");
            stmts_text(out, body, pad + 1);
            let _ = writeln!(out, "{ind}  i := i + 1;");
            let _ = writeln!(out, "{ind}WHILE i < {count};");
        }
    }
}

impl Case {
    pub fn body_text(&self) -> String {
        let mut out = String::from("BEGIN\n  i INTEGER;\n");
        stmts_text(&mut out, &self.body, 1);
        match &self.ret {
            Ret::None => {}
            Ret::N => out.push_str("  RETURN n;\n"),
            Ret::Expr(e) => {
                let _ = writeln!(out, "  RETURN {};", e.text());
            }
        }
        out.push_str("END");
        out
    }

    /// A self-contained script reproducing the case.
    pub fn script(&self, call: &str) -> String {
        let mut s = String::from(BODY_SCHEMA);
        let _ = writeln!(s, "ALTER CLASS C REALIZE m AS {};", self.body_text());
        for (i, o) in self.objs.iter().enumerate() {
            let _ = writeln!(s, "NEW C; // object {}", i + 1);
            let _ = writeln!(s, "//   n = {:?}, s = {:?}, t = {:?}", o.n, o.s, o.t);
        }
        let _ = writeln!(s, "{call};");
        s
    }

    pub fn statements(&self) -> usize {
        fn count(b: &[G]) -> usize {
            b.iter()
                .map(|g| match g {
                    G::If(_, t, e) => 1 + count(t) + count(e),
                    G::Loop(_, b) => 1 + count(b),
                    _ => 1,
                })
                .sum()
        }
        count(&self.body)
    }

    /// A database holding the schema, this body and the objects.
    pub fn build(&self, base: &Database) -> Database {
        let mut db = base.clone();
        run(&mut db, &format!("ALTER CLASS C REALIZE m AS {};", self.body_text()));
        for _ in &self.objs {
            run(&mut db, "NEW C;");
        }
        let made = oids(&db, "C");
        let pair = |r: &(i64, i64)| vec![Value::Int(r.0), Value::Int(r.1)];
        let s: Vec<_> = made.iter().zip(&self.objs).flat_map(|(o, i)| i.s.iter().map(|r| (*o, pair(r)))).collect();
        let t: Vec<_> = made.iter().zip(&self.objs).flat_map(|(o, i)| i.t.iter().map(|r| (*o, pair(r)))).collect();
        write_set(&mut db, "C", "s", &s);
        write_set(&mut db, "C", "t", &t);
        for (o, i) in made.iter().zip(&self.objs) {
            write_scalar(&mut db, "C", "n", *o, int(i.n));
        }
        db.enforce().unwrap();
        db
    }
}

pub struct BodyGen {
    pub max_stmts: usize,
    pub max_objs: usize,
}

impl BodyGen {
    fn int(&self, rng: &mut StdRng, in_loop: bool, row: bool) -> IntE {
        let mut vars = vec!["n", "x"];
        if in_loop {
            vars.push("i");
        }
        if row {
            vars.extend(["k", "v"]);
        }
        gen_int(rng, &vars, 2)
    }

    fn row_cond(&self, rng: &mut StdRng, in_loop: bool) -> Cond {
        let mut vars = vec!["k", "v", "n"];
        if in_loop {
            vars.push("i");
        }
        gen_cond(rng, &vars, 2)
    }

    fn set(rng: &mut StdRng) -> SetC {
        if rng.gen_bool(0.5) {
            SetC::S
        } else {
            SetC::T
        }
    }

    fn stmt(&self, rng: &mut StdRng, budget: &mut usize, in_loop: bool, nested: bool) -> G {
        *budget -= 1;
        let s = Self::set(rng);
        let pick = if nested || *budget == 0 { rng.gen_range(0..5) } else { rng.gen_range(0..7) };
        match pick {
            0 => G::SetN(self.int(rng, in_loop, false)),
            1 => G::Insert(s, self.int(rng, in_loop, false), self.int(rng, in_loop, false)),
            2 => G::Delete(s, self.row_cond(rng, in_loop)),
            3 => G::Update(s, self.int(rng, in_loop, true), self.row_cond(rng, in_loop)),
            4 => G::Assign(
                s,
                match rng.gen_range(0..3) {
                    0 => SetE::Union(s, s.other()),
                    1 => SetE::Minus(s, s.other()),
                    _ => SetE::Where(s.other(), self.row_cond(rng, in_loop)),
                },
            ),
            5 => {
                let test = match rng.gen_range(0..3) {
                    0 => {
                        let mut vars = vec!["n", "x"];
                        if in_loop {
                            vars.push("i");
                        }
                        Test::Cond(gen_cond(rng, &vars, 1))
                    }
                    1 => Test::Exist(s, self.row_cond(rng, in_loop)),
                    _ => Test::Empty(s),
                };
                let then = self.block(rng, budget, in_loop, 2);
                let els = if rng.gen_bool(0.6) { self.block(rng, budget, in_loop, 2) } else { Vec::new() };
                G::If(test, then, els)
            }
            _ => {
                if in_loop {
                    return G::SetN(self.int(rng, in_loop, false));
                }
                let body = self.block(rng, budget, true, 2);
                G::Loop(rng.gen_range(1..=3), body)
            }
        }
    }

    fn block(&self, rng: &mut StdRng, budget: &mut usize, in_loop: bool, max: usize) -> Vec<G> {
        let n = rng.gen_range(1..=max).min(*budget);
        (0..n).map(|_| self.stmt(rng, budget, in_loop, true)).collect()
    }

    pub fn case(&self, rng: &mut StdRng) -> Case {
        let mut budget = rng.gen_range(1..=self.max_stmts);
        let mut body = Vec::new();
        while budget > 0 {
            body.push(self.stmt(rng, &mut budget, false, false));
        }
        let ret = match rng.gen_range(0..4) {
            0 => Ret::None,
            1 => Ret::N,
            _ => Ret::Expr(self.int(rng, false, false)),
        };
        let rows = |rng: &mut StdRng| -> Vec<(i64, i64)> {
            let n = rng.gen_range(0..=3);
            let mut v: Vec<(i64, i64)> = (0..n).map(|_| (rng.gen_range(0..=3), rng.gen_range(0..=4))).collect();
            v.sort();
            v.dedup();
            v
        };
        let objs = (0..rng.gen_range(1..=self.max_objs))
            .map(|_| ObjInit {
                n: if rng.gen_bool(0.15) { None } else { Some(rng.gen_range(0..=4)) },
                s: rows(rng),
                t: rows(rng),
            })
            .collect();
        Case { objs, body, ret, arg: rng.gen_range(-1..=3) }
    }
}

/// Smaller variants of a body, most aggressive first.
fn shrink_body(body: &[G]) -> Vec<Vec<G>> {
    let mut out = Vec::new();
    for i in 0..body.len() {
        let mut b = body.to_vec();
        b.remove(i);
        out.push(b);
    }
    for i in 0..body.len() {
        let replace = |with: Vec<G>| {
            let mut b = body[..i].to_vec();
            b.extend(with);
            b.extend_from_slice(&body[i + 1..]);
            b
        };
        match &body[i] {
            G::If(t, th, el) => {
                out.push(replace(th.clone()));
                out.push(replace(el.clone()));
                for s in shrink_body(th) {
                    out.push(replace(vec![G::If(t.clone(), s, el.clone())]));
                }
                for s in shrink_body(el) {
                    out.push(replace(vec![G::If(t.clone(), th.clone(), s)]));
                }
            }
            G::Loop(n, b) => {
                if *n > 1 {
                    out.push(replace(vec![G::Loop(n - 1, b.clone())]));
                }
                for s in shrink_body(b) {
                    out.push(replace(vec![G::Loop(*n, s)]));
                }
            }
            _ => {}
        }
    }
    out
}

fn shrink_candidates(c: &Case) -> Vec<Case> {
    let mut out = Vec::new();
    for i in 0..c.objs.len() {
        if c.objs.len() > 1 {
            let mut d = c.clone();
            d.objs.remove(i);
            out.push(d);
        }
    }
    for b in shrink_body(&c.body) {
        out.push(Case { body: b, ..c.clone() });
    }
    if c.ret != Ret::None {
        out.push(Case { ret: Ret::None, ..c.clone() });
    }
    for i in 0..c.objs.len() {
        for j in 0..c.objs[i].s.len() {
            let mut d = c.clone();
            d.objs[i].s.remove(j);
            out.push(d);
        }
        for j in 0..c.objs[i].t.len() {
            let mut d = c.clone();
            d.objs[i].t.remove(j);
            out.push(d);
        }
    }
    if c.arg != 0 {
        out.push(Case { arg: 0, ..c.clone() });
    }
    out
}

/// Greedily reduces a failing case while `fails` keeps holding.
pub fn shrink(mut c: Case, mut fails: impl FnMut(&Case) -> bool) -> Case {
    loop {
        match shrink_candidates(&c).into_iter().find(|d| fails(d)) {
            Some(d) => c = d,
            None => return c,
        }
    }
}

/// Runs `call` on a copy of `db`; the outcome is the result or the error text
/// together with the final state.
pub fn outcome(db: &Database, mode: overrel::storage::Mode, call: &str) -> (Result<BTreeSet<Tuple>, String>, State) {
    let mut db = db.clone();
    db.mode = mode;
    let r = db.query(call).map(|r| tuples(&r)).map_err(|e| format!("{:?}", std::mem::discriminant(&e)));
    (r, db.state)
}

pub fn rand_pick<T: Clone>(rng: &mut StdRng, xs: &[T]) -> T {
    xs.choose(rng).unwrap().clone()
}
