//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use overrel::error::Error;
use overrel::lang::{self, Command};
use overrel::relalg::{AttrName, KeyKind, KeySpec, Oid, Relation, Value};
use overrel::rvars;
use overrel::storage::{Database, Mode, OWN};
use overrel::typesys::OBJECT;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(t: Instant, limit: Duration) -> Result<(), String> {
    check(t.elapsed() < limit, || format!("took {:.2?}, limit {limit:?}", t.elapsed()))
}

// 1 ------------------------------------------------------------------------

const PRIMS: &str = "
DESCRIBE TUPLE P { k INTEGER; v INTEGER; };
DESCRIBE TUPLE X { x INTEGER; };
DESCRIBE TUPLE Y { y INTEGER; };
DESCRIBE TUPLE XY { x INTEGER; y INTEGER; };
DESCRIBE TUPLE K { k INTEGER; };
CREATE CLASS C {
  a1 SET OF P; a2 SET OF P; b1 SET OF X; b2 SET OF Y;
  u SET OF P; m SET OF P; p SET OF XY; s SET OF P; j SET OF K;
};
ALTER CLASS C REALIZE a1, a2, b1, b2 AS STORED
  REALIZE u AS a1 UNION a2
  REALIZE m AS a1 MINUS a2
  REALIZE p AS b1 TIMES b2;
";

fn a(n: &str) -> AttrName {
    AttrName::new(n)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let base = db(PRIMS);
    let mut rng = StdRng::seed_from_u64(1);
    let cases = 1000;
    let mut checked = 0usize;
    for case in 0..cases {
        let mut d = base.clone();
        let cond = gen_cond(&mut rng, &["k", "v"], 2);
        let proj = rng.gen_range(0..4);
        let proj_text = ["a1[k]", "a1[!v]", "a1[v] RENAME v AS k", "a2[k]"][proj];
        run(&mut d, &format!("ALTER CLASS C REALIZE s AS a1 WHERE {} REALIZE j AS {proj_text};", cond.text()));
        let n = rng.gen_range(1..=5);
        for _ in 0..n {
            run(&mut d, "NEW C;");
        }
        let objs = oids(&d, "C");
        for comp in ["a1", "a2"] {
            let mut rows = Vec::new();
            for o in &objs {
                for _ in 0..rng.gen_range(0..=4) {
                    rows.push((*o, vec![Value::Int(rng.gen_range(0..=3)), maybe_int(&mut rng, 0, 3, 0.1)]));
                }
            }
            write_set(&mut d, "C", comp, &rows);
        }
        for comp in ["b1", "b2"] {
            let mut rows = Vec::new();
            for o in &objs {
                for _ in 0..rng.gen_range(0..=3) {
                    rows.push((*o, vec![Value::Int(rng.gen_range(0..=4))]));
                }
            }
            write_set(&mut d, "C", comp, &rows);
        }
        d.enforce().map_err(|e| e.to_string())?;
        let stored = |c: &str| d.state.base[&("C".to_string(), c.to_string())].clone();
        let (t1, t2, u1, u2) = (stored("a1"), stored("a2"), stored("b1"), stored("b2"));
        let sel = cond.row();
        let oid = AttrName::oid();
        // Set-level forms built directly from the algebra.
        let set_level: Vec<(&str, Relation)> = vec![
            ("u", t1.union(&t2).unwrap()),
            ("m", t1.minus(&t2).unwrap()),
            ("p", u1.join_on(&u2, &[(oid.clone(), oid.clone())]).unwrap()),
            ("s", t1.select_where(&sel).unwrap()),
            (
                "j",
                match proj {
                    0 => t1.project(&[oid.clone(), a("k")]).unwrap(),
                    1 => t1.project_drop(&[a("v")]).unwrap(),
                    2 => t1.project(&[oid.clone(), a("v")]).unwrap().rename(&[(a("v"), a("k"))]).unwrap(),
                    _ => t2.project(&[oid.clone(), a("k")]).unwrap(),
                },
            ),
        ];
        let mut engine: BTreeMap<(&str, bool), Relation> = BTreeMap::new();
        for mode in [Mode::Compiled, Mode::Oracle] {
            d.mode = mode;
            for (name, _) in &set_level {
                let r = rvars::component_rvar(&mut d, "C", name).map_err(|e| format!("case {case}: {name}: {e}"))?;
                engine.insert((name, mode == Mode::Oracle), r);
            }
        }
        for o in &objs {
            let (o1, o2, p1, p2) = (at(&t1, *o), at(&t2, *o), at(&u1, *o), at(&u2, *o));
            let per_object: BTreeMap<&str, Relation> = [
                ("u", o1.union(&o2).unwrap()),
                ("m", o1.minus(&o2).unwrap()),
                ("p", p1.product(&p2).unwrap()),
                ("s", o1.select_where(&sel).unwrap()),
                (
                    "j",
                    match proj {
                        0 => o1.project(&[a("k")]).unwrap(),
                        1 => o1.project_drop(&[a("v")]).unwrap(),
                        2 => o1.project(&[a("v")]).unwrap().rename(&[(a("v"), a("k"))]).unwrap(),
                        _ => o2.project(&[a("k")]).unwrap(),
                    },
                ),
            ]
            .into_iter()
            .collect();
            for (name, f_set) in &set_level {
                let want = &per_object[name];
                let got = at(f_set, *o);
                check(names(&got) == names(want) && tuples(&got) == tuples(want), || {
                    format!("case {case}, {name}, {o}: algebra {:?} vs per-object {:?}", tuples(&got), tuples(want))
                })?;
                for mode in [Mode::Compiled, Mode::Oracle] {
                    let got = at(&engine[&(*name, mode == Mode::Oracle)], *o).reorder_to(want.scheme()).unwrap();
                    check(tuples(&got) == tuples(want), || {
                        format!(
                            "case {case}, {name} ({mode:?}), {o}, cond {}: {:?} vs per-object {:?}",
                            cond.text(),
                            tuples(&got),
                            tuples(want)
                        )
                    })?;
                }
                checked += 1;
            }
        }
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("{cases} cases for each of union, minus, times, where and projection, {checked} object checks, {:.2?}", start.elapsed()))
}

// 2 and 3 ------------------------------------------------------------------

fn differs(base: &Database, c: &Case) -> Option<String> {
    let d = c.build(base);
    let call = format!("C.m({})", c.arg);
    let (rc, sc) = outcome(&d, Mode::Compiled, &call);
    let (ro, so) = outcome(&d, Mode::Oracle, &call);
    if rc != ro {
        return Some(format!("results differ: compiled {rc:?}, oracle {ro:?}"));
    }
    if sc != so {
        return Some("final states differ".into());
    }
    None
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let base = db(BODY_SCHEMA);
    let gen = BodyGen { max_stmts: 6, max_objs: 5 };
    let mut rng = StdRng::seed_from_u64(2);
    let cases = 500;
    let (mut errors, mut ifs, mut loops) = (0, 0, 0);
    for i in 0..cases {
        let c = gen.case(&mut rng);
        check(c.statements() <= 6 && c.objs.len() <= 5, || format!("generator exceeded bounds: {c:?}"))?;
        let text = c.body_text();
        ifs += usize::from(text.contains("IF "));
        loops += usize::from(text.contains("DO\n"));
        if let Some(why) = differs(&base, &c) {
            let small = shrink(c, |d| differs(&base, d).is_some());
            let why = differs(&base, &small).unwrap_or(why);
            return Err(format!("case {i}: {why}\nminimal counterexample:\n{}", small.script(&format!("C.m({})", small.arg))));
        }
        let d = c.build(&base);
        if outcome(&d, Mode::Compiled, &format!("C.m({})", c.arg)).0.is_err() {
            errors += 1;
        }
    }
    check(ifs > 0 && loops > 0, || "generator produced no IF or no DO WHILE".into())?;
    check(errors * 4 < cases, || format!("{errors} of {cases} bodies failed in both modes"))?;
    // The shrinker itself, against a property that fails for any body with a DELETE.
    let mut probe = StdRng::seed_from_u64(20);
    let has_delete = |c: &Case| c.body_text().contains("DELETE");
    let seed_case = (0..).map(|_| gen.case(&mut probe)).find(|c| has_delete(c) && c.statements() >= 3).unwrap();
    let small = shrink(seed_case, has_delete);
    check(small.statements() == 1 && small.objs.len() == 1, || format!("shrinker left {small:?}"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "{cases} bodies ({ifs} with IF, {loops} with DO WHILE, {errors} erroring identically), shrinker reduces to 1 statement, {:.2?}",
        start.elapsed()
    ))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let base = db(BODY_SCHEMA);
    let gen = BodyGen { max_stmts: 6, max_objs: 5 };
    let mut rng = StdRng::seed_from_u64(3);
    let mut cases = 0;
    while cases < 200 {
        let mut c = gen.case(&mut rng);
        if c.objs.len() < 2 {
            continue;
        }
        for o in &mut c.objs {
            o.n = Some(rng.gen_range(0..=4));
        }
        let cut = rng.gen_range(1..=4);
        let inside = c.objs.iter().filter(|o| o.n.unwrap() >= cut).count();
        if inside == 0 || inside == c.objs.len() {
            continue;
        }
        cases += 1;
        let d = c.build(&base);
        let group: BTreeSet<Oid> =
            oids(&d, "C").into_iter().zip(&c.objs).filter(|(_, i)| i.n.unwrap() >= cut).map(|(o, _)| o).collect();
        let call = format!("(C WHERE n >= {cut}).m({})", c.arg);
        let outside = |st: &overrel::storage::State| -> BTreeMap<String, BTreeSet<Vec<Value>>> {
            st.base
                .iter()
                .map(|((t, comp), r)| {
                    let rows = r.iter().filter(|t| !t[0].as_oid().is_some_and(|o| group.contains(&o))).cloned();
                    (format!("{t}.{comp}"), rows.collect())
                })
                .collect()
        };
        let before = outside(&d.state);
        let (rc, sc) = outcome(&d, Mode::Compiled, &call);
        let (ro, so) = outcome(&d, Mode::Oracle, &call);
        check(outside(&sc) == before, || format!("compiled run touched rows outside the group:\n{}", c.script(&call)))?;
        check(outside(&so) == before, || format!("oracle run touched rows outside the group:\n{}", c.script(&call)))?;
        check(rc == ro && sc == so, || format!("subgroup run differs between modes:\n{}", c.script(&call)))?;
        if let Ok(r) = &rc {
            let named: BTreeSet<Oid> = r.iter().filter_map(|t| t[0].as_oid()).collect();
            check(named.is_subset(&group), || "result names objects outside the group".into())?;
        }
    }
    Ok(format!("{cases} strict subgroups, both modes, {:.2?}", start.elapsed()))
}

// 4 ------------------------------------------------------------------------

const OV: &str = "
DESCRIBE TUPLE P { k INTEGER; v INTEGER; };
CREATE CLASS T { n INTEGER; xs SET OF P; };
ALTER CLASS T REALIZE * AS STORED;
";

fn brute_ov(rel: &Relation, conds: &[Cond]) -> BTreeSet<Vec<Value>> {
    let mut by_oid: BTreeMap<Value, Vec<&Vec<Value>>> = BTreeMap::new();
    for t in rel.iter() {
        by_oid.entry(t[0].clone()).or_default().push(t);
    }
    let mut out = BTreeSet::new();
    for rows in by_oid.values() {
        let ok = conds.iter().all(|c| rows.iter().any(|t| c.eval(&env_of(rel.scheme(), t))));
        if ok {
            out.extend(rows.iter().map(|t| (*t).clone()));
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let base = db(OV);
    let mut rng = StdRng::seed_from_u64(4);
    let cases = 200;
    let mut nonempty = 0;
    for case in 0..cases {
        let mut d = base.clone();
        let n = rng.gen_range(1..=6);
        for _ in 0..n {
            run(&mut d, "NEW T;");
        }
        let objs = oids(&d, "T");
        let mut rows = Vec::new();
        for o in &objs {
            write_scalar(&mut d, "T", "n", *o, maybe_int(&mut rng, 0, 4, 0.1));
            for _ in 0..rng.gen_range(0..=4) {
                rows.push((*o, vec![Value::Int(rng.gen_range(0..=3)), maybe_int(&mut rng, 0, 3, 0.1)]));
            }
        }
        write_set(&mut d, "T", "xs", &rows);
        let on_type = case % 2 == 1;
        let vars: &[&str] = if on_type { &["n", "xs.k", "xs.v"] } else { &["k", "v"] };
        let conds: Vec<Cond> = (0..rng.gen_range(1..=3)).map(|_| gen_cond(&mut rng, vars, 1)).collect();
        // A `>` inside the angle brackets has to be parenthesized.
        let list: Vec<String> =
            conds.iter().map(Cond::text).map(|t| if t.contains('>') { format!("({t})") } else { t }).collect();
        let src = if on_type { format!("T<{}>", list.join(", ")) } else { format!("T.xs<{}>", list.join(", ")) };
        let rel = if on_type { rvars::type_rvar(&mut d, "T") } else { rvars::component_rvar(&mut d, "T", "xs") }
            .map_err(|e| e.to_string())?;
        let want = brute_ov(&rel, &conds);
        let got = d.query(&src).map_err(|e| format!("{src}: {e}"))?;
        let got = got.reorder_to(rel.scheme()).map_err(|e| e.to_string())?;
        check(tuples(&got) == want, || format!("{src}: {:?} vs brute force {want:?}", tuples(&got)))?;
        let direct = rvars::ov_retrieval(&rel, &conds.iter().map(Cond::row).collect::<Vec<_>>()).unwrap();
        check(tuples(&direct) == want, || format!("ov_retrieval {src} disagrees"))?;
        nonempty += usize::from(!want.is_empty());
    }
    let mut d = db("
DESCRIBE TUPLE X { x INTEGER; };
CREATE CLASS T { xs SET OF X; };
ALTER CLASS T REALIZE * AS STORED;
NEW T;
INSERT {x: 1} INTO Object(T).xs;
INSERT {x: 2} INTO Object(T).xs;
");
    let ov = d.query("T.xs<x = 1, x = 2>").map_err(|e| e.to_string())?;
    let ov_type = d.query("T<xs.x = 1, xs.x = 2>").map_err(|e| e.to_string())?;
    let conj = d.query("T.xs WHERE x = 1 AND x = 2").map_err(|e| e.to_string())?;
    check(ov.len() == 2 && ov_type.len() == 2 && conj.is_empty(), || {
        format!("motivating case: ov {} rows, type ov {} rows, conjunction {} rows", ov.len(), ov_type.len(), conj.len())
    })?;
    Ok(format!(
        "{cases} cases ({nonempty} non-empty); <x=1, x=2> keeps the object, WHERE x=1 AND x=2 is empty, {:.2?}",
        start.elapsed()
    ))
}

// 5 ------------------------------------------------------------------------

const REFS: &str = "
CREATE CLASS N { val INTEGER; tag STRING; next N; };
ALTER CLASS N REALIZE * AS STORED;
CREATE CLASS E { w INTEGER; to N; };
ALTER CLASS E REALIZE * AS STORED;
DESCRIBE TUPLE X { x INTEGER; r N; };
CREATE CLASS T { xs SET OF X; };
ALTER CLASS T REALIZE * AS STORED;
";

/// The expansion written out: rename the target's attributes under `attr`, then join.
fn raw_expand(d: &Database, rel: &Relation, attr: &AttrName, target: &str) -> Relation {
    let raw = &d.state.base[&(target.to_string(), OWN.to_string())];
    let renames: Vec<(AttrName, AttrName)> =
        raw.scheme().names().filter(|n| !n.is_oid()).map(|n| (n.clone(), n.refined(attr))).collect();
    rel.join_on(&raw.rename(&renames).unwrap(), &[(attr.clone(), AttrName::oid())]).unwrap()
}

fn refs_fixture(rng: &mut StdRng, nonempty_sets: bool) -> Database {
    let mut d = db(REFS);
    let (nn, ne, nt) = (rng.gen_range(1..=5), rng.gen_range(0..=4), rng.gen_range(1..=4));
    for _ in 0..nn {
        run(&mut d, "NEW N;");
    }
    for _ in 0..ne {
        run(&mut d, "NEW E;");
    }
    for _ in 0..nt {
        run(&mut d, "NEW T;");
    }
    let ns = oids(&d, "N");
    let pick = |rng: &mut StdRng| -> Value {
        if rng.gen_bool(0.25) {
            Value::Undefined
        } else {
            Value::Oid(ns[rng.gen_range(0..ns.len())])
        }
    };
    for o in &ns {
        write_scalar(&mut d, "N", "val", *o, maybe_int(rng, 0, 5, 0.15));
        write_scalar(&mut d, "N", "tag", *o, Value::Str(["a", "b"][rng.gen_range(0..2)].into()));
        let r = pick(rng);
        write_scalar(&mut d, "N", "next", *o, r);
    }
    for o in oids(&d, "E") {
        write_scalar(&mut d, "E", "w", o, Value::Int(rng.gen_range(0..=3)));
        let r = pick(rng);
        write_scalar(&mut d, "E", "to", o, r);
    }
    let mut rows = Vec::new();
    for o in oids(&d, "T") {
        let lo = usize::from(nonempty_sets);
        for _ in 0..rng.gen_range(lo..=3) {
            rows.push((o, vec![Value::Int(rng.gen_range(0..=3)), pick(rng)]));
        }
    }
    write_set(&mut d, "T", "xs", &rows);
    d.enforce().unwrap();
    d
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(5);
    let cases = 200;
    for case in 0..cases {
        let mut d = refs_fixture(&mut rng, false);
        let next = AttrName::new("next");
        let n_rel = rvars::type_rvar(&mut d, "N").unwrap();
        let once = rvars::expand_ref(&mut d, &n_rel, &next).unwrap();
        let raw_once = raw_expand(&d, &n_rel, &next, "N");
        check(once == raw_once, || format!("case {case}: N EXPAND next differs from rename+join"))?;
        let nn = AttrName::from_segments(["next", "next"]);
        let twice = rvars::expand_ref(&mut d, &once, &nn).unwrap();
        let raw_twice = raw_expand(&d, &raw_once, &nn, "N");
        check(twice == raw_twice, || format!("case {case}: second expansion differs"))?;
        check(twice.scheme().index_of(&AttrName::from_segments(["next", "next", "val"])).is_some(), || {
            "missing next.next.val".into()
        })?;
        let q = d.query("N EXPAND next").unwrap();
        check(tuples(&q) == tuples(&once), || format!("case {case}: query EXPAND differs"))?;
        let e_rel = rvars::type_rvar(&mut d, "E").unwrap();
        let to = AttrName::new("to");
        check(rvars::expand_ref(&mut d, &e_rel, &to).unwrap() == raw_expand(&d, &e_rel, &to, "N"), || {
            format!("case {case}: E EXPAND to differs")
        })?;
        let x_rel = rvars::component_rvar(&mut d, "T", "xs").unwrap();
        let r = AttrName::new("r");
        check(rvars::expand_ref(&mut d, &x_rel, &r).unwrap() == raw_expand(&d, &x_rel, &r, "N"), || {
            format!("case {case}: T.xs EXPAND r differs")
        })?;
    }
    let pairs = [
        ("T[xs.x]", "T.xs[x]"),
        ("T[xs.r.val]", "T.xs[r.val]"),
        ("T[xs.r.next.tag]", "T.xs[r.next.tag]"),
        ("N[next.val]", "N.next[next.val]"),
        ("E[to.next.val]", "E.to[to.next.val]"),
    ];
    for case in 0..cases {
        let mut d = refs_fixture(&mut rng, case % 2 == 0);
        for (left, right) in pairs {
            if left == "T[xs.x]" && case % 2 == 1 {
                continue;
            }
            let l = d.query(left).map_err(|e| format!("{left}: {e}"))?;
            let r = d.query(right).map_err(|e| format!("{right}: {e}"))?;
            check(tuples(&l) == tuples(&r), || format!("case {case}: {left} {:?} vs {right} {:?}", tuples(&l), tuples(&r)))?;
        }
    }
    Ok(format!("{cases} expansion cases incl. self-reference, {cases} dual-route cases x {} paths, {:.2?}", pairs.len(), start.elapsed()))
}

// 6 ------------------------------------------------------------------------

fn ints(r: &Relation) -> Vec<i64> {
    r.iter().filter_map(|t| if let Value::Int(i) = t[0] { Some(i) } else { None }).collect()
}

/// Stock per warehouse summed straight from the base variables.
fn stock_oracle(d: &Database) -> BTreeMap<String, BTreeMap<String, i64>> {
    let b = |t: &str, c: &str| &d.state.base[&(t.to_string(), c.to_string())];
    let col = |r: &Relation, n: &str| r.scheme().index_of(&AttrName::new(n)).unwrap();
    let own = b("GoodsMotion", OWN);
    let (from, to) = (col(own, "FromWarehouse"), col(own, "ToWarehouse"));
    let wares = b("Warehouse", OWN);
    let addr = col(wares, "Address");
    let name_of: BTreeMap<Value, String> =
        wares.iter().map(|t| (t[0].clone(), if let Value::Str(s) = &t[addr] { s.clone() } else { String::new() })).collect();
    let arts = b("Article", OWN);
    let no = col(arts, "No");
    let art_no: BTreeMap<Value, String> =
        arts.iter().map(|t| (t[0].clone(), if let Value::Str(s) = &t[no] { s.clone() } else { String::new() })).collect();
    let sales: BTreeSet<Value> = d.state.oids.rows.iter().filter(|(_, t)| *t == "Sales").map(|(o, _)| Value::Oid(*o)).collect();
    let mut moved: BTreeMap<Value, BTreeMap<String, i64>> = BTreeMap::new();
    for t in b("GoodsMotion", "MovedItems").iter() {
        if !sales.contains(&t[0]) {
            *moved.entry(t[0].clone()).or_default().entry(art_no[&t[1]].clone()).or_default() += t[2].as_int();
        }
    }
    for t in b("Sales", "SaleItems").iter() {
        *moved.entry(t[0].clone()).or_default().entry(art_no[&t[1]].clone()).or_default() += t[2].as_int();
    }
    let mut out: BTreeMap<String, BTreeMap<String, i64>> = name_of.values().map(|n| (n.clone(), BTreeMap::new())).collect();
    for m in own.iter() {
        for (art, q) in moved.get(&m[0]).into_iter().flatten() {
            if let Some(w) = name_of.get(&m[to]) {
                *out.get_mut(w).unwrap().entry(art.clone()).or_default() += q;
            }
            if let Some(w) = name_of.get(&m[from]) {
                *out.get_mut(w).unwrap().entry(art.clone()).or_default() -= q;
            }
        }
    }
    out
}

trait AsInt {
    fn as_int(&self) -> i64;
}

impl AsInt for Value {
    fn as_int(&self) -> i64 {
        match self {
            Value::Int(i) => *i,
            other => panic!("not an integer: {other:?}"),
        }
    }
}

fn stock_of(d: &mut Database, w: &str) -> Result<BTreeMap<String, i64>, String> {
    let r = d.query(&format!("(Warehouse WHERE Address = \"{w}\").ResourceItems")).map_err(|e| e.to_string())?;
    Ok(r.iter()
        .map(|t| {
            let o = t[1].as_oid().unwrap();
            (d.display_oid(o).trim_start_matches("Article ").trim_matches('"').to_string(), t[2].as_int())
        })
        .collect())
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    const TOTAL: &str = "SUMMARIZE Warehouse.ResourceItems ADD Sum(Quantity) AS Total";
    let cmds = lang::parse_script(overrel::demo::WAREHOUSE).map_err(|e| e.to_string())?;
    let mut d = Database::new();
    let mut seen = Vec::new();
    let mut sales_exists_at_first = None;
    for sc in &cmds {
        d.execute(&sc.cmd).map_err(|e| format!("line {}: {e}", sc.span.line))?;
        if let Command::Query(lang::Expr::Name(n)) = &sc.cmd {
            if n == "TotalStock" {
                let global = ints(&d.query("TotalStock").unwrap());
                let fixed = ints(&d.query(TOTAL).map_err(|e| e.to_string())?);
                check(global == fixed, || format!("global {global:?} vs query {fixed:?}"))?;
                sales_exists_at_first.get_or_insert(d.state.types.classes.contains_key("Sales"));
                seen.push(fixed[0]);
            }
        }
    }
    check(sales_exists_at_first == Some(false), || "the total was first evaluated after Sales existed".into())?;
    check(seen == [15, 15, 13], || format!("totals {seen:?}, expected 15 before the sale, 15 while stored, 13 after the override"))?;
    let expected: BTreeMap<String, BTreeMap<String, i64>> = [
        ("W1".to_string(), [("a1".to_string(), 4), ("a2".to_string(), 5)].into()),
        ("W2".to_string(), [("a1".to_string(), 4)].into()),
    ]
    .into();
    let oracle = stock_oracle(&d);
    check(oracle == expected, || format!("per-object oracle gives {oracle:?}"))?;
    for mode in [Mode::Compiled, Mode::Oracle] {
        d.mode = mode;
        for w in ["W1", "W2"] {
            let got = stock_of(&mut d, w)?;
            check(got == expected[w], || format!("{mode:?}: ResourceItems({w}) = {got:?}"))?;
        }
    }
    Ok(format!("W1 = {{(a1,4),(a2,5)}}, W2 = {{(a1,4)}}, total 15 -> 13 on override, {:.2?}", start.elapsed()))
}

// 7 ------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(7);
    let hierarchies = 100;
    let mut pairs = 0;
    for h in 0..hierarchies {
        let n = rng.gen_range(2..=7);
        let mut parents: Vec<Vec<usize>> = Vec::new();
        let mut src = String::new();
        for i in 0..n {
            let mut ps: Vec<usize> = (0..i).filter(|_| rng.gen_bool(0.35)).take(2).collect();
            ps.sort();
            let ext = if ps.is_empty() {
                String::new()
            } else {
                format!(" EXTENDED {}", ps.iter().map(|p| format!("H{p}")).collect::<Vec<_>>().join(", "))
            };
            src.push_str(&format!("CREATE CLASS H{i}{ext} {{ }};\n"));
            parents.push(ps);
        }
        src.push_str("CREATE CLASS Holder { who Object; };\nALTER CLASS Holder REALIZE * AS STORED;\n");
        let mut made = Vec::new();
        for i in 0..n {
            if rng.gen_bool(0.8) {
                src.push_str(&format!("NEW H{i};\n"));
                made.push(i);
            }
        }
        let mut d = db(&src);
        let reach = |from: usize, to: usize| -> bool {
            let mut stack = vec![from];
            let mut seen = BTreeSet::new();
            while let Some(x) = stack.pop() {
                if x == to {
                    return true;
                }
                if seen.insert(x) {
                    stack.extend(parents[x].iter().copied());
                }
            }
            false
        };
        let objs: Vec<(Oid, usize)> = d
            .state
            .oids
            .rows
            .iter()
            .filter_map(|(o, t)| t.strip_prefix('H').and_then(|i| i.parse().ok()).map(|i| (*o, i)))
            .collect();
        check(objs.len() == made.len(), || format!("hierarchy {h}: wrong object count"))?;
        for (o, of) in &objs {
            let (ids, reg) = (&d.state.oids, &d.state.types);
            for t in 0..n {
                let name = format!("H{t}");
                check(ids.is_a(reg, *o, &name).unwrap() == reach(*of, t), || format!("hierarchy {h}: {o} IS {name}"))?;
                check(ids.is_of(reg, *o, &name).unwrap() == (*of == t), || format!("hierarchy {h}: {o} OF {name}"))?;
                pairs += 1;
            }
            check(ids.is_a(reg, *o, OBJECT).unwrap(), || format!("{o} IS Object is false"))?;
            check(!ids.is_of(reg, *o, OBJECT).unwrap(), || format!("{o} OF Object is true"))?;
        }
        run(&mut d, "NEW Holder;");
        let holder = oids(&d, "Holder")[0];
        for (o, of) in &objs {
            write_scalar(&mut d, "Holder", "who", holder, Value::Oid(*o));
            for t in 0..n {
                let is = !d.query(&format!("Holder WHERE who IS H{t}")).unwrap().is_empty();
                let of_ = !d.query(&format!("Holder WHERE who OF H{t}")).unwrap().is_empty();
                check(is == reach(*of, t) && of_ == (*of == t), || format!("hierarchy {h}: query route for {o} and H{t}"))?;
            }
            check(!d.query("Holder WHERE who IS Object").unwrap().is_empty(), || "query: IS Object".into())?;
            check(d.query("Holder WHERE who OF Object").unwrap().is_empty(), || "query: OF Object".into())?;
        }
    }
    Ok(format!("{hierarchies} hierarchies, {pairs} object/type pairs, {:.2?}", start.elapsed()))
}

// 8 ------------------------------------------------------------------------

fn expect_err(d: &mut Database, src: &str, want: fn(&Error) -> bool) -> Result<(), String> {
    let before = d.state.clone();
    match d.run_script(src) {
        Ok(_) => Err(format!("accepted: {src}")),
        Err(e) if want(&e.error) => {
            // Issued identifiers are never reused, so only the counter may move.
            let mut after = d.state.clone();
            after.oids.next = before.oids.next;
            check(after == before, || format!("state changed after rejected {src}"))
        }
        Err(e) => Err(format!("{src}: unexpected {}", e.error)),
    }
}

fn criterion_8() -> Outcome {
    let mut d = db(overrel::demo::WAREHOUSE);
    let key = |d: &Database, t: &str, c: &str| rvars::derive_rvar_key(&d.state, t, c).unwrap();
    let f = |xs: &[&str]| xs.iter().map(|x| AttrName::new(*x)).collect::<Vec<_>>();
    check(key(&d, "Brand", "SaledItems") == KeySpec::new(KeyKind::Global, f(&["Art"])), || "Brand.SaledItems".into())?;
    check(key(&d, "GoodsMotion", "MovedItems") == KeySpec::new(KeyKind::Local, f(&["OID", "Art"])), || {
        "GoodsMotion.MovedItems".into()
    })?;
    check(key(&d, "Sales", "MovedItems") == KeySpec::new(KeyKind::Local, f(&["OID", "Art"])), || "Sales.MovedItems".into())?;
    check(key(&d, "Sales", "SaleItems") == KeySpec::new(KeyKind::Local, f(&["OID", "Art", "Price"])), || {
        "Sales.SaleItems".into()
    })?;
    for (t, c) in [("Warehouse", "Address"), ("Sales", "SalesManager"), ("GoodsMotion", "DateOfAction")] {
        check(key(&d, t, c) == KeySpec::new(KeyKind::Local, f(&["OID"])), || format!("{t}.{c}"))?;
    }
    let is_key = |e: &Error| matches!(e, Error::KeyViolation(_));
    expect_err(&mut d, "NEW Article(\"a1\");", is_key)?;
    expect_err(&mut d, "NEW GoodsMotion(1);", is_key)?;
    expect_err(&mut d, "NEW Brand(\"Acme\");", is_key)?;
    expect_err(
        &mut d,
        "INSERT INTO Object(GoodsMotion WHERE No = 1).MovedItems VALUE {Art: Object(Article WHERE No = \"a1\"), Quantity: 3};",
        is_key,
    )?;
    expect_err(&mut d, "Object(Article WHERE No = \"a2\").No := \"a1\";", is_key)?;
    expect_err(&mut d, "Object(Article WHERE No = \"a2\").BrandName := \"Nobody\";", is_key)?;
    run(&mut d, "NEW GoodsMotion(7);");
    expect_err(&mut d, "NEW GoodsMotion(7);", is_key)?;
    run(&mut d, "NEW GoodsMotion(8);");
    expect_err(&mut d, "Object(GoodsMotion WHERE No = 8).No := 7;", is_key)?;
    // Brand-wide totals put the same article into every brand's SaledItems.
    expect_err(
        &mut d,
        "ALTER CLASS Brand REALIZE SaledItems AS SUMMARIZE Sales.SaleItems BY Art ADD Sum(Quantity) AS Quantity;",
        is_key,
    )?;
    // Stock rows are keyed per warehouse, so the same article in two warehouses is fine.
    let r = d.query("Warehouse.ResourceItems WHERE Art = Object(Article WHERE No = \"a1\")").map_err(|e| e.to_string())?;
    check(r.len() == 2, || format!("expected a1 in both warehouses, got {} rows", r.len()))?;
    Ok("{Art}, {OID,Art}, {OID}; 9 violating fixtures rejected with state unchanged".into())
}

// 9 and 10 -----------------------------------------------------------------

const COMMIT: &str = include_str!("../scripts/dosale_commit.ro");
const ROLLBACK: &str = include_str!("../scripts/dosale_rollback.ro");

fn corpus() -> Vec<(String, String)> {
    let w = overrel::demo::WAREHOUSE;
    let mut c = vec![
        ("warehouse.ro".to_string(), w.to_string()),
        ("warehouse.ro + dosale_commit.ro".to_string(), format!("{w}\n{COMMIT}")),
        ("warehouse.ro + dosale_rollback.ro".to_string(), format!("{w}\n{ROLLBACK}")),
        ("refs fixture".to_string(), REFS.to_string()),
        ("body schema".to_string(), BODY_SCHEMA.to_string()),
    ];
    for seed in 1..=8 {
        c.push((format!("demo seed {seed}"), overrel::demo::seeded_script(seed)));
    }
    c
}

fn criterion_9() -> Outcome {
    let mut commands = 0;
    for (name, src) in corpus() {
        let mut d = Database::new();
        let mut bad = None;
        d.run_script_with(&src, |d, sc, r| {
            commands += 1;
            let mut probe = d.clone();
            if bad.is_none() {
                if let Err(e) = r {
                    bad = Some(format!("line {}: {e}", sc.span.line));
                } else if let Err(e) = probe.enforce().and_then(|_| probe.state.check_references()) {
                    bad = Some(format!("line {}: violation {e}", sc.span.line));
                }
            }
        })
        .map_err(|e| format!("{name}: {e}"))?;
        check(bad.is_none(), || format!("{name}: {}", bad.clone().unwrap()))?;
    }
    let mut d = db(overrel::demo::WAREHOUSE);
    let veto = |e: &Error| matches!(e, Error::ReferentialVeto(_));
    expect_err(&mut d, "DESTROY Object(Warehouse WHERE Address = \"W1\");", veto)?;
    expect_err(&mut d, "DESTROY Object(Article WHERE No = \"a2\");", veto)?;
    run(&mut d, "NEW Warehouse(\"W9\"); DESTROY Object(Warehouse WHERE Address = \"W9\");");

    let (setup, tx) = ROLLBACK.split_at(ROLLBACK.find("BEGIN TRANSACTION").unwrap());
    let mut d = db(&format!("{}\n{setup}", overrel::demo::WAREHOUSE));
    let before = d.state.clone();
    run(&mut d, tx);
    check(d.state == before, || "rollback did not restore the state exactly".into())?;
    check(!d.in_transaction(), || "transaction left open".into())?;
    let (setup, tx) = COMMIT.split_at(COMMIT.find("BEGIN TRANSACTION").unwrap());
    let mut d = db(&format!("{}\n{setup}", overrel::demo::WAREHOUSE));
    let before = d.state.clone();
    run(&mut d, tx);
    check(d.state != before, || "commit changed nothing".into())?;
    check(d.query("Sales<DateOfAction IS NULL>").unwrap().is_empty(), || "unshipped sales remain".into())?;
    Ok(format!("{} corpus scripts, {commands} commands without violations; DESTROY vetoed; DoSale commits / rolls back exactly", corpus().len()))
}

fn criterion_10() -> Outcome {
    let mut queries = 0;
    for (name, src) in corpus() {
        let d = db(&src);
        let first = d.dump().map_err(|e| e.to_string())?;
        let mut e = Database::new();
        e.load(&first).map_err(|e| format!("{name}: {e}"))?;
        let second = e.dump().map_err(|e| e.to_string())?;
        check(first == second, || format!("{name}: dump changed across load"))?;
        check(e.state == d.state, || format!("{name}: loaded state differs"))?;
        let mut d = d;
        for sc in lang::parse_script(&src).unwrap() {
            if let Command::Query(q) = &sc.cmd {
                let text = lang::pretty::expr(q);
                let a = d.query(&text).map_err(|err| format!("{name}: {text}: {err}"))?;
                let b = e.query(&text).map_err(|err| format!("{name}: reloaded {text}: {err}"))?;
                check(a == b, || format!("{name}: {text} differs after reload"))?;
                queries += 1;
            }
        }
        check(e.dump().unwrap() == first, || format!("{name}: queries changed the reloaded state"))?;
    }
    Ok(format!("{} corpus states byte-identical across dump/load, {queries} queries agree", corpus().len()))
}

// 11 -----------------------------------------------------------------------

/// Syntax blocks of the original description, normalized as listed in docs/normalizations.md.
const BLOCKS: &[&str] = &[
    "DESCRIBE TUPLE ArtQty\n{\n  Art Article;\n  Quantity INTEGER;\n};",
    "CREATE CLASS Brand\n{\n  Name STRING\n  CONSTRAIN GLOBALKEY Name;\n};",
    "CREATE CLASS Article\n{\n  No STRING\n  CONSTRAIN GLOBALKEY No;\n  BrandName STRING\n  CONSTRAIN FOREIGNKEY BrandName ON Brand.Name;\n};",
    "CREATE CLASS Warehouse\n{\n  Address STRING;\n  ResourceItems SET OF ArtQty\n  CONSTRAIN\n  LOCALKEY Art;\n};",
    "CREATE CLASS GoodsMotion\n{\n  No INTEGER\n  CONSTRAIN GLOBALKEY No;\n  DateOfAction DATE;\n  FromWarehouse Warehouse;\n  ToWarehouse Warehouse;\n  MovedItems SET OF ArtQty\n  CONSTRAIN\n  LOCALKEY Art;\n};",
    "DESCRIBE TUPLE SaleQty\n{\n  Art Article;\n  Quantity INTEGER;\n  Price FLOAT;\n};",
    "CREATE CLASS Sales EXTENDED GoodsMotion\n{\n  IsPayed BOOLEAN;\n  SalesManager Manager;\n  SaleItems SET OF SaleQty\n  CONSTRAIN\n\nLOCALKEY (Art, Price);\nDoSale (DateOfSale DATE) BOOLEAN;\n};",
    "ALTER CLASS Brand\n  ADD SaledItems SET OF ArtQty\n  CONSTRAIN\n  GLOBALKEY Art;",
    "ALTER CLASS GoodsMotion\nREALIZE No, DateOfAction, FromWarehouse, ToWarehouse, MovedItems AS STORED;",
    "ALTER CLASS Article\nREALIZE * AS STORED;",
    "ALTER CLASS Sales\n  REALIZE DoSale\nAS BEGIN\nIF DateOfAction NOT IS NULL THEN //if the shipment is made\n  IF DateOfAction = DateOfSale Then Return TRUE;\n  //and on the same date - OK!\n  ELSE RETURN FALSE;\n  //the shipment is made on another date - error\nELSE //shipment is not made yet\n  IF IsPayed THEN\n  BEGIN\n    DateOfAction := DateOfSale;\n    RETURN TRUE; //the sale is paid - OK\n  END\n  ELSE\n    RETURN FALSE; //the shipment is impossible (is not paid) - Error\nEND;",
    "ALTER CLASS Warehouse\nREALIZE Address AS STORED\nREALIZE ResourceItems AS\nSUMMARIZE (\n  SUMMARIZE\n  (GoodsMotion WHERE ToWarehouse = this).MovedItems\n  BY Art ADD Sum(Quantity) AS SumQty\n  UNION\n  SUMMARIZE (GoodsMotion WHERE FromWarehouse = this).MovedItems\n  BY Art ADD Sum(0-Quantity) AS SumQty)\nBY Art ADD Sum(SumQty) AS Quantity;",
    "ALTER CLASS Article\n  ADD Article( InArticle As STRING);",
    "ALTER CLASS Article\n  REALIZE Article AS\n  BEGIN\n    No := InArticle;\n  END;",
    "new Article(\"art1\");",
    "ALTER CLASS Sales\n  REALIZE SaleItems AS STORED;",
    "ALTER CLASS Sales\n  REALIZE MovedItems AS\n  SUMMARIZE SaleItems\n  BY Art ADD Sum(Quantity) AS Quantity;",
    "SELECT SUM(Quantity) FROM Warehouse.ResourceItems;",
    "someSales := Object(Sales WHERE IsPayed = TRUE);",
    "someSales := Object(someSales.SaleItems WHERE Price > 100);",
    "someSales := Object(someSales WHERE DateOfAction = #01.04.2005#);",
    "CREATE someSales AS SET OF Sales\n    REALIZE AS STORED;",
    "DESCRIBE TUPLE Art2Ware\n{\n    Art Article;\n    Ware Warehouse;\n};",
    "CREATE ArticleOnWarehouse AS SET OF Art2Ware\n    CONSTRAIN Art AS GLOBAL KEY\n    REALIZE AS STORED;",
    "ALTER CLASS Brand\n    REALIZE SaledItems AS\n    SUMMARIZE (Sales.SaleItems WHERE Art<BrandName = this.Name>)\n    BY Art ADD Sum(Quantity) AS Quantity;",
    "BEGIN TRANSACTION;\nIF EXIST\n  (Sales <DateOfAction IS NULL>.DoSale(GetTodayDate()) WHERE DoSale = FALSE)\nTHEN ROLLBACK\nELSE COMMIT;",
    "CREATE CLASS otypename EXTENDED parenttypename, other\n{\n  a INTEGER CONSTRAIN GLOBALKEY a;\n  b SET OF tuplename CONSTRAIN LOCALKEY x;\n} CONSTRAIN LOCALKEY a;",
    "ALTER CLASS otypename ADD c STRING;",
    "ALTER CLASS otypename DROP c;",
    "ALTER CLASS otypename ALTER c INTEGER CONSTRAIN GLOBALKEY c;",
    "ALTER CLASS otypename REALIZE c AS STORED;",
    "DROP otypename;",
    "EXECUTE t<GlobalKeyField=1>.method();",
    "ALTER CLASS t REALIZE method AS\nBEGIN\n    this.a2 := this.a1;\nEND;",
    "EXECUTE t.somemethod();",
    "EXECUTE g.somemethod();",
    "EXECUTE t<cond1 = 1, cond2 = 2>.xref.somemethod();",
    "INSERT {x: 1} INTO objectgroup.a;",
    "UPDATE objectgroup.a SET (x := 2);",
    "DELETE FROM objectgroup.a;",
    "EXECUTE objectgroup.methodname(1, \"p\");",
];

const BODIES: &[&str] = &["BEGIN\nrefArt Article;\nrefArt := Object(Article WHERE No = \"art1\");\nEND"];

const VOCAB: &[&str] = &[
    "CREATE", "CLASS", "ALTER", "REALIZE", "AS", "STORED", "BEGIN", "END", "IF", "THEN", "ELSE", "DO", "WHILE",
    "RETURN", "INSERT", "INTO", "DELETE", "FROM", "UPDATE", "SET", "WHERE", "UNION", "MINUS", "TIMES", "JOIN",
    "SUMMARIZE", "BY", "ADD", "Sum", "Count", "EXIST", "Object", "NEW", "DESTROY", "EXECUTE", "DESCRIBE", "TUPLE",
    "CONSTRAIN", "GLOBALKEY", "LOCALKEY", "FOREIGNKEY", "ON", "OF", "IS", "NULL", "NOT", "AND", "OR", "TRANSACTION",
    "COMMIT", "ROLLBACK", "RENAME", "EXPAND", "REPLACE", "EXTENDED", "DROP", "this", "x", "t", "a", "Sales", "{", "}",
    "(", ")", "[", "]", "<", ">", "<>", "<=", ">=", "=", ":=", ";", ",", ".", ":", "!", "+", "-", "*", "/", "1",
    "-2", "3.5", "\"s\"", "#01.02.2005#", "#99.99.9999#", "//c\n", "\"", "#", "@", "é", "\u{0}",
];

fn fuzz_input(rng: &mut StdRng) -> String {
    match rng.gen_range(0..3) {
        0 => {
            let n = rng.gen_range(0..40);
            (0..n).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
        }
        1 => {
            let n = rng.gen_range(0..60);
            (0..n).map(|_| char::from_u32(rng.gen_range(0..0x250)).unwrap_or('?')).collect()
        }
        _ => {
            let mut s: Vec<char> = BLOCKS[rng.gen_range(0..BLOCKS.len())].chars().collect();
            for _ in 0..rng.gen_range(1..=4) {
                if s.is_empty() {
                    break;
                }
                let i = rng.gen_range(0..s.len());
                match rng.gen_range(0..3) {
                    0 => {
                        s.remove(i);
                    }
                    1 => s.insert(i, "(){}[];<>\".#".chars().nth(rng.gen_range(0..12)).unwrap()),
                    _ => s.truncate(i),
                }
            }
            s.into_iter().collect()
        }
    }
}

fn criterion_11() -> Outcome {
    let start = Instant::now();
    for b in BLOCKS {
        let cmds = lang::parse_script(b).map_err(|e| format!("{e}\n{b}"))?;
        check(!cmds.is_empty(), || format!("nothing parsed from {b}"))?;
        for sc in &cmds {
            let text = lang::pretty::command(&sc.cmd);
            let again = lang::parse_command(&text).map_err(|e| format!("reparse of {text}: {e}"))?;
            check(again == sc.cmd, || format!("round trip changed {text}"))?;
        }
    }
    for b in BODIES {
        lang::parse_body(b).map_err(|e| format!("{e}\n{b}"))?;
    }
    let mut rng = StdRng::seed_from_u64(11);
    let inputs = 100_000;
    let mut accepted = 0;
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut crash = None;
    for i in 0..inputs {
        let s = fuzz_input(&mut rng);
        match catch_unwind(|| lang::parse_script(&s).is_ok()) {
            Ok(ok) => accepted += usize::from(ok),
            Err(_) => {
                crash = Some(format!("input {i} crashed the parser: {s:?}"));
                break;
            }
        }
    }
    std::panic::set_hook(hook);
    if let Some(c) = crash {
        return Err(c);
    }
    Ok(format!("{} blocks parse and round-trip, {inputs} fuzz inputs without a crash ({accepted} accepted), {:.2?}", BLOCKS.len() + BODIES.len(), start.elapsed()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("primitive equivalences", criterion_1),
        ("differential campaign", criterion_2),
        ("group restriction", criterion_3),
        ("OV retrieval", criterion_4),
        ("reference expansion", criterion_5),
        ("warehouse end-to-end", criterion_6),
        ("type tests", criterion_7),
        ("key derivation", criterion_8),
        ("integrity", criterion_9),
        ("persistence", criterion_10),
        ("parser", criterion_11),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match r {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
