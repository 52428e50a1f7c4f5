use overrel::lang::{self, pretty, AggItem, BinOp, Expr, Literal, SetOp, Stmt, TypeExpr};
use overrel::relalg::{AggFunc, ArithOp, CmpOp, Date};
use proptest::prelude::*;

fn ident() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "Art", "Qty", "x1", "_t", "MovedItems"]).prop_map(String::from)
}

fn path() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(ident(), 1..3)
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        (0i64..1000).prop_map(Literal::Int),
        prop::sample::select(vec![0.5, 2.25, 1e10, 3.0]).prop_map(Literal::Float),
        "[a-z \"\\\\]{0,6}".prop_map(Literal::Str),
        any::<bool>().prop_map(Literal::Bool),
        (1u8..=28, 1u8..=12, 1900i32..2100).prop_map(|(day, month, year)| Literal::Date(Date { year, month, day })),
        Just(Literal::Null),
    ]
}

fn binop() -> impl Strategy<Value = BinOp> {
    prop::sample::select(vec![
        BinOp::Arith(ArithOp::Add),
        BinOp::Arith(ArithOp::Sub),
        BinOp::Arith(ArithOp::Mul),
        BinOp::Arith(ArithOp::Div),
        BinOp::Cmp(CmpOp::Eq),
        BinOp::Cmp(CmpOp::Ne),
        BinOp::Cmp(CmpOp::Lt),
        BinOp::Cmp(CmpOp::Ge),
        BinOp::And,
        BinOp::Or,
    ])
}

/// `<` after these is a comparison, so they never head an OV retrieval.
fn scalar_form(e: &Expr) -> bool {
    matches!(
        e,
        Expr::Lit(_) | Expr::Binary(..) | Expr::Neg(_) | Expr::Not(_) | Expr::IsNull(_) | Expr::IsType { .. } | Expr::Exist(_)
    )
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![literal().prop_map(Expr::Lit), ident().prop_map(Expr::Name), Just(Expr::This)];
    leaf.prop_recursive(4, 40, 3, |e| {
        let b = |x: Expr| Box::new(x);
        prop_oneof![
            (e.clone(), ident()).prop_map(move |(x, n)| Expr::Member(b(x), n)),
            (prop::option::of(e.clone()), ident(), prop::collection::vec(e.clone(), 0..3))
                .prop_map(move |(t, name, args)| Expr::Call { target: t.map(b), name, args }),
            e.clone().prop_map(move |x| Expr::Object(b(x))),
            e.clone().prop_map(move |x| Expr::Exist(b(x))),
            (e.clone(), e.clone()).prop_map(move |(x, c)| Expr::Where(b(x), b(c))),
            (e.clone(), prop::collection::vec(path(), 1..3), any::<bool>())
                .prop_map(move |(x, names, drop)| Expr::Project { expr: b(x), names, drop }),
            (e.clone(), prop::collection::vec((path(), path()), 1..3))
                .prop_map(move |(x, pairs)| Expr::Rename { expr: b(x), pairs }),
            (e.clone(), prop::collection::vec((path(), e.clone()), 1..3))
                .prop_map(move |(x, sets)| Expr::Replace { expr: b(x), sets }),
            (
                prop::sample::select(vec![SetOp::Union, SetOp::Minus, SetOp::Intersect, SetOp::Times, SetOp::Join]),
                e.clone(),
                e.clone()
            )
                .prop_map(move |(op, x, y)| Expr::SetOp(op, b(x), b(y))),
            (e.clone(), prop::collection::vec(path(), 0..2), e.clone(), path()).prop_map(move |(x, by, arg, name)| {
                Expr::Summarize { expr: b(x), by, adds: vec![AggItem { func: AggFunc::Sum, arg, name }] }
            }),
            (e.clone(), path()).prop_map(move |(x, p)| Expr::Expand(b(x), p)),
            (e.clone().prop_filter("scalar base", |x| !scalar_form(x)), prop::collection::vec(e.clone(), 1..3))
                .prop_map(move |(x, cs)| Expr::Ov(b(x), cs)),
            (binop(), e.clone(), e.clone()).prop_map(move |(op, x, y)| Expr::Binary(op, b(x), b(y))),
            e.clone().prop_map(move |x| Expr::Not(b(x))),
            e.clone().prop_map(move |x| Expr::Neg(b(x))),
            e.clone().prop_map(move |x| Expr::IsNull(b(x))),
            (e.clone(), ident(), any::<bool>()).prop_map(move |(x, ty, exact)| Expr::IsType { expr: b(x), ty, exact }),
            prop::collection::vec((ident(), e.clone()), 1..3).prop_map(Expr::Tuple),
        ]
    })
}

fn stmts() -> impl Strategy<Value = Vec<Stmt>> {
    let simple = prop_oneof![
        ident().prop_map(|name| Stmt::Declare { name, ty: TypeExpr::Named("INTEGER".into()) }),
        (ident(), expr()).prop_map(|(t, value)| Stmt::Assign { target: Expr::Name(t), value }),
        (ident(), expr()).prop_map(|(t, value)| Stmt::Insert { target: Expr::Name(t), value }),
        (ident(), prop::option::of(expr())).prop_map(|(t, cond)| Stmt::Delete { target: Expr::Name(t), cond }),
        (ident(), path(), expr(), prop::option::of(expr()))
            .prop_map(|(t, p, v, cond)| Stmt::Update { target: Expr::Name(t), sets: vec![(p, v)], cond }),
        prop::option::of(expr()).prop_map(Stmt::Return),
        (prop::option::of(expr()), ident(), prop::collection::vec(expr(), 0..2))
            .prop_map(|(t, name, args)| Stmt::Execute(Expr::Call { target: t.map(Box::new), name, args })),
    ];
    let stmt = simple.prop_recursive(2, 12, 3, |s| {
        prop_oneof![
            (expr(), prop::collection::vec(s.clone(), 1..3), prop::collection::vec(s.clone(), 0..2))
                .prop_map(|(cond, then, els)| Stmt::If { cond, then, els }),
            (prop::collection::vec(s, 1..3), expr()).prop_map(|(body, cond)| Stmt::DoWhile { body, cond }),
        ]
    });
    prop::collection::vec(stmt, 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printed_expressions_reparse_identically(e in expr()) {
        let text = pretty::expr(&e);
        let back = lang::parse_expr(&text).map_err(|err| TestCaseError::fail(format!("{err}: {text}")))?;
        prop_assert_eq!(back, e, "{}", text);
    }

    #[test]
    fn printed_bodies_reparse_identically(b in stmts()) {
        let text = pretty::body(&b);
        let back = lang::parse_body(&text).map_err(|err| TestCaseError::fail(format!("{err}: {text}")))?;
        prop_assert_eq!(back, b, "{}", text);
    }

    #[test]
    fn arbitrary_text_never_panics(s in "\\PC{0,80}") {
        let _ = lang::parse_script(&s);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..120)) {
        let _ = lang::parse_script(&String::from_utf8_lossy(&bytes));
    }
}
