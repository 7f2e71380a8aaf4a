use proptest::prelude::*;

use super::*;

const IRON: &str = include_str!("../../models/iron.ctl");

fn parse_err(src: &str) -> ParseError {
    parse_model(src).unwrap_err()
}

#[test]
fn parses_iron() {
    let m = parse_model(IRON).unwrap();
    assert_eq!(m.name, "iron");
    assert_eq!(m.inputs.len(), 2);
    assert_eq!(m.outputs[0].name, "heating");
    assert!(m.state_vars.is_empty());
    // Root decision on `position` plus one temporal decision per side.
    assert_eq!(m.decisions().len(), 3);
    assert_eq!(m.leaves().len(), 4);
}

#[test]
fn held_condition_node() {
    let m = parse_model(IRON).unwrap();
    let cond = m.node(&"ne".parse().unwrap()).unwrap();
    let Node::Decision { cond, .. } = cond else {
        panic!("expected decision");
    };
    assert_eq!(
        *cond,
        Expr::Held {
            formula: Box::new(Expr::and(
                Expr::not(Expr::var("move")),
                Expr::not(Expr::var("position"))
            )),
            duration_ms: 60_000,
        }
    );
}

#[test]
fn empty_logic_reports_unassigned_output() {
    let err = parse_err("model m { input a: bool; output o: bool; logic {} }");
    assert_eq!(err.kind, ParseErrorKind::OutputNeverAssigned("o".into()));
    assert!(err.to_string().contains("output never assigned"));
    assert_eq!((err.line, err.col), (1, 33));
}

#[test]
fn syntax_error_has_position_and_expected_set() {
    let err = parse_err("model m {\n  input a bool;\n}");
    assert_eq!((err.line, err.col), (2, 11));
    assert_eq!(err.expected(), ["`:`"]);
    assert_eq!(
        err.render("m.ctl"),
        "m.ctl:2:11: error: unexpected identifier `bool`; expected one of: `:`"
    );
}

#[test]
fn duplicate_and_undeclared() {
    let err = parse_err("model m { input a: bool; output a: bool; logic { a = 1; } }");
    assert_eq!(err.kind, ParseErrorKind::Duplicate("a".into()));
    let err = parse_err("model m { output o: bool; logic { if (x) { o = 1; } else { o = 0; } } }");
    assert_eq!(err.kind, ParseErrorKind::Undeclared("x".into()));
    let err = parse_err("model m { input a: bool; output o: bool; logic { q = 1; o = 0; } }");
    assert_eq!(err.kind, ParseErrorKind::Undeclared("q".into()));
}

#[test]
fn zero_duration_rejected() {
    let err = parse_err(
        "model m { input a: bool; output o: bool; logic { if (held(a, 0s)) { o = 1; } else { o = 0; } } }",
    );
    assert_eq!(err.kind, ParseErrorKind::ZeroDuration);
}

#[test]
fn outputs_are_write_only() {
    let err = parse_err(
        "model m { input a: bool; output o: bool; logic { if (o) { o = 1; } else { o = 0; } } }",
    );
    assert!(err.message().contains("cannot be read"));
}

#[test]
fn else_if_chain_and_state_declarations() {
    let src = r#"
        model counter {
            input tick: bool;
            input mode: int 0..2;
            output alarm: bool;
            state count: int 0..3 hidden;
            state armed: bool readable = true;
            pred mode_two = held(mode == 2, 500ms);
            logic {
                if (tick && count < 3) {
                    count = count + 1;
                    alarm = 0;
                } else if (mode_two) {
                    alarm = armed;
                } else {
                    alarm = 0;
                    count = 0;
                }
            }
        }
    "#;
    let m = parse_model(src).unwrap();
    assert_eq!(m.state_vars[0].visibility, Visibility::Hidden);
    assert_eq!(m.state_vars[1].init, Some(1));
    assert_eq!(m.predicates[0].literal, Literal::new("mode", 2));
    assert_eq!(m.predicates[0].duration_ms, 500);
    assert_eq!(m.decisions().len(), 2);
    assert!(check_model(&m).is_empty(), "{:?}", check_model(&m));
    let reparsed = parse_model(&print_model(&m)).unwrap();
    assert_eq!(reparsed, m);
}

#[test]
fn extracts_iron_predicates_in_reference_order() {
    let m = parse_model(IRON).unwrap();
    let ex = extract_predicates(&m).unwrap();
    let described: Vec<String> = ex
        .predicates
        .iter()
        .map(|p| describe_predicate(&m, p))
        .collect();
    assert_eq!(
        described,
        [
            "move_eq_f_t1 = (!move, 60s)",
            "position_eq_f_t1 = (!position, 60s)",
            "move_eq_f_t2 = (!move, 900s)",
            "position_eq_t_t2 = (position, 900s)",
        ]
    );
    let conds: Vec<String> = ex
        .model
        .decisions()
        .iter()
        .map(|(_, c)| expr_to_string(c))
        .collect();
    assert_eq!(
        conds,
        [
            "position",
            "move_eq_f_t2 && position_eq_t_t2",
            "move_eq_f_t1 && position_eq_f_t1",
        ]
    );
    // The rewritten model is itself a valid source.
    let again = parse_model(&print_model(&ex.model)).unwrap();
    assert_eq!(again, ex.model);
    assert_eq!(extract_predicates(&again).unwrap().model, ex.model);
}

#[test]
fn identical_held_literals_share_one_predicate() {
    let src = "model m { input a: bool; input b: bool; output o: bool; logic {
        if (held(!a, 60s)) { o = 1; } else if (held(!a && b, 60s)) { o = 0; } else { o = 1; } } }";
    let ex = extract_predicates(&parse_model(src).unwrap()).unwrap();
    let ids: Vec<&str> = ex.predicates.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids, ["a_eq_f_t1", "b_eq_t_t1"]);
    let conds: Vec<String> = ex.model.decisions().iter().map(|(_, c)| expr_to_string(c)).collect();
    assert_eq!(conds, ["a_eq_f_t1", "a_eq_f_t1 && b_eq_t_t1"]);
}

#[test]
fn non_conjunctive_held_is_rejected() {
    let src = "model m { input a: bool; input b: bool; output o: bool; logic {
        if (held(a || b, 60s)) { o = 1; } else { o = 0; } } }";
    let err = extract_predicates(&parse_model(src).unwrap()).unwrap_err();
    assert!(matches!(err, ExtractError::UnsupportedTemporalFormula { .. }));
}

#[test]
fn iron_is_clean() {
    assert_eq!(check_model(&parse_model(IRON).unwrap()), vec![]);
}

#[test]
fn incomplete_output_on_else_leaf() {
    let src = "model m { input a: bool; output heating: bool; state s: bool;
        logic { if (a) { heating = 1; } else { s = 1; } } }";
    let diags = check_model(&parse_model(src).unwrap());
    assert_eq!(diags.len(), 1);
    assert_eq!(
        diags[0].kind,
        DiagnosticKind::IncompleteOutput {
            output: "heating".into(),
            path: "ne".parse().unwrap()
        }
    );
    assert_eq!(
        diags[0].render("m.ctl"),
        "m.ctl:2:46: error: output `heating` is not assigned on path ne"
    );
}

#[test]
fn contradictory_nested_condition_is_unreachable() {
    let src = "model m { input position: bool; output o: bool; logic {
        if (position) { o = 0; } else { if (position) { o = 1; } else { o = 0; } } } }";
    let diags = check_model(&parse_model(src).unwrap());
    assert_eq!(
        diags.iter().map(|d| &d.kind).collect::<Vec<_>>(),
        [&DiagnosticKind::UnreachableLeaf {
            path: "net".parse().unwrap()
        }]
    );
}

#[test]
fn type_errors() {
    let src = "model m { input n: int 0..5; output o: bool; output k: int 0..3; logic {
        if (n) { o = 2; k = 1; } else { o = n > 2; k = 7; } } }";
    let diags = check_model(&parse_model(src).unwrap());
    let msgs: Vec<String> = diags.iter().map(|d| d.message()).collect();
    assert_eq!(msgs.len(), 3, "{msgs:?}");
    assert!(msgs[0].contains("condition `n` is an integer"));
    assert!(msgs[1].contains("cannot assign `2` to `o`"));
    assert!(msgs[2].contains("value 7 is outside"));
}

#[test]
fn node_ids_round_trip_and_prefixes() {
    let id: NodeId = "nte".parse().unwrap();
    assert_eq!(id, NodeId(vec![true, false]));
    assert_eq!(id.to_string(), "nte");
    assert!(NodeId::root().is_prefix_of(&id));
    assert!(!NodeId(vec![false]).is_prefix_of(&id));
    assert!("xt".parse::<NodeId>().is_err());
}

// ---- round-trip property ----

fn arb_bool_expr(depth: u32) -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        Just(Expr::var("a")),
        Just(Expr::var("b")),
        Just(Expr::pred("p")),
        Just(Expr::Bool(true)),
        (0i64..4).prop_map(|c| Expr::Binary(BinOp::Eq, Box::new(Expr::var("n")), Box::new(Expr::Const(c)))),
        (1u64..5000).prop_map(|d| Expr::Held {
            formula: Box::new(Expr::and(Expr::not(Expr::var("a")), Expr::var("b"))),
            duration_ms: d,
        }),
        arb_int_expr(2).prop_map(|e| Expr::Binary(BinOp::Lt, Box::new(e), Box::new(Expr::Const(3)))),
    ];
    leaf.prop_recursive(depth, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::not),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| Expr::and(x, y)),
            (inner.clone(), inner).prop_map(|(x, y)| Expr::or(x, y)),
        ]
    })
    .boxed()
}

fn arb_int_expr(depth: u32) -> BoxedStrategy<Expr> {
    prop_oneof![Just(Expr::var("n")), (0i64..100).prop_map(Expr::Const)]
        .prop_recursive(depth, 8, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner.clone())
                    .prop_map(|(x, y)| Expr::Binary(BinOp::Add, Box::new(x), Box::new(y))),
                (inner.clone(), inner)
                    .prop_map(|(x, y)| Expr::Binary(BinOp::Sub, Box::new(x), Box::new(y))),
            ]
        })
        .boxed()
}

fn arb_node(depth: u32) -> BoxedStrategy<Node> {
    let leaf = (arb_bool_expr(1), arb_int_expr(1)).prop_map(|(o, k)| Node::Leaf {
        assigns: vec![
            Assign { target: "o".into(), value: o, span: Span::default() },
            Assign { target: "k".into(), value: k, span: Span::default() },
        ],
        span: Span::default(),
    });
    leaf.prop_recursive(depth, 16, 2, |inner| {
        (arb_bool_expr(2), inner.clone(), inner).prop_map(|(cond, t, e)| Node::Decision {
            cond,
            then_branch: Box::new(t),
            else_branch: Box::new(e),
            span: Span::default(),
        })
    })
    .boxed()
}

const HEADER: &str = "model r { input a: bool; input b: bool; input n: int 0..3;
    output o: bool; output k: int -100..100; pred p = held(!a, 2s); logic { o = 1; k = 0; } }";

proptest! {
    #[test]
    fn print_parse_is_identity(body in arb_node(3)) {
        let mut m = parse_model(HEADER).unwrap();
        m.body = body;
        let printed = print_model(&m);
        let reparsed = parse_model(&printed).unwrap();
        prop_assert_eq!(&reparsed, &m);
        prop_assert_eq!(print_model(&reparsed), printed);
    }
}
