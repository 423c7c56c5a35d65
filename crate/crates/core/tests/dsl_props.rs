use pbr_core::dsl::{
    emit_code, expand, parse_program, program_from_model, program_to_tree, tree_to_program, Expr,
    ImpProgram, Stmt,
};
use pbr_core::learners::{Model, Template};
use pbr_core::tree::{infer_tree, tree_to_net, DecisionTree};
use proptest::prelude::*;

const P: usize = 3;
const M: usize = 2;

fn coef() -> impl Strategy<Value = f64> {
    prop_oneof![
        2 => Just(0.0),
        1 => (-5i32..=5).prop_map(f64::from),
        5 => -10.0..10.0f64,
        1 => -1e-6..1e-6f64,
        1 => -1e8..1e8f64,
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    prop::collection::vec(coef(), P + 1).prop_map(|v| Expr::from_values(&v))
}

fn stmt() -> impl Strategy<Value = Stmt> {
    let leaf = (0..M, expr()).prop_map(|(o, e)| Stmt::assign(o, e));
    leaf.prop_recursive(4, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Stmt::seq(a, b)),
            (expr(), inner.clone(), inner).prop_map(|(c, a, b)| Stmt::if_else(c, a, b)),
        ]
    })
}

fn program() -> impl Strategy<Value = ImpProgram> {
    stmt().prop_map(|s| ImpProgram::new(P, M, s).unwrap())
}

fn inputs() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, P), 1..40)
}

fn tree() -> impl Strategy<Value = DecisionTree> {
    (1usize..=3).prop_flat_map(|h| {
        let t = Template::Tree { height: h };
        prop::collection::vec(coef(), t.num_params(P, M)).prop_map(move |flat| {
            match Model::from_flat(&t, P, M, &flat).unwrap() {
                Model::Tree { tree } => tree,
                _ => unreachable!(),
            }
        })
    })
}

fn model() -> impl Strategy<Value = Model> {
    prop_oneof![
        prop::collection::vec(coef(), 1..=M).prop_map(|values| Model::Const { values }),
        prop::collection::vec(coef(), M * (P + 1)).prop_map(|weights| Model::Linear {
            p: P,
            m: M,
            weights
        }),
        tree().prop_map(|tree| Model::Tree { tree }),
    ]
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
}

proptest! {
    #[test]
    fn tree_form_agrees_with_program(prog in program(), xs in inputs()) {
        let tree = program_to_tree(&prog).unwrap();
        for x in &xs {
            prop_assert!(close(&prog.eval(x).unwrap(), &tree.eval(x)));
        }
    }

    #[test]
    fn expand_preserves_trace(prog in program(), xs in inputs()) {
        let expanded = ImpProgram { body: expand(&prog.body), ..prog.clone() };
        for x in &xs {
            prop_assert_eq!(prog.eval_traced(x).unwrap(), expanded.eval_traced(x).unwrap());
        }
    }

    #[test]
    fn tree_program_tree_is_equivalent(t in tree(), xs in inputs()) {
        let back = program_to_tree(&tree_to_program(&t)).unwrap();
        for x in &xs {
            prop_assert!(close(&t.eval(x), &back.eval(x)));
        }
    }

    #[test]
    fn emit_parse_emit_is_a_fixpoint(m in model()) {
        let p = if matches!(m, Model::Const { .. }) { 0 } else { P };
        let first = emit_code(&program_from_model(&m, p), None).unwrap();
        let again = emit_code(&parse_program(&first).unwrap(), None).unwrap();
        prop_assert_eq!(first, again);
    }

    #[test]
    fn hard_net_matches_tree(t in tree(), eps in 0.01..1.0f64, xs in inputs()) {
        let net = tree_to_net(&t, eps);
        prop_assert_eq!(&infer_tree(&net), &t);
        for x in &xs {
            prop_assert!(close(&net.forward_hard(x), &t.eval(x)));
        }
    }
}
