use crate::error::{Error, Result};
use crate::learners::Model;
use crate::tree::{heap_index, DecisionTree};

use super::ast::{expand, Expr, ImpProgram, Stmt};

/// Largest tree height [`program_to_tree`] will build.
pub const DEFAULT_HEIGHT_CAP: usize = 12;

/// Unpadded tree shape of a normalized program. Leaves hold one
/// `(p+1)`-row per output.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Leaf(Vec<Vec<f64>>),
    Split(Vec<f64>, Box<Node>, Box<Node>),
}

impl Node {
    pub(crate) fn height(&self) -> usize {
        match self {
            Node::Leaf(_) => 0,
            Node::Split(_, l, r) => 1 + l.height().max(r.height()),
        }
    }
}

fn build(stmt: &Stmt, mut theta: Vec<Vec<f64>>) -> Result<Node> {
    match stmt {
        Stmt::Assign { output, expr } => {
            theta[*output] = expr.values()?;
            Ok(Node::Leaf(theta))
        }
        Stmt::Seq(first, rest) => match first.as_ref() {
            Stmt::Assign { output, expr } => {
                theta[*output] = expr.values()?;
                build(rest, theta)
            }
            _ => build(&expand(stmt), theta),
        },
        Stmt::If { cond, then, els } => {
            let c = cond.values()?;
            Ok(Node::Split(
                c,
                Box::new(build(then, theta.clone())?),
                Box::new(build(els, theta)?),
            ))
        }
    }
}

/// Tree shape of `prog`: Expand, then accumulate each path's final
/// assignments. Outputs never assigned on a path are 0.
pub(crate) fn program_nodes(prog: &ImpProgram) -> Result<Node> {
    prog.validate()?;
    if prog.has_holes() {
        return Err(Error::UnfilledHole);
    }
    build(&expand(&prog.body), vec![vec![0.0; prog.p + 1]; prog.m])
}

fn fill(tree: &mut DecisionTree, node: &Node, depth: usize, pos: usize) {
    if depth == tree.height {
        let Node::Leaf(rows) = node else {
            unreachable!("node deeper than tree height")
        };
        tree.leaves[pos] = rows.concat();
        return;
    }
    match node {
        Node::Split(c, l, r) => {
            tree.nodes[heap_index(depth, pos)] = c.clone();
            fill(tree, l, depth + 1, 2 * pos);
            fill(tree, r, depth + 1, 2 * pos + 1);
        }
        // zero predicate: never > 0, so every input continues right
        Node::Leaf(_) => {
            fill(tree, node, depth + 1, 2 * pos);
            fill(tree, node, depth + 1, 2 * pos + 1);
        }
    }
}

/// Converts a hole-free program into an equivalent complete decision tree,
/// padding short paths with all-zero predicates.
pub fn program_to_tree(prog: &ImpProgram) -> Result<DecisionTree> {
    program_to_tree_with_cap(prog, DEFAULT_HEIGHT_CAP)
}

pub fn program_to_tree_with_cap(prog: &ImpProgram, cap: usize) -> Result<DecisionTree> {
    let node = program_nodes(prog)?;
    let height = node.height();
    if height > cap {
        return Err(Error::HeightCap { height, cap });
    }
    let mut tree = DecisionTree::zeros(height, prog.p, prog.m);
    fill(&mut tree, &node, 0, 0);
    Ok(tree)
}

/// Nested conditionals mirroring `tree`, one assignment per output at each
/// leaf.
pub fn tree_to_program(tree: &DecisionTree) -> ImpProgram {
    tree_to_program_counted(tree).0
}

/// [`tree_to_program`] plus the number of tree nodes visited.
pub fn tree_to_program_counted(tree: &DecisionTree) -> (ImpProgram, usize) {
    fn walk(tree: &DecisionTree, depth: usize, pos: usize, visits: &mut usize) -> Stmt {
        *visits += 1;
        if depth == tree.height {
            let assigns = (0..tree.m)
                .map(|o| Stmt::assign(o, Expr::from_values(tree.leaf_row(pos, o))))
                .collect();
            return Stmt::seq_all(assigns).expect("m >= 1");
        }
        let cond = Expr::from_values(tree.node(depth, pos));
        let then = walk(tree, depth + 1, 2 * pos, visits);
        let els = walk(tree, depth + 1, 2 * pos + 1, visits);
        Stmt::if_else(cond, then, els)
    }
    let mut visits = 0;
    let body = walk(tree, 0, 0, &mut visits);
    (
        ImpProgram {
            p: tree.p,
            m: tree.m,
            body,
        },
        visits,
    )
}

/// Program form of a learned model over `p` features.
pub fn program_from_model(model: &Model, p: usize) -> ImpProgram {
    match model {
        Model::Const { values } => {
            let assigns = values
                .iter()
                .enumerate()
                .map(|(o, &v)| Stmt::assign(o, Expr::constant(p, v)));
            ImpProgram {
                p,
                m: values.len(),
                body: Stmt::seq_all(assigns.collect()).expect("m >= 1"),
            }
        }
        Model::Linear { p, m, weights } => {
            let assigns = weights
                .chunks(p + 1)
                .enumerate()
                .map(|(o, row)| Stmt::assign(o, Expr::from_values(row)));
            ImpProgram {
                p: *p,
                m: *m,
                body: Stmt::seq_all(assigns.collect()).expect("m >= 1"),
            }
        }
        Model::Tree { tree } => tree_to_program(tree),
    }
}
