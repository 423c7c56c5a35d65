use serde::{Deserialize, Serialize};

use crate::base::augment;
use crate::error::{Error, Result};

/// One affine coefficient: a concrete value or a hole `??`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coef {
    Const(f64),
    Hole,
}

/// Affine expression `W_1·x_1 + … + W_p·x_p + W_{p+1}`; the last entry is
/// the constant term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expr {
    pub coeffs: Vec<Coef>,
}

impl Expr {
    pub fn from_values(values: &[f64]) -> Self {
        Self {
            coeffs: values.iter().map(|&v| Coef::Const(v)).collect(),
        }
    }

    /// The constant `v` over `p` features.
    pub fn constant(p: usize, v: f64) -> Self {
        let mut values = vec![0.0; p + 1];
        values[p] = v;
        Self::from_values(&values)
    }

    pub fn has_holes(&self) -> bool {
        self.coeffs.iter().any(|c| matches!(c, Coef::Hole))
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        self.coeffs
            .iter()
            .map(|c| match c {
                Coef::Const(v) => Ok(*v),
                Coef::Hole => Err(Error::UnfilledHole),
            })
            .collect()
    }

    /// Value at an augmented feature vector.
    pub fn eval(&self, xa: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (c, x) in self.coeffs.iter().zip(xa) {
            match c {
                Coef::Const(v) => acc += v * x,
                Coef::Hole => return Err(Error::UnfilledHole),
            }
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stmt {
    Assign {
        output: usize,
        expr: Expr,
    },
    /// Takes `then` iff `cond > 0`.
    If {
        cond: Expr,
        then: Box<Stmt>,
        els: Box<Stmt>,
    },
    Seq(Box<Stmt>, Box<Stmt>),
}

impl Stmt {
    pub fn assign(output: usize, expr: Expr) -> Self {
        Stmt::Assign { output, expr }
    }

    pub fn if_else(cond: Expr, then: Stmt, els: Stmt) -> Self {
        Stmt::If {
            cond,
            then: Box::new(then),
            els: Box::new(els),
        }
    }

    pub fn seq(first: Stmt, second: Stmt) -> Self {
        Stmt::Seq(Box::new(first), Box::new(second))
    }

    /// Right-nested sequence of `stmts`; `None` when empty.
    pub fn seq_all(stmts: Vec<Stmt>) -> Option<Stmt> {
        stmts.into_iter().rev().reduce(|tail, s| Stmt::seq(s, tail))
    }

    fn visit_exprs<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match self {
            Stmt::Assign { expr, .. } => f(expr),
            Stmt::If { cond, then, els } => {
                f(cond);
                then.visit_exprs(f);
                els.visit_exprs(f);
            }
            Stmt::Seq(a, b) => {
                a.visit_exprs(f);
                b.visit_exprs(f);
            }
        }
    }

    fn max_output(&self) -> Option<usize> {
        match self {
            Stmt::Assign { output, .. } => Some(*output),
            Stmt::If { then, els, .. } => then.max_output().max(els.max_output()),
            Stmt::Seq(a, b) => a.max_output().max(b.max_output()),
        }
    }
}

/// One executed assignment: output index and its expression's coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub output: usize,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpProgram {
    pub p: usize,
    pub m: usize,
    pub body: Stmt,
}

impl ImpProgram {
    pub fn new(p: usize, m: usize, body: Stmt) -> Result<Self> {
        let prog = Self { p, m, body };
        prog.validate()?;
        Ok(prog)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument(
                "program needs at least one output".into(),
            ));
        }
        if let Some(o) = self.body.max_output() {
            if o >= self.m {
                return Err(Error::InvalidArgument(format!(
                    "output o{o} out of range for m = {}",
                    self.m
                )));
            }
        }
        let mut bad = None;
        self.body.visit_exprs(&mut |e| {
            if e.coeffs.len() != self.p + 1 {
                bad.get_or_insert(e.coeffs.len());
            }
        });
        match bad {
            Some(actual) => Err(Error::DimensionMismatch {
                expected: self.p + 1,
                actual,
            }),
            None => Ok(()),
        }
    }

    pub fn has_holes(&self) -> bool {
        let mut holes = false;
        self.body.visit_exprs(&mut |e| holes |= e.has_holes());
        holes
    }

    /// Runs the program; outputs start at 0.0.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.run(x, None)
    }

    /// [`eval`](Self::eval) that also records every executed assignment.
    pub fn eval_traced(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<TraceEntry>)> {
        let mut trace = Vec::new();
        let out = self.run(x, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn run(&self, x: &[f64], mut trace: Option<&mut Vec<TraceEntry>>) -> Result<Vec<f64>> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: x.len(),
            });
        }
        let xa = augment(x);
        let mut out = vec![0.0; self.m];
        let mut stack = vec![&self.body];
        while let Some(s) = stack.pop() {
            match s {
                Stmt::Assign { output, expr } => {
                    out[*output] = expr.eval(&xa)?;
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(TraceEntry {
                            output: *output,
                            expr: expr.clone(),
                        });
                    }
                }
                Stmt::If { cond, then, els } => {
                    stack.push(if cond.eval(&xa)? > 0.0 { then } else { els });
                }
                Stmt::Seq(a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
            }
        }
        Ok(out)
    }
}

/// Normalizes a statement so that no sequence has a conditional in its first
/// position: the statement following a conditional is re-attached at the end
/// of every branch. The result has the shape
/// `N ::= Assign | Seq(Assign, N) | If(E, N, N)`.
pub fn expand(stmt: &Stmt) -> Stmt {
    match stmt {
        Stmt::Assign { .. } => stmt.clone(),
        Stmt::If { cond, then, els } => Stmt::if_else(cond.clone(), expand(then), expand(els)),
        Stmt::Seq(a, b) => append(expand(a), &expand(b)),
    }
}

/// Appends `tail` at the end of every path through normalized `head`.
fn append(head: Stmt, tail: &Stmt) -> Stmt {
    match head {
        Stmt::Assign { .. } => Stmt::seq(head, tail.clone()),
        Stmt::If { cond, then, els } => {
            Stmt::if_else(cond, append(*then, tail), append(*els, tail))
        }
        Stmt::Seq(a, b) => Stmt::seq(*a, append(*b, tail)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: &[f64]) -> Expr {
        Expr::from_values(v)
    }

    #[test]
    fn linear_program() {
        let prog = ImpProgram::new(2, 1, Stmt::assign(0, e(&[1.0, 2.0, 0.0]))).unwrap();
        assert_eq!(prog.eval(&[-2.0, 3.0]).unwrap(), vec![4.0]);
        let c = ImpProgram::new(2, 1, Stmt::assign(0, Expr::constant(2, 5.0))).unwrap();
        assert_eq!(c.eval(&[7.0, -1.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn strict_condition() {
        let prog = ImpProgram::new(
            1,
            1,
            Stmt::if_else(
                e(&[1.0, -0.5]),
                Stmt::assign(0, Expr::constant(1, 1.0)),
                Stmt::assign(0, Expr::constant(1, -1.0)),
            ),
        )
        .unwrap();
        assert_eq!(prog.eval(&[0.5]).unwrap(), vec![-1.0]);
        assert_eq!(prog.eval(&[0.6]).unwrap(), vec![1.0]);
    }

    #[test]
    fn outputs_start_at_zero() {
        let prog = ImpProgram::new(0, 2, Stmt::assign(1, Expr::constant(0, 3.0))).unwrap();
        assert_eq!(prog.eval(&[]).unwrap(), vec![0.0, 3.0]);
    }

    #[test]
    fn holes_and_validation() {
        let prog = ImpProgram::new(
            1,
            1,
            Stmt::assign(
                0,
                Expr {
                    coeffs: vec![Coef::Hole, Coef::Const(1.0)],
                },
            ),
        )
        .unwrap();
        assert!(prog.has_holes());
        assert_eq!(prog.eval(&[1.0]), Err(Error::UnfilledHole));
        assert!(ImpProgram::new(1, 1, Stmt::assign(1, e(&[0.0, 0.0]))).is_err());
        assert!(ImpProgram::new(1, 1, Stmt::assign(0, e(&[0.0]))).is_err());
        assert!(prog.eval(&[]).is_err());
    }

    #[test]
    fn expand_moves_tail_into_branches() {
        let a = Stmt::assign(0, e(&[0.0, 1.0]));
        let b = Stmt::assign(0, e(&[0.0, 2.0]));
        let c = Stmt::assign(0, e(&[1.0, 0.0]));
        let s = Stmt::seq(
            Stmt::if_else(e(&[1.0, 0.0]), a.clone(), b.clone()),
            c.clone(),
        );
        let x = expand(&s);
        assert_eq!(
            x,
            Stmt::if_else(e(&[1.0, 0.0]), Stmt::seq(a, c.clone()), Stmt::seq(b, c))
        );
    }
}
