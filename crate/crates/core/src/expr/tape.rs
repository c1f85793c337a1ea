use std::collections::HashMap;
use std::sync::Arc;

use super::{apply_func, EvalError, EvalErrorKind, Expr, Func, Node, ScalarField};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Pow(usize, i32),
    Call(Func, usize),
}

/// A batch of fields flattened into one instruction list.
///
/// Subtrees shared between fields (same allocation) are evaluated once per
/// point, which matters for tensors whose components all carry the same
/// `exp(k*psi)` factor.
#[derive(Debug, Clone)]
pub struct Tape {
    dim: usize,
    ops: Vec<Op>,
    nodes: Vec<Expr>,
    outputs: Vec<usize>,
}

impl Tape {
    pub fn compile(dim: usize, fields: &[ScalarField]) -> Tape {
        let mut tape = Tape {
            dim,
            ops: Vec::new(),
            nodes: Vec::new(),
            outputs: Vec::with_capacity(fields.len()),
        };
        let mut seen = HashMap::new();
        for f in fields {
            debug_assert_eq!(f.dim(), dim);
            let slot = tape.emit(f.expr(), &mut seen);
            tape.outputs.push(slot);
        }
        tape
    }

    fn emit(&mut self, e: &Expr, seen: &mut HashMap<*const Node, usize>) -> usize {
        let key = Arc::as_ptr(e);
        if let Some(&slot) = seen.get(&key) {
            return slot;
        }
        let op = match e.as_ref() {
            Node::Const(_, v) => Op::Const(*v),
            Node::Var(i) => Op::Var(*i),
            Node::Add(a, b) => Op::Add(self.emit(a, seen), self.emit(b, seen)),
            Node::Sub(a, b) => Op::Sub(self.emit(a, seen), self.emit(b, seen)),
            Node::Mul(a, b) => Op::Mul(self.emit(a, seen), self.emit(b, seen)),
            Node::Div(a, b) => Op::Div(self.emit(a, seen), self.emit(b, seen)),
            Node::Neg(a) => Op::Neg(self.emit(a, seen)),
            Node::Pow(a, k) => Op::Pow(self.emit(a, seen), *k),
            Node::Call(f, a) => Op::Call(*f, self.emit(a, seen)),
        };
        self.ops.push(op);
        self.nodes.push(e.clone());
        let slot = self.ops.len() - 1;
        seen.insert(key, slot);
        slot
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Instruction count after sharing.
    pub fn op_count(&self) -> usize {
        self.ops.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.outputs.len()];
        let mut scratch = Vec::new();
        self.eval_into(x, &mut scratch, &mut out)?;
        Ok(out)
    }

    /// Evaluates into `out`, reusing `scratch` between calls.
    pub fn eval_into(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<(), EvalError> {
        debug_assert_eq!(x.len(), self.dim);
        scratch.clear();
        scratch.reserve(self.ops.len());
        for (slot, op) in self.ops.iter().enumerate() {
            let fail = |kind| EvalError::at(kind, &self.nodes[slot]);
            let v = match *op {
                Op::Const(v) => v,
                Op::Var(i) => x[i],
                Op::Add(a, b) => scratch[a] + scratch[b],
                Op::Sub(a, b) => scratch[a] - scratch[b],
                Op::Mul(a, b) => scratch[a] * scratch[b],
                Op::Div(a, b) => {
                    if scratch[b] == 0.0 {
                        return Err(fail(EvalErrorKind::DivisionByZero));
                    }
                    scratch[a] / scratch[b]
                }
                Op::Neg(a) => -scratch[a],
                Op::Pow(a, k) => {
                    if scratch[a] == 0.0 && k < 0 {
                        return Err(fail(EvalErrorKind::DivisionByZero));
                    }
                    scratch[a].powi(k)
                }
                Op::Call(f, a) => apply_func(f, scratch[a]).ok_or_else(|| fail(EvalErrorKind::Domain))?,
            };
            if !v.is_finite() {
                return Err(fail(EvalErrorKind::NonFinite));
            }
            scratch.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[slot];
        }
        Ok(())
    }
}
