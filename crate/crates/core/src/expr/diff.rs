use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;

use super::{add, call, div, int, konst, mul, neg, pow, sub, Expr, Func, Node};

/// Shared subexpressions are differentiated once, so the cost stays linear
/// in the number of distinct nodes.
pub(super) fn diff(e: &Expr, var: usize) -> Expr {
    let mut memo = HashMap::new();
    diff_memo(e, var, &mut memo)
}

fn diff_memo(e: &Expr, var: usize, memo: &mut HashMap<*const Node, Expr>) -> Expr {
    let key = Arc::as_ptr(e);
    if let Some(d) = memo.get(&key) {
        return d.clone();
    }
    let mut d = |x: &Expr| diff_memo(x, var, memo);
    let out = match e.as_ref() {
        Node::Const(..) => int(0),
        Node::Var(i) => int(i64::from(*i == var)),
        Node::Add(a, b) => add(d(a), d(b)),
        Node::Sub(a, b) => sub(d(a), d(b)),
        Node::Mul(a, b) => {
            let (da, db) = (d(a), d(b));
            add(mul(da, b.clone()), mul(a.clone(), db))
        }
        Node::Div(a, b) => {
            let da = d(a);
            let db = d(b);
            // a/b with constant denominator stays a quotient
            if matches!(db.as_ref(), Node::Const(r, _) if num_traits::Zero::is_zero(r)) {
                div(da, b.clone())
            } else {
                div(sub(mul(da, b.clone()), mul(a.clone(), db)), pow(b.clone(), 2))
            }
        }
        Node::Neg(a) => neg(d(a)),
        Node::Pow(a, k) => {
            let coeff = konst(BigRational::from_integer(BigInt::from(*k)));
            mul(mul(coeff, pow(a.clone(), k - 1)), d(a))
        }
        Node::Call(f, a) => {
            let da = d(a);
            match f {
                Func::Exp => mul(e.clone(), da),
                Func::Ln => div(da, a.clone()),
                Func::Sin => mul(call(Func::Cos, a.clone()), da),
                Func::Cos => mul(neg(call(Func::Sin, a.clone())), da),
                Func::Sqrt => div(da, mul(int(2), e.clone())),
            }
        }
    };
    memo.insert(key, out.clone());
    out
}

#[cfg(test)]
mod tests {
    use crate::expr::ScalarField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SAMPLES: &[&str] = &[
        "x1^2*x2 - 3*x3",
        "exp(x1*x2)/(1 + x3^2)",
        "ln(2 + x1^2 + x2^2)*sin(x3)",
        "sqrt(3 + x1)*cos(x2 - x3)",
        "(x1 - x2)^(-2) + x3^5/7",
        "exp(-(x1^2 + x2^2 + x3^2)/2)*x1",
    ];

    fn central_difference(f: &ScalarField, x: &[f64], i: usize, h: f64) -> f64 {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (f.eval(&xp).unwrap() - f.eval(&xm).unwrap()) / (2.0 * h)
    }

    fn random_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
        // keep (x1 - x2) away from zero for the negative-power sample
        let x1 = rng.gen_range(0.5..1.0);
        let x2 = rng.gen_range(-1.0..0.0);
        let x3 = rng.gen_range(-1.0..1.0);
        vec![x1, x2, x3]
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for text in SAMPLES {
            let f = ScalarField::parse(text, 3).unwrap();
            let grads: Vec<_> = (0..3).map(|i| f.diff(i)).collect();
            for _ in 0..100 {
                let x = random_point(&mut rng);
                for (i, g) in grads.iter().enumerate() {
                    let exact = g.eval(&x).unwrap();
                    let approx = central_difference(&f, &x, i, 1e-5);
                    let rel = (exact - approx).abs() / exact.abs().max(1.0);
                    assert!(rel < 1e-6, "{text} d/dx{} at {x:?}: {exact} vs {approx}", i + 1);
                }
            }
        }
    }

    #[test]
    fn mixed_partials_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for text in SAMPLES {
            let f = ScalarField::parse(text, 3).unwrap();
            for i in 0..3 {
                for j in 0..i {
                    let fij = f.diff(i).diff(j);
                    let fji = f.diff(j).diff(i);
                    for _ in 0..20 {
                        let x = random_point(&mut rng);
                        let a = fij.eval(&x).unwrap();
                        let b = fji.eval(&x).unwrap();
                        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{text}");
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = ScalarField::parse(SAMPLES[1], 3).unwrap();
        let g = ScalarField::parse(SAMPLES[2], 3).unwrap();
        let a = ScalarField::parse("3/2", 3).unwrap();
        let b = ScalarField::parse("-7", 3).unwrap();
        let combo = &(&a * &f) + &(&b * &g);
        for i in 0..3 {
            let lhs = combo.diff(i);
            let rhs = &(&a * &f.diff(i)) + &(&b * &g.diff(i));
            for _ in 0..20 {
                let x = random_point(&mut rng);
                let l = lhs.eval(&x).unwrap();
                let r = rhs.eval(&x).unwrap();
                assert!((l - r).abs() <= 1e-12 * l.abs().max(1.0));
            }
        }
    }

    #[test]
    fn shared_subexpressions_are_differentiated_once() {
        // x^(2^40) as 40 nested self-products; a tree walk would visit 2^40 nodes
        let mut e = ScalarField::parse("x1", 1).unwrap();
        for _ in 0..40 {
            e = &e * &e;
        }
        let d = e.diff(0);
        let tape = crate::expr::Tape::compile(1, &[d]);
        assert_eq!(tape.eval(&[1.0]).unwrap(), vec![2f64.powi(40)]);
    }
}
