//! Torsion-free connections and what can be measured about them.
//!
//! Curvature convention, used everywhere downstream:
//!
//! ```text
//! R^l_{kij} = ∂_i Γ^l_{jk} − ∂_j Γ^l_{ik} + Γ^l_{im} Γ^m_{jk} − Γ^l_{jm} Γ^m_{ik}
//! Ric_{kj}  = R^l_{klj}
//! W^l_{kij} = R^l_{kij} − (δ^l_i Ric_{kj} − δ^l_j Ric_{ki}) / (n − 1)
//! ```
//!
//! so that `R^l_{kij}` are the components of `R(∂_i, ∂_j) ∂_k` and a space of
//! constant sectional curvature `C` has `Ric = (n − 1) C g`.

use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

use crate::exec::Strategy;
use crate::expr::{self, EvalError, ScalarField, Tape};
use crate::tensor::{dense_offset, field_determinant, TensorField, VectorField};
use crate::{Error, Result};

/// `Γ^k_{ij}` with the lower pair symmetric.
#[derive(Clone)]
pub struct AffineConnection {
    n: usize,
    symbols: Vec<ScalarField>,
    tape: OnceLock<Arc<Tape>>,
}

impl std::fmt::Debug for AffineConnection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineConnection")
            .field("n", &self.n)
            .field("symbols", &self.symbols)
            .finish()
    }
}

impl AffineConnection {
    /// `f(k, i, j)` is called for `i <= j` only; the other half is mirrored.
    pub fn new(n: usize, f: impl Fn(usize, usize, usize) -> ScalarField) -> Self {
        let mut symbols = vec![ScalarField::zero(n); n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let s = f(k, i, j);
                    assert_eq!(s.dim(), n);
                    symbols[(k * n + i) * n + j] = s.clone();
                    symbols[(k * n + j) * n + i] = s;
                }
            }
        }
        AffineConnection {
            n,
            symbols,
            tape: OnceLock::new(),
        }
    }

    /// The standard flat connection of affine space.
    pub fn flat(n: usize) -> Self {
        Self::new(n, |_, _, _| ScalarField::zero(n))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn symbol(&self, k: usize, i: usize, j: usize) -> &ScalarField {
        &self.symbols[(k * self.n + i) * self.n + j]
    }

    pub fn symbols(&self) -> &[ScalarField] {
        &self.symbols
    }

    pub fn tape(&self) -> &Tape {
        self.tape.get_or_init(|| Arc::new(Tape::compile(self.n, &self.symbols)))
    }

    /// All `n³` symbols at `x`, laid out as `[k][i][j]`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.tape().eval(x)
    }

    /// `Γ + ψ_i δ^k_j + ψ_j δ^k_i`: the projective change generated by `ψ`.
    pub fn projective_change(&self, psi: &ScalarField) -> AffineConnection {
        let n = self.n;
        let grad: Vec<ScalarField> = (0..n).map(|i| psi.diff(i)).collect();
        AffineConnection::new(n, |k, i, j| {
            let mut s = self.symbol(k, i, j).clone();
            if k == j {
                s = s + &grad[i];
            }
            if k == i {
                s = s + &grad[j];
            }
            s
        })
    }
}

/// A torsion-free connection together with a volume density `η`.
#[derive(Debug, Clone)]
pub struct EquiaffineStructure {
    pub connection: AffineConnection,
    pub eta: ScalarField,
    /// The generating gauge when the structure came from
    /// [`projective_connection_from_psi`].
    pub psi: Option<ScalarField>,
}

/// `Γ^k_{ij} = ψ_i δ^k_j + ψ_j δ^k_i` with `η = exp((n+1) ψ)`.
///
/// Geodesics of this connection are reparametrized straight lines, and
/// `∂_i ln η = Γ^k_{ki}` holds identically.
pub fn projective_connection_from_psi(psi: &ScalarField) -> EquiaffineStructure {
    let n = psi.dim();
    let connection = AffineConnection::flat(n).projective_change(psi);
    let factor = BigRational::from_integer(BigInt::from(n + 1));
    EquiaffineStructure {
        connection,
        eta: psi.scale(&factor).exp(),
        psi: Some(psi.clone()),
    }
}

/// Riemann, Ricci and projective Weyl components as symbolic fields.
#[derive(Clone)]
pub struct CurvatureData {
    n: usize,
    riemann: TensorField,
    ricci: TensorField,
    weyl: TensorField,
}

impl CurvatureData {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `R^l_{kij}`, stored as a rank-4 array `[l][k][i][j]`.
    pub fn riemann(&self) -> &TensorField {
        &self.riemann
    }

    /// `Ric_{kj}`.
    pub fn ricci(&self) -> &TensorField {
        &self.ricci
    }

    /// `W^l_{kij}`, same layout as `riemann`.
    pub fn weyl(&self) -> &TensorField {
        &self.weyl
    }
}

pub fn curvature(gamma: &AffineConnection) -> CurvatureData {
    let n = gamma.dim();
    let dgamma: Vec<Vec<ScalarField>> = (0..n)
        .map(|d| gamma.symbols().iter().map(|s| s.diff(d)).collect())
        .collect();
    let g = |k: usize, i: usize, j: usize| gamma.symbol(k, i, j);
    let dg = |d: usize, k: usize, i: usize, j: usize| &dgamma[d][(k * n + i) * n + j];
    let mut riemann = vec![ScalarField::zero(n); n.pow(4)];
    for l in 0..n {
        for k in 0..n {
            for i in 0..n {
                for j in i + 1..n {
                    let mut r = dg(i, l, j, k) - dg(j, l, i, k);
                    for m in 0..n {
                        r = r + g(l, i, m) * g(m, j, k) - g(l, j, m) * g(m, i, k);
                    }
                    riemann[dense_offset(n, &[l, k, j, i])] = -&r;
                    riemann[dense_offset(n, &[l, k, i, j])] = r;
                }
            }
        }
    }
    let riemann = TensorField::new(n, 4, riemann);
    let ricci = TensorField::from_fn(n, 2, |idx| {
        let (k, j) = (idx[0], idx[1]);
        expr::sum(n, (0..n).map(|l| riemann.component(&[l, k, l, j])))
    });
    let weyl = if n < 2 {
        riemann.clone()
    } else {
        let inv = BigRational::new(BigInt::one(), BigInt::from(n - 1));
        TensorField::from_fn(n, 4, |idx| {
            let (l, k, i, j) = (idx[0], idx[1], idx[2], idx[3]);
            let mut w = riemann.component(idx).clone();
            if l == i {
                w = w - ricci.component(&[k, j]).scale(&inv);
            }
            if l == j {
                w = w + ricci.component(&[k, i]).scale(&inv);
            }
            w
        })
    };
    CurvatureData {
        n,
        riemann,
        ricci,
        weyl,
    }
}

/// `P_{kj} = Ric_(kj) / (n − 1) − Ric_[kj] / (n + 1)`.
pub fn projective_schouten(curv: &CurvatureData) -> TensorField {
    let n = curv.dim();
    let ric = curv.ricci();
    let half_over = |d: usize| ScalarField::constant(n, BigRational::new(BigInt::one(), BigInt::from(2 * d)));
    let (a, b) = (half_over(n - 1), half_over(n + 1));
    TensorField::from_fn(n, 2, |idx| {
        let (kj, jk) = (ric.component(idx), ric.component(&[idx[1], idx[0]]));
        (kj + jk) * &a - (kj - jk) * &b
    })
}

/// `C_{ijk} = ∇_i P_{jk} − ∇_j P_{ik}`.
pub fn projective_cotton(curv: &CurvatureData, gamma: &AffineConnection) -> TensorField {
    let n = curv.dim();
    let dp = covariant_derivative(&projective_schouten(curv), gamma);
    TensorField::from_fn(n, 3, |idx| {
        let (i, j, k) = (idx[0], idx[1], idx[2]);
        dp.component(&[i, j, k]) - dp.component(&[j, i, k])
    })
}

/// `(∇T)_{i0 i1…ip} = ∂_{i0} T_{i1…ip} − Σ_a T_{i1…k…ip} Γ^k_{i_a i0}`.
pub fn covariant_derivative(t: &TensorField, gamma: &AffineConnection) -> TensorField {
    let n = t.dim();
    assert_eq!(n, gamma.dim());
    let p = t.rank();
    let partials: Vec<TensorField> = (0..n).map(|d| t.map(|c| c.diff(d))).collect();
    TensorField::from_fn(n, p + 1, |idx| {
        let i0 = idx[0];
        let rest = &idx[1..];
        let mut acc = partials[i0].component(rest).clone();
        let mut moved = rest.to_vec();
        for a in 0..p {
            let ia = rest[a];
            for k in 0..n {
                let s = gamma.symbol(k, ia, i0);
                if s.is_zero() {
                    continue;
                }
                moved[a] = k;
                let c = t.component(&moved);
                if !c.is_zero() {
                    acc = acc - c * s;
                }
            }
            moved[a] = ia;
        }
        acc
    })
}

/// `(dω)_{i0…ip} = Σ_a (−1)^a ∂_{i_a} ω_{i0…î_a…ip}`.
pub fn exterior_derivative(omega: &TensorField) -> TensorField {
    let n = omega.dim();
    let p = omega.rank();
    let partials: Vec<TensorField> = (0..n).map(|d| omega.map(|c| c.diff(d))).collect();
    TensorField::from_fn(n, p + 1, |idx| {
        let mut acc = ScalarField::zero(n);
        for a in 0..=p {
            let rest: Vec<usize> = idx
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(_, &v)| v)
                .collect();
            let term = partials[idx[a]].component(&rest);
            acc = if a % 2 == 0 { acc + term } else { acc - term };
        }
        acc
    })
}

/// Levi-Civita connection of a metric, with the symbolic inverse metric and
/// determinant used to build it.
#[derive(Debug, Clone)]
pub struct LeviCivita {
    pub connection: AffineConnection,
    /// `g^{ij}`, stored as a rank-2 array.
    pub inverse_metric: TensorField,
    pub determinant: ScalarField,
}

/// Symbolic inverse by cofactors; supported for `n <= 4`.
pub fn inverse_metric(g: &TensorField) -> Result<(TensorField, ScalarField)> {
    let n = g.dim();
    if g.rank() != 2 {
        return Err(Error::Invalid("metric must have rank 2".into()));
    }
    if n > 4 {
        return Err(Error::Invalid(format!(
            "symbolic metric inverse supports n <= 4, got {n}"
        )));
    }
    let det = field_determinant(n, n, |i, j| g.component(&[i, j]).clone());
    let inv = TensorField::from_fn(n, 2, |idx| {
        let (i, j) = (idx[0], idx[1]);
        // adj(g)_{ij} = (−1)^{i+j} minor_{ji}
        let rows: Vec<usize> = (0..n).filter(|&r| r != j).collect();
        let cols: Vec<usize> = (0..n).filter(|&c| c != i).collect();
        let minor = if n == 1 {
            ScalarField::one(n)
        } else {
            field_determinant(n, n - 1, |a, b| g.component(&[rows[a], cols[b]]).clone())
        };
        let cof = if (i + j) % 2 == 0 { minor } else { -minor };
        cof / &det
    });
    Ok((inv, det))
}

/// `Γ^k_{ij} = ½ g^{kl} (∂_i g_{lj} + ∂_j g_{li} − ∂_l g_{ij})`.
pub fn levi_civita(g: &TensorField) -> Result<LeviCivita> {
    let n = g.dim();
    let (inverse_metric, determinant) = inverse_metric(g)?;
    let dg: Vec<TensorField> = (0..n).map(|d| g.map(|c| c.diff(d))).collect();
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let connection = AffineConnection::new(n, |k, i, j| {
        let mut acc = ScalarField::zero(n);
        for l in 0..n {
            let first = dg[i].component(&[l, j]) + dg[j].component(&[l, i]) - dg[l].component(&[i, j]);
            if first.is_zero() {
                continue;
            }
            acc = acc + inverse_metric.component(&[k, l]) * first;
        }
        acc.scale(&half)
    });
    Ok(LeviCivita {
        connection,
        inverse_metric,
        determinant,
    })
}

/// Sectional curvature of the plane spanned by `∂_a, ∂_b` at `x`.
pub fn sectional_curvature(curv: &CurvatureData, g: &TensorField, a: usize, b: usize, x: &[f64]) -> Result<f64> {
    let n = curv.dim();
    let r = curv.riemann().evaluate(x)?;
    let gx = g.evaluate(x)?;
    let num: f64 = (0..n).map(|l| gx.get(&[a, l]) * r.get(&[l, b, a, b])).sum();
    let den = gx.get(&[a, a]) * gx.get(&[b, b]) - gx.get(&[a, b]).powi(2);
    if den == 0.0 {
        return Err(Error::SingularMetric { point: x.to_vec() });
    }
    Ok(num / den)
}

/// Residual evidence behind a [`ClassifyReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyResiduals {
    /// max |∂_i ln η − Γ^k_{ki}|
    pub volume: f64,
    /// max |Ric_{ij} − Ric_{ji}|
    pub ricci_asymmetry: f64,
    /// max |Ric_{ij}|
    pub ricci: f64,
    /// max |W^l_{kij}|
    pub weyl: f64,
    /// max |∇_i P_{jk} − ∇_j P_{ik}| for the projective Schouten tensor `P`.
    /// Only computed when n = 2, where `W` vanishes identically; 0 otherwise.
    pub cotton: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyReport {
    pub equiaffine: bool,
    pub ricci_flat: bool,
    pub projectively_flat: bool,
    /// Equiaffine and projectively flat.
    pub equiprojective: bool,
    pub residuals: ClassifyResiduals,
    pub tolerance: f64,
    pub points_used: usize,
    pub points_skipped: usize,
}

pub fn classify(s: &EquiaffineStructure, points: &[Vec<f64>], tol: f64) -> Result<ClassifyReport> {
    classify_with(s, points, tol, Strategy::default())
}

pub fn classify_with(
    s: &EquiaffineStructure,
    points: &[Vec<f64>],
    tol: f64,
    strategy: Strategy,
) -> Result<ClassifyReport> {
    let n = s.connection.dim();
    let curv = curvature(&s.connection);
    let log_grad: Vec<ScalarField> = (0..n).map(|i| s.eta.diff(i) / &s.eta).collect();
    let traces: Vec<ScalarField> = (0..n)
        .map(|i| expr::sum(n, (0..n).map(|k| s.connection.symbol(k, k, i))))
        .collect();
    let volume = Tape::compile(n, &log_grad.iter().zip(&traces).map(|(a, b)| a - b).collect::<Vec<_>>());
    let cotton = (n == 2).then(|| Tape::compile(n, projective_cotton(&curv, &s.connection).components()));
    let per_point = strategy.map(points, |x| -> Result<ClassifyResiduals, EvalError> {
        let v = volume.eval(x)?;
        let ric = curv.ricci().evaluate(x)?;
        let w = curv.weyl().evaluate(x)?;
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((ric.get(&[i, j]) - ric.get(&[j, i])).abs());
            }
        }
        Ok(ClassifyResiduals {
            volume: v.iter().fold(0.0, |m, r| m.max(r.abs())),
            ricci_asymmetry: asym,
            ricci: ric.max_abs(),
            weyl: w.max_abs(),
            cotton: match &cotton {
                Some(t) => t.eval(x)?.iter().fold(0.0, |m, r| m.max(r.abs())),
                None => 0.0,
            },
        })
    });
    let mut acc = ClassifyResiduals {
        volume: 0.0,
        ricci_asymmetry: 0.0,
        ricci: 0.0,
        weyl: 0.0,
        cotton: 0.0,
    };
    let mut used = 0;
    for r in per_point.into_iter().flatten() {
        used += 1;
        acc.volume = acc.volume.max(r.volume);
        acc.ricci_asymmetry = acc.ricci_asymmetry.max(r.ricci_asymmetry);
        acc.ricci = acc.ricci.max(r.ricci);
        acc.weyl = acc.weyl.max(r.weyl);
        acc.cotton = acc.cotton.max(r.cotton);
    }
    if used == 0 {
        return Err(Error::NoSamplePoints);
    }
    let equiaffine = acc.volume <= tol && acc.ricci_asymmetry <= tol;
    let projectively_flat = acc.weyl <= tol && acc.cotton <= tol;
    Ok(ClassifyReport {
        equiaffine,
        ricci_flat: equiaffine && acc.ricci <= tol,
        projectively_flat,
        equiprojective: equiaffine && projectively_flat,
        residuals: acc,
        tolerance: tol,
        points_used: used,
        points_skipped: points.len() - used,
    })
}

/// Field of endomorphisms `(A)^k_j`, stored row-major `[k][j]`.
#[derive(Debug, Clone)]
pub struct EndomorphismField {
    pub components: TensorField,
}

impl EndomorphismField {
    pub fn trace(&self) -> ScalarField {
        let n = self.components.dim();
        expr::sum(n, (0..n).map(|k| self.components.component(&[k, k])))
    }
}

/// `∇_j X^k = ∂_j X^k + Γ^k_{jm} X^m`, as `[k][j]`.
pub fn vector_covariant_derivative(x: &VectorField, gamma: &AffineConnection) -> TensorField {
    let n = x.dim();
    TensorField::from_fn(n, 2, |idx| {
        let (k, j) = (idx[0], idx[1]);
        let mut acc = x.component(k).diff(j);
        for m in 0..n {
            let s = gamma.symbol(k, j, m);
            if !s.is_zero() && !x.component(m).is_zero() {
                acc = acc + s * x.component(m);
            }
        }
        acc
    })
}

/// `A_X = L_X − ∇_X`, which for a torsion-free connection is `−∇X`.
pub fn a_operator(x: &VectorField, gamma: &AffineConnection) -> EndomorphismField {
    EndomorphismField {
        components: vector_covariant_derivative(x, gamma).map(|c| -c),
    }
}

/// `div X = Σ ∂_i X^i + X^i ∂_i ln η`.
pub fn divergence(x: &VectorField, eta: &ScalarField) -> ScalarField {
    let n = x.dim();
    let mut acc = expr::sum(n, &(0..n).map(|i| x.component(i).diff(i)).collect::<Vec<_>>());
    for i in 0..n {
        acc = acc + x.component(i) * (eta.diff(i) / eta);
    }
    acc
}

fn max_over_points<F>(points: &[Vec<f64>], strategy: Strategy, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64, EvalError> + Sync + Send,
{
    let values = strategy.try_map(points, |x| f(x))?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// `max_x max_{k,j} |(A_X)^k_j + (div X / n) δ^k_j|` with `div X = ∇_i X^i`.
pub fn concircular_residual(x: &VectorField, gamma: &AffineConnection, points: &[Vec<f64>]) -> Result<f64> {
    let n = x.dim();
    let a = a_operator(x, gamma);
    let div = -a.trace();
    let inv_n = BigRational::new(BigInt::one(), BigInt::from(n));
    let residual = TensorField::from_fn(n, 2, |idx| {
        let c = a.components.component(idx).clone();
        if idx[0] == idx[1] {
            c + div.scale(&inv_n)
        } else {
            c
        }
    });
    max_over_points(points, Strategy::default(), |p| Ok(residual.evaluate(p)?.max_abs()))
}

/// Residual of the integrability condition of a concircular field,
/// `∂_i(div X) δ^l_j − ∂_j(div X) δ^l_i − n R^l_{kij} X^k`.
pub fn ricci_identity_residual(
    x: &VectorField,
    gamma: &AffineConnection,
    curv: &CurvatureData,
    points: &[Vec<f64>],
) -> Result<f64> {
    let n = x.dim();
    let div = -a_operator(x, gamma).trace();
    let grad: Vec<ScalarField> = (0..n).map(|i| div.diff(i)).collect();
    let nn = BigRational::from_integer(BigInt::from(n));
    let residual = TensorField::from_fn(n, 3, |idx| {
        let (l, i, j) = (idx[0], idx[1], idx[2]);
        let mut acc = ScalarField::zero(n);
        if l == j {
            acc = acc + &grad[i];
        }
        if l == i {
            acc = acc - &grad[j];
        }
        for k in 0..n {
            acc = acc - (curv.riemann().component(&[l, k, i, j]) * x.component(k)).scale(&nn);
        }
        acc
    });
    max_over_points(points, Strategy::default(), |p| Ok(residual.evaluate(p)?.max_abs()))
}

/// The `n + 1` concircular fields `e^{−ψ} x` and `e^{−ψ} ∂_i` of the
/// connection generated by `ψ` (Euler field first).
pub fn concircular_basis(psi: &ScalarField) -> Vec<VectorField> {
    let n = psi.dim();
    let weight = (-psi).exp();
    let mut out = vec![VectorField::from_fn(n, |k| &weight * &ScalarField::var(n, k))];
    for i in 0..n {
        out.push(VectorField::from_fn(n, |k| {
            if k == i {
                weight.clone()
            } else {
                ScalarField::zero(n)
            }
        }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::DomainBox;

    fn psi3() -> ScalarField {
        ScalarField::parse("x1^2/10 - x2*x3/7 + x1*x2*x3/5 + x3/4", 3).unwrap()
    }

    fn points(n: usize) -> Vec<Vec<f64>> {
        DomainBox::cube(n, 0.8).halton_points(50, 1)
    }

    #[test]
    fn flat_connection_has_no_curvature() {
        let c = curvature(&AffineConnection::flat(3));
        assert!(c.riemann().components().iter().all(ScalarField::is_zero));
        assert!(c.weyl().components().iter().all(ScalarField::is_zero));
    }

    #[test]
    fn curvature_is_antisymmetric_and_satisfies_bianchi() {
        let n = 3;
        let gamma = AffineConnection::new(n, |k, i, j| {
            ScalarField::parse(
                &format!("x{}*x{}/{} + {}/7", (k + i) % n + 1, (j + 1) % n + 1, k + i + j + 2, k),
                n,
            )
            .unwrap()
        });
        let c = curvature(&gamma);
        for x in points(n) {
            let r = c.riemann().evaluate(&x).unwrap();
            for l in 0..n {
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            assert!((r.get(&[l, k, i, j]) + r.get(&[l, k, j, i])).abs() < 1e-12);
                            let cyc = r.get(&[l, k, i, j]) + r.get(&[l, i, j, k]) + r.get(&[l, j, k, i]);
                            assert!(cyc.abs() < 1e-12);
                        }
                    }
                }
            }
            let w = c.weyl().evaluate(&x).unwrap();
            for k in 0..n {
                for j in 0..n {
                    let tr: f64 = (0..n).map(|l| w.get(&[l, k, l, j])).sum();
                    assert!(tr.abs() < 1e-12, "{tr}");
                }
            }
        }
    }

    #[test]
    fn psi_generated_structures_are_equiprojective() {
        for text in [
            "x1^2/10 - x2*x3/7 + x1*x2*x3/5 + x3/4",
            "ln(1 + x1^2 + x2^2 + x3^2)/3",
            "0",
        ] {
            let psi = ScalarField::parse(text, 3).unwrap();
            let s = projective_connection_from_psi(&psi);
            let report = classify(&s, &points(3), 1e-9).unwrap();
            assert!(report.equiaffine, "{text}: {report:?}");
            assert!(report.equiprojective, "{text}: {report:?}");
            assert!(report.residuals.weyl < 1e-10);
        }
    }

    #[test]
    fn generic_connection_is_not_projectively_flat() {
        let n = 3;
        let gamma = AffineConnection::new(n, |k, i, j| {
            if (k, i, j) == (0, 0, 0) {
                ScalarField::var(n, 1)
            } else {
                ScalarField::zero(n)
            }
        });
        let s = EquiaffineStructure {
            connection: gamma,
            eta: ScalarField::one(n),
            psi: None,
        };
        let report = classify(&s, &points(n), 1e-9).unwrap();
        assert!(report.residuals.weyl > 0.1);
        assert!(!report.equiprojective);
        assert!(!report.equiaffine);
    }

    fn structure(gamma: AffineConnection) -> EquiaffineStructure {
        let n = gamma.dim();
        EquiaffineStructure {
            connection: gamma,
            eta: ScalarField::one(n),
            psi: None,
        }
    }

    #[test]
    fn surface_projective_flatness_uses_cotton() {
        // a non-closed 1-form still changes the connection projectively
        let phi = [
            ScalarField::parse("x2^2/3 + x1/5", 2).unwrap(),
            ScalarField::parse("x1*x2/4", 2).unwrap(),
        ];
        let changed = AffineConnection::new(2, |k, i, j| {
            let mut s = ScalarField::zero(2);
            if k == j {
                s = s + &phi[i];
            }
            if k == i {
                s = s + &phi[j];
            }
            s
        });
        let curv = curvature(&changed);
        let pts = points(2);
        let ric = crate::killing::max_abs_over(curv.ricci().components(), &pts, Strategy::Sequential).unwrap();
        assert!(ric > 1e-3);
        let r = classify(&structure(changed), &pts, 1e-9).unwrap();
        assert!(r.projectively_flat, "{r:?}");
        assert!(r.residuals.cotton < 1e-10);

        let generic = AffineConnection::new(2, |k, i, j| match (k, i, j) {
            (1, 0, 0) => ScalarField::parse("x1^2 + x2/2", 2).unwrap(),
            (0, 0, 1) => ScalarField::parse("x2^2/3", 2).unwrap(),
            _ => ScalarField::zero(2),
        });
        let r = classify(&structure(generic), &pts, 1e-9).unwrap();
        assert_eq!(r.residuals.weyl, 0.0);
        assert!(r.residuals.cotton > 1e-3, "{r:?}");
        assert!(!r.projectively_flat);
    }

    #[test]
    fn covariant_derivative_reduces_to_partials_when_flat() {
        let n = 2;
        let t = TensorField::covector(vec![
            ScalarField::parse("x1^2*x2", n).unwrap(),
            ScalarField::parse("sin(x1)", n).unwrap(),
        ]);
        let d = covariant_derivative(&t, &AffineConnection::flat(n));
        for (k, c) in d.components().iter().enumerate() {
            let (i0, i1) = (k / n, k % n);
            assert_eq!(c.to_string(), t.component(&[i1]).diff(i0).to_string());
        }
    }

    #[test]
    fn euler_and_constant_fields_are_concircular_in_flat_space() {
        let n = 3;
        let flat = AffineConnection::flat(n);
        let euler = VectorField::from_fn(n, |k| ScalarField::var(n, k));
        assert_eq!(concircular_residual(&euler, &flat, &points(n)).unwrap(), 0.0);
        let a = a_operator(&euler, &flat);
        assert_eq!(
            a.trace().as_constant().unwrap(),
            &BigRational::from_integer((-3).into())
        );
        let constant = VectorField::parse(&["1", "-2", "1/3"]).unwrap();
        assert_eq!(concircular_residual(&constant, &flat, &points(n)).unwrap(), 0.0);
        let bent = VectorField::parse(&["x1^2", "0", "0"]).unwrap();
        assert!(concircular_residual(&bent, &flat, &points(n)).unwrap() > 0.1);
    }

    #[test]
    fn concircular_basis_on_generated_structure() {
        let psi = psi3();
        let s = projective_connection_from_psi(&psi);
        let curv = curvature(&s.connection);
        let pts = points(3);
        for x in concircular_basis(&psi) {
            assert!(concircular_residual(&x, &s.connection, &pts).unwrap() < 1e-10);
            assert!(ricci_identity_residual(&x, &s.connection, &curv, &pts).unwrap() < 1e-8);
            // trace A_X = −div X with respect to η
            let a = a_operator(&x, &s.connection).trace();
            let div = divergence(&x, &s.eta);
            for p in &pts {
                assert!((a.eval(p).unwrap() + div.eval(p).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn exterior_derivative_squares_to_zero() {
        let n = 3;
        let f = TensorField::covector(vec![
            ScalarField::parse("x2*x3^2", n).unwrap(),
            ScalarField::parse("exp(x1)*x3", n).unwrap(),
            ScalarField::parse("x1*x2", n).unwrap(),
        ]);
        let dd = exterior_derivative(&exterior_derivative(&f));
        for x in points(n) {
            assert!(dd.evaluate(&x).unwrap().max_abs() < 1e-12);
        }
    }
}
