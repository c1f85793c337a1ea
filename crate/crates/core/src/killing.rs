//! Killing–Yano forms and Killing tensors of projectively flat structures.
//!
//! In the chart where the connection is `Γ(ψ) = ψ_i δ^k_j + ψ_j δ^k_i`, every
//! Killing–Yano `p`-form is `e^{(p+1)ψ}(A_{k i1…ip} x^k + B_{i1…ip})` with
//! skew constants `A`, `B`, and every Killing tensor of degree `p` is
//! `e^{2pψ}` times a flat-space Killing tensor, itself a polynomial of degree
//! at most `p`. The flat-space systems are also assembled as exact linear
//! systems so their solution spaces can be counted independently.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::exec::Strategy;
use crate::expr::{ScalarField, Tape};
use crate::geometry::{covariant_derivative, AffineConnection, EquiaffineStructure};
use crate::linalg::{lstsq, LeastSquares, RationalMatrix};
use crate::poly::{self, multinomial, Exponents, Polynomial};
use crate::tensor::{
    canonical_tuples, dense_tuples, sort_with_sign, sym_product, volume_dual, CoeffTensor, IndexMode, MultiIndex,
    Symmetry, TensorField, VectorField,
};
use crate::{Error, Result};

/// The closed form implemented by [`kt_dim`].
pub const KT_DIM_FORMULA: &str = "(n+p-1)! (n+p)! / ((n-1)! n! p! (p+1)!)";

/// The product formula as it is usually quoted, with its stray leading `p`
/// and undefined `m`; kept for reports only.
pub const KT_DIM_PRINTED: &str = "p(p+1)^2(p+2)^2...(m+p-1)^2(m+p) / (p!(p+1)!)";

fn big_factorial(k: usize) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, j| acc * BigInt::from(j))
}

fn check_ky_degree(n: usize, p: usize) -> Result<()> {
    if p == 0 || p >= n {
        return Err(Error::DegreeOutOfRange {
            n,
            p,
            allowed: "1 <= p <= n-1",
        });
    }
    Ok(())
}

/// `(n+1)! / ((p+1)! (n−p)!)`, the number of independent Killing–Yano
/// `p`-forms.
pub fn ky_dim(n: usize, p: usize) -> Result<u128> {
    check_ky_degree(n, p)?;
    let v = big_factorial(n + 1) / (big_factorial(p + 1) * big_factorial(n - p));
    Ok(v.to_u128().expect("dimension fits in u128"))
}

/// Number of skew `A` plus skew `B` coefficients: `C(n, p+1) + C(n, p)`.
pub fn ky_coefficient_count(n: usize, p: usize) -> u128 {
    let c = |a: usize, b: usize| crate::tensor::binomial(a, b) as u128;
    c(n, p + 1) + c(n, p)
}

/// Number of independent Killing tensors of degree `p`, see [`KT_DIM_FORMULA`].
pub fn kt_dim(n: usize, p: usize) -> Result<u128> {
    if p == 0 || n == 0 {
        return Err(Error::DegreeOutOfRange {
            n,
            p,
            allowed: "p >= 1",
        });
    }
    let num = big_factorial(n + p - 1) * big_factorial(n + p);
    let den = big_factorial(n - 1) * big_factorial(n) * big_factorial(p) * big_factorial(p + 1);
    debug_assert!((&num % &den).is_zero());
    Ok((num / den).to_u128().expect("dimension fits in u128"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlatKind {
    /// `∂_j ω_{i i2…ip} + ∂_i ω_{j i2…ip} = 0` on skew `ω`.
    KillingYano,
    /// Symmetrized `∂_{i0} φ_{i1…ip} = 0` on symmetric `φ`.
    Killing,
}

impl FlatKind {
    fn mode(self) -> IndexMode {
        match self {
            FlatKind::KillingYano => IndexMode::StrictlyIncreasing,
            FlatKind::Killing => IndexMode::NonDecreasing,
        }
    }
}

/// Flat-space Killing equations on a polynomial ansatz, as an exact linear
/// system in the monomial coefficients.
///
/// Unknown `c * monomials.len() + m` is the coefficient of monomial `m` in
/// canonical component `c`. Every equation only involves unknowns of one
/// total degree, so the kernel is computed block by block.
#[derive(Debug, Clone)]
pub struct FlatSystem {
    kind: FlatKind,
    n: usize,
    p: usize,
    max_degree: u32,
    components: Vec<Vec<usize>>,
    monomials: Vec<Exponents>,
    rows: Vec<BTreeMap<usize, BigRational>>,
}

fn add_entry(row: &mut BTreeMap<usize, BigRational>, col: usize, v: BigRational) {
    let e = row.entry(col).or_insert_with(BigRational::zero);
    *e += v;
    if e.is_zero() {
        row.remove(&col);
    }
}

impl FlatSystem {
    pub fn new(kind: FlatKind, n: usize, p: usize, max_degree: u32) -> Result<Self> {
        match kind {
            FlatKind::KillingYano => check_ky_degree(n, p)?,
            FlatKind::Killing if p == 0 => {
                return Err(Error::DegreeOutOfRange {
                    n,
                    p,
                    allowed: "p >= 1",
                });
            }
            FlatKind::Killing => {}
        }
        let components = canonical_tuples(n, p, kind.mode());
        let monomials = poly::monomials(n, max_degree);
        let mono_index: HashMap<&Exponents, usize> = monomials.iter().enumerate().map(|(k, m)| (m, k)).collect();
        let mut system = FlatSystem {
            kind,
            n,
            p,
            max_degree,
            components,
            monomials: monomials.clone(),
            rows: Vec::new(),
        };
        let lower = if max_degree == 0 {
            Vec::new()
        } else {
            poly::monomials(n, max_degree - 1)
        };
        let mode = kind.mode();
        // (derivative slot, component tuple) pairs summed in each equation
        let equations: Vec<Vec<(usize, Vec<usize>)>> = match kind {
            FlatKind::KillingYano => {
                let mut eqs = Vec::new();
                for rest in canonical_tuples(n, p - 1, IndexMode::StrictlyIncreasing) {
                    for i in 0..n {
                        for j in i..n {
                            let mut a = vec![j];
                            a.extend(&rest);
                            let mut b = vec![i];
                            b.extend(&rest);
                            eqs.push(vec![(i, a), (j, b)]);
                        }
                    }
                }
                eqs
            }
            FlatKind::Killing => canonical_tuples(n, p + 1, IndexMode::NonDecreasing)
                .into_iter()
                .map(|k| {
                    (0..=p)
                        .map(|a| {
                            let rest: Vec<usize> =
                                k.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, &v)| v).collect();
                            (k[a], rest)
                        })
                        .collect()
                })
                .collect(),
        };
        for eq in &equations {
            for target in &lower {
                let mut row = BTreeMap::new();
                for (d, tuple) in eq {
                    let (sorted, sign) = match kind {
                        FlatKind::KillingYano => sort_with_sign(tuple),
                        FlatKind::Killing => {
                            let mut s = tuple.clone();
                            s.sort_unstable();
                            (s, 1)
                        }
                    };
                    if sign == 0 {
                        continue;
                    }
                    let comp = MultiIndex::new(sorted, mode).expect("sorted tuple").rank(n);
                    let mut source = target.clone();
                    source[*d] += 1;
                    let mono = mono_index[&source];
                    let factor = BigRational::from_integer(BigInt::from(i64::from(source[*d]) * sign));
                    add_entry(&mut row, system.column(comp, mono), factor);
                }
                system.rows.push(row);
            }
        }
        system.rows.retain(|r| !r.is_empty());
        Ok(system)
    }

    pub fn kind(&self) -> FlatKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// Canonical component tuples in unknown order.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn monomials(&self) -> &[Exponents] {
        &self.monomials
    }

    fn column(&self, comp: usize, mono: usize) -> usize {
        comp * self.monomials.len() + mono
    }

    pub fn unknowns(&self) -> usize {
        self.components.len() * self.monomials.len()
    }

    pub fn equations(&self) -> usize {
        self.rows.len()
    }

    /// The whole system as one matrix.
    pub fn matrix(&self) -> RationalMatrix {
        RationalMatrix::from_sparse_rows(self.unknowns(), self.rows.clone())
    }

    fn column_degree(&self, col: usize) -> u32 {
        poly::degree(&self.monomials[col % self.monomials.len()])
    }

    /// Exact kernel basis, ordered by monomial degree and then by free
    /// column.
    pub fn null_space(&self) -> Vec<Vec<BigRational>> {
        self.null_space_with(Strategy::default())
    }

    pub fn null_space_with(&self, strategy: Strategy) -> Vec<Vec<BigRational>> {
        let degrees: Vec<u32> = (0..=self.max_degree).collect();
        let blocks = strategy.map(&degrees, |&d| {
            let cols: Vec<usize> = (0..self.unknowns()).filter(|&c| self.column_degree(c) == d).collect();
            let local: HashMap<usize, usize> = cols.iter().enumerate().map(|(k, &c)| (c, k)).collect();
            let rows: Vec<BTreeMap<usize, BigRational>> = self
                .rows
                .iter()
                .filter(|r| r.keys().next().is_some_and(|&c| self.column_degree(c) == d))
                .map(|r| r.iter().map(|(c, v)| (local[c], v.clone())).collect())
                .collect();
            let block = RationalMatrix::from_sparse_rows(cols.len(), rows);
            block
                .null_space()
                .into_iter()
                .map(|v| {
                    let mut full = vec![BigRational::zero(); self.unknowns()];
                    for (k, x) in v.into_iter().enumerate() {
                        full[cols[k]] = x;
                    }
                    full
                })
                .collect::<Vec<_>>()
        });
        blocks.into_iter().flatten().collect()
    }

    pub fn nullity(&self) -> usize {
        self.null_space().len()
    }

    /// One polynomial per canonical component.
    pub fn solution(&self, v: &[BigRational]) -> Vec<Polynomial> {
        assert_eq!(v.len(), self.unknowns());
        (0..self.components.len())
            .map(|c| {
                let mut poly = Polynomial::zero(self.n);
                for (m, exps) in self.monomials.iter().enumerate() {
                    poly.add_term(exps.clone(), v[self.column(c, m)].clone());
                }
                poly
            })
            .collect()
    }
}

/// Kernel dimension of the flat Killing–Yano system on quadratic
/// polynomials. Quadratic terms are admitted on purpose: the system itself
/// must rule them out.
pub fn ky_oracle_dim(n: usize, p: usize) -> Result<usize> {
    Ok(FlatSystem::new(FlatKind::KillingYano, n, p, 2)?.nullity())
}

/// Kernel dimension of the flat Killing system on polynomials of degree
/// at most `p`.
pub fn kt_oracle_dim(n: usize, p: usize) -> Result<usize> {
    Ok(FlatSystem::new(FlatKind::Killing, n, p, p as u32)?.nullity())
}

/// Where a basis element came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    /// Unit skew `A` coefficient on the given canonical index (0-based).
    A(Vec<usize>),
    /// Unit skew `B` coefficient.
    B(Vec<usize>),
    /// Kernel vector number `k` of the flat Killing system.
    NullSpace(usize),
    /// Closed conformal Killing form built from a Killing–Yano form of one
    /// degree lower.
    Closed(Box<Provenance>),
}

impl Provenance {
    pub fn is_closed(&self) -> bool {
        matches!(self, Provenance::Closed(_))
    }
}

fn write_index(f: &mut fmt::Formatter<'_>, idx: &[usize]) -> fmt::Result {
    let parts: Vec<String> = idx.iter().map(|i| (i + 1).to_string()).collect();
    write!(f, "[{}]", parts.join(","))
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::A(idx) => {
                f.write_str("A")?;
                write_index(f, idx)
            }
            Provenance::B(idx) => {
                f.write_str("B")?;
                write_index(f, idx)
            }
            Provenance::NullSpace(k) => write!(f, "N{k}"),
            Provenance::Closed(inner) => write!(f, "closed({inner})"),
        }
    }
}

/// `e^{k ψ}`, kept as the literal `1` when `ψ = 0` or `k = 0`.
pub fn gauge_weight(psi: &ScalarField, k: i64) -> ScalarField {
    if psi.is_zero() || k == 0 {
        return ScalarField::one(psi.dim());
    }
    psi.scale(&BigRational::from_integer(BigInt::from(k))).exp()
}

/// Tensor field whose components are `weight · flat`, with `flat` given on
/// canonical indices of the declared mode.
fn weighted_field(
    n: usize,
    rank: usize,
    mode: IndexMode,
    flat: &[Polynomial],
    weight: &ScalarField,
) -> (TensorField, Vec<Polynomial>) {
    let polys: Vec<ScalarField> = flat.iter().map(Polynomial::to_field).collect();
    let mut dense = Vec::with_capacity(n.pow(rank as u32));
    let mut dense_polys = Vec::with_capacity(n.pow(rank as u32));
    for idx in dense_tuples(n, rank) {
        let (sorted, sign) = match mode {
            IndexMode::StrictlyIncreasing => sort_with_sign(&idx),
            _ => {
                let mut s = idx.clone();
                s.sort_unstable();
                (s, 1)
            }
        };
        if sign == 0 {
            dense.push(ScalarField::zero(n));
            dense_polys.push(Polynomial::zero(n));
            continue;
        }
        let c = MultiIndex::new(sorted, mode).expect("sorted").rank(n);
        let body = if sign < 0 { -&polys[c] } else { polys[c].clone() };
        dense.push(if body.is_zero() { body } else { weight * &body });
        dense_polys.push(if sign < 0 {
            flat[c].scale(&-BigRational::one())
        } else {
            flat[c].clone()
        });
    }
    (TensorField::new(n, rank, dense), dense_polys)
}

#[derive(Debug, Clone)]
pub struct KYElement {
    pub provenance: Provenance,
    /// Flat-space components (dense order), before the gauge weight.
    pub flat: Vec<Polynomial>,
    pub field: TensorField,
}

#[derive(Debug, Clone)]
pub struct KYBasis {
    pub n: usize,
    pub p: usize,
    pub psi: ScalarField,
    pub elements: Vec<KYElement>,
}

/// Flat components `A_{k I} x^k + B_I` on canonical skew indices `I`.
fn ky_flat_components(n: usize, p: usize, a: &CoeffTensor, b: &CoeffTensor) -> Vec<Polynomial> {
    canonical_tuples(n, p, IndexMode::StrictlyIncreasing)
        .into_iter()
        .map(|idx| {
            let mut poly = Polynomial::constant(n, b.get(&idx));
            let mut full = vec![0; p + 1];
            full[1..].copy_from_slice(&idx);
            for k in 0..n {
                full[0] = k;
                let c = a.get(&full);
                if !c.is_zero() {
                    poly = poly.add(&Polynomial::var(n, k).scale(&c));
                }
            }
            poly
        })
        .collect()
}

/// `e^{(p+1)ψ} (A_{k i1…ip} x^k + B_{i1…ip})` for given skew `A` (rank
/// `p+1`) and `B` (rank `p`).
pub fn ky_field(psi: &ScalarField, a: &CoeffTensor, b: &CoeffTensor) -> Result<TensorField> {
    let n = psi.dim();
    let p = b.rank();
    check_ky_degree(n, p)?;
    if a.rank() != p + 1 || a.symmetry() != Symmetry::Antisymmetric || b.symmetry() != Symmetry::Antisymmetric {
        return Err(Error::Invalid("A and B must be skew of ranks p+1 and p".into()));
    }
    let flat = ky_flat_components(n, p, a, b);
    let weight = gauge_weight(psi, p as i64 + 1);
    Ok(weighted_field(n, p, IndexMode::StrictlyIncreasing, &flat, &weight).0)
}

/// One element per canonical `A` (rank `p+1`) followed by one per canonical
/// `B` (rank `p`), each with a single unit coefficient.
pub fn build_ky_basis(n: usize, p: usize, psi: &ScalarField) -> Result<KYBasis> {
    check_ky_degree(n, p)?;
    assert_eq!(psi.dim(), n, "gauge dimension differs from n");
    let weight = gauge_weight(psi, p as i64 + 1);
    let sym = Symmetry::Antisymmetric;
    let mut elements = Vec::new();
    let mut push = |provenance: Provenance, a: CoeffTensor, b: CoeffTensor| {
        let flat = ky_flat_components(n, p, &a, &b);
        let (field, dense) = weighted_field(n, p, IndexMode::StrictlyIncreasing, &flat, &weight);
        elements.push(KYElement {
            provenance,
            flat: dense,
            field,
        });
    };
    for idx in canonical_tuples(n, p + 1, IndexMode::StrictlyIncreasing) {
        let a = CoeffTensor::unit(n, p + 1, sym, &idx);
        push(Provenance::A(idx), a, CoeffTensor::zeros(n, p, sym));
    }
    for idx in canonical_tuples(n, p, IndexMode::StrictlyIncreasing) {
        let b = CoeffTensor::unit(n, p, sym, &idx);
        push(Provenance::B(idx), CoeffTensor::zeros(n, p + 1, sym), b);
    }
    Ok(KYBasis {
        n,
        p,
        psi: psi.clone(),
        elements,
    })
}

#[derive(Debug, Clone)]
pub struct KTElement {
    pub provenance: Provenance,
    /// `A^{(q)}_{i1…ip j1…jq}` for `q = 0..=p`, symmetric in each group.
    pub coefficients: Vec<CoeffTensor>,
    /// Flat-space components (dense order), before the gauge weight.
    pub flat: Vec<Polynomial>,
    pub field: TensorField,
}

#[derive(Debug, Clone)]
pub struct KTBasis {
    pub n: usize,
    pub p: usize,
    pub psi: ScalarField,
    pub elements: Vec<KTElement>,
}

/// Splits canonical-component polynomials into the coefficient tensors of
/// `Σ_q A_{I j1…jq} x^{j1}…x^{jq}`.
fn kt_coefficients(n: usize, p: usize, comps: &[Vec<usize>], flat: &[Polynomial]) -> Vec<CoeffTensor> {
    let mut out: Vec<CoeffTensor> = (0..=p)
        .map(|q| CoeffTensor::zeros(n, p + q, Symmetry::Bisymmetric { first: p }))
        .collect();
    for (idx, poly) in comps.iter().zip(flat) {
        for (exps, c) in poly.terms() {
            let q = poly::degree(exps) as usize;
            let mut full = idx.clone();
            for (var, &e) in exps.iter().enumerate() {
                full.extend(std::iter::repeat_n(var, e as usize));
            }
            let count = BigRational::from_integer(multinomial(exps));
            out[q].set(&full, c / count);
        }
    }
    out
}

/// Killing tensors of degree `p` for `Γ(ψ)`: a rational kernel basis of the
/// flat system, each solution multiplied by `e^{2pψ}`.
pub fn build_kt_basis(n: usize, p: usize, psi: &ScalarField) -> Result<KTBasis> {
    build_kt_basis_with(n, p, psi, Strategy::default())
}

pub fn build_kt_basis_with(n: usize, p: usize, psi: &ScalarField, strategy: Strategy) -> Result<KTBasis> {
    assert_eq!(psi.dim(), n, "gauge dimension differs from n");
    let system = FlatSystem::new(FlatKind::Killing, n, p, p as u32)?;
    let weight = gauge_weight(psi, 2 * p as i64);
    let kernel = system.null_space_with(strategy);
    let elements = kernel
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let flat = system.solution(v);
            let coefficients = kt_coefficients(n, p, system.components(), &flat);
            let (field, dense) = weighted_field(n, p, IndexMode::NonDecreasing, &flat, &weight);
            KTElement {
                provenance: Provenance::NullSpace(k),
                coefficients,
                flat: dense,
                field,
            }
        })
        .collect();
    Ok(KTBasis {
        n,
        p,
        psi: psi.clone(),
        elements,
    })
}

/// `e^{2pψ} Σ_q A^{(q)}_{I J} x^J` from explicit coefficient tensors.
pub fn kt_field(psi: &ScalarField, p: usize, coefficients: &[CoeffTensor]) -> TensorField {
    let n = psi.dim();
    let comps = canonical_tuples(n, p, IndexMode::NonDecreasing);
    let flat: Vec<Polynomial> = comps
        .iter()
        .map(|idx| {
            let mut poly = Polynomial::zero(n);
            for a in coefficients {
                let q = a.rank() - p;
                for exps in poly::monomials(n, q as u32)
                    .into_iter()
                    .filter(|e| poly::degree(e) as usize == q)
                {
                    let mut full = idx.clone();
                    for (var, &e) in exps.iter().enumerate() {
                        full.extend(std::iter::repeat_n(var, e as usize));
                    }
                    let c = a.get(&full) * BigRational::from_integer(multinomial(&exps));
                    poly.add_term(exps, c);
                }
            }
            poly
        })
        .collect();
    weighted_field(n, p, IndexMode::NonDecreasing, &flat, &gauge_weight(psi, 2 * p as i64)).0
}

/// The flat-space equations applied exactly to dense polynomial
/// components; every entry is the zero polynomial for a flat solution.
pub fn flat_defects(kind: FlatKind, n: usize, p: usize, flat: &[Polynomial]) -> Vec<Polynomial> {
    assert_eq!(flat.len(), n.pow(p as u32), "expected dense components");
    let comp = |idx: &[usize]| &flat[crate::tensor::dense_offset(n, idx)];
    dense_tuples(n, p + 1)
        .into_iter()
        .map(|idx| match kind {
            FlatKind::KillingYano => {
                let mut swapped = idx.clone();
                swapped.swap(0, 1);
                comp(&idx[1..])
                    .derivative(idx[0])
                    .add(&comp(&swapped[1..]).derivative(swapped[0]))
            }
            FlatKind::Killing => {
                let mut acc = Polynomial::zero(n);
                let mut rotated = idx.clone();
                for _ in 0..=p {
                    acc = acc.add(&comp(&rotated[1..]).derivative(rotated[0]));
                    rotated.rotate_left(1);
                }
                acc
            }
        })
        .collect()
}

/// Largest absolute value of a batch of fields over the sample points.
pub fn max_abs_over(fields: &[ScalarField], points: &[Vec<f64>], strategy: Strategy) -> Result<f64> {
    let nonzero: Vec<ScalarField> = fields.iter().filter(|f| !f.is_zero()).cloned().collect();
    if nonzero.is_empty() || points.is_empty() {
        return Ok(0.0);
    }
    let tape = Tape::compile(nonzero[0].dim(), &nonzero);
    let per_point = strategy.try_map(points, |x| {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; tape.len()];
        tape.eval_into(x, &mut scratch, &mut out)?;
        Ok::<f64, crate::EvalError>(out.iter().fold(0.0, |m, v| m.max(v.abs())))
    })?;
    Ok(per_point.into_iter().fold(0.0, f64::max))
}

/// Components `∇_{i0} ω_{i1 …} + ∇_{i1} ω_{i0 …}` for `i0 <= i1`.
pub fn ky_equations(omega: &TensorField, gamma: &AffineConnection) -> Vec<ScalarField> {
    let n = omega.dim();
    let p = omega.rank();
    let nabla = covariant_derivative(omega, gamma);
    let mut out = Vec::new();
    for idx in dense_tuples(n, p + 1) {
        if idx[0] > idx[1] {
            continue;
        }
        let mut swapped = idx.clone();
        swapped.swap(0, 1);
        out.push(nabla.component(&idx) + nabla.component(&swapped));
    }
    out
}

/// Max of the symmetrized-pair residual `|∇_{i0}ω_{i1…} + ∇_{i1}ω_{i0…}|`.
pub fn ky_residual(omega: &TensorField, gamma: &AffineConnection, points: &[Vec<f64>]) -> Result<f64> {
    ky_residual_with(omega, gamma, points, Strategy::default())
}

pub fn ky_residual_with(
    omega: &TensorField,
    gamma: &AffineConnection,
    points: &[Vec<f64>],
    strategy: Strategy,
) -> Result<f64> {
    max_abs_over(&ky_equations(omega, gamma), points, strategy)
}

/// Cyclic sums `Σ_cyc ∇_{i0} φ_{i1…ip}`, one per index tuple.
pub fn kt_equations(phi: &TensorField, gamma: &AffineConnection) -> Vec<ScalarField> {
    let n = phi.dim();
    let p = phi.rank();
    let nabla = covariant_derivative(phi, gamma);
    dense_tuples(n, p + 1)
        .into_iter()
        .map(|idx| {
            let mut acc = ScalarField::zero(n);
            let mut rotated = idx.clone();
            for _ in 0..=p {
                acc = acc + nabla.component(&rotated);
                rotated.rotate_left(1);
            }
            acc
        })
        .collect()
}

pub fn kt_residual(phi: &TensorField, gamma: &AffineConnection, points: &[Vec<f64>]) -> Result<f64> {
    kt_residual_with(phi, gamma, points, Strategy::default())
}

pub fn kt_residual_with(
    phi: &TensorField,
    gamma: &AffineConnection,
    points: &[Vec<f64>],
    strategy: Strategy,
) -> Result<f64> {
    max_abs_over(&kt_equations(phi, gamma), points, strategy)
}

/// The `(n−p)`-form dual to `X_1 ∧ … ∧ X_p` with respect to `η`; a
/// Killing–Yano form whenever the `X_a` are concircular.
pub fn ky_from_concircular(fields: &[VectorField], s: &EquiaffineStructure) -> Result<TensorField> {
    volume_dual(fields, &s.eta)
}

/// `sym(ω_1 ⊗ … ⊗ ω_p)` of Killing–Yano 1-forms.
pub fn kt_from_ky1(forms: &[TensorField]) -> Result<TensorField> {
    if forms.is_empty() || forms.iter().any(|f| f.rank() != 1) {
        return Err(Error::Invalid("expected one or more Killing-Yano 1-forms".into()));
    }
    Ok(sym_product(forms))
}

/// `e^{−(p+1)ψ} ω`: carries a Killing–Yano form of `Γ̄ + ψ_i δ^k_j + ψ_j δ^k_i`
/// to one of `Γ̄`.
pub fn pullback_ky(omega: &TensorField, psi: &ScalarField) -> TensorField {
    let w = gauge_weight(psi, -(omega.rank() as i64 + 1));
    omega.scale(&w)
}

/// `e^{−2pψ} φ`: the Killing tensor counterpart of [`pullback_ky`].
pub fn pullback_kt(phi: &TensorField, psi: &ScalarField) -> TensorField {
    let w = gauge_weight(psi, -2 * phi.rank() as i64);
    phi.scale(&w)
}

/// Least-squares fit of `target` by `basis`, matching all components at
/// all points.
pub fn span_fit(target: &TensorField, basis: &[TensorField], points: &[Vec<f64>]) -> Result<LeastSquares> {
    if basis.is_empty() {
        return Err(Error::Invalid("empty basis".into()));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); basis.len()];
    let mut rhs = Vec::new();
    for x in points {
        rhs.extend_from_slice(target.evaluate(x)?.data());
        for (col, b) in columns.iter_mut().zip(basis) {
            col.extend_from_slice(b.evaluate(x)?.data());
        }
    }
    let rows: Vec<Vec<f64>> = (0..rhs.len()).map(|r| columns.iter().map(|c| c[r]).collect()).collect();
    lstsq(&rows, &rhs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryCondition {
    /// Number of `j` indices on the coefficient tensor checked.
    pub q: usize,
    pub passed: bool,
    /// Largest absolute cyclic sum found (exact zero when passing).
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    pub element: usize,
    pub conditions: Vec<SymmetryCondition>,
}

impl SymmetryReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }
}

/// For every element and every `q = 1..=p`, checks that the cyclic sum of
/// `A^{(q)}_{i1…ip j1…jq}` over `(i1, …, ip, jq)`, with `j1…j_{q−1}` held
/// fixed, vanishes exactly.
pub fn check_coefficient_symmetries(basis: &KTBasis) -> Vec<SymmetryReport> {
    let (n, p) = (basis.n, basis.p);
    basis
        .elements
        .iter()
        .enumerate()
        .map(|(k, el)| {
            let conditions = (1..=p)
                .map(|q| {
                    let a = &el.coefficients[q];
                    let mut worst = BigRational::zero();
                    for cyc in canonical_tuples(n, p + 1, IndexMode::NonDecreasing) {
                        for fixed in canonical_tuples(n, q - 1, IndexMode::NonDecreasing) {
                            let mut rotated = cyc.clone();
                            let mut acc = BigRational::zero();
                            for _ in 0..=p {
                                let mut full = rotated[..p].to_vec();
                                full.extend(&fixed);
                                full.push(rotated[p]);
                                acc += a.get(&full);
                                rotated.rotate_left(1);
                            }
                            if num_traits::Signed::abs(&acc) > worst {
                                worst = num_traits::Signed::abs(&acc);
                            }
                        }
                    }
                    SymmetryCondition {
                        q,
                        passed: worst.is_zero(),
                        max_violation: crate::expr::rational_to_f64(&worst),
                    }
                })
                .collect();
            SymmetryReport { element: k, conditions }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::projective_connection_from_psi;
    use crate::sampling::DomainBox;

    fn points(n: usize) -> Vec<Vec<f64>> {
        DomainBox::cube(n, 0.7).halton_points(24, 3)
    }

    #[test]
    fn quoted_dimensions() {
        assert_eq!(ky_dim(4, 2).unwrap(), 10);
        assert_eq!(ky_dim(2, 1).unwrap(), 3);
        assert_eq!(kt_dim(3, 1).unwrap(), 6);
        assert_eq!(kt_dim(2, 2).unwrap(), 6);
        assert_eq!(kt_dim(2, 1).unwrap(), 3);
        assert!(ky_dim(3, 3).is_err());
        assert!(ky_dim(3, 0).is_err());
    }

    #[test]
    fn ky_dim_matches_coefficient_count() {
        for n in 2..=8 {
            for p in 1..n {
                assert_eq!(ky_dim(n, p).unwrap(), ky_coefficient_count(n, p), "n={n} p={p}");
            }
        }
    }

    #[test]
    fn killing_vectors_of_the_plane() {
        // x2 dx1 − x1 dx2, dx1, dx2 span the kernel
        let sys = FlatSystem::new(FlatKind::Killing, 2, 1, 1).unwrap();
        let kernel = sys.null_space();
        assert_eq!(kernel.len(), 3);
        let fit = |target: [&str; 2]| {
            let t = TensorField::covector(target.iter().map(|s| ScalarField::parse(s, 2).unwrap()).collect());
            let basis: Vec<TensorField> = kernel
                .iter()
                .map(|v| {
                    let polys = sys.solution(v);
                    TensorField::covector(polys.iter().map(Polynomial::to_field).collect())
                })
                .collect();
            span_fit(&t, &basis, &points(2)).unwrap().residual_norm
        };
        assert!(fit(["x2", "-x1"]) < 1e-12);
        assert!(fit(["1", "0"]) < 1e-12);
        assert!(fit(["x2", "x1"]) > 0.1);
    }

    #[test]
    fn plane_ky_basis() {
        let basis = build_ky_basis(2, 1, &ScalarField::zero(2)).unwrap();
        let shown: Vec<String> = basis
            .elements
            .iter()
            .map(|e| {
                let c: Vec<String> = e.field.components().iter().map(ToString::to_string).collect();
                format!("{} ({})", e.provenance, c.join(", "))
            })
            .collect();
        assert_eq!(shown, ["A[1,2] (-x2, x1)", "B[1] (1, 0)", "B[2] (0, 1)"]);
    }

    #[test]
    fn flat_ky_elements_solve_the_flat_system_exactly() {
        let flat = AffineConnection::flat(4);
        for p in 1..4 {
            let basis = build_ky_basis(4, p, &ScalarField::zero(4)).unwrap();
            assert_eq!(basis.elements.len() as u128, ky_dim(4, p).unwrap());
            for el in &basis.elements {
                assert!(flat_defects(FlatKind::KillingYano, 4, p, &el.flat)
                    .iter()
                    .all(Polynomial::is_zero));
                assert!(ky_residual(&el.field, &flat, &points(4)).unwrap() < 1e-15);
            }
        }
    }

    #[test]
    fn flat_kt_elements_solve_the_flat_system_exactly() {
        let flat = AffineConnection::flat(3);
        let basis = build_kt_basis(3, 2, &ScalarField::zero(3)).unwrap();
        assert_eq!(basis.elements.len() as u128, kt_dim(3, 2).unwrap());
        for el in &basis.elements {
            assert!(flat_defects(FlatKind::Killing, 3, 2, &el.flat)
                .iter()
                .all(Polynomial::is_zero));
            assert!(kt_residual(&el.field, &flat, &points(3)).unwrap() < 1e-14);
        }
    }

    #[test]
    fn curved_bases_have_small_residuals() {
        let psi = ScalarField::parse("x1*x2/5 - x3^2/9 + x1/3", 3).unwrap();
        let s = projective_connection_from_psi(&psi);
        let pts = points(3);
        for el in build_ky_basis(3, 1, &psi).unwrap().elements {
            assert!(ky_residual(&el.field, &s.connection, &pts).unwrap() < 1e-10);
        }
        for el in build_kt_basis(3, 2, &psi).unwrap().elements {
            assert!(kt_residual(&el.field, &s.connection, &pts).unwrap() < 1e-10);
        }
    }

    #[test]
    fn non_killing_forms_have_residuals() {
        let n = 2;
        let flat = AffineConnection::flat(n);
        let omega = TensorField::covector(vec![ScalarField::var(n, 0), ScalarField::zero(n)]);
        let r = ky_residual(&omega, &flat, &points(n)).unwrap();
        assert!((r - 2.0).abs() < 1e-15);
        assert_eq!(ky_residual(&TensorField::zero(n, 1), &flat, &points(n)).unwrap(), 0.0);
    }

    #[test]
    fn coefficient_record_reproduces_the_field() {
        let psi = ScalarField::parse("x1/4 - x2^2/6", 2).unwrap();
        let basis = build_kt_basis(2, 2, &psi).unwrap();
        for el in &basis.elements {
            let rebuilt = kt_field(&psi, 2, &el.coefficients);
            for x in points(2) {
                let a = el.field.evaluate(&x).unwrap();
                let b = rebuilt.evaluate(&x).unwrap();
                assert!(a.sub(&b).max_abs() < 1e-13);
            }
        }
        assert!(check_coefficient_symmetries(&basis).iter().all(SymmetryReport::passed));
    }

    #[test]
    fn symmetry_check_catches_non_killing_coefficients() {
        let n = 2;
        let mut a1 = CoeffTensor::zeros(n, 2, Symmetry::Bisymmetric { first: 1 });
        a1.set(&[0, 0], BigRational::one());
        let basis = KTBasis {
            n,
            p: 1,
            psi: ScalarField::zero(n),
            elements: vec![KTElement {
                provenance: Provenance::NullSpace(0),
                coefficients: vec![CoeffTensor::zeros(n, 1, Symmetry::Bisymmetric { first: 1 }), a1],
                flat: Vec::new(),
                field: TensorField::zero(n, 1),
            }],
        };
        let report = check_coefficient_symmetries(&basis);
        assert!(!report[0].passed());
        assert_eq!(report[0].conditions[0].max_violation, 2.0);
    }

    #[test]
    fn transfer_maps_invert_each_other() {
        let psi = ScalarField::parse("x1*x2/3", 2).unwrap();
        let omega = build_ky_basis(2, 1, &ScalarField::zero(2)).unwrap().elements[0]
            .field
            .clone();
        let back = pullback_ky(&pullback_ky(&omega, &psi), &(-&psi));
        for x in points(2) {
            assert!(back.evaluate(&x).unwrap().sub(&omega.evaluate(&x).unwrap()).max_abs() < 1e-14);
        }
        let same = pullback_kt(&omega, &ScalarField::zero(2));
        assert_eq!(format!("{same:?}"), format!("{omega:?}"));
    }

    #[test]
    fn exterior_derivative_of_killing_yano_form_is_scaled_covariant_derivative() {
        // ∇ω is totally skew, so dω = (p+1)∇ω
        let psi = ScalarField::parse("x1*x3/5 - x2^2/4 + x3/3", 3).unwrap();
        let gamma = projective_connection_from_psi(&psi).connection;
        for p in 1..=2 {
            for e in build_ky_basis(3, p, &psi).unwrap().elements {
                let d = crate::geometry::exterior_derivative(&e.field);
                let nabla = crate::geometry::covariant_derivative(&e.field, &gamma);
                let scale = BigRational::from_integer(BigInt::from(p as i64 + 1));
                let diff = d.sub(&nabla.scale_rational(&scale));
                let worst = max_abs_over(diff.components(), &points(3), Strategy::Sequential).unwrap();
                assert!(worst < 1e-12, "p={p} {}: {worst:e}", e.provenance);
            }
        }
    }
}
