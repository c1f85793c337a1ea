//! Index enumeration, symmetry-aware coefficient tensors, numeric tensors and
//! covariant tensor fields.
//!
//! Canonical orders: strictly increasing tuples for antisymmetric slots,
//! non-decreasing tuples for symmetric slots, both ranked colexicographically
//! (combinatorial number system). Dense tensors use row-major offsets.
//!
//! All indices are 0-based.

use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::expr::{self, EvalError, ScalarField, Tape};
use crate::{Error, Result};

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

pub fn factorial(k: usize) -> u128 {
    (1..=k as u128).product()
}

/// All permutations of `0..r` with their signs.
pub fn permutations(r: usize) -> Vec<(Vec<usize>, i64)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<(Vec<usize>, i64)>) {
        let r = used.len();
        if prefix.len() == r {
            out.push((prefix.clone(), permutation_sign(prefix)));
            return;
        }
        for i in 0..r {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(r), &mut vec![false; r], &mut out);
    out
}

/// Sign of the permutation sorting `entries`, or 0 if an entry repeats.
pub fn permutation_sign(entries: &[usize]) -> i64 {
    let mut sign = 1;
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            if entries[i] == entries[j] {
                return 0;
            }
            if entries[i] > entries[j] {
                sign = -sign;
            }
        }
    }
    sign
}

/// Sorted copy of `entries` and the sign of the sorting permutation (0 when
/// an index repeats).
pub fn sort_with_sign(entries: &[usize]) -> (Vec<usize>, i64) {
    let sign = permutation_sign(entries);
    let mut sorted = entries.to_vec();
    sorted.sort_unstable();
    (sorted, sign)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexMode {
    General,
    StrictlyIncreasing,
    NonDecreasing,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    entries: Vec<usize>,
    mode: IndexMode,
}

impl MultiIndex {
    pub fn new(entries: Vec<usize>, mode: IndexMode) -> Result<Self> {
        let ok = match mode {
            IndexMode::General => true,
            IndexMode::StrictlyIncreasing => entries.windows(2).all(|w| w[0] < w[1]),
            IndexMode::NonDecreasing => entries.windows(2).all(|w| w[0] <= w[1]),
        };
        if !ok {
            return Err(Error::Invalid(format!("{entries:?} violates {mode:?} ordering")));
        }
        Ok(MultiIndex { entries, mode })
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn mode(&self) -> IndexMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(n: usize, r: usize, mode: IndexMode) -> usize {
        match mode {
            IndexMode::General => n.pow(r as u32),
            IndexMode::StrictlyIncreasing => binomial(n, r),
            IndexMode::NonDecreasing => {
                if r == 0 {
                    1
                } else {
                    binomial(n + r - 1, r)
                }
            }
        }
    }

    /// Position in the canonical colexicographic enumeration.
    pub fn rank(&self, n: usize) -> usize {
        debug_assert!(self.entries.iter().all(|&e| e < n));
        match self.mode {
            IndexMode::General => self.entries.iter().rev().fold(0, |acc, &e| acc * n + e),
            IndexMode::StrictlyIncreasing => combination_rank(&self.entries),
            IndexMode::NonDecreasing => {
                let shifted: Vec<usize> = self.entries.iter().enumerate().map(|(k, &e)| e + k).collect();
                combination_rank(&shifted)
            }
        }
    }

    pub fn unrank(n: usize, r: usize, mode: IndexMode, rank: usize) -> MultiIndex {
        let entries = match mode {
            IndexMode::General => {
                let mut rest = rank;
                (0..r)
                    .map(|_| {
                        let e = rest % n;
                        rest /= n;
                        e
                    })
                    .collect()
            }
            IndexMode::StrictlyIncreasing => combination_unrank(r, rank),
            IndexMode::NonDecreasing => combination_unrank(r, rank)
                .into_iter()
                .enumerate()
                .map(|(k, c)| c - k)
                .collect(),
        };
        MultiIndex { entries, mode }
    }

    pub fn enumerate(n: usize, r: usize, mode: IndexMode) -> Vec<MultiIndex> {
        (0..Self::count(n, r, mode))
            .map(|k| Self::unrank(n, r, mode, k))
            .collect()
    }
}

fn combination_rank(c: &[usize]) -> usize {
    c.iter().enumerate().map(|(k, &ck)| binomial(ck, k + 1)).sum()
}

fn combination_unrank(r: usize, mut rank: usize) -> Vec<usize> {
    let mut out = vec![0; r];
    for k in (0..r).rev() {
        let mut c = k;
        while binomial(c + 1, k + 1) <= rank {
            c += 1;
        }
        out[k] = c;
        rank -= binomial(c, k + 1);
    }
    out
}

/// Canonical tuples of the given mode as plain vectors.
pub fn canonical_tuples(n: usize, r: usize, mode: IndexMode) -> Vec<Vec<usize>> {
    MultiIndex::enumerate(n, r, mode)
        .into_iter()
        .map(|m| m.entries)
        .collect()
}

/// All index tuples of length `r` in row-major order.
pub fn dense_tuples(n: usize, r: usize) -> Vec<Vec<usize>> {
    (0..n.pow(r as u32)).map(|off| dense_unflatten(n, r, off)).collect()
}

pub fn dense_offset(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

pub fn dense_unflatten(n: usize, r: usize, mut offset: usize) -> Vec<usize> {
    let mut idx = vec![0; r];
    for slot in idx.iter_mut().rev() {
        *slot = offset % n;
        offset /= n;
    }
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
    Antisymmetric,
    /// Symmetric in the first `first` slots and, separately, in the rest.
    Bisymmetric {
        first: usize,
    },
}

/// Constant tensor with exact components stored on canonical indices only.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTensor {
    n: usize,
    rank: usize,
    symmetry: Symmetry,
    values: Vec<BigRational>,
}

impl CoeffTensor {
    pub fn zeros(n: usize, rank: usize, symmetry: Symmetry) -> Self {
        if let Symmetry::Bisymmetric { first } = symmetry {
            assert!(first <= rank, "bisymmetric split beyond rank");
        }
        let len = Self::storage_len(n, rank, symmetry);
        CoeffTensor {
            n,
            rank,
            symmetry,
            values: vec![BigRational::zero(); len],
        }
    }

    pub fn storage_len(n: usize, rank: usize, symmetry: Symmetry) -> usize {
        match symmetry {
            Symmetry::General => MultiIndex::count(n, rank, IndexMode::General),
            Symmetry::Symmetric => MultiIndex::count(n, rank, IndexMode::NonDecreasing),
            Symmetry::Antisymmetric => MultiIndex::count(n, rank, IndexMode::StrictlyIncreasing),
            Symmetry::Bisymmetric { first } => {
                MultiIndex::count(n, first, IndexMode::NonDecreasing)
                    * MultiIndex::count(n, rank - first, IndexMode::NonDecreasing)
            }
        }
    }

    /// Tensor with a single canonical component equal to one.
    pub fn unit(n: usize, rank: usize, symmetry: Symmetry, index: &[usize]) -> Self {
        let mut t = Self::zeros(n, rank, symmetry);
        t.set(index, BigRational::one());
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn stored_len(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[BigRational] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(Zero::is_zero)
    }

    /// Storage slot and sign for an arbitrary index tuple; `None` when the
    /// component vanishes by antisymmetry.
    fn locate(&self, index: &[usize]) -> Option<(usize, i64)> {
        assert_eq!(index.len(), self.rank, "index length must equal rank");
        assert!(index.iter().all(|&i| i < self.n), "index entry out of range");
        match self.symmetry {
            Symmetry::General => Some((dense_offset(self.n, index), 1)),
            Symmetry::Symmetric => {
                let mut sorted = index.to_vec();
                sorted.sort_unstable();
                let m = MultiIndex {
                    entries: sorted,
                    mode: IndexMode::NonDecreasing,
                };
                Some((m.rank(self.n), 1))
            }
            Symmetry::Antisymmetric => {
                let (sorted, sign) = sort_with_sign(index);
                if sign == 0 {
                    return None;
                }
                let m = MultiIndex {
                    entries: sorted,
                    mode: IndexMode::StrictlyIncreasing,
                };
                Some((m.rank(self.n), sign))
            }
            Symmetry::Bisymmetric { first } => {
                let mut a = index[..first].to_vec();
                let mut b = index[first..].to_vec();
                a.sort_unstable();
                b.sort_unstable();
                let second_count = MultiIndex::count(self.n, self.rank - first, IndexMode::NonDecreasing);
                let ra = MultiIndex {
                    entries: a,
                    mode: IndexMode::NonDecreasing,
                }
                .rank(self.n);
                let rb = MultiIndex {
                    entries: b,
                    mode: IndexMode::NonDecreasing,
                }
                .rank(self.n);
                Some((ra * second_count + rb, 1))
            }
        }
    }

    pub fn get(&self, index: &[usize]) -> BigRational {
        match self.locate(index) {
            None => BigRational::zero(),
            Some((slot, 1)) => self.values[slot].clone(),
            Some((slot, _)) => -self.values[slot].clone(),
        }
    }

    /// Sets the component at `index` (and, through the symmetry, all its
    /// permuted copies).
    pub fn set(&mut self, index: &[usize], value: BigRational) {
        match self.locate(index) {
            None => assert!(
                value.is_zero(),
                "antisymmetric component with repeated index must be zero"
            ),
            Some((slot, sign)) => self.values[slot] = if sign == 1 { value } else { -value },
        }
    }

    /// Canonical index tuples in storage order.
    pub fn canonical_indices(&self) -> Vec<Vec<usize>> {
        match self.symmetry {
            Symmetry::General => (0..self.values.len())
                .map(|k| dense_unflatten(self.n, self.rank, k))
                .collect(),
            Symmetry::Symmetric => canonical_tuples(self.n, self.rank, IndexMode::NonDecreasing),
            Symmetry::Antisymmetric => canonical_tuples(self.n, self.rank, IndexMode::StrictlyIncreasing),
            Symmetry::Bisymmetric { first } => {
                let a = canonical_tuples(self.n, first, IndexMode::NonDecreasing);
                let b = canonical_tuples(self.n, self.rank - first, IndexMode::NonDecreasing);
                a.iter()
                    .flat_map(|ia| b.iter().map(move |ib| [ia.as_slice(), ib.as_slice()].concat()))
                    .collect()
            }
        }
    }

    pub fn to_f64(&self, index: &[usize]) -> f64 {
        expr::rational_to_f64(&self.get(index))
    }
}

/// Dense numeric tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NumTensor {
    n: usize,
    rank: usize,
    data: Vec<f64>,
}

impl NumTensor {
    pub fn zeros(n: usize, rank: usize) -> Self {
        NumTensor {
            n,
            rank,
            data: vec![0.0; n.pow(rank as u32)],
        }
    }

    pub fn from_data(n: usize, rank: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n.pow(rank as u32));
        NumTensor { n, rank, data }
    }

    pub fn from_fn(n: usize, rank: usize, f: impl Fn(&[usize]) -> f64) -> Self {
        let data = (0..n.pow(rank as u32))
            .map(|k| f(&dense_unflatten(n, rank, k)))
            .collect();
        NumTensor { n, rank, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[dense_offset(self.n, index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = dense_offset(self.n, index);
        self.data[off] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &NumTensor) -> NumTensor {
        assert_eq!((self.n, self.rank), (other.n, other.rank));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        NumTensor {
            n: self.n,
            rank: self.rank,
            data,
        }
    }

    pub fn add(&self, other: &NumTensor) -> NumTensor {
        assert_eq!((self.n, self.rank), (other.n, other.rank));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        NumTensor {
            n: self.n,
            rank: self.rank,
            data,
        }
    }

    fn permutation_average(&self, signed: bool) -> NumTensor {
        let perms = permutations(self.rank);
        let norm = perms.len() as f64;
        NumTensor::from_fn(self.n, self.rank, |idx| {
            let mut acc = 0.0;
            let mut permuted = vec![0; idx.len()];
            for (perm, sign) in &perms {
                for (slot, &p) in permuted.iter_mut().zip(perm) {
                    *slot = idx[p];
                }
                let w = if signed { *sign as f64 } else { 1.0 };
                acc += w * self.get(&permuted);
            }
            acc / norm
        })
    }

    /// Average over all index permutations.
    pub fn sym(&self) -> NumTensor {
        self.permutation_average(false)
    }

    /// Signed average over all index permutations.
    pub fn alt(&self) -> NumTensor {
        self.permutation_average(true)
    }

    pub fn tensor_product(&self, other: &NumTensor) -> NumTensor {
        assert_eq!(self.n, other.n);
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for a in &self.data {
            data.extend(other.data.iter().map(|b| a * b));
        }
        NumTensor {
            n: self.n,
            rank: self.rank + other.rank,
            data,
        }
    }

    /// Contraction of `v` into the first slot: `(i_v T)_{j..} = v^k T_{k j..}`.
    pub fn interior_product(&self, v: &[f64]) -> NumTensor {
        assert!(self.rank >= 1, "interior product needs rank >= 1");
        assert_eq!(v.len(), self.n);
        let stride = self.n.pow(self.rank as u32 - 1);
        let mut data = vec![0.0; stride];
        for (k, vk) in v.iter().enumerate() {
            for (d, t) in data.iter_mut().zip(&self.data[k * stride..(k + 1) * stride]) {
                *d += vk * t;
            }
        }
        NumTensor {
            n: self.n,
            rank: self.rank - 1,
            data,
        }
    }

    /// Full contraction with one vector per slot.
    pub fn contract_all(&self, vectors: &[&[f64]]) -> f64 {
        assert_eq!(vectors.len(), self.rank);
        let mut t = self.clone();
        for v in vectors {
            t = t.interior_product(v);
        }
        t.data[0]
    }
}

/// Contravariant vector field.
#[derive(Clone, Debug)]
pub struct VectorField {
    n: usize,
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Self {
        let n = components.len();
        assert!(components.iter().all(|c| c.dim() == n), "component dimension mismatch");
        VectorField { n, components }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> ScalarField) -> Self {
        Self::new((0..n).map(f).collect())
    }

    pub fn parse(texts: &[&str]) -> Result<Self> {
        let n = texts.len();
        let components = texts
            .iter()
            .map(|t| ScalarField::parse(t, n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(components))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn component(&self, k: usize) -> &ScalarField {
        &self.components[k]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn scale(&self, f: &ScalarField) -> VectorField {
        VectorField::new(self.components.iter().map(|c| f * c).collect())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }
}

/// Covariant tensor field of rank `p` with dense component storage.
#[derive(Clone)]
pub struct TensorField {
    n: usize,
    rank: usize,
    components: Vec<ScalarField>,
    tape: OnceLock<Arc<Tape>>,
}

impl std::fmt::Debug for TensorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TensorField")
            .field("n", &self.n)
            .field("rank", &self.rank)
            .field("components", &self.components)
            .finish()
    }
}

impl TensorField {
    pub fn new(n: usize, rank: usize, components: Vec<ScalarField>) -> Self {
        assert_eq!(components.len(), n.pow(rank as u32), "need n^rank components");
        assert!(components.iter().all(|c| c.dim() == n), "component dimension mismatch");
        TensorField {
            n,
            rank,
            components,
            tape: OnceLock::new(),
        }
    }

    pub fn from_fn(n: usize, rank: usize, f: impl Fn(&[usize]) -> ScalarField) -> Self {
        let components = (0..n.pow(rank as u32))
            .map(|k| f(&dense_unflatten(n, rank, k)))
            .collect();
        Self::new(n, rank, components)
    }

    pub fn zero(n: usize, rank: usize) -> Self {
        Self::from_fn(n, rank, |_| ScalarField::zero(n))
    }

    /// Covector field from its components.
    pub fn covector(components: Vec<ScalarField>) -> Self {
        let n = components.len();
        Self::new(n, 1, components)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn component(&self, index: &[usize]) -> &ScalarField {
        &self.components[dense_offset(self.n, index)]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn tape(&self) -> &Tape {
        self.tape
            .get_or_init(|| Arc::new(Tape::compile(self.n, &self.components)))
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<NumTensor, EvalError> {
        Ok(NumTensor::from_data(self.n, self.rank, self.tape().eval(x)?))
    }

    pub fn map(&self, f: impl Fn(&ScalarField) -> ScalarField) -> TensorField {
        TensorField::new(self.n, self.rank, self.components.iter().map(f).collect())
    }

    /// Pointwise product with a scalar field.
    pub fn scale(&self, factor: &ScalarField) -> TensorField {
        self.map(|c| factor * c)
    }

    pub fn scale_rational(&self, factor: &BigRational) -> TensorField {
        self.map(|c| c.scale(factor))
    }

    pub fn add(&self, other: &TensorField) -> TensorField {
        assert_eq!((self.n, self.rank), (other.n, other.rank));
        let comps = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a + b)
            .collect();
        TensorField::new(self.n, self.rank, comps)
    }

    pub fn sub(&self, other: &TensorField) -> TensorField {
        assert_eq!((self.n, self.rank), (other.n, other.rank));
        let comps = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a - b)
            .collect();
        TensorField::new(self.n, self.rank, comps)
    }

    pub fn tensor_product(&self, other: &TensorField) -> TensorField {
        assert_eq!(self.n, other.n);
        let mut comps = Vec::with_capacity(self.components.len() * other.components.len());
        for a in &self.components {
            comps.extend(other.components.iter().map(|b| a * b));
        }
        TensorField::new(self.n, self.rank + other.rank, comps)
    }

    fn permutation_average(&self, signed: bool) -> TensorField {
        let perms = permutations(self.rank);
        let inv = BigRational::new(BigInt::one(), BigInt::from(perms.len()));
        TensorField::from_fn(self.n, self.rank, |idx| {
            let mut permuted = vec![0; idx.len()];
            let mut acc = ScalarField::zero(self.n);
            for (perm, sign) in &perms {
                for (slot, &p) in permuted.iter_mut().zip(perm) {
                    *slot = idx[p];
                }
                let c = self.component(&permuted);
                acc = if signed && *sign < 0 { acc - c } else { acc + c };
            }
            acc.scale(&inv)
        })
    }

    pub fn sym(&self) -> TensorField {
        self.permutation_average(false)
    }

    pub fn alt(&self) -> TensorField {
        self.permutation_average(true)
    }
}

/// `sym(ω_1 ⊗ … ⊗ ω_p)` for covector fields.
pub fn sym_product(factors: &[TensorField]) -> TensorField {
    assert!(!factors.is_empty(), "sym_product needs at least one factor");
    assert!(
        factors.iter().all(|f| f.rank() == 1),
        "sym_product takes covector fields"
    );
    let mut product = factors[0].clone();
    for f in &factors[1..] {
        product = product.tensor_product(f);
    }
    product.sym()
}

/// Determinant of a small square matrix of fields by permutation expansion.
pub(crate) fn field_determinant(n: usize, size: usize, entry: impl Fn(usize, usize) -> ScalarField) -> ScalarField {
    let mut acc = ScalarField::zero(n);
    for (perm, sign) in permutations(size) {
        let mut term = ScalarField::one(n);
        for (row, &col) in perm.iter().enumerate() {
            term = term * entry(row, col);
        }
        acc = if sign < 0 { acc - term } else { acc + term };
    }
    acc
}

/// The `(n − p)`-form dual to `X_1 ∧ … ∧ X_p` with respect to the volume
/// density `eta`:
///
/// `ω_{j_1…j_{n−p}} = η Σ_{i_1<…<i_p} ε_{i_1…i_p j_1…j_{n−p}} det[X_a^{i_b}]`.
///
/// With this sign convention the dual of `∂/∂x1` in the plane is `dx2`.
pub fn volume_dual(vectors: &[VectorField], eta: &ScalarField) -> Result<TensorField> {
    let n = eta.dim();
    let p = vectors.len();
    if p == 0 || p >= n {
        return Err(Error::DegreeOutOfRange {
            n,
            p,
            allowed: "1 <= p <= n-1",
        });
    }
    if vectors.iter().any(|v| v.dim() != n) {
        return Err(Error::Invalid("vector field dimension differs from eta".into()));
    }
    let minors: Vec<(Vec<usize>, ScalarField)> = canonical_tuples(n, p, IndexMode::StrictlyIncreasing)
        .into_iter()
        .map(|rows| {
            let det = field_determinant(n, p, |a, b| vectors[a].component(rows[b]).clone());
            (rows, det)
        })
        .collect();
    let q = n - p;
    Ok(TensorField::from_fn(n, q, |j| {
        let mut acc = ScalarField::zero(n);
        for (rows, det) in &minors {
            let full: Vec<usize> = rows.iter().chain(j).copied().collect();
            match permutation_sign(&full) {
                0 => {}
                1 => acc = acc + det,
                _ => acc = acc - det,
            }
        }
        eta * &acc
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half() -> f64 {
        0.5
    }

    #[test]
    fn storage_sizes_match_binomials() {
        for n in 1..=6 {
            for r in 0..=n {
                assert_eq!(CoeffTensor::storage_len(n, r, Symmetry::Antisymmetric), binomial(n, r));
                assert_eq!(
                    CoeffTensor::storage_len(n, r, Symmetry::Symmetric),
                    if r == 0 { 1 } else { binomial(n + r - 1, r) }
                );
            }
        }
    }

    #[test]
    fn rank_unrank_round_trip() {
        for mode in [
            IndexMode::General,
            IndexMode::StrictlyIncreasing,
            IndexMode::NonDecreasing,
        ] {
            for n in 1..=5 {
                for r in 0..=4 {
                    let all = MultiIndex::enumerate(n, r, mode);
                    assert_eq!(all.len(), MultiIndex::count(n, r, mode));
                    for (k, m) in all.iter().enumerate() {
                        assert_eq!(m.rank(n), k);
                        assert!(MultiIndex::new(m.entries().to_vec(), mode).is_ok());
                    }
                }
            }
        }
    }

    #[test]
    fn colex_order_of_pairs() {
        let pairs = canonical_tuples(3, 2, IndexMode::StrictlyIncreasing);
        assert_eq!(pairs, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        let multisets = canonical_tuples(2, 2, IndexMode::NonDecreasing);
        assert_eq!(multisets, vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
    }

    #[test]
    fn antisymmetric_access_is_sign_adjusted() {
        let mut t = CoeffTensor::zeros(4, 3, Symmetry::Antisymmetric);
        t.set(&[2, 0, 3], BigRational::from_integer(5.into()));
        assert_eq!(t.get(&[0, 2, 3]), BigRational::from_integer((-5).into()));
        assert_eq!(t.get(&[3, 2, 0]), BigRational::from_integer(5.into()));
        assert!(t.get(&[0, 0, 3]).is_zero());
        let mut s = CoeffTensor::zeros(3, 3, Symmetry::Bisymmetric { first: 2 });
        s.set(&[1, 0, 2], BigRational::one());
        assert_eq!(s.get(&[0, 1, 2]), BigRational::one());
        assert!(s.get(&[0, 2, 1]).is_zero());
        assert_eq!(s.stored_len(), 6 * 3);
    }

    #[test]
    fn sym_and_alt_examples() {
        let dx1 = NumTensor::from_data(2, 1, vec![1.0, 0.0]);
        let dx2 = NumTensor::from_data(2, 1, vec![0.0, 1.0]);
        let t = dx1.tensor_product(&dx2);
        assert_eq!(t.sym().data(), &[0.0, half(), half(), 0.0]);
        assert_eq!(t.alt().data(), &[0.0, half(), -half(), 0.0]);
        let anti = t.alt();
        assert_eq!(anti.sym().max_abs(), 0.0);
        let symm = t.sym();
        assert_eq!(symm.alt().max_abs(), 0.0);
    }

    #[test]
    fn interior_product_examples() {
        let omega = NumTensor::from_data(3, 2, vec![0.0, 2.0, -1.0, -2.0, 0.0, 4.0, 1.0, -4.0, 0.0]);
        let row = omega.interior_product(&[1.0, 0.0, 0.0]);
        assert_eq!(row.data(), &[0.0, 2.0, -1.0]);
        let v = [0.3, -1.2, 2.5];
        let twice = omega.interior_product(&v).interior_product(&v);
        assert!(twice.data()[0].abs() < 1e-15);
    }

    #[test]
    fn volume_dual_sign_convention() {
        let n = 2;
        let x = VectorField::new(vec![ScalarField::one(n), ScalarField::zero(n)]);
        let omega = volume_dual(&[x], &ScalarField::one(n)).unwrap();
        let v = omega.evaluate(&[0.3, 0.4]).unwrap();
        assert_eq!(v.data(), &[0.0, 1.0]);
    }

    #[test]
    fn volume_dual_of_dependent_fields_vanishes() {
        let n = 3;
        let x = VectorField::parse(&["x2", "1 + x1", "x3^2"]).unwrap();
        let eta = ScalarField::parse("exp(x1)", n).unwrap();
        let omega = volume_dual(&[x.clone(), x], &eta).unwrap();
        assert_eq!(omega.evaluate(&[0.2, 0.5, -0.7]).unwrap().max_abs(), 0.0);
        assert!(volume_dual(&[], &eta).is_err());
    }

    #[test]
    fn sym_product_is_symmetric() {
        let n = 3;
        let a = TensorField::covector(vec![
            ScalarField::parse("x2", n).unwrap(),
            ScalarField::parse("-x1", n).unwrap(),
            ScalarField::zero(n),
        ]);
        let b = TensorField::covector(vec![
            ScalarField::one(n),
            ScalarField::zero(n),
            ScalarField::parse("x1*x3", n).unwrap(),
        ]);
        let s = sym_product(&[a.clone(), b.clone()])
            .evaluate(&[0.4, -0.3, 1.1])
            .unwrap();
        let direct = a
            .evaluate(&[0.4, -0.3, 1.1])
            .unwrap()
            .tensor_product(&b.evaluate(&[0.4, -0.3, 1.1]).unwrap())
            .sym();
        assert!(s.sub(&direct).max_abs() < 1e-15);
        assert!(s.sub(&s.sym()).max_abs() < 1e-15);
    }

    fn tensor_strategy(n: usize, rank: usize) -> impl Strategy<Value = NumTensor> {
        proptest::collection::vec(-10.0f64..10.0, n.pow(rank as u32))
            .prop_map(move |d| NumTensor::from_data(n, rank, d))
    }

    proptest! {
        #[test]
        fn projectors_are_idempotent(t in tensor_strategy(3, 3)) {
            let s = t.sym();
            prop_assert!(s.sym().sub(&s).max_abs() < 1e-12);
            let a = t.alt();
            prop_assert!(a.alt().sub(&a).max_abs() < 1e-12);
        }

        #[test]
        fn rank_two_splits_into_sym_plus_alt(t in tensor_strategy(4, 2)) {
            prop_assert!(t.sym().add(&t.alt()).sub(&t).max_abs() < 1e-12);
        }

        #[test]
        fn interior_product_matches_explicit_sum(
            t in tensor_strategy(3, 3),
            v in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let got = t.interior_product(&v);
            for i in 0..3 {
                for j in 0..3 {
                    let mut expected = 0.0;
                    for (k, vk) in v.iter().enumerate() {
                        expected += vk * t.get(&[k, i, j]);
                    }
                    prop_assert!((got.get(&[i, j]) - expected).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn volume_dual_is_alternating_and_multilinear(
            a in proptest::collection::vec(-3i64..3, 4),
            b in proptest::collection::vec(-3i64..3, 4),
            c in proptest::collection::vec(-3i64..3, 4),
            s in -3i64..3,
        ) {
            let n = 4;
            let field = |v: &[i64]| VectorField::new(v.iter().map(|&k| ScalarField::integer(n, k)).collect());
            let eta = ScalarField::one(n);
            let x = [0.1, 0.2, 0.3, 0.4];
            let ab = volume_dual(&[field(&a), field(&b)], &eta).unwrap().evaluate(&x).unwrap();
            let ba = volume_dual(&[field(&b), field(&a)], &eta).unwrap().evaluate(&x).unwrap();
            prop_assert!(ab.add(&ba).max_abs() == 0.0);
            let combo: Vec<i64> = a.iter().zip(&c).map(|(ai, ci)| ai + s * ci).collect();
            let lhs = volume_dual(&[field(&combo), field(&b)], &eta).unwrap().evaluate(&x).unwrap();
            let cb = volume_dual(&[field(&c), field(&b)], &eta).unwrap().evaluate(&x).unwrap();
            let rhs = NumTensor::from_fn(4, 2, |i| ab.get(i) + s as f64 * cb.get(i));
            prop_assert!(lhs.sub(&rhs).max_abs() < 1e-12);
            // output is a 2-form
            prop_assert!(ab.sub(&ab.alt()).max_abs() < 1e-12);
        }
    }
}
