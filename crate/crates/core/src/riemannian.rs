//! Constant-curvature models in Beltrami coordinates and conformal Killing
//! forms on them.
//!
//! In the Beltrami chart the metric is
//!
//! ```text
//! g_ij = ((1 + C|x|²) δ_ij − C x_i x_j) / (1 + C|x|²)²
//! ```
//!
//! geodesics are straight lines and the Levi-Civita connection is the
//! projective change of the flat one by `ψ = −½ ln(1 + C|x|²)`, which equals
//! `ln|det g| / (2(n+1))`.
//!
//! The codifferential is the usual one, `(d*ϑ)_{i2…ip} = −g^{jk} ∇_j ϑ_{k i2…ip}`,
//! and with it the conformal Killing operator reads
//! `Dϑ = ∇ϑ − dϑ/(p+1) + g∧d*ϑ/(n−p+1)`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::exec::Strategy;
use crate::geometry::{
    covariant_derivative, curvature, exterior_derivative, levi_civita, projective_connection_from_psi,
    AffineConnection, CurvatureData, LeviCivita,
};
use crate::killing::{build_kt_basis, build_ky_basis, gauge_weight, ky_field, max_abs_over, KTBasis, Provenance};
use crate::linalg::{lstsq, min_singular_value};
use crate::sampling::DomainBox;
use crate::tensor::{CoeffTensor, Symmetry, TensorField};
use crate::{expr, Error, Result, ScalarField};

#[derive(Debug, Clone)]
pub struct ConstantCurvatureModel {
    pub n: usize,
    /// Sectional curvature, exact.
    pub curvature: BigRational,
    pub metric: TensorField,
    /// `−½ ln(1 + C|x|²)`.
    pub psi: ScalarField,
    pub domain: DomainBox,
    pub levi_civita: LeviCivita,
}

impl ConstantCurvatureModel {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn curvature_f64(&self) -> f64 {
        expr::rational_to_f64(&self.curvature)
    }

    /// The Levi-Civita connection of the metric.
    pub fn connection(&self) -> &AffineConnection {
        &self.levi_civita.connection
    }

    pub fn inverse_metric(&self) -> &TensorField {
        &self.levi_civita.inverse_metric
    }

    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        self.domain.halton_points(count, seed)
    }

    pub fn curvature_data(&self) -> CurvatureData {
        curvature(self.connection())
    }

    /// Largest `|Γ^k_ij − (ψ_i δ^k_j + ψ_j δ^k_i)|` over the points.
    pub fn pure_trace_residual(&self, points: &[Vec<f64>]) -> Result<f64> {
        let pure = projective_connection_from_psi(&self.psi).connection;
        let diffs: Vec<ScalarField> = self
            .connection()
            .symbols()
            .iter()
            .zip(pure.symbols())
            .map(|(a, b)| a - b)
            .collect();
        max_abs_over(&diffs, points, Strategy::default())
    }

    /// Largest `|ψ − ln|det g| / (2(n+1))|` over the points.
    pub fn psi_residual(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in points {
            let det = self.levi_civita.determinant.eval(x)?;
            let expected = det.abs().ln() / (2.0 * (self.n as f64 + 1.0));
            worst = worst.max((self.psi.eval(x)? - expected).abs());
        }
        Ok(worst)
    }
}

/// Beltrami model of constant sectional curvature `c` in dimension `n`.
///
/// The domain is the cube of half-width `0.6 / sqrt(n|c|)`, on which
/// `1 + c|x|² >= 0.64` for either sign of `c`.
pub fn beltrami_model(n: usize, c: f64) -> Result<ConstantCurvatureModel> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::Invalid(
            "curvature must be finite and nonzero; use the flat structure for C = 0".into(),
        ));
    }
    if n < 2 {
        return Err(Error::Invalid("a constant-curvature model needs n >= 2".into()));
    }
    let exact = BigRational::from_float(c).expect("finite");
    let radius_sq = expr::sum(n, &(0..n).map(|i| ScalarField::var(n, i).powi(2)).collect::<Vec<_>>());
    let s = ScalarField::one(n) + radius_sq.scale(&exact);
    let s2 = s.powi(2);
    let metric = TensorField::from_fn(n, 2, |idx| {
        let (i, j) = (idx[0], idx[1]);
        let mut num = (ScalarField::var(n, i) * ScalarField::var(n, j)).scale(&-exact.clone());
        if i == j {
            num = &s + &num;
        }
        num / &s2
    });
    let half = BigRational::new(BigInt::from(-1), BigInt::from(2));
    let psi = s.ln().scale(&half);
    let levi_civita = levi_civita(&metric)?;
    let half_width = 0.6 / (n as f64 * c.abs()).sqrt();
    Ok(ConstantCurvatureModel {
        n,
        curvature: exact,
        metric,
        psi,
        domain: DomainBox::cube(n, half_width),
        levi_civita,
    })
}

/// The `n(n+1)/2` Killing covectors `e^{2ψ}(A_{ik} x^k + B_i)`.
pub fn killing_vector_basis(model: &ConstantCurvatureModel) -> Result<KTBasis> {
    build_kt_basis(model.n, 1, &model.psi)
}

/// `(d*ϑ)_{i2…ip} = −g^{jk} ∇_j ϑ_{k i2…ip}`.
pub fn codifferential(theta: &TensorField, model: &ConstantCurvatureModel) -> Result<TensorField> {
    let n = model.n;
    let p = theta.rank();
    if p == 0 {
        return Err(Error::Invalid("codifferential of a function".into()));
    }
    let nabla = covariant_derivative(theta, model.connection());
    let ginv = model.inverse_metric();
    Ok(TensorField::from_fn(n, p - 1, |rest| {
        let mut acc = ScalarField::zero(n);
        let mut idx = vec![0; p + 1];
        idx[2..].copy_from_slice(rest);
        for j in 0..n {
            for k in 0..n {
                let gjk = ginv.component(&[j, k]);
                if gjk.is_zero() {
                    continue;
                }
                idx[0] = j;
                idx[1] = k;
                acc = acc - gjk * nabla.component(&idx);
            }
        }
        acc
    }))
}

/// `(g∧α)_{i0 i1…ip} = Σ_{a=1..p} (−1)^{a+1} g_{i0 ia} α_{i1…î_a…ip}` for
/// `α` of rank `p − 1`.
pub fn g_wedge(alpha: &TensorField, model: &ConstantCurvatureModel) -> TensorField {
    let n = model.n;
    let p = alpha.rank() + 1;
    TensorField::from_fn(n, p + 1, |idx| {
        let i0 = idx[0];
        let tail = &idx[1..];
        let mut acc = ScalarField::zero(n);
        for a in 0..p {
            let rest: Vec<usize> = tail
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(_, &v)| v)
                .collect();
            let term = model.metric.component(&[i0, tail[a]]) * alpha.component(&rest);
            acc = if a % 2 == 0 { acc + term } else { acc - term };
        }
        acc
    })
}

/// `Dϑ = ∇ϑ − dϑ/(p+1) + g∧d*ϑ/(n−p+1)`.
pub fn conformal_operator(theta: &TensorField, model: &ConstantCurvatureModel) -> Result<TensorField> {
    let n = model.n;
    let p = theta.rank();
    if p == 0 || p >= n {
        return Err(Error::DegreeOutOfRange {
            n,
            p,
            allowed: "1 <= p <= n-1",
        });
    }
    let nabla = covariant_derivative(theta, model.connection());
    let d = exterior_derivative(theta).scale_rational(&BigRational::new(BigInt::one(), BigInt::from(p + 1)));
    let wedge = g_wedge(&codifferential(theta, model)?, model)
        .scale_rational(&BigRational::new(BigInt::one(), BigInt::from(n - p + 1)));
    Ok(nabla.sub(&d).add(&wedge))
}

pub fn conformal_residual(theta: &TensorField, model: &ConstantCurvatureModel, points: &[Vec<f64>]) -> Result<f64> {
    let op = conformal_operator(theta, model)?;
    max_abs_over(op.components(), points, Strategy::default())
}

/// `θ_{i1…ip} = −(1/(pC)) ∇_{i1} ω_{i2…ip}` for a Killing–Yano form `ω` of
/// degree `p − 1`.
pub fn closed_ckt_from_ky(omega: &TensorField, model: &ConstantCurvatureModel) -> TensorField {
    let p = omega.rank() + 1;
    let factor = -(BigRational::one() / (BigRational::from_integer(BigInt::from(p)) * &model.curvature));
    covariant_derivative(omega, model.connection()).scale_rational(&factor)
}

#[derive(Debug, Clone)]
pub struct CktElement {
    pub provenance: Provenance,
    pub field: TensorField,
}

impl CktElement {
    pub fn is_closed(&self) -> bool {
        self.provenance.is_closed()
    }
}

/// Killing–Yano `p`-forms followed by the closed forms built from the
/// Killing–Yano `(p−1)`-forms.
pub fn build_ckt_basis(model: &ConstantCurvatureModel, p: usize) -> Result<Vec<CktElement>> {
    let n = model.n;
    if p < 2 || p >= n {
        return Err(Error::DegreeOutOfRange {
            n,
            p,
            allowed: "2 <= p <= n-1",
        });
    }
    let mut out: Vec<CktElement> = build_ky_basis(n, p, &model.psi)?
        .elements
        .into_iter()
        .map(|e| CktElement {
            provenance: e.provenance,
            field: e.field,
        })
        .collect();
    for e in build_ky_basis(n, p - 1, &model.psi)?.elements {
        out.push(CktElement {
            field: closed_ckt_from_ky(&e.field, model),
            provenance: Provenance::Closed(Box::new(e.provenance)),
        });
    }
    Ok(out)
}

fn evaluation_columns(fields: &[&TensorField], points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut columns = vec![Vec::new(); fields.len()];
    for x in points {
        for (col, f) in columns.iter_mut().zip(fields) {
            col.extend_from_slice(f.evaluate(x)?.data());
        }
    }
    Ok(columns)
}

fn transpose(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = columns.first().map_or(0, Vec::len);
    (0..rows).map(|r| columns.iter().map(|c| c[r]).collect()).collect()
}

/// Smallest singular value of the column-normalized evaluation matrix.
pub fn independence(fields: &[&TensorField], points: &[Vec<f64>]) -> Result<f64> {
    min_singular_value(&transpose(&evaluation_columns(fields, points)?))
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub coefficients: Vec<(Provenance, f64)>,
    pub killing_yano: TensorField,
    pub closed: TensorField,
    /// `‖fit − ϑ‖₂ / max(‖ϑ‖₂, 1)` over all sampled components.
    pub relative_residual: f64,
    pub is_conformal_killing: bool,
}

/// Splits `ϑ` into its Killing–Yano and closed parts by fitting it against
/// [`build_ckt_basis`] at the points.
pub fn decompose(
    theta: &TensorField,
    model: &ConstantCurvatureModel,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<Decomposition> {
    let n = model.n;
    let p = theta.rank();
    let basis = build_ckt_basis(model, p)?;
    let fields: Vec<&TensorField> = basis.iter().map(|e| &e.field).collect();
    let columns = evaluation_columns(&fields, points)?;
    let mut rhs = Vec::new();
    for x in points {
        rhs.extend_from_slice(theta.evaluate(x)?.data());
    }
    let fit = lstsq(&transpose(&columns), &rhs)?;
    let norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let relative_residual = fit.residual_norm / norm.max(1.0);
    let mut ky = TensorField::zero(n, p);
    let mut closed = TensorField::zero(n, p);
    let mut coefficients = Vec::new();
    for (el, &c) in basis.iter().zip(&fit.coefficients) {
        let exact = BigRational::from_float(c).unwrap_or_else(BigRational::zero);
        let term = el.field.scale_rational(&exact);
        if el.is_closed() {
            closed = closed.add(&term);
        } else {
            ky = ky.add(&term);
        }
        coefficients.push((el.provenance.clone(), c));
    }
    Ok(Decomposition {
        coefficients,
        killing_yano: ky,
        closed,
        relative_residual,
        is_conformal_killing: relative_residual <= tol,
    })
}

/// Skew coefficient tensors of the general conformal Killing `p`-form.
#[derive(Debug, Clone)]
pub struct CktCoefficients {
    /// rank `p + 1`
    pub a: CoeffTensor,
    /// rank `p`
    pub b: CoeffTensor,
    /// rank `p`
    pub c: CoeffTensor,
    /// rank `p − 1`
    pub d: CoeffTensor,
}

impl CktCoefficients {
    pub fn zeros(n: usize, p: usize) -> Self {
        let s = Symmetry::Antisymmetric;
        CktCoefficients {
            a: CoeffTensor::zeros(n, p + 1, s),
            b: CoeffTensor::zeros(n, p, s),
            c: CoeffTensor::zeros(n, p, s),
            d: CoeffTensor::zeros(n, p - 1, s),
        }
    }
}

/// The closed-form conformal Killing form
///
/// ```text
/// e^{(p+1)ψ}(A_{k i1…ip} x^k + B_{i1…ip})
///   − (1/C) e^{pψ}(ψ_[i1 C_|k| i2…ip] x^k + ψ_[i1 D_i2…ip] + C_{i1…ip}/p)
/// ```
///
/// where `[…]` is unit-weight antisymmetrization over `i1…ip`.
pub fn theorem3_field(model: &ConstantCurvatureModel, p: usize, k: &CktCoefficients) -> Result<TensorField> {
    let n = model.n;
    if p < 2 || p >= n {
        return Err(Error::DegreeOutOfRange {
            n,
            p,
            allowed: "2 <= p <= n-1",
        });
    }
    let killing_yano = ky_field(&model.psi, &k.a, &k.b)?;
    let flat = ky_field(&ScalarField::zero(n), &k.c, &k.d)?;
    let grad = TensorField::covector((0..n).map(|i| model.psi.diff(i)).collect());
    let inv_p = BigRational::new(BigInt::one(), BigInt::from(p));
    let constant = TensorField::from_fn(n, p, |idx| ScalarField::constant(n, k.c.get(idx) * &inv_p));
    let bracket = grad.tensor_product(&flat).alt().add(&constant);
    let weight = gauge_weight(&model.psi, p as i64).scale(&-(BigRational::one() / &model.curvature));
    Ok(killing_yano.add(&bracket.scale(&weight)))
}
