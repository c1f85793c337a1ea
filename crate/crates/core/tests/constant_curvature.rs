use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use killing_core::exec::Strategy;
use killing_core::geometry::{covariant_derivative, exterior_derivative};
use killing_core::killing::{ky_residual, max_abs_over};
use killing_core::riemannian::{
    beltrami_model, build_ckt_basis, codifferential, conformal_residual, decompose, independence, theorem3_field,
    CktCoefficients,
};
use killing_core::tensor::{binomial, CoeffTensor, TensorField};

fn fill(t: &mut CoeffTensor, rng: &mut ChaCha8Rng) {
    for idx in t.canonical_indices() {
        let v: i64 = rng.gen_range(-6..=6);
        t.set(&idx, BigRational::new(BigInt::from(v), BigInt::from(3)));
    }
}

#[test]
fn metric_is_parallel() {
    for (n, c) in [(2, 1.0), (3, -1.0), (4, 0.5)] {
        let model = beltrami_model(n, c).unwrap();
        let pts = model.sample_points(20, 1);
        let nabla_g = covariant_derivative(&model.metric, model.connection());
        assert!(max_abs_over(nabla_g.components(), &pts, Strategy::Sequential).unwrap() < 1e-12);
        assert!(model.pure_trace_residual(&pts).unwrap() < 1e-12);
        assert!(model.psi_residual(&pts).unwrap() < 1e-12);
    }
}

#[test]
fn beltrami_models_are_projectively_flat() {
    for n in 2..=4 {
        for c in [1.0, -1.0, 0.5, -0.5] {
            let model = beltrami_model(n, c).unwrap();
            let pts = model.sample_points(20, 2);
            let curv = model.curvature_data();
            assert!(max_abs_over(curv.weyl().components(), &pts, Strategy::Sequential).unwrap() < 1e-10);
        }
    }
}

#[test]
fn zero_curvature_is_rejected() {
    assert!(beltrami_model(3, 0.0).is_err());
    assert!(beltrami_model(1, 1.0).is_err());
}

#[test]
fn ckt_basis_size_and_independence() {
    for (n, p) in [(3, 2), (4, 2), (4, 3)] {
        let model = beltrami_model(n, 1.0).unwrap();
        let basis = build_ckt_basis(&model, p).unwrap();
        assert_eq!(basis.len(), binomial(n + 1, p + 1) + binomial(n + 1, p));
        let pts = model.sample_points(40, 3);
        let fields: Vec<&TensorField> = basis.iter().map(|e| &e.field).collect();
        assert!(independence(&fields, &pts).unwrap() > 1e-6, "n={n} p={p}");
    }
}

#[test]
fn closed_form_matches_basis_span() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for c in [1.0, -1.0, 0.5, -0.5] {
        for (n, p) in [(3, 2), (4, 2), (4, 3)] {
            let model = beltrami_model(n, c).unwrap();
            let pts = model.sample_points(40, 4);
            let mut k = CktCoefficients::zeros(n, p);
            fill(&mut k.a, &mut rng);
            fill(&mut k.b, &mut rng);
            fill(&mut k.c, &mut rng);
            fill(&mut k.d, &mut rng);
            let theta = theorem3_field(&model, p, &k).unwrap();
            assert!(
                conformal_residual(&theta, &model, &pts).unwrap() < 1e-8,
                "C={c} n={n} p={p}"
            );
            let d = decompose(&theta, &model, &pts, 1e-8).unwrap();
            assert!(d.is_conformal_killing, "C={c} n={n} p={p}: {:e}", d.relative_residual);
            assert!(ky_residual(&d.killing_yano, model.connection(), &pts).unwrap() < 1e-8);
            let dtheta = exterior_derivative(&d.closed);
            assert!(max_abs_over(dtheta.components(), &pts, Strategy::Sequential).unwrap() < 1e-8);
            let co = codifferential(&d.killing_yano, &model).unwrap();
            assert!(max_abs_over(co.components(), &pts, Strategy::Sequential).unwrap() < 1e-8);
        }
    }
}

#[test]
fn generic_two_form_is_not_conformal_killing() {
    let model = beltrami_model(3, 1.0).unwrap();
    let pts = model.sample_points(40, 5);
    let theta = TensorField::from_fn(3, 2, |idx| {
        let text = match (idx[0], idx[1]) {
            (0, 1) => "x1^2",
            (1, 0) => "-x1^2",
            _ => "0",
        };
        killing_core::ScalarField::parse(text, 3).unwrap()
    });
    assert!(conformal_residual(&theta, &model, &pts).unwrap() > 1e-3);
    let d = decompose(&theta, &model, &pts, 1e-8).unwrap();
    assert!(!d.is_conformal_killing);
}
