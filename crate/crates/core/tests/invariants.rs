use proptest::prelude::*;

use simplex_flow::mirror::{ascent_certificate, exact_prox_step, MirrorStepKind};
use simplex_flow::path_fields::{eval_path_field, generalized_free_energy, ScoreField};
use simplex_flow::replicator::eval_field;
use simplex_flow::simplex::{entropy, free_energy, kl_divergence, log_partition, softmax};
use simplex_flow::{FieldKind, ScoreVector, SimplexPoint, StepSize, Temperature};

fn scores(dim: std::ops::Range<usize>) -> impl Strategy<Value = ScoreVector> {
    prop::collection::vec(-3.0f64..3.0, dim).prop_map(|v| ScoreVector::new(v).unwrap())
}

fn point(dim: usize) -> impl Strategy<Value = SimplexPoint> {
    prop::collection::vec(0.01f64..1.0, dim).prop_map(|w| {
        let total: f64 = w.iter().sum();
        SimplexPoint::new(w.into_iter().map(|x| x / total).collect()).unwrap()
    })
}

fn temperature() -> impl Strategy<Value = Temperature> {
    (0.25f64..4.0).prop_map(|t| Temperature::new(t).unwrap())
}

fn scores_and_point() -> impl Strategy<Value = (ScoreVector, SimplexPoint)> {
    (2usize..12).prop_flat_map(|v| (scores(v..v + 1), point(v)))
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gibbs_duality(s in scores(2..40), t in temperature()) {
        let pi = softmax(&s, t);
        let f = free_energy(&pi, &s, t).unwrap().value;
        let a = log_partition(&s, t);
        prop_assert!((f - a).abs() <= 1e-10 * a.abs().max(1.0), "F = {f}, A = {a}");
    }

    #[test]
    fn softmax_maximizes_free_energy((s, p) in scores_and_point(), t in temperature()) {
        let f = free_energy(&p, &s, t).unwrap().value;
        prop_assert!(f <= log_partition(&s, t) + 1e-12);
    }

    #[test]
    fn softmax_shift_invariance(s in scores(2..40), t in temperature(), c in -50.0f64..50.0) {
        let a = softmax(&s, t);
        let b = softmax(&s.shifted(c), t);
        prop_assert!(sup(a.probs(), b.probs()) < 1e-12);
        let shift = log_partition(&s.shifted(c), t) - log_partition(&s, t);
        prop_assert!((shift - c).abs() < 1e-10);
    }

    #[test]
    fn scaling_scores_and_temperature_together(s in scores(2..40), t in temperature(), k in 0.1f64..10.0) {
        let a = softmax(&s, t);
        let b = softmax(&s.scaled(k), Temperature::new(k * t.value()).unwrap());
        prop_assert!(sup(a.probs(), b.probs()) < 1e-12);
    }

    #[test]
    fn softmax_is_normalized_and_positive(s in scores(2..200), t in temperature()) {
        let pi = softmax(&s, t);
        let total: f64 = pi.probs().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(pi.is_interior());
    }

    #[test]
    fn entropy_bounds(p in (2usize..50).prop_flat_map(point)) {
        let h = entropy(&p);
        prop_assert!(h >= 0.0 && h <= (p.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_diagonal(
        (p, q) in (2usize..20).prop_flat_map(|v| (point(v), point(v)))
    ) {
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn fields_are_tangent((s, p) in scores_and_point(), t in temperature()) {
        for kind in [FieldKind::Literal, FieldKind::Entropic] {
            let x = eval_field(kind, &p, &s, t).unwrap();
            prop_assert!(x.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn fields_ignore_score_shifts((s, p) in scores_and_point(), t in temperature(), c in -20.0f64..20.0) {
        for kind in [FieldKind::Literal, FieldKind::Entropic] {
            let a = eval_field(kind, &p, &s, t).unwrap();
            let b = eval_field(kind, &p, &s.shifted(c), t).unwrap();
            prop_assert!(sup(&a, &b) < 1e-11);
        }
    }

    #[test]
    fn exact_prox_ascent_slack((s, p) in scores_and_point(), t in temperature(), eta in 0.01f64..5.0) {
        let cert = ascent_certificate(MirrorStepKind::ExactProx, &p, &s, t, StepSize::new(eta).unwrap()).unwrap();
        prop_assert!(cert.slack >= -1e-10, "{cert:?}");
        prop_assert!(cert.f_after >= cert.f_before - 1e-12);
    }

    #[test]
    fn exact_prox_fixes_softmax(s in scores(2..30), t in temperature(), eta in 0.01f64..5.0) {
        let pi = softmax(&s, t);
        let q = exact_prox_step(&pi, &s, t, StepSize::new(eta).unwrap()).unwrap();
        prop_assert!(q.linf_distance(&pi) < 1e-12);
    }

    #[test]
    fn path_field_tangency_and_shift(
        (s0, p) in (3usize..6).prop_flat_map(|v| (scores(v..v + 1), point(v))),
        raw in prop::collection::vec(-2.0f64..2.0, 36),
        t in temperature(),
        c in -10.0f64..10.0,
    ) {
        let v = s0.len();
        let b = nalgebra::DMatrix::from_fn(v, v, |i, j| raw[i * 6 + j]);
        let field = ScoreField::linear(s0, b).unwrap();
        let shifted = field.shifted(c);
        for kind in [FieldKind::Literal, FieldKind::Entropic] {
            let a = eval_path_field(&field, kind, &p, t).unwrap();
            prop_assert!(a.iter().sum::<f64>().abs() < 1e-12);
            let b = eval_path_field(&shifted, kind, &p, t).unwrap();
            prop_assert!(sup(&a, &b) < 1e-11);
        }
    }

    #[test]
    fn antisymmetric_coupling_has_no_quadratic_term(
        (s0, p) in (3usize..6).prop_flat_map(|v| (scores(v..v + 1), point(v))),
        raw in prop::collection::vec(-2.0f64..2.0, 36),
    ) {
        let v = s0.len();
        let a = nalgebra::DMatrix::from_fn(v, v, |i, j| raw[i * 6 + j] - raw[j * 6 + i]);
        let field = ScoreField::linear(s0.clone(), a).unwrap();
        let lhs = p.dot(&field.scores(&p).unwrap());
        prop_assert!((lhs - p.dot(s0.values())).abs() < 1e-13);
        let t = Temperature::new(1.0).unwrap();
        let g = generalized_free_energy(&field, &p, t);
        prop_assert!((g - free_energy(&p, &s0, t).unwrap().value).abs() < 1e-13);
    }
}
