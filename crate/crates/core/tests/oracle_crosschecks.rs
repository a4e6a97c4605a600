use simplex_flow::mirror::{exact_prox_step, iterate, StopRule};
use simplex_flow::oracles::{
    closed_form_entropic, closed_form_literal, fd_gradient_checked, fd_jacobian,
    prox_objective_maximizer, reference_softmax, InstanceGenerator, FD_STEP,
};
use simplex_flow::replicator::{integrate, Controls, Sampling};
use simplex_flow::simplex::{log_partition, log_softmax, softmax, softmax_jacobian};
use simplex_flow::{FieldKind, MirrorStepKind, ScoreVector, StepSize, TemperatureSchedule};

#[test]
fn prox_maximizer_agrees_with_closed_form() {
    let mut rng = InstanceGenerator::new(11);
    for _ in 0..500 {
        let v = rng.dimension_from(&[2, 3, 5, 8, 16]);
        let s = rng.scores(v);
        let t = rng.temperature();
        let p = rng.interior_point(v);
        let eta = rng.uniform(0.01, 5.0);
        let closed = exact_prox_step(&p, &s, t, StepSize::new(eta).unwrap()).unwrap();
        let numeric = prox_objective_maximizer(&p, &s, t, eta).unwrap();
        assert!(closed.linf_distance(&numeric) < 1e-8, "V={v} eta={eta}");
    }
}

#[test]
fn gradient_and_curvature_of_the_log_partition() {
    let mut rng = InstanceGenerator::new(12);
    for _ in 0..100 {
        let v = rng.dimension_from(&[2, 8, 64]);
        let s = rng.scores(v);
        let t = rng.temperature();
        let tv = t.value();
        let a = |x: &[f64]| log_partition(&ScoreVector::new(x.to_vec()).unwrap(), t);
        let g = fd_gradient_checked(a, s.values(), FD_STEP, 1.0 / (tv * tv)).unwrap();
        let pi = softmax(&s, t);
        for (x, y) in g.gradient.iter().zip(pi.probs()) {
            assert!((x - y).abs() < 1e-6);
        }
        // Row i of the Jacobian of log π is row i of the Hessian divided by π_i.
        let jl = fd_jacobian(|x| log_softmax(&ScoreVector::new(x.to_vec()).unwrap(), t), s.values(), FD_STEP);
        let h = softmax_jacobian(&s, t);
        let mut err = 0.0f64;
        for i in 0..v {
            for j in 0..v {
                err = err.max((jl[(i, j)] - h[(i, j)] / pi.probs()[i]).abs());
            }
        }
        assert!(err / jl.amax() < 1e-5, "relative Hessian error {err}");
    }
}

#[test]
fn library_softmax_matches_reference() {
    let mut rng = InstanceGenerator::new(13);
    for _ in 0..200 {
        let v = rng.dimension();
        let s = rng.scores(v);
        let t = rng.temperature();
        assert!(softmax(&s, t).linf_distance(&reference_softmax(&s, t)) < 1e-14);
    }
}

#[test]
fn literal_integrator_matches_closed_form() {
    let mut rng = InstanceGenerator::new(14);
    for _ in 0..20 {
        let v = rng.dimension();
        let s = rng.scores(v);
        let t = rng.temperature();
        let p0 = rng.interior_point(v);
        let controls = Controls {
            convergence_kl: 0.0,
            sampling: Sampling::Uniform { count: 41 },
            ..Controls::default()
        };
        let traj = integrate(FieldKind::Literal, &p0, &s, &TemperatureSchedule::constant(t), 20.0, &controls).unwrap();
        for sample in &traj.samples {
            let exact = closed_form_literal(&p0, &s, t, sample.t).unwrap();
            for (a, b) in sample.p.probs().iter().zip(exact.probs()) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-300), "t={} {a} {b}", sample.t);
            }
        }
    }
}

#[test]
fn entropic_integrator_matches_closed_form() {
    let mut rng = InstanceGenerator::new(15);
    for _ in 0..20 {
        let v = rng.dimension_from(&[2, 3, 8, 64]);
        let s = rng.scores(v);
        let t = rng.temperature();
        let p0 = rng.interior_point(v);
        let controls = Controls {
            convergence_kl: 0.0,
            sampling: Sampling::Uniform { count: 21 },
            ..Controls::default()
        };
        let traj = integrate(FieldKind::Entropic, &p0, &s, &TemperatureSchedule::constant(t), 10.0, &controls).unwrap();
        for sample in &traj.samples {
            let exact = closed_form_entropic(&p0, &s, t, sample.t).unwrap();
            assert!(sample.p.linf_distance(&exact) < 1e-7, "t={}", sample.t);
        }
    }
}

#[test]
fn exact_prox_contraction_rates() {
    // log q − log π = (log p − log π)/(1+ηT), so KL to softmax shrinks by (1+ηT)⁻² per
    // step and the per-step move D(p_{k+1}‖p_k) tends to (ηT)² times KL(p_{k+1}‖π).
    let s = ScoreVector::new(vec![1.0, -0.5, 0.3, 2.0]).unwrap();
    let t = simplex_flow::Temperature::new(0.5).unwrap();
    let eta = 1.0;
    let et = eta * t.value();
    let p0 = simplex_flow::SimplexPoint::uniform(4);
    let rec = iterate(
        MirrorStepKind::ExactProx,
        &p0,
        &s,
        t,
        StepSize::new(eta).unwrap(),
        StopRule { max_steps: 30, kl_tol: 0.0 },
    )
    .unwrap();
    let last = &rec.steps[29];
    let decay = last.kl_to_softmax / rec.steps[28].kl_to_softmax;
    let expected = 1.0 / ((1.0 + et) * (1.0 + et));
    assert!((decay - expected).abs() < 1e-4 * expected, "decay {decay}");
    let ratio = last.kl_step / last.kl_to_softmax;
    assert!((ratio - et * et).abs() < 1e-4 * et * et, "ratio {ratio}");
}
