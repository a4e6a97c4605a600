//! Acceptance gate: ten criteria, one PASS/FAIL line each. Exits nonzero on any failure.

use std::process::Command;
use std::time::{Duration, Instant};

use simplex_flow::mirror::{iterate, printed_mw_step, printed_mw_telescoped, StopRule};
use simplex_flow::oracles::{closed_form_literal, fd_gradient_checked, fd_jacobian, InstanceGenerator, FD_STEP};
use simplex_flow::path_fields::{
    detect_recurrence, generalized_free_energy, lockin_probe, rotation_sweep,
    search_multistable_symmetric, ScoreField, DEFAULT_DELTA_REC, DEFAULT_MIN_SEPARATION,
};
use simplex_flow::replicator::{
    check_time_reparameterization, euler_consistency, integrate, integrate_scores, lyapunov_report,
    Controls, LyapunovReport, Sampling,
};
use simplex_flow::simplex::{
    build_face_topk, free_energy, kl_divergence, log_partition, log_softmax, restrict_to_face,
    softmax, softmax_jacobian,
};
use simplex_flow::{
    FieldKind, MirrorStepKind, ScoreVector, SimplexPoint, StepSize, Temperature,
    TemperatureSchedule,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn temp(v: f64) -> Temperature {
    Temperature::new(v).unwrap()
}

/// Gibbs duality, finite-difference gradient and curvature of the log-partition.
fn duality_and_gradients() -> Outcome {
    let mut rng = InstanceGenerator::new(101);
    let (mut worst_dual, mut worst_grad, mut worst_hess) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let v = rng.dimension_from(&[2, 8, 64]);
        let s = rng.scores(v);
        let t = rng.temperature();
        let pi = softmax(&s, t);
        let a = log_partition(&s, t);
        worst_dual = worst_dual.max((free_energy(&pi, &s, t).map_err(err)?.value - a).abs());

        let tv = t.value();
        let f = |x: &[f64]| log_partition(&ScoreVector::new(x.to_vec()).unwrap(), t);
        let g = fd_gradient_checked(f, s.values(), FD_STEP, 1.0 / (tv * tv)).map_err(err)?;
        for (x, y) in g.gradient.iter().zip(pi.probs()) {
            worst_grad = worst_grad.max((x - y).abs());
        }

        // Row i of the log-softmax Jacobian is row i of the Hessian scaled by 1/π_i.
        let jl = fd_jacobian(
            |x| log_softmax(&ScoreVector::new(x.to_vec()).unwrap(), t),
            s.values(),
            FD_STEP,
        );
        let h = softmax_jacobian(&s, t);
        let mut e = 0.0f64;
        for i in 0..v {
            for j in 0..v {
                e = e.max((jl[(i, j)] - h[(i, j)] / pi.probs()[i]).abs());
            }
        }
        worst_hess = worst_hess.max(e / jl.amax());
    }
    ensure(worst_dual <= 1e-10, || format!("|F(π) − A| = {worst_dual:e}"))?;
    ensure(worst_grad <= 1e-6, || format!("gradient error {worst_grad:e}"))?;
    ensure(worst_hess <= 1e-5, || format!("relative Hessian error {worst_hess:e}"))?;
    Ok(format!(
        "duality {worst_dual:.1e}, gradient {worst_grad:.1e}, Hessian rel {worst_hess:.1e}"
    ))
}

/// Exact-prox reaches softmax with a nonnegative ascent slack at every step.
fn exact_prox_convergence() -> Outcome {
    let mut rng = InstanceGenerator::new(102);
    let (mut worst_kl, mut worst_slack, mut most_steps) = (0.0f64, f64::INFINITY, 0usize);
    for v in [2, 8, 64, 1000] {
        for t in [0.25, 1.0, 4.0] {
            for eta in [0.1, 1.0] {
                let s = rng.scores(v);
                let p0 = rng.interior_point(v);
                // The per-step move tends to (ηT)² times the remaining KL, so the stopping
                // tolerance must sit below (ηT)²·1e-10.
                let stop = StopRule {
                    max_steps: 10_000,
                    kl_tol: 1e-15,
                };
                let rec = iterate(MirrorStepKind::ExactProx, &p0, &s, temp(t), StepSize::new(eta).unwrap(), stop)
                    .map_err(err)?;
                worst_kl = worst_kl.max(rec.terminal_kl_to_softmax());
                worst_slack = worst_slack.min(rec.min_slack());
                most_steps = most_steps.max(rec.steps.len());
            }
        }
    }
    ensure(worst_kl < 1e-10, || format!("terminal KL {worst_kl:e}"))?;
    ensure(worst_slack >= -1e-10, || format!("ascent slack {worst_slack:e}"))?;
    ensure(most_steps <= 10_000, || format!("{most_steps} steps"))?;
    Ok(format!(
        "terminal KL ≤ {worst_kl:.1e}, min slack {worst_slack:.1e}, ≤ {most_steps} steps"
    ))
}

/// Printed multiplicative weights: telescoping, concentration, first-step decrease.
fn printed_mw_adjudication() -> Outcome {
    let mut rng = InstanceGenerator::new(103);
    let (mut worst_tel, mut worst_mass, mut largest_change) = (0.0f64, 1.0f64, f64::NEG_INFINITY);
    for _ in 0..50 {
        let v = rng.dimension_from(&[2, 3, 8, 64]);
        let s = rng.scores(v);
        let t = rng.temperature();
        let eta = StepSize::new(rng.uniform(0.05, 1.0)).unwrap();
        let p0 = rng.interior_point(v);

        let mut p = p0.clone();
        for _ in 0..25 {
            p = printed_mw_step(&p, &s, t, eta).map_err(err)?;
        }
        let direct = printed_mw_telescoped(&p0, &s, t, eta, 25).map_err(err)?;
        worst_tel = worst_tel.max(p.linf_distance(&direct));

        // Repeated single steps underflow the losing coordinates, so concentration is read
        // off the telescoped form, doubling the step count until the argmax set holds the mass.
        let best = s.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut mass = 0.0;
        let mut steps = 16;
        while steps <= 1 << 24 {
            let q = printed_mw_telescoped(&p0, &s, t, eta, steps).map_err(err)?;
            mass = q.probs().iter().zip(s.values()).filter(|(_, &si)| si == best).map(|(p, _)| p).sum();
            if mass > 1.0 - 1e-8 {
                break;
            }
            steps *= 2;
        }
        worst_mass = worst_mass.min(mass);

        let pi = softmax(&s, t);
        let cert = simplex_flow::mirror::ascent_certificate(MirrorStepKind::PrintedMW, &pi, &s, t, eta)
            .map_err(err)?;
        largest_change = largest_change.max(cert.f_after - cert.f_before);
    }
    ensure(worst_tel <= 1e-12, || format!("telescoping gap {worst_tel:e}"))?;
    ensure(worst_mass > 1.0 - 1e-8, || format!("argmax mass {worst_mass}"))?;
    ensure(largest_change < 0.0, || format!("first-step change {largest_change:e}"))?;
    Ok(format!(
        "telescoping {worst_tel:.1e}, argmax mass ≥ 1 − {:.1e}, first step ΔF ≤ {largest_change:.1e}",
        1.0 - worst_mass
    ))
}

/// Literal integrator against the exponential closed form.
fn literal_vs_closed_form() -> Outcome {
    let mut rng = InstanceGenerator::new(104);
    let mut worst = 0.0f64;
    for k in 0..40 {
        let v = simplex_flow::oracles::DIMENSIONS[k % 5];
        let s = rng.scores(v);
        let t = rng.temperature();
        let p0 = rng.interior_point(v);
        let controls = Controls {
            convergence_kl: 0.0,
            sampling: Sampling::Uniform { count: 81 },
            ..Controls::default()
        };
        let traj = integrate(FieldKind::Literal, &p0, &s, &TemperatureSchedule::constant(t), 20.0, &controls)
            .map_err(err)?;
        ensure(traj.samples.len() == 81, || "run ended early".into())?;
        for x in &traj.samples {
            let exact = closed_form_literal(&p0, &s, t, x.t).map_err(err)?;
            for (a, b) in x.p.probs().iter().zip(exact.probs()) {
                if *b > 0.0 {
                    worst = worst.max((a - b).abs() / b);
                } else {
                    worst = worst.max(a.abs());
                }
            }
        }
    }
    ensure(worst < 1e-6, || format!("relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.1e}"))
}

/// Entropic runs converge to softmax with monotone free energy.
fn entropic_convergence() -> Outcome {
    let mut rng = InstanceGenerator::new(105);
    let (mut worst_kl, mut worst_drop) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let v = rng.dimension();
        let s = rng.scores(v);
        let t = rng.temperature();
        let p0 = rng.interior_point(v);
        let traj = integrate(FieldKind::Entropic, &p0, &s, &TemperatureSchedule::constant(t), 1e3, &Controls::default())
            .map_err(err)?;
        let kl = kl_divergence(&traj.terminal().p, &softmax(&s, t)).map_err(err)?;
        worst_kl = worst_kl.max(kl);
        let report = lyapunov_report(&traj, &s, t);
        worst_drop = worst_drop.min(report.worst_drop);
    }
    ensure(worst_kl < 1e-8, || format!("terminal KL {worst_kl:e}"))?;
    ensure(worst_drop >= -1e-9, || format!("free-energy drop {worst_drop:e}"))?;
    Ok(format!("terminal KL ≤ {worst_kl:.1e}, worst sample-to-sample ΔF {worst_drop:.1e}"))
}

/// Temperature schedules are time reparameterizations of the literal flow.
fn temperature_as_time() -> Outcome {
    let mut rng = InstanceGenerator::new(106);
    let controls = Controls {
        rel_tol: 1e-10,
        ..Controls::default()
    };
    let mut worst = 0.0f64;
    for k in 0..30 {
        let v = rng.dimension_from(&[2, 3, 8, 64]);
        let s = rng.scores(v);
        let p0 = rng.interior_point(v);
        let schedule = match k % 3 {
            0 => TemperatureSchedule::constant(rng.temperature()),
            1 => TemperatureSchedule::piecewise(
                vec![0.7, 2.0, 3.5],
                vec![rng.uniform(0.25, 4.0), rng.uniform(0.25, 4.0), rng.uniform(0.25, 4.0), rng.uniform(0.25, 4.0)],
            )
            .map_err(err)?,
            _ => TemperatureSchedule::exponential(rng.uniform(0.25, 4.0), rng.uniform(-0.5, 0.5)).map_err(err)?,
        };
        let check = check_time_reparameterization(FieldKind::Literal, &s, &p0, &schedule, 5.0, &controls)
            .map_err(err)?;
        worst = worst.max(check.max_deviation);
    }
    ensure(worst < 1e-7, || format!("deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

/// Zero coordinates stay zero; face runs match restricted runs.
fn face_invariance() -> Outcome {
    let mut rng = InstanceGenerator::new(107);
    let mut worst = 0.0f64;
    let mut leaks = 0usize;
    for k in 0..30 {
        let kind = if k % 2 == 0 { FieldKind::Literal } else { FieldKind::Entropic };
        let v = rng.dimension_from(&[3, 8, 64]);
        let s = rng.scores(v);
        let t = rng.temperature();
        let face_size = 2 + rng.index(v - 2);
        let mask = build_face_topk(&s, face_size).map_err(err)?;
        let (s_face, p_face) = restrict_to_face(&s, &rng.interior_point(v), &mask).map_err(err)?;
        let p_full = mask.embed(&p_face).map_err(err)?;
        let controls = Controls {
            convergence_kl: 0.0,
            sampling: Sampling::Uniform { count: 101 },
            ..Controls::default()
        };
        let schedule = TemperatureSchedule::constant(t);
        let full = integrate(kind, &p_full, &s, &schedule, 50.0, &controls).map_err(err)?;
        let small = integrate(kind, &p_face, &s_face, &schedule, 50.0, &controls).map_err(err)?;
        ensure(full.samples.len() == small.samples.len(), || "sample count differs".into())?;
        for (a, b) in full.samples.iter().zip(&small.samples) {
            leaks += (0..v).filter(|&i| !mask.contains(i) && a.p.probs()[i] != 0.0).count();
            worst = worst.max(a.p.linf_distance(&mask.embed(&b.p).map_err(err)?));
        }
    }
    ensure(leaks == 0, || format!("{leaks} off-face coordinates became nonzero"))?;
    ensure(worst <= 1e-8, || format!("face vs restricted {worst:e}"))?;
    Ok(format!("no leaks, face vs restricted ≤ {worst:.1e}"))
}

/// The printed step linearizes to the literal field.
fn euler_order() -> Outcome {
    let mut rng = InstanceGenerator::new(108);
    let mut lowest = f64::INFINITY;
    for _ in 0..100 {
        let v = rng.dimension_from(&[2, 3, 8, 64]);
        let s = rng.scores(v);
        let t = rng.temperature();
        let p = rng.interior_point(v);
        let e = euler_consistency(MirrorStepKind::PrintedMW, &p, &s, t, &[1e-2, 1e-3, 1e-4]).map_err(err)?;
        lowest = lowest.min(e.order);
    }
    ensure(lowest >= 0.9, || format!("order {lowest}"))?;
    Ok(format!("lowest measured order {lowest:.3}"))
}

/// Loops, a clean negative, lock-in and the generalized Lyapunov function.
fn path_witnesses() -> Outcome {
    // (a) rotational coupling: sweep β until the detector confirms a loop.
    let p0 = SimplexPoint::new(vec![0.5, 0.3, 0.2]).unwrap();
    let betas = [0.25, 0.5, 1.0, 2.0, 4.0];
    let cells = rotation_sweep(FieldKind::Literal, &betas, temp(1.0), &p0, 40.0, 0.01).map_err(err)?;
    let hit = cells
        .iter()
        .find(|c| c.recurrence.recurrent)
        .ok_or_else(|| "no β produced a detected loop".to_string())?;

    // (b) converging constant-score run.
    let s = ScoreVector::new(vec![1.0, 0.0, -0.5]).unwrap();
    let controls = Controls {
        sampling: Sampling::Uniform { count: 2001 },
        ..Controls::default()
    };
    let traj = integrate(FieldKind::Entropic, &p0, &s, &TemperatureSchedule::constant(temp(1.0)), 40.0, &controls)
        .map_err(err)?;
    let r = detect_recurrence(&traj, DEFAULT_DELTA_REC, DEFAULT_MIN_SEPARATION).map_err(err)?;
    ensure(!r.recurrent, || "converging run flagged as recurrent".into())?;

    // (c) brute-force symmetric instance with several basins.
    let t = temp(0.25);
    let found = search_multistable_symmetric(t, 2, 60)
        .map_err(err)?
        .ok_or_else(|| "no multistable coupling found".to_string())?;
    let mut rng = InstanceGenerator::new(109);
    let starts: Vec<SimplexPoint> = (0..40).map(|_| rng.interior_point(3)).collect();
    let tight = Controls {
        convergence_kl: 1e-14,
        ..Controls::default()
    };
    let lock = lockin_probe(&found.field, FieldKind::Entropic, &starts, t, 1e3, &tight).map_err(err)?;
    ensure(lock.basins.len() >= 2, || format!("{} basins", lock.basins.len()))?;

    // (d) G is monotone for symmetric coupling under the entropic field.
    let mut worst = 0.0f64;
    for p in &starts {
        let traj = integrate_scores(FieldKind::Entropic, p, &found.field, &TemperatureSchedule::constant(t), 200.0, &tight)
            .map_err(err)?;
        let g: Vec<f64> = traj.samples.iter().map(|x| generalized_free_energy(&found.field, &x.p, t)).collect();
        worst = worst.min(LyapunovReport::from_values(&g).worst_drop);
    }
    ensure(worst >= -1e-9, || format!("G drop {worst:e}"))?;
    let b: &ScoreField = &found.field;
    Ok(format!(
        "loop at β = {} (return {:.1e}), {} basins for B = {:?}, worst ΔG {worst:.1e}",
        hit.beta,
        hit.recurrence.return_distance,
        lock.basins.len(),
        b.coupling().map(|m| m.iter().map(|x| *x as i64).collect::<Vec<_>>()).unwrap_or_default()
    ))
}

/// The shipped binary reproduces the committed claim matrix.
fn adjudication_matrix() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_simplex-flow"))
        .arg("verify")
        .output()
        .map_err(err)?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.code() == Some(0), || {
        format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })?;
    let line = |id: &str, dynamics: &str| {
        stdout
            .lines()
            .find(|l| {
                let mut w = l.split_whitespace();
                w.next() == Some(id) && w.next() == Some(dynamics)
            })
            .map(str::to_string)
            .ok_or_else(|| format!("no verdict for {id} / {dynamics}"))
    };
    let manifold = line("thm-manifold-3", "literal")?;
    ensure(manifold.contains("false") && manifold.contains("counterexample"), || manifold.clone())?;
    let ascent = line("prop-ascent", "printed-mw")?;
    ensure(ascent.contains("false") && ascent.contains("counterexample"), || ascent.clone())?;
    let holds = line("prop-ascent", "exact-prox")?;
    ensure(holds.contains("true"), || holds.clone())?;
    Ok(format!("{} verdicts reproduced", stdout.lines().filter(|l| l.contains("true") || l.contains("false")).count()))
}

fn main() {
    type Criterion = (u32, &'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (1, "duality and gradient suite", 10, duality_and_gradients),
        (2, "exact-prox convergence", 60, exact_prox_convergence),
        (3, "printed-MW adjudication", 10, printed_mw_adjudication),
        (4, "literal integrator vs closed form", 30, literal_vs_closed_form),
        (5, "entropic convergence and Lyapunov", 60, entropic_convergence),
        (6, "temperature as time", 30, temperature_as_time),
        (7, "face invariance", 10, face_invariance),
        (8, "Euler consistency", 10, euler_order),
        (9, "path-dependence witnesses", 120, path_witnesses),
        (10, "adjudication matrix", 120, adjudication_matrix),
    ];
    let mut failures = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(budget);
        let (tag, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {budget} s budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if tag == "FAIL" {
            failures += 1;
        }
        println!("[{tag}] criterion {id:>2} {name}: {detail} ({:.2} s)", elapsed.as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
